#include "acho/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "acho/cart.hpp"
#include "acho/errors.hpp"
#include "acho/rng.hpp"

namespace acho {

namespace {

void validate_training(const Matrix& x, std::span<const double> y) {
    if (y.empty() || x.rows() == 0) {
        throw EmptyTrainingSetError("training set is empty");
    }
    if (x.rows() != y.size()) {
        throw DimensionMismatchError("feature rows and target count differ");
    }
}

void validate_params(const TreeParams& p) {
    if (p.n_trees < 1 || p.min_samples_leaf < 1 || p.k < 1) {
        throw InvalidHyperparameterError("tree params counts must be >= 1");
    }
    if (!(p.learning_rate > 0.0) || !std::isfinite(p.learning_rate)) {
        throw InvalidHyperparameterError("learning_rate must be finite and positive");
    }
    if (!(p.subsample_fraction > 0.0) || p.subsample_fraction > 1.0) {
        throw InvalidHyperparameterError("subsample_fraction must lie in (0, 1]");
    }
}

void validate_level(double beta) {
    if (!(beta > 0.0) || !(beta < 1.0)) {
        throw InvalidQuantileError("quantile level must lie in (0, 1)");
    }
}

std::vector<std::size_t> identity_rows(std::size_t n) {
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), 0);
    return rows;
}

// ---------------------------------------------------------------------------
// Gradient-boosted trees, squared or pinball loss.
// ---------------------------------------------------------------------------

enum class GbmLoss { Squared, Pinball };

class GbmCore {
public:
    void fit(const Matrix& x, std::span<const double> y, GbmLoss loss, double beta,
             const TreeParams& params, std::uint64_t seed) {
        loss_ = loss;
        beta_ = beta;
        learning_rate_ = params.learning_rate;

        const std::size_t n = y.size();
        base_ = loss == GbmLoss::Squared
                    ? std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n)
                    : empirical_quantile(y, beta);

        std::vector<double> current(n, base_);
        std::vector<double> gradient(n);
        CartParams cart;
        cart.max_depth = params.max_depth;
        cart.min_samples_leaf = params.min_samples_leaf;
        cart.min_samples_split = 2;
        cart.max_features = 0;

        const FeaturePresort presort(x);
        trees_.reserve(params.n_trees);
        for (std::size_t round = 0; round < params.n_trees; ++round) {
            Rng rng(derive_seed(seed, round));
            std::vector<std::size_t> rows;
            if (params.subsample_fraction < 1.0) {
                const auto take = std::max<std::size_t>(
                    1, static_cast<std::size_t>(params.subsample_fraction *
                                                static_cast<double>(n)));
                rows = rng.sample_without_replacement(n, take);
            } else {
                rows = identity_rows(n);
            }

            for (std::size_t i = 0; i < n; ++i) {
                gradient[i] = loss == GbmLoss::Squared
                                  ? y[i] - current[i]
                                  : (y[i] > current[i] ? beta : beta - 1.0);
            }

            RegressionTree tree;
            tree.fit(x, gradient, std::move(rows), cart, rng, &presort);

            if (loss == GbmLoss::Pinball) {
                // The tree structure follows the loss subgradient; each leaf
                // then takes the beta quantile of its residuals.
                std::vector<double> residuals;
                for (std::size_t node = 0; node < tree.nodes().size(); ++node) {
                    if (tree.nodes()[node].feature >= 0) {
                        continue;
                    }
                    residuals.clear();
                    for (const std::size_t r : tree.node_rows(node)) {
                        residuals.push_back(y[r] - current[r]);
                    }
                    tree.set_leaf_value(node, empirical_quantile(residuals, beta));
                }
            }

            for (std::size_t i = 0; i < n; ++i) {
                current[i] += learning_rate_ * tree.predict(x.row(i));
            }
            trees_.push_back(std::move(tree));
        }
    }

    double predict(std::span<const double> features) const {
        double out = base_;
        for (const auto& tree : trees_) {
            out += learning_rate_ * tree.predict(features);
        }
        return out;
    }

    double fit_beta() const { return beta_; }

private:
    GbmLoss loss_ = GbmLoss::Squared;
    double beta_ = 0.5;
    double base_ = 0.0;
    double learning_rate_ = 0.1;
    std::vector<RegressionTree> trees_;
};

class GbmPointEstimator final : public PointEstimator {
public:
    GbmPointEstimator(const Matrix& x, std::span<const double> y, const TreeParams& params,
                      std::uint64_t seed)
        : PointEstimator(PointKind::GbmSquared, x.cols()) {
        core_.fit(x, y, GbmLoss::Squared, 0.5, params, seed);
    }

private:
    double predict_impl(std::span<const double> features) const override {
        return core_.predict(features);
    }
    GbmCore core_;
};

class GbmQuantileEstimator final : public QuantileEstimator {
public:
    GbmQuantileEstimator(const Matrix& x, std::span<const double> y, double beta,
                         const TreeParams& params, std::uint64_t seed)
        : QuantileEstimator(QuantileKind::GbmPinball, x.cols()) {
        core_.fit(x, y, GbmLoss::Pinball, beta, params, seed);
    }

private:
    double predict_impl(std::span<const double> features, double beta) const override {
        if (std::abs(beta - core_.fit_beta()) > 1e-12) {
            throw QuantileMismatchError("pinball model fitted at a different quantile level");
        }
        return core_.predict(features);
    }
    GbmCore core_;
};

// ---------------------------------------------------------------------------
// Quantile regression forest: every leaf keeps its training rows, so any
// level is answered from the weighted empirical distribution they induce.
// ---------------------------------------------------------------------------

class QrfEstimator final : public QuantileEstimator {
public:
    QrfEstimator(const Matrix& x, std::span<const double> y, const TreeParams& params,
                 std::uint64_t seed)
        : QuantileEstimator(QuantileKind::Qrf, x.cols()) {
        const std::size_t n = y.size();
        n_rows_ = n;

        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (y[a] != y[b]) {
                return y[a] < y[b];
            }
            return a < b;
        });
        sorted_targets_.resize(n);
        rank_of_row_.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            sorted_targets_[i] = y[order[i]];
            rank_of_row_[order[i]] = i;
        }

        CartParams cart;
        cart.max_depth = params.max_depth;
        cart.min_samples_leaf = params.min_samples_leaf;
        cart.min_samples_split = 2;
        cart.max_features = (x.cols() + 2) / 3;  // ceil(d/3)

        const FeaturePresort presort(x);
        trees_.reserve(params.n_trees);
        for (std::size_t t = 0; t < params.n_trees; ++t) {
            Rng rng(derive_seed(seed, t));
            std::vector<std::size_t> rows;
            if (params.bootstrap) {
                rows.resize(n);
                for (auto& r : rows) {
                    r = rng.index(n);
                }
            } else {
                rows = identity_rows(n);
            }
            RegressionTree tree;
            tree.fit(x, y, std::move(rows), cart, rng, &presort);
            trees_.push_back(std::move(tree));
        }
    }

    std::pair<double, double> predict_pair(std::span<const double> features, double beta_lo,
                                           double beta_hi) const override {
        check_query(features, beta_lo);
        check_query(features, beta_hi);
        const auto weights = leaf_weights(features);
        return {weighted_quantile(weights, beta_lo), weighted_quantile(weights, beta_hi)};
    }

private:
    double predict_impl(std::span<const double> features, double beta) const override {
        return weighted_quantile(leaf_weights(features), beta);
    }

    /// Per training row (in sorted-target order): average over trees of the
    /// in-same-leaf indicator normalized by leaf size.
    std::vector<double> leaf_weights(std::span<const double> features) const {
        std::vector<double> weights(n_rows_, 0.0);
        for (const auto& tree : trees_) {
            const std::size_t leaf = tree.leaf_of(features);
            const auto rows = tree.node_rows(leaf);
            const double contrib = 1.0 / static_cast<double>(rows.size());
            for (const std::size_t r : rows) {
                weights[rank_of_row_[r]] += contrib;
            }
        }
        return weights;
    }

    double weighted_quantile(const std::vector<double>& weights, double beta) const {
        const double target = beta * static_cast<double>(trees_.size());
        const double tol = 1e-9;
        double cumulative = 0.0;
        for (std::size_t i = 0; i < n_rows_; ++i) {
            cumulative += weights[i];
            if (cumulative >= target - tol) {
                return sorted_targets_[i];
            }
        }
        return sorted_targets_[n_rows_ - 1];
    }

    std::vector<RegressionTree> trees_;
    std::vector<double> sorted_targets_;
    std::vector<std::size_t> rank_of_row_;
    std::size_t n_rows_ = 0;
};

// ---------------------------------------------------------------------------
// K-nearest-neighbor regression on min-max-normalized features.
// ---------------------------------------------------------------------------

class KnnEstimator final : public PointEstimator {
public:
    KnnEstimator(const Matrix& x, std::span<const double> y, const TreeParams& params)
        : PointEstimator(PointKind::Knn, x.cols()),
          table_(x.rows(), x.cols()),
          targets_(y.begin(), y.end()),
          k_(params.k) {
        const std::size_t d = x.cols();
        mins_.assign(d, 0.0);
        scales_.assign(d, 1.0);
        for (std::size_t c = 0; c < d; ++c) {
            double lo = x(0, c);
            double hi = x(0, c);
            for (std::size_t r = 1; r < x.rows(); ++r) {
                lo = std::min(lo, x(r, c));
                hi = std::max(hi, x(r, c));
            }
            mins_[c] = lo;
            scales_[c] = hi > lo ? 1.0 / (hi - lo) : 1.0;
        }
        for (std::size_t r = 0; r < x.rows(); ++r) {
            for (std::size_t c = 0; c < d; ++c) {
                table_(r, c) = (x(r, c) - mins_[c]) * scales_[c];
            }
        }
    }

private:
    double predict_impl(std::span<const double> features) const override {
        const std::size_t n = table_.rows();
        std::vector<std::pair<double, std::size_t>> distances;
        distances.reserve(n);
        for (std::size_t r = 0; r < n; ++r) {
            double dist = 0.0;
            for (std::size_t c = 0; c < table_.cols(); ++c) {
                const double q = (features[c] - mins_[c]) * scales_[c];
                const double delta = q - table_(r, c);
                dist += delta * delta;
            }
            distances.emplace_back(dist, r);
        }
        const std::size_t take = std::min(k_, n);
        std::partial_sort(distances.begin(),
                          distances.begin() + static_cast<std::ptrdiff_t>(take),
                          distances.end());
        double sum = 0.0;
        for (std::size_t i = 0; i < take; ++i) {
            sum += targets_[distances[i].second];
        }
        return sum / static_cast<double>(take);
    }

    Matrix table_;
    std::vector<double> targets_;
    std::vector<double> mins_;
    std::vector<double> scales_;
    std::size_t k_;
};

} // namespace

// ---------------------------------------------------------------------------

double pinball_loss(double residual, double beta) {
    validate_level(beta);
    return residual > 0.0 ? residual * beta : residual * (beta - 1.0);
}

double empirical_quantile(std::span<const double> values, double beta) {
    if (values.empty()) {
        throw EmptyTrainingSetError("empirical quantile of an empty multiset");
    }
    if (!(beta > 0.0) || beta > 1.0) {
        throw InvalidQuantileError("quantile level must lie in (0, 1]");
    }
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const auto n = static_cast<double>(sorted.size());
    // The 1e-9 nudge keeps products that are exact integers in real
    // arithmetic from rounding up one index.
    auto index = static_cast<std::size_t>(std::ceil(beta * n - 1e-9));
    index = std::clamp<std::size_t>(index, 1, sorted.size());
    return sorted[index - 1];
}

double PointEstimator::predict(std::span<const double> features) const {
    if (features.size() != n_features_) {
        throw DimensionMismatchError("query dimension does not match training dimension");
    }
    return predict_impl(features);
}

void QuantileEstimator::check_query(std::span<const double> features, double beta) const {
    if (features.size() != n_features_) {
        throw DimensionMismatchError("query dimension does not match training dimension");
    }
    // The forest answers the closed upper endpoint too (max of pooled leaf
    // targets); the pinball model is pinned to its fit-time level in (0,1).
    if (kind_ == QuantileKind::Qrf) {
        if (!(beta > 0.0) || beta > 1.0) {
            throw InvalidQuantileError("quantile level must lie in (0, 1]");
        }
    } else {
        validate_level(beta);
    }
}

double QuantileEstimator::predict(std::span<const double> features, double beta) const {
    check_query(features, beta);
    return predict_impl(features, beta);
}

std::pair<double, double> QuantileEstimator::predict_pair(std::span<const double> features,
                                                          double beta_lo, double beta_hi) const {
    return {predict(features, beta_lo), predict(features, beta_hi)};
}

TreeParams default_params(PointKind kind) {
    TreeParams p;
    if (kind == PointKind::GbmSquared) {
        p.n_trees = 100;
        p.max_depth = 3;
        p.learning_rate = 0.1;
        p.subsample_fraction = 1.0;
    } else {
        p.k = 5;
    }
    return p;
}

TreeParams default_params(QuantileKind kind) {
    TreeParams p;
    if (kind == QuantileKind::GbmPinball) {
        p.n_trees = 100;
        p.max_depth = 3;
        p.learning_rate = 0.1;
        p.subsample_fraction = 1.0;
    } else {
        p.n_trees = 100;
        p.max_depth = 6;
        p.min_samples_leaf = 1;
        p.bootstrap = true;
    }
    return p;
}

std::unique_ptr<PointEstimator> fit_point(PointKind kind, const Matrix& x,
                                          std::span<const double> y, const TreeParams& params,
                                          std::uint64_t seed) {
    validate_training(x, y);
    validate_params(params);
    if (kind == PointKind::GbmSquared) {
        return std::make_unique<GbmPointEstimator>(x, y, params, seed);
    }
    return std::make_unique<KnnEstimator>(x, y, params);
}

std::unique_ptr<QuantileEstimator> fit_quantile(QuantileKind kind, const Matrix& x,
                                                std::span<const double> y, double beta,
                                                const TreeParams& params, std::uint64_t seed) {
    validate_training(x, y);
    validate_params(params);
    if (kind == QuantileKind::GbmPinball) {
        validate_level(beta);
        return std::make_unique<GbmQuantileEstimator>(x, y, beta, params, seed);
    }
    return std::make_unique<QrfEstimator>(x, y, params, seed);
}

} // namespace acho
