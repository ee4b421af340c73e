#include "acho/objectives.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "acho/errors.hpp"
#include "acho/rng.hpp"

namespace acho {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr std::uint64_t kSplitStream = 0xdada;
constexpr std::uint64_t kEvalStream = 0xe7a1;

/// 75/25 uniform shuffle split keyed on the dataset seed.
void assign_split(Dataset& dataset, std::uint64_t seed) {
    const std::size_t n = dataset.targets.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, kSplitStream));
    rng.shuffle(order);
    const std::size_t n_train = std::max<std::size_t>(1, (3 * n) / 4);
    dataset.train_idx.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    dataset.val_idx.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
}

std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

} // namespace

Dataset gen_friedman(int variant, std::size_t n, double noise_sd, std::uint64_t seed) {
    if (variant < 1 || variant > 3) {
        throw InvalidCountError("friedman variant must be 1, 2 or 3");
    }
    if (n < 1) {
        throw InvalidCountError("sample count must be at least 1");
    }
    if (noise_sd < 0.0) {
        throw InvalidCountError("noise standard deviation must be nonnegative");
    }

    const std::size_t d = variant == 1 ? 10 : 4;
    Dataset dataset;
    dataset.features = Matrix(n, d);
    dataset.targets.resize(n);
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(variant)));

    for (std::size_t i = 0; i < n; ++i) {
        auto row = dataset.features.row(i);
        if (variant == 1) {
            for (std::size_t c = 0; c < d; ++c) {
                row[c] = rng.uniform();
            }
            dataset.targets[i] = 10.0 * std::sin(kPi * row[0] * row[1]) +
                                 20.0 * (row[2] - 0.5) * (row[2] - 0.5) + 10.0 * row[3] +
                                 5.0 * row[4];
        } else {
            row[0] = rng.uniform(0.0, 100.0);
            row[1] = rng.uniform(40.0 * kPi, 560.0 * kPi);
            row[2] = rng.uniform();
            row[3] = rng.uniform(1.0, 11.0);
            const double core = row[1] * row[2] - 1.0 / (row[1] * row[3]);
            dataset.targets[i] = variant == 2 ? std::sqrt(row[0] * row[0] + core * core)
                                              : std::atan(core / row[0]);
        }
        if (noise_sd > 0.0) {
            dataset.targets[i] += rng.normal(0.0, noise_sd);
        }
    }

    assign_split(dataset, seed);
    return dataset;
}

Dataset gen_hypercube(std::size_t n, std::size_t d_informative, std::size_t d_redundant,
                      double class_sep, std::uint64_t seed) {
    if (d_informative < 1) {
        throw InvalidCountError("need at least one informative feature");
    }
    if (n < 2 || n % 2 != 0) {
        throw InvalidCountError("sample count must be even for balanced labels");
    }

    const std::size_t d = d_informative + d_redundant;
    Rng rng(derive_seed(seed, 0xcafe));

    // Mixing weights turning informative values into redundant columns.
    std::vector<double> mix(d_redundant * d_informative);
    for (auto& w : mix) {
        w = rng.uniform(-1.0, 1.0);
    }

    Matrix raw(n, d);
    std::vector<double> labels(n);
    std::vector<double> informative(d_informative);
    for (std::size_t i = 0; i < n; ++i) {
        const double label = i < n / 2 ? 0.0 : 1.0;
        const double center = label == 0.0 ? -class_sep : class_sep;
        labels[i] = label;
        for (std::size_t c = 0; c < d_informative; ++c) {
            informative[c] = center + rng.normal();
            raw(i, c) = informative[c];
        }
        for (std::size_t r = 0; r < d_redundant; ++r) {
            double v = 0.0;
            for (std::size_t c = 0; c < d_informative; ++c) {
                v += mix[r * d_informative + c] * informative[c];
            }
            raw(i, d_informative + r) = v;
        }
    }

    std::vector<std::size_t> col_order(d);
    std::iota(col_order.begin(), col_order.end(), 0);
    rng.shuffle(col_order);
    std::vector<std::size_t> row_order(n);
    std::iota(row_order.begin(), row_order.end(), 0);
    rng.shuffle(row_order);

    Dataset dataset;
    dataset.classification = true;
    dataset.features = Matrix(n, d);
    dataset.targets.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t src = row_order[i];
        dataset.targets[i] = labels[src];
        for (std::size_t c = 0; c < d; ++c) {
            dataset.features(i, c) = raw(src, col_order[c]);
        }
    }

    assign_split(dataset, seed);
    return dataset;
}

void write_dataset_csv(const Dataset& dataset, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open '" + path + "' for writing");
    }
    const std::size_t d = dataset.features.cols();
    for (std::size_t c = 0; c < d; ++c) {
        out << 'x' << c << ',';
    }
    out << "y\n";
    for (std::size_t i = 0; i < dataset.targets.size(); ++i) {
        for (std::size_t c = 0; c < d; ++c) {
            out << format_double(dataset.features(i, c)) << ',';
        }
        out << format_double(dataset.targets[i]) << '\n';
    }
    if (!out) {
        throw IoError("failed while writing '" + path + "'");
    }
}

CartParams forest_cart_params(const ForestParams& params, std::size_t n_train, std::size_t d) {
    CartParams cart;
    cart.max_depth = std::numeric_limits<std::size_t>::max();
    cart.min_samples_split = std::max<std::size_t>(
        2, static_cast<std::size_t>(
               std::ceil(params.min_split_fraction * static_cast<double>(n_train))));
    cart.min_samples_leaf = std::max<std::size_t>(
        1, static_cast<std::size_t>(
               std::ceil(params.min_leaf_fraction * static_cast<double>(n_train))));
    cart.max_features = std::min<std::size_t>(
        d, static_cast<std::size_t>(
               std::ceil(params.max_features_fraction * static_cast<double>(d))));
    return cart;
}

RandomForestModel train_random_forest(const Matrix& x, std::span<const double> y,
                                      bool classification, const ForestParams& params,
                                      std::uint64_t seed) {
    if (y.empty() || x.rows() == 0) {
        throw EmptyTrainingSetError("training set is empty");
    }
    if (x.rows() != y.size()) {
        throw DimensionMismatchError("feature rows and target count differ");
    }
    if (params.n_estimators < 1) {
        throw InvalidHyperparameterError("estimator count must be at least 1");
    }
    auto check_fraction = [](double f, const char* what) {
        if (!(f > 0.0) || f > 1.0 || !std::isfinite(f)) {
            throw InvalidHyperparameterError(std::string(what) + " must lie in (0, 1]");
        }
    };
    check_fraction(params.min_split_fraction, "min_split_fraction");
    check_fraction(params.min_leaf_fraction, "min_leaf_fraction");
    check_fraction(params.max_features_fraction, "max_features_fraction");

    const std::size_t n = y.size();
    const CartParams cart = forest_cart_params(params, n, x.cols());

    const FeaturePresort presort(x);
    RandomForestModel model;
    model.classification_ = classification;
    model.trees_.resize(params.n_estimators);
    for (std::size_t t = 0; t < params.n_estimators; ++t) {
        Rng rng(derive_seed(seed, t));
        std::vector<std::size_t> rows(n);
        for (auto& r : rows) {
            r = rng.index(n);
        }
        model.trees_[t].fit(x, y, std::move(rows), cart, rng, &presort);
    }
    return model;
}

double RandomForestModel::predict(std::span<const double> features) const {
    if (classification_) {
        std::size_t ones = 0;
        for (const auto& tree : trees_) {
            if (tree.predict(features) > 0.5) {
                ++ones;
            }
        }
        return ones * 2 > trees_.size() ? 1.0 : 0.0;
    }
    double sum = 0.0;
    for (const auto& tree : trees_) {
        sum += tree.predict(features);
    }
    return sum / static_cast<double>(trees_.size());
}

Objective::Objective(Dataset dataset, Metric metric, std::uint64_t eval_seed)
    : dataset_(std::move(dataset)), metric_(metric), eval_seed_(eval_seed) {}

double Objective::evaluate(const ConfigSpace& space, const Configuration& config) const {
    {
        std::lock_guard<std::mutex> lock(cache_mutex_);
        const auto hit = cache_.find(config.id);
        if (hit != cache_.end()) {
            return hit->second;
        }
    }

    ForestParams params;
    bool have_estimators = false;
    bool have_split = false;
    bool have_leaf = false;
    bool have_features = false;
    const auto& domains = space.domains();
    for (std::size_t i = 0; i < domains.size(); ++i) {
        const auto& domain = domains[i];
        if (domain.kind != ParamKind::Numeric) {
            throw IncompatibleSpaceError("domain '" + domain.name + "' is not numeric");
        }
        const double value = domain.numeric_values[config.value_indices[i]];
        if (domain.name == "n_estimators") {
            params.n_estimators = static_cast<std::size_t>(std::llround(value));
            have_estimators = true;
        } else if (domain.name == "min_samples_split") {
            params.min_split_fraction = value;
            have_split = true;
        } else if (domain.name == "min_samples_leaf") {
            params.min_leaf_fraction = value;
            have_leaf = true;
        } else if (domain.name == "max_features") {
            params.max_features_fraction = value;
            have_features = true;
        } else {
            throw IncompatibleSpaceError("unexpected domain '" + domain.name + "'");
        }
    }
    if (!have_estimators || !have_split || !have_leaf || !have_features) {
        throw IncompatibleSpaceError(
            "space must define n_estimators, min_samples_split, min_samples_leaf, max_features");
    }

    const Matrix x_train = dataset_.features.take_rows(dataset_.train_idx);
    std::vector<double> y_train(dataset_.train_idx.size());
    for (std::size_t i = 0; i < dataset_.train_idx.size(); ++i) {
        y_train[i] = dataset_.targets[dataset_.train_idx[i]];
    }

    const auto model =
        train_random_forest(x_train, y_train, dataset_.classification, params,
                            derive_seed(eval_seed_, kEvalStream, config.id));

    double score = 0.0;
    if (metric_ == Metric::Accuracy) {
        std::size_t correct = 0;
        for (const std::size_t row : dataset_.val_idx) {
            if (model.predict(dataset_.features.row(row)) == dataset_.targets[row]) {
                ++correct;
            }
        }
        score = static_cast<double>(correct) / static_cast<double>(dataset_.val_idx.size());
    } else {
        double sse = 0.0;
        for (const std::size_t row : dataset_.val_idx) {
            const double r = dataset_.targets[row] - model.predict(dataset_.features.row(row));
            sse += r * r;
        }
        score = -sse / static_cast<double>(dataset_.val_idx.size());
    }

    std::lock_guard<std::mutex> lock(cache_mutex_);
    cache_.emplace(config.id, score);
    return score;
}

std::vector<ParamDomain> rf_search_domains() {
    std::vector<double> estimators;
    for (int v = 10; v <= 100; v += 10) {
        estimators.push_back(v);
    }
    estimators.insert(estimators.end(), {150.0, 200.0, 300.0, 400.0});
    const std::vector<double> sample_fractions{0.005, 0.01, 0.05, 0.1, 0.2, 0.3};
    std::vector<double> feature_fractions;
    for (int v = 1; v <= 10; ++v) {
        feature_fractions.push_back(v / 10.0);
    }
    return {
        ParamDomain::numeric("n_estimators", estimators),
        ParamDomain::numeric("min_samples_split", sample_fractions),
        ParamDomain::numeric("min_samples_leaf", sample_fractions),
        ParamDomain::numeric("max_features", feature_fractions),
    };
}

} // namespace acho
