#include "acho/searcher.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

#include "acho/errors.hpp"
#include "acho/rng.hpp"

namespace acho {

namespace {

// Stream labels for per-purpose RNG derivation.
constexpr std::uint64_t kSplitStream = 0x5011;
constexpr std::uint64_t kPointStream = 0x9017;
constexpr std::uint64_t kVarianceStream = 0x9018;
constexpr std::uint64_t kQuantileLoStream = 0x9019;
constexpr std::uint64_t kQuantileHiStream = 0x901a;
constexpr std::uint64_t kFallbackStream = 0xfa11;
constexpr std::uint64_t kTuneStream = 0x701e;

class TrialTimer {
public:
    explicit TrialTimer(Timing timing)
        : timing_(timing), start_(std::chrono::steady_clock::now()) {}

    double elapsed_ms(std::size_t step) const {
        if (timing_ == Timing::Virtual) {
            return static_cast<double>(step);
        }
        const auto now = std::chrono::steady_clock::now();
        return std::chrono::duration<double, std::milli>(now - start_).count();
    }

private:
    Timing timing_;
    std::chrono::steady_clock::time_point start_;
};

struct TraceBuilder {
    SearchTrace trace;
    double best = -std::numeric_limits<double>::infinity();
    std::size_t best_id = 0;
    std::size_t conformal_trials = 0;
    std::size_t breaches = 0;

    void add(Trial trial) {
        if (trial.breach.has_value()) {
            ++conformal_trials;
            breaches += static_cast<std::size_t>(*trial.breach);
        }
        if (trial.phi > best) {
            best = trial.phi;
            best_id = trial.config_id;
        }
        trace.trials.push_back(std::move(trial));
        trace.cumulative_breach_rate.push_back(
            conformal_trials == 0
                ? 0.0
                : static_cast<double>(breaches) / static_cast<double>(conformal_trials));
        trace.best_phi = best;
        trace.best_config_id = best_id;
    }
};

struct History {
    std::vector<std::size_t> ids;
    std::vector<double> phis;

    Matrix gather_x(const Matrix& encoded, std::span<const std::size_t> subset) const {
        Matrix out(subset.size(), encoded.cols());
        for (std::size_t i = 0; i < subset.size(); ++i) {
            out.set_row(i, encoded.row(ids[subset[i]]));
        }
        return out;
    }

    std::vector<double> gather_y(std::span<const std::size_t> subset) const {
        std::vector<double> out(subset.size());
        for (std::size_t i = 0; i < subset.size(); ++i) {
            out[i] = phis[subset[i]];
        }
        return out;
    }
};

struct SurrogateParamSet {
    TreeParams point;
    TreeParams variance;
    TreeParams quantile;
};

SurrogateParamSet resolve_params(const SearchParams& params) {
    SurrogateParamSet out;
    out.point = params.point_params.value_or(default_params(params.point_kind));
    out.variance = params.variance_params.value_or(default_params(params.variance_kind));
    out.quantile = params.quantile_params.value_or(default_params(params.quantile_kind));
    return out;
}

double holdout_mse(const PointEstimator& model, const Matrix& x, std::span<const double> y) {
    double sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double r = y[i] - model.predict(x.row(i));
        sum += r * r;
    }
    return sum / static_cast<double>(y.size());
}

double holdout_pinball(const QuantileEstimator& model, const Matrix& x,
                       std::span<const double> y, double lo, double hi) {
    double sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const auto [plo, phi_hat] = model.predict_pair(x.row(i), lo, hi);
        sum += pinball_loss(y[i] - plo, lo) + pinball_loss(y[i] - phi_hat, hi);
    }
    return sum / static_cast<double>(y.size());
}

TreeParams draw_tree_params(Rng& rng, bool for_knn) {
    TreeParams p;
    const std::size_t trees[] = {25, 50, 100, 200};
    const double rates[] = {0.025, 0.05, 0.1, 0.2, 0.4};
    const double fractions[] = {0.6, 0.8, 1.0};
    p.n_trees = trees[rng.index(4)];
    p.max_depth = 1 + rng.index(8);
    p.min_samples_leaf = 1 + rng.index(4);
    p.learning_rate = rates[rng.index(5)];
    p.subsample_fraction = fractions[rng.index(3)];
    if (for_knn) {
        p.k = 1 + rng.index(10);
    }
    return p;
}

/// One-off 16-draw random search over surrogate capacities, scored on a
/// holdout split of the initial history.
SurrogateParamSet tune_surrogates(const SearchParams& params, const SurrogateParamSet& defaults,
                                  const History& history, const Matrix& encoded) {
    SurrogateParamSet tuned = defaults;
    const std::size_t n = history.ids.size();
    if (n < 4) {
        return tuned;
    }
    const HistorySplit split =
        split_history(n, false, 0.7, 0.5, derive_seed(params.seed, kTuneStream, 0));
    const Matrix x_fit = history.gather_x(encoded, split.train);
    const auto y_fit = history.gather_y(split.train);
    const Matrix x_hold = history.gather_x(encoded, split.val);
    const auto y_hold = history.gather_y(split.val);
    constexpr std::size_t kDraws = 16;

    auto tune_point = [&](PointKind kind, std::uint64_t role) {
        TreeParams best_params = kind == PointKind::Knn ? default_params(PointKind::Knn)
                                                        : default_params(PointKind::GbmSquared);
        double best_loss = std::numeric_limits<double>::infinity();
        Rng rng(derive_seed(params.seed, kTuneStream, role));
        for (std::size_t d = 0; d < kDraws; ++d) {
            const TreeParams candidate = draw_tree_params(rng, kind == PointKind::Knn);
            const auto model = fit_point(kind, x_fit, y_fit, candidate,
                                         derive_seed(params.seed, kTuneStream, role * 97 + d));
            const double loss = holdout_mse(*model, x_hold, y_hold);
            if (loss < best_loss) {
                best_loss = loss;
                best_params = candidate;
            }
        }
        return best_params;
    };

    if (params.framework == Framework::Lwci) {
        tuned.point = tune_point(params.point_kind, 1);
        tuned.variance = tune_point(params.variance_kind, 2);
    } else if (params.framework == Framework::Cqi) {
        const auto [lo, hi] = quantile_levels_for(params.alpha_target);
        TreeParams best_params = defaults.quantile;
        double best_loss = std::numeric_limits<double>::infinity();
        Rng rng(derive_seed(params.seed, kTuneStream, 3));
        for (std::size_t d = 0; d < kDraws; ++d) {
            const TreeParams candidate = draw_tree_params(rng, false);
            double loss = 0.0;
            if (params.quantile_kind == QuantileKind::Qrf) {
                const auto model = fit_quantile(QuantileKind::Qrf, x_fit, y_fit, 0.5, candidate,
                                                derive_seed(params.seed, kTuneStream, 300 + d));
                loss = holdout_pinball(*model, x_hold, y_hold, lo, hi);
            } else {
                const auto model_lo =
                    fit_quantile(QuantileKind::GbmPinball, x_fit, y_fit, lo, candidate,
                                 derive_seed(params.seed, kTuneStream, 300 + d));
                const auto model_hi =
                    fit_quantile(QuantileKind::GbmPinball, x_fit, y_fit, hi, candidate,
                                 derive_seed(params.seed, kTuneStream, 400 + d));
                for (std::size_t i = 0; i < y_hold.size(); ++i) {
                    loss += pinball_loss(y_hold[i] - model_lo->predict(x_hold.row(i), lo), lo) +
                            pinball_loss(y_hold[i] - model_hi->predict(x_hold.row(i), hi), hi);
                }
                loss /= static_cast<double>(y_hold.size());
            }
            if (loss < best_loss) {
                best_loss = loss;
                best_params = candidate;
            }
        }
        tuned.quantile = best_params;
    }
    return tuned;
}

} // namespace

HistorySplit split_history(std::size_t n, bool with_inner_split, double train_fraction,
                           double inner_train_fraction, std::uint64_t seed) {
    if (n < 4) {
        throw HistoryTooSmallError("history must hold at least 4 pairs to split");
    }
    Rng rng(derive_seed(seed, kSplitStream));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);

    const auto n_train = std::clamp<std::size_t>(
        static_cast<std::size_t>(train_fraction * static_cast<double>(n)), 1, n - 1);
    HistorySplit split;
    split.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());

    if (with_inner_split) {
        const auto n_inner = std::clamp<std::size_t>(
            static_cast<std::size_t>(inner_train_fraction * static_cast<double>(n_train)), 1,
            n_train - 1);
        split.inner_train.assign(split.train.begin(),
                                 split.train.begin() + static_cast<std::ptrdiff_t>(n_inner));
        split.inner_val.assign(split.train.begin() + static_cast<std::ptrdiff_t>(n_inner),
                               split.train.end());
    }
    return split;
}

std::pair<double, double> quantile_levels_for(double alpha_t) {
    const double lo = std::clamp(alpha_t / 2.0, 0.001, 0.999);
    double hi = std::clamp(1.0 - alpha_t / 2.0, 0.001, 0.999);
    if (hi < lo) {
        hi = lo;  // drifted alpha collapses the band to a degenerate pair
    }
    return {lo, hi};
}

Acquisition acquire_next(const ConfigSpace& space, const std::vector<bool>& sampled,
                         const std::function<Interval(std::size_t)>& interval_of,
                         std::size_t n_threads) {
    const std::size_t m = space.size();
    std::vector<std::size_t> candidates;
    candidates.reserve(m);
    for (std::size_t id = 0; id < m; ++id) {
        if (!sampled[id]) {
            candidates.push_back(id);
        }
    }
    if (candidates.empty()) {
        throw SpaceExhaustedError("no unsampled configuration remains");
    }

    struct Best {
        bool found = false;
        std::size_t id = 0;
        Interval interval;
    };
    auto scan = [&](std::size_t begin, std::size_t end, Best& best) {
        for (std::size_t i = begin; i < end; ++i) {
            const std::size_t id = candidates[i];
            const Interval interval = interval_of(id);
            if (!best.found || interval.upper > best.interval.upper) {
                best = {true, id, interval};
            }
        }
    };

    Best overall;
    const std::size_t workers = std::max<std::size_t>(1, std::min(n_threads, candidates.size()));
    if (workers == 1) {
        scan(0, candidates.size(), overall);
    } else {
        // Chunked scan; merging in chunk order reproduces the sequential
        // lowest-id tie-break regardless of scheduling.
        std::vector<Best> partial(workers);
        std::vector<std::thread> pool;
        const std::size_t chunk = (candidates.size() + workers - 1) / workers;
        for (std::size_t w = 0; w < workers; ++w) {
            const std::size_t begin = w * chunk;
            const std::size_t end = std::min(candidates.size(), begin + chunk);
            if (begin >= end) {
                break;
            }
            pool.emplace_back([&, begin, end, w] { scan(begin, end, partial[w]); });
        }
        for (auto& t : pool) {
            t.join();
        }
        for (const auto& best : partial) {
            if (!best.found) {
                continue;
            }
            if (!overall.found || best.interval.upper > overall.interval.upper) {
                overall = best;
            }
        }
    }
    return {overall.id, overall.interval};
}

SearchTrace run_random_search(const ObjectiveFn& objective, const ConfigSpace& space,
                              std::size_t budget, std::uint64_t seed, Timing timing) {
    const auto ids = sample_uniform_ids(space, budget, seed);
    TrialTimer timer(timing);
    TraceBuilder builder;
    for (std::size_t t = 0; t < ids.size(); ++t) {
        Trial trial;
        trial.step = t + 1;
        trial.config_id = ids[t];
        trial.phi = objective(space.config(ids[t]));
        trial.elapsed_ms = timer.elapsed_ms(trial.step);
        builder.add(std::move(trial));
    }
    return builder.trace;
}

SearchTrace run_acho(const ObjectiveFn& objective, const ConfigSpace& space,
                     const SearchParams& params) {
    if (params.budget > space.size()) {
        throw BudgetExceedsSpaceError("budget exceeds the configuration space");
    }
    if (params.framework == Framework::Random) {
        return run_random_search(objective, space, params.budget, params.seed, params.timing);
    }
    if (params.n_init < 1 || params.n_init >= params.budget) {
        throw BudgetExceedsSpaceError("n_init must satisfy 1 <= n_init < budget");
    }
    if (!(params.alpha_target > 0.0 && params.alpha_target < 1.0)) {
        throw InvalidQuantileError("alpha_target must lie in (0, 1)");
    }
    if (!(params.gamma >= 0.0) || !std::isfinite(params.gamma)) {
        throw InvalidHyperparameterError("gamma must be finite and nonnegative");
    }

    const Matrix encoded = encode_all(space);
    TrialTimer timer(params.timing);
    TraceBuilder builder;
    History history;
    std::vector<bool> sampled(space.size(), false);

    auto record = [&](std::size_t step, std::size_t id, double phi,
                      std::optional<Interval> interval, std::optional<int> breach,
                      std::optional<double> alpha_used) {
        Trial trial;
        trial.step = step;
        trial.config_id = id;
        trial.phi = phi;
        trial.interval = interval;
        trial.breach = breach;
        trial.alpha_at_sampling = alpha_used;
        trial.elapsed_ms = timer.elapsed_ms(step);
        sampled[id] = true;
        history.ids.push_back(id);
        history.phis.push_back(phi);
        builder.add(std::move(trial));
    };

    // Phase 1: preliminary random search.
    const auto initial_ids = sample_initial(space, params.n_init, params.seed);
    for (std::size_t t = 0; t < initial_ids.size(); ++t) {
        const std::size_t id = initial_ids[t];
        record(t + 1, id, objective(space.config(id)), std::nullopt, std::nullopt, std::nullopt);
    }

    SurrogateParamSet surrogate_params = resolve_params(params);
    if (params.tune_surrogates) {
        surrogate_params = tune_surrogates(params, surrogate_params, history, encoded);
    }

    AdaptiveAlphaState alpha = make_alpha_state(params.alpha_target, params.gamma);

    // Phase 2: conformal acquisitions.
    for (std::size_t step = params.n_init + 1; step <= params.budget; ++step) {
        const std::size_t n_hist = history.ids.size();
        if (n_hist < 4) {
            // Too little history to split; fall back to a uniform draw.
            std::vector<std::size_t> open;
            for (std::size_t id = 0; id < space.size(); ++id) {
                if (!sampled[id]) {
                    open.push_back(id);
                }
            }
            Rng rng(derive_seed(params.seed, kFallbackStream, step));
            const std::size_t id = open[rng.index(open.size())];
            record(step, id, objective(space.config(id)), std::nullopt, std::nullopt,
                   std::nullopt);
            continue;
        }

        const HistorySplit split =
            split_history(n_hist, params.framework == Framework::Lwci, params.train_fraction,
                          params.inner_train_fraction, derive_seed(params.seed, kSplitStream, step));

        CalibrationState state;
        state.alpha = alpha;
        if (params.framework == Framework::Lwci) {
            const Matrix x_inner = history.gather_x(encoded, split.inner_train);
            const auto y_inner = history.gather_y(split.inner_train);
            auto point = fit_point(params.point_kind, x_inner, y_inner, surrogate_params.point,
                                   derive_seed(params.seed, kPointStream, step));

            // Uncertainty targets: absolute residuals of the point model on
            // the inner validation part it never saw.
            const Matrix x_resid = history.gather_x(encoded, split.inner_val);
            const auto y_resid = history.gather_y(split.inner_val);
            std::vector<double> spread(y_resid.size());
            for (std::size_t i = 0; i < y_resid.size(); ++i) {
                spread[i] = std::abs(y_resid[i] - point->predict(x_resid.row(i)));
            }
            auto variance =
                fit_point(params.variance_kind, x_resid, spread, surrogate_params.variance,
                          derive_seed(params.seed, kVarianceStream, step));

            const Matrix x_val = history.gather_x(encoded, split.val);
            const auto y_val = history.gather_y(split.val);
            state.framework = ScoreFramework::Lwci;
            state.point = std::move(point);
            state.variance = std::move(variance);
            state.scores = lwci_calibrate(*state.point, *state.variance, x_val, y_val);
        } else {
            const auto [lo, hi] = quantile_levels_for(alpha.alpha_t);
            const Matrix x_train = history.gather_x(encoded, split.train);
            const auto y_train = history.gather_y(split.train);
            if (params.quantile_kind == QuantileKind::Qrf) {
                // One forest serves both bounds; levels are query-time.
                std::shared_ptr<const QuantileEstimator> forest =
                    fit_quantile(QuantileKind::Qrf, x_train, y_train, 0.5,
                                 surrogate_params.quantile,
                                 derive_seed(params.seed, kQuantileLoStream, step));
                state.lower_bound = {forest, lo};
                state.upper_bound = {forest, hi};
            } else {
                state.lower_bound = {fit_quantile(QuantileKind::GbmPinball, x_train, y_train, lo,
                                                  surrogate_params.quantile,
                                                  derive_seed(params.seed, kQuantileLoStream, step)),
                                     lo};
                state.upper_bound = {fit_quantile(QuantileKind::GbmPinball, x_train, y_train, hi,
                                                  surrogate_params.quantile,
                                                  derive_seed(params.seed, kQuantileHiStream, step)),
                                     hi};
            }
            const Matrix x_val = history.gather_x(encoded, split.val);
            const auto y_val = history.gather_y(split.val);
            state.framework = ScoreFramework::Cqi;
            state.scores = cqi_calibrate(state.lower_bound, state.upper_bound, x_val, y_val);
        }

        const auto interval_of = [&](std::size_t id) {
            return state.framework == ScoreFramework::Lwci
                       ? lwci_interval(state, encoded.row(id))
                       : cqi_interval(state, encoded.row(id));
        };
        const Acquisition acquired =
            acquire_next(space, sampled, interval_of, params.n_threads);

        const double phi = objective(space.config(acquired.config_id));
        const int breach = breach_indicator(acquired.interval, phi);
        record(step, acquired.config_id, phi, acquired.interval, breach, alpha.alpha_t);

        if (params.adaptive) {
            alpha = adaptive_update(std::move(alpha), breach);
        }
    }

    return builder.trace;
}

} // namespace acho
