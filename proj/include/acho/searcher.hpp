#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "acho/conformal.hpp"
#include "acho/search_space.hpp"
#include "acho/surrogate.hpp"

namespace acho {

enum class Framework { Lwci, Cqi, Random };

/// How per-trial elapsed time is measured. Virtual time advances one unit per
/// trial, which keeps traces byte-reproducible; wall time reads a monotonic
/// clock for real time-axis plots.
enum class Timing { Virtual, Wall };

struct SearchParams {
    Framework framework = Framework::Cqi;
    PointKind point_kind = PointKind::GbmSquared;      // lwci performance estimator
    PointKind variance_kind = PointKind::GbmSquared;   // lwci uncertainty estimator
    QuantileKind quantile_kind = QuantileKind::Qrf;    // cqi bound estimator
    double alpha_target = 0.8;  // target miss-coverage (coverage = 1 - alpha)
    double gamma = 0.05;        // adaptive learning rate
    bool adaptive = true;
    std::size_t n_init = 20;    // preliminary random draws
    std::size_t budget = 0;     // total evaluations, random phase included
    double train_fraction = 0.7;
    double inner_train_fraction = 0.5;  // lwci split of the training part
    std::uint64_t seed = 0;
    std::optional<TreeParams> point_params;
    std::optional<TreeParams> variance_params;
    std::optional<TreeParams> quantile_params;
    bool tune_surrogates = false;  // one 16-draw capacity search after the random phase
    std::size_t n_threads = 1;     // candidate interval scoring
    Timing timing = Timing::Virtual;
};

struct Trial {
    std::size_t step = 0;  // 1-based position in the trace
    std::size_t config_id = 0;
    double phi = 0.0;
    std::optional<Interval> interval;  // absent for random-phase trials
    std::optional<int> breach;
    std::optional<double> alpha_at_sampling;
    double elapsed_ms = 0.0;
};

struct SearchTrace {
    std::vector<Trial> trials;
    double best_phi = 0.0;
    std::size_t best_config_id = 0;
    /// Breaches over conformal-phase trials so far, per step; 0 while no
    /// conformal trial has happened.
    std::vector<double> cumulative_breach_rate;
};

using ObjectiveFn = std::function<double(const Configuration&)>;

/// Index partition of a history of size n: train/val, plus an inner
/// train'/val' split of the training part when requested.
struct HistorySplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> inner_train;
    std::vector<std::size_t> inner_val;
};

/// Uniformly shuffled disjoint exhaustive partition; |train| =
/// floor(train_fraction * n) clamped so every part is non-empty. Requires
/// n >= 4 so that the inner split can also be non-degenerate.
HistorySplit split_history(std::size_t n, bool with_inner_split, double train_fraction,
                           double inner_train_fraction, std::uint64_t seed);

/// Lower/upper quantile levels (alpha_t/2, 1 - alpha_t/2), clamped to
/// [0.001, 0.999]; a crossed pair degenerates to (lo, lo).
std::pair<double, double> quantile_levels_for(double alpha_t);

struct Acquisition {
    std::size_t config_id = 0;
    Interval interval;
};

/// Unsampled configuration with the maximal interval upper bound; ties break
/// toward the lowest id. Candidate scoring may fan out over n_threads with a
/// schedule-independent reduction.
Acquisition acquire_next(const ConfigSpace& space, const std::vector<bool>& sampled,
                         const std::function<Interval(std::size_t)>& interval_of,
                         std::size_t n_threads = 1);

/// Uniform search without replacement; no intervals recorded.
SearchTrace run_random_search(const ObjectiveFn& objective, const ConfigSpace& space,
                              std::size_t budget, std::uint64_t seed,
                              Timing timing = Timing::Virtual);

/// The full conformal search: preliminary random phase, then per-step
/// refitting, calibration, UCB acquisition and (optionally) adaptive alpha
/// updates. framework == Random degenerates to the uniform baseline.
SearchTrace run_acho(const ObjectiveFn& objective, const ConfigSpace& space,
                     const SearchParams& params);

} // namespace acho
