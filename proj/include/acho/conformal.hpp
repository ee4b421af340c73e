#pragma once

#include <memory>
#include <span>
#include <vector>

#include "acho/matrix.hpp"
#include "acho/surrogate.hpp"

namespace acho {

/// Raw uncertainty predictions are floored at this value before any division
/// or width multiplication.
inline constexpr double kVarianceFloor = 1e-6;

struct Interval {
    double lower = 0.0;
    double upper = 0.0;  // bounds may be +-infinity
};

/// 1 iff phi falls outside the closed interval.
int breach_indicator(const Interval& interval, double phi);

enum class ScoreFramework { Split, Lwci, Cqi };

/// Held-out nonconformity scores (D_val). Split and locally weighted scores
/// are nonnegative; conformalized-quantile scores are signed.
struct NonconformityScores {
    ScoreFramework framework = ScoreFramework::Split;
    std::vector<double> scores;
};

/// Finite-sample quantile of a score multiset: the sorted value at 1-based
/// index ceil(level * (n+1)), after clamping level to [0, 1]. Overflow above
/// the largest score returns +infinity; underflow returns -infinity for
/// signed score sets and 0 for nonnegative ones.
double finite_sample_quantile(std::span<const double> scores, double level, bool signed_scores);
double finite_sample_quantile(const NonconformityScores& scores, double level);

/// [prediction - q, prediction + q] with q the finite-sample quantile of the
/// absolute-residual scores at the given level.
Interval split_interval(double prediction, const NonconformityScores& scores, double level);

/// Absolute residuals scaled by the floored uncertainty prediction, one score
/// per validation pair.
NonconformityScores lwci_calibrate(const PointEstimator& point, const PointEstimator& variance,
                                   const Matrix& theta_val, std::span<const double> phi_val);

/// A quantile model pinned to the level it answers for one interval bound.
struct BoundEstimator {
    std::shared_ptr<const QuantileEstimator> model;
    double level = 0.5;

    double predict(std::span<const double> features) const {
        return model->predict(features, level);
    }
};

/// Signed exceedance scores max(lo - phi, phi - hi), negative iff phi lies
/// strictly inside the raw quantile band.
NonconformityScores cqi_calibrate(const BoundEstimator& lower_bound,
                                  const BoundEstimator& upper_bound, const Matrix& theta_val,
                                  std::span<const double> phi_val);

/// Working miss-coverage level under the online update
/// alpha_{t+1} = alpha_t + gamma * (alpha_target - breach).
struct AdaptiveAlphaState {
    double alpha_target = 0.8;
    double alpha_t = 0.8;
    double gamma = 0.05;
    std::vector<int> history;
};

AdaptiveAlphaState make_alpha_state(double alpha_target, double gamma);

/// Returns the successor state; alpha_t itself is never clamped (saturation
/// happens when the level reaches the score quantile).
AdaptiveAlphaState adaptive_update(AdaptiveAlphaState state, int breach);

/// Everything needed to answer interval queries for one search iteration.
struct CalibrationState {
    ScoreFramework framework = ScoreFramework::Lwci;
    std::shared_ptr<const PointEstimator> point;     // lwci
    std::shared_ptr<const PointEstimator> variance;  // lwci
    BoundEstimator lower_bound;                      // cqi
    BoundEstimator upper_bound;                      // cqi
    NonconformityScores scores;
    AdaptiveAlphaState alpha;
};

/// Interval centered on the point prediction with half-width
/// V(theta) * q_{1-alpha_t}(D_val), V floored.
Interval lwci_interval(const CalibrationState& state, std::span<const double> theta);

/// Raw quantile band shifted outward by q_{1-alpha_t}(D_val) (inward when
/// negative); bounds that cross collapse to the band midpoint.
Interval cqi_interval(const CalibrationState& state, std::span<const double> theta);

} // namespace acho
