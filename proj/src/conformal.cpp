#include "acho/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "acho/errors.hpp"

namespace acho {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

} // namespace

int breach_indicator(const Interval& interval, double phi) {
    return (phi < interval.lower || phi > interval.upper) ? 1 : 0;
}

double finite_sample_quantile(std::span<const double> scores, double level, bool signed_scores) {
    if (scores.empty()) {
        throw EmptyScoresError("nonconformity score multiset is empty");
    }
    const double clamped = std::clamp(level, 0.0, 1.0);
    const auto n = scores.size();
    if (clamped <= 0.0) {
        return signed_scores ? -kInf : 0.0;
    }
    // The 1e-9 nudge keeps products that are exact integers in real
    // arithmetic from rounding up one index.
    auto index =
        static_cast<long long>(std::ceil(clamped * static_cast<double>(n + 1) - 1e-9));
    index = std::max<long long>(index, 1);
    if (index > static_cast<long long>(n)) {
        return kInf;
    }
    std::vector<double> work(scores.begin(), scores.end());
    auto nth = work.begin() + static_cast<std::ptrdiff_t>(index - 1);
    std::nth_element(work.begin(), nth, work.end());
    return *nth;
}

double finite_sample_quantile(const NonconformityScores& scores, double level) {
    return finite_sample_quantile(scores.scores, level,
                                  scores.framework == ScoreFramework::Cqi);
}

Interval split_interval(double prediction, const NonconformityScores& scores, double level) {
    const double q = finite_sample_quantile(scores, level);
    return {prediction - q, prediction + q};
}

NonconformityScores lwci_calibrate(const PointEstimator& point, const PointEstimator& variance,
                                   const Matrix& theta_val, std::span<const double> phi_val) {
    if (phi_val.empty() || theta_val.rows() == 0) {
        throw EmptyValidationSetError("calibration set is empty");
    }
    if (theta_val.rows() != phi_val.size()) {
        throw DimensionMismatchError("calibration features and targets differ in count");
    }
    NonconformityScores out;
    out.framework = ScoreFramework::Lwci;
    out.scores.reserve(phi_val.size());
    for (std::size_t i = 0; i < phi_val.size(); ++i) {
        const auto theta = theta_val.row(i);
        const double spread = std::max(variance.predict(theta), kVarianceFloor);
        out.scores.push_back(std::abs(phi_val[i] - point.predict(theta)) / spread);
    }
    return out;
}

NonconformityScores cqi_calibrate(const BoundEstimator& lower_bound,
                                  const BoundEstimator& upper_bound, const Matrix& theta_val,
                                  std::span<const double> phi_val) {
    if (phi_val.empty() || theta_val.rows() == 0) {
        throw EmptyValidationSetError("calibration set is empty");
    }
    if (theta_val.rows() != phi_val.size()) {
        throw DimensionMismatchError("calibration features and targets differ in count");
    }
    NonconformityScores out;
    out.framework = ScoreFramework::Cqi;
    out.scores.reserve(phi_val.size());
    const bool shared = lower_bound.model == upper_bound.model;
    for (std::size_t i = 0; i < phi_val.size(); ++i) {
        const auto theta = theta_val.row(i);
        double lo;
        double hi;
        if (shared) {
            std::tie(lo, hi) =
                lower_bound.model->predict_pair(theta, lower_bound.level, upper_bound.level);
        } else {
            lo = lower_bound.predict(theta);
            hi = upper_bound.predict(theta);
        }
        out.scores.push_back(std::max(lo - phi_val[i], phi_val[i] - hi));
    }
    return out;
}

AdaptiveAlphaState make_alpha_state(double alpha_target, double gamma) {
    AdaptiveAlphaState state;
    state.alpha_target = alpha_target;
    state.alpha_t = alpha_target;
    state.gamma = gamma;
    return state;
}

AdaptiveAlphaState adaptive_update(AdaptiveAlphaState state, int breach) {
    state.alpha_t += state.gamma * (state.alpha_target - static_cast<double>(breach));
    state.history.push_back(breach);
    return state;
}

Interval lwci_interval(const CalibrationState& state, std::span<const double> theta) {
    const double center = state.point->predict(theta);
    const double spread = std::max(state.variance->predict(theta), kVarianceFloor);
    const double q = finite_sample_quantile(state.scores, 1.0 - state.alpha.alpha_t);
    return {center - spread * q, center + spread * q};
}

Interval cqi_interval(const CalibrationState& state, std::span<const double> theta) {
    double raw_lo;
    double raw_hi;
    if (state.lower_bound.model == state.upper_bound.model) {
        std::tie(raw_lo, raw_hi) = state.lower_bound.model->predict_pair(
            theta, state.lower_bound.level, state.upper_bound.level);
    } else {
        raw_lo = state.lower_bound.predict(theta);
        raw_hi = state.upper_bound.predict(theta);
    }
    const double q = finite_sample_quantile(state.scores, 1.0 - state.alpha.alpha_t);
    const double lower = raw_lo - q;
    const double upper = raw_hi + q;
    if (lower > upper) {
        const double mid = 0.5 * (raw_lo + raw_hi);
        return {mid, mid};
    }
    return {lower, upper};
}

} // namespace acho
