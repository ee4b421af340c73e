#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include "acho/conformal.hpp"
#include "acho/errors.hpp"
#include "acho/rng.hpp"

using namespace acho;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Point model returning a fixed function of the first feature.
class StubPoint final : public PointEstimator {
public:
    StubPoint(std::function<double(double)> fn, std::size_t dim = 1)
        : PointEstimator(PointKind::Knn, dim), fn_(std::move(fn)) {}

private:
    double predict_impl(std::span<const double> x) const override { return fn_(x[0]); }
    std::function<double(double)> fn_;
};

std::shared_ptr<const PointEstimator> constant_point(double value) {
    return std::make_shared<StubPoint>([value](double) { return value; });
}

/// Quantile model returning a fixed offset band around the first feature.
class StubBand final : public QuantileEstimator {
public:
    StubBand(double lo_offset, double hi_offset)
        : QuantileEstimator(QuantileKind::Qrf, 1), lo_(lo_offset), hi_(hi_offset) {}

private:
    double predict_impl(std::span<const double> x, double beta) const override {
        return beta < 0.5 ? x[0] + lo_ : x[0] + hi_;
    }
    double lo_;
    double hi_;
};

Matrix single_row(double value) {
    Matrix m(1, 1);
    m(0, 0) = value;
    return m;
}

NonconformityScores make_scores(ScoreFramework framework, std::vector<double> values) {
    return {framework, std::move(values)};
}

/// Brute-force sort-and-index oracle; the index is computed in exact integer
/// arithmetic from the percent-grid level.
double oracle_quantile(std::vector<double> values, int level_percent, bool signed_scores) {
    std::sort(values.begin(), values.end());
    const long long n = static_cast<long long>(values.size());
    if (level_percent <= 0) {
        return signed_scores ? -kInf : 0.0;
    }
    const long long index = (level_percent * (n + 1) + 99) / 100;  // ceil over integers
    if (index > n) {
        return kInf;
    }
    return values[static_cast<std::size_t>(std::max(1LL, index) - 1)];
}

} // namespace

TEST_CASE("finite-sample quantile follows the (n+1) index rule") {
    const std::vector<double> five{1, 2, 3, 4, 5};
    CHECK(finite_sample_quantile(five, 1.0, false) == kInf);
    CHECK(finite_sample_quantile(five, 0.8, false) == 5.0);
    const std::vector<double> one{7};
    CHECK(finite_sample_quantile(one, 0.4, false) == 7.0);
    CHECK(finite_sample_quantile(five, 0.0, false) == 0.0);
    CHECK(finite_sample_quantile(five, 0.0, true) == -kInf);
    CHECK(finite_sample_quantile(five, -2.0, true) == -kInf);
    CHECK(finite_sample_quantile(five, 7.0, false) == kInf);
    CHECK_THROWS_AS(finite_sample_quantile(std::vector<double>{}, 0.5, false), EmptyScoresError);
}

TEST_CASE("finite-sample quantile matches the brute-force oracle on small multisets") {
    Rng rng(17);
    const double pool[] = {-3.0, -1.5, 0.0, 0.25, 1.0, 1.0, 2.5, 4.0, 7.5};
    for (std::size_t n = 1; n <= 8; ++n) {
        for (int rep = 0; rep < 60; ++rep) {
            std::vector<double> values(n);
            for (auto& v : values) {
                v = pool[rng.index(9)];
            }
            for (int level = 0; level <= 100; level += 1) {
                const double want_unsigned = oracle_quantile(values, level, false);
                const double want_signed = oracle_quantile(values, level, true);
                CHECK(finite_sample_quantile(values, level / 100.0, false) == want_unsigned);
                CHECK(finite_sample_quantile(values, level / 100.0, true) == want_signed);
            }
        }
    }
}

TEST_CASE("split intervals are symmetric and width-stable") {
    const auto scores = make_scores(ScoreFramework::Split, {1, 2, 3});
    const auto interval = split_interval(0.0, scores, 0.5);  // index ceil(2) -> 2
    CHECK(interval.lower == -2.0);
    CHECK(interval.upper == 2.0);

    const auto zero = split_interval(4.0, scores, 0.0);
    CHECK(zero.lower == 4.0);
    CHECK(zero.upper == 4.0);
}

TEST_CASE("split conformal hits its coverage level on exchangeable noise") {
    // Monte-Carlo oracle: unit-normal residual scores, fresh test residuals.
    double total = 0.0;
    const int seeds = 20;
    for (int seed = 0; seed < seeds; ++seed) {
        Rng rng(1000 + seed);
        std::vector<double> scores(1000);
        for (auto& s : scores) {
            s = std::abs(rng.normal());
        }
        const auto nc = make_scores(ScoreFramework::Split, scores);
        const Interval interval = split_interval(0.0, nc, 0.8);
        int covered = 0;
        const int fresh = 2000;
        for (int i = 0; i < fresh; ++i) {
            covered += breach_indicator(interval, rng.normal()) == 0 ? 1 : 0;
        }
        total += static_cast<double>(covered) / fresh;
    }
    const double coverage = total / seeds;
    CHECK(coverage >= 0.78);
    CHECK(coverage <= 0.83);
}

TEST_CASE("lwci calibration scores") {
    const auto exact = constant_point(5.0);
    const auto unit = constant_point(1.0);
    Matrix theta(3, 1);
    std::vector<double> phi{5.0, 5.0, 5.0};
    const auto zeros = lwci_calibrate(*exact, *unit, theta, phi);
    for (const double s : zeros.scores) {
        CHECK(s == 0.0);
    }

    const auto point = constant_point(3.0);
    const auto spread = constant_point(2.0);
    const auto one = lwci_calibrate(*point, *spread, single_row(0.0), std::vector<double>{5.0});
    REQUIRE(one.scores.size() == 1);
    CHECK(one.scores[0] == doctest::Approx(1.0));

    const auto flat = constant_point(0.0);
    const auto floored = lwci_calibrate(*point, *flat, single_row(0.0), std::vector<double>{4.0});
    CHECK(floored.scores[0] == doctest::Approx(1e6));

    CHECK_THROWS_AS(lwci_calibrate(*point, *spread, Matrix(0, 1), std::vector<double>{}),
                    EmptyValidationSetError);
}

TEST_CASE("lwci interval arithmetic") {
    CalibrationState state;
    state.framework = ScoreFramework::Lwci;
    state.point = constant_point(0.5);
    state.variance = constant_point(2.0);
    state.scores = make_scores(ScoreFramework::Lwci, {0.25});
    state.alpha = make_alpha_state(0.6, 0.05);  // level 0.4 -> index 1 -> q = 0.25

    const std::vector<double> theta{0.0};
    const auto interval = lwci_interval(state, theta);
    CHECK(interval.lower == doctest::Approx(0.0));
    CHECK(interval.upper == doctest::Approx(1.0));

    state.alpha.alpha_t = 0.0;  // level 1 -> overflow -> infinite width
    const auto boundless = lwci_interval(state, theta);
    CHECK(boundless.lower == -kInf);
    CHECK(boundless.upper == kInf);
}

TEST_CASE("lwci widths scale with the uncertainty prediction") {
    CalibrationState state;
    state.framework = ScoreFramework::Lwci;
    state.point = constant_point(0.0);
    state.variance = std::make_shared<StubPoint>([](double x) { return x; });
    state.scores = make_scores(ScoreFramework::Lwci, {0.5});
    state.alpha = make_alpha_state(0.6, 0.05);

    const std::vector<double> narrow{1.0};
    const std::vector<double> wide{3.0};
    const auto a = lwci_interval(state, narrow);
    const auto b = lwci_interval(state, wide);
    CHECK((b.upper - b.lower) == doctest::Approx(3.0 * (a.upper - a.lower)));
}

TEST_CASE("cqi calibration scores follow the two-sided gap rule") {
    // Band [phi - 3, phi + 2] around phi = 0.
    const BoundEstimator lo{std::make_shared<StubBand>(-3.0, 2.0), 0.1};
    const BoundEstimator hi{std::make_shared<StubBand>(-3.0, 2.0), 0.9};
    const auto inside = cqi_calibrate(lo, hi, single_row(0.0), std::vector<double>{0.0});
    CHECK(inside.scores[0] == doctest::Approx(-2.0));

    const auto boundary = cqi_calibrate(lo, hi, single_row(-2.0), std::vector<double>{0.0});
    CHECK(boundary.scores[0] == doctest::Approx(0.0));

    const auto above = cqi_calibrate(lo, hi, single_row(-3.5), std::vector<double>{0.0});
    CHECK(above.scores[0] == doctest::Approx(1.5));
}

TEST_CASE("cqi interval adjustment and collapse") {
    CalibrationState state;
    state.framework = ScoreFramework::Cqi;
    state.lower_bound = {std::make_shared<StubBand>(1.0, 3.0), 0.1};
    state.upper_bound = state.lower_bound;
    state.upper_bound.level = 0.9;
    state.alpha = make_alpha_state(0.6, 0.05);  // level 0.4 -> single score

    const std::vector<double> theta{0.0};
    state.scores = make_scores(ScoreFramework::Cqi, {0.5});
    const auto widened = cqi_interval(state, theta);
    CHECK(widened.lower == doctest::Approx(0.5));
    CHECK(widened.upper == doctest::Approx(3.5));

    state.scores = make_scores(ScoreFramework::Cqi, {-0.2});
    const auto shrunk = cqi_interval(state, theta);
    CHECK(shrunk.lower == doctest::Approx(1.2));
    CHECK(shrunk.upper == doctest::Approx(2.8));

    state.lower_bound = {std::make_shared<StubBand>(1.0, 1.1), 0.1};
    state.upper_bound = state.lower_bound;
    state.upper_bound.level = 0.9;
    state.scores = make_scores(ScoreFramework::Cqi, {-0.3});
    const auto collapsed = cqi_interval(state, theta);
    CHECK(collapsed.lower == doctest::Approx(1.05));
    CHECK(collapsed.upper == doctest::Approx(1.05));
}

TEST_CASE("breach indicator uses closed bounds") {
    const Interval interval{0.0, 1.0};
    CHECK(breach_indicator(interval, 0.5) == 0);
    CHECK(breach_indicator(interval, 1.0) == 0);
    CHECK(breach_indicator(interval, 0.0) == 0);
    CHECK(breach_indicator(interval, 1.01) == 1);
    CHECK(breach_indicator(interval, -0.01) == 1);
}

TEST_CASE("adaptive update arithmetic") {
    AdaptiveAlphaState state = make_alpha_state(0.8, 0.1);
    const auto missed = adaptive_update(state, 1);
    CHECK(missed.alpha_t == doctest::Approx(0.78));
    const auto covered = adaptive_update(state, 0);
    CHECK(covered.alpha_t == doctest::Approx(0.88));
    CHECK(missed.history == std::vector<int>{1});
}

TEST_CASE("adaptive updates are exactly linear in the breach sequence") {
    // Dyadic parameters keep every intermediate sum exact.
    AdaptiveAlphaState state = make_alpha_state(0.5, 0.25);
    Rng rng(4);
    int breach_sum = 0;
    const int steps = 64;
    for (int i = 0; i < steps; ++i) {
        const int breach = rng.uniform() < 0.3 ? 1 : 0;
        breach_sum += breach;
        state = adaptive_update(std::move(state), breach);
    }
    const double expected = 0.5 + 0.25 * (steps * 0.5 - breach_sum);
    CHECK(state.alpha_t == expected);
    CHECK(state.history.size() == static_cast<std::size_t>(steps));
}

TEST_CASE("adaptive stream converges to the target miss-coverage") {
    // Simulated stream at fixed alpha: breach probability responds to the
    // interval implied by alpha_t over a standing score set.
    Rng rng(2024);
    std::vector<double> scores(500);
    for (auto& s : scores) {
        s = std::abs(rng.normal());
    }
    const auto nc = make_scores(ScoreFramework::Split, scores);

    AdaptiveAlphaState state = make_alpha_state(0.2, 0.05);
    int breaches = 0;
    const int steps = 1000;
    for (int t = 0; t < steps; ++t) {
        const Interval interval = split_interval(0.0, nc, 1.0 - state.alpha_t);
        const int breach = breach_indicator(interval, rng.normal());
        breaches += breach;
        state = adaptive_update(std::move(state), breach);
    }
    const double rate = static_cast<double>(breaches) / steps;
    CHECK(rate == doctest::Approx(0.2).epsilon(0.25));
    CHECK(std::abs(rate - 0.2) <= 0.05);
}

TEST_CASE("interval width is monotone in the coverage level") {
    Rng rng(6);
    std::vector<double> scores(40);
    for (auto& s : scores) {
        s = std::abs(rng.normal());
    }
    const auto nc = make_scores(ScoreFramework::Split, scores);
    double previous = -1.0;
    for (double level = 0.0; level <= 1.0001; level += 0.05) {
        const auto interval = split_interval(0.0, nc, level);
        const double width = interval.upper - interval.lower;
        CHECK(width >= previous);
        previous = width;
    }
}
