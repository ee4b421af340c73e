// Acceptance suite: one check per release criterion, each printing a single
// pass/fail line. Run with no arguments for all criteria or pass a list of
// criterion numbers.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "acho/conformal.hpp"
#include "acho/harness.hpp"
#include "acho/objectives.hpp"
#include "acho/rng.hpp"
#include "acho/search_space.hpp"
#include "acho/searcher.hpp"
#include "acho/surrogate.hpp"

using namespace acho;

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kInf = std::numeric_limits<double>::infinity();

struct Outcome {
    bool pass = false;
    std::string detail;
};

double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string fmt(double v, int digits = 4) {
    std::ostringstream out;
    out.precision(digits);
    out << std::fixed << v;
    return out.str();
}

void parallel_for(std::size_t jobs, std::size_t workers, const std::function<void(std::size_t)>& fn) {
    workers = std::max<std::size_t>(1, std::min(workers, jobs));
    if (workers == 1) {
        for (std::size_t i = 0; i < jobs; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < jobs; i = next.fetch_add(1)) {
                fn(i);
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
}

// ---------------------------------------------------------------------------
// Criterion 1: split, LWCI and CQI coverage on exchangeable data.
// ---------------------------------------------------------------------------

struct RegressionDraw {
    Matrix x;
    std::vector<double> y;
};

RegressionDraw draw_regression(std::size_t n, Rng& rng) {
    RegressionDraw out;
    out.x = Matrix(n, 2);
    out.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x1 = rng.uniform();
        const double x2 = rng.uniform();
        out.x(i, 0) = x1;
        out.x(i, 1) = x2;
        out.y[i] = std::sin(2.0 * kPi * x1) + x2 + (0.1 + 0.5 * x1) * rng.normal();
    }
    return out;
}

Outcome criterion1() {
    const double alpha = 0.2;  // coverage 0.8
    const int seeds = 20;
    const std::size_t n = 500;
    double split_total = 0.0;
    double lwci_total = 0.0;
    double cqi_total = 0.0;

    std::vector<double> split_cov(seeds);
    std::vector<double> lwci_cov(seeds);
    std::vector<double> cqi_cov(seeds);
    parallel_for(seeds, 2, [&](std::size_t seed) {
        Rng rng(derive_seed(4100, seed));
        const auto fit = draw_regression(n, rng);
        const auto cal = draw_regression(n, rng);
        const auto test = draw_regression(n, rng);

        TreeParams gbm = default_params(PointKind::GbmSquared);
        const auto point = fit_point(PointKind::GbmSquared, fit.x, fit.y, gbm, 11 + seed);

        // Split conformal: absolute residual scores.
        NonconformityScores split_scores;
        split_scores.framework = ScoreFramework::Split;
        for (std::size_t i = 0; i < n; ++i) {
            split_scores.scores.push_back(std::abs(cal.y[i] - point->predict(cal.x.row(i))));
        }
        int split_hits = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto interval =
                split_interval(point->predict(test.x.row(i)), split_scores, 1.0 - alpha);
            split_hits += breach_indicator(interval, test.y[i]) == 0 ? 1 : 0;
        }
        split_cov[seed] = static_cast<double>(split_hits) / static_cast<double>(n);

        // Locally weighted: point on one half, spread on the other half.
        const std::size_t half = n / 2;
        Matrix x_a(half, 2);
        Matrix x_b(n - half, 2);
        std::vector<double> y_a(half);
        std::vector<double> y_b(n - half);
        for (std::size_t i = 0; i < half; ++i) {
            x_a.set_row(i, fit.x.row(i));
            y_a[i] = fit.y[i];
        }
        for (std::size_t i = half; i < n; ++i) {
            x_b.set_row(i - half, fit.x.row(i));
            y_b[i - half] = fit.y[i];
        }
        std::shared_ptr<const PointEstimator> inner_point =
            fit_point(PointKind::GbmSquared, x_a, y_a, gbm, 31 + seed);
        std::vector<double> spread(n - half);
        for (std::size_t i = 0; i < n - half; ++i) {
            spread[i] = std::abs(y_b[i] - inner_point->predict(x_b.row(i)));
        }

        CalibrationState lwci;
        lwci.framework = ScoreFramework::Lwci;
        lwci.point = inner_point;
        lwci.variance = fit_point(PointKind::GbmSquared, x_b, spread, gbm, 47 + seed);
        lwci.scores = lwci_calibrate(*lwci.point, *lwci.variance, cal.x, cal.y);
        lwci.alpha = make_alpha_state(alpha, 0.05);
        int lwci_hits = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto interval = lwci_interval(lwci, test.x.row(i));
            lwci_hits += breach_indicator(interval, test.y[i]) == 0 ? 1 : 0;
        }
        lwci_cov[seed] = static_cast<double>(lwci_hits) / static_cast<double>(n);

        // Conformalized quantile band from one forest.
        CalibrationState cqi;
        cqi.framework = ScoreFramework::Cqi;
        std::shared_ptr<const QuantileEstimator> forest =
            fit_quantile(QuantileKind::Qrf, fit.x, fit.y, 0.5,
                         default_params(QuantileKind::Qrf), 71 + seed);
        cqi.lower_bound = {forest, alpha / 2.0};
        cqi.upper_bound = {forest, 1.0 - alpha / 2.0};
        cqi.scores = cqi_calibrate(cqi.lower_bound, cqi.upper_bound, cal.x, cal.y);
        cqi.alpha = make_alpha_state(alpha, 0.05);
        int cqi_hits = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto interval = cqi_interval(cqi, test.x.row(i));
            cqi_hits += breach_indicator(interval, test.y[i]) == 0 ? 1 : 0;
        }
        cqi_cov[seed] = static_cast<double>(cqi_hits) / static_cast<double>(n);
    });

    split_total = mean_of(split_cov);
    lwci_total = mean_of(lwci_cov);
    cqi_total = mean_of(cqi_cov);

    const auto in_band = [](double c) { return c >= 0.78 && c <= 0.84; };
    Outcome out;
    out.pass = in_band(split_total) && in_band(lwci_total) && in_band(cqi_total);
    out.detail = "mean coverage split " + fmt(split_total) + ", lwci " + fmt(lwci_total) +
                 ", cqi " + fmt(cqi_total) + " (target [0.78, 0.84])";
    return out;
}

// ---------------------------------------------------------------------------
// Criterion 2: adaptive alpha restores coverage after a distribution shift.
// ---------------------------------------------------------------------------

Outcome criterion2() {
    const double alpha = 0.2;
    const double gamma = 0.05;
    const int steps = 500;
    const int shift_at = 100;

    Rng score_rng(5150);
    NonconformityScores scores;
    scores.framework = ScoreFramework::Split;
    scores.scores.resize(500);
    for (auto& s : scores.scores) {
        s = std::abs(score_rng.normal());
    }

    auto simulate = [&](bool adaptive) {
        Rng rng(6160);
        AdaptiveAlphaState state = make_alpha_state(alpha, gamma);
        int breaches = 0;
        for (int t = 1; t <= steps; ++t) {
            const double y = t <= shift_at ? rng.normal() : rng.normal(2.5, 1.0);
            const Interval interval = split_interval(0.0, scores, 1.0 - state.alpha_t);
            const int breach = breach_indicator(interval, y);
            breaches += breach;
            if (adaptive) {
                state = adaptive_update(std::move(state), breach);
            }
        }
        return static_cast<double>(breaches) / static_cast<double>(steps);
    };

    const double adaptive_rate = simulate(true);
    const double frozen_rate = simulate(false);
    const double adaptive_dev = std::abs(adaptive_rate - alpha);
    const double frozen_dev = std::abs(frozen_rate - alpha);

    Outcome out;
    out.pass = adaptive_dev <= 0.05 && frozen_dev >= adaptive_dev;
    out.detail = "final breach rate adaptive " + fmt(adaptive_rate) + " (|dev| " +
                 fmt(adaptive_dev) + " <= 0.05), unadaptive " + fmt(frozen_rate) + " (|dev| " +
                 fmt(frozen_dev) + ")";
    return out;
}

// ---------------------------------------------------------------------------
// Criteria 3-5: desk-scale search studies over the forest space.
// ---------------------------------------------------------------------------

struct StudyResult {
    std::vector<double> acho_finals;    // best phi per seed
    std::vector<double> random_finals;  // best phi per seed
    std::vector<double> acho_breach;    // end-of-run cumulative breach per seed
};

StudyResult run_study(const Objective& objective, const ConfigSpace& space, double alpha_target,
                      bool include_random) {
    const int seeds = 10;
    const std::size_t budget = 120;
    StudyResult result;
    result.acho_finals.resize(seeds);
    result.random_finals.resize(seeds);
    result.acho_breach.resize(seeds);

    const ObjectiveFn evaluate = [&](const Configuration& config) {
        return objective.evaluate(space, config);
    };

    parallel_for(seeds, 2, [&](std::size_t seed) {
        SearchParams params;
        params.framework = Framework::Cqi;
        params.quantile_kind = QuantileKind::Qrf;
        params.alpha_target = alpha_target;
        params.adaptive = true;
        params.n_init = 20;
        params.budget = budget;
        params.seed = 1000 + seed;
        const auto trace = run_acho(evaluate, space, params);
        result.acho_finals[seed] = trace.best_phi;
        result.acho_breach[seed] = trace.cumulative_breach_rate.back();

        if (include_random) {
            const auto random_trace = run_random_search(evaluate, space, budget, 1000 + seed);
            result.random_finals[seed] = random_trace.best_phi;
        }
    });
    return result;
}

Outcome criterion3() {
    const ConfigSpace space = acho::build_space(rf_search_domains(), 1000, 7);
    const Objective objective(gen_friedman(1, 2000, 1.0, 1234), Metric::NegMse, 1234);
    const auto result = run_study(objective, space, 0.8, true);

    std::vector<double> acho_mse;
    std::vector<double> random_mse;
    for (const double phi : result.acho_finals) {
        acho_mse.push_back(-phi);
    }
    for (const double phi : result.random_finals) {
        random_mse.push_back(-phi);
    }
    const double acho_median = median_of(acho_mse);
    const double random_median = median_of(random_mse);

    Outcome out;
    out.pass = acho_median <= random_median;
    out.detail = "median final MSE acho " + fmt(acho_median) + " vs random " +
                 fmt(random_median);
    return out;
}

Outcome criterion4() {
    const ConfigSpace space = acho::build_space(rf_search_domains(), 1000, 7);
    const Objective objective(gen_hypercube(2000, 5, 5, 5.0, 1234), Metric::Accuracy, 1234);
    const auto result = run_study(objective, space, 0.8, true);

    const double acho_median = median_of(result.acho_finals);
    const double random_median = median_of(result.random_finals);

    Outcome out;
    out.pass = acho_median >= random_median - 0.001;
    out.detail = "median final accuracy acho " + fmt(acho_median) + " vs random " +
                 fmt(random_median) + " (slack 0.1pp)";
    return out;
}

Outcome criterion5() {
    const ConfigSpace space = acho::build_space(rf_search_domains(), 1000, 7);
    const Objective objective(gen_friedman(1, 2000, 1.0, 1234), Metric::NegMse, 1234);

    Outcome out;
    out.pass = true;
    for (const double coverage : {0.2, 0.5, 0.8}) {
        const double alpha = 1.0 - coverage;
        const auto result = run_study(objective, space, alpha, false);
        const double rate = mean_of(result.acho_breach);
        const bool ok = std::abs(rate - alpha) <= 0.10;
        out.pass = out.pass && ok;
        out.detail += (out.detail.empty() ? "" : "; ") + std::string("coverage ") +
                      fmt(coverage, 1) + ": breach " + fmt(rate) + " vs alpha " + fmt(alpha, 1);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Criterion 6: quantile index rule and pinball minimizer oracles.
// ---------------------------------------------------------------------------

double oracle_quantile(std::vector<double> values, int level_percent, bool signed_scores) {
    std::sort(values.begin(), values.end());
    const long long n = static_cast<long long>(values.size());
    if (level_percent <= 0) {
        return signed_scores ? -kInf : 0.0;
    }
    const long long index = (level_percent * (n + 1) + 99) / 100;
    if (index > n) {
        return kInf;
    }
    return values[static_cast<std::size_t>(std::max(1LL, index) - 1)];
}

Outcome criterion6() {
    Rng rng(8181);
    const double pool[] = {-5.0, -2.25, -1.0, 0.0, 0.5, 0.5, 1.0, 2.75, 3.0, 10.0};
    std::size_t checked = 0;
    for (std::size_t n = 1; n <= 8; ++n) {
        for (int rep = 0; rep < 200; ++rep) {
            std::vector<double> values(n);
            for (auto& v : values) {
                v = pool[rng.index(10)];
            }
            for (int level = 0; level <= 100; ++level) {
                for (const bool signed_scores : {false, true}) {
                    const double got =
                        finite_sample_quantile(values, level / 100.0, signed_scores);
                    const double want = oracle_quantile(values, level, signed_scores);
                    if (got != want) {
                        Outcome out;
                        out.detail = "index-rule mismatch at n=" + std::to_string(n) +
                                     " level=" + std::to_string(level);
                        return out;
                    }
                    ++checked;
                }
            }
        }
    }

    // Pinball: the grid minimizer sits at the empirical quantile.
    int minimizer_checks = 0;
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t n = 5 + rng.index(26);
        std::vector<double> sample(n);
        for (auto& v : sample) {
            v = rng.uniform();
        }
        double beta = 0.05 + 0.9 * rng.uniform();
        if (std::abs(beta * static_cast<double>(n) -
                     std::round(beta * static_cast<double>(n))) < 1e-6) {
            beta += 0.0137;  // dodge flat minimizer sets
        }
        const double quantile = empirical_quantile(sample, beta);

        double best_c = 0.0;
        double best_loss = 1e300;
        const int grid = 2400;
        for (int g = 0; g <= grid; ++g) {
            const double c = -0.1 + 1.2 * static_cast<double>(g) / grid;
            double loss = 0.0;
            for (const double v : sample) {
                loss += pinball_loss(v - c, beta);
            }
            if (loss < best_loss) {
                best_loss = loss;
                best_c = c;
            }
        }
        double quantile_loss = 0.0;
        for (const double v : sample) {
            quantile_loss += pinball_loss(v - quantile, beta);
        }
        if (std::abs(best_c - quantile) > 1e-3 || quantile_loss > best_loss + 1e-9) {
            Outcome out;
            out.detail = "pinball minimizer " + fmt(best_c, 6) + " vs quantile " +
                         fmt(quantile, 6) + " at beta " + fmt(beta, 4);
            return out;
        }
        ++minimizer_checks;
    }

    Outcome out;
    out.pass = true;
    out.detail = std::to_string(checked) + " index checks and " +
                 std::to_string(minimizer_checks) + " pinball minimizers agree";
    return out;
}

// ---------------------------------------------------------------------------
// Criterion 7: QRF equals empirical quantiles on a pooled leaf, monotone in
// the level everywhere.
// ---------------------------------------------------------------------------

Outcome criterion7() {
    Rng rng(9292);

    // Depth-0 single tree without bootstrap pools the full training set.
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t n = 3 + rng.index(38);
        Matrix x(n, 1);
        std::vector<double> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            x(i, 0) = rng.uniform();
            y[i] = rng.normal();
        }
        TreeParams params = default_params(QuantileKind::Qrf);
        params.n_trees = 1;
        params.max_depth = 0;
        params.bootstrap = false;
        const auto model = fit_quantile(QuantileKind::Qrf, x, y, 0.5, params, rep);

        std::vector<double> sorted(y);
        std::sort(sorted.begin(), sorted.end());
        const std::vector<double> probe{0.5};
        const struct {
            double beta;
            long long p, q;
        } levels[] = {{0.1, 1, 10}, {0.5, 1, 2}, {0.9, 9, 10}};
        for (const auto& level : levels) {
            const auto count = static_cast<long long>(n);
            const long long index = (level.p * count + level.q - 1) / level.q;  // exact ceil
            const double want = sorted[static_cast<std::size_t>(std::max(1LL, index) - 1)];
            if (model->predict(probe, level.beta) != want) {
                Outcome out;
                out.detail = "pooled quantile mismatch at beta " + fmt(level.beta, 2) +
                             " with n=" + std::to_string(n);
                return out;
            }
        }
    }

    // Monotonicity across forests, queries and level pairs.
    std::size_t draws = 0;
    for (int forest_rep = 0; forest_rep < 10; ++forest_rep) {
        const std::size_t n = 40 + rng.index(40);
        Matrix x(n, 3);
        std::vector<double> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t c = 0; c < 3; ++c) {
                x(i, c) = rng.uniform();
            }
            y[i] = 2.0 * x(i, 0) - x(i, 1) + rng.normal();
        }
        TreeParams params = default_params(QuantileKind::Qrf);
        params.n_trees = 25;
        const auto model = fit_quantile(QuantileKind::Qrf, x, y, 0.5, params, 100 + forest_rep);
        for (int q = 0; q < 100; ++q) {
            const std::vector<double> probe{rng.uniform(), rng.uniform(), rng.uniform()};
            double b1 = rng.uniform(0.005, 0.995);
            double b2 = rng.uniform(0.005, 0.995);
            if (b1 > b2) {
                std::swap(b1, b2);
            }
            if (model->predict(probe, b1) > model->predict(probe, b2)) {
                Outcome out;
                out.detail = "monotonicity violated at betas " + fmt(b1, 4) + ", " + fmt(b2, 4);
                return out;
            }
            ++draws;
        }
    }

    Outcome out;
    out.pass = true;
    out.detail = "pooled-leaf quantiles exact; " + std::to_string(draws) +
                 " monotonicity draws clean";
    return out;
}

// ---------------------------------------------------------------------------
// Criterion 8: experiment reruns are byte-identical.
// ---------------------------------------------------------------------------

std::string slurp(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

Outcome criterion8() {
    namespace fs = std::filesystem;
    const fs::path base = fs::temp_directory_path() / "acho_acceptance_determinism";
    fs::remove_all(base);
    fs::create_directories(base);

    const std::string spec_text = R"({
      "objective": {"generator": "friedman1", "n": 400, "noise_sd": 1.0, "seed": 99},
      "space": {"preset": "rf", "m": 200, "seed": 7},
      "runs": [
        {"name": "cqi-qrf", "framework": "cqi", "quantile": "qrf", "coverage": 0.2,
         "n_init": 10, "budget": 30, "threads": 2, "quantile_params": {"n_trees": 40}},
        {"name": "lwci-gbm", "framework": "lwci", "point": "gbm", "variance": "gbm",
         "coverage": 0.2, "n_init": 10, "budget": 25, "threads": 2,
         "point_params": {"n_trees": 40}, "variance_params": {"n_trees": 40}},
        {"name": "rs", "framework": "random", "budget": 30}
      ],
      "seeds": [1, 2],
      "threads": 2
    })";
    const auto spec = parse_experiment_spec(spec_text);

    const fs::path dir_a = base / "a";
    const fs::path dir_b = base / "b";
    run_experiment(spec, dir_a.string());
    run_experiment(spec, dir_b.string());

    std::size_t compared = 0;
    for (const auto& entry : fs::directory_iterator(dir_a)) {
        const auto twin = dir_b / entry.path().filename();
        if (!fs::exists(twin) || slurp(entry.path()) != slurp(twin)) {
            Outcome out;
            out.detail = "artifact differs: " + entry.path().filename().string();
            return out;
        }
        ++compared;
    }
    fs::remove_all(base);

    Outcome out;
    out.pass = compared == 7;  // 6 traces + summary
    out.detail = std::to_string(compared) + " artifacts byte-identical across reruns";
    return out;
}

// ---------------------------------------------------------------------------
// Criterion 9: generator outputs match the closed-form formulas.
// ---------------------------------------------------------------------------

double friedman_formula(int variant, std::span<const double> x) {
    if (variant == 1) {
        return 10.0 * std::sin(kPi * x[0] * x[1]) + 20.0 * (x[2] - 0.5) * (x[2] - 0.5) +
               10.0 * x[3] + 5.0 * x[4];
    }
    const double core = x[1] * x[2] - 1.0 / (x[1] * x[3]);
    if (variant == 2) {
        return std::sqrt(x[0] * x[0] + core * core);
    }
    return std::atan(core / x[0]);
}

Outcome criterion9() {
    double worst = 0.0;
    for (int variant = 1; variant <= 3; ++variant) {
        const auto dataset = gen_friedman(variant, 100, 0.0, 20260 + variant);
        for (std::size_t i = 0; i < dataset.targets.size(); ++i) {
            const double expected = friedman_formula(variant, dataset.features.row(i));
            worst = std::max(worst, std::abs(dataset.targets[i] - expected));
        }
    }
    Outcome out;
    out.pass = worst <= 1e-9;
    out.detail = "max |generated - closed form| = " + fmt(worst, 12);
    return out;
}

} // namespace

int main(int argc, char** argv) {
    struct Criterion {
        int id;
        const char* label;
        Outcome (*fn)();
    };
    const Criterion criteria[] = {
        {1, "conformal coverage", criterion1},
        {2, "adaptive convergence under shift", criterion2},
        {3, "regression search vs random baseline", criterion3},
        {4, "classification search vs random baseline", criterion4},
        {5, "realized breach rates across coverage levels", criterion5},
        {6, "quantile and pinball oracles", criterion6},
        {7, "qrf quantile correctness", criterion7},
        {8, "byte-identical experiment reruns", criterion8},
        {9, "friedman formula fidelity", criterion9},
    };

    std::vector<int> wanted;
    for (int i = 1; i < argc; ++i) {
        wanted.push_back(std::atoi(argv[i]));
    }

    int failures = 0;
    for (const auto& criterion : criteria) {
        if (!wanted.empty() &&
            std::find(wanted.begin(), wanted.end(), criterion.id) == wanted.end()) {
            continue;
        }
        const auto start = std::chrono::steady_clock::now();
        Outcome outcome;
        try {
            outcome = criterion.fn();
        } catch (const std::exception& e) {
            outcome.pass = false;
            outcome.detail = std::string("exception: ") + e.what();
        }
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::cout << (outcome.pass ? "[PASS]" : "[FAIL]") << " criterion " << criterion.id
                  << ": " << criterion.label << " - " << outcome.detail << " (" << fmt(seconds, 1)
                  << "s)" << std::endl;
        failures += outcome.pass ? 0 : 1;
    }
    return failures == 0 ? 0 : 1;
}
