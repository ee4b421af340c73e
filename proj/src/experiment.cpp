#include <algorithm>
#include <atomic>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "acho/errors.hpp"
#include "acho/harness.hpp"

namespace acho {

namespace {

using nlohmann::json;

[[noreturn]] void fail_field(const std::string& field, const std::string& why) {
    throw SpecParseError("spec field '" + field + "': " + why);
}

template <typename T>
T get_or(const json& node, const std::string& field, const std::string& context, T fallback) {
    if (!node.contains(field)) {
        return fallback;
    }
    try {
        return node.at(field).get<T>();
    } catch (const json::exception&) {
        fail_field(context + field, "wrong type");
    }
}

template <typename T>
T require(const json& node, const std::string& field, const std::string& context) {
    if (!node.contains(field)) {
        fail_field(context + field, "missing");
    }
    try {
        return node.at(field).get<T>();
    } catch (const json::exception&) {
        fail_field(context + field, "wrong type");
    }
}

TreeParams parse_tree_params(const json& node, const std::string& context, TreeParams base) {
    base.n_trees = get_or<std::size_t>(node, "n_trees", context, base.n_trees);
    base.max_depth = get_or<std::size_t>(node, "max_depth", context, base.max_depth);
    base.min_samples_leaf =
        get_or<std::size_t>(node, "min_samples_leaf", context, base.min_samples_leaf);
    base.learning_rate = get_or<double>(node, "learning_rate", context, base.learning_rate);
    base.subsample_fraction =
        get_or<double>(node, "subsample_fraction", context, base.subsample_fraction);
    base.k = get_or<std::size_t>(node, "k", context, base.k);
    base.bootstrap = get_or<bool>(node, "bootstrap", context, base.bootstrap);
    return base;
}

PointKind parse_point_kind(const std::string& text, const std::string& field) {
    if (text == "gbm") {
        return PointKind::GbmSquared;
    }
    if (text == "knn") {
        return PointKind::Knn;
    }
    fail_field(field, "expected 'gbm' or 'knn', got '" + text + "'");
}

RunSpec parse_run(const json& node, std::size_t index) {
    const std::string context = "runs[" + std::to_string(index) + "].";
    RunSpec run;
    SearchParams& p = run.params;

    const auto framework = require<std::string>(node, "framework", context);
    if (framework == "lwci") {
        p.framework = Framework::Lwci;
    } else if (framework == "cqi") {
        p.framework = Framework::Cqi;
    } else if (framework == "random") {
        p.framework = Framework::Random;
    } else {
        fail_field(context + "framework", "expected lwci|cqi|random, got '" + framework + "'");
    }

    run.name = get_or<std::string>(node, "name", context,
                                   "run" + std::to_string(index) + "_" + framework);

    if (node.contains("alpha_target") && node.contains("coverage")) {
        fail_field(context + "coverage", "give either coverage or alpha_target, not both");
    }
    if (node.contains("coverage")) {
        const double coverage = require<double>(node, "coverage", context);
        if (!(coverage > 0.0 && coverage < 1.0)) {
            fail_field(context + "coverage", "must lie in (0, 1)");
        }
        p.alpha_target = 1.0 - coverage;
    } else {
        p.alpha_target = get_or<double>(node, "alpha_target", context, p.alpha_target);
    }
    p.gamma = get_or<double>(node, "gamma", context, p.gamma);
    p.adaptive = get_or<bool>(node, "adaptive", context, p.adaptive);
    p.n_init = get_or<std::size_t>(node, "n_init", context, p.n_init);
    p.budget = require<std::size_t>(node, "budget", context);
    p.n_threads = get_or<std::size_t>(node, "threads", context, p.n_threads);
    p.tune_surrogates = get_or<bool>(node, "tune_surrogates", context, p.tune_surrogates);
    p.train_fraction = get_or<double>(node, "train_fraction", context, p.train_fraction);
    p.inner_train_fraction =
        get_or<double>(node, "inner_train_fraction", context, p.inner_train_fraction);

    if (node.contains("point")) {
        p.point_kind = parse_point_kind(require<std::string>(node, "point", context),
                                        context + "point");
    }
    if (node.contains("variance")) {
        p.variance_kind = parse_point_kind(require<std::string>(node, "variance", context),
                                           context + "variance");
    }
    if (node.contains("quantile")) {
        const auto text = require<std::string>(node, "quantile", context);
        if (text == "qrf") {
            p.quantile_kind = QuantileKind::Qrf;
        } else if (text == "gbm") {
            p.quantile_kind = QuantileKind::GbmPinball;
        } else {
            fail_field(context + "quantile", "expected 'qrf' or 'gbm', got '" + text + "'");
        }
    }

    if (node.contains("point_params")) {
        p.point_params = parse_tree_params(node.at("point_params"), context + "point_params.",
                                           default_params(p.point_kind));
    }
    if (node.contains("variance_params")) {
        p.variance_params = parse_tree_params(node.at("variance_params"),
                                              context + "variance_params.",
                                              default_params(p.variance_kind));
    }
    if (node.contains("quantile_params")) {
        p.quantile_params = parse_tree_params(node.at("quantile_params"),
                                              context + "quantile_params.",
                                              default_params(p.quantile_kind));
    }
    return run;
}

std::vector<ParamDomain> parse_domains(const json& node) {
    std::vector<ParamDomain> domains;
    std::size_t index = 0;
    for (const auto& entry : node) {
        const std::string context = "space.domains[" + std::to_string(index) + "].";
        const auto name = require<std::string>(entry, "name", context);
        const bool has_values = entry.contains("values");
        const bool has_labels = entry.contains("labels");
        if (has_values == has_labels) {
            fail_field(context + "values", "give exactly one of values (numeric) or labels");
        }
        if (has_values) {
            domains.push_back(
                ParamDomain::numeric(name, require<std::vector<double>>(entry, "values", context)));
        } else {
            domains.push_back(ParamDomain::categorical(
                name, require<std::vector<std::string>>(entry, "labels", context)));
        }
        ++index;
    }
    return domains;
}

double mean_of(const std::vector<double>& values) {
    double sum = 0.0;
    for (const double v : values) {
        sum += v;
    }
    return sum / static_cast<double>(values.size());
}

double median_of(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

} // namespace

ExperimentSpec parse_experiment_spec(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& e) {
        throw SpecParseError(std::string("spec is not valid JSON: ") + e.what());
    }

    ExperimentSpec spec;

    const json objective = require<json>(root, "objective", "");
    spec.objective.generator = require<std::string>(objective, "generator", "objective.");
    if (spec.objective.generator != "friedman1" && spec.objective.generator != "friedman2" &&
        spec.objective.generator != "friedman3" && spec.objective.generator != "hypercube") {
        fail_field("objective.generator",
                   "expected friedman1|friedman2|friedman3|hypercube, got '" +
                       spec.objective.generator + "'");
    }
    spec.objective.n = get_or<std::size_t>(objective, "n", "objective.", spec.objective.n);
    spec.objective.noise_sd =
        get_or<double>(objective, "noise_sd", "objective.", spec.objective.noise_sd);
    spec.objective.seed = get_or<std::uint64_t>(objective, "seed", "objective.", spec.objective.seed);
    spec.objective.d_informative =
        get_or<std::size_t>(objective, "informative", "objective.", spec.objective.d_informative);
    spec.objective.d_redundant =
        get_or<std::size_t>(objective, "redundant", "objective.", spec.objective.d_redundant);
    spec.objective.class_sep =
        get_or<double>(objective, "class_sep", "objective.", spec.objective.class_sep);

    const json space = require<json>(root, "space", "");
    if (space.contains("domains")) {
        spec.space.domains = parse_domains(space.at("domains"));
    } else {
        const auto preset = get_or<std::string>(space, "preset", "space.", "rf");
        if (preset != "rf") {
            fail_field("space.preset", "only the 'rf' preset is available");
        }
        spec.space.domains.clear();
    }
    spec.space.m = get_or<std::size_t>(space, "m", "space.", spec.space.m);
    spec.space.seed = get_or<std::uint64_t>(space, "seed", "space.", spec.space.seed);

    const json runs = require<json>(root, "runs", "");
    if (!runs.is_array() || runs.empty()) {
        fail_field("runs", "must be a non-empty array");
    }
    for (std::size_t i = 0; i < runs.size(); ++i) {
        spec.runs.push_back(parse_run(runs.at(i), i));
    }
    std::map<std::string, int> name_counts;
    for (const auto& run : spec.runs) {
        if (++name_counts[run.name] > 1) {
            fail_field("runs", "duplicate run name '" + run.name + "'");
        }
        // Names become file names.
        for (const char c : run.name) {
            if (std::isalnum(static_cast<unsigned char>(c)) == 0 && c != '-' && c != '_' &&
                c != '.') {
                fail_field("runs", "run name '" + run.name + "' may use [A-Za-z0-9._-] only");
            }
        }
    }

    spec.seeds = require<std::vector<std::uint64_t>>(root, "seeds", "");
    if (spec.seeds.empty()) {
        fail_field("seeds", "must be non-empty");
    }

    spec.out_dir = get_or<std::string>(root, "out_dir", "", spec.out_dir);
    spec.threads = get_or<std::size_t>(root, "threads", "", spec.threads);
    const auto timing = get_or<std::string>(root, "timing", "", "virtual");
    if (timing == "virtual") {
        spec.timing = Timing::Virtual;
    } else if (timing == "wall") {
        spec.timing = Timing::Wall;
    } else {
        fail_field("timing", "expected 'virtual' or 'wall', got '" + timing + "'");
    }

    for (auto& run : spec.runs) {
        run.params.timing = spec.timing;
        if (run.params.budget > spec.space.m) {
            fail_field("runs", "run '" + run.name + "' budget exceeds space m");
        }
        if (run.params.framework != Framework::Random &&
            run.params.n_init >= run.params.budget) {
            fail_field("runs", "run '" + run.name + "' needs n_init < budget");
        }
    }
    return spec;
}

ExperimentSpec load_experiment_spec(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open spec file '" + path + "'");
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_experiment_spec(buffer.str());
}

Dataset build_dataset(const ObjectiveSpec& spec) {
    if (spec.generator == "hypercube") {
        return gen_hypercube(spec.n, spec.d_informative, spec.d_redundant, spec.class_sep,
                             spec.seed);
    }
    const int variant = spec.generator == "friedman1" ? 1 : spec.generator == "friedman2" ? 2 : 3;
    return gen_friedman(variant, spec.n, spec.noise_sd, spec.seed);
}

Metric metric_for(const ObjectiveSpec& spec) {
    return spec.generator == "hypercube" ? Metric::Accuracy : Metric::NegMse;
}

ConfigSpace build_space(const SpaceSpec& spec) {
    auto domains = spec.domains.empty() ? rf_search_domains() : spec.domains;
    return build_space(std::move(domains), spec.m, spec.seed);
}

void run_experiment(const ExperimentSpec& spec, const std::string& out_dir_override) {
    const std::string out_dir = out_dir_override.empty() ? spec.out_dir : out_dir_override;
    std::filesystem::create_directories(out_dir);

    const ConfigSpace space = build_space(spec.space);
    const Objective objective(build_dataset(spec.objective), metric_for(spec.objective),
                              spec.objective.seed);
    const ObjectiveFn evaluate = [&](const Configuration& config) {
        return objective.evaluate(space, config);
    };

    struct Job {
        const RunSpec* run;
        std::uint64_t seed;
        SearchTrace trace;
    };
    std::vector<Job> jobs;
    for (const auto& run : spec.runs) {
        for (const std::uint64_t seed : spec.seeds) {
            jobs.push_back({&run, seed, {}});
        }
    }

    const std::size_t workers = std::clamp<std::size_t>(spec.threads, 1, jobs.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto work = [&] {
        for (std::size_t i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1)) {
            try {
                Job& job = jobs[i];
                SearchParams params = job.run->params;
                params.seed = job.seed;
                job.trace = run_acho(evaluate, space, params);
                emit_trace_csv(job.trace, (std::filesystem::path(out_dir) /
                                           trace_file_name(job.run->name, job.seed))
                                              .string());
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) {
                    failure = std::current_exception();
                }
                return;
            }
        }
    };
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back(work);
        }
        for (auto& t : pool) {
            t.join();
        }
    }
    if (failure) {
        std::rethrow_exception(failure);
    }

    std::vector<NamedTrace> traces;
    traces.reserve(jobs.size());
    for (auto& job : jobs) {
        traces.push_back({job.run->name, std::move(job.trace)});
    }
    write_summary_json(summarize(traces),
                       (std::filesystem::path(out_dir) / "summary.json").string());
}

Summary summarize(const std::vector<NamedTrace>& traces) {
    if (traces.empty()) {
        throw EmptyTraceSetError("no traces to summarize");
    }
    std::vector<std::string> order;
    std::map<std::string, std::vector<const SearchTrace*>> groups;
    for (const auto& entry : traces) {
        if (groups.find(entry.run_name) == groups.end()) {
            order.push_back(entry.run_name);
        }
        groups[entry.run_name].push_back(&entry.trace);
    }

    Summary summary;
    for (const auto& name : order) {
        const auto& group = groups[name];
        RunSummary rs;
        rs.name = name;
        rs.seed_count = group.size();

        std::vector<double> finals;
        std::vector<double> breach_finals;
        std::size_t min_steps = std::numeric_limits<std::size_t>::max();
        for (const auto* trace : group) {
            finals.push_back(trace->best_phi);
            min_steps = std::min(min_steps, trace->trials.size());
            bool has_conformal = false;
            for (const auto& trial : trace->trials) {
                if (trial.breach.has_value()) {
                    has_conformal = true;
                    break;
                }
            }
            if (has_conformal) {
                breach_finals.push_back(trace->cumulative_breach_rate.back());
            }
        }
        rs.final_best_phi_mean = mean_of(finals);
        rs.final_best_phi_median = median_of(finals);
        if (!breach_finals.empty()) {
            rs.final_breach_rate_mean = mean_of(breach_finals);
        }

        rs.best_phi_by_step_mean.assign(min_steps, 0.0);
        for (const auto* trace : group) {
            double best = -std::numeric_limits<double>::infinity();
            for (std::size_t s = 0; s < min_steps; ++s) {
                best = std::max(best, trace->trials[s].phi);
                rs.best_phi_by_step_mean[s] += best;
            }
        }
        for (auto& v : rs.best_phi_by_step_mean) {
            v /= static_cast<double>(group.size());
        }
        summary.runs.push_back(std::move(rs));
    }
    return summary;
}

Summary summarize_dir(const std::string& dir) {
    std::vector<NamedTrace> traces;
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().extension() == ".csv") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
        const std::string stem = file.stem().string();
        const auto marker = stem.rfind("_seed");
        if (marker == std::string::npos) {
            continue;
        }
        traces.push_back({stem.substr(0, marker), parse_trace_csv(file.string())});
    }
    return summarize(traces);
}

void write_summary_json(const Summary& summary, const std::string& path) {
    json root;
    root["runs"] = json::array();
    for (const auto& rs : summary.runs) {
        json run;
        run["name"] = rs.name;
        run["seed_count"] = rs.seed_count;
        run["final_best_phi"] = {{"mean", rs.final_best_phi_mean},
                                 {"median", rs.final_best_phi_median}};
        if (rs.final_breach_rate_mean.has_value()) {
            run["final_breach_rate_mean"] = *rs.final_breach_rate_mean;
        } else {
            run["final_breach_rate_mean"] = nullptr;
        }
        run["best_phi_by_step_mean"] = rs.best_phi_by_step_mean;
        root["runs"].push_back(std::move(run));
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open '" + path + "' for writing");
    }
    out << root.dump(2) << '\n';
    if (!out) {
        throw IoError("failed while writing '" + path + "'");
    }
}

} // namespace acho
