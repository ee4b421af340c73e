#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "acho/objectives.hpp"
#include "acho/search_space.hpp"
#include "acho/searcher.hpp"

namespace acho {

/// Which benchmark problem an experiment optimizes over.
struct ObjectiveSpec {
    std::string generator = "friedman1";  // friedman1|friedman2|friedman3|hypercube
    std::size_t n = 10000;
    double noise_sd = 1.0;
    std::uint64_t seed = 1234;
    std::size_t d_informative = 5;  // hypercube
    std::size_t d_redundant = 5;    // hypercube
    double class_sep = 5.0;         // hypercube
};

struct SpaceSpec {
    std::vector<ParamDomain> domains;  // empty means the random-forest preset
    std::size_t m = 1000;
    std::uint64_t seed = 7;
};

struct RunSpec {
    std::string name;
    SearchParams params;  // params.seed is overwritten per replication
};

struct ExperimentSpec {
    ObjectiveSpec objective;
    SpaceSpec space;
    std::vector<RunSpec> runs;
    std::vector<std::uint64_t> seeds;
    std::string out_dir = "results";
    std::size_t threads = 1;  // parallel (run, seed) executions
    Timing timing = Timing::Virtual;
};

/// Parses and validates the declarative JSON experiment file.
ExperimentSpec parse_experiment_spec(const std::string& json_text);
ExperimentSpec load_experiment_spec(const std::string& path);

Dataset build_dataset(const ObjectiveSpec& spec);
Metric metric_for(const ObjectiveSpec& spec);
ConfigSpace build_space(const SpaceSpec& spec);

/// One trace CSV per (run, seed) plus one summary JSON. Reruns overwrite
/// byte-identically under virtual timing.
void run_experiment(const ExperimentSpec& spec, const std::string& out_dir_override = "");

// --- trace CSV (columns: step,elapsed_ms,config_id,phi,lower,upper,breach,
// alpha_t,best_phi; random-phase rows leave the interval fields empty) ---

void emit_trace_csv(const SearchTrace& trace, const std::string& path);
SearchTrace parse_trace_csv(const std::string& path);

std::string trace_file_name(const std::string& run_name, std::uint64_t seed);

// --- aggregation ---

struct RunSummary {
    std::string name;
    std::size_t seed_count = 0;
    double final_best_phi_mean = 0.0;
    double final_best_phi_median = 0.0;
    std::optional<double> final_breach_rate_mean;  // absent for pure random runs
    std::vector<double> best_phi_by_step_mean;
};

struct Summary {
    std::vector<RunSummary> runs;
};

struct NamedTrace {
    std::string run_name;
    SearchTrace trace;
};

Summary summarize(const std::vector<NamedTrace>& traces);
Summary summarize_dir(const std::string& dir);
void write_summary_json(const Summary& summary, const std::string& path);

} // namespace acho
