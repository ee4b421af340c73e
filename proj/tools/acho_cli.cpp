#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "acho/errors.hpp"
#include "acho/harness.hpp"

namespace {

int cmd_run(const std::string& spec_path, const std::string& out_dir,
            std::optional<std::size_t> threads, std::optional<std::string> timing,
            const std::vector<std::uint64_t>& seeds, std::optional<std::size_t> budget,
            std::optional<std::size_t> n_init, bool tune_surrogates) {
    acho::ExperimentSpec spec = acho::load_experiment_spec(spec_path);
    if (threads.has_value()) {
        spec.threads = *threads;
    }
    if (!seeds.empty()) {
        spec.seeds = seeds;
    }
    if (timing.has_value()) {
        if (*timing != "virtual" && *timing != "wall") {
            throw acho::SpecParseError("spec field 'timing': expected 'virtual' or 'wall'");
        }
        spec.timing = *timing == "wall" ? acho::Timing::Wall : acho::Timing::Virtual;
    }
    for (auto& run : spec.runs) {
        run.params.timing = spec.timing;
        if (budget.has_value()) {
            run.params.budget = *budget;
        }
        if (n_init.has_value()) {
            run.params.n_init = *n_init;
        }
        if (tune_surrogates) {
            run.params.tune_surrogates = true;
        }
        if (run.params.budget > spec.space.m) {
            throw acho::SpecParseError("spec field 'runs': run '" + run.name +
                                       "' budget exceeds space m");
        }
        if (run.params.framework != acho::Framework::Random &&
            run.params.n_init >= run.params.budget) {
            throw acho::SpecParseError("spec field 'runs': run '" + run.name +
                                       "' needs n_init < budget");
        }
    }
    acho::run_experiment(spec, out_dir);
    const std::string where = out_dir.empty() ? spec.out_dir : out_dir;
    std::cout << "wrote " << spec.runs.size() * spec.seeds.size() << " trace files and summary to "
              << where << "\n";
    return 0;
}

int cmd_summarize(const std::string& dir, const std::string& out_file) {
    const acho::Summary summary = acho::summarize_dir(dir);
    acho::write_summary_json(summary, out_file);
    for (const auto& run : summary.runs) {
        std::cout << run.name << ": final best phi mean " << run.final_best_phi_mean
                  << ", median " << run.final_best_phi_median;
        if (run.final_breach_rate_mean.has_value()) {
            std::cout << ", breach rate " << *run.final_breach_rate_mean;
        }
        std::cout << " (" << run.seed_count << " seeds)\n";
    }
    std::cout << "wrote " << out_file << "\n";
    return 0;
}

int cmd_gen_dataset(const std::string& generator, std::size_t n, double noise, std::uint64_t seed,
                    std::size_t informative, std::size_t redundant, double class_sep,
                    const std::string& out_file) {
    acho::ObjectiveSpec spec;
    spec.generator = generator;
    spec.n = n;
    spec.noise_sd = noise;
    spec.seed = seed;
    spec.d_informative = informative;
    spec.d_redundant = redundant;
    spec.class_sep = class_sep;
    if (generator != "friedman1" && generator != "friedman2" && generator != "friedman3" &&
        generator != "hypercube") {
        throw acho::SpecParseError(
            "spec field 'generator': expected friedman1|friedman2|friedman3|hypercube");
    }
    acho::write_dataset_csv(acho::build_dataset(spec), out_file);
    std::cout << "wrote " << out_file << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Conformal hyperparameter search benchmark runner"};
    app.require_subcommand(1);

    // run
    auto* run = app.add_subcommand("run", "Execute an experiment spec");
    std::string spec_path;
    std::string out_dir;
    std::optional<std::size_t> threads;
    std::optional<std::string> timing;
    std::vector<std::uint64_t> seeds;
    std::optional<std::size_t> budget;
    std::optional<std::size_t> n_init;
    bool tune_surrogates = false;
    run->add_option("spec", spec_path, "Experiment spec (JSON)")->required();
    run->add_option("--out", out_dir, "Output directory (overrides the spec)");
    run->add_option("--threads", threads, "Parallel (run, seed) executions");
    run->add_option("--timing", timing, "Trial clock: virtual (reproducible) or wall");
    run->add_option("--seeds", seeds, "Replication seeds (overrides the spec)");
    run->add_option("--budget", budget, "Override every run's budget");
    run->add_option("--n-init", n_init, "Override every run's random-phase length");
    run->add_flag("--tune-surrogates", tune_surrogates,
                  "Run the 16-draw surrogate capacity search after the random phase");

    // summarize
    auto* summarize = app.add_subcommand("summarize", "Aggregate trace CSVs in a directory");
    std::string trace_dir;
    std::string summary_out = "summary.json";
    summarize->add_option("dir", trace_dir, "Directory holding trace CSVs")->required();
    summarize->add_option("--out", summary_out, "Summary JSON path");

    // gen-dataset
    auto* gen = app.add_subcommand("gen-dataset", "Write a synthetic dataset as CSV");
    std::string generator;
    std::size_t n = 10000;
    double noise = 1.0;
    std::uint64_t seed = 1234;
    std::size_t informative = 5;
    std::size_t redundant = 5;
    double class_sep = 5.0;
    std::string dataset_out = "dataset.csv";
    gen->add_option("generator", generator, "friedman1|friedman2|friedman3|hypercube")->required();
    gen->add_option("--n", n, "Sample count");
    gen->add_option("--noise", noise, "Noise standard deviation (friedman)");
    gen->add_option("--seed", seed, "Generator seed");
    gen->add_option("--informative", informative, "Informative features (hypercube)");
    gen->add_option("--redundant", redundant, "Redundant features (hypercube)");
    gen->add_option("--class-sep", class_sep, "Class separation (hypercube)");
    gen->add_option("--out", dataset_out, "Output CSV path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            return cmd_run(spec_path, out_dir, threads, timing, seeds, budget, n_init,
                           tune_surrogates);
        }
        if (summarize->parsed()) {
            return cmd_summarize(trace_dir, summary_out);
        }
        if (gen->parsed()) {
            return cmd_gen_dataset(generator, n, noise, seed, informative, redundant, class_sep,
                                   dataset_out);
        }
    } catch (const acho::SpecParseError& e) {
        std::cerr << "spec error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
