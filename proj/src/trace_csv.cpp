#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include "acho/errors.hpp"
#include "acho/harness.hpp"

namespace acho {

namespace {

const char* kHeader = "step,elapsed_ms,config_id,phi,lower,upper,breach,alpha_t,best_phi";

std::string format_double(double v) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& field, const std::string& path) {
    double v = 0.0;
    const char* begin = field.data();
    const char* end = begin + field.size();
    bool negative = false;
    if (begin != end && (*begin == '-' || *begin == '+')) {
        negative = *begin == '-';
        ++begin;
    }
    if (std::string_view(begin, end - begin) == "inf") {
        return negative ? -std::numeric_limits<double>::infinity()
                        : std::numeric_limits<double>::infinity();
    }
    const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
    if (res.ec != std::errc{} || res.ptr != field.data() + field.size()) {
        throw IoError("bad numeric field '" + field + "' in " + path);
    }
    return v;
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::string current;
    for (const char c : line) {
        if (c == ',') {
            fields.push_back(current);
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    fields.push_back(current);
    return fields;
}

} // namespace

std::string trace_file_name(const std::string& run_name, std::uint64_t seed) {
    return run_name + "_seed" + std::to_string(seed) + ".csv";
}

void emit_trace_csv(const SearchTrace& trace, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open '" + path + "' for writing");
    }
    out << kHeader << '\n';
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& trial : trace.trials) {
        best = std::max(best, trial.phi);
        out << trial.step << ',' << format_double(trial.elapsed_ms) << ',' << trial.config_id
            << ',' << format_double(trial.phi) << ',';
        if (trial.interval.has_value()) {
            out << format_double(trial.interval->lower) << ','
                << format_double(trial.interval->upper) << ',';
        } else {
            out << ",,";
        }
        if (trial.breach.has_value()) {
            out << *trial.breach;
        }
        out << ',';
        if (trial.alpha_at_sampling.has_value()) {
            out << format_double(*trial.alpha_at_sampling);
        }
        out << ',' << format_double(best) << '\n';
    }
    if (!out) {
        throw IoError("failed while writing '" + path + "'");
    }
}

SearchTrace parse_trace_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path + "' for reading");
    }
    std::string line;
    if (!std::getline(in, line) || line != kHeader) {
        throw IoError("unexpected trace header in " + path);
    }

    SearchTrace trace;
    double best = -std::numeric_limits<double>::infinity();
    std::size_t best_id = 0;
    std::size_t conformal = 0;
    std::size_t breaches = 0;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        const auto fields = split_fields(line);
        if (fields.size() != 9) {
            throw IoError("expected 9 columns in " + path);
        }
        Trial trial;
        trial.step = static_cast<std::size_t>(parse_double(fields[0], path));
        trial.elapsed_ms = parse_double(fields[1], path);
        trial.config_id = static_cast<std::size_t>(parse_double(fields[2], path));
        trial.phi = parse_double(fields[3], path);
        if (!fields[4].empty() || !fields[5].empty()) {
            trial.interval = Interval{parse_double(fields[4], path), parse_double(fields[5], path)};
        }
        if (!fields[6].empty()) {
            trial.breach = static_cast<int>(parse_double(fields[6], path));
            ++conformal;
            breaches += static_cast<std::size_t>(*trial.breach);
        }
        if (!fields[7].empty()) {
            trial.alpha_at_sampling = parse_double(fields[7], path);
        }
        if (trial.phi > best) {
            best = trial.phi;
            best_id = trial.config_id;
        }
        trace.trials.push_back(std::move(trial));
        trace.cumulative_breach_rate.push_back(
            conformal == 0 ? 0.0 : static_cast<double>(breaches) / static_cast<double>(conformal));
    }
    if (trace.trials.empty()) {
        throw IoError("trace file " + path + " holds no trials");
    }
    trace.best_phi = best;
    trace.best_config_id = best_id;
    return trace;
}

} // namespace acho
