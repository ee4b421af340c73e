#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "acho/matrix.hpp"

namespace acho {

enum class ParamKind { Numeric, Categorical };

/// One hyperparameter with a finite, ordered list of allowed values.
struct ParamDomain {
    std::string name;
    ParamKind kind = ParamKind::Numeric;
    std::vector<double> numeric_values;  // used when kind == Numeric
    std::vector<std::string> labels;     // used when kind == Categorical

    static ParamDomain numeric(std::string name, std::vector<double> values);
    static ParamDomain categorical(std::string name, std::vector<std::string> labels);

    std::size_t size() const {
        return kind == ParamKind::Numeric ? numeric_values.size() : labels.size();
    }
};

/// One assignment of a value to every domain. `value_indices[i]` indexes into
/// the i-th domain's value list, in domain declaration order.
struct Configuration {
    std::size_t id = 0;
    std::vector<std::size_t> value_indices;
};

/// The finite candidate set: m distinct configurations over the given domains.
class ConfigSpace {
public:
    const std::vector<ParamDomain>& domains() const { return domains_; }
    const std::vector<Configuration>& configs() const { return configs_; }
    const Configuration& config(std::size_t id) const;

    /// Number of configurations (m).
    std::size_t size() const { return configs_.size(); }
    /// Encoded feature-vector length.
    std::size_t dim() const { return domains_.size(); }
    std::uint64_t seed() const { return seed_; }

    friend ConfigSpace build_space(std::vector<ParamDomain> domains, std::size_t m,
                                   std::uint64_t seed);

private:
    std::vector<ParamDomain> domains_;
    std::vector<Configuration> configs_;
    std::uint64_t seed_ = 0;
};

/// Samples m distinct configurations uniformly without replacement from the
/// Cartesian product of the domain value lists. Deterministic per seed.
ConfigSpace build_space(std::vector<ParamDomain> domains, std::size_t m, std::uint64_t seed);

/// Numeric domains map to their raw value, categorical domains to the
/// zero-based index of the value in declared order. Component order follows
/// domain declaration order.
FeatureVector encode(const ConfigSpace& space, const Configuration& config);
FeatureVector encode(const ConfigSpace& space, std::size_t config_id);

/// Encodings of every configuration, row id == config id.
Matrix encode_all(const ConfigSpace& space);

/// k distinct config ids drawn uniformly without replacement (k may equal
/// the space size). Draws with the same seed share a common prefix across
/// different k, so a longer run extends a shorter one.
std::vector<std::size_t> sample_uniform_ids(const ConfigSpace& space, std::size_t k,
                                            std::uint64_t seed);

/// n_init distinct config ids drawn uniformly without replacement.
/// Requires n_init < space.size().
std::vector<std::size_t> sample_initial(const ConfigSpace& space, std::size_t n_init,
                                        std::uint64_t seed);

} // namespace acho
