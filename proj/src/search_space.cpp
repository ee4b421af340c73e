#include "acho/search_space.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <unordered_set>

#include "acho/errors.hpp"
#include "acho/rng.hpp"

namespace acho {

namespace {

void validate_domains(const std::vector<ParamDomain>& domains) {
    for (const auto& d : domains) {
        if (d.size() == 0) {
            throw EmptyDomainError("domain '" + d.name + "' has no values");
        }
        if (d.kind == ParamKind::Numeric) {
            std::set<double> uniq(d.numeric_values.begin(), d.numeric_values.end());
            if (uniq.size() != d.numeric_values.size()) {
                throw EmptyDomainError("domain '" + d.name + "' has duplicate values");
            }
            for (double v : d.numeric_values) {
                if (!std::isfinite(v)) {
                    throw EmptyDomainError("domain '" + d.name + "' has a non-finite value");
                }
            }
        } else {
            std::set<std::string> uniq(d.labels.begin(), d.labels.end());
            if (uniq.size() != d.labels.size()) {
                throw EmptyDomainError("domain '" + d.name + "' has duplicate labels");
            }
        }
    }
}

/// Cartesian product size, saturating instead of overflowing.
std::size_t product_size(const std::vector<ParamDomain>& domains) {
    const std::size_t cap = std::numeric_limits<std::size_t>::max();
    std::size_t product = 1;
    for (const auto& d : domains) {
        const std::size_t s = d.size();
        if (product > cap / s) {
            return cap;
        }
        product *= s;
    }
    return product;
}

std::uint64_t hash_indices(const std::vector<std::size_t>& idx) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t v : idx) {
        h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    }
    return h;
}

} // namespace

ParamDomain ParamDomain::numeric(std::string name, std::vector<double> values) {
    ParamDomain d;
    d.name = std::move(name);
    d.kind = ParamKind::Numeric;
    d.numeric_values = std::move(values);
    return d;
}

ParamDomain ParamDomain::categorical(std::string name, std::vector<std::string> labels) {
    ParamDomain d;
    d.name = std::move(name);
    d.kind = ParamKind::Categorical;
    d.labels = std::move(labels);
    return d;
}

const Configuration& ConfigSpace::config(std::size_t id) const {
    if (id >= configs_.size()) {
        throw UnknownConfigError("config id " + std::to_string(id) + " out of range");
    }
    return configs_[id];
}

ConfigSpace build_space(std::vector<ParamDomain> domains, std::size_t m, std::uint64_t seed) {
    if (m < 1) {
        throw InsufficientProductError("m must be at least 1");
    }
    validate_domains(domains);
    if (product_size(domains) < m) {
        throw InsufficientProductError("Cartesian product smaller than requested m=" +
                                       std::to_string(m));
    }

    Rng rng(derive_seed(seed, 0x5eedu));
    // Rejection-sample distinct assignments; duplicates are hashed away.
    // Capped at 100*m draws, which is ample whenever the product holds m.
    std::unordered_set<std::uint64_t> seen_hashes;
    std::vector<std::vector<std::size_t>> taken;
    std::vector<Configuration> configs;
    configs.reserve(m);
    const std::size_t max_draws = 100 * m;
    std::size_t draws = 0;
    std::vector<std::size_t> candidate(domains.size());
    while (configs.size() < m) {
        if (draws++ >= max_draws) {
            throw InsufficientProductError("failed to draw " + std::to_string(m) +
                                           " distinct configurations");
        }
        for (std::size_t i = 0; i < domains.size(); ++i) {
            candidate[i] = rng.index(domains[i].size());
        }
        const std::uint64_t h = hash_indices(candidate);
        if (seen_hashes.count(h) != 0) {
            bool duplicate = false;
            for (const auto& t : taken) {
                if (t == candidate) {
                    duplicate = true;
                    break;
                }
            }
            if (duplicate) {
                continue;
            }
        }
        seen_hashes.insert(h);
        taken.push_back(candidate);
        Configuration c;
        c.id = configs.size();
        c.value_indices = candidate;
        configs.push_back(std::move(c));
    }

    ConfigSpace space;
    space.domains_ = std::move(domains);
    space.configs_ = std::move(configs);
    space.seed_ = seed;
    return space;
}

FeatureVector encode(const ConfigSpace& space, const Configuration& config) {
    if (config.value_indices.size() != space.domains().size()) {
        throw UnknownConfigError("configuration does not match space domains");
    }
    FeatureVector v(space.dim());
    for (std::size_t i = 0; i < space.domains().size(); ++i) {
        const auto& d = space.domains()[i];
        const std::size_t vi = config.value_indices[i];
        if (vi >= d.size()) {
            throw UnknownConfigError("configuration value index out of domain range");
        }
        v[i] = d.kind == ParamKind::Numeric ? d.numeric_values[vi] : static_cast<double>(vi);
    }
    return v;
}

FeatureVector encode(const ConfigSpace& space, std::size_t config_id) {
    return encode(space, space.config(config_id));
}

Matrix encode_all(const ConfigSpace& space) {
    Matrix out(space.size(), space.dim());
    for (std::size_t id = 0; id < space.size(); ++id) {
        out.set_row(id, encode(space, id));
    }
    return out;
}

std::vector<std::size_t> sample_uniform_ids(const ConfigSpace& space, std::size_t k,
                                            std::uint64_t seed) {
    if (k < 1 || k > space.size()) {
        throw BudgetExceedsSpaceError("requested draw count exceeds the configuration space");
    }
    Rng rng(derive_seed(seed, 0x1417u));
    return rng.sample_without_replacement(space.size(), k);
}

std::vector<std::size_t> sample_initial(const ConfigSpace& space, std::size_t n_init,
                                        std::uint64_t seed) {
    if (n_init >= space.size()) {
        throw BudgetExceedsSpaceError("n_init must satisfy 1 <= n_init < m");
    }
    return sample_uniform_ids(space, n_init, seed);
}

} // namespace acho
