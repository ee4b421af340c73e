#pragma once

#include <cstdint>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "acho/cart.hpp"
#include "acho/matrix.hpp"
#include "acho/search_space.hpp"

namespace acho {

/// A generated benchmark problem with its train/validation row split.
struct Dataset {
    Matrix features;
    std::vector<double> targets;  // class labels 0/1 when classification
    bool classification = false;
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> val_idx;
};

/// Friedman synthetic regression benchmarks. Variant 1 has 10 uniform [0,1]
/// features, five of them relevant; variants 2 and 3 have 4 features with
/// the classic ranges. Noise is additive Normal(0, noise_sd^2).
Dataset gen_friedman(int variant, std::size_t n, double noise_sd, std::uint64_t seed);

/// Balanced binary classification: informative features are unit-normal
/// clusters centered at two opposite hypercube vertices scaled by class_sep;
/// redundant features are random linear combinations of the informative
/// ones; feature order is shuffled.
Dataset gen_hypercube(std::size_t n, std::size_t d_informative, std::size_t d_redundant,
                      double class_sep, std::uint64_t seed);

/// Column-wise CSV export (header x0..x{d-1},y).
void write_dataset_csv(const Dataset& dataset, const std::string& path);

/// Base-model controls, fractions as in the searchable space: minimum
/// samples to split / per leaf as a share of the training rows, candidate
/// features per split as a share of the feature count.
struct ForestParams {
    std::size_t n_estimators = 100;
    double min_split_fraction = 0.01;
    double min_leaf_fraction = 0.005;
    double max_features_fraction = 1.0;
};

/// Bagged CART ensemble; regression averages tree means, classification
/// takes the majority vote over per-tree class predictions (ties to 0).
class RandomForestModel {
public:
    double predict(std::span<const double> features) const;
    bool classification() const { return classification_; }
    std::size_t tree_count() const { return trees_.size(); }
    const RegressionTree& tree(std::size_t i) const { return trees_[i]; }

    friend RandomForestModel train_random_forest(const Matrix& x, std::span<const double> y,
                                                 bool classification, const ForestParams& params,
                                                 std::uint64_t seed);

private:
    std::vector<RegressionTree> trees_;
    bool classification_ = false;
};

RandomForestModel train_random_forest(const Matrix& x, std::span<const double> y,
                                      bool classification, const ForestParams& params,
                                      std::uint64_t seed);

/// Fraction-to-count conversion for the forest controls: ceil(fraction * n)
/// floored at 2 for min-split and 1 for min-leaf; ceil(fraction * d)
/// candidate features per split.
CartParams forest_cart_params(const ForestParams& params, std::size_t n_train, std::size_t d);

enum class Metric { NegMse, Accuracy };

/// Maps a configuration to the validation performance of a freshly trained
/// random forest. Larger is better: regression returns negated MSE.
/// Evaluations are deterministic per (eval_seed, config id) and memoized.
class Objective {
public:
    Objective(Dataset dataset, Metric metric, std::uint64_t eval_seed);

    double evaluate(const ConfigSpace& space, const Configuration& config) const;
    const Dataset& dataset() const { return dataset_; }
    Metric metric() const { return metric_; }

private:
    Dataset dataset_;
    Metric metric_;
    std::uint64_t eval_seed_;
    mutable std::mutex cache_mutex_;
    mutable std::unordered_map<std::size_t, double> cache_;
};

/// The searchable random-forest space: estimator counts 10..100 by 10 plus
/// {150, 200, 300, 400}; split/leaf minimum-sample fractions
/// {0.005, 0.01, 0.05, 0.1, 0.2, 0.3}; feature fractions 0.1..1.0 by 0.1.
std::vector<ParamDomain> rf_search_domains();

} // namespace acho
