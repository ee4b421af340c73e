#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "acho/matrix.hpp"
#include "acho/rng.hpp"

namespace acho {

struct CartParams {
    std::size_t max_depth = 6;        // 0 grows a single root leaf
    std::size_t min_samples_leaf = 1;
    std::size_t min_samples_split = 2;
    std::size_t max_features = 0;     // candidate features per split; 0 means all
};

/// Row order of every feature column, ascending by (value, row), plus a
/// column-major copy of the values. Built once per dataset and shared across
/// the trees of an ensemble so each tree only pays a linear pass instead of
/// per-node sorting.
struct FeaturePresort {
    explicit FeaturePresort(const Matrix& x);
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint32_t> order;  // cols blocks of `rows` row ids
    std::vector<double> values;        // cols blocks of `rows` feature values

    std::span<const std::uint32_t> column(std::size_t f) const {
        return {order.data() + f * rows, rows};
    }
    const double* value_column(std::size_t f) const { return values.data() + f * rows; }
};

/// Depth-limited CART regression tree. Split search is exhaustive over the
/// midpoints of consecutive distinct values of each candidate feature, using
/// the variance-reduction criterion; ties are broken by lowest feature index,
/// then lowest threshold. Leaves keep the row indices they were grown from so
/// ensemble wrappers can pool per-leaf targets.
class RegressionTree {
public:
    struct Node {
        std::int32_t feature = -1;  // -1 marks a leaf
        double threshold = 0.0;
        std::int32_t left = -1;
        std::int32_t right = -1;
        double value = 0.0;  // mean target of in-node samples
        std::uint32_t begin = 0;
        std::uint32_t end = 0;  // range into the tree's sample array
    };

    /// `rows` lists the training rows this tree sees; entries may repeat
    /// (bootstrap resamples). The RNG drives per-split feature subsampling
    /// and is consumed in deterministic build order. Passing a presort of
    /// the full matrix avoids re-sorting it per tree.
    void fit(const Matrix& x, std::span<const double> y, std::vector<std::size_t> rows,
             const CartParams& params, Rng& rng, const FeaturePresort* presort = nullptr);

    double predict(std::span<const double> features) const;
    std::size_t leaf_of(std::span<const double> features) const;
    std::span<const std::size_t> node_rows(std::size_t node) const;

    const std::vector<Node>& nodes() const { return nodes_; }
    void set_leaf_value(std::size_t node, double value) { nodes_[node].value = value; }
    std::size_t feature_count() const { return n_features_; }

private:
    struct Builder;

    std::vector<Node> nodes_;
    std::vector<std::size_t> rows_;
    std::size_t n_features_ = 0;
};

} // namespace acho
