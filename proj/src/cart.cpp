#include "acho/cart.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "acho/errors.hpp"

namespace acho {

FeaturePresort::FeaturePresort(const Matrix& x) : rows(x.rows()), cols(x.cols()) {
    order.resize(rows * cols);
    values.resize(rows * cols);
    for (std::size_t f = 0; f < cols; ++f) {
        auto* value_col = values.data() + f * rows;
        for (std::size_t r = 0; r < rows; ++r) {
            value_col[r] = x(r, f);
        }
        auto* column = order.data() + f * rows;
        std::iota(column, column + rows, 0u);
        std::sort(column, column + rows, [value_col](std::uint32_t a, std::uint32_t b) {
            if (value_col[a] != value_col[b]) {
                return value_col[a] < value_col[b];
            }
            return a < b;
        });
    }
}

/// Per-tree workspace. Sample positions index the tree's row list; every
/// feature keeps its positions sorted by value, and node splits partition all
/// feature orders in place, so no per-node sorting is needed.
struct RegressionTree::Builder {
    const Matrix& x;
    std::span<const double> y;
    const CartParams& params;
    Rng& rng;
    RegressionTree& tree;

    std::size_t count = 0;
    std::size_t n_features = 0;
    const FeaturePresort* presort_ = nullptr;
    std::vector<double> targets;        // target per position
    std::vector<std::uint32_t> sorted;  // n_features blocks: positions by value
    std::vector<std::uint32_t> scratch;
    std::vector<std::uint8_t> goes_left;
    std::vector<std::size_t> feature_buffer;

    Builder(const Matrix& x_in, std::span<const double> y_in, const CartParams& params_in,
            Rng& rng_in, RegressionTree& tree_in)
        : x(x_in), y(y_in), params(params_in), rng(rng_in), tree(tree_in) {}

    std::span<std::uint32_t> column(std::size_t f) {
        return {sorted.data() + f * count, count};
    }
    double value_at(std::size_t f, std::uint32_t pos) const {
        return presort_->value_column(f)[tree.rows_[pos]];
    }

    void prepare(const FeaturePresort& presort) {
        presort_ = &presort;
        count = tree.rows_.size();
        n_features = x.cols();
        targets.resize(count);
        sorted.resize(n_features * count);
        scratch.resize(count);
        goes_left.resize(count);

        for (std::size_t p = 0; p < count; ++p) {
            targets[p] = y[tree.rows_[p]];
        }

        // Positions of each dataset row, in ascending position order (CSR).
        std::vector<std::uint32_t> row_counts(presort.rows + 1, 0);
        for (const std::size_t row : tree.rows_) {
            ++row_counts[row + 1];
        }
        for (std::size_t r = 0; r < presort.rows; ++r) {
            row_counts[r + 1] += row_counts[r];
        }
        std::vector<std::uint32_t> positions(count);
        std::vector<std::uint32_t> cursor(row_counts.begin(), row_counts.end() - 1);
        for (std::size_t p = 0; p < count; ++p) {
            positions[cursor[tree.rows_[p]]++] = static_cast<std::uint32_t>(p);
        }

        // Expand each globally sorted column into this tree's sample
        // positions; ties keep (value, row, draw order), a total order.
        for (std::size_t f = 0; f < n_features; ++f) {
            auto out = column(f);
            std::size_t at = 0;
            for (const std::uint32_t row : presort.column(f)) {
                for (std::uint32_t i = row_counts[row]; i < row_counts[row + 1]; ++i) {
                    out[at++] = positions[i];
                }
            }
        }
    }

    std::size_t build(std::size_t begin, std::size_t end, std::size_t depth) {
        const std::size_t node_count = end - begin;
        const auto canonical = column(0);
        double total_sum = 0.0;
        for (std::size_t i = begin; i < end; ++i) {
            total_sum += targets[canonical[i]];
        }

        const std::size_t node_index = tree.nodes_.size();
        Node node;
        node.value = total_sum / static_cast<double>(node_count);
        node.begin = static_cast<std::uint32_t>(begin);
        node.end = static_cast<std::uint32_t>(end);
        tree.nodes_.push_back(node);

        if (depth >= params.max_depth || node_count < params.min_samples_split ||
            node_count < 2 * params.min_samples_leaf) {
            return node_index;
        }

        // Candidate features, ascending so the tie-break is the lowest index.
        feature_buffer.clear();
        if (params.max_features == 0 || params.max_features >= n_features) {
            feature_buffer.resize(n_features);
            std::iota(feature_buffer.begin(), feature_buffer.end(), 0);
        } else {
            feature_buffer = rng.sample_without_replacement(n_features, params.max_features);
            std::sort(feature_buffer.begin(), feature_buffer.end());
        }

        double total_sumsq = 0.0;
        for (std::size_t i = begin; i < end; ++i) {
            total_sumsq += targets[canonical[i]] * targets[canonical[i]];
        }

        bool found = false;
        std::size_t best_feature = 0;
        std::size_t best_n_left = 0;
        double best_threshold = 0.0;
        double best_sse = std::numeric_limits<double>::infinity();

        for (const std::size_t f : feature_buffer) {
            const auto order = column(f);
            double left_sum = 0.0;
            double left_sumsq = 0.0;
            for (std::size_t i = begin; i + 1 < end; ++i) {
                const double target = targets[order[i]];
                left_sum += target;
                left_sumsq += target * target;
                const double v = value_at(f, order[i]);
                const double v_next = value_at(f, order[i + 1]);
                if (v == v_next) {
                    continue;
                }
                const std::size_t n_left = i + 1 - begin;
                const std::size_t n_right = node_count - n_left;
                if (n_left < params.min_samples_leaf || n_right < params.min_samples_leaf) {
                    continue;
                }
                const double right_sum = total_sum - left_sum;
                const double right_sumsq = total_sumsq - left_sumsq;
                const double sse =
                    (left_sumsq - left_sum * left_sum / static_cast<double>(n_left)) +
                    (right_sumsq - right_sum * right_sum / static_cast<double>(n_right));
                if (sse < best_sse) {
                    found = true;
                    best_feature = f;
                    best_n_left = n_left;
                    best_threshold = 0.5 * (v + v_next);
                    best_sse = sse;
                }
            }
        }

        if (!found) {
            return node_index;
        }

        // Mark the left block of the winning order, then stably partition
        // every feature's segment so each stays sorted within both sides.
        const auto winner = column(best_feature);
        for (std::size_t i = begin; i < end; ++i) {
            goes_left[winner[i]] = i < begin + best_n_left ? 1 : 0;
        }
        for (std::size_t f = 0; f < n_features; ++f) {
            const auto order = column(f);
            std::size_t left_at = 0;
            std::size_t right_at = 0;
            for (std::size_t i = begin; i < end; ++i) {
                if (goes_left[order[i]] != 0) {
                    order[begin + left_at++] = order[i];
                } else {
                    scratch[right_at++] = order[i];
                }
            }
            std::copy(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(right_at),
                      order.begin() + static_cast<std::ptrdiff_t>(begin + best_n_left));
        }

        const std::size_t mid = begin + best_n_left;
        tree.nodes_[node_index].feature = static_cast<std::int32_t>(best_feature);
        tree.nodes_[node_index].threshold = best_threshold;
        const std::size_t left_index = build(begin, mid, depth + 1);
        tree.nodes_[node_index].left = static_cast<std::int32_t>(left_index);
        const std::size_t right_index = build(mid, end, depth + 1);
        tree.nodes_[node_index].right = static_cast<std::int32_t>(right_index);
        return node_index;
    }

    void finalize() {
        // Leaf segments of the canonical order are contiguous; rewrite the
        // row list so node ranges address it directly.
        const auto canonical = column(0);
        std::vector<std::size_t> final_rows(count);
        for (std::size_t i = 0; i < count; ++i) {
            final_rows[i] = tree.rows_[canonical[i]];
        }
        tree.rows_ = std::move(final_rows);
    }
};

void RegressionTree::fit(const Matrix& x, std::span<const double> y,
                         std::vector<std::size_t> rows, const CartParams& params, Rng& rng,
                         const FeaturePresort* presort) {
    if (rows.empty()) {
        throw EmptyTrainingSetError("cannot fit a tree on zero rows");
    }
    nodes_.clear();
    rows_ = std::move(rows);
    n_features_ = x.cols();

    Builder builder(x, y, params, rng, *this);
    if (presort != nullptr) {
        builder.prepare(*presort);
    } else {
        const FeaturePresort local(x);
        builder.prepare(local);
    }
    builder.build(0, rows_.size(), 0);
    builder.finalize();
}

std::size_t RegressionTree::leaf_of(std::span<const double> features) const {
    if (features.size() != n_features_) {
        throw DimensionMismatchError("query has " + std::to_string(features.size()) +
                                     " features, tree was fit on " + std::to_string(n_features_));
    }
    std::size_t node = 0;
    while (nodes_[node].feature >= 0) {
        const auto& n = nodes_[node];
        node = features[static_cast<std::size_t>(n.feature)] <= n.threshold
                   ? static_cast<std::size_t>(n.left)
                   : static_cast<std::size_t>(n.right);
    }
    return node;
}

double RegressionTree::predict(std::span<const double> features) const {
    return nodes_[leaf_of(features)].value;
}

std::span<const std::size_t> RegressionTree::node_rows(std::size_t node) const {
    const auto& n = nodes_[node];
    return {rows_.data() + n.begin, rows_.data() + n.end};
}

} // namespace acho
