#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <utility>

#include "acho/matrix.hpp"

namespace acho {

enum class PointKind { GbmSquared, Knn };
enum class QuantileKind { GbmPinball, Qrf };

/// Capacity knobs shared by the tree and neighbor estimators. Fields that do
/// not apply to a given kind are ignored by its fit routine.
struct TreeParams {
    std::size_t n_trees = 100;
    std::size_t max_depth = 3;
    std::size_t min_samples_leaf = 1;
    double learning_rate = 0.1;       // gbm
    double subsample_fraction = 1.0;  // gbm
    std::size_t k = 5;                // knn
    bool bootstrap = true;            // qrf
};

TreeParams default_params(PointKind kind);
TreeParams default_params(QuantileKind kind);

/// Pinball loss of a signed residual u = y - prediction at quantile level
/// beta: u*beta when u > 0, u*(beta-1) otherwise.
double pinball_loss(double residual, double beta);

/// Highest-order-statistic empirical quantile: the value at 1-based index
/// ceil(beta * n) of the sorted multiset.
double empirical_quantile(std::span<const double> values, double beta);

/// Conditional-mean estimator over encoded configurations.
class PointEstimator {
public:
    virtual ~PointEstimator() = default;
    double predict(std::span<const double> features) const;
    std::size_t feature_count() const { return n_features_; }
    PointKind kind() const { return kind_; }

protected:
    PointEstimator(PointKind kind, std::size_t n_features)
        : kind_(kind), n_features_(n_features) {}
    virtual double predict_impl(std::span<const double> features) const = 0;

    PointKind kind_;
    std::size_t n_features_;
};

/// Conditional-quantile estimator. A pinball-loss GBM answers only its
/// fit-time level; a quantile regression forest answers any level in (0,1)
/// from one fit.
class QuantileEstimator {
public:
    virtual ~QuantileEstimator() = default;
    double predict(std::span<const double> features, double beta) const;
    /// Both levels in one pass (the forest shares its leaf-weight work).
    virtual std::pair<double, double> predict_pair(std::span<const double> features,
                                                   double beta_lo, double beta_hi) const;
    std::size_t feature_count() const { return n_features_; }
    QuantileKind kind() const { return kind_; }

protected:
    QuantileEstimator(QuantileKind kind, std::size_t n_features)
        : kind_(kind), n_features_(n_features) {}
    virtual double predict_impl(std::span<const double> features, double beta) const = 0;
    void check_query(std::span<const double> features, double beta) const;

    QuantileKind kind_;
    std::size_t n_features_;
};

std::unique_ptr<PointEstimator> fit_point(PointKind kind, const Matrix& x,
                                          std::span<const double> y, const TreeParams& params,
                                          std::uint64_t seed);

std::unique_ptr<QuantileEstimator> fit_quantile(QuantileKind kind, const Matrix& x,
                                                std::span<const double> y, double beta,
                                                const TreeParams& params, std::uint64_t seed);

} // namespace acho
