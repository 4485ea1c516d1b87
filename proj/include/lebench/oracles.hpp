#pragma once

// Reference implementations that deliberately avoid the optimized code paths
// they check: explicit gradient vectors for BADGE, dense Kronecker products and
// full solves for BAIT, per-class loops for metrics, exhaustive search for
// k-center, finite differences for gradients.

#include "lebench/metrics.hpp"
#include "lebench/models.hpp"
#include "lebench/strategies.hpp"

namespace lebench::oracle {

/// vec(q v^T) for every row, materialized as an n x (k d) matrix.
MatrixXd materialize_gradients(const MatrixXd& q, const MatrixXd& v);

double naive_sq_dist(const MatrixXd& g, Index i, Index j);

/// k-means++ seeding over explicit vectors, consuming `rng` exactly like the
/// factored implementation.
IndexList naive_kmeanspp(const MatrixXd& g, Index batch, Rng& rng, bool first_by_norm = true);

/// x x^T (x) P with P = T^T (diag(pi) - pi pi^T) T, via Eigen's Kronecker product.
MatrixXd kronecker_fisher(const VectorXd& x, const VectorXd& pi, const MatrixXd& T);

/// trace((lambda I + sum_{i in S} F_i)^{-1} F_bar) by dense Cholesky solve, where
/// F_i are built by kronecker_fisher on the context's projected features.
double dense_bait_objective(const MatrixXd& projected, const MatrixXd& probs, const IndexList& selected,
                            double lambda);

/// Balanced accuracy and macro F1 straight from (y, yhat) pairs.
struct MetricPair {
    double balanced;
    double macro_f1;
};
MetricPair brute_force_metrics(std::span<const std::uint32_t> y, std::span<const std::uint32_t> yhat, std::uint32_t k);

/// Covering radius of `centers` over all rows.
double covering_radius(const MatrixXd& points, const IndexList& centers);

/// Minimum covering radius over every subset of `batch` rows.
double optimal_kcenter_radius(const MatrixXd& points, Index batch);

/// Central finite-difference gradient of the weighted cross-entropy.
VectorXd numeric_gradient(const Classifier& model, const MatrixXd& X, std::span<const std::uint32_t> targets,
                          std::span<const double> weights, double normalizer, double step = 1e-6);

/// Central finite-difference gradient of CE(softmax(z), label) with respect to z.
VectorXd numeric_logit_gradient(const VectorXd& z, Index label, double step = 1e-6);

}  // namespace lebench::oracle
