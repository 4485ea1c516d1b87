#pragma once

#include "lebench/core.hpp"
#include "lebench/models.hpp"

#include <string>
#include <string_view>

namespace lebench {

enum class StrategyId { Random, Confidence, Entropy, Margin, Coreset, Badge, Bait };

std::string_view to_string(StrategyId id);
/// `galaxy` is a reserved id and raises NotImplemented.
StrategyId parse_strategy(std::string_view text);

enum class UncertaintyKind { Confidence, Entropy, Margin };

/// Scores over a set of candidate indices. `lower_is_better` gives the
/// selection orientation.
struct PoolScores {
    IndexList indices;
    VectorXd scores;
    bool lower_is_better = true;
};

struct SelectionResult {
    IndexList indices;           // in selection order
    std::vector<double> scores;  // audit score per selected index
    std::string strategy;
    std::string rng_stream;
    bool fell_back = false;  // degenerate input, batch drawn uniformly instead
};

SelectionResult select_random(const LabelState& state, Index batch, Rng& rng);

/// confidence: max_c p_c (lower selects); entropy: -sum p ln p (higher
/// selects); margin: top-1 minus top-2 probability (lower selects).
/// `indices` labels the rows of `probs`; empty means 0..n-1.
PoolScores uncertainty_scores(UncertaintyKind kind, const MatrixXd& probs, IndexList indices = {});

/// Best `batch` entries by orientation, ties broken by ascending index.
SelectionResult select_top(const PoolScores& scores, Index batch);

/// Greedy farthest-first k-center over rows of `features`. Centers start as
/// `labeled`; without any, the first pick is the candidate farthest from the
/// feature centroid. Audit scores are the covering distances at pick time.
SelectionResult select_coreset(const MatrixXd& features, const IndexList& labeled, Index batch);

/// Rows q_i (k) and v_i (d) of the gradient embeddings g_i = vec(q_i v_i^T),
/// with cached squared norms.
struct GradFactors {
    MatrixXd q;
    MatrixXd v;
    VectorXd q_sq;
    VectorXd v_sq;

    Index size() const { return q.rows(); }
    void refresh_norms();
};

GradFactors compute_grad_factors(const Classifier& model, const MatrixXd& X);
/// Factors from precomputed probabilities and penultimate features.
GradFactors grad_factors_from(const MatrixXd& probs, const MatrixXd& penultimate);

/// ||g_i - g_j||^2 = |q_i|^2 |v_i|^2 + |q_j|^2 |v_j|^2 - 2 (q_i . q_j)(v_i . v_j),
/// in O(k + d). Cancellation residue below 1e-12 of the norm sum is snapped to 0.
double factored_sq_dist(Index i, Index j, const GradFactors& factors);

struct BadgeOptions {
    bool first_center_by_norm = true;  // else uniform
};

/// k-means++ seeding over the gradient embeddings using factored distances.
/// Returned indices are rows of `factors`. When every embedding is zero the
/// batch is drawn uniformly and `fell_back` is set.
SelectionResult select_badge(const GradFactors& factors, Index batch, Rng& rng, const BadgeOptions& opts = {});

/// Orthonormal k x (k-1) Helmert basis of the complement of the all-ones vector.
MatrixXd helmert_basis(Index k);

/// Fisher context for BAIT over the pool rows. Example i has Fisher factor
/// U_i = x_i (x) P_i^{1/2}, with x_i the PCA-projected feature and
/// P_i = T^T (diag(pi_i) - pi_i pi_i^T) T.
struct FisherContext {
    MatrixXd T;
    MatrixXd pca_basis;   // d x d'
    double lambda = 1.0;
    MatrixXd projected;   // n x d'
    std::vector<MatrixXd> p_sqrt;  // n of (k-1) x (k-1)
    MatrixXd pool_fisher;  // mean of U_i U_i^T over the pool, D x D with D = d'(k-1)

    Index size() const { return projected.rows(); }
    Index dim() const { return projected.cols() * T.cols(); }
    /// D x (k-1)
    MatrixXd factor(Index i) const;
    /// U_i U_i^T
    MatrixXd fisher(Index i) const;
};

/// Throws RankDeficiency when the feature covariance has rank < pca_dim.
FisherContext build_fisher_context(const MatrixXd& probs, const MatrixXd& features, Index pca_dim, double lambda);

/// Symmetric PSD square root with negative eigenvalues clamped to 0.
MatrixXd psd_sqrt(const MatrixXd& m);

/// Covariance of the rows of `features` (centered), and its numerical rank.
Index covariance_rank(const MatrixXd& features);

struct BaitOptions {
    int sweeps = 1;
    Index candidates = 10;
    bool include_labeled = false;
    IndexList labeled;  // context rows, used when include_labeled
};

struct BaitTrace {
    struct Step {
        IndexList selected;
        double objective;
    };
    std::vector<Step> steps;  // initial set, then one entry per accepted swap
    int refactorizations = 0;
};

/// Swap search for trace((lambda I + sum_S U U^T)^{-1} F_pool). Starts from a
/// random set of size `batch` drawn from `candidates`, then for each member
/// in turn removes it and tries `opts.candidates` random non-members, keeping
/// the best swap only if it strictly lowers the objective. All inverse
/// updates go through rank-(k-1) Woodbury downdates and updates.
SelectionResult select_bait(const FisherContext& ctx, const IndexList& candidates, Index batch, Rng& rng,
                            const BaitOptions& opts = {}, BaitTrace* trace = nullptr);

struct StrategyOptions {
    BadgeOptions badge;
    BaitOptions bait;
    Index bait_pca_dim = 64;  // clipped to d
    double bait_lambda = 1.0;
};

/// Scores the unlabeled pool with `model` (view-0 features `pool_X`, one row
/// per pool position) and picks the next batch. Indices are pool positions.
SelectionResult select_batch(StrategyId id, const Classifier& model, const MatrixXd& pool_X,
                             const LabelState& state, Index batch, Rng& rng, const StrategyOptions& opts = {});

}  // namespace lebench
