#include "lebench/strategies.hpp"

#include "lebench/log.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace lebench {

std::string_view to_string(StrategyId id) {
    switch (id) {
        case StrategyId::Random: return "random";
        case StrategyId::Confidence: return "confidence";
        case StrategyId::Entropy: return "entropy";
        case StrategyId::Margin: return "margin";
        case StrategyId::Coreset: return "coreset";
        case StrategyId::Badge: return "badge";
        case StrategyId::Bait: return "bait";
    }
    return "unknown";
}

StrategyId parse_strategy(std::string_view text) {
    for (auto id : {StrategyId::Random, StrategyId::Confidence, StrategyId::Entropy, StrategyId::Margin,
                    StrategyId::Coreset, StrategyId::Badge, StrategyId::Bait}) {
        if (text == to_string(id)) return id;
    }
    if (text == "galaxy") throw Error(ErrorKind::NotImplemented, "strategy 'galaxy' is reserved");
    throw Error(ErrorKind::UnknownStrategy, "unknown strategy '" + std::string(text) + "'");
}

namespace {

void require_batch(Index batch, std::size_t available) {
    if (batch < 0 || static_cast<std::size_t>(batch) > available)
        throw Error(ErrorKind::BatchTooLarge, "batch of " + std::to_string(batch) + " from " +
                                                  std::to_string(available) + " candidates");
}

}  // namespace

SelectionResult select_random(const LabelState& state, Index batch, Rng& rng) {
    auto pool = state.unlabeled_indices();
    require_batch(batch, pool.size());
    SelectionResult out;
    out.strategy = "random";
    out.indices = rng.sample_without_replacement(std::move(pool), static_cast<std::size_t>(batch));
    out.scores.assign(out.indices.size(), 0.0);
    return out;
}

PoolScores uncertainty_scores(UncertaintyKind kind, const MatrixXd& probs, IndexList indices) {
    if (indices.empty()) {
        indices.resize(static_cast<std::size_t>(probs.rows()));
        std::iota(indices.begin(), indices.end(), Index{0});
    }
    if (static_cast<Index>(indices.size()) != probs.rows())
        throw Error(ErrorKind::InvalidParam, "one index per probability row required");
    PoolScores out;
    out.indices = std::move(indices);
    out.scores.resize(probs.rows());
    out.lower_is_better = kind != UncertaintyKind::Entropy;
    for (Index i = 0; i < probs.rows(); ++i) {
        const auto row = probs.row(i);
        switch (kind) {
            case UncertaintyKind::Confidence: out.scores[i] = row.maxCoeff(); break;
            case UncertaintyKind::Entropy: {
                double h = 0.0;
                for (Index c = 0; c < row.size(); ++c)
                    if (row[c] > 0.0) h -= row[c] * std::log(row[c]);
                out.scores[i] = h;
                break;
            }
            case UncertaintyKind::Margin: {
                double top = -std::numeric_limits<double>::infinity(), second = top;
                for (Index c = 0; c < row.size(); ++c) {
                    if (row[c] > top) {
                        second = top;
                        top = row[c];
                    } else if (row[c] > second) {
                        second = row[c];
                    }
                }
                out.scores[i] = row.size() > 1 ? top - second : 1.0;
                break;
            }
        }
    }
    return out;
}

SelectionResult select_top(const PoolScores& scores, Index batch) {
    require_batch(batch, scores.indices.size());
    std::vector<std::size_t> order(scores.indices.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto better = [&](std::size_t a, std::size_t b) {
        const double sa = scores.scores[static_cast<Index>(a)], sb = scores.scores[static_cast<Index>(b)];
        if (sa != sb) return scores.lower_is_better ? sa < sb : sa > sb;
        return scores.indices[a] < scores.indices[b];
    };
    std::partial_sort(order.begin(), order.begin() + batch, order.end(), better);
    SelectionResult out;
    for (Index t = 0; t < batch; ++t) {
        const auto pos = order[static_cast<std::size_t>(t)];
        out.indices.push_back(scores.indices[pos]);
        out.scores.push_back(scores.scores[static_cast<Index>(pos)]);
    }
    return out;
}

SelectionResult select_coreset(const MatrixXd& features, const IndexList& labeled, Index batch) {
    const Index n = features.rows();
    std::vector<bool> is_center(static_cast<std::size_t>(n), false);
    for (Index c : labeled) {
        if (c < 0 || c >= n) throw Error(ErrorKind::IndexOutOfRange, "labeled index " + std::to_string(c));
        is_center[static_cast<std::size_t>(c)] = true;
    }
    require_batch(batch, static_cast<std::size_t>(n) -
                             static_cast<std::size_t>(std::count(is_center.begin(), is_center.end(), true)));

    VectorXd min_sq = VectorXd::Constant(n, std::numeric_limits<double>::infinity());
    auto absorb = [&](Index center) {
        min_sq = min_sq.cwiseMin((features.rowwise() - features.row(center)).rowwise().squaredNorm());
    };
    for (Index c = 0; c < n; ++c)
        if (is_center[static_cast<std::size_t>(c)]) absorb(c);

    SelectionResult out;
    out.strategy = "coreset";
    if (labeled.empty() && batch > 0) {
        const Eigen::RowVectorXd centroid = features.colwise().mean();
        const VectorXd from_centroid = (features.rowwise() - centroid).rowwise().squaredNorm();
        Index first = 0;
        for (Index i = 1; i < n; ++i)
            if (from_centroid[i] > from_centroid[first]) first = i;
        out.indices.push_back(first);
        out.scores.push_back(std::sqrt(from_centroid[first]));
        is_center[static_cast<std::size_t>(first)] = true;
        absorb(first);
    }
    while (static_cast<Index>(out.indices.size()) < batch) {
        Index best = -1;
        for (Index i = 0; i < n; ++i) {
            if (is_center[static_cast<std::size_t>(i)]) continue;
            if (best < 0 || min_sq[i] > min_sq[best]) best = i;
        }
        out.indices.push_back(best);
        out.scores.push_back(std::sqrt(min_sq[best]));
        is_center[static_cast<std::size_t>(best)] = true;
        absorb(best);
    }
    return out;
}

void GradFactors::refresh_norms() {
    q_sq = q.rowwise().squaredNorm();
    v_sq = v.rowwise().squaredNorm();
}

GradFactors grad_factors_from(const MatrixXd& probs, const MatrixXd& penultimate) {
    GradFactors f;
    f.q = -probs;
    const auto yhat = argmax_rows(probs);
    for (Index i = 0; i < probs.rows(); ++i) f.q(i, yhat[static_cast<std::size_t>(i)]) += 1.0;
    f.v = penultimate;
    f.refresh_norms();
    return f;
}

GradFactors compute_grad_factors(const Classifier& model, const MatrixXd& X) {
    const MatrixXd feats = penultimate(model, X);
    MatrixXd z = feats * model.head_weights().transpose();
    z.rowwise() += model.head_bias().transpose();
    return grad_factors_from(softmax_rows(z), feats);
}

double factored_sq_dist(Index i, Index j, const GradFactors& f) {
    if (i == j) return 0.0;
    const double a = f.q_sq[i] * f.v_sq[i];
    const double b = f.q_sq[j] * f.v_sq[j];
    const double cross = f.q.row(i).dot(f.q.row(j)) * f.v.row(i).dot(f.v.row(j));
    const double d = (a + b) - 2.0 * cross;
    return d <= 1e-12 * (a + b) ? 0.0 : d;
}

SelectionResult select_badge(const GradFactors& factors, Index batch, Rng& rng, const BadgeOptions& opts) {
    const Index n = factors.size();
    require_batch(batch, static_cast<std::size_t>(n));
    SelectionResult out;
    out.strategy = "badge";
    if (batch == 0) return out;

    std::vector<double> weights(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i)
        weights[static_cast<std::size_t>(i)] = opts.first_center_by_norm ? factors.q_sq[i] * factors.v_sq[i] : 1.0;
    const bool all_zero = (factors.q_sq.array() * factors.v_sq.array()).maxCoeff() == 0.0;
    const auto first = all_zero ? std::nullopt : rng.categorical(weights);
    if (!first) {
        warn("BADGE: every gradient embedding is zero, falling back to uniform selection");
        IndexList rows(static_cast<std::size_t>(n));
        std::iota(rows.begin(), rows.end(), Index{0});
        out.indices = rng.sample_without_replacement(std::move(rows), static_cast<std::size_t>(batch));
        out.scores.assign(out.indices.size(), 0.0);
        out.fell_back = true;
        return out;
    }

    std::vector<bool> chosen(static_cast<std::size_t>(n), false);
    std::vector<double> min_sq(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
    auto take = [&](Index c, double score) {
        out.indices.push_back(c);
        out.scores.push_back(score);
        chosen[static_cast<std::size_t>(c)] = true;
        for (Index i = 0; i < n; ++i) {
            const auto s = static_cast<std::size_t>(i);
            min_sq[s] = chosen[s] ? 0.0 : std::min(min_sq[s], factored_sq_dist(i, c, factors));
        }
    };
    take(*first, weights[static_cast<std::size_t>(*first)]);
    while (static_cast<Index>(out.indices.size()) < batch) {
        auto next = rng.categorical(min_sq);
        if (!next) {
            // every remaining embedding coincides with a chosen center
            out.fell_back = true;
            IndexList rest;
            for (Index i = 0; i < n; ++i)
                if (!chosen[static_cast<std::size_t>(i)]) rest.push_back(i);
            next = rest[rng.below(rest.size())];
        }
        take(*next, min_sq[static_cast<std::size_t>(*next)]);
    }
    return out;
}

MatrixXd helmert_basis(Index k) {
    if (k < 2) throw Error(ErrorKind::InvalidParam, "Helmert basis needs k >= 2");
    MatrixXd T = MatrixXd::Zero(k, k - 1);
    for (Index j = 1; j < k; ++j) {
        const double scale = 1.0 / std::sqrt(static_cast<double>(j * (j + 1)));
        for (Index r = 0; r < j; ++r) T(r, j - 1) = scale;
        T(j, j - 1) = -static_cast<double>(j) * scale;
    }
    return T;
}

MatrixXd psd_sqrt(const MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
    const Eigen::VectorXd roots = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * roots.asDiagonal() * eig.eigenvectors().transpose();
}

Index covariance_rank(const MatrixXd& features) {
    const Eigen::MatrixXd centered = features.rowwise() - features.colwise().mean();
    const Eigen::MatrixXd cov = centered.transpose() * centered / std::max<double>(1.0, features.rows() - 1.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov, Eigen::EigenvaluesOnly);
    const double top = eig.eigenvalues().maxCoeff();
    if (!(top > 0.0)) return 0;
    return (eig.eigenvalues().array() > 1e-10 * top).count();
}

MatrixXd FisherContext::factor(Index i) const {
    const Index km1 = T.cols();
    const Index dp = projected.cols();
    MatrixXd U(dp * km1, km1);
    for (Index r = 0; r < dp; ++r) U.middleRows(r * km1, km1) = projected(i, r) * p_sqrt[static_cast<std::size_t>(i)];
    return U;
}

MatrixXd FisherContext::fisher(Index i) const {
    const MatrixXd U = factor(i);
    return U * U.transpose();
}

FisherContext build_fisher_context(const MatrixXd& probs, const MatrixXd& features, Index pca_dim, double lambda) {
    const Index n = features.rows(), d = features.cols(), k = probs.cols();
    if (probs.rows() != n) throw Error(ErrorKind::InvalidParam, "probability and feature rows differ");
    if (pca_dim < 1 || pca_dim > d) throw Error(ErrorKind::InvalidParam, "pca_dim must lie in [1, d]");
    if (!(lambda > 0.0)) throw Error(ErrorKind::InvalidParam, "lambda must be positive");

    FisherContext ctx;
    ctx.lambda = lambda;
    ctx.T = helmert_basis(k);

    const Eigen::MatrixXd centered = features.rowwise() - features.colwise().mean();
    const Eigen::MatrixXd cov = centered.transpose() * centered / std::max<double>(1.0, n - 1.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    const double top = eig.eigenvalues().maxCoeff();
    const Index rank = top > 0.0 ? (eig.eigenvalues().array() > 1e-10 * top).count() : 0;
    if (rank < pca_dim)
        throw Error(ErrorKind::RankDeficiency, "feature covariance rank " + std::to_string(rank) +
                                                   " is below the PCA dimension " + std::to_string(pca_dim));
    // eigenvalues ascend; take the trailing pca_dim columns, largest first
    ctx.pca_basis = eig.eigenvectors().rightCols(pca_dim).rowwise().reverse();
    ctx.projected = features * ctx.pca_basis;

    const Index km1 = k - 1;
    ctx.p_sqrt.reserve(static_cast<std::size_t>(n));
    Eigen::MatrixXd sum_fisher = Eigen::MatrixXd::Zero(pca_dim * km1, pca_dim * km1);
    for (Index i = 0; i < n; ++i) {
        const Eigen::VectorXd pi = probs.row(i).transpose();
        const Eigen::MatrixXd cov_pi = Eigen::MatrixXd(pi.asDiagonal()) - pi * pi.transpose();
        const Eigen::MatrixXd P = ctx.T.transpose() * cov_pi * ctx.T;
        ctx.p_sqrt.push_back(psd_sqrt(P));
        // block (r, s) of x x^T (x) P is x_r x_s P
        const MatrixXd P_rebuilt = ctx.p_sqrt.back() * ctx.p_sqrt.back();
        for (Index r = 0; r < pca_dim; ++r)
            for (Index s = 0; s <= r; ++s)
                sum_fisher.block(r * km1, s * km1, km1, km1) += ctx.projected(i, r) * ctx.projected(i, s) * P_rebuilt;
    }
    for (Index r = 0; r < pca_dim; ++r)
        for (Index s = 0; s < r; ++s)
            sum_fisher.block(s * km1, r * km1, km1, km1) = sum_fisher.block(r * km1, s * km1, km1, km1).transpose();
    ctx.pool_fisher = sum_fisher / static_cast<double>(n);
    return ctx;
}

namespace {

// (A - U U^T)^{-1} from A^{-1}; nullopt when the inner system is not safely PD.
std::optional<MatrixXd> woodbury_remove(const MatrixXd& A_inv, const MatrixXd& U) {
    const MatrixXd W = A_inv * U;
    const Eigen::MatrixXd inner = Eigen::MatrixXd::Identity(U.cols(), U.cols()) - U.transpose() * W;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(inner);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.rcond() < 1e-10) return std::nullopt;
    return MatrixXd(A_inv + W * ldlt.solve(W.transpose()));
}

MatrixXd dense_inverse(const FisherContext& ctx, const IndexList& members, const IndexList& extra) {
    Eigen::MatrixXd A = ctx.lambda * Eigen::MatrixXd::Identity(ctx.dim(), ctx.dim());
    for (Index i : members) A += ctx.fisher(i);
    for (Index i : extra) A += ctx.fisher(i);
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    return llt.solve(Eigen::MatrixXd::Identity(ctx.dim(), ctx.dim()));
}

double trace_product(const MatrixXd& A, const MatrixXd& B) {
    // trace(A B) for symmetric B
    return A.cwiseProduct(B).sum();
}

}  // namespace

SelectionResult select_bait(const FisherContext& ctx, const IndexList& candidates, Index batch, Rng& rng,
                            const BaitOptions& opts, BaitTrace* trace) {
    require_batch(batch, candidates.size());
    SelectionResult out;
    out.strategy = "bait";
    IndexList selected = rng.sample_without_replacement(candidates, static_cast<std::size_t>(batch));
    const IndexList prior = opts.include_labeled ? opts.labeled : IndexList{};

    MatrixXd A_inv = dense_inverse(ctx, selected, prior);
    double objective = trace_product(A_inv, ctx.pool_fisher);
    if (trace) trace->steps.push_back({selected, objective});

    std::vector<bool> member(static_cast<std::size_t>(ctx.size()), false);
    for (Index i : selected) member[static_cast<std::size_t>(i)] = true;

    for (int sweep = 0; sweep < opts.sweeps; ++sweep) {
        for (Index pos = 0; pos < batch; ++pos) {
            const Index leaving = selected[static_cast<std::size_t>(pos)];
            IndexList outside;
            for (Index c : candidates)
                if (!member[static_cast<std::size_t>(c)]) outside.push_back(c);
            if (outside.empty()) break;
            const auto proposals = rng.sample_without_replacement(
                std::move(outside), std::min<std::size_t>(static_cast<std::size_t>(opts.candidates), candidates.size() - selected.size()));

            auto removed = woodbury_remove(A_inv, ctx.factor(leaving));
            if (!removed) {
                IndexList rest = selected;
                rest.erase(rest.begin() + pos);
                removed = dense_inverse(ctx, rest, prior);
                if (trace) ++trace->refactorizations;
            }
            const MatrixXd& R_inv = *removed;
            const double removed_objective = trace_product(R_inv, ctx.pool_fisher);

            double best_objective = objective;
            Index best = -1;
            MatrixXd best_W, best_inner_inv;
            for (Index c : proposals) {
                const MatrixXd U = ctx.factor(c);
                const MatrixXd W = R_inv * U;
                const Eigen::MatrixXd inner = Eigen::MatrixXd::Identity(U.cols(), U.cols()) + U.transpose() * W;
                Eigen::LLT<Eigen::MatrixXd> llt(inner);
                if (llt.info() != Eigen::Success) continue;
                const MatrixXd inner_inv = llt.solve(Eigen::MatrixXd::Identity(U.cols(), U.cols()));
                // trace((R + U U^T)^{-1} F) = trace(R^{-1} F) - trace(inner^{-1} W^T F W)
                const MatrixXd FW = ctx.pool_fisher * W;
                const double candidate_objective = removed_objective - trace_product(inner_inv, W.transpose() * FW);
                if (candidate_objective < best_objective) {
                    best_objective = candidate_objective;
                    best = c;
                    best_W = W;
                    best_inner_inv = inner_inv;
                }
            }
            if (best < 0) continue;
            A_inv = R_inv - best_W * best_inner_inv * best_W.transpose();
            objective = best_objective;
            member[static_cast<std::size_t>(leaving)] = false;
            member[static_cast<std::size_t>(best)] = true;
            selected[static_cast<std::size_t>(pos)] = best;
            if (trace) trace->steps.push_back({selected, objective});
        }
    }
    out.indices = selected;
    out.scores.assign(selected.size(), objective);
    return out;
}

SelectionResult select_batch(StrategyId id, const Classifier& model, const MatrixXd& pool_X,
                             const LabelState& state, Index batch, Rng& rng, const StrategyOptions& opts) {
    if (pool_X.rows() != state.n_pool()) throw Error(ErrorKind::InvalidParam, "pool feature rows != pool size");
    const IndexList unlabeled = state.unlabeled_indices();
    require_batch(batch, unlabeled.size());

    auto to_pool = [&](SelectionResult r) {
        for (auto& i : r.indices) i = unlabeled[static_cast<std::size_t>(i)];
        return r;
    };
    auto rows_of = [](const MatrixXd& m, const IndexList& rows) {
        MatrixXd out(static_cast<Index>(rows.size()), m.cols());
        for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Index>(r)) = m.row(rows[r]);
        return out;
    };

    SelectionResult result;
    switch (id) {
        case StrategyId::Random: result = select_random(state, batch, rng); break;
        case StrategyId::Confidence:
        case StrategyId::Entropy:
        case StrategyId::Margin: {
            const auto kind = id == StrategyId::Confidence ? UncertaintyKind::Confidence
                              : id == StrategyId::Entropy  ? UncertaintyKind::Entropy
                                                           : UncertaintyKind::Margin;
            const MatrixXd probs = predict_proba(model, rows_of(pool_X, unlabeled));
            result = select_top(uncertainty_scores(kind, probs, unlabeled), batch);
            break;
        }
        case StrategyId::Coreset:
            result = select_coreset(penultimate(model, pool_X), state.labeled_indices(), batch);
            break;
        case StrategyId::Badge:
            result = to_pool(select_badge(compute_grad_factors(model, rows_of(pool_X, unlabeled)), batch, rng, opts.badge));
            break;
        case StrategyId::Bait: {
            const MatrixXd feats = penultimate(model, pool_X);
            const MatrixXd probs = predict_proba(model, pool_X);
            Index pca_dim = std::min(opts.bait_pca_dim, feats.cols());
            FisherContext ctx = [&] {
                try {
                    return build_fisher_context(probs, feats, pca_dim, opts.bait_lambda);
                } catch (const Error& e) {
                    if (e.kind() != ErrorKind::RankDeficiency) throw;
                    pca_dim = std::max<Index>(1, covariance_rank(feats));
                    warn(std::string(e.what()) + "; reducing the PCA dimension to " + std::to_string(pca_dim));
                    return build_fisher_context(probs, feats, pca_dim, opts.bait_lambda);
                }
            }();
            if (ctx.pool_fisher.isZero(0.0)) {
                warn("BAIT: pool Fisher information is zero, falling back to uniform selection");
                result = select_random(state, batch, rng);
                result.fell_back = true;
                break;
            }
            BaitOptions bait = opts.bait;
            bait.labeled = state.labeled_indices();
            result = select_bait(ctx, unlabeled, batch, rng, bait);
            break;
        }
    }
    result.strategy = std::string(to_string(id));
    return result;
}

}  // namespace lebench
