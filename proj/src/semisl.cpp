#include "lebench/semisl.hpp"

#include "lebench/log.hpp"

#include <algorithm>

namespace lebench {

std::string_view to_string(SemiMethod method) {
    switch (method) {
        case SemiMethod::SupervisedOnly: return "supervised_only";
        case SemiMethod::Pseudolabel: return "pseudolabel";
        case SemiMethod::FlexMatch: return "flexmatch";
        case SemiMethod::Consistency: return "consistency";
    }
    return "unknown";
}

SemiMethod parse_semi_method(std::string_view text) {
    if (text == "supervised_only") return SemiMethod::SupervisedOnly;
    if (text == "pseudolabel") return SemiMethod::Pseudolabel;
    if (text == "flexmatch") return SemiMethod::FlexMatch;
    if (text == "consistency") return SemiMethod::Consistency;
    if (text == "freematch" || text == "softmatch")
        throw Error(ErrorKind::NotImplemented, "semi-SL method '" + std::string(text) + "' is reserved");
    throw Error(ErrorKind::UnknownMethod, "unknown semi-SL method '" + std::string(text) + "'");
}

PseudoBatch assign_pseudolabels(const MatrixXd& probs, const std::vector<bool>& unlabeled,
                                const VectorXd& thresholds) {
    if (static_cast<Index>(unlabeled.size()) != probs.rows() || thresholds.size() != probs.cols())
        throw Error(ErrorKind::InvalidParam, "pseudolabel inputs have inconsistent shapes");
    PseudoBatch batch;
    const auto yhat = argmax_rows(probs);
    for (Index i = 0; i < probs.rows(); ++i) {
        if (!unlabeled[static_cast<std::size_t>(i)]) continue;
        const auto c = yhat[static_cast<std::size_t>(i)];
        if (probs(i, c) >= thresholds[c]) {
            batch.indices.push_back(i);
            batch.labels.push_back(c);
            batch.weights.push_back(1.0);
        }
    }
    return batch;
}

ThresholdState update_flexmatch_thresholds(const MatrixXd& probs, const std::vector<bool>& unlabeled,
                                           double base_tau) {
    if (!(base_tau > 0.0 && base_tau < 1.0)) throw Error(ErrorKind::InvalidParam, "base_tau must lie in (0,1)");
    const Index k = probs.cols();
    ThresholdState state;
    state.base_tau = base_tau;
    state.sigma.assign(static_cast<std::size_t>(k), 0);
    const auto yhat = argmax_rows(probs);
    for (Index i = 0; i < probs.rows(); ++i) {
        if (!unlabeled[static_cast<std::size_t>(i)]) continue;
        const auto c = yhat[static_cast<std::size_t>(i)];
        if (probs(i, c) >= base_tau) ++state.sigma[c];
        else ++state.unused;
    }
    const Index max_sigma = *std::max_element(state.sigma.begin(), state.sigma.end());
    if (max_sigma == 0) {
        state.per_class_tau = VectorXd::Constant(k, base_tau);
        return state;
    }
    const double denom = static_cast<double>(std::max(max_sigma, state.unused));
    state.per_class_tau.resize(k);
    for (Index c = 0; c < k; ++c)
        state.per_class_tau[c] = base_tau * static_cast<double>(state.sigma[static_cast<std::size_t>(c)]) / denom;
    return state;
}

void SemiConfig::validate() const {
    if (lambda_u < 0.0) throw Error(ErrorKind::InvalidParam, "lambda_u must be >= 0");
    if (fixed_tau < 0.0 || fixed_tau > 1.0) throw Error(ErrorKind::InvalidParam, "fixed_tau must lie in [0,1]");
    if (!(base_tau > 0.0 && base_tau < 1.0)) throw Error(ErrorKind::InvalidParam, "base_tau must lie in (0,1)");
    if (unlabeled_ratio < 1) throw Error(ErrorKind::InvalidParam, "unlabeled_ratio must be >= 1");
}

Classifier train_semi_supervised(const EmbeddingStore& store, std::span<const Index> labeled_rows,
                                 std::span<const Index> unlabeled_rows, SemiMethod method, Tier tier,
                                 const TrainConfig& cfg, const SemiConfig& semi, TrainReport* report) {
    semi.validate();
    if (labeled_rows.empty()) throw Error(ErrorKind::EmptyLabelSet, "no labeled examples to train on");
    if (method == SemiMethod::SupervisedOnly || semi.lambda_u == 0.0 || unlabeled_rows.empty())
        return train_supervised(store, labeled_rows, tier, cfg, report);

    if (method == SemiMethod::Consistency && store.v() < 2) {
        warn("consistency training needs a second view; store has one, falling back to pseudolabel");
        method = SemiMethod::Pseudolabel;
    }

    const Index n_unl = static_cast<Index>(unlabeled_rows.size());
    const MatrixXd target_view = store.features(0, unlabeled_rows);
    std::vector<MatrixXd> loss_views;
    if (method == SemiMethod::Pseudolabel) {
        loss_views.push_back(target_view);
    } else {
        for (Index v = 1; v < store.v(); ++v) loss_views.push_back(store.features(v, unlabeled_rows));
    }

    // per-epoch pseudo-label targets, indexed by unlabeled position
    std::vector<bool> all_unlabeled(static_cast<std::size_t>(n_unl), true);
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(n_unl), 0);
    std::vector<std::uint32_t> targets(static_cast<std::size_t>(n_unl), 0);
    const VectorXd fixed = VectorXd::Constant(store.k, semi.fixed_tau);
    int current_epoch = 0;

    Rng unl_rng(cfg.seed, "semisl/unlabeled");
    std::vector<Index> order(static_cast<std::size_t>(n_unl));
    for (Index i = 0; i < n_unl; ++i) order[static_cast<std::size_t>(i)] = i;
    unl_rng.shuffle(order);
    std::size_t cursor = 0;
    const Index unl_batch = std::min(n_unl, cfg.batch_size * semi.unlabeled_ratio);

    TrainHooks hooks;
    hooks.on_epoch_start = [&](const Classifier& model, int epoch) {
        current_epoch = epoch;
        const MatrixXd probs = predict_proba(model, target_view);
        VectorXd thresholds = fixed;
        if (method == SemiMethod::FlexMatch) {
            auto state = update_flexmatch_thresholds(probs, all_unlabeled, semi.base_tau);
            thresholds = state.per_class_tau;
            if (semi.threshold_trace) semi.threshold_trace->push_back(std::move(state));
        }
        const auto batch = assign_pseudolabels(probs, all_unlabeled, thresholds);
        std::fill(mask.begin(), mask.end(), 0);
        for (std::size_t t = 0; t < batch.indices.size(); ++t) {
            const auto i = static_cast<std::size_t>(batch.indices[t]);
            mask[i] = 1;
            targets[i] = batch.labels[t];
        }
    };
    VectorXd unl_grad;
    std::vector<double> unit_weights;
    hooks.extra_loss = [&](const Classifier& model, int, Index, VectorXd& grad) {
        const MatrixXd& feats = loss_views[static_cast<std::size_t>(current_epoch) % loss_views.size()];
        IndexList chosen;
        for (Index t = 0; t < unl_batch; ++t) {
            if (cursor == order.size()) {
                unl_rng.shuffle(order);
                cursor = 0;
            }
            const Index i = order[cursor++];
            if (mask[static_cast<std::size_t>(i)]) chosen.push_back(i);
        }
        if (chosen.empty()) return 0.0;
        MatrixXd Xu(static_cast<Index>(chosen.size()), feats.cols());
        std::vector<std::uint32_t> yu(chosen.size());
        for (std::size_t r = 0; r < chosen.size(); ++r) {
            Xu.row(static_cast<Index>(r)) = feats.row(chosen[r]);
            yu[r] = targets[static_cast<std::size_t>(chosen[r])];
        }
        unit_weights.assign(chosen.size(), 1.0);
        // masked mean over the full unlabeled minibatch
        const double loss = loss_and_gradient(model, Xu, yu, unit_weights, static_cast<double>(unl_batch), unl_grad);
        grad += semi.lambda_u * unl_grad;
        return semi.lambda_u * loss;
    };
    return train_supervised(store, labeled_rows, tier, cfg, report, hooks);
}

}  // namespace lebench
