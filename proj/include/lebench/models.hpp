#pragma once

#include "lebench/core.hpp"
#include "lebench/data.hpp"

#include <filesystem>
#include <functional>
#include <string_view>

namespace lebench {

enum class Tier : std::uint32_t { Linear = 0, Shallow = 1 };

std::string_view to_string(Tier tier);
Tier parse_tier(std::string_view text);

/// Linear probe (logits = W x + b) or one-hidden-layer ReLU network whose
/// hidden width equals the input dimension. Parameters live in one flat
/// vector so the optimizer, the gradient checker and the checkpoint codec all
/// see the same layout:
///   linear:  W (k x d, row-major), b (k)
///   shallow: W1 (d x d), b1 (d), W2 (k x d), b2 (k)
class Classifier {
public:
    using MatrixMap = Eigen::Map<MatrixXd>;
    using ConstMatrixMap = Eigen::Map<const MatrixXd>;
    using VectorMap = Eigen::Map<VectorXd>;
    using ConstVectorMap = Eigen::Map<const VectorXd>;

    Classifier(Tier tier, Index dim, Index classes);

    Tier tier() const { return tier_; }
    Index dim() const { return dim_; }
    Index classes() const { return classes_; }
    Index hidden() const { return tier_ == Tier::Shallow ? dim_ : 0; }
    static Index parameter_count(Tier tier, Index dim, Index classes);

    VectorXd& parameters() { return params_; }
    const VectorXd& parameters() const { return params_; }

    // Output layer (W, b for the probe; W2, b2 for the network).
    ConstMatrixMap head_weights() const;
    ConstVectorMap head_bias() const;
    // Hidden layer; shallow tier only.
    ConstMatrixMap hidden_weights() const;
    ConstVectorMap hidden_bias() const;
    MatrixMap head_weights();
    VectorMap head_bias();
    MatrixMap hidden_weights();
    VectorMap hidden_bias();

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias.
    void initialize(Rng& rng);

    bool operator==(const Classifier& other) const {
        return tier_ == other.tier_ && dim_ == other.dim_ && classes_ == other.classes_ &&
               params_ == other.params_;
    }

private:
    Index head_offset() const { return tier_ == Tier::Shallow ? dim_ * dim_ + dim_ : 0; }

    Tier tier_;
    Index dim_;
    Index classes_;
    VectorXd params_;
};

/// Row-wise numerically stable softmax.
template <typename Derived>
MatrixXd softmax_rows(const Eigen::MatrixBase<Derived>& logits) {
    MatrixXd out = logits;
    for (Index i = 0; i < out.rows(); ++i) {
        const double m = out.row(i).maxCoeff();
        out.row(i) = (out.row(i).array() - m).exp();
        out.row(i) /= out.row(i).sum();
    }
    return out;
}

/// Penultimate features, one row per input row: X itself for the probe,
/// ReLU(X W1^T + b1) for the network.
MatrixXd penultimate(const Classifier& model, const MatrixXd& X);
VectorXd penultimate(const Classifier& model, const VectorXd& x);

MatrixXd logits(const Classifier& model, const MatrixXd& X);
MatrixXd predict_proba(const Classifier& model, const MatrixXd& X);
VectorXd predict_proba(const Classifier& model, const VectorXd& x);

/// Row-wise argmax, ties to the lowest class index.
std::vector<std::uint32_t> argmax_rows(const MatrixXd& probs);

struct GradEmbedding {
    VectorXd q;  // k: e_yhat - p, the negated logit gradient at the predicted label
    VectorXd v;  // penultimate features
};

/// Factors of the hallucinated last-layer gradient g = vec(q v^T).
GradEmbedding grad_embedding_factors(const Classifier& model, const VectorXd& x);

/// Weighted cross-entropy and its gradient over a batch:
///   loss = sum_i w_i * CE(model(X_i), y_i) / normalizer
/// Gradient is written into `grad` (resized to the parameter count).
double loss_and_gradient(const Classifier& model, const MatrixXd& X, std::span<const std::uint32_t> targets,
                         std::span<const double> weights, double normalizer, VectorXd& grad);

struct TrainConfig {
    int epochs = 200;
    Index batch_size = 64;
    double learning_rate = 1e-2;
    double weight_decay = 1e-4;
    double momentum = 0.9;
    std::uint64_t seed = 0;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

/// Defaults per tier (the shallow network uses lr 1e-3).
TrainConfig default_train_config(Tier tier);

/// SGD with momentum and L2 weight decay, PyTorch-style update order.
class SgdMomentum {
public:
    SgdMomentum(Index n_params, const TrainConfig& cfg);
    void step(VectorXd& params, const VectorXd& grad);

private:
    VectorXd velocity_;
    double lr_, momentum_, weight_decay_;
};

/// Per-step extra loss term; adds its gradient into `grad` and returns its loss.
/// Called once per labeled minibatch with the epoch index and step index.
using ExtraLoss = std::function<double(const Classifier& model, int epoch, Index step, VectorXd& grad)>;
/// Called at the start of each epoch with the current model.
using EpochHook = std::function<void(const Classifier& model, int epoch)>;

struct TrainHooks {
    EpochHook on_epoch_start;
    ExtraLoss extra_loss;
};

struct TrainReport {
    std::vector<double> epoch_loss;  // mean supervised minibatch loss per epoch
};

/// Trains a freshly initialized classifier on store rows `labeled_rows`.
/// Epoch e trains on view (e mod v). Deterministic in cfg.seed.
Classifier train_supervised(const EmbeddingStore& store, std::span<const Index> labeled_rows, Tier tier,
                            const TrainConfig& cfg, TrainReport* report = nullptr, const TrainHooks& hooks = {});

/// Checkpoint codec: tier tag, shape header, f64 parameter block.
std::vector<std::uint8_t> encode_checkpoint(const Classifier& model);
Classifier decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const Classifier& model, const std::filesystem::path& path);
Classifier load_checkpoint(const std::filesystem::path& path);

}  // namespace lebench
