#include "lebench/models.hpp"

#include "lebench/log.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace lebench {

std::string_view to_string(Tier tier) { return tier == Tier::Linear ? "linear" : "shallow"; }

Tier parse_tier(std::string_view text) {
    if (text == "linear") return Tier::Linear;
    if (text == "shallow") return Tier::Shallow;
    throw Error(ErrorKind::ConfigError, "unknown tier '" + std::string(text) + "'");
}

Index Classifier::parameter_count(Tier tier, Index dim, Index classes) {
    const Index head = classes * dim + classes;
    return tier == Tier::Shallow ? dim * dim + dim + head : head;
}

Classifier::Classifier(Tier tier, Index dim, Index classes)
    : tier_(tier), dim_(dim), classes_(classes), params_(VectorXd::Zero(parameter_count(tier, dim, classes))) {
    if (dim < 1 || classes < 1) throw Error(ErrorKind::InvalidParam, "classifier needs dim >= 1 and classes >= 1");
}

Classifier::ConstMatrixMap Classifier::head_weights() const {
    return ConstMatrixMap(params_.data() + head_offset(), classes_, dim_);
}
Classifier::ConstVectorMap Classifier::head_bias() const {
    return ConstVectorMap(params_.data() + head_offset() + classes_ * dim_, classes_);
}
Classifier::ConstMatrixMap Classifier::hidden_weights() const {
    if (tier_ != Tier::Shallow) throw Error(ErrorKind::InvalidParam, "linear probe has no hidden layer");
    return ConstMatrixMap(params_.data(), dim_, dim_);
}
Classifier::ConstVectorMap Classifier::hidden_bias() const {
    if (tier_ != Tier::Shallow) throw Error(ErrorKind::InvalidParam, "linear probe has no hidden layer");
    return ConstVectorMap(params_.data() + dim_ * dim_, dim_);
}
Classifier::MatrixMap Classifier::head_weights() {
    return MatrixMap(params_.data() + head_offset(), classes_, dim_);
}
Classifier::VectorMap Classifier::head_bias() {
    return VectorMap(params_.data() + head_offset() + classes_ * dim_, classes_);
}
Classifier::MatrixMap Classifier::hidden_weights() {
    if (tier_ != Tier::Shallow) throw Error(ErrorKind::InvalidParam, "linear probe has no hidden layer");
    return MatrixMap(params_.data(), dim_, dim_);
}
Classifier::VectorMap Classifier::hidden_bias() {
    if (tier_ != Tier::Shallow) throw Error(ErrorKind::InvalidParam, "linear probe has no hidden layer");
    return VectorMap(params_.data() + dim_ * dim_, dim_);
}

void Classifier::initialize(Rng& rng) {
    // every layer here has fan_in == dim
    const double bound = 1.0 / std::sqrt(static_cast<double>(dim_));
    for (Index i = 0; i < params_.size(); ++i) params_[i] = bound * (2.0 * rng.uniform() - 1.0);
}

MatrixXd penultimate(const Classifier& model, const MatrixXd& X) {
    if (model.tier() == Tier::Linear) return X;
    MatrixXd H = X * model.hidden_weights().transpose();
    H.rowwise() += model.hidden_bias().transpose();
    return H.cwiseMax(0.0);
}

VectorXd penultimate(const Classifier& model, const VectorXd& x) {
    if (model.tier() == Tier::Linear) return x;
    return (model.hidden_weights() * x + model.hidden_bias()).cwiseMax(0.0);
}

MatrixXd logits(const Classifier& model, const MatrixXd& X) {
    MatrixXd Z = penultimate(model, X) * model.head_weights().transpose();
    Z.rowwise() += model.head_bias().transpose();
    return Z;
}

MatrixXd predict_proba(const Classifier& model, const MatrixXd& X) { return softmax_rows(logits(model, X)); }

VectorXd predict_proba(const Classifier& model, const VectorXd& x) {
    const MatrixXd row = x.transpose();
    return predict_proba(model, row).row(0).transpose();
}

std::vector<std::uint32_t> argmax_rows(const MatrixXd& probs) {
    std::vector<std::uint32_t> out(static_cast<std::size_t>(probs.rows()));
    for (Index i = 0; i < probs.rows(); ++i) {
        Index best = 0;
        for (Index c = 1; c < probs.cols(); ++c)
            if (probs(i, c) > probs(i, best)) best = c;
        out[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(best);
    }
    return out;
}

GradEmbedding grad_embedding_factors(const Classifier& model, const VectorXd& x) {
    GradEmbedding g;
    g.v = penultimate(model, x);
    const MatrixXd row = g.v.transpose();
    MatrixXd z = row * model.head_weights().transpose();
    z.row(0) += model.head_bias().transpose();
    const VectorXd p = softmax_rows(z).row(0).transpose();
    Index yhat = 0;
    for (Index c = 1; c < p.size(); ++c)
        if (p[c] > p[yhat]) yhat = c;
    g.q = -p;
    g.q[yhat] += 1.0;
    return g;
}

double loss_and_gradient(const Classifier& model, const MatrixXd& X, std::span<const std::uint32_t> targets,
                         std::span<const double> weights, double normalizer, VectorXd& grad) {
    const Index b = X.rows();
    grad.setZero(model.parameters().size());
    if (b == 0) return 0.0;

    MatrixXd pre;  // hidden pre-activations
    MatrixXd H;
    if (model.tier() == Tier::Shallow) {
        pre = X * model.hidden_weights().transpose();
        pre.rowwise() += model.hidden_bias().transpose();
        H = pre.cwiseMax(0.0);
    }
    const MatrixXd& features = model.tier() == Tier::Shallow ? H : X;
    MatrixXd Z = features * model.head_weights().transpose();
    Z.rowwise() += model.head_bias().transpose();

    double loss = 0.0;
    MatrixXd delta = softmax_rows(Z);
    for (Index i = 0; i < b; ++i) {
        const auto y = static_cast<Index>(targets[static_cast<std::size_t>(i)]);
        const double w = weights[static_cast<std::size_t>(i)] / normalizer;
        const double m = Z.row(i).maxCoeff();
        const double lse = m + std::log((Z.row(i).array() - m).exp().sum());
        loss += w * (lse - Z(i, y));
        delta(i, y) -= 1.0;
        delta.row(i) *= w;
    }

    const Index k = model.classes(), d = model.dim();
    const Index head = model.tier() == Tier::Shallow ? d * d + d : 0;
    Eigen::Map<MatrixXd>(grad.data() + head, k, d).noalias() = delta.transpose() * features;
    Eigen::Map<VectorXd>(grad.data() + head + k * d, k) = delta.colwise().sum().transpose();
    if (model.tier() == Tier::Shallow) {
        MatrixXd dpre = delta * model.head_weights();
        dpre.array() *= (pre.array() > 0.0).cast<double>();
        Eigen::Map<MatrixXd>(grad.data(), d, d).noalias() = dpre.transpose() * X;
        Eigen::Map<VectorXd>(grad.data() + d * d, d) = dpre.colwise().sum().transpose();
    }
    return loss;
}

void TrainConfig::validate() const {
    if (epochs < 1 || batch_size < 1 || !(learning_rate > 0.0))
        throw Error(ErrorKind::InvalidParam, "epochs, batch size and learning rate must be positive");
    if (weight_decay < 0.0 || momentum < 0.0 || momentum >= 1.0)
        throw Error(ErrorKind::InvalidParam, "weight decay must be >= 0 and momentum in [0,1)");
}

TrainConfig default_train_config(Tier tier) {
    TrainConfig cfg;
    if (tier == Tier::Shallow) cfg.learning_rate = 1e-3;
    return cfg;
}

SgdMomentum::SgdMomentum(Index n_params, const TrainConfig& cfg)
    : velocity_(VectorXd::Zero(n_params)),
      lr_(cfg.learning_rate),
      momentum_(cfg.momentum),
      weight_decay_(cfg.weight_decay) {}

void SgdMomentum::step(VectorXd& params, const VectorXd& grad) {
    velocity_ = momentum_ * velocity_ + grad + weight_decay_ * params;
    params -= lr_ * velocity_;
}

Classifier train_supervised(const EmbeddingStore& store, std::span<const Index> labeled_rows, Tier tier,
                            const TrainConfig& cfg, TrainReport* report, const TrainHooks& hooks) {
    cfg.validate();
    if (labeled_rows.empty()) throw Error(ErrorKind::EmptyLabelSet, "no labeled examples to train on");

    Classifier model(tier, store.d(), store.k);
    Rng init_rng(cfg.seed, "trainer/init");
    model.initialize(init_rng);

    const Index n_lab = static_cast<Index>(labeled_rows.size());
    if (n_lab % cfg.batch_size == 1 && n_lab > 1)
        warn("training batch of a single example occurs every epoch (" + std::to_string(n_lab) + " labels)");

    std::vector<MatrixXd> view_features;
    for (Index v = 0; v < store.v(); ++v) view_features.push_back(store.features(v, labeled_rows));
    std::vector<std::uint32_t> labels(labeled_rows.size());
    for (std::size_t i = 0; i < labeled_rows.size(); ++i)
        labels[i] = store.labels[static_cast<std::size_t>(labeled_rows[i])];

    Rng order_rng(cfg.seed, "trainer/order");
    SgdMomentum opt(model.parameters().size(), cfg);
    std::vector<Index> order(static_cast<std::size_t>(n_lab));
    for (Index i = 0; i < n_lab; ++i) order[static_cast<std::size_t>(i)] = i;
    VectorXd grad, extra;
    std::vector<std::uint32_t> batch_labels;
    const std::vector<double> ones(static_cast<std::size_t>(cfg.batch_size), 1.0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (hooks.on_epoch_start) hooks.on_epoch_start(model, epoch);
        const MatrixXd& feats = view_features[static_cast<std::size_t>(epoch % store.v())];
        order_rng.shuffle(order);
        double epoch_loss = 0.0;
        Index step = 0;
        for (Index start = 0; start < n_lab; start += cfg.batch_size, ++step) {
            const Index len = std::min(cfg.batch_size, n_lab - start);
            MatrixXd Xb(len, feats.cols());
            batch_labels.resize(static_cast<std::size_t>(len));
            for (Index r = 0; r < len; ++r) {
                const Index src = order[static_cast<std::size_t>(start + r)];
                Xb.row(r) = feats.row(src);
                batch_labels[static_cast<std::size_t>(r)] = labels[static_cast<std::size_t>(src)];
            }
            epoch_loss += loss_and_gradient(model, Xb, batch_labels,
                                            std::span(ones).first(static_cast<std::size_t>(len)),
                                            static_cast<double>(len), grad);
            if (hooks.extra_loss) hooks.extra_loss(model, epoch, step, grad);
            opt.step(model.parameters(), grad);
        }
        if (report) report->epoch_loss.push_back(epoch_loss / static_cast<double>(step));
    }
    return model;
}

namespace {

constexpr char kCkptMagic[4] = {'L', 'E', 'M', 'C'};
constexpr std::uint32_t kCkptVersion = 1;

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
    std::uint8_t buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out.insert(out.end(), buf, buf + sizeof(T));
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Classifier& model) {
    std::vector<std::uint8_t> out(std::begin(kCkptMagic), std::end(kCkptMagic));
    put(out, kCkptVersion);
    put(out, static_cast<std::uint32_t>(model.tier()));
    put(out, static_cast<std::uint32_t>(model.dim()));
    put(out, static_cast<std::uint32_t>(model.classes()));
    put(out, static_cast<std::uint32_t>(model.hidden()));
    put(out, static_cast<std::uint64_t>(model.parameters().size()));
    const auto* p = reinterpret_cast<const std::uint8_t*>(model.parameters().data());
    out.insert(out.end(), p, p + model.parameters().size() * sizeof(double));
    return out;
}

Classifier decode_checkpoint(std::span<const std::uint8_t> bytes) {
    constexpr std::size_t header = 4 + 5 * 4 + 8;
    if (bytes.size() < header) throw Error(ErrorKind::CorruptCheckpoint, "checkpoint shorter than its header");
    if (std::memcmp(bytes.data(), kCkptMagic, 4) != 0) throw Error(ErrorKind::CorruptCheckpoint, "bad magic");
    std::uint32_t fields[5];
    std::memcpy(fields, bytes.data() + 4, sizeof(fields));
    std::uint64_t count;
    std::memcpy(&count, bytes.data() + 24, sizeof(count));
    const auto [version, tier_tag, d, k, hidden] = fields;
    if (version != kCkptVersion) throw Error(ErrorKind::CorruptCheckpoint, "unknown version");
    if (tier_tag > 1 || d == 0 || k == 0) throw Error(ErrorKind::CorruptCheckpoint, "bad shape header");
    const auto tier = static_cast<Tier>(tier_tag);
    if (hidden != (tier == Tier::Shallow ? d : 0u) ||
        count != static_cast<std::uint64_t>(Classifier::parameter_count(tier, d, k)) ||
        bytes.size() != header + count * sizeof(double)) {
        throw Error(ErrorKind::CorruptCheckpoint, "shape header does not match the parameter block");
    }
    Classifier model(tier, d, k);
    std::memcpy(model.parameters().data(), bytes.data() + header, count * sizeof(double));
    if (!model.parameters().allFinite()) throw Error(ErrorKind::CorruptCheckpoint, "non-finite parameters");
    return model;
}

void save_checkpoint(const Classifier& model, const std::filesystem::path& path) {
    const auto bytes = encode_checkpoint(model);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Classifier load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::CorruptCheckpoint, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

}  // namespace lebench
