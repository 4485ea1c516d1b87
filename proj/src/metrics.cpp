#include "lebench/metrics.hpp"

namespace lebench {

ConfusionMatrix confusion(std::span<const std::uint32_t> y_true, std::span<const std::uint32_t> y_pred,
                          std::uint32_t k) {
    if (y_true.size() != y_pred.size()) throw Error(ErrorKind::InvalidParam, "label vectors differ in length");
    ConfusionMatrix cm;
    cm.counts.setZero(k, k);
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        if (y_true[i] >= k || y_pred[i] >= k)
            throw Error(ErrorKind::LabelOutOfRange, "label at position " + std::to_string(i) + " outside [0," +
                                                        std::to_string(k) + ")");
        ++cm.counts(y_true[i], y_pred[i]);
    }
    return cm;
}

double accuracy(const ConfusionMatrix& cm) {
    const auto total = cm.total();
    return total == 0 ? 0.0 : static_cast<double>(cm.counts.diagonal().sum()) / static_cast<double>(total);
}

double balanced_accuracy(const ConfusionMatrix& cm) {
    const Index k = cm.classes();
    if (k == 0) return 0.0;
    double sum = 0.0;
    for (Index i = 0; i < k; ++i) {
        const auto support = cm.counts.row(i).sum();
        if (support > 0) sum += static_cast<double>(cm.counts(i, i)) / static_cast<double>(support);
    }
    return sum / static_cast<double>(k);
}

double macro_f1(const ConfusionMatrix& cm) {
    const Index k = cm.classes();
    if (k == 0) return 0.0;
    double sum = 0.0;
    for (Index i = 0; i < k; ++i) {
        // 2 / (1/P + 1/R) == 2 tp / (predicted + actual), and 0 when tp == 0
        const auto tp = cm.counts(i, i);
        const auto predicted = cm.counts.col(i).sum();
        const auto actual = cm.counts.row(i).sum();
        if (tp > 0) sum += 2.0 * static_cast<double>(tp) / static_cast<double>(predicted + actual);
    }
    return sum / static_cast<double>(k);
}

double pool_accuracy(std::span<const std::uint32_t> ground_truth, const std::vector<bool>& labeled,
                     std::span<const std::uint32_t> predictions) {
    const std::size_t n = ground_truth.size();
    if (labeled.size() != n || predictions.size() != n)
        throw Error(ErrorKind::InvalidParam, "pool accuracy inputs differ in length");
    if (n == 0) return 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (labeled[i] || predictions[i] == ground_truth[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(n);
}

}  // namespace lebench
