#pragma once

#include "lebench/core.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace lebench {

/// counts(i, j) = #{true class i, predicted class j}
struct ConfusionMatrix {
    Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> counts;

    Index classes() const { return counts.rows(); }
    std::int64_t total() const { return counts.sum(); }
};

ConfusionMatrix confusion(std::span<const std::uint32_t> y_true, std::span<const std::uint32_t> y_pred,
                          std::uint32_t k);

double accuracy(const ConfusionMatrix& cm);

/// Mean per-class recall over all k classes; an absent class contributes 0.
double balanced_accuracy(const ConfusionMatrix& cm);

/// Mean per-class F1 over all k classes; a class with P + R = 0 contributes 0.
double macro_f1(const ConfusionMatrix& cm);

/// Fraction of the pool whose label agrees with ground truth, counting
/// human-annotated examples as correct and model predictions elsewhere.
double pool_accuracy(std::span<const std::uint32_t> ground_truth, const std::vector<bool>& labeled,
                     std::span<const std::uint32_t> predictions);

}  // namespace lebench
