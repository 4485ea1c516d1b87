#pragma once

#include "lebench/models.hpp"

#include <string_view>

namespace lebench {

enum class SemiMethod { SupervisedOnly, Pseudolabel, FlexMatch, Consistency };

std::string_view to_string(SemiMethod method);
/// Accepts supervised_only | pseudolabel | flexmatch | consistency. The ids
/// freematch and softmatch are reserved and raise NotImplemented.
SemiMethod parse_semi_method(std::string_view text);

struct ThresholdState {
    double base_tau = 0.95;
    VectorXd per_class_tau;
    std::vector<Index> sigma;  // confident unlabeled predictions per class
    Index unused = 0;          // unlabeled examples below base_tau
};

struct PseudoBatch {
    IndexList indices;                  // rows of the probability matrix
    std::vector<std::uint32_t> labels;  // argmax class
    std::vector<double> weights;        // always 1 for hard pseudolabels
};

/// Row i is pseudolabeled iff unlabeled[i] and max_c probs(i,c) >= thresholds[argmax].
PseudoBatch assign_pseudolabels(const MatrixXd& probs, const std::vector<bool>& unlabeled,
                                const VectorXd& thresholds);

/// Class-adaptive thresholds: tau_c = base_tau * sigma_c / max(max_c' sigma_c', unused),
/// falling back to base_tau everywhere when nothing is confident.
ThresholdState update_flexmatch_thresholds(const MatrixXd& probs, const std::vector<bool>& unlabeled,
                                           double base_tau);

struct SemiConfig {
    double lambda_u = 1.0;
    double fixed_tau = 0.95;  // pseudolabel / consistency
    double base_tau = 0.95;   // flexmatch
    Index unlabeled_ratio = 7;  // unlabeled examples per labeled example in a step
    std::vector<ThresholdState>* threshold_trace = nullptr;

    void validate() const;
};

/// Supervised cross-entropy on the labeled rows plus lambda_u times the mean
/// pseudo-label cross-entropy over each step's unlabeled minibatch. Targets
/// come from the current model on view 0, refreshed every epoch. Pseudolabel
/// evaluates its loss on view 0; consistency and flexmatch evaluate it on an
/// augmented view (1 + epoch mod (v-1)), so the model must agree across views.
Classifier train_semi_supervised(const EmbeddingStore& store, std::span<const Index> labeled_rows,
                                 std::span<const Index> unlabeled_rows, SemiMethod method, Tier tier,
                                 const TrainConfig& cfg, const SemiConfig& semi = {},
                                 TrainReport* report = nullptr);

}  // namespace lebench
