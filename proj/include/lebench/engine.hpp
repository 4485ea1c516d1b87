#pragma once

#include "lebench/config.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace lebench {

struct RoundRecord {
    Index round = 0;
    Index budget = 0;  // cumulative labels after this round's annotation
    double test_accuracy = 0.0;
    double balanced_accuracy = 0.0;
    double macro_f1 = 0.0;
    double pool_accuracy = 0.0;
    double train_seconds = 0.0;
    double select_seconds = 0.0;
    std::string strategy;
    Tier tier = Tier::Linear;
};

struct ExperimentResult {
    std::filesystem::path dir;
    std::string config_snapshot;
    std::vector<RoundRecord> rounds;
    std::optional<RoundRecord> final_record;
    std::vector<IndexList> selections;  // pool positions annotated per round
    bool complete = false;
};

struct RunOptions {
    /// Stop (as if interrupted) once this many rounds have been recorded.
    std::optional<Index> stop_after_rounds;
};

/// Loads (or generates) the dataset a config names, validated and split.
EmbeddingStore load_dataset(const ExperimentConfig& cfg);

std::filesystem::path result_dir(const ExperimentConfig& cfg, const std::string& dataset_name);

/// The annotation loop. Round 0 draws schedule[0] pool examples uniformly;
/// every later round selects with the configured strategy using the model
/// trained at the end of the previous round. After each annotation the loop
/// tier is retrained (proxy mode: proxy tier; end_to_end: final tier) and
/// evaluated. After the schedule, the final tier is trained with
/// final_semi_sl on the full labeled set. Results are flushed per round to
///   <output_dir>/<dataset>/<strategy>/<mode>/<seed>/
ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {});

/// Continues an interrupted run from its last completed round. A completed
/// run is returned as stored. When `expected` is given its snapshot must
/// match the stored one (ConfigMismatch otherwise).
ExperimentResult resume_experiment(const std::filesystem::path& dir, const RunOptions& opts = {},
                                   const ExperimentConfig* expected = nullptr);

/// Reads a result directory without running anything.
ExperimentResult load_result(const std::filesystem::path& dir);

struct ComparisonRow {
    std::string round;  // round index, or "final"
    Index budget = 0;
    std::string strategy;
    std::size_t trials = 0;
    double mean_test_acc = 0.0;
    std::optional<double> stderr_test_acc;
    double mean_pool_acc = 0.0;
    std::optional<double> stderr_pool_acc;
    double mean_balanced_acc = 0.0;
    double mean_macro_f1 = 0.0;
};

/// Mean and standard error (sample stddev / sqrt(trials)) per round and
/// group. Groups are strategies, qualified by mode or semi-SL method when
/// those vary across the runs. Throws IncompatibleRuns when runs disagree on
/// dataset or schedule.
std::vector<ComparisonRow> compare_runs(const std::vector<std::filesystem::path>& dirs);

std::string comparison_csv(const std::vector<ComparisonRow>& rows);

/// Completed result directories under `root`, sorted.
std::vector<std::filesystem::path> find_runs(const std::filesystem::path& root);

}  // namespace lebench
