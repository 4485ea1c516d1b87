#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lebench {

using Index = Eigen::Index;
using MatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VectorXd = Eigen::VectorXd;
using IndexList = std::vector<Index>;

enum class ErrorKind {
    InvalidParam,
    EmptySchedule,
    BudgetExceedsPool,
    DuplicateIndex,
    AlreadyLabeled,
    WrongBatchSize,
    IndexOutOfRange,
    ScheduleExhausted,
    LabelOutOfRange,
    BadMagic,
    VersionMismatch,
    TruncatedPayload,
    ManifestMismatch,
    InvalidStore,
    ClassTooSmall,
    EmptyLabelSet,
    BatchTooLarge,
    DegenerateAllZero,
    RankDeficiency,
    SingularUpdate,
    UnknownStrategy,
    UnknownMethod,
    NotImplemented,
    ConfigError,
    IoError,
    CorruptCheckpoint,
    ConfigMismatch,
    IncompatibleRuns,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Seeded generator with named streams. Each (seed, stream, round) triple maps
/// to an independent mt19937_64 state, so adding a consumer never shifts the
/// draws of another one. Distributions are implemented here rather than taken
/// from <random> because the standard distributions are not portable.
class Rng {
public:
    using result_type = std::uint64_t;

    Rng(std::uint64_t seed, std::string_view stream, std::uint64_t round = 0);

    static constexpr result_type min() { return std::mt19937_64::min(); }
    static constexpr result_type max() { return std::mt19937_64::max(); }
    result_type operator()() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    /// Uniform integer in [0, n), unbiased. n must be positive.
    std::uint64_t below(std::uint64_t n);
    double normal();

    template <typename T>
    void shuffle(std::vector<T>& xs) {
        for (std::size_t i = xs.size(); i > 1; --i) {
            std::swap(xs[i - 1], xs[below(i)]);
        }
    }

    /// B distinct draws from `items`, in draw order (partial Fisher-Yates).
    IndexList sample_without_replacement(IndexList items, std::size_t count);

    /// Index drawn with probability proportional to weights (one uniform
    /// consumed). Returns nullopt when the total weight is not positive.
    std::optional<Index> categorical(std::span<const double> weights);

private:
    std::mt19937_64 engine_;
    std::optional<double> spare_normal_;
};

std::uint64_t mix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view text);

/// Annotation bookkeeping over pool positions 0..n_pool-1.
class LabelState {
public:
    LabelState(Index n_pool, std::vector<Index> schedule);

    Index n_pool() const { return static_cast<Index>(labeled_.size()); }
    const std::vector<Index>& schedule() const { return schedule_; }
    Index current_round() const { return current_round_; }
    bool exhausted() const { return current_round_ == static_cast<Index>(schedule_.size()); }
    Index rounds() const { return static_cast<Index>(schedule_.size()); }

    bool is_labeled(Index i) const { return labeled_.at(static_cast<std::size_t>(i)); }
    std::optional<Index> round_of(Index i) const { return round_of_.at(static_cast<std::size_t>(i)); }
    const std::vector<bool>& labeled_mask() const { return labeled_; }

    Index num_labeled() const { return num_labeled_; }
    IndexList labeled_indices() const;
    IndexList unlabeled_indices() const;
    /// Batch size of the pending round.
    Index next_batch_size() const;
    /// Sum of the schedule up to and including round r.
    Index cumulative_budget(Index r) const;

    void apply_annotations(std::span<const Index> indices);

    bool operator==(const LabelState&) const = default;

private:
    std::vector<bool> labeled_;
    std::vector<std::optional<Index>> round_of_;
    std::vector<Index> schedule_;
    Index current_round_ = 0;
    Index num_labeled_ = 0;
};

LabelState init_label_state(Index n_pool, std::vector<Index> schedule);

/// Functional form of LabelState::apply_annotations.
LabelState apply_annotations(LabelState state, std::span<const Index> indices);

/// Validates a budget schedule against a pool size; throws on violation.
void validate_schedule(const std::vector<Index>& schedule, Index n_pool);

}  // namespace lebench
