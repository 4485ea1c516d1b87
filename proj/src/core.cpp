#include "lebench/core.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <unordered_set>

namespace lebench {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidParam: return "InvalidParam";
        case ErrorKind::EmptySchedule: return "EmptySchedule";
        case ErrorKind::BudgetExceedsPool: return "BudgetExceedsPool";
        case ErrorKind::DuplicateIndex: return "DuplicateIndex";
        case ErrorKind::AlreadyLabeled: return "AlreadyLabeled";
        case ErrorKind::WrongBatchSize: return "WrongBatchSize";
        case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
        case ErrorKind::ScheduleExhausted: return "ScheduleExhausted";
        case ErrorKind::LabelOutOfRange: return "LabelOutOfRange";
        case ErrorKind::BadMagic: return "BadMagic";
        case ErrorKind::VersionMismatch: return "VersionMismatch";
        case ErrorKind::TruncatedPayload: return "TruncatedPayload";
        case ErrorKind::ManifestMismatch: return "ManifestMismatch";
        case ErrorKind::InvalidStore: return "InvalidStore";
        case ErrorKind::ClassTooSmall: return "ClassTooSmall";
        case ErrorKind::EmptyLabelSet: return "EmptyLabelSet";
        case ErrorKind::BatchTooLarge: return "BatchTooLarge";
        case ErrorKind::DegenerateAllZero: return "DegenerateAllZero";
        case ErrorKind::RankDeficiency: return "RankDeficiency";
        case ErrorKind::SingularUpdate: return "SingularUpdate";
        case ErrorKind::UnknownStrategy: return "UnknownStrategy";
        case ErrorKind::UnknownMethod: return "UnknownMethod";
        case ErrorKind::NotImplemented: return "NotImplemented";
        case ErrorKind::ConfigError: return "ConfigError";
        case ErrorKind::IoError: return "IoError";
        case ErrorKind::CorruptCheckpoint: return "CorruptCheckpoint";
        case ErrorKind::ConfigMismatch: return "ConfigMismatch";
        case ErrorKind::IncompatibleRuns: return "IncompatibleRuns";
    }
    return "Unknown";
}

std::uint64_t mix64(std::uint64_t x) {
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

Rng::Rng(std::uint64_t seed, std::string_view stream, std::uint64_t round)
    : engine_(mix64(mix64(seed) ^ fnv1a64(stream) ^ mix64(round + 0x5851f42d4c957f2dULL))) {}

double Rng::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) throw Error(ErrorKind::InvalidParam, "Rng::below(0)");
    // rejection on the top of the range keeps the result unbiased
    const std::uint64_t limit = max() - (max() % n + 1) % n;
    std::uint64_t x = engine_();
    while (x > limit) x = engine_();
    return x % n;
}

double Rng::normal() {
    if (spare_normal_) {
        const double z = *spare_normal_;
        spare_normal_.reset();
        return z;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_normal_ = r * std::sin(theta);
    return r * std::cos(theta);
}

IndexList Rng::sample_without_replacement(IndexList items, std::size_t count) {
    if (count > items.size()) {
        throw Error(ErrorKind::BatchTooLarge, "sample of " + std::to_string(count) + " from " +
                                                  std::to_string(items.size()) + " items");
    }
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = i + below(items.size() - i);
        std::swap(items[i], items[j]);
    }
    items.resize(count);
    return items;
}

std::optional<Index> Rng::categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    const double u = uniform();
    if (!(total > 0.0)) return std::nullopt;
    const double target = u * total;
    double acc = 0.0;
    Index last_positive = -1;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] <= 0.0) continue;
        acc += weights[i];
        last_positive = static_cast<Index>(i);
        if (target < acc) return last_positive;
    }
    // rounding can leave target == acc at the very end
    return last_positive;
}

void validate_schedule(const std::vector<Index>& schedule, Index n_pool) {
    if (schedule.empty()) throw Error(ErrorKind::EmptySchedule, "budget schedule is empty");
    Index total = 0;
    for (Index b : schedule) {
        if (b < 1) throw Error(ErrorKind::InvalidParam, "schedule entries must be >= 1");
        total += b;
    }
    if (total > n_pool) {
        throw Error(ErrorKind::BudgetExceedsPool, "total budget " + std::to_string(total) +
                                                      " exceeds pool size " + std::to_string(n_pool));
    }
}

LabelState::LabelState(Index n_pool, std::vector<Index> schedule)
    : labeled_(static_cast<std::size_t>(std::max<Index>(n_pool, 0)), false),
      round_of_(labeled_.size()),
      schedule_(std::move(schedule)) {
    validate_schedule(schedule_, n_pool);
}

IndexList LabelState::labeled_indices() const {
    IndexList out;
    out.reserve(static_cast<std::size_t>(num_labeled_));
    for (std::size_t i = 0; i < labeled_.size(); ++i)
        if (labeled_[i]) out.push_back(static_cast<Index>(i));
    return out;
}

IndexList LabelState::unlabeled_indices() const {
    IndexList out;
    out.reserve(labeled_.size() - static_cast<std::size_t>(num_labeled_));
    for (std::size_t i = 0; i < labeled_.size(); ++i)
        if (!labeled_[i]) out.push_back(static_cast<Index>(i));
    return out;
}

Index LabelState::next_batch_size() const {
    if (exhausted()) throw Error(ErrorKind::ScheduleExhausted, "no rounds left in the schedule");
    return schedule_[static_cast<std::size_t>(current_round_)];
}

Index LabelState::cumulative_budget(Index r) const {
    if (r < 0 || r >= rounds()) throw Error(ErrorKind::IndexOutOfRange, "round " + std::to_string(r));
    return std::accumulate(schedule_.begin(), schedule_.begin() + r + 1, Index{0});
}

void LabelState::apply_annotations(std::span<const Index> indices) {
    const Index expected = next_batch_size();
    if (static_cast<Index>(indices.size()) != expected) {
        throw Error(ErrorKind::WrongBatchSize, "expected " + std::to_string(expected) + " indices, got " +
                                                   std::to_string(indices.size()));
    }
    std::unordered_set<Index> seen;
    for (Index i : indices) {
        if (i < 0 || i >= n_pool()) throw Error(ErrorKind::IndexOutOfRange, "index " + std::to_string(i));
        if (!seen.insert(i).second) throw Error(ErrorKind::DuplicateIndex, "index " + std::to_string(i));
        if (labeled_[static_cast<std::size_t>(i)])
            throw Error(ErrorKind::AlreadyLabeled, "index " + std::to_string(i));
    }
    for (Index i : indices) {
        labeled_[static_cast<std::size_t>(i)] = true;
        round_of_[static_cast<std::size_t>(i)] = current_round_;
    }
    num_labeled_ += expected;
    ++current_round_;
}

LabelState init_label_state(Index n_pool, std::vector<Index> schedule) {
    return LabelState(n_pool, std::move(schedule));
}

LabelState apply_annotations(LabelState state, std::span<const Index> indices) {
    state.apply_annotations(indices);
    return state;
}

}  // namespace lebench
