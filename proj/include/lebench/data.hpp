#pragma once

#include "lebench/core.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace lebench {

enum class Split : std::uint8_t { Pool = 0, Val = 1, Test = 2 };

/// Frozen-encoder output: v views of an n x d feature matrix, plus labels and
/// split tags. Features are stored as float32; view 0 is the canonical view.
struct EmbeddingStore {
    using FeatureMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

    std::string name = "dataset";
    std::uint32_t k = 0;
    std::vector<FeatureMatrix> views;
    std::vector<std::uint32_t> labels;
    std::vector<Split> splits;
    std::vector<std::string> class_names;
    std::optional<std::uint64_t> generator_seed;

    Index n() const { return static_cast<Index>(labels.size()); }
    Index d() const { return views.empty() ? 0 : views.front().cols(); }
    Index v() const { return static_cast<Index>(views.size()); }

    IndexList indices_of(Split split) const;

    /// Rows `rows` of view `view`, widened to double.
    MatrixXd features(Index view, std::span<const Index> rows) const;

    /// Throws InvalidStore when shape, finiteness, label range or class
    /// coverage (every class in pool or val) is violated.
    void validate() const;

    bool operator==(const EmbeddingStore&) const = default;
};

struct Manifest {
    std::string name;
    std::uint64_t n = 0;
    std::uint32_t d = 0, v = 0, k = 0;
    std::uint64_t n_pool = 0, n_val = 0, n_test = 0;
    std::vector<std::string> class_names;
    std::optional<std::uint64_t> generator_seed;
    std::uint32_t format_version = 1;

    static Manifest describe(const EmbeddingStore& store);
    bool operator==(const Manifest&) const = default;
};

inline constexpr std::uint32_t kStoreVersion = 1;
inline constexpr std::size_t kStoreHeaderBytes = 28;

std::filesystem::path manifest_path(const std::filesystem::path& store_path);

/// Writes the binary store and its `.manifest` sidecar.
void write_store(const EmbeddingStore& store, const std::filesystem::path& path);

/// Reads and validates a binary store. When the sidecar manifest exists its
/// counts must match the payload (ManifestMismatch otherwise).
EmbeddingStore read_store(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_store(const EmbeddingStore& store);
EmbeddingStore decode_store(std::span<const std::uint8_t> bytes);

void write_manifest(const Manifest& manifest, const std::filesystem::path& path);
Manifest read_manifest(const std::filesystem::path& path);

struct SyntheticSpec {
    std::uint32_t k = 10;
    Index n = 5000;
    Index d = 32;
    Index v = 2;
    double separation = 6.0;
    double noise = 0.1;
    std::uint64_t seed = 1;

    bool operator==(const SyntheticSpec&) const = default;
};

/// Gaussian mixture: class c is centered at separation * u_c with orthonormal
/// directions u_c (when k <= d) and unit within-class variance. Views 1..v-1
/// add isotropic Gaussian perturbations of scale `noise` to view 0. All rows
/// are tagged as pool.
EmbeddingStore generate_synthetic(const SyntheticSpec& spec);

/// Stratified split. Each class keeps at least one pool example; val/test
/// totals are round(n * fraction), allocated across classes by largest
/// remainder.
EmbeddingStore split_dataset(EmbeddingStore store, double val_fraction, double test_fraction,
                             std::uint64_t seed);

}  // namespace lebench
