#pragma once

#include "lebench/data.hpp"
#include "lebench/models.hpp"
#include "lebench/semisl.hpp"
#include "lebench/strategies.hpp"

#include <filesystem>
#include <optional>
#include <string>

namespace lebench {

enum class SelectionMode { Proxy, EndToEnd };

std::string_view to_string(SelectionMode mode);
SelectionMode parse_mode(std::string_view text);

struct SyntheticDataset {
    SyntheticSpec spec;
    double val_fraction = 0.1;
    double test_fraction = 0.2;
    std::uint64_t split_seed = 1;

    bool operator==(const SyntheticDataset&) const = default;
};

/// One experiment, as read from a config file. Every stochastic choice
/// downstream is a function of `seed` (plus the dataset's own seeds).
struct ExperimentConfig {
    std::optional<std::filesystem::path> dataset_path;
    std::optional<SyntheticDataset> synthetic;
    std::string dataset_name;  // empty: taken from the store

    StrategyId strategy = StrategyId::Random;
    SemiMethod semi_sl = SemiMethod::FlexMatch;
    SemiMethod final_semi_sl = SemiMethod::FlexMatch;
    Tier proxy_tier = Tier::Linear;
    Tier final_tier = Tier::Shallow;
    SelectionMode mode = SelectionMode::Proxy;
    std::vector<Index> schedule;
    std::uint64_t seed = 0;
    std::filesystem::path output_dir = "results";
    bool audit = false;
    bool log_thresholds = false;

    TrainConfig train_linear = default_train_config(Tier::Linear);
    TrainConfig train_shallow = default_train_config(Tier::Shallow);
    SemiConfig semi;
    StrategyOptions strategy_options;

    Tier loop_tier() const { return mode == SelectionMode::Proxy ? proxy_tier : final_tier; }
    const TrainConfig& train_config(Tier tier) const {
        return tier == Tier::Linear ? train_linear : train_shallow;
    }
    /// Throws ConfigError on inconsistent fields. Pool-size checks happen
    /// once the dataset is loaded.
    void validate() const;
};

/// Parses the key = value config format. Unknown sections or keys are errors.
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical text form; parse_config(to_snapshot(c)) reproduces c.
std::string to_snapshot(const ExperimentConfig& cfg);

std::vector<Index> parse_schedule(const std::string& text);
std::string format_schedule(const std::vector<Index>& schedule);

/// Environment variable naming the default results root.
inline constexpr const char* kResultsEnv = "LEBENCH_RESULTS";

}  // namespace lebench
