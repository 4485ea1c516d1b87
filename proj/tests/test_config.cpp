#include <doctest.h>

#include "lebench/config.hpp"

#include <cstdlib>

using namespace lebench;

namespace {

const char* kBase = R"([experiment]
strategy = badge
semi_sl = pseudolabel
mode = end_to_end
schedule = 100x3, 50
seed = 7
audit = true

[synthetic]
k = 4
n = 800
d = 8
separation = 3.5

[train_linear]
epochs = 30

[semisl]
lambda_u = 0.5

[strategy]
badge_first_center = uniform
bait_sweeps = 2
)";

ErrorKind config_error(const std::string& text) {
    try {
        parse_config(text);
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected a config error");
    return ErrorKind::InvalidParam;
}

}  // namespace

TEST_CASE("schedule syntax") {
    CHECK(parse_schedule("100x10") == std::vector<Index>(10, 100));
    CHECK(parse_schedule("100x2, 50") == std::vector<Index>{100, 100, 50});
    CHECK(parse_schedule(" 5 ,6") == std::vector<Index>{5, 6});
    CHECK(format_schedule({100, 100, 50}) == "100x2, 50");
    CHECK(parse_schedule(format_schedule({3, 1, 1, 4})) == std::vector<Index>{3, 1, 1, 4});
    CHECK_THROWS_AS(parse_schedule("10x0"), Error);
    CHECK_THROWS_AS(parse_schedule("ten"), Error);
}

TEST_CASE("parse a full config") {
    const auto cfg = parse_config(kBase);
    CHECK(cfg.strategy == StrategyId::Badge);
    CHECK(cfg.semi_sl == SemiMethod::Pseudolabel);
    CHECK(cfg.final_semi_sl == SemiMethod::FlexMatch);
    CHECK(cfg.mode == SelectionMode::EndToEnd);
    CHECK(cfg.loop_tier() == Tier::Shallow);
    CHECK(cfg.schedule == std::vector<Index>{100, 100, 100, 50});
    CHECK(cfg.seed == 7);
    CHECK(cfg.audit);
    REQUIRE(cfg.synthetic.has_value());
    CHECK(cfg.synthetic->spec.k == 4);
    CHECK(cfg.synthetic->spec.separation == 3.5);
    CHECK(cfg.synthetic->spec.v == 2);
    CHECK(cfg.train_linear.epochs == 30);
    CHECK(cfg.train_shallow.learning_rate == 1e-3);
    CHECK(cfg.semi.lambda_u == 0.5);
    CHECK_FALSE(cfg.strategy_options.badge.first_center_by_norm);
    CHECK(cfg.strategy_options.bait.sweeps == 2);
}

TEST_CASE("snapshot round trip") {
    const auto cfg = parse_config(kBase);
    const auto snap = to_snapshot(cfg);
    const auto again = parse_config(snap);
    CHECK(to_snapshot(again) == snap);
    CHECK(again.schedule == cfg.schedule);
    CHECK(again.train_linear == cfg.train_linear);
    CHECK(again.synthetic == cfg.synthetic);
}

TEST_CASE("unknown keys and sections are errors") {
    CHECK(config_error(std::string(kBase) + "\n[extra]\nx = 1\n") == ErrorKind::ConfigError);
    CHECK(config_error(std::string(kBase) + "bait_typo = 3\n") == ErrorKind::ConfigError);
    CHECK(config_error("top = 1\n" + std::string(kBase)) == ErrorKind::ConfigError);
}

TEST_CASE("invalid values are errors") {
    const std::string base = kBase;
    auto with = [&](const std::string& from, const std::string& to) {
        auto text = base;
        text.replace(text.find(from), from.size(), to);
        return text;
    };
    CHECK(config_error(with("seed = 7", "seed = seven")) == ErrorKind::ConfigError);
    CHECK(config_error(with("audit = true", "audit = yes")) == ErrorKind::ConfigError);
    CHECK(config_error(with("mode = end_to_end", "mode = hybrid")) == ErrorKind::ConfigError);
    CHECK(config_error(with("strategy = badge", "strategy = galaxy")) == ErrorKind::NotImplemented);
    CHECK(config_error(with("semi_sl = pseudolabel", "semi_sl = softmatch")) == ErrorKind::NotImplemented);
    CHECK(config_error(with("schedule = 100x3, 50\n", "")) == ErrorKind::ConfigError);
    CHECK(config_error(with("badge_first_center = uniform", "badge_first_center = far")) == ErrorKind::ConfigError);
    // neither or both dataset sources
    CHECK(config_error("[experiment]\nschedule = 5\n") == ErrorKind::ConfigError);
    CHECK(config_error(base + "\n[dataset]\npath = x.lebm\n") == ErrorKind::ConfigError);
}

TEST_CASE("inline comments") {
    const auto cfg = parse_config("[experiment]\nschedule = 5x2   # two rounds\nstrategy = badge ; note\n"
                                  "[synthetic]\nname = a#b\n");
    CHECK(cfg.schedule == std::vector<Index>{5, 5});
    CHECK(cfg.strategy == StrategyId::Badge);
    CHECK(cfg.dataset_name == "a#b");
}

TEST_CASE("dataset paths resolve against the config directory") {
    const auto cfg = parse_config("[experiment]\nschedule = 5\n[dataset]\npath = data/x.lebm\n", "/tmp/cfgdir");
    REQUIRE(cfg.dataset_path.has_value());
    CHECK(*cfg.dataset_path == std::filesystem::path("/tmp/cfgdir/data/x.lebm"));
}

TEST_CASE("results root from the environment") {
    ::setenv(kResultsEnv, "/tmp/lebench_env_root", 1);
    CHECK(parse_config(kBase).output_dir == std::filesystem::path("/tmp/lebench_env_root"));
    const auto explicit_dir = parse_config(std::string("[experiment]\noutput_dir = mine\n") +
                                           std::string(kBase).substr(std::string("[experiment]\n").size()));
    CHECK(explicit_dir.output_dir == std::filesystem::path("mine"));
    ::unsetenv(kResultsEnv);
    CHECK(parse_config(kBase).output_dir == std::filesystem::path("results"));
}
