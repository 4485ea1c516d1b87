// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// gating criterion fails. Criteria 6-8 use thresholds frozen from a pilot run
// of the benchmark in configs/benchmark.ini (see README).

#include "lebench/engine.hpp"
#include "lebench/log.hpp"
#include "lebench/verify.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

using namespace lebench;
namespace fs = std::filesystem;

namespace {

// Frozen after the pilot. Pilot values: margin 0.60, badge 0.60 of random's
// labels; min flexmatch gain +0.006 (round 9); final proxy/e2e gap 0.000.
constexpr double kMaxLabelFraction = 0.70;
constexpr double kMinSemiGain = 0.0;
constexpr double kMaxProxyGap = 0.01;
constexpr double kMinTrainRatio = 3.0;
constexpr int kSeeds = 5;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
    int id;
    bool pass;
    bool gating;
    std::string text;
};

std::vector<Verdict> verdicts;

void report(int id, bool pass, const std::string& text, bool gating = true) {
    verdicts.push_back({id, pass, gating, text});
    std::printf("%s [%d] %s%s\n", pass ? "PASS" : "FAIL", id, text.c_str(),
                !pass && !gating ? " (soft bound: logged, not gating)" : "");
    std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), f, a);
    return buf;
}

CheckResult check(const std::string& name) {
    VerifyOptions opts;
    opts.only = {name};
    return run_verify(opts).front();
}

std::string describe(const CheckResult& r) {
    return r.name + " residual " + fmt("%.2e", r.residual) + " (tol " + fmt("%.0e", r.tolerance) + ")";
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

struct Group {
    std::vector<ExperimentResult> runs;
    std::vector<double> mean_curve() const {
        std::vector<double> curve(runs.front().rounds.size(), 0.0);
        for (const auto& r : runs)
            for (std::size_t i = 0; i < curve.size(); ++i) curve[i] += r.rounds[i].test_accuracy / runs.size();
        return curve;
    }
    double mean_final(double RoundRecord::*field) const {
        double s = 0.0;
        for (const auto& r : runs) s += (*r.final_record).*field / runs.size();
        return s;
    }
    double mean_train_seconds() const {
        double s = 0.0;
        for (const auto& r : runs)
            for (const auto& rec : r.rounds) s += rec.train_seconds / runs.size();
        return s;
    }
};

Group run_group(ExperimentConfig cfg, const fs::path& root) {
    cfg.output_dir = root;
    Group g;
    for (int seed = 0; seed < kSeeds; ++seed) {
        cfg.seed = static_cast<std::uint64_t>(seed);
        g.runs.push_back(run_experiment(cfg));
    }
    return g;
}

// Fraction of random's final budget at which `curve` first reaches `target`.
double label_fraction(const std::vector<double>& curve, const std::vector<RoundRecord>& rounds, double target) {
    for (std::size_t r = 0; r < curve.size(); ++r)
        if (curve[r] >= target) return static_cast<double>(rounds[r].budget) / rounds.back().budget;
    return std::numeric_limits<double>::infinity();
}

void oracle_criteria() {
    auto t0 = Clock::now();
    const auto badge = check("badge-oracle");
    double secs = seconds_since(t0);
    report(1, badge.passed && secs < 30.0,
           "BADGE factored distance vs materialized oracle, 50 instances: " + describe(badge) + ", " + badge.detail +
               ", " + fmt("%.1fs", secs));

    t0 = Clock::now();
    const auto bait = check("bait-woodbury");
    const auto kron = check("kronecker");
    secs = seconds_since(t0);
    report(2, bait.passed && kron.passed && secs < 60.0,
           "BAIT Woodbury vs dense solve, 20 trajectories: " + describe(bait) + " over " + bait.detail + "; " +
               describe(kron) + ", " + fmt("%.1fs", secs));

    const auto metrics = check("metrics-oracle");
    report(3, metrics.passed, "metrics vs brute force, 100 instances: " + describe(metrics) + ", " + metrics.detail);

    t0 = Clock::now();
    const auto kc = check("kcenter-bound");
    secs = seconds_since(t0);
    report(4, kc.passed && secs < 60.0,
           "greedy k-center radius / exhaustive optimum, 50 sets: max ratio " + fmt("%.3f", kc.residual) + " <= 2, " +
               fmt("%.2fs", secs));

    const auto grad = check("gradient-check");
    const auto q = check("q-vector");
    report(5, grad.passed && q.passed, "gradient checks: " + describe(grad) + "; " + describe(q));
}

}  // namespace

int main(int argc, char** argv) {
    set_quiet(true);
    const fs::path root = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "lebench_acceptance";
    fs::remove_all(root);

    oracle_criteria();

    const ExperimentConfig base = load_config(fs::path(LEBENCH_CONFIG_DIR) / "benchmark.ini");

    // 6: label efficiency of margin and BADGE against random
    const auto t6 = Clock::now();
    std::map<std::string, Group> groups;
    for (auto id : {StrategyId::Random, StrategyId::Margin, StrategyId::Badge}) {
        ExperimentConfig cfg = base;
        cfg.strategy = id;
        groups[std::string(to_string(id))] = run_group(cfg, root / "trend");
    }
    const auto random_curve = groups["random"].mean_curve();
    const double target = random_curve.back();
    const auto& rounds = groups["random"].runs.front().rounds;
    const double margin_frac = label_fraction(groups["margin"].mean_curve(), rounds, target);
    const double badge_frac = label_fraction(groups["badge"].mean_curve(), rounds, target);
    const double secs6 = seconds_since(t6);
    report(6, margin_frac <= kMaxLabelFraction && badge_frac <= kMaxLabelFraction && secs6 < 600.0,
           "labels to reach random's final accuracy " + fmt("%.4f", target) + " (mean of 5 seeds): margin " +
               fmt("%.0f%%", 100 * margin_frac) + ", badge " + fmt("%.0f%%", 100 * badge_frac) + " (bound " +
               fmt("%.0f%%", 100 * kMaxLabelFraction) + "), " + fmt("%.0fs", secs6));

    // 7: flexmatch against supervised-only training, random selection
    ExperimentConfig flex = base;
    flex.strategy = StrategyId::Random;
    flex.semi_sl = SemiMethod::FlexMatch;
    const auto flex_curve = run_group(flex, root / "semi").mean_curve();
    double min_gain = std::numeric_limits<double>::infinity();
    std::size_t worst_round = 0;
    for (std::size_t r = 0; r < flex_curve.size(); ++r) {
        const double gain = flex_curve[r] - random_curve[r];
        if (gain < min_gain) {
            min_gain = gain;
            worst_round = r;
        }
    }
    report(7, min_gain >= kMinSemiGain,
           "flexmatch minus supervised_only mean test accuracy, every round: min " + fmt("%+.4f", min_gain) +
               " at round " + std::to_string(worst_round) + " (round 0 " + fmt("%+.4f", flex_curve[0] - random_curve[0]) +
               "; bound >= " + fmt("%+.3f", kMinSemiGain) + ")");

    // 8: proxy against end-to-end selection, margin
    ExperimentConfig e2e = base;
    e2e.mode = SelectionMode::EndToEnd;
    const Group e2e_group = run_group(e2e, root / "trend");
    const Group& proxy_group = groups["margin"];
    const double gap = proxy_group.mean_final(&RoundRecord::test_accuracy) - e2e_group.mean_final(&RoundRecord::test_accuracy);
    const double pool_gap =
        proxy_group.mean_final(&RoundRecord::pool_accuracy) - e2e_group.mean_final(&RoundRecord::pool_accuracy);
    report(8, std::abs(gap) <= kMaxProxyGap,
           "final shallow-tier test accuracy, proxy " + fmt("%.4f", proxy_group.mean_final(&RoundRecord::test_accuracy)) +
               " vs end_to_end " + fmt("%.4f", e2e_group.mean_final(&RoundRecord::test_accuracy)) + ", gap " +
               fmt("%+.4f", gap) + " (bound " + fmt("%.2f", kMaxProxyGap) + "); pool accuracy gap " +
               fmt("%+.4f", pool_gap));

    // 9: determinism and resume
    {
        ExperimentConfig cfg = base;
        cfg.strategy = StrategyId::Badge;
        cfg.seed = 0;
        const auto& reference = groups["badge"].runs.front();
        cfg.output_dir = root / "determinism_repeat";
        const auto repeat = run_experiment(cfg);
        cfg.output_dir = root / "determinism_resume";
        RunOptions stop;
        stop.stop_after_rounds = 3;
        const auto partial = run_experiment(cfg, stop);
        const auto resumed = resume_experiment(partial.dir, {}, &cfg);
        const auto ref_rounds = slurp(reference.dir / "rounds.jsonl");
        const bool same = ref_rounds == slurp(repeat.dir / "rounds.jsonl");
        const bool same_resume = ref_rounds == slurp(resumed.dir / "rounds.jsonl") &&
                                 resumed.selections == reference.selections &&
                                 resumed.final_record->test_accuracy == reference.final_record->test_accuracy;
        report(9, same && same_resume && partial.rounds.size() == 3,
               std::string("rounds.jsonl byte-identical across repeat runs: ") + (same ? "yes" : "no") +
                   "; resume after round 3 of 10 identical: " + (same_resume ? "yes" : "no"));
    }

    // 10: training cost of the proxy loop against the full loop
    const double ratio = e2e_group.mean_train_seconds() / proxy_group.mean_train_seconds();
    report(10, ratio >= kMinTrainRatio,
           "loop retraining wall time end_to_end / proxy: " + fmt("%.2fx", ratio) + " (" +
               fmt("%.2fs", e2e_group.mean_train_seconds()) + " vs " + fmt("%.2fs", proxy_group.mean_train_seconds()) +
               " per run; target >= " + fmt("%.0fx", kMinTrainRatio) + ")",
           false);

    int failed = 0;
    for (const auto& v : verdicts) failed += !v.pass && v.gating;
    std::printf("%d/%zu criteria passed%s\n",
                static_cast<int>(std::count_if(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.pass; })),
                verdicts.size(), failed ? "" : " (all gating criteria pass)");
    return failed ? 1 : 0;
}
