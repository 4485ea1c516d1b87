// lebench: run annotation experiments, generate synthetic embedding stores,
// aggregate results and run the oracle-equivalence checks.

#include "lebench/engine.hpp"
#include "lebench/log.hpp"
#include "lebench/verify.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace lebench;

namespace {

constexpr int kUsageError = 2;
constexpr int kRuntimeError = 1;

int cmd_run(const fs::path& config_path, std::optional<std::uint64_t> seed, const std::string& out, bool resume,
            std::optional<Index> stop_after) {
    ExperimentConfig cfg = load_config(config_path);
    if (seed) cfg.seed = *seed;
    if (!out.empty()) cfg.output_dir = out;

    RunOptions opts;
    opts.stop_after_rounds = stop_after;
    ExperimentResult result;
    if (resume) {
        const auto store = load_dataset(cfg);
        const auto dir = result_dir(cfg, store.name);
        if (fs::exists(dir / "config.snapshot")) {
            result = resume_experiment(dir, opts, &cfg);
        } else {
            result = run_experiment(cfg, opts);
        }
    } else {
        result = run_experiment(cfg, opts);
    }
    for (const auto& r : result.rounds) {
        std::printf("round %lld budget %lld test_acc %.4f pool_acc %.4f (%s)\n", static_cast<long long>(r.round),
                    static_cast<long long>(r.budget), r.test_accuracy, r.pool_accuracy,
                    std::string(to_string(r.tier)).c_str());
    }
    if (result.final_record) {
        const auto& f = *result.final_record;
        std::printf("final budget %lld test_acc %.4f pool_acc %.4f (%s)\n", static_cast<long long>(f.budget),
                    f.test_accuracy, f.pool_accuracy, std::string(to_string(f.tier)).c_str());
    } else {
        std::printf("stopped after %zu rounds; resume with --resume\n", result.rounds.size());
    }
    std::printf("results: %s\n", result.dir.string().c_str());
    return 0;
}

int cmd_gen_synth(const SyntheticSpec& spec, double val, double test, std::uint64_t split_seed,
                  const std::string& name, const fs::path& out) {
    auto store = split_dataset(generate_synthetic(spec), val, test, split_seed);
    if (!name.empty()) store.name = name;
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_store(store, out);
    const auto m = Manifest::describe(store);
    std::printf("wrote %s: n=%llu d=%u v=%u k=%u pool=%llu val=%llu test=%llu\n", out.string().c_str(),
                static_cast<unsigned long long>(m.n), m.d, m.v, m.k, static_cast<unsigned long long>(m.n_pool),
                static_cast<unsigned long long>(m.n_val), static_cast<unsigned long long>(m.n_test));
    return 0;
}

int cmd_report(const fs::path& dir, const std::string& out) {
    const auto runs = find_runs(dir);
    if (runs.empty()) {
        std::fprintf(stderr, "error: no completed runs under %s\n", dir.string().c_str());
        return kRuntimeError;
    }
    const auto csv = comparison_csv(compare_runs(runs));
    if (out.empty() || out == "-") {
        std::cout << csv;
    } else {
        std::ofstream file(out);
        if (!file) throw Error(ErrorKind::IoError, "cannot write " + out);
        file << csv;
        std::printf("wrote %s from %zu runs\n", out.c_str(), runs.size());
    }
    return 0;
}

int cmd_verify(const std::vector<std::string>& only, const std::string& fault) {
    VerifyOptions opts;
    opts.only = only;
    opts.inject_fault = fault;
    const auto results = run_verify(opts);
    bool ok = true;
    for (const auto& r : results) {
        std::printf("%-16s %s  residual=%.3e  tolerance=%.1e  %s\n", r.name.c_str(), r.passed ? "PASS" : "FAIL",
                    r.residual, r.tolerance, r.detail.c_str());
        ok &= r.passed;
    }
    if (!ok) {
        std::fprintf(stderr, "failing checks:");
        for (const auto& r : results)
            if (!r.passed) std::fprintf(stderr, " %s", r.name.c_str());
        std::fprintf(stderr, "\n");
    }
    return ok ? 0 : kRuntimeError;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"label-efficient learning benchmark engine"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "run (or resume) one experiment from a config file");
    fs::path config_path;
    std::optional<std::uint64_t> seed;
    std::string run_out;
    bool resume = false;
    std::optional<Index> stop_after;
    run->add_option("--config", config_path, "experiment config file")->required();
    run->add_option("--seed", seed, "override the config seed");
    run->add_option("--out", run_out, "results root (default: config, then $" + std::string(kResultsEnv) + ")");
    run->add_flag("--resume", resume, "continue an interrupted run in the same results directory");
    run->add_option("--stop-after", stop_after, "stop after this many rounds (simulated interruption)");

    auto* gen = app.add_subcommand("gen-synth", "write a synthetic Gaussian-mixture embedding store");
    SyntheticSpec spec;
    double val = 0.1, test = 0.2;
    std::uint64_t split_seed = 1;
    std::string name;
    fs::path gen_out;
    gen->add_option("--k", spec.k, "classes")->capture_default_str();
    gen->add_option("--n", spec.n, "examples")->capture_default_str();
    gen->add_option("--d", spec.d, "embedding dimension")->capture_default_str();
    gen->add_option("--v", spec.v, "views (view 0 canonical)")->capture_default_str();
    gen->add_option("--separation", spec.separation, "class-mean distance scale")->capture_default_str();
    gen->add_option("--noise", spec.noise, "augmentation view noise")->capture_default_str();
    gen->add_option("--seed", spec.seed, "generator seed")->capture_default_str();
    gen->add_option("--val", val, "validation fraction")->capture_default_str();
    gen->add_option("--test", test, "test fraction")->capture_default_str();
    gen->add_option("--split-seed", split_seed, "split seed")->capture_default_str();
    gen->add_option("--name", name, "dataset name");
    gen->add_option("--out", gen_out, "output .lebm path")->required();

    auto* report = app.add_subcommand("report", "aggregate completed runs into a comparison CSV");
    fs::path report_dir;
    std::string report_out;
    report->add_option("--dir", report_dir, "results directory to scan")->required();
    report->add_option("--out", report_out, "CSV path (stdout when omitted)");

    auto* verify = app.add_subcommand("verify", "run the oracle-equivalence checks");
    std::vector<std::string> only;
    std::string fault;
    verify->add_option("--check", only, "run only the named check(s)");
    verify->add_option("--inject-fault", fault, "corrupt the implementation side of a check (mutation test)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsageError;
    }

    try {
        if (*run) return cmd_run(config_path, seed, run_out, resume, stop_after);
        if (*gen) return cmd_gen_synth(spec, val, test, split_seed, name, gen_out);
        if (*report) return cmd_report(report_dir, report_out);
        if (*verify) return cmd_verify(only, fault);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kRuntimeError;
    }
    return kUsageError;
}
