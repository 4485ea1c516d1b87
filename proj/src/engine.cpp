#include "lebench/engine.hpp"

#include "lebench/log.hpp"
#include "lebench/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace lebench {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kSnapshotFile = "config.snapshot";
constexpr const char* kRoundsFile = "rounds.jsonl";
constexpr const char* kTimingsFile = "timings.jsonl";
constexpr const char* kStateFile = "state.json";
constexpr const char* kFinalFile = "final.json";
constexpr const char* kModelFile = "model.ckpt";

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoError, "cannot read " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_text_atomic(const fs::path& path, const std::string& text) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorKind::IoError, "cannot write " + tmp.string());
        out << text;
    }
    fs::rename(tmp, path);
}

std::vector<std::string> read_lines(const fs::path& path) {
    std::vector<std::string> lines;
    if (!fs::exists(path)) return lines;
    std::ifstream in(path);
    for (std::string line; std::getline(in, line);)
        if (!line.empty()) lines.push_back(line);
    return lines;
}

json record_json(const RoundRecord& r) {
    // wall times live in timings.jsonl so this file stays byte-reproducible
    json j;
    j["round"] = r.round;
    j["budget"] = r.budget;
    j["test_accuracy"] = r.test_accuracy;
    j["balanced_accuracy"] = r.balanced_accuracy;
    j["macro_f1"] = r.macro_f1;
    j["pool_accuracy"] = r.pool_accuracy;
    j["strategy"] = r.strategy;
    j["tier"] = std::string(to_string(r.tier));
    return j;
}

json timing_json(const RoundRecord& r) {
    json j;
    j["round"] = r.round;
    j["train_seconds"] = r.train_seconds;
    j["select_seconds"] = r.select_seconds;
    return j;
}

RoundRecord record_from(const json& j, const json* timing) {
    RoundRecord r;
    r.round = j.at("round").get<Index>();
    r.budget = j.at("budget").get<Index>();
    r.test_accuracy = j.at("test_accuracy").get<double>();
    r.balanced_accuracy = j.at("balanced_accuracy").get<double>();
    r.macro_f1 = j.at("macro_f1").get<double>();
    r.pool_accuracy = j.at("pool_accuracy").get<double>();
    r.strategy = j.at("strategy").get<std::string>();
    r.tier = parse_tier(j.at("tier").get<std::string>());
    if (timing) {
        r.train_seconds = timing->value("train_seconds", 0.0);
        r.select_seconds = timing->value("select_seconds", 0.0);
    }
    return r;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose, Index round) {
    return mix64(mix64(seed) ^ fnv1a64(purpose) ^ mix64(static_cast<std::uint64_t>(round)));
}

struct Evaluation {
    double test_accuracy, balanced_accuracy, macro_f1, pool_accuracy;
};

class Runner {
public:
    Runner(ExperimentConfig cfg, fs::path dir, std::string snapshot, EmbeddingStore store)
        : cfg_(std::move(cfg)), dir_(std::move(dir)), snapshot_(std::move(snapshot)), store_(std::move(store)),
          pool_rows_(store_.indices_of(Split::Pool)),
          test_rows_(store_.indices_of(Split::Test)),
          state_(static_cast<Index>(pool_rows_.size()), cfg_.schedule) {
        pool_X_ = store_.features(0, pool_rows_);
        test_X_ = store_.features(0, test_rows_);
        for (Index r : pool_rows_) pool_truth_.push_back(store_.labels[static_cast<std::size_t>(r)]);
        for (Index r : test_rows_) test_truth_.push_back(store_.labels[static_cast<std::size_t>(r)]);
        if (test_rows_.empty()) throw Error(ErrorKind::InvalidStore, "dataset has no test split");
    }

    ExperimentResult start_fresh(const RunOptions& opts) {
        fs::create_directories(dir_);
        for (const char* f : {kRoundsFile, kTimingsFile, kStateFile, kFinalFile, kModelFile})
            fs::remove(dir_ / f);
        write_text_atomic(dir_ / kSnapshotFile, snapshot_);
        result_.dir = dir_;
        result_.config_snapshot = snapshot_;
        return loop(opts);
    }

    ExperimentResult continue_from(ExperimentResult partial, const RunOptions& opts) {
        result_ = std::move(partial);
        for (const auto& sel : result_.selections) state_.apply_annotations(sel);
        if (!result_.selections.empty()) {
            auto model = load_checkpoint(dir_ / kModelFile);
            if (model.tier() != cfg_.loop_tier() || model.dim() != store_.d() || model.classes() != store_.k)
                throw Error(ErrorKind::CorruptCheckpoint, "checkpoint shape does not match the experiment");
            model_ = std::move(model);
        }
        // drop any half-written tail beyond the last committed round
        rewrite_logs();
        return loop(opts);
    }

private:
    ExperimentResult loop(const RunOptions& opts) {
        const std::string strategy_name(to_string(cfg_.strategy));
        while (!state_.exhausted()) {
            if (opts.stop_after_rounds && static_cast<Index>(result_.rounds.size()) >= *opts.stop_after_rounds)
                return result_;
            const Index r = state_.current_round();
            const Index batch = state_.next_batch_size();

            const auto t0 = std::chrono::steady_clock::now();
            SelectionResult sel;
            if (r == 0) {
                Rng rng(cfg_.seed, "initial", 0);
                sel = select_random(state_, batch, rng);
            } else {
                Rng rng(cfg_.seed, "strategy", static_cast<std::uint64_t>(r));
                sel = select_batch(cfg_.strategy, *model_, pool_X_, state_, batch, rng, cfg_.strategy_options);
            }
            const auto t1 = std::chrono::steady_clock::now();
            if (sel.fell_back) warn("round " + std::to_string(r) + ": selection fell back to uniform sampling");
            if (cfg_.audit) write_audit(r, sel);
            state_.apply_annotations(sel.indices);

            const Tier tier = cfg_.loop_tier();
            model_ = train(tier, cfg_.semi_sl, derive_seed(cfg_.seed, "train", r), r);
            const auto t2 = std::chrono::steady_clock::now();

            const auto eval = evaluate(*model_);
            RoundRecord rec;
            rec.round = r;
            rec.budget = state_.num_labeled();
            rec.test_accuracy = eval.test_accuracy;
            rec.balanced_accuracy = eval.balanced_accuracy;
            rec.macro_f1 = eval.macro_f1;
            rec.pool_accuracy = eval.pool_accuracy;
            rec.select_seconds = std::chrono::duration<double>(t1 - t0).count();
            rec.train_seconds = std::chrono::duration<double>(t2 - t1).count();
            rec.strategy = strategy_name;
            rec.tier = tier;
            result_.rounds.push_back(rec);
            result_.selections.push_back(sel.indices);
            commit_round(rec);
        }

        const auto t0 = std::chrono::steady_clock::now();
        const Classifier final_model = train(cfg_.final_tier, cfg_.final_semi_sl,
                                             derive_seed(cfg_.seed, "final", 0), state_.rounds());
        const auto t1 = std::chrono::steady_clock::now();
        const auto eval = evaluate(final_model);
        RoundRecord fin;
        fin.round = state_.rounds();
        fin.budget = state_.num_labeled();
        fin.test_accuracy = eval.test_accuracy;
        fin.balanced_accuracy = eval.balanced_accuracy;
        fin.macro_f1 = eval.macro_f1;
        fin.pool_accuracy = eval.pool_accuracy;
        fin.train_seconds = std::chrono::duration<double>(t1 - t0).count();
        fin.strategy = strategy_name;
        fin.tier = cfg_.final_tier;
        result_.final_record = fin;
        result_.complete = true;

        json final;
        final["status"] = "complete";
        final["final"] = record_json(fin);
        final["final_train_seconds"] = fin.train_seconds;
        write_text_atomic(dir_ / kFinalFile, final.dump(2) + "\n");
        return result_;
    }

    Classifier train(Tier tier, SemiMethod method, std::uint64_t seed, Index round) {
        TrainConfig tc = cfg_.train_config(tier);
        tc.seed = seed;
        const IndexList labeled = state_.labeled_indices();
        const IndexList unlabeled = state_.unlabeled_indices();
        IndexList labeled_rows, unlabeled_rows;
        for (Index i : labeled) labeled_rows.push_back(pool_rows_[static_cast<std::size_t>(i)]);
        for (Index i : unlabeled) unlabeled_rows.push_back(pool_rows_[static_cast<std::size_t>(i)]);
        SemiConfig semi = cfg_.semi;
        std::vector<ThresholdState> thresholds;
        if (cfg_.log_thresholds) semi.threshold_trace = &thresholds;
        auto model = train_semi_supervised(store_, labeled_rows, unlabeled_rows, method, tier, tc, semi);
        if (cfg_.log_thresholds) write_thresholds(round, thresholds);
        return model;
    }

    Evaluation evaluate(const Classifier& model) const {
        const auto test_pred = argmax_rows(predict_proba(model, test_X_));
        const auto cm = confusion(test_truth_, test_pred, store_.k);
        const auto pool_pred = argmax_rows(predict_proba(model, pool_X_));
        return {accuracy(cm), balanced_accuracy(cm), macro_f1(cm),
                pool_accuracy(pool_truth_, state_.labeled_mask(), pool_pred)};
    }

    void commit_round(const RoundRecord& rec) {
        save_checkpoint(*model_, dir_ / kModelFile);
        {
            std::ofstream out(dir_ / kRoundsFile, std::ios::app);
            out << record_json(rec).dump() << "\n";
        }
        {
            std::ofstream out(dir_ / kTimingsFile, std::ios::app);
            out << timing_json(rec).dump() << "\n";
        }
        json state;
        state["config_digest"] = fnv1a64(snapshot_);
        state["completed_rounds"] = result_.rounds.size();
        state["selections"] = result_.selections;
        write_text_atomic(dir_ / kStateFile, state.dump() + "\n");
    }

    void rewrite_logs() const {
        std::string rounds, timings;
        for (const auto& rec : result_.rounds) {
            rounds += record_json(rec).dump() + "\n";
            timings += timing_json(rec).dump() + "\n";
        }
        write_text_atomic(dir_ / kRoundsFile, rounds);
        write_text_atomic(dir_ / kTimingsFile, timings);
    }

    void write_audit(Index round, const SelectionResult& sel) const {
        fs::create_directories(dir_ / "audit");
        std::ofstream out(dir_ / "audit" / ("round_" + std::to_string(round) + ".jsonl"));
        for (std::size_t t = 0; t < sel.indices.size(); ++t) {
            json j;
            j["rank"] = t;
            j["pool_index"] = sel.indices[t];
            j["score"] = sel.scores.at(t);
            out << j.dump() << "\n";
        }
    }

    void write_thresholds(Index round, const std::vector<ThresholdState>& states) const {
        fs::create_directories(dir_ / "thresholds");
        std::ofstream out(dir_ / "thresholds" / ("round_" + std::to_string(round) + ".jsonl"));
        for (std::size_t e = 0; e < states.size(); ++e) {
            json j;
            j["epoch"] = e;
            j["per_class_tau"] = std::vector<double>(states[e].per_class_tau.begin(), states[e].per_class_tau.end());
            j["sigma"] = states[e].sigma;
            j["unused"] = states[e].unused;
            out << j.dump() << "\n";
        }
    }

    ExperimentConfig cfg_;
    fs::path dir_;
    std::string snapshot_;
    EmbeddingStore store_;
    IndexList pool_rows_, test_rows_;
    MatrixXd pool_X_, test_X_;
    std::vector<std::uint32_t> pool_truth_, test_truth_;
    LabelState state_;
    std::optional<Classifier> model_;
    ExperimentResult result_;
};

}  // namespace

EmbeddingStore load_dataset(const ExperimentConfig& cfg) {
    EmbeddingStore store;
    if (cfg.dataset_path) {
        store = read_store(*cfg.dataset_path);
    } else if (cfg.synthetic) {
        const auto& s = *cfg.synthetic;
        store = split_dataset(generate_synthetic(s.spec), s.val_fraction, s.test_fraction, s.split_seed);
    } else {
        throw Error(ErrorKind::ConfigError, "config names no dataset");
    }
    if (!cfg.dataset_name.empty()) store.name = cfg.dataset_name;
    store.validate();
    validate_schedule(cfg.schedule, static_cast<Index>(store.indices_of(Split::Pool).size()));
    return store;
}

fs::path result_dir(const ExperimentConfig& cfg, const std::string& dataset_name) {
    return cfg.output_dir / dataset_name / std::string(to_string(cfg.strategy)) / std::string(to_string(cfg.mode)) /
           std::to_string(cfg.seed);
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opts) {
    cfg.validate();
    const std::string snapshot = to_snapshot(cfg);
    auto store = load_dataset(cfg);
    const auto dir = result_dir(cfg, store.name);
    Runner runner(cfg, dir, snapshot, std::move(store));
    return runner.start_fresh(opts);
}

ExperimentResult load_result(const fs::path& dir) {
    if (!fs::exists(dir / kSnapshotFile))
        throw Error(ErrorKind::IoError, "no " + std::string(kSnapshotFile) + " in " + dir.string());
    ExperimentResult result;
    result.dir = dir;
    result.config_snapshot = read_text(dir / kSnapshotFile);

    Index completed = 0;
    if (fs::exists(dir / kStateFile)) {
        try {
            const json state = json::parse(read_text(dir / kStateFile));
            if (state.at("config_digest").get<std::uint64_t>() != fnv1a64(result.config_snapshot))
                throw Error(ErrorKind::ConfigMismatch, "config snapshot in " + dir.string() + " was modified");
            completed = state.at("completed_rounds").get<Index>();
            result.selections = state.at("selections").get<std::vector<IndexList>>();
        } catch (const json::exception& e) {
            throw Error(ErrorKind::CorruptCheckpoint, dir.string() + "/state.json: " + e.what());
        }
        if (static_cast<Index>(result.selections.size()) != completed)
            throw Error(ErrorKind::CorruptCheckpoint, "state.json selection count mismatch");
    }

    const auto lines = read_lines(dir / kRoundsFile);
    const auto timing_lines = read_lines(dir / kTimingsFile);
    if (static_cast<Index>(lines.size()) < completed)
        throw Error(ErrorKind::CorruptCheckpoint, "rounds.jsonl has fewer records than committed rounds");
    try {
        for (Index r = 0; r < completed; ++r) {
            const json rec = json::parse(lines[static_cast<std::size_t>(r)]);
            std::optional<json> timing;
            if (static_cast<std::size_t>(r) < timing_lines.size()) timing = json::parse(timing_lines[static_cast<std::size_t>(r)]);
            result.rounds.push_back(record_from(rec, timing ? &*timing : nullptr));
        }
        if (fs::exists(dir / kFinalFile)) {
            const json fin = json::parse(read_text(dir / kFinalFile));
            if (fin.at("status").get<std::string>() == "complete") {
                const json timing = {{"train_seconds", fin.value("final_train_seconds", 0.0)}};
                result.final_record = record_from(fin.at("final"), &timing);
                result.complete = true;
            }
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::CorruptCheckpoint, dir.string() + ": " + e.what());
    }
    return result;
}

ExperimentResult resume_experiment(const fs::path& dir, const RunOptions& opts, const ExperimentConfig* expected) {
    auto partial = load_result(dir);
    if (expected && to_snapshot(*expected) != partial.config_snapshot)
        throw Error(ErrorKind::ConfigMismatch, "config differs from the snapshot stored in " + dir.string());
    if (partial.complete) return partial;
    ExperimentConfig cfg = parse_config(partial.config_snapshot);
    auto store = load_dataset(cfg);
    Runner runner(cfg, dir, partial.config_snapshot, std::move(store));
    return runner.continue_from(std::move(partial), opts);
}

std::vector<fs::path> find_runs(const fs::path& root) {
    std::vector<fs::path> runs;
    if (!fs::exists(root)) return runs;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (entry.is_regular_file() && entry.path().filename() == kFinalFile)
            runs.push_back(entry.path().parent_path());
    }
    std::sort(runs.begin(), runs.end());
    return runs;
}

std::vector<ComparisonRow> compare_runs(const std::vector<fs::path>& dirs) {
    if (dirs.empty()) throw Error(ErrorKind::IncompatibleRuns, "no runs to compare");
    struct Run {
        ExperimentConfig cfg;
        ExperimentResult result;
    };
    std::vector<Run> runs;
    for (const auto& dir : dirs) {
        auto result = load_result(dir);
        if (!result.complete) throw Error(ErrorKind::IncompatibleRuns, dir.string() + " is not a completed run");
        runs.push_back({parse_config(result.config_snapshot), std::move(result)});
    }

    auto dataset_key = [](const ExperimentConfig& c) {
        std::string key = c.dataset_name;
        if (c.dataset_path) key += "|" + fs::absolute(*c.dataset_path).lexically_normal().string();
        if (c.synthetic) {
            ExperimentConfig probe;
            probe.synthetic = c.synthetic;
            probe.schedule = {1};
            key += "|" + to_snapshot(probe).substr(to_snapshot(probe).find("[synthetic]"));
        }
        return key;
    };
    const auto& ref = runs.front().cfg;
    bool modes_vary = false, semi_vary = false;
    for (const auto& run : runs) {
        if (run.cfg.schedule != ref.schedule)
            throw Error(ErrorKind::IncompatibleRuns, run.result.dir.string() + " uses a different schedule");
        if (dataset_key(run.cfg) != dataset_key(ref))
            throw Error(ErrorKind::IncompatibleRuns, run.result.dir.string() + " uses a different dataset");
        modes_vary |= run.cfg.mode != ref.mode;
        semi_vary |= run.cfg.semi_sl != ref.semi_sl;
    }

    std::map<std::string, std::vector<const Run*>> groups;
    for (const auto& run : runs) {
        std::string label(to_string(run.cfg.strategy));
        if (modes_vary) label += "/" + std::string(to_string(run.cfg.mode));
        if (semi_vary) label += "/" + std::string(to_string(run.cfg.semi_sl));
        groups[label].push_back(&run);
    }

    auto mean_and_stderr = [](const std::vector<double>& xs) {
        const double n = static_cast<double>(xs.size());
        double mean = 0.0;
        for (double x : xs) mean += x;
        mean /= n;
        std::optional<double> se;
        if (xs.size() > 1) {
            double ss = 0.0;
            for (double x : xs) ss += (x - mean) * (x - mean);
            se = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
        }
        return std::pair{mean, se};
    };
    auto summarize = [&](const std::string& round, Index budget, const std::string& label,
                         const std::vector<const RoundRecord*>& recs) {
        std::vector<double> test, pool, bal, f1;
        for (const auto* r : recs) {
            test.push_back(r->test_accuracy);
            pool.push_back(r->pool_accuracy);
            bal.push_back(r->balanced_accuracy);
            f1.push_back(r->macro_f1);
        }
        ComparisonRow row;
        row.round = round;
        row.budget = budget;
        row.strategy = label;
        row.trials = recs.size();
        std::tie(row.mean_test_acc, row.stderr_test_acc) = mean_and_stderr(test);
        std::tie(row.mean_pool_acc, row.stderr_pool_acc) = mean_and_stderr(pool);
        row.mean_balanced_acc = mean_and_stderr(bal).first;
        row.mean_macro_f1 = mean_and_stderr(f1).first;
        return row;
    };

    std::vector<ComparisonRow> rows;
    for (const auto& [label, members] : groups) {
        if (members.size() == 1) warn("group '" + label + "' has a single trial; standard error left empty");
        const std::size_t n_rounds = ref.schedule.size();
        for (std::size_t r = 0; r < n_rounds; ++r) {
            std::vector<const RoundRecord*> recs;
            for (const auto* run : members) recs.push_back(&run->result.rounds.at(r));
            rows.push_back(summarize(std::to_string(r), recs.front()->budget, label, recs));
        }
        std::vector<const RoundRecord*> finals;
        for (const auto* run : members) finals.push_back(&*run->result.final_record);
        rows.push_back(summarize("final", finals.front()->budget, label, finals));
    }
    return rows;
}

std::string comparison_csv(const std::vector<ComparisonRow>& rows) {
    std::ostringstream out;
    out.precision(17);
    auto opt = [](const std::optional<double>& x) {
        if (!x) return std::string{};
        std::ostringstream s;
        s.precision(17);
        s << *x;
        return s.str();
    };
    out << "round,budget,strategy,trials,mean_test_acc,stderr_test_acc,mean_pool_acc,stderr_pool_acc,mean_balanced_acc,"
           "mean_macro_f1\n";
    for (const auto& r : rows) {
        out << r.round << "," << r.budget << "," << r.strategy << "," << r.trials << "," << r.mean_test_acc << ","
            << opt(r.stderr_test_acc) << "," << r.mean_pool_acc << "," << opt(r.stderr_pool_acc) << ","
            << r.mean_balanced_acc << "," << r.mean_macro_f1 << "\n";
    }
    return out.str();
}

}  // namespace lebench
