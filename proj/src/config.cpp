#include "lebench/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace lebench {

std::string_view to_string(SelectionMode mode) { return mode == SelectionMode::Proxy ? "proxy" : "end_to_end"; }

SelectionMode parse_mode(std::string_view text) {
    if (text == "proxy") return SelectionMode::Proxy;
    if (text == "end_to_end") return SelectionMode::EndToEnd;
    throw Error(ErrorKind::ConfigError, "unknown selection mode '" + std::string(text) + "'");
}

namespace {

std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& raw) {
    const std::string text = trim(raw);
    T value{};
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty())
        throw Error(ErrorKind::ConfigError, "key '" + key + "': cannot parse '" + text + "'");
    return value;
}

bool parse_bool(const std::string& key, const std::string& raw) {
    const std::string text = trim(raw);
    if (text == "true") return true;
    if (text == "false") return false;
    throw Error(ErrorKind::ConfigError, "key '" + key + "': expected true or false, got '" + text + "'");
}

std::string format_double(double x) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, ptr);
}

// Inline comments need whitespace before the marker: "x = 1  # note".
std::string strip_comment(const std::string& raw) {
    for (std::size_t i = 1; i < raw.size(); ++i) {
        if ((raw[i] == '#' || raw[i] == ';') && (raw[i - 1] == ' ' || raw[i - 1] == '\t')) return raw.substr(0, i);
    }
    return raw;
}

// Strict section reader: every key must be consumed exactly by a handler.
class Section {
public:
    Section(std::string name, const boost::property_tree::ptree& tree) : name_(std::move(name)) {
        for (const auto& [key, child] : tree) {
            if (!child.empty())
                throw Error(ErrorKind::ConfigError, "nested value under [" + name_ + "] " + key);
            values_[key] = strip_comment(child.data());
        }
    }

    template <typename F>
    void take(const std::string& key, F&& apply) {
        auto it = values_.find(key);
        if (it == values_.end()) return;
        apply(name_ + "." + key, it->second);
        values_.erase(it);
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    void finish() const {
        if (!values_.empty())
            throw Error(ErrorKind::ConfigError, "unknown key '" + values_.begin()->first + "' in [" + name_ + "]");
    }

private:
    std::string name_;
    std::map<std::string, std::string> values_;
};

void read_train(Section& s, TrainConfig& t) {
    s.take("epochs", [&](const auto& k, const auto& v) { t.epochs = parse_number<int>(k, v); });
    s.take("batch_size", [&](const auto& k, const auto& v) { t.batch_size = parse_number<Index>(k, v); });
    s.take("learning_rate", [&](const auto& k, const auto& v) { t.learning_rate = parse_number<double>(k, v); });
    s.take("weight_decay", [&](const auto& k, const auto& v) { t.weight_decay = parse_number<double>(k, v); });
    s.take("momentum", [&](const auto& k, const auto& v) { t.momentum = parse_number<double>(k, v); });
    s.finish();
}

void write_train(std::ostream& out, const char* name, const TrainConfig& t) {
    out << "\n[" << name << "]\n"
        << "epochs = " << t.epochs << "\n"
        << "batch_size = " << t.batch_size << "\n"
        << "learning_rate = " << format_double(t.learning_rate) << "\n"
        << "weight_decay = " << format_double(t.weight_decay) << "\n"
        << "momentum = " << format_double(t.momentum) << "\n";
}

}  // namespace

std::vector<Index> parse_schedule(const std::string& text) {
    std::vector<Index> out;
    std::stringstream items(text);
    for (std::string item; std::getline(items, item, ',');) {
        item = trim(item);
        const auto x = item.find('x');
        if (x == std::string::npos) {
            out.push_back(parse_number<Index>("schedule", item));
        } else {
            const auto size = parse_number<Index>("schedule", item.substr(0, x));
            const auto repeat = parse_number<Index>("schedule", item.substr(x + 1));
            if (repeat < 1) throw Error(ErrorKind::ConfigError, "schedule repeat must be >= 1");
            out.insert(out.end(), static_cast<std::size_t>(repeat), size);
        }
    }
    return out;
}

std::string format_schedule(const std::vector<Index>& schedule) {
    std::string out;
    for (std::size_t i = 0; i < schedule.size();) {
        std::size_t j = i;
        while (j < schedule.size() && schedule[j] == schedule[i]) ++j;
        if (!out.empty()) out += ", ";
        out += std::to_string(schedule[i]);
        if (j - i > 1) out += "x" + std::to_string(j - i);
        i = j;
    }
    return out;
}

void ExperimentConfig::validate() const {
    if (dataset_path.has_value() == synthetic.has_value())
        throw Error(ErrorKind::ConfigError, "exactly one of [dataset] path or [synthetic] is required");
    if (schedule.empty()) throw Error(ErrorKind::ConfigError, "experiment.schedule is required");
    for (Index b : schedule)
        if (b < 1) throw Error(ErrorKind::ConfigError, "schedule entries must be >= 1");
    if (final_tier != Tier::Shallow) throw Error(ErrorKind::ConfigError, "final tier must be shallow");
    train_linear.validate();
    train_shallow.validate();
    semi.validate();
    if (strategy_options.bait.sweeps < 0 || strategy_options.bait.candidates < 1 ||
        strategy_options.bait_pca_dim < 1 || !(strategy_options.bait_lambda > 0.0))
        throw Error(ErrorKind::ConfigError, "invalid BAIT options");
}

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
    boost::property_tree::ptree tree;
    try {
        std::istringstream in(text);
        boost::property_tree::read_ini(in, tree);
    } catch (const boost::property_tree::ptree_error& e) {
        throw Error(ErrorKind::ConfigError, e.what());
    }

    ExperimentConfig cfg;
    if (const char* root = std::getenv(kResultsEnv); root && *root) cfg.output_dir = root;
    const std::set<std::string> known = {"experiment", "dataset", "synthetic", "train_linear", "train_shallow",
                                         "semisl", "strategy"};
    for (const auto& [name, child] : tree) {
        if (!known.count(name)) {
            if (child.empty()) throw Error(ErrorKind::ConfigError, "key '" + name + "' outside any section");
            throw Error(ErrorKind::ConfigError, "unknown section [" + name + "]");
        }
    }
    auto section = [&](const std::string& name) {
        auto child = tree.get_child_optional(name);
        return Section(name, child ? *child : boost::property_tree::ptree{});
    };

    Section exp = section("experiment");
    exp.take("strategy", [&](const auto&, const auto& v) { cfg.strategy = parse_strategy(trim(v)); });
    exp.take("semi_sl", [&](const auto&, const auto& v) { cfg.semi_sl = parse_semi_method(trim(v)); });
    exp.take("final_semi_sl", [&](const auto&, const auto& v) { cfg.final_semi_sl = parse_semi_method(trim(v)); });
    exp.take("proxy_tier", [&](const auto&, const auto& v) { cfg.proxy_tier = parse_tier(trim(v)); });
    exp.take("final_tier", [&](const auto&, const auto& v) { cfg.final_tier = parse_tier(trim(v)); });
    exp.take("mode", [&](const auto&, const auto& v) { cfg.mode = parse_mode(trim(v)); });
    exp.take("schedule", [&](const auto&, const auto& v) { cfg.schedule = parse_schedule(v); });
    exp.take("seed", [&](const auto& k, const auto& v) { cfg.seed = parse_number<std::uint64_t>(k, v); });
    exp.take("output_dir", [&](const auto&, const auto& v) { cfg.output_dir = trim(v); });
    exp.take("audit", [&](const auto& k, const auto& v) { cfg.audit = parse_bool(k, v); });
    exp.take("log_thresholds", [&](const auto& k, const auto& v) { cfg.log_thresholds = parse_bool(k, v); });
    exp.finish();

    if (tree.get_child_optional("dataset")) {
        Section ds = section("dataset");
        ds.take("path", [&](const auto&, const auto& v) {
            std::filesystem::path p = trim(v);
            cfg.dataset_path = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
        });
        ds.take("name", [&](const auto&, const auto& v) { cfg.dataset_name = trim(v); });
        ds.finish();
    }
    if (tree.get_child_optional("synthetic")) {
        Section syn = section("synthetic");
        SyntheticDataset s;
        syn.take("k", [&](const auto& k, const auto& v) { s.spec.k = parse_number<std::uint32_t>(k, v); });
        syn.take("n", [&](const auto& k, const auto& v) { s.spec.n = parse_number<Index>(k, v); });
        syn.take("d", [&](const auto& k, const auto& v) { s.spec.d = parse_number<Index>(k, v); });
        syn.take("v", [&](const auto& k, const auto& v) { s.spec.v = parse_number<Index>(k, v); });
        syn.take("separation", [&](const auto& k, const auto& v) { s.spec.separation = parse_number<double>(k, v); });
        syn.take("noise", [&](const auto& k, const auto& v) { s.spec.noise = parse_number<double>(k, v); });
        syn.take("seed", [&](const auto& k, const auto& v) { s.spec.seed = parse_number<std::uint64_t>(k, v); });
        syn.take("val_fraction", [&](const auto& k, const auto& v) { s.val_fraction = parse_number<double>(k, v); });
        syn.take("test_fraction", [&](const auto& k, const auto& v) { s.test_fraction = parse_number<double>(k, v); });
        syn.take("split_seed", [&](const auto& k, const auto& v) { s.split_seed = parse_number<std::uint64_t>(k, v); });
        syn.take("name", [&](const auto&, const auto& v) { cfg.dataset_name = trim(v); });
        syn.finish();
        cfg.synthetic = s;
    }

    Section tl = section("train_linear");
    read_train(tl, cfg.train_linear);
    Section ts = section("train_shallow");
    read_train(ts, cfg.train_shallow);

    Section semi = section("semisl");
    semi.take("lambda_u", [&](const auto& k, const auto& v) { cfg.semi.lambda_u = parse_number<double>(k, v); });
    semi.take("fixed_tau", [&](const auto& k, const auto& v) { cfg.semi.fixed_tau = parse_number<double>(k, v); });
    semi.take("base_tau", [&](const auto& k, const auto& v) { cfg.semi.base_tau = parse_number<double>(k, v); });
    semi.take("unlabeled_ratio", [&](const auto& k, const auto& v) { cfg.semi.unlabeled_ratio = parse_number<Index>(k, v); });
    semi.finish();

    Section st = section("strategy");
    auto& so = cfg.strategy_options;
    st.take("badge_first_center", [&](const auto& k, const auto& v) {
        const auto mode = trim(v);
        if (mode != "norm" && mode != "uniform")
            throw Error(ErrorKind::ConfigError, k + ": expected norm or uniform");
        so.badge.first_center_by_norm = mode == "norm";
    });
    st.take("bait_pca_dim", [&](const auto& k, const auto& v) { so.bait_pca_dim = parse_number<Index>(k, v); });
    st.take("bait_lambda", [&](const auto& k, const auto& v) { so.bait_lambda = parse_number<double>(k, v); });
    st.take("bait_sweeps", [&](const auto& k, const auto& v) { so.bait.sweeps = parse_number<int>(k, v); });
    st.take("bait_candidates", [&](const auto& k, const auto& v) { so.bait.candidates = parse_number<Index>(k, v); });
    st.take("bait_include_labeled", [&](const auto& k, const auto& v) { so.bait.include_labeled = parse_bool(k, v); });
    st.finish();

    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoError, "cannot open config " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config(buffer.str(), path.parent_path());
}

std::string to_snapshot(const ExperimentConfig& cfg) {
    std::ostringstream out;
    out << "[experiment]\n"
        << "strategy = " << to_string(cfg.strategy) << "\n"
        << "semi_sl = " << to_string(cfg.semi_sl) << "\n"
        << "final_semi_sl = " << to_string(cfg.final_semi_sl) << "\n"
        << "proxy_tier = " << to_string(cfg.proxy_tier) << "\n"
        << "final_tier = " << to_string(cfg.final_tier) << "\n"
        << "mode = " << to_string(cfg.mode) << "\n"
        << "schedule = " << format_schedule(cfg.schedule) << "\n"
        << "seed = " << cfg.seed << "\n"
        << "audit = " << (cfg.audit ? "true" : "false") << "\n"
        << "log_thresholds = " << (cfg.log_thresholds ? "true" : "false") << "\n";
    if (cfg.dataset_path) {
        out << "\n[dataset]\npath = " << std::filesystem::absolute(*cfg.dataset_path).lexically_normal().string()
            << "\n";
        if (!cfg.dataset_name.empty()) out << "name = " << cfg.dataset_name << "\n";
    }
    if (cfg.synthetic) {
        const auto& s = *cfg.synthetic;
        out << "\n[synthetic]\n"
            << "k = " << s.spec.k << "\n"
            << "n = " << s.spec.n << "\n"
            << "d = " << s.spec.d << "\n"
            << "v = " << s.spec.v << "\n"
            << "separation = " << format_double(s.spec.separation) << "\n"
            << "noise = " << format_double(s.spec.noise) << "\n"
            << "seed = " << s.spec.seed << "\n"
            << "val_fraction = " << format_double(s.val_fraction) << "\n"
            << "test_fraction = " << format_double(s.test_fraction) << "\n"
            << "split_seed = " << s.split_seed << "\n";
        if (!cfg.dataset_name.empty()) out << "name = " << cfg.dataset_name << "\n";
    }
    write_train(out, "train_linear", cfg.train_linear);
    write_train(out, "train_shallow", cfg.train_shallow);
    out << "\n[semisl]\n"
        << "lambda_u = " << format_double(cfg.semi.lambda_u) << "\n"
        << "fixed_tau = " << format_double(cfg.semi.fixed_tau) << "\n"
        << "base_tau = " << format_double(cfg.semi.base_tau) << "\n"
        << "unlabeled_ratio = " << cfg.semi.unlabeled_ratio << "\n";
    const auto& so = cfg.strategy_options;
    out << "\n[strategy]\n"
        << "badge_first_center = " << (so.badge.first_center_by_norm ? "norm" : "uniform") << "\n"
        << "bait_pca_dim = " << so.bait_pca_dim << "\n"
        << "bait_lambda = " << format_double(so.bait_lambda) << "\n"
        << "bait_sweeps = " << so.bait.sweeps << "\n"
        << "bait_candidates = " << so.bait.candidates << "\n"
        << "bait_include_labeled = " << (so.bait.include_labeled ? "true" : "false") << "\n";
    return out.str();
}

}  // namespace lebench
