#include "lebench/data.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace lebench {

static_assert(std::endian::native == std::endian::little, "store codec assumes a little-endian host");

IndexList EmbeddingStore::indices_of(Split split) const {
    IndexList out;
    for (std::size_t i = 0; i < splits.size(); ++i)
        if (splits[i] == split) out.push_back(static_cast<Index>(i));
    return out;
}

MatrixXd EmbeddingStore::features(Index view, std::span<const Index> rows) const {
    const auto& src = views.at(static_cast<std::size_t>(view));
    MatrixXd out(static_cast<Index>(rows.size()), src.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Index>(r)) = src.row(rows[r]).cast<double>();
    return out;
}

void EmbeddingStore::validate() const {
    if (k < 1) throw Error(ErrorKind::InvalidStore, "class count must be positive");
    if (views.empty()) throw Error(ErrorKind::InvalidStore, "store has no views");
    if (splits.size() != labels.size()) throw Error(ErrorKind::InvalidStore, "split/label length mismatch");
    for (const auto& view : views) {
        if (view.rows() != n() || view.cols() != d())
            throw Error(ErrorKind::InvalidStore, "view shape mismatch");
        if (!view.allFinite()) throw Error(ErrorKind::InvalidStore, "non-finite feature value");
    }
    std::vector<bool> trainable(k, false);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= k)
            throw Error(ErrorKind::InvalidStore, "label " + std::to_string(labels[i]) + " out of range");
        if (static_cast<std::uint8_t>(splits[i]) > 2) throw Error(ErrorKind::InvalidStore, "bad split tag");
        if (splits[i] != Split::Test) trainable[labels[i]] = true;
    }
    for (std::uint32_t c = 0; c < k; ++c)
        if (!trainable[c])
            throw Error(ErrorKind::InvalidStore, "class " + std::to_string(c) + " absent from pool and val");
    if (!class_names.empty() && class_names.size() != k)
        throw Error(ErrorKind::InvalidStore, "class name count mismatch");
}

Manifest Manifest::describe(const EmbeddingStore& store) {
    Manifest m;
    m.name = store.name;
    m.n = static_cast<std::uint64_t>(store.n());
    m.d = static_cast<std::uint32_t>(store.d());
    m.v = static_cast<std::uint32_t>(store.v());
    m.k = store.k;
    for (Split s : store.splits) {
        if (s == Split::Pool) ++m.n_pool;
        else if (s == Split::Val) ++m.n_val;
        else ++m.n_test;
    }
    m.class_names = store.class_names;
    m.generator_seed = store.generator_seed;
    m.format_version = kStoreVersion;
    return m;
}

std::filesystem::path manifest_path(const std::filesystem::path& store_path) {
    auto p = store_path;
    p += ".manifest";
    return p;
}

namespace {

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
    std::uint8_t buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out.insert(out.end(), buf, buf + sizeof(T));
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T value;
        std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }

    void read_into(void* dst, std::size_t count) {
        need(count);
        std::memcpy(dst, bytes_.data() + pos_, count);
        pos_ += count;
    }

    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::size_t count) const {
        if (bytes_.size() - pos_ < count)
            throw Error(ErrorKind::TruncatedPayload, "needed " + std::to_string(count) + " more bytes, have " +
                                                         std::to_string(bytes_.size() - pos_));
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

constexpr char kMagic[4] = {'L', 'E', 'B', 'M'};

}  // namespace

std::vector<std::uint8_t> encode_store(const EmbeddingStore& store) {
    store.validate();
    const auto n = static_cast<std::uint64_t>(store.n());
    const auto d = static_cast<std::uint32_t>(store.d());
    std::vector<std::uint8_t> out;
    out.reserve(kStoreHeaderBytes + n * 5 + store.views.size() * n * d * 4);
    out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
    put(out, kStoreVersion);
    put(out, n);
    put(out, d);
    put(out, static_cast<std::uint32_t>(store.v()));
    put(out, store.k);
    for (auto label : store.labels) put(out, label);
    for (auto split : store.splits) put(out, static_cast<std::uint8_t>(split));
    for (const auto& view : store.views) {
        const auto* bytes = reinterpret_cast<const std::uint8_t*>(view.data());
        out.insert(out.end(), bytes, bytes + view.size() * sizeof(float));
    }
    return out;
}

EmbeddingStore decode_store(std::span<const std::uint8_t> bytes) {
    Reader in(bytes);
    char magic[4];
    in.read_into(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw Error(ErrorKind::BadMagic, "not an LEBM embedding store");
    const auto version = in.get<std::uint32_t>();
    if (version != kStoreVersion)
        throw Error(ErrorKind::VersionMismatch, "store version " + std::to_string(version));
    const auto n = in.get<std::uint64_t>();
    const auto d = in.get<std::uint32_t>();
    const auto v = in.get<std::uint32_t>();
    const auto k = in.get<std::uint32_t>();
    if (v == 0 || d == 0) throw Error(ErrorKind::InvalidStore, "zero view count or dimension");

    // check the total length before allocating anything sized by the header
    const long double expected = static_cast<long double>(n) * (5.0L + 4.0L * d * v);
    if (expected != static_cast<long double>(in.remaining())) {
        throw Error(ErrorKind::TruncatedPayload, "header describes " + std::to_string(n) + " rows x " +
                                                     std::to_string(d) + " dims x " + std::to_string(v) +
                                                     " views but payload has " + std::to_string(in.remaining()) +
                                                     " bytes");
    }

    EmbeddingStore store;
    store.k = k;
    store.labels.resize(n);
    in.read_into(store.labels.data(), n * sizeof(std::uint32_t));
    store.splits.resize(n);
    for (auto& s : store.splits) {
        const auto tag = in.get<std::uint8_t>();
        if (tag > 2) throw Error(ErrorKind::InvalidStore, "bad split tag " + std::to_string(tag));
        s = static_cast<Split>(tag);
    }
    store.views.resize(v);
    for (auto& view : store.views) {
        view.resize(static_cast<Index>(n), d);
        in.read_into(view.data(), n * d * sizeof(float));
    }
    store.validate();
    return store;
}

void write_manifest(const Manifest& m, const std::filesystem::path& path) {
    boost::property_tree::ptree tree;
    tree.put("manifest.name", m.name);
    tree.put("manifest.format_version", m.format_version);
    tree.put("manifest.n", m.n);
    tree.put("manifest.d", m.d);
    tree.put("manifest.v", m.v);
    tree.put("manifest.k", m.k);
    tree.put("splits.pool", m.n_pool);
    tree.put("splits.val", m.n_val);
    tree.put("splits.test", m.n_test);
    if (m.generator_seed) tree.put("manifest.generator_seed", *m.generator_seed);
    std::string names;
    for (std::size_t i = 0; i < m.class_names.size(); ++i) names += (i ? "," : "") + m.class_names[i];
    tree.put("manifest.class_names", names);
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    boost::property_tree::write_ini(out, tree);
}

Manifest read_manifest(const std::filesystem::path& path) {
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::read_ini(path.string(), tree);
        Manifest m;
        m.name = tree.get<std::string>("manifest.name");
        m.format_version = tree.get<std::uint32_t>("manifest.format_version");
        m.n = tree.get<std::uint64_t>("manifest.n");
        m.d = tree.get<std::uint32_t>("manifest.d");
        m.v = tree.get<std::uint32_t>("manifest.v");
        m.k = tree.get<std::uint32_t>("manifest.k");
        m.n_pool = tree.get<std::uint64_t>("splits.pool");
        m.n_val = tree.get<std::uint64_t>("splits.val");
        m.n_test = tree.get<std::uint64_t>("splits.test");
        if (auto seed = tree.get_optional<std::uint64_t>("manifest.generator_seed")) m.generator_seed = *seed;
        std::stringstream names(tree.get<std::string>("manifest.class_names", ""));
        for (std::string name; std::getline(names, name, ',');) m.class_names.push_back(name);
        return m;
    } catch (const boost::property_tree::ptree_error& e) {
        throw Error(ErrorKind::ManifestMismatch, path.string() + ": " + e.what());
    }
}

void write_store(const EmbeddingStore& store, const std::filesystem::path& path) {
    const auto bytes = encode_store(store);
    {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    }
    write_manifest(Manifest::describe(store), manifest_path(path));
}

EmbeddingStore read_store(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoError, "cannot open dataset " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    auto store = decode_store(bytes);
    store.name = path.stem().string();
    const auto sidecar = manifest_path(path);
    if (std::filesystem::exists(sidecar)) {
        const auto manifest = read_manifest(sidecar);
        store.name = manifest.name;
        store.class_names = manifest.class_names;
        store.generator_seed = manifest.generator_seed;
        const auto actual = Manifest::describe(store);
        if (!(manifest == actual))
            throw Error(ErrorKind::ManifestMismatch, sidecar.string() + " does not match the payload of " +
                                                         path.string());
        store.validate();
    }
    return store;
}

EmbeddingStore generate_synthetic(const SyntheticSpec& spec) {
    if (spec.k < 2) throw Error(ErrorKind::InvalidParam, "need at least 2 classes");
    if (spec.d < 1) throw Error(ErrorKind::InvalidParam, "dimension must be >= 1");
    if (spec.v < 1) throw Error(ErrorKind::InvalidParam, "need at least one view");
    if (spec.n < static_cast<Index>(spec.k)) throw Error(ErrorKind::InvalidParam, "need n >= k");
    if (!(spec.noise > 0.0)) throw Error(ErrorKind::InvalidParam, "noise must be positive");
    if (!(spec.separation >= 0.0)) throw Error(ErrorKind::InvalidParam, "separation must be nonnegative");

    const Index k = spec.k, d = spec.d, n = spec.n;
    Rng dir_rng(spec.seed, "synthetic/directions");
    Eigen::MatrixXd gauss(d, k);
    for (Index c = 0; c < k; ++c)
        for (Index j = 0; j < d; ++j) gauss(j, c) = dir_rng.normal();
    Eigen::MatrixXd directions(d, k);
    if (k <= d) {
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(gauss);
        directions = qr.householderQ() * Eigen::MatrixXd::Identity(d, k);
    } else {
        directions = gauss.colwise().normalized();
    }

    Rng label_rng(spec.seed, "synthetic/labels");
    std::vector<std::uint32_t> labels(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(i % k);
    label_rng.shuffle(labels);

    EmbeddingStore store;
    store.name = "synthetic";
    store.k = spec.k;
    store.labels = labels;
    store.splits.assign(static_cast<std::size_t>(n), Split::Pool);
    store.generator_seed = spec.seed;
    for (std::uint32_t c = 0; c < spec.k; ++c) store.class_names.push_back("class_" + std::to_string(c));

    Rng feat_rng(spec.seed, "synthetic/features");
    Eigen::MatrixXd base(n, d);
    for (Index i = 0; i < n; ++i) {
        const auto c = static_cast<Index>(labels[static_cast<std::size_t>(i)]);
        for (Index j = 0; j < d; ++j) base(i, j) = spec.separation * directions(j, c) + feat_rng.normal();
    }
    store.views.emplace_back(base.cast<float>());
    for (Index view = 1; view < spec.v; ++view) {
        Rng aug_rng(spec.seed, "synthetic/augment", static_cast<std::uint64_t>(view));
        Eigen::MatrixXd aug = base;
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < d; ++j) aug(i, j) += spec.noise * aug_rng.normal();
        store.views.emplace_back(aug.cast<float>());
    }
    return store;
}

namespace {

// Largest-remainder apportionment of `total` across classes with per-class caps.
std::vector<Index> apportion(const std::vector<Index>& counts, Index n, Index total, const std::vector<Index>& caps) {
    const std::size_t k = counts.size();
    std::vector<Index> alloc(k, 0);
    std::vector<std::pair<double, std::size_t>> remainders;
    Index assigned = 0;
    for (std::size_t c = 0; c < k; ++c) {
        const double exact = static_cast<double>(total) * static_cast<double>(counts[c]) / static_cast<double>(n);
        alloc[c] = std::min(static_cast<Index>(std::floor(exact)), caps[c]);
        assigned += alloc[c];
        remainders.emplace_back(exact - std::floor(exact), c);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    // hand out the leftover one unit at a time, largest remainder first
    while (assigned < total) {
        bool progressed = false;
        for (const auto& [rem, c] : remainders) {
            if (assigned == total) break;
            if (alloc[c] < caps[c]) {
                ++alloc[c];
                ++assigned;
                progressed = true;
            }
        }
        if (!progressed) break;
    }
    if (assigned < total) throw Error(ErrorKind::ClassTooSmall, "classes too small to fill the requested split");
    return alloc;
}

}  // namespace

EmbeddingStore split_dataset(EmbeddingStore store, double val_fraction, double test_fraction, std::uint64_t seed) {
    if (!(val_fraction > 0.0 && val_fraction < 1.0) || !(test_fraction > 0.0 && test_fraction < 1.0) ||
        !(val_fraction + test_fraction < 1.0)) {
        throw Error(ErrorKind::InvalidParam, "split fractions must lie in (0,1) and sum below 1");
    }
    const Index n = store.n();
    const std::size_t k = store.k;
    std::vector<IndexList> members(k);
    for (Index i = 0; i < n; ++i) members[store.labels[static_cast<std::size_t>(i)]].push_back(i);
    std::vector<Index> counts(k);
    for (std::size_t c = 0; c < k; ++c) {
        counts[c] = static_cast<Index>(members[c].size());
        if (counts[c] == 0) throw Error(ErrorKind::ClassTooSmall, "class " + std::to_string(c) + " has no examples");
    }

    const auto n_val = static_cast<Index>(std::llround(static_cast<double>(n) * val_fraction));
    const auto n_test = static_cast<Index>(std::llround(static_cast<double>(n) * test_fraction));
    std::vector<Index> caps(k);
    for (std::size_t c = 0; c < k; ++c) caps[c] = counts[c] - 1;
    const auto val_alloc = apportion(counts, n, n_val, caps);
    for (std::size_t c = 0; c < k; ++c) caps[c] -= val_alloc[c];
    const auto test_alloc = apportion(counts, n, n_test, caps);

    Rng rng(seed, "split");
    for (std::size_t c = 0; c < k; ++c) {
        auto& rows = members[c];
        rng.shuffle(rows);
        std::size_t pos = 0;
        for (Index t = 0; t < val_alloc[c]; ++t) store.splits[static_cast<std::size_t>(rows[pos++])] = Split::Val;
        for (Index t = 0; t < test_alloc[c]; ++t) store.splits[static_cast<std::size_t>(rows[pos++])] = Split::Test;
        for (; pos < rows.size(); ++pos) store.splits[static_cast<std::size_t>(rows[pos])] = Split::Pool;
    }
    return store;
}

}  // namespace lebench
