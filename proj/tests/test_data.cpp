#include <doctest.h>

#include "lebench/data.hpp"
#include "lebench/metrics.hpp"
#include "lebench/models.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace lebench;
namespace fs = std::filesystem;

namespace {

template <typename F>
ErrorKind kind_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an lebench::Error");
    return ErrorKind::InvalidParam;
}

EmbeddingStore random_store(Index n, Index d, Index v, std::uint32_t k, std::uint64_t seed) {
    Rng rng(seed, "test/store");
    EmbeddingStore s;
    s.name = "random";
    s.k = k;
    for (Index view = 0; view < v; ++view) {
        EmbeddingStore::FeatureMatrix m(n, d);
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < d; ++j) m(i, j) = static_cast<float>(rng.normal());
        s.views.push_back(m);
    }
    for (Index i = 0; i < n; ++i) {
        s.labels.push_back(static_cast<std::uint32_t>(i % k));
        s.splits.push_back(static_cast<Split>(rng.below(3)));
    }
    for (std::uint32_t c = 0; c < k; ++c) s.splits[c] = Split::Pool;
    return s;
}

fs::path temp_dir(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("lebench_test_data_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

double test_accuracy(const EmbeddingStore& s, const IndexList& train_rows) {
    TrainConfig cfg = default_train_config(Tier::Linear);
    cfg.seed = 3;
    const auto model = train_supervised(s, train_rows, Tier::Linear, cfg);
    const auto test = s.indices_of(Split::Test);
    const auto preds = argmax_rows(predict_proba(model, s.features(0, test)));
    std::vector<std::uint32_t> truth;
    for (Index i : test) truth.push_back(s.labels[static_cast<std::size_t>(i)]);
    return accuracy(confusion(truth, preds, s.k));
}

}  // namespace

TEST_CASE("codec round trip") {
    const auto s = random_store(100, 8, 2, 3, 1);
    const auto bytes = encode_store(s);
    CHECK(bytes.size() == kStoreHeaderBytes + 100 * 4 + 100 + 2 * 100 * 8 * 4);
    const auto back = decode_store(bytes);
    CHECK(back.views == s.views);
    CHECK(back.labels == s.labels);
    CHECK(back.splits == s.splits);
    CHECK(back.k == s.k);
}

TEST_CASE("file round trip with manifest sidecar") {
    auto s = random_store(100, 8, 2, 3, 2);
    s.class_names = {"a", "b", "c"};
    s.generator_seed = 42;
    const auto path = temp_dir("roundtrip") / "store.lebm";
    write_store(s, path);
    CHECK(fs::exists(manifest_path(path)));
    const auto back = read_store(path);
    CHECK(back == s);
    const auto m = read_manifest(manifest_path(path));
    CHECK(m == Manifest::describe(s));
}

TEST_CASE("codec errors") {
    const auto s = random_store(100, 8, 2, 3, 3);
    auto bytes = encode_store(s);

    auto bad_magic = bytes;
    bad_magic[0] ^= 0xFF;
    CHECK(kind_of([&] { decode_store(bad_magic); }) == ErrorKind::BadMagic);

    auto bad_version = bytes;
    bad_version[4] = 99;
    CHECK(kind_of([&] { decode_store(bad_version); }) == ErrorKind::VersionMismatch);

    // header claims n = 100 but only 99 rows of payload follow
    const auto short_store = encode_store(random_store(99, 8, 2, 3, 3));
    auto lying = short_store;
    std::copy(bytes.begin() + 8, bytes.begin() + 16, lying.begin() + 8);
    CHECK(kind_of([&] { decode_store(lying); }) == ErrorKind::TruncatedPayload);

    bytes.pop_back();
    CHECK(kind_of([&] { decode_store(bytes); }) == ErrorKind::TruncatedPayload);
    CHECK(kind_of([&] { decode_store(std::span<const std::uint8_t>(bytes.data(), 10)); }) ==
          ErrorKind::TruncatedPayload);
}

TEST_CASE("property: every single-byte header corruption is detected or harmless") {
    const auto s = random_store(30, 4, 2, 3, 4);
    const auto bytes = encode_store(s);
    for (std::size_t pos = 0; pos < kStoreHeaderBytes; ++pos) {
        auto corrupt = bytes;
        corrupt[pos] ^= 0x5A;
        bool threw = false;
        try {
            const auto back = decode_store(corrupt);
            // the k field can grow without invalidating anything
            CHECK(back.views == s.views);
        } catch (const Error&) {
            threw = true;
        }
        if (pos < 24) CHECK_MESSAGE(threw, "byte " << pos);
    }
}

TEST_CASE("sidecar manifest disagreeing with payload") {
    const auto s = random_store(100, 8, 2, 3, 5);
    const auto path = temp_dir("mismatch") / "store.lebm";
    write_store(s, path);
    auto m = Manifest::describe(s);
    m.n = 101;
    write_manifest(m, manifest_path(path));
    CHECK(kind_of([&] { read_store(path); }) == ErrorKind::ManifestMismatch);
}

TEST_CASE("synthetic generator determinism and validation") {
    SyntheticSpec spec;
    spec.n = 500;
    const auto a = generate_synthetic(spec);
    const auto b = generate_synthetic(spec);
    CHECK(encode_store(a) == encode_store(b));
    CHECK(a.n() == 500);
    CHECK(a.d() == 32);
    CHECK(a.v() == 2);
    spec.seed = 2;
    CHECK(encode_store(generate_synthetic(spec)) != encode_store(a));

    SyntheticSpec bad;
    bad.noise = 0.0;
    CHECK(kind_of([&] { generate_synthetic(bad); }) == ErrorKind::InvalidParam);
    bad.noise = -1.0;
    CHECK(kind_of([&] { generate_synthetic(bad); }) == ErrorKind::InvalidParam);
}

TEST_CASE("augmentation views stay close to view 0") {
    SyntheticSpec spec;
    spec.n = 200;
    spec.v = 3;
    const auto s = generate_synthetic(spec);
    for (Index v = 1; v < 3; ++v) {
        const double rms = std::sqrt((s.views[v] - s.views[0]).cast<double>().squaredNorm() / (200.0 * 32.0));
        CHECK(rms == doctest::Approx(0.1).epsilon(0.1));
    }
}

TEST_CASE("separation 0 gives chance accuracy") {
    SyntheticSpec spec;
    spec.separation = 0.0;
    const auto s = split_dataset(generate_synthetic(spec), 0.1, 0.2, 1);
    const double acc = test_accuracy(s, s.indices_of(Split::Pool));
    const double sigma = std::sqrt(0.1 * 0.9 / static_cast<double>(s.indices_of(Split::Test).size()));
    CHECK(std::abs(acc - 0.1) <= 3.0 * sigma);
}

TEST_CASE("separation 6 is easy for a linear probe on 500 random labels") {
    SyntheticSpec spec;
    const auto s = split_dataset(generate_synthetic(spec), 0.1, 0.2, 1);
    auto pool = s.indices_of(Split::Pool);
    // reference: the probe on the full pool
    CHECK(test_accuracy(s, pool) >= 0.95);
    Rng rng(9, "test/sample");
    const auto subset = rng.sample_without_replacement(pool, 500);
    CHECK(test_accuracy(s, subset) >= 0.95);
}

TEST_CASE("stratified split sizes") {
    SyntheticSpec spec;
    spec.n = 1000;
    const auto s = split_dataset(generate_synthetic(spec), 0.1, 0.1, 1);
    CHECK(s.indices_of(Split::Val).size() == 100);
    CHECK(s.indices_of(Split::Test).size() == 100);
    CHECK(s.indices_of(Split::Pool).size() == 800);

    SyntheticSpec two;
    two.k = 2;
    two.n = 100;
    const auto t = split_dataset(generate_synthetic(two), 0.1, 0.2, 1);
    std::vector<int> per_class(2, 0);
    for (Index i : t.indices_of(Split::Val)) ++per_class[t.labels[static_cast<std::size_t>(i)]];
    CHECK(per_class[0] == 5);
    CHECK(per_class[1] == 5);

    CHECK(kind_of([&] { split_dataset(generate_synthetic(spec), 0.6, 0.6, 1); }) == ErrorKind::InvalidParam);
}

TEST_CASE("split is deterministic and keeps every class in the pool") {
    SyntheticSpec spec;
    spec.n = 300;
    const auto a = split_dataset(generate_synthetic(spec), 0.3, 0.3, 7);
    const auto b = split_dataset(generate_synthetic(spec), 0.3, 0.3, 7);
    CHECK(a.splits == b.splits);
    std::vector<bool> seen(spec.k, false);
    for (Index i : a.indices_of(Split::Pool)) seen[a.labels[static_cast<std::size_t>(i)]] = true;
    for (bool x : seen) CHECK(x);
}

TEST_CASE("class too small for the split") {
    auto s = random_store(4, 2, 1, 2, 6);
    s.labels = {0, 0, 0, 1};
    CHECK(kind_of([&] { split_dataset(s, 0.5, 0.25, 1); }) == ErrorKind::ClassTooSmall);
}
