#include <doctest.h>

#include "lebench/metrics.hpp"
#include "lebench/oracles.hpp"

#include <algorithm>

using namespace lebench;

namespace {

ConfusionMatrix from_counts(std::initializer_list<std::initializer_list<std::int64_t>> rows) {
    ConfusionMatrix cm;
    const auto k = static_cast<Index>(rows.size());
    cm.counts.resize(k, k);
    Index i = 0;
    for (const auto& row : rows) {
        Index j = 0;
        for (auto x : row) cm.counts(i, j++) = x;
        ++i;
    }
    return cm;
}

}  // namespace

TEST_CASE("confusion counting") {
    const std::vector<std::uint32_t> y{0, 1, 1};
    const auto perfect = confusion(y, y, 2);
    CHECK(perfect.counts(0, 0) == 1);
    CHECK(perfect.counts(1, 1) == 2);
    CHECK(perfect.total() == 3);

    const std::vector<std::uint32_t> t{0, 0, 1}, p{1, 0, 1};
    const auto cm = confusion(t, p, 2);
    CHECK(cm.counts(0, 0) == 1);
    CHECK(cm.counts(0, 1) == 1);
    CHECK(cm.counts(1, 0) == 0);
    CHECK(cm.counts(1, 1) == 1);

    const std::vector<std::uint32_t> none;
    const auto empty = confusion(none, none, 3);
    CHECK(empty.total() == 0);
    CHECK(empty.classes() == 3);

    const std::vector<std::uint32_t> bad{0, 2};
    bool threw = false;
    try {
        confusion(bad, bad, 2);
    } catch (const Error& e) {
        threw = e.kind() == ErrorKind::LabelOutOfRange;
    }
    CHECK(threw);
}

TEST_CASE("balanced accuracy") {
    CHECK(balanced_accuracy(from_counts({{5, 0}, {0, 7}})) == 1.0);
    CHECK(std::abs(balanced_accuracy(from_counts({{40, 10}, {20, 30}})) - 0.7) <= 1e-12);
    // constant predictor on balanced data
    CHECK(balanced_accuracy(from_counts({{50, 0}, {50, 0}})) == 0.5);
}

TEST_CASE("macro F1") {
    const auto cm = from_counts({{40, 10}, {20, 30}});
    CHECK(std::abs(macro_f1(cm) - (80.0 / 110.0 + 60.0 / 90.0) / 2.0) <= 1e-12);
    CHECK(std::abs(macro_f1(cm) - 0.69696969696969696) <= 1e-12);
    CHECK(macro_f1(from_counts({{3, 0}, {0, 4}})) == 1.0);
    // class 2 never true and never predicted contributes 0
    CHECK(std::abs(macro_f1(from_counts({{3, 0, 0}, {0, 4, 0}, {0, 0, 0}})) - 2.0 / 3.0) <= 1e-12);
}

TEST_CASE("pool accuracy") {
    const std::vector<std::uint32_t> truth{0, 1, 2, 0};
    CHECK(pool_accuracy(truth, std::vector<bool>(4, true), std::vector<std::uint32_t>{1, 1, 1, 1}) == 1.0);
    const std::vector<bool> half{true, true, false, false};
    CHECK(pool_accuracy(truth, half, std::vector<std::uint32_t>{2, 2, 2, 1}) == 0.75);
    const std::vector<std::uint32_t> preds{0, 0, 2, 1};
    CHECK(pool_accuracy(truth, std::vector<bool>(4, false), preds) == 0.5);
}

TEST_CASE("property: metrics agree with the brute-force oracle and stay in range") {
    for (std::uint64_t inst = 0; inst < 200; ++inst) {
        Rng rng(inst, "test/metrics");
        const auto k = static_cast<std::uint32_t>(2 + rng.below(6));
        const auto n = static_cast<std::size_t>(1 + rng.below(80));
        std::vector<std::uint32_t> y(n), yhat(n);
        std::vector<bool> labeled(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = static_cast<std::uint32_t>(rng.below(k));
            yhat[i] = rng.uniform() < 0.5 ? y[i] : static_cast<std::uint32_t>(rng.below(k));
            labeled[i] = rng.uniform() < 0.3;
        }
        const auto cm = confusion(y, yhat, k);
        const auto ref = oracle::brute_force_metrics(y, yhat, k);
        CHECK(balanced_accuracy(cm) == ref.balanced);
        CHECK(macro_f1(cm) == ref.macro_f1);
        CHECK(accuracy(cm) >= 0.0);
        CHECK(accuracy(cm) <= 1.0);
        const double pa = pool_accuracy(y, labeled, yhat);
        const double frac = static_cast<double>(std::count(labeled.begin(), labeled.end(), true)) / n;
        CHECK(pa >= frac);
        CHECK(pa <= 1.0);
    }
}
