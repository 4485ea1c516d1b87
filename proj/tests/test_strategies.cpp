#include <doctest.h>

#include "lebench/oracles.hpp"
#include "lebench/strategies.hpp"

#include <cmath>
#include <set>

using namespace lebench;

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

MatrixXd gaussian(Index rows, Index cols, Rng& rng, double scale = 1.0) {
    MatrixXd m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
    return m;
}

MatrixXd points_1d(std::initializer_list<double> xs) {
    MatrixXd m(static_cast<Index>(xs.size()), 1);
    Index i = 0;
    for (double x : xs) m(i++, 0) = x;
    return m;
}

}  // namespace

TEST_CASE("uncertainty scores") {
    MatrixXd p(3, 3);
    p << 0.9, 0.05, 0.05, 0.4, 0.35, 0.25, 0.34, 0.33, 0.33;
    const auto m = uncertainty_scores(UncertaintyKind::Margin, p);
    CHECK(m.scores[0] == doctest::Approx(0.85));
    CHECK(m.scores[1] == doctest::Approx(0.05));
    CHECK(m.scores[2] == doctest::Approx(0.01));
    CHECK(m.lower_is_better);
    CHECK(select_top(m, 1).indices == IndexList{2});

    MatrixXd u = MatrixXd::Constant(1, 4, 0.25);
    CHECK(uncertainty_scores(UncertaintyKind::Entropy, u).scores[0] == doctest::Approx(std::log(4.0)));

    MatrixXd mixed(2, 3);
    mixed << 0.0, 1.0, 0.0, 0.5, 0.3, 0.2;
    const auto conf = uncertainty_scores(UncertaintyKind::Confidence, mixed);
    CHECK(conf.scores[0] == 1.0);
    const auto ent = uncertainty_scores(UncertaintyKind::Entropy, mixed);
    CHECK(ent.scores[0] == 0.0);
    CHECK_FALSE(ent.lower_is_better);
    CHECK(uncertainty_scores(UncertaintyKind::Margin, mixed).scores[0] == 1.0);
    for (auto kind : {UncertaintyKind::Confidence, UncertaintyKind::Entropy, UncertaintyKind::Margin})
        CHECK(select_top(uncertainty_scores(kind, mixed), 1).indices == IndexList{1});
}

TEST_CASE("select_top ties and exhaustion") {
    PoolScores s;
    s.scores = VectorXd(3);
    s.scores << 0.2, 0.2, 0.5;
    s.indices = {0, 1, 2};
    CHECK(select_top(s, 1).indices == IndexList{0});
    CHECK(select_top(s, 3).indices == IndexList{0, 1, 2});
    s.lower_is_better = false;
    CHECK(select_top(s, 3).indices == IndexList{2, 0, 1});
    CHECK(kind_of([&] { select_top(s, 4); }) == ErrorKind::BatchTooLarge);
}

TEST_CASE("random selection") {
    auto state = init_label_state(10, {3, 7});
    Rng a(1, "test/random"), b(1, "test/random");
    const auto x = select_random(state, 3, a);
    CHECK(x.indices == select_random(state, 3, b).indices);
    state.apply_annotations(x.indices);
    Rng c(2, "test/random");
    const auto rest = select_random(state, 7, c);
    std::set<Index> all(rest.indices.begin(), rest.indices.end());
    all.insert(x.indices.begin(), x.indices.end());
    CHECK(all.size() == 10);
    CHECK(kind_of([&] { select_random(state, 8, c); }) == ErrorKind::BatchTooLarge);
}

TEST_CASE("coreset examples") {
    const auto pts = points_1d({0.0, 1.0, 10.0});
    CHECK(select_coreset(pts, {0}, 1).indices == IndexList{2});
    CHECK(select_coreset(pts, {0}, 2).indices == IndexList{2, 1});
    CHECK(kind_of([&] { select_coreset(pts, {0}, 3); }) == ErrorKind::BatchTooLarge);

    // duplicates of a center are never picked while a distinct point remains
    const auto dup = points_1d({0.0, 0.0, 0.0, 5.0, 5.0, 2.0});
    const auto picks = select_coreset(dup, {0}, 3).indices;
    REQUIRE(picks.size() == 3);
    CHECK(std::set<double>{dup(picks[0], 0), dup(picks[1], 0)} == std::set<double>{5.0, 2.0});
    CHECK(dup(picks[2], 0) != 2.0);

    // cold start: farthest from the centroid first
    const auto cold = points_1d({0.0, 1.0, 2.0, 9.0});
    CHECK(select_coreset(cold, {}, 1).indices == IndexList{3});
}

TEST_CASE("property: greedy k-center is within twice the optimum") {
    for (std::uint64_t inst = 0; inst < 30; ++inst) {
        Rng rng(inst, "test/kcenter");
        const Index n = 4 + static_cast<Index>(rng.below(7));
        const Index b = 1 + static_cast<Index>(rng.below(3));
        const MatrixXd pts = gaussian(n, 2, rng);
        const double greedy = oracle::covering_radius(pts, select_coreset(pts, {}, b).indices);
        CHECK(greedy <= 2.0 * oracle::optimal_kcenter_radius(pts, b) + 1e-12);
    }
}

TEST_CASE("factored gradient distance") {
    MatrixXd p(2, 2), v(2, 1);
    p << 0.4, 0.6, 0.9, 0.1;
    v << 2.0, 3.0;
    const auto f = grad_factors_from(p, v);
    CHECK(f.q(0, 0) == doctest::Approx(-0.4));
    CHECK(f.q(0, 1) == doctest::Approx(0.4));
    CHECK(f.q_sq[0] * f.v_sq[0] == doctest::Approx(1.28));
    CHECK(f.q_sq[1] * f.v_sq[1] == doctest::Approx(0.18));
    CHECK(factored_sq_dist(0, 1, f) == doctest::Approx(2.42).epsilon(1e-12));
    CHECK(factored_sq_dist(0, 0, f) == 0.0);
    CHECK(factored_sq_dist(1, 0, f) == factored_sq_dist(0, 1, f));
}

TEST_CASE("property: factored distance matches the materialized oracle") {
    for (std::uint64_t inst = 0; inst < 10; ++inst) {
        Rng rng(inst, "test/factored");
        const MatrixXd probs = softmax_rows(gaussian(40, 6, rng, 2.0));
        const auto f = grad_factors_from(probs, gaussian(40, 9, rng));
        const MatrixXd g = oracle::materialize_gradients(f.q, f.v);
        for (Index i = 0; i < 40; ++i)
            for (Index j = 0; j < 40; ++j) {
                const double ref = oracle::naive_sq_dist(g, i, j);
                CHECK(std::abs(factored_sq_dist(i, j, f) - ref) <= 1e-9 * std::max(ref, 1e-300));
            }
    }
}

TEST_CASE("badge seeding") {
    // norms proportional to (0, 0, 1)
    MatrixXd p(3, 2), v(3, 1);
    p << 1.0, 0.0, 0.0, 1.0, 0.5, 0.5;
    v << 1.0, 1.0, 1.0;
    const auto f = grad_factors_from(p, v);
    for (std::uint64_t s = 0; s < 20; ++s) {
        Rng rng(s, "test/badge");
        CHECK(select_badge(f, 1, rng).indices == IndexList{2});
    }

    // all embeddings zero
    MatrixXd sure(4, 2);
    sure << 1, 0, 0, 1, 1, 0, 0, 1;
    const auto zero = grad_factors_from(sure, MatrixXd::Ones(4, 3));
    Rng rng(3, "test/badge");
    const auto fb = select_badge(zero, 2, rng);
    CHECK(fb.fell_back);
    CHECK(fb.indices.size() == 2);

    // exact oracle equivalence, both first-center modes
    for (bool by_norm : {true, false}) {
        Rng data(11, "test/badge-data");
        const MatrixXd probs = softmax_rows(gaussian(80, 5, data, 2.0));
        const auto g = grad_factors_from(probs, gaussian(80, 7, data));
        Rng a(5, "test/badge-seq"), b(5, "test/badge-seq");
        BadgeOptions opts;
        opts.first_center_by_norm = by_norm;
        CHECK(select_badge(g, 15, a, opts).indices ==
              oracle::naive_kmeanspp(oracle::materialize_gradients(g.q, g.v), 15, b, by_norm));
    }
}

TEST_CASE("badge with duplicated embeddings exhausts distinct points first") {
    MatrixXd probs(6, 2), feats(6, 1);
    probs << 0.6, 0.4, 0.6, 0.4, 0.6, 0.4, 0.3, 0.7, 0.3, 0.7, 0.3, 0.7;
    feats.setOnes();
    const auto f = grad_factors_from(probs, feats);
    Rng rng(1, "test/badge-dup");
    const auto picks = select_badge(f, 4, rng).indices;
    CHECK(std::set<Index>(picks.begin(), picks.end()).size() == 4);
    const bool first_group = picks[0] < 3;
    CHECK((picks[1] < 3) != first_group);
}

TEST_CASE("helmert basis") {
    for (Index k = 2; k <= 10; ++k) {
        const MatrixXd T = helmert_basis(k);
        CHECK(T.rows() == k);
        CHECK(T.cols() == k - 1);
        CHECK((T.transpose() * T - MatrixXd::Identity(k - 1, k - 1)).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((T.transpose() * VectorXd::Ones(k)).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("psd square root") {
    MatrixXd m(2, 2);
    m << 4.0, 0.0, 0.0, -1e-17;
    const MatrixXd r = psd_sqrt(m);
    CHECK(r(0, 0) == doctest::Approx(2.0));
    CHECK(r(1, 1) == 0.0);
    Rng rng(1, "test/psd");
    const MatrixXd a = gaussian(4, 4, rng);
    const MatrixXd spd = a * a.transpose();
    const MatrixXd s = psd_sqrt(spd);
    CHECK((s * s - spd).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("fisher context") {
    Rng rng(2, "test/fisher");
    MatrixXd probs = softmax_rows(gaussian(30, 4, rng));
    probs.row(0) << 0.0, 1.0, 0.0, 0.0;
    const MatrixXd feats = gaussian(30, 5, rng);
    const auto ctx = build_fisher_context(probs, feats, 3, 1.0);
    CHECK(ctx.dim() == 9);
    CHECK(ctx.factor(0).norm() == 0.0);
    for (Index i = 1; i < 30; ++i) {
        const MatrixXd ref = oracle::kronecker_fisher(ctx.projected.row(i).transpose(), probs.row(i).transpose(), ctx.T);
        CHECK((ctx.fisher(i) - ref).cwiseAbs().maxCoeff() <= 1e-10);
    }
    MatrixXd mean = MatrixXd::Zero(9, 9);
    for (Index i = 0; i < 30; ++i) mean += ctx.fisher(i);
    CHECK((mean / 30.0 - ctx.pool_fisher).cwiseAbs().maxCoeff() < 1e-12);

    // rank-2 features cannot support a 3-dimensional projection
    MatrixXd low = gaussian(30, 2, rng) * gaussian(2, 5, rng);
    CHECK(covariance_rank(low) == 2);
    CHECK(kind_of([&] { build_fisher_context(probs, low, 3, 1.0); }) == ErrorKind::RankDeficiency);
    CHECK(kind_of([&] { build_fisher_context(probs, feats, 3, 0.0); }) == ErrorKind::InvalidParam);
}

TEST_CASE("bait swap search") {
    Rng data(3, "test/bait-data");
    const MatrixXd probs = softmax_rows(gaussian(50, 4, data, 1.5));
    const auto ctx = build_fisher_context(probs, gaussian(50, 8, data), 8, 1.0);
    IndexList cand;
    for (Index i = 0; i < 50; i += 2) cand.push_back(i);

    BaitOptions none;
    none.sweeps = 0;
    Rng a(1, "test/bait"), b(1, "test/bait");
    BaitTrace t0;
    const auto unchanged = select_bait(ctx, cand, 6, a, none, &t0);
    CHECK(unchanged.indices == b.sample_without_replacement(cand, 6));
    CHECK(t0.steps.size() == 1);

    BaitOptions opts;
    opts.sweeps = 4;
    for (std::uint64_t s = 0; s < 5; ++s) {
        Rng rng(s, "test/bait");
        BaitTrace trace;
        const auto r = select_bait(ctx, cand, 6, rng, opts, &trace);
        CHECK(r.indices == trace.steps.back().selected);
        for (std::size_t i = 1; i < trace.steps.size(); ++i)
            CHECK(trace.steps[i].objective < trace.steps[i - 1].objective);
        for (const auto& step : trace.steps)
            CHECK(std::abs(step.objective - oracle::dense_bait_objective(ctx.projected, probs, step.selected, 1.0)) <=
                  1e-6 * step.objective);
        for (Index i : r.indices) CHECK(i % 2 == 0);
    }
}

TEST_CASE("strategy ids") {
    for (auto id : {StrategyId::Random, StrategyId::Confidence, StrategyId::Entropy, StrategyId::Margin,
                    StrategyId::Coreset, StrategyId::Badge, StrategyId::Bait})
        CHECK(parse_strategy(to_string(id)) == id);
    CHECK(kind_of([] { parse_strategy("galaxy"); }) == ErrorKind::NotImplemented);
    CHECK(kind_of([] { parse_strategy("oracle"); }) == ErrorKind::UnknownStrategy);
}

TEST_CASE("property: every strategy returns B distinct unlabeled in-range indices") {
    const StrategyId ids[] = {StrategyId::Random, StrategyId::Confidence, StrategyId::Entropy, StrategyId::Margin,
                              StrategyId::Coreset, StrategyId::Badge, StrategyId::Bait};
    for (std::uint64_t trial = 0; trial < 8; ++trial) {
        Rng rng(trial, "test/universal");
        const Index n = 30 + static_cast<Index>(rng.below(40)), d = 3 + static_cast<Index>(rng.below(5));
        const Index k = 2 + static_cast<Index>(rng.below(4));
        const MatrixXd X = gaussian(n, d, rng);
        Classifier model(trial % 2 ? Tier::Shallow : Tier::Linear, d, k);
        model.initialize(rng);
        const Index labeled = 1 + static_cast<Index>(rng.below(10));
        const Index batch = 1 + static_cast<Index>(rng.below(8));
        auto state = init_label_state(n, {labeled, batch});
        state.apply_annotations(rng.sample_without_replacement(state.unlabeled_indices(), static_cast<std::size_t>(labeled)));
        for (auto id : ids) {
            Rng srng(trial, "test/universal-select");
            const auto r = select_batch(id, model, X, state, batch, srng);
            CHECK(static_cast<Index>(r.indices.size()) == batch);
            CHECK(std::set<Index>(r.indices.begin(), r.indices.end()).size() == r.indices.size());
            for (Index i : r.indices) {
                CHECK(i >= 0);
                CHECK(i < n);
                CHECK_FALSE(state.is_labeled(i));
            }
            Rng again(trial, "test/universal-select");
            CHECK(select_batch(id, model, X, state, batch, again).indices == r.indices);
            auto copy = state;
            CHECK_NOTHROW(copy.apply_annotations(r.indices));
        }
        Rng over(0, "x");
        CHECK(kind_of([&] { select_batch(StrategyId::Margin, model, X, state, n, over); }) == ErrorKind::BatchTooLarge);
    }
}
