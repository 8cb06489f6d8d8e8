#include <doctest.h>

#include <cmath>

#include "slimda/error.hpp"
#include "slimda/upem_search.hpp"
#include "support.hpp"

using namespace slimda;

namespace {

Architecture arch() {
    Architecture a;
    a.input_dim = 4;
    a.block_max_widths = {16, 16, 32};
    a.class_count = 3;
    return a;
}

Tensor target_inputs(std::uint64_t seed, std::size_t n = 40) {
    Rng rng = make_stream(seed, "upem-inputs");
    return oracle::random_matrix(rng, n, 4);
}

Tensor random_distributions(Rng& rng, std::size_t rows, std::size_t k) {
    Tensor t = oracle::random_matrix(rng, rows, k, 2.0);
    return Tensor(t.shape(), [&] {
        std::vector<double> out;
        for (const auto& row : oracle::softmax_rows(oracle::to_matrix(t))) out.insert(out.end(), row.begin(), row.end());
        return out;
    }());
}

} // namespace

TEST_CASE("UPEM distance is a per-sample sum of squared differences") {
    const Tensor a = Tensor::from_rows({{1.0, 0.0}, {0.5, 0.5}});
    const Tensor b = Tensor::from_rows({{0.0, 1.0}, {0.5, 0.5}});
    CHECK(upem_delta(a, a) == 0.0);
    CHECK(upem_delta(a, b) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(upem_delta(b, a) == upem_delta(a, b));
    const Tensor one = Tensor::from_rows({{1.0, 0.0}});
    const Tensor other = Tensor::from_rows({{0.0, 1.0}});
    CHECK(upem_delta(one, other) == 2.0);
    CHECK_THROWS_AS(upem_delta(one, a), ConfigError);
}

TEST_CASE("UPEM needs recalibrated models and scores the anchor at zero") {
    const Architecture a = arch();
    const auto store = ParamStore::initialize(a, 1);
    const Tensor xt = target_inputs(1);
    SlimModel full = slice(store, WidthConfig::largest(a));
    SlimModel small = slice(store, WidthConfig::smallest(a));
    CHECK_THROWS_AS(upem(small, full, xt), UsageError);
    adabn_recalibrate(full, xt);
    CHECK_THROWS_AS(upem(small, full, xt), UsageError);
    adabn_recalibrate(small, xt);
    const double d = upem(small, full, xt);
    CHECK(d > 0.0);

    UpemEvaluator ev(store, xt);
    CHECK(ev.score(WidthConfig::largest(a)).delta == 0.0);
    CHECK(ev.score(WidthConfig::largest(a)).flops_ratio == 1.0);
    CHECK(ev.score(WidthConfig::smallest(a)).delta == doctest::Approx(d).epsilon(1e-14));

    // Independent value from the copied network with population statistics.
    double want = 0.0;
    oracle::Matrix pf, ps;
    for (const auto& c : {WidthConfig::largest(a), WidthConfig::smallest(a)}) {
        const auto net = oracle::copy_network(store, c);
        oracle::PlainStats st;
        oracle::plain_features(net, oracle::to_matrix(xt), nullptr, &st);
        const auto p = oracle::softmax_rows(
            oracle::plain_logits(net, oracle::plain_features(net, oracle::to_matrix(xt), &st), Head::Auxiliary));
        (pf.empty() ? pf : ps) = p;
    }
    for (std::size_t r = 0; r < pf.size(); ++r)
        for (std::size_t k = 0; k < pf[r].size(); ++k) want += (pf[r][k] - ps[r][k]) * (pf[r][k] - ps[r][k]);
    CHECK(d == doctest::Approx(want / static_cast<double>(pf.size())).epsilon(1e-10));
}

TEST_CASE("correlations handle affine, tied and degenerate samples") {
    const std::vector<double> x{1.0, 2.0, 3.0, 4.0, 5.0};
    std::vector<double> y;
    for (double v : x) y.push_back(1.0 - 2.0 * v);
    CHECK(pearson(x, y) == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(spearman(x, y) == doctest::Approx(-1.0).epsilon(1e-15));
    const std::vector<double> tx{1.0, 2.0, 2.0, 3.0}, ty{1.0, 3.0, 2.0, 4.0};
    CHECK(spearman(tx, ty) == doctest::Approx(4.5 / std::sqrt(22.5)).epsilon(1e-14));
    const std::vector<double> flat{2.0, 2.0, 2.0, 2.0, 2.0};
    CHECK_THROWS_AS(pearson(x, flat), UsageError);
    CHECK_THROWS_AS(spearman(flat, x), UsageError);
    const std::vector<double> two{1.0, 2.0};
    CHECK_THROWS_AS(pearson(two, two), UsageError);
    const auto r = correlate(x, y);
    CHECK(r.samples == 5);
}

TEST_CASE("budget sampling lands inside the tolerance band") {
    const Architecture a = arch();
    Rng rng = make_stream(2, "budget");
    const double f_min = WidthConfig::smallest(a).flops(), f_max = WidthConfig::largest(a).flops();
    for (int i = 0; i <= 40; ++i) {
        const double budget = f_min + (f_max - f_min) * i / 40.0;
        const auto c = sample_config_at_budget(rng, a, budget, 0.02);
        REQUIRE(c.has_value());
        CHECK(std::abs(c->flops() - budget) <= 0.02 * budget);
    }
    CHECK_FALSE(sample_config_at_budget(rng, a, 2.0 * f_max, 0.02).has_value());
}

TEST_CASE("random search returns the lowest-distance sample within the band") {
    const Architecture a = arch();
    const auto store = ParamStore::initialize(a, 3);
    UpemEvaluator ev(store, target_inputs(3));
    Rng rng = make_stream(3, "random");
    const double budget = 0.4 * ev.full_flops();
    const auto one = random_search(ev, budget, 1, rng);
    CHECK(one.scores.size() == 1);
    CHECK(one.best.config == one.scores[0].config);
    const auto many = random_search(ev, budget, 30, rng);
    for (const auto& s : many.scores) {
        CHECK(std::abs(s.config.flops() - budget) <= 0.02 * budget);
        CHECK(many.best.delta <= s.delta);
    }
    CHECK_THROWS_AS(random_search(ev, budget, 0, rng), UsageError);
    CHECK_THROWS_AS(random_search(ev, 2.0 * ev.full_flops(), 3, rng), UsageError);
}

TEST_CASE("inherited greedy search only ever widens the previous winner") {
    const Architecture a = arch();
    const auto store = ParamStore::initialize(a, 4);
    UpemEvaluator ev(store, target_inputs(4));
    Rng rng = make_stream(4, "greedy");
    const SearchPlan plan = SearchPlan::equal_steps(a, 6, 8);
    const auto steps = inherited_greedy_search(ev, plan, rng);
    REQUIRE(steps.size() == 6);
    std::vector<std::size_t> prev = WidthConfig::smallest(a).widths();
    double prev_flops = 0.0;
    for (std::size_t s = 0; s < steps.size(); ++s) {
        const auto& st = steps[s];
        CHECK(st.step == s + 1);
        CHECK(st.candidates.size() == 8);
        if (s > 0) CHECK(st.budget_ratio > steps[s - 1].budget_ratio);
        for (std::size_t b = 0; b < a.block_count(); ++b) CHECK(st.winner.config.width(b) >= prev[b]);
        CHECK(st.winner.config.flops() >= prev_flops);
        CHECK(st.winner.config.flops() >= (1.0 - plan.tolerance) * st.budget_ratio * ev.full_flops());
        for (const auto& c : st.candidates) CHECK(st.winner.delta <= c.delta);
        prev = st.winner.config.widths();
        prev_flops = st.winner.config.flops();
    }
    const auto last = inherited_greedy_search(ev, SearchPlan::equal_steps(a, 1, 3), rng);
    CHECK(last.back().winner.config.flops() >= 0.98 * ev.full_flops());
}

TEST_CASE("search plans are validated") {
    const Architecture a = arch();
    SearchPlan p;
    p.budget_ratios = {0.5, 0.4};
    CHECK_THROWS_AS(p.validate(a), ConfigError);
    p.budget_ratios = {0.5, 1.5};
    CHECK_THROWS_AS(p.validate(a), ConfigError);
    p.budget_ratios = {1e-6};
    CHECK_THROWS_AS(p.validate(a), ConfigError);
    p.budget_ratios = {0.5};
    p.q = 0;
    CHECK_THROWS_AS(p.validate(a), ConfigError);
    CHECK_THROWS_AS(SearchPlan::equal_steps(a, 0), ConfigError);
    const auto eq = SearchPlan::equal_steps(a, 4);
    CHECK(eq.budget_ratios.back() == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("prediction errors obey the triangle inequality") {
    Rng rng = make_stream(5, "triangle");
    for (int t = 0; t < 100; ++t) {
        const Tensor c = random_distributions(rng, 10, 4), g = random_distributions(rng, 10, 4);
        std::vector<int> labels;
        for (int i = 0; i < 10; ++i) labels.push_back(static_cast<int>(uniform_index(rng, 0, 3)));
        CHECK(triangle_check(c, g, labels).holds());
    }
}

TEST_CASE("spread configs cover the FLOPs range in order") {
    const Architecture a = arch();
    Rng rng = make_stream(6, "spread");
    const auto cs = spread_configs(rng, a, 20);
    CHECK(cs.size() == 20);
    const double f_max = WidthConfig::largest(a).flops();
    for (std::size_t i = 0; i < cs.size(); ++i) {
        const double budget = std::max((i + 0.5) / 20.0 * f_max, WidthConfig::smallest(a).flops());
        CHECK(std::abs(cs[i].flops() - budget) <= 0.02 * budget);
    }
    const auto store = ParamStore::initialize(a, 6);
    UpemEvaluator ev(store, target_inputs(6));
    const std::vector<int> labels(40, 0);
    CHECK_THROWS_AS(monotonicity_probe(ev, labels, 2, rng), UsageError);
}
