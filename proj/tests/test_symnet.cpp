#include <doctest.h>

#include <cmath>
#include <numbers>

#include "slimda/error.hpp"
#include "slimda/symnet.hpp"
#include "support.hpp"

using namespace slimda;

namespace {

Architecture arch() {
    Architecture a;
    a.input_dim = 4;
    a.block_max_widths = {8, 8};
    a.class_count = 3;
    return a;
}

DomainBatch random_batch(std::uint64_t seed, std::size_t ns, std::size_t nt, const Architecture& a) {
    Rng rng = make_stream(seed, "symnet-batch");
    DomainBatch b;
    b.xs = oracle::random_matrix(rng, ns, a.input_dim);
    b.xt = oracle::random_matrix(rng, nt, a.input_dim, 1.5);
    for (std::size_t i = 0; i < ns; ++i) b.ys.push_back(static_cast<int>(uniform_index(rng, 0, a.class_count - 1)));
    return b;
}

void zero_heads(ParamStore& store) {
    for (Head h : {Head::Source, Head::Target, Head::Auxiliary}) {
        store.value(store.head(h).weight).fill(0.0);
        store.value(store.head(h).bias).fill(0.0);
    }
}

// Every term written out from the per-sample formulas on a copied network.
DcLossParts oracle_parts(const ParamStore& store, const WidthConfig& c, const DomainBatch& b) {
    const auto net = oracle::copy_network(store, c);
    oracle::Matrix x = oracle::to_matrix(b.xs);
    for (const auto& row : oracle::to_matrix(b.xt)) x.push_back(row);
    const auto f = oracle::plain_features(net, x);
    const auto ls = oracle::plain_logits(net, f, Head::Source);
    const auto lt = oracle::plain_logits(net, f, Head::Target);
    const auto ps = oracle::softmax_rows(ls), pt = oracle::softmax_rows(lt);
    oracle::Matrix joint = ls;
    for (std::size_t r = 0; r < joint.size(); ++r) joint[r].insert(joint[r].end(), lt[r].begin(), lt[r].end());
    const auto pst = oracle::softmax_rows(joint);
    const std::size_t ns = b.xs.rows(), nt = b.xt.rows(), K = store.architecture().class_count;
    auto first = [&](std::size_t r) {
        double m = 0.0;
        for (std::size_t k = 0; k < K; ++k) m += pst[r][k];
        return m;
    };
    auto second = [&](std::size_t r) { return 1.0 - first(r); };
    DcLossParts p;
    for (std::size_t i = 0; i < ns; ++i) {
        const auto y = static_cast<std::size_t>(b.ys[i]);
        p.task_s -= std::log(ps[i][y]) / ns;
        p.task_t -= std::log(pt[i][y]) / ns;
        p.domain_disc -= std::log(first(i)) / ns;
        p.cat_confusion -= (std::log(pst[i][y]) + std::log(pst[i][y + K])) / (2.0 * ns);
    }
    for (std::size_t i = ns; i < ns + nt; ++i) {
        p.domain_disc -= std::log(second(i)) / nt;
        p.dom_confusion -= (std::log(first(i)) + std::log(second(i))) / (2.0 * nt);
        std::vector<double> avg(K);
        for (std::size_t k = 0; k < K; ++k) avg[k] = 0.5 * (ps[i][k] + pt[i][k]);
        p.entropy_min += oracle::entropy(avg) / nt;
    }
    return p;
}

} // namespace

TEST_CASE("uniform heads give the closed-form loss values") {
    const Architecture a = arch();
    auto store = ParamStore::initialize(a, 1);
    zero_heads(store);
    const DomainBatch b = random_batch(2, 6, 5, a);
    const DcLossParts p = dc_loss_parts(slice(store, WidthConfig::largest(a)), b);
    const double K = static_cast<double>(a.class_count);
    CHECK(p.task() == doctest::Approx(2.0 * std::log(K)).epsilon(1e-12));
    CHECK(p.domain_disc == doctest::Approx(2.0 * std::numbers::ln2).epsilon(1e-12));
    CHECK(p.dom_confusion == doctest::Approx(std::numbers::ln2).epsilon(1e-12));
    CHECK(p.cat_confusion == doctest::Approx(std::log(2.0 * K)).epsilon(1e-12));
    CHECK(p.entropy_min == doctest::Approx(std::log(K)).epsilon(1e-12));
}

TEST_CASE("every loss term matches the per-sample oracle") {
    const Architecture a = arch();
    Rng rng = make_stream(3, "symnet-configs");
    for (std::uint64_t seed = 1; seed <= 8; ++seed) {
        auto store = ParamStore::initialize(a, seed);
        const WidthConfig c(a, {uniform_index(rng, 1, 8), uniform_index(rng, 1, 8)});
        const DomainBatch b = random_batch(seed, 5, 7, a);
        const DcLossParts got = dc_loss_parts(slice(store, c), b);
        const DcLossParts want = oracle_parts(store, c, b);
        CHECK(got.task_s == doctest::Approx(want.task_s).epsilon(1e-12));
        CHECK(got.task_t == doctest::Approx(want.task_t).epsilon(1e-12));
        CHECK(got.domain_disc == doctest::Approx(want.domain_disc).epsilon(1e-12));
        CHECK(got.cat_confusion == doctest::Approx(want.cat_confusion).epsilon(1e-12));
        CHECK(got.dom_confusion == doctest::Approx(want.dom_confusion).epsilon(1e-12));
        CHECK(got.entropy_min == doctest::Approx(want.entropy_min).epsilon(1e-12));

        const SlimModel m = slice(store, c);
        CHECK(loss_task(m, b.xs, b.ys, b.xt) == doctest::Approx(want.task()).epsilon(1e-12));
        CHECK(loss_domain_disc(m, b.xs, b.ys, b.xt) == doctest::Approx(want.domain_disc).epsilon(1e-12));
        CHECK(loss_confusion(m, b.xs, b.ys, b.xt) ==
              doctest::Approx(want.cat_confusion + want.dom_confusion).epsilon(1e-12));
        CHECK(loss_entropy_min(m, b.xs, b.ys, b.xt) == doctest::Approx(want.entropy_min).epsilon(1e-12));
    }
}

TEST_CASE("domain confusion never drops below its half/half value") {
    const Architecture a = arch();
    for (std::uint64_t seed = 1; seed <= 40; ++seed) {
        auto store = ParamStore::initialize(a, seed);
        Rng rng = make_stream(seed, "symnet-heads");
        for (Head h : {Head::Source, Head::Target})
            for (auto& v : store.value(store.head(h).weight).data()) v = 3.0 * standard_normal(rng);
        const DcLossParts p = dc_loss_parts(slice(store, WidthConfig::largest(a)), random_batch(seed, 4, 6, a));
        CHECK(p.dom_confusion >= std::numbers::ln2 - 1e-12);
    }
}

TEST_CASE("each loss term has correct gradients for heads and extractor") {
    const Architecture a = arch();
    auto store = ParamStore::initialize(a, 9);
    const WidthConfig c(a, {5, 6});
    const DomainBatch b = random_batch(9, 4, 5, a);
    using Term = ad::Var (DcForward::*)();
    const Term terms[] = {&DcForward::loss_task,           &DcForward::loss_domain_disc,
                          &DcForward::loss_category_confusion, &DcForward::loss_domain_confusion,
                          &DcForward::loss_entropy_min};
    for (Term term : terms) {
        auto value = [&] {
            ad::Graph g;
            const SlimModel m = slice(store, c);
            ModelGraph mg(g, m, TrainableSet::all());
            DcForward fw(mg, b);
            return g.scalar((fw.*term)());
        };
        ad::Graph g;
        const SlimModel m = slice(store, c);
        ModelGraph mg(g, m, TrainableSet::all());
        DcForward fw(mg, b);
        const auto grads = g.backward((fw.*term)());
        for (ad::ParamId id : {store.layers()[0].weight, store.layers()[1].gamma, store.head(Head::Source).weight,
                               store.head(Head::Target).bias}) {
            const Tensor numeric = oracle::numeric_grad(value, store.value(id));
            const auto it = grads.find(id);
            const Tensor analytic = it == grads.end() ? Tensor(store.value(id).shape()) : it->second;
            CAPTURE(store.name(id));
            CHECK(oracle::gradient_rel_error(analytic, numeric) < 1e-5);
        }
    }
}

TEST_CASE("dc_loss routes classifier and extractor terms through the trainable set") {
    const Architecture a = arch();
    auto store = ParamStore::initialize(a, 10);
    const DomainBatch b = random_batch(10, 4, 4, a);
    const SlimModel m = slice(store, WidthConfig::largest(a));
    ad::Graph g;
    ModelGraph mg(g, m, TrainableSet{false, true, false});
    DcForward fw(mg, b);
    const auto targets = fw.dc_loss(0.1);
    const auto grads = g.backward(targets.classifier_loss);
    for (const auto& [id, t] : grads) {
        const auto bi = store.bi_classifier_ids();
        CHECK(std::find(bi.begin(), bi.end(), id) != bi.end());
    }
    CHECK(g.scalar(targets.extractor_loss) ==
          doctest::Approx(fw.parts().confusion() + 0.1 * fw.parts().entropy_min).epsilon(1e-14));
}

TEST_CASE("one_hot rejects labels outside the class range") {
    const std::vector<int> ok{0, 2, 1};
    const Tensor t = one_hot(ok, 3);
    CHECK(t.at(1, 2) == 1.0);
    CHECK(t.at(1, 0) == 0.0);
    const std::vector<int> bad{0, 3};
    CHECK_THROWS_AS(one_hot(bad, 3), UsageError);
    const std::vector<int> neg{-1};
    CHECK_THROWS_AS(one_hot(neg, 3), UsageError);
}
