// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
//   slimda_acceptance [--only N[,N...]]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "random_graphs.hpp"
#include "slimda/checkpoint.hpp"
#include "slimda/experiment.hpp"
#include "slimda/seed_trainer.hpp"
#include "slimda/symnet.hpp"
#include "slimda/upem_search.hpp"
#include "support.hpp"

using namespace slimda;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[1024];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

ExperimentConfig default_config(std::uint64_t seed) {
    ExperimentConfig c = load_experiment(SLIMDA_DEFAULT_CONFIG);
    c.set_seed(seed);
    return c;
}

constexpr std::uint64_t kSeeds[] = {1, 2, 3, 4, 5};
constexpr TrainMode kModes[] = {TrainMode::SlimDA, TrainMode::Baseline, TrainMode::Inplaced};

struct TrainedRun {
    std::uint64_t seed = 0;
    TrainMode mode = TrainMode::SlimDA;
    ParamStore store;
    double acc_full = 0.0;
    double acc_smallest = 0.0;
    double seconds = 0.0;
};

struct SeedData {
    DomainDataset data;
    ProbeSet probe;
};

SeedData make_seed_data(const ExperimentConfig& cfg) {
    DomainDataset data = make_dataset(cfg.dataset);
    ProbeSet probe{data.xt(), data.target_labels_for_evaluation()};
    return {std::move(data), std::move(probe)};
}

TrainedRun train_run(const ExperimentConfig& base, const SeedData& sd, TrainMode mode) {
    ExperimentConfig cfg = base;
    cfg.trainer.mode = mode;
    const auto t0 = Clock::now();
    ModelBank bank = ModelBank::initialize(cfg.architecture, cfg.seed, cfg.trainer.momentum);
    train(bank, sd.data.training_view(), cfg.trainer);
    const double secs = seconds_since(t0);
    const DeployHead head = deploy_head_for(mode);
    const double full = probe_accuracy(bank.store, WidthConfig::largest(cfg.architecture), sd.probe, head);
    const double small = probe_accuracy(bank.store, WidthConfig::smallest(cfg.architecture), sd.probe, head);
    return TrainedRun{cfg.seed, mode, std::move(bank.store), full, small, secs};
}

// Trained banks for every (seed, mode), built on first use.
struct Banks {
    std::vector<SeedData> data;
    std::vector<std::vector<TrainedRun>> runs;  // [seed][mode]

    void ensure() {
        if (!runs.empty()) return;
        for (std::uint64_t s : kSeeds) {
            const ExperimentConfig cfg = default_config(s);
            data.push_back(make_seed_data(cfg));
            runs.emplace_back();
            for (TrainMode m : kModes) {
                runs.back().push_back(train_run(cfg, data.back(), m));
                const auto& r = runs.back().back();
                std::printf("  trained seed %llu %-8s acc 1x %.4f  1/64x %.4f  (%.1f s)\n",
                            static_cast<unsigned long long>(s), to_string(m).c_str(), r.acc_full,
                            r.acc_smallest, r.seconds);
                std::fflush(stdout);
            }
        }
    }
    const TrainedRun& run(std::size_t seed_index, TrainMode mode) const {
        return runs[seed_index][static_cast<std::size_t>(mode)];
    }
};

Banks g_banks;

// ---------------------------------------------------------------------------

Verdict gradient_correctness() {
    const auto t0 = Clock::now();
    double worst = 0.0;
    constexpr std::uint64_t kGraphs = 120;
    for (std::uint64_t s = 1; s <= kGraphs; ++s) worst = std::max(worst, oracle::check_random_graph(s).worst_rel_error);
    const double secs = seconds_since(t0);
    return {worst < 1e-4 && secs < 10.0,
            fmt("worst relative error %.2e over %llu graphs (limit 1e-4), %.2f s (limit 10 s)", worst,
                static_cast<unsigned long long>(kGraphs), secs)};
}

Verdict slicing_oracle() {
    const auto t0 = Clock::now();
    Architecture a;
    a.input_dim = 6;
    a.block_max_widths = {16, 24, 32};
    a.layers_per_block = 2;
    a.class_count = 4;
    const auto store = ParamStore::initialize(a, 11);
    Rng rng = make_stream(11, "acceptance-slicing");
    double worst = 0.0;
    for (int t = 0; t < 50; ++t) {
        const WidthConfig c = sample_uniform_config(rng, a);
        const Tensor x = oracle::random_matrix(rng, 9, a.input_dim);
        const SlimModel m = slice(store, c);
        const Tensor f = forward_features(m, x, ad::BnMode::Train);
        const auto net = oracle::copy_network(store, c);
        const auto plain = oracle::plain_features(net, oracle::to_matrix(x));
        worst = std::max(worst, oracle::max_abs_diff(plain, f));
        for (Head h : {Head::Source, Head::Target, Head::Auxiliary}) {
            const Tensor p = classify(m, f, static_cast<ClassifyHead>(h));
            worst = std::max(worst, oracle::max_abs_diff(oracle::softmax_rows(oracle::plain_logits(net, plain, h)), p));
        }
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-12 && secs < 10.0,
            fmt("50 configs, max |sliced - copied| %.2e (limit 1e-12), %.2f s (limit 10 s)", worst, secs)};
}

Verdict loss_unit_values() {
    Architecture a;
    a.input_dim = 5;
    a.block_max_widths = {8, 8};
    a.class_count = 4;
    auto store = ParamStore::initialize(a, 3);
    Rng rng = make_stream(3, "acceptance-losses");
    DomainBatch b;
    b.xs = oracle::random_matrix(rng, 7, a.input_dim);
    b.xt = oracle::random_matrix(rng, 6, a.input_dim, 1.5);
    for (std::size_t i = 0; i < 7; ++i) b.ys.push_back(static_cast<int>(i % a.class_count));
    const WidthConfig full = WidthConfig::largest(a);

    for (Head h : {Head::Source, Head::Target}) {
        store.value(store.head(h).weight).fill(0.0);
        store.value(store.head(h).bias).fill(0.0);
    }
    const DcLossParts uniform = dc_loss_parts(slice(store, full), b);
    const double K = static_cast<double>(a.class_count);
    const double task_err = std::abs(uniform.task() - 2.0 * std::log(K));
    const double disc_err = std::abs(uniform.domain_disc - 2.0 * std::numbers::ln2);

    // Twin source/target heads put exactly half of the 2K mass in each half.
    Rng head_rng = make_stream(3, "acceptance-heads");
    store.value(store.head(Head::Source).weight) = oracle::random_matrix(head_rng, 8, a.class_count);
    store.value(store.head(Head::Target).weight) = store.value(store.head(Head::Source).weight);
    const double at_half = dc_loss_parts(slice(store, full), b).dom_confusion;
    double lowest_elsewhere = INFINITY;
    for (int t = 0; t < 40; ++t) {
        store.value(store.head(Head::Target).weight) = oracle::random_matrix(head_rng, 8, a.class_count, 2.0);
        lowest_elsewhere = std::min(lowest_elsewhere, dc_loss_parts(slice(store, full), b).dom_confusion);
    }
    const double expected_min = 2.0 * std::numbers::ln2;
    const double min_err = std::abs(at_half - expected_min);
    const bool is_min = lowest_elsewhere >= at_half - 1e-12;
    return {task_err < 1e-9 && disc_err < 1e-9 && min_err < 1e-9 && is_min,
            fmt("task %.12f vs 2 ln K (err %.1e); domain disc %.12f vs 2 ln 2 (err %.1e); "
                "domain confusion at half/half %.12f vs 2 ln 2 = %.12f (err %.1e, ln 2 = %.12f), "
                "random heads never lower: %s",
                uniform.task(), task_err, uniform.domain_disc, disc_err, at_half, expected_min, min_err,
                std::numbers::ln2, is_min ? "yes" : "no")};
}

Verdict seed_mechanics() {
    Rng rng = make_stream(4, "acceptance-seed");
    Tensor g = Tensor::matrix(1000, 6);
    for (std::size_t r = 0; r < g.rows(); ++r) {
        double sum = 0.0;
        for (double& v : g.row(r)) sum += (v = uniform01(rng) * uniform01(rng) + 1e-9);
        for (double& v : g.row(r)) v /= sum;
    }
    const double identity_err = oracle::max_abs_diff(sharpen(g, 1.0), g);
    const Tensor s = sharpen(g, 0.5);
    std::size_t raised = 0;
    for (std::size_t r = 0; r < g.rows(); ++r)
        if (oracle::entropy(s.row(r)) > oracle::entropy(g.row(r)) + 1e-12) ++raised;

    const Tensor p = oracle::random_matrix(rng, 50, 6), q = oracle::random_matrix(rng, 50, 6);
    const Tensor pair[] = {p, q};
    const double weights[] = {0.7, 0.7};
    const Tensor e = ensemble(pair, weights);
    double mean_err = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) mean_err = std::max(mean_err, std::abs(e[i] - 0.5 * (p[i] + q[i])));

    const ConfidencePolicy hard{ConfidenceMode::Hard, 0.5, 0.0};
    const ConfidencePolicy general{ConfidenceMode::General, 0.5, 1e-6};
    double conf_err = 0.0;
    for (int i = 0; i <= 1000; ++i) {
        if (i == 500) continue;
        const double r = i / 1000.0;
        conf_err = std::max(conf_err, std::abs(confidence(r, general) - confidence(r, hard)));
    }
    const bool ok = identity_err < 1e-12 && raised == 0 && mean_err <= 1e-12 && conf_err < 1e-3;
    return {ok, fmt("tau=1 identity err %.1e; entropy raised on %zu/1000 rows; pair ensemble err %.1e; "
                    "general(s=1e-6) vs hard max diff %.2e (limit 1e-3)",
                    identity_err, raised, mean_err, conf_err)};
}

void add_scaled(ad::Gradients& into, const ad::Gradients& g, double w, std::span<const ad::ParamId> ids) {
    for (ad::ParamId id : ids) {
        auto it = g.find(id);
        if (it == g.end()) continue;
        Tensor& acc = into.try_emplace(id, it->second.shape()).first->second;
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += w * it->second[i];
    }
}

double max_diff(const ad::Gradients& got, const ad::Gradients& want, std::span<const ad::ParamId> ids) {
    double d = 0.0;
    for (ad::ParamId id : ids) {
        const auto a = got.find(id), b = want.find(id);
        if (a == got.end() && b == want.end()) continue;
        if (a == got.end()) d = std::max(d, oracle::max_abs(b->second));
        else if (b == want.end()) d = std::max(d, oracle::max_abs(a->second));
        else d = std::max(d, oracle::max_abs_diff(a->second, b->second));
    }
    return d;
}

Verdict gradient_routing() {
    Architecture a;
    a.input_dim = 4;
    a.block_max_widths = {8, 16};
    a.class_count = 3;
    DatasetSpec spec;
    spec.class_count = 3;
    spec.dim = 4;
    spec.n_source = 80;
    spec.n_target = 80;
    spec.seed = 21;
    const DomainDataset data = make_dataset(spec).training_view();
    Rng data_rng = make_stream(21, "acceptance-routing-data");
    const auto plan = batches(data, 16, data_rng);

    ModelBank bank = ModelBank::initialize(a, 21);
    TrainerConfig cfg;
    cfg.m = 4;
    cfg.confidence = {ConfidenceMode::General, 0.5, 0.5};
    Rng model_rng = make_stream(21, "models");
    std::size_t leaks = 0;
    double worst_f = 0.0, worst_cls = 0.0;
    for (int step = 0; step < 20; ++step) {
        const DomainBatch& b = plan[static_cast<std::size_t>(step) % plan.size()];
        StepTrace trace;
        train_step(bank, b, cfg, model_rng, 0.01, &trace);
        const ParamStore& before = *trace.before;
        const ParamStore& between = *trace.between;
        const auto bi = before.bi_classifier_ids();
        const auto aux = before.head_ids(Head::Auxiliary);
        const auto ext = before.extractor_ids();
        const std::size_t m = trace.batch.size();
        double ctot = 0.0;
        for (double c : trace.confidences) ctot += c;
        const double rtot = static_cast<double>(m) - ctot;
        ad::Gradients cls, fx;
        for (std::size_t j = 0; j < m; ++j) {
            const auto& c = trace.batch.configs[j];
            const auto seed_all = term_gradients(before, c, b, LossTerm::Seed, TrainableSet::all(), cfg.w_ent, &trace.target);
            for (ad::ParamId id : bi) {
                const auto it = seed_all.find(id);
                if (it != seed_all.end() && oracle::max_abs(it->second) != 0.0) ++leaks;
            }
            for (LossTerm t : {LossTerm::DcClassifier, LossTerm::DcExtractor}) {
                const auto dc_all = term_gradients(before, c, b, t, TrainableSet::all(), cfg.w_ent);
                for (ad::ParamId id : aux) {
                    const auto it = dc_all.find(id);
                    if (it != dc_all.end() && oracle::max_abs(it->second) != 0.0) ++leaks;
                }
            }
            add_scaled(cls, term_gradients(before, c, b, LossTerm::DcClassifier, {false, true, false}, cfg.w_ent),
                       1.0 / static_cast<double>(m), bi);
            add_scaled(cls, term_gradients(before, c, b, LossTerm::Seed, {false, false, true}, cfg.w_ent, &trace.target),
                       1.0 / static_cast<double>(m), aux);
            add_scaled(fx, term_gradients(between, c, b, LossTerm::DcExtractor, {true, false, false}, cfg.w_ent),
                       trace.confidences[j] / ctot, ext);
            if (rtot > 0.0)
                add_scaled(fx, term_gradients(between, c, b, LossTerm::Seed, {true, false, false}, cfg.w_ent, &trace.target),
                           (1.0 - trace.confidences[j]) / rtot, ext);
        }
        std::vector<ad::ParamId> heads(bi.begin(), bi.end());
        heads.insert(heads.end(), aux.begin(), aux.end());
        worst_cls = std::max(worst_cls, max_diff(trace.classifier_update, cls, heads));
        worst_f = std::max(worst_f, max_diff(trace.extractor_update, fx, ext));
    }
    return {leaks == 0 && worst_f < 1e-10 && worst_cls < 1e-10,
            fmt("20 steps: %zu nonzero cross-routed gradients; extractor reconstruction err %.2e, "
                "classifier reconstruction err %.2e (limit 1e-10)",
                leaks, worst_f, worst_cls)};
}

Verdict adaptation_efficacy() {
    g_banks.ensure();
    int beats_baseline = 0, beats_inplaced = 0;
    double slowest = 0.0;
    std::string per_seed;
    for (std::size_t i = 0; i < std::size(kSeeds); ++i) {
        const double s = g_banks.run(i, TrainMode::SlimDA).acc_smallest;
        const double b = g_banks.run(i, TrainMode::Baseline).acc_smallest;
        const double p = g_banks.run(i, TrainMode::Inplaced).acc_smallest;
        beats_baseline += s > b;
        beats_inplaced += s > p;
        for (TrainMode m : kModes) slowest = std::max(slowest, g_banks.run(i, m).seconds);
        per_seed += fmt(" [%.3f/%.3f/%.3f]", s, b, p);
    }
    return {beats_baseline >= 4 && beats_inplaced >= 3 && slowest < 300.0,
            fmt("1/64x beats baseline on %d/5 (need 4), inplaced on %d/5 (need 3); slowest run %.1f s; "
                "slimda/baseline/inplaced:%s",
                beats_baseline, beats_inplaced, slowest, per_seed.c_str())};
}

struct Sampled {
    std::vector<WidthConfig> configs;
    std::vector<double> deltas, accs, flops;
};

Sampled sample_bank(const ParamStore& store, const SeedData& sd, std::size_t n, std::uint64_t seed) {
    UpemEvaluator ev(store, sd.probe.xt, DeployHead::Auxiliary);
    Rng rng = make_stream(seed, "acceptance-configs");
    Sampled out;
    out.configs = spread_configs(rng, store.architecture(), n);
    for (const auto& c : out.configs) {
        out.deltas.push_back(ev.score(c).delta);
        out.accs.push_back(evaluate_accuracy(ev, c, sd.probe.yt));
        out.flops.push_back(c.flops());
    }
    return out;
}

Verdict upem_correlation() {
    g_banks.ensure();
    int good = 0;
    double slowest = 0.0;
    std::string per_seed;
    for (std::size_t i = 0; i < std::size(kSeeds); ++i) {
        const auto t0 = Clock::now();
        const Sampled s = sample_bank(g_banks.run(i, TrainMode::SlimDA).store, g_banks.data[i], 100, kSeeds[i]);
        const double r = pearson(s.deltas, s.accs);
        slowest = std::max(slowest, seconds_since(t0));
        good += r <= -0.5;
        per_seed += fmt(" %.3f", r);
    }
    return {good >= 4 && slowest < 180.0,
            fmt("Pearson(delta, accuracy) <= -0.5 on %d/5 seeds (need 4):%s; slowest %.1f s", good,
                per_seed.c_str(), slowest)};
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Every legal width configuration of a small architecture.
std::vector<WidthConfig> enumerate_configs(const Architecture& a) {
    std::vector<std::vector<std::size_t>> all{{}};
    for (std::size_t b = 0; b < a.block_count(); ++b) {
        std::vector<std::vector<std::size_t>> next;
        for (const auto& prefix : all)
            for (std::size_t w = a.min_width(b); w <= a.block_max_widths[b]; ++w) {
                next.push_back(prefix);
                next.back().push_back(w);
            }
        all = std::move(next);
    }
    std::vector<WidthConfig> out;
    for (auto& w : all) out.emplace_back(a, std::move(w));
    return out;
}

Verdict search_quality() {
    g_banks.ensure();
    const ExperimentConfig cfg = default_config(kSeeds[0]);
    const SeedData& sd = g_banks.data[0];
    const ParamStore& store = g_banks.run(0, TrainMode::SlimDA).store;
    UpemEvaluator ev(store, sd.probe.xt, DeployHead::Auxiliary);
    const SearchPlan plan = SearchPlan::equal_steps(cfg.architecture, 6);
    Rng greedy_rng = make_stream(cfg.seed, "acceptance-greedy");
    const auto steps = inherited_greedy_search(ev, plan, greedy_rng);
    Rng random_rng = make_stream(cfg.seed, "acceptance-random");
    int at_least_median = 0;
    std::string per_budget;
    for (const auto& st : steps) {
        const double budget = st.budget_ratio * ev.full_flops();
        const auto rs = random_search(ev, budget, 100, random_rng, plan.tolerance);
        std::vector<double> accs;
        for (const auto& sc : rs.scores) accs.push_back(evaluate_accuracy(ev, sc.config, sd.probe.yt));
        const double med = median(accs);
        const double win = evaluate_accuracy(ev, st.winner.config, sd.probe.yt);
        at_least_median += win >= med;
        per_budget += fmt(" %.2f:%.4f/%.4f", st.budget_ratio, win, med);
    }

    // Exhaustive check on the first two blocks of the default architecture,
    // trained on the same data.
    ExperimentConfig tiny = cfg;
    tiny.architecture.block_max_widths.resize(2);
    ModelBank bank = ModelBank::initialize(tiny.architecture, tiny.seed, tiny.trainer.momentum);
    train(bank, sd.data.training_view(), tiny.trainer);
    UpemEvaluator tev(bank.store, sd.probe.xt, DeployHead::Auxiliary);
    const auto all = enumerate_configs(tiny.architecture);
    std::vector<double> all_acc;
    for (const auto& c : all) all_acc.push_back(evaluate_accuracy(tev, c, sd.probe.yt));
    const SearchPlan tiny_plan = SearchPlan::equal_steps(tiny.architecture, 6);
    Rng tiny_rng = make_stream(tiny.seed, "acceptance-greedy-tiny");
    const auto tiny_steps = inherited_greedy_search(tev, tiny_plan, tiny_rng);
    double worst_gap = 0.0;
    std::string tiny_budget;
    for (const auto& st : tiny_steps) {
        // The optimum ranges over the FLOPs band the search targets at this budget.
        const double budget = st.budget_ratio * tev.full_flops();
        const double lo = budget * (1.0 - tiny_plan.tolerance), hi = budget * (1.0 + tiny_plan.tolerance);
        const double win = evaluate_accuracy(tev, st.winner.config, sd.probe.yt);
        double best = win;
        for (std::size_t i = 0; i < all.size(); ++i)
            if (all[i].flops() >= lo && all[i].flops() <= hi) best = std::max(best, all_acc[i]);
        worst_gap = std::max(worst_gap, best - win);
        tiny_budget += fmt(" %.2f:%.4f/%.4f", st.budget_ratio, win, best);
    }
    return {at_least_median >= 5 && worst_gap <= 0.02,
            fmt("greedy >= random median on %d/6 budgets (need 5), budget:greedy/median%s; "
                "%zu-config exhaustive gap at most %.2f points (limit 2), budget:greedy/optimum%s",
                at_least_median, per_budget.c_str(), all.size(), 100.0 * worst_gap, tiny_budget.c_str())};
}

Verdict assumption_probe() {
    g_banks.ensure();
    const ParamStore& store = g_banks.run(0, TrainMode::SlimDA).store;
    const Sampled s = sample_bank(store, g_banks.data[0], 100, kSeeds[0]);
    const double rho = spearman(s.flops, s.accs);
    std::string others;
    for (std::size_t i = 1; i < std::size(kSeeds); ++i) {
        const Sampled o = sample_bank(g_banks.run(i, TrainMode::SlimDA).store, g_banks.data[i], 100, kSeeds[i]);
        others += fmt(" %.3f", spearman(o.flops, o.accs));
    }
    return {rho > 0.0, fmt("Spearman(FLOPs, accuracy) %.3f over 100 configs (seed 1); other seeds:%s", rho,
                           others.c_str())};
}

Verdict graceful_degradation() {
    g_banks.ensure();
    double slim = 0.0, base = 0.0;
    for (std::size_t i = 0; i < std::size(kSeeds); ++i) {
        const auto& s = g_banks.run(i, TrainMode::SlimDA);
        const auto& b = g_banks.run(i, TrainMode::Baseline);
        slim += (s.acc_full - s.acc_smallest) / 5.0;
        base += (b.acc_full - b.acc_smallest) / 5.0;
    }
    return {slim <= base, fmt("mean 1x to 1/64x drop: slimda %.4f, baseline %.4f", slim, base)};
}

std::vector<std::string> run_pipeline(const fs::path& dir) {
    ExperimentConfig cfg = default_config(kSeeds[0]);
    cfg.output_dir = dir;
    std::ostringstream log;
    RunOptions opts;
    cmd_gen_data(cfg, log);
    cmd_train(cfg, opts, log);
    RunOptions reveal;
    reveal.reveal_labels = true;
    cmd_search(cfg, reveal, log);
    cfg.search.strategy = SearchStrategy::Random;
    cmd_search(cfg, reveal, log);
    cmd_correlate(cfg, opts, log);
    cmd_eval(cfg, opts, log);
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".csv") names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());
    return names;
}

Verdict reproducibility() {
    const fs::path root = fs::temp_directory_path() / "slimda_acceptance_repro";
    fs::remove_all(root);
    const auto a = run_pipeline(root / "first");
    const auto b = run_pipeline(root / "second");
    std::size_t identical = 0;
    for (const auto& name : a)
        if (std::find(b.begin(), b.end(), name) != b.end() &&
            read_file(root / "first" / name) == read_file(root / "second" / name))
            ++identical;
    fs::remove_all(root);
    return {!a.empty() && a == b && identical == a.size(),
            fmt("%zu of %zu CSV files byte-identical across two runs", identical, a.size())};
}

struct Criterion {
    int id;
    const char* name;
    std::function<Verdict()> run;
};

} // namespace

int main(int argc, char** argv) {
    std::set<int> only;
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::string(argv[i]) != "--only") continue;
        std::stringstream ss(argv[i + 1]);
        std::string item;
        while (std::getline(ss, item, ',')) only.insert(std::stoi(item));
    }
    const std::vector<Criterion> criteria{
        {1, "gradient correctness", gradient_correctness},
        {2, "slicing oracle", slicing_oracle},
        {3, "loss unit values", loss_unit_values},
        {4, "ensemble distillation mechanics", seed_mechanics},
        {5, "gradient routing", gradient_routing},
        {6, "adaptation efficacy", adaptation_efficacy},
        {7, "UPEM correlation", upem_correlation},
        {8, "search quality", search_quality},
        {9, "capacity monotonicity probe", assumption_probe},
        {10, "graceful degradation", graceful_degradation},
        {11, "reproducibility", reproducibility},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && !only.contains(c.id)) continue;
        Verdict v;
        try {
            v = c.run();
        } catch (const std::exception& e) {
            v = {false, std::string("threw: ") + e.what()};
        }
        failed += !v.pass;
        std::printf("%s %2d %s: %s\n", v.pass ? "PASS" : "FAIL", c.id, c.name, v.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d criteria failed\n", failed);
    return failed == 0 ? 0 : 1;
}
