#include "slimda/experiment.hpp"

#include <fstream>
#include <map>
#include <ostream>

#include "slimda/checkpoint.hpp"
#include "slimda/csv.hpp"
#include "slimda/error.hpp"

namespace slimda {

std::string to_string(SearchStrategy s) { return s == SearchStrategy::Greedy ? "greedy" : "random"; }

SearchStrategy parse_search_strategy(const std::string& text) {
    if (text == "greedy") return SearchStrategy::Greedy;
    if (text == "random") return SearchStrategy::Random;
    throw ConfigError("unknown search strategy '" + text + "' (expected greedy or random)");
}

namespace {

using nlohmann::json;

const json& req(const json& j, const std::string& key, const std::string& path) {
    if (!j.is_object() || !j.contains(key)) throw ConfigError("missing field '" + path + key + "'");
    return j.at(key);
}

[[noreturn]] void bad_type(const std::string& path, const std::string& key, const char* expected) {
    throw ConfigError("field '" + path + key + "' must be " + expected);
}

std::size_t req_size(const json& j, const std::string& key, const std::string& path) {
    const json& v = req(j, key, path);
    if (!v.is_number_unsigned()) bad_type(path, key, "a non-negative integer");
    return v.get<std::size_t>();
}

std::uint64_t req_u64(const json& j, const std::string& key, const std::string& path) {
    const json& v = req(j, key, path);
    if (!v.is_number_unsigned()) bad_type(path, key, "a non-negative integer");
    return v.get<std::uint64_t>();
}

double req_real(const json& j, const std::string& key, const std::string& path) {
    const json& v = req(j, key, path);
    if (!v.is_number()) bad_type(path, key, "a number");
    return v.get<double>();
}

std::string req_string(const json& j, const std::string& key, const std::string& path) {
    const json& v = req(j, key, path);
    if (!v.is_string()) bad_type(path, key, "a string");
    return v.get<std::string>();
}

DatasetSpec dataset_from_json(const json& j) {
    const std::string p = "dataset.";
    DatasetSpec s;
    s.generator = parse_generator(req_string(j, "generator", p));
    const json& shift = req(j, "shift", p);
    const std::string sp = p + "shift.";
    s.shift.kind = parse_shift_kind(req_string(shift, "kind", sp));
    s.shift.magnitude = req_real(shift, "magnitude", sp);
    s.shift.noise_std = req_real(shift, "noise_std", sp);
    s.class_count = req_size(j, "class_count", p);
    s.dim = req_size(j, "dim", p);
    s.n_source = req_size(j, "n_source", p);
    s.n_target = req_size(j, "n_target", p);
    return s;
}

TrainerConfig trainer_from_json(const json& j) {
    const std::string p = "trainer.";
    TrainerConfig t;
    t.mode = parse_train_mode(req_string(j, "mode", p));
    t.m = req_size(j, "m", p);
    t.epochs = req_size(j, "epochs", p);
    t.batch_size = req_size(j, "batch_size", p);
    t.w_ent = req_real(j, "w_ent", p);
    t.tau = req_real(j, "tau", p);
    t.momentum = req_real(j, "momentum", p);
    const json& lr = req(j, "lr", p);
    t.lr.base = req_real(lr, "base", p + "lr.");
    t.lr.alpha = req_real(lr, "alpha", p + "lr.");
    t.lr.beta = req_real(lr, "beta", p + "lr.");
    const json& c = req(j, "confidence", p);
    const std::string cp = p + "confidence.";
    const std::string mode = req_string(c, "mode", cp);
    if (mode == "hard") t.confidence.mode = ConfidenceMode::Hard;
    else if (mode == "general") t.confidence.mode = ConfidenceMode::General;
    else throw ConfigError("field '" + cp + "mode' must be hard or general");
    t.confidence.lambda = req_real(c, "lambda", cp);
    t.confidence.s = req_real(c, "s", cp);
    return t;
}

SearchSettings search_from_json(const json& j) {
    const std::string p = "search.";
    SearchSettings s;
    s.strategy = parse_search_strategy(req_string(j, "strategy", p));
    s.k = req_size(j, "k", p);
    s.q = req_size(j, "q", p);
    s.n_random = req_size(j, "n_random", p);
    s.tolerance = req_real(j, "tolerance", p);
    if (j.contains("budgets") && !j.at("budgets").is_null()) {
        const json& b = j.at("budgets");
        if (!b.is_array()) bad_type(p, "budgets", "a list of ratios");
        for (const auto& v : b) {
            if (!v.is_number()) bad_type(p, "budgets", "a list of ratios");
            s.budgets.push_back(v.get<double>());
        }
    }
    return s;
}

CorrelateSettings correlate_from_json(const json& j) {
    const std::string p = "correlate.";
    CorrelateSettings c;
    c.n = req_size(j, "n", p);
    if (j.contains("bands")) {
        const json& b = j.at("bands");
        if (!b.is_array() || b.empty()) bad_type(p, "bands", "a non-empty list of [lo, hi] pairs");
        c.bands.clear();
        for (const auto& band : b) {
            if (!band.is_array() || band.size() != 2 || !band[0].is_number() || !band[1].is_number()) {
                bad_type(p, "bands", "a non-empty list of [lo, hi] pairs");
            }
            c.bands.emplace_back(band[0].get<double>(), band[1].get<double>());
        }
    }
    return c;
}

void ensure_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir)) {
        throw IoError("cannot create output directory " + dir.string());
    }
}

std::string mode_tag(const std::string& mode) { return mode.empty() ? "slimda" : mode; }

Checkpoint load_matching_checkpoint(const ExperimentConfig& config, const std::filesystem::path& path) {
    Checkpoint ck = load_checkpoint(path);
    if (!(ck.store.architecture() == config.architecture)) {
        throw IoError("checkpoint " + path.string() + " was trained for a different architecture");
    }
    return ck;
}

std::vector<std::string> report_header(bool with_accuracy, bool with_selected) {
    std::vector<std::string> h{"step", "budget_ratio", "widths", "delta", "flops"};
    if (with_selected) h.push_back("selected");
    if (with_accuracy) h.push_back("accuracy");
    return h;
}

} // namespace

void ExperimentConfig::set_seed(std::uint64_t s) {
    seed = s;
    dataset.seed = s;
    trainer.seed = s;
}

void ExperimentConfig::validate() const {
    architecture.validate();
    trainer.validate();
    if (architecture.input_dim != dataset.dim) {
        throw ConfigError("architecture.input_dim (" + std::to_string(architecture.input_dim) +
                          ") differs from dataset.dim (" + std::to_string(dataset.dim) + ")");
    }
    if (architecture.class_count != dataset.class_count) {
        throw ConfigError("architecture.class_count differs from dataset.class_count");
    }
    if (search.k == 0) throw ConfigError("search.k must be >= 1");
    if (search.q == 0) throw ConfigError("search.q must be >= 1");
    if (search.n_random == 0) throw ConfigError("search.n_random must be >= 1");
    if (correlate.n < 3) throw ConfigError("correlate.n must be >= 3");
    for (const auto& [lo, hi] : correlate.bands) {
        if (!(lo >= 0.0 && hi <= 1.0 && lo < hi)) throw ConfigError("correlate.bands must satisfy 0 <= lo < hi <= 1");
    }
    if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

ExperimentConfig experiment_from_json(const json& doc) {
    if (!doc.is_object()) throw ConfigError("experiment config must be a JSON object");
    ExperimentConfig c;
    c.output_dir = req_string(doc, "output_dir", "");
    c.dataset = dataset_from_json(req(doc, "dataset", ""));
    c.architecture = architecture_from_json(req(doc, "architecture", ""));
    c.trainer = trainer_from_json(req(doc, "trainer", ""));
    c.search = search_from_json(req(doc, "search", ""));
    c.correlate = correlate_from_json(req(doc, "correlate", ""));
    if (doc.contains("record_wall_time")) {
        if (!doc.at("record_wall_time").is_boolean()) bad_type("", "record_wall_time", "true or false");
        c.record_wall_time = doc.at("record_wall_time").get<bool>();
    }
    c.set_seed(req_u64(doc, "seed", ""));
    c.validate();
    return c;
}

json experiment_to_json(const ExperimentConfig& c) {
    json bands = json::array();
    for (const auto& [lo, hi] : c.correlate.bands) bands.push_back({lo, hi});
    return {
        {"seed", c.seed},
        {"output_dir", c.output_dir.string()},
        {"dataset",
         {{"generator", to_string(c.dataset.generator)},
          {"shift",
           {{"kind", to_string(c.dataset.shift.kind)},
            {"magnitude", c.dataset.shift.magnitude},
            {"noise_std", c.dataset.shift.noise_std}}},
          {"class_count", c.dataset.class_count},
          {"dim", c.dataset.dim},
          {"n_source", c.dataset.n_source},
          {"n_target", c.dataset.n_target}}},
        {"architecture", architecture_to_json(c.architecture)},
        {"trainer",
         {{"mode", to_string(c.trainer.mode)},
          {"m", c.trainer.m},
          {"epochs", c.trainer.epochs},
          {"batch_size", c.trainer.batch_size},
          {"w_ent", c.trainer.w_ent},
          {"tau", c.trainer.tau},
          {"momentum", c.trainer.momentum},
          {"lr", {{"base", c.trainer.lr.base}, {"alpha", c.trainer.lr.alpha}, {"beta", c.trainer.lr.beta}}},
          {"confidence",
           {{"mode", c.trainer.confidence.mode == ConfidenceMode::Hard ? "hard" : "general"},
            {"lambda", c.trainer.confidence.lambda},
            {"s", c.trainer.confidence.s}}}}},
        {"search",
         {{"strategy", to_string(c.search.strategy)},
          {"k", c.search.k},
          {"q", c.search.q},
          {"n_random", c.search.n_random},
          {"tolerance", c.search.tolerance},
          {"budgets", c.search.budgets}}},
        {"correlate", {{"n", c.correlate.n}, {"bands", bands}}},
        {"record_wall_time", c.record_wall_time},
    };
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return experiment_from_json(doc);
}

std::filesystem::path dataset_path(const ExperimentConfig& config, const RunOptions& options) {
    return options.dataset ? *options.dataset : config.output_dir / "dataset.json";
}

std::filesystem::path checkpoint_path(const ExperimentConfig& config, const RunOptions& options) {
    if (options.checkpoint) return *options.checkpoint;
    return config.output_dir / ("checkpoint_" + to_string(config.trainer.mode) + ".json");
}

std::vector<double> budget_ladder(const ExperimentConfig& config) {
    SearchPlan plan = config.search.budgets.empty()
                          ? SearchPlan::equal_steps(config.architecture, config.search.k, config.search.q,
                                                    config.search.tolerance)
                          : SearchPlan{config.search.budgets, config.search.q, config.search.tolerance};
    plan.validate(config.architecture);
    return plan.budget_ratios;
}

const std::vector<std::string>& metrics_header() {
    static const std::vector<std::string> h{"epoch",    "mode",      "loss_task",   "loss_dd",
                                            "loss_conf", "loss_ent", "loss_seed",   "probe_acc_1",
                                            "probe_acc_64th", "seconds"};
    return h;
}

CommandResult cmd_gen_data(const ExperimentConfig& config, std::ostream& log) {
    ensure_dir(config.output_dir);
    const DomainDataset data = make_dataset(config.dataset);
    const auto path = config.output_dir / "dataset.json";
    save_dataset(path, data);

    std::vector<std::size_t> cs(data.class_count()), ct(data.class_count());
    for (int y : data.ys()) ++cs[static_cast<std::size_t>(y)];
    for (int y : data.target_labels_for_evaluation()) ++ct[static_cast<std::size_t>(y)];
    log << "dataset " << path.string() << ": K=" << data.class_count() << " d=" << data.dim()
        << " shift=" << to_string(config.dataset.shift.kind) << " magnitude=" << config.dataset.shift.magnitude
        << "\n";
    log << "  source class counts:";
    for (auto c : cs) log << ' ' << c;
    log << " (n_s=" << data.n_source() << ")\n  target class counts:";
    for (auto c : ct) log << ' ' << c;
    log << " (n_t=" << data.n_target() << ")\n";
    return {{path}};
}

CommandResult cmd_train(const ExperimentConfig& config, const RunOptions& options, std::ostream& log) {
    ensure_dir(config.output_dir);
    const DomainDataset data = load_dataset(dataset_path(config, options), LabelAccess::Evaluation);
    std::optional<ProbeSet> probe;
    if (data.has_hidden_labels()) probe = ProbeSet{data.xt(), data.target_labels_for_evaluation()};
    const DomainDataset training = data.training_view();

    const std::string mode = to_string(config.trainer.mode);
    const auto ck_path = checkpoint_path(config, RunOptions{});
    const auto csv_path = config.output_dir / ("metrics_" + mode + ".csv");
    ModelBank bank = ModelBank::initialize(config.architecture, config.seed, config.trainer.momentum);
    std::vector<EpochMetrics> epochs;
    try {
        epochs = train(bank, training, config.trainer, probe ? &*probe : nullptr);
    } catch (const TrainingAborted& e) {
        std::error_code ec;
        std::filesystem::remove(ck_path.string() + ".partial", ec);
        std::filesystem::remove(ck_path, ec);
        write_file_atomic(config.output_dir / ("numeric_failure_" + mode + ".json"), e.dump() + "\n");
        throw;
    }

    CsvWriter csv(metrics_header());
    for (const auto& em : epochs) {
        const auto acc = [&](double v) { return probe ? csv_real(v) : std::string(); };
        csv.row({std::to_string(em.epoch), mode, csv_real(em.loss.loss_task), csv_real(em.loss.loss_dd),
                 csv_real(em.loss.loss_conf), csv_real(em.loss.loss_ent), csv_real(em.loss.loss_seed),
                 acc(em.probe_acc_full), acc(em.probe_acc_smallest),
                 csv_real(config.record_wall_time ? em.seconds : 0.0)});
        log << "epoch " << em.epoch << " [" << mode << "] task=" << em.loss.loss_task
            << " conf=" << em.loss.loss_conf << " seed=" << em.loss.loss_seed;
        if (probe) log << " acc_1x=" << em.probe_acc_full << " acc_1/64x=" << em.probe_acc_smallest;
        log << "\n";
    }
    CheckpointMeta meta{config.seed, bank.step, mode, deploy_head_for(config.trainer.mode)};
    save_checkpoint(ck_path, bank.store, meta);
    write_file_atomic(csv_path, csv.str());
    return {{ck_path, csv_path}};
}

CommandResult cmd_search(const ExperimentConfig& config, const RunOptions& options, std::ostream& log) {
    ensure_dir(config.output_dir);
    const Checkpoint ck = load_matching_checkpoint(config, checkpoint_path(config, options));
    const LabelAccess access = options.reveal_labels ? LabelAccess::Evaluation : LabelAccess::Training;
    const DomainDataset data = load_dataset(dataset_path(config, options), access);
    const std::vector<int>* labels = options.reveal_labels ? &data.target_labels_for_evaluation() : nullptr;

    UpemEvaluator ev(ck.store, data.xt(), ck.meta.deploy_head);
    Rng rng = make_stream(config.seed, "search");
    const auto ladder = budget_ladder(config);
    const bool random = config.search.strategy == SearchStrategy::Random;
    CsvWriter csv(report_header(labels != nullptr, random));

    auto emit = [&](std::size_t step, double ratio, const UpemScore& s, std::optional<bool> selected) {
        std::vector<std::string> row{std::to_string(step), csv_real(ratio), s.config.to_string(),
                                     csv_real(s.delta), csv_real(s.config.flops())};
        if (selected) row.push_back(*selected ? "1" : "0");
        if (labels) row.push_back(csv_real(evaluate_accuracy(ev, s.config, *labels)));
        csv.row(row);
    };

    if (random) {
        for (std::size_t i = 0; i < ladder.size(); ++i) {
            const auto res = random_search(ev, ladder[i] * ev.full_flops(), config.search.n_random, rng,
                                           config.search.tolerance);
            for (std::size_t j = 0; j < res.scores.size(); ++j) emit(i + 1, ladder[i], res.scores[j], j == res.best_index);
            log << "budget " << ladder[i] << ": best " << res.best.config.to_string() << " delta=" << res.best.delta << "\n";
        }
    } else {
        SearchPlan plan{ladder, config.search.q, config.search.tolerance};
        for (const auto& step : inherited_greedy_search(ev, plan, rng)) {
            emit(step.step, step.budget_ratio, step.winner, std::nullopt);
            log << "budget " << step.budget_ratio << ": " << step.winner.config.to_string()
                << " delta=" << step.winner.delta << (step.saturated ? " (saturated)" : "") << "\n";
        }
    }
    const auto path = config.output_dir / ("search_" + to_string(config.search.strategy) + "_" +
                                           mode_tag(ck.meta.mode) + ".csv");
    write_file_atomic(path, csv.str());
    return {{path}};
}

CommandResult cmd_correlate(const ExperimentConfig& config, const RunOptions& options, std::ostream& log) {
    ensure_dir(config.output_dir);
    const Checkpoint ck = load_matching_checkpoint(config, checkpoint_path(config, options));
    const DomainDataset data = load_dataset(dataset_path(config, options), LabelAccess::Evaluation);
    const std::vector<int>& labels = data.target_labels_for_evaluation();

    UpemEvaluator ev(ck.store, data.xt(), ck.meta.deploy_head);
    Rng rng = make_stream(config.seed, "correlate");
    CsvWriter pairs({"band", "lo", "hi", "widths", "flops", "delta", "accuracy"});
    CsvWriter summary({"band", "lo", "hi", "n", "pearson", "spearman"});
    for (std::size_t b = 0; b < config.correlate.bands.size(); ++b) {
        const auto [lo, hi] = config.correlate.bands[b];
        std::vector<double> deltas, accs;
        for (const auto& c : spread_configs(rng, config.architecture, config.correlate.n, lo, hi,
                                            config.search.tolerance)) {
            deltas.push_back(ev.score(c).delta);
            accs.push_back(evaluate_accuracy(ev, c, labels));
            pairs.row({std::to_string(b + 1), csv_real(lo), csv_real(hi), c.to_string(), csv_real(c.flops()),
                       csv_real(deltas.back()), csv_real(accs.back())});
        }
        const CorrelationReport r = correlate(deltas, accs);
        summary.row({std::to_string(b + 1), csv_real(lo), csv_real(hi), std::to_string(r.samples),
                     csv_real(r.pearson), csv_real(r.spearman)});
        log << "band [" << lo << ", " << hi << "]: pearson=" << r.pearson << " spearman=" << r.spearman << "\n";
    }
    const std::string tag = mode_tag(ck.meta.mode);
    const auto p1 = config.output_dir / ("correlate_" + tag + ".csv");
    const auto p2 = config.output_dir / ("correlate_" + tag + "_summary.csv");
    write_file_atomic(p1, pairs.str());
    write_file_atomic(p2, summary.str());
    return {{p1, p2}};
}

CommandResult cmd_eval(const ExperimentConfig& config, const RunOptions& options, std::ostream& log) {
    ensure_dir(config.output_dir);
    const Checkpoint ck = load_matching_checkpoint(config, checkpoint_path(config, options));
    const DomainDataset data = load_dataset(dataset_path(config, options), LabelAccess::Evaluation);
    const std::vector<int>& labels = data.target_labels_for_evaluation();
    const Architecture& arch = config.architecture;

    std::vector<WidthConfig> configs;
    if (options.widths.empty()) {
        configs = {WidthConfig::largest(arch), WidthConfig::smallest(arch)};
    } else {
        for (const auto& w : options.widths) {
            try {
                configs.push_back(WidthConfig::parse(arch, w));
            } catch (const ConfigError& e) {
                throw UsageError(std::string("illegal widths: ") + e.what());
            }
        }
    }
    UpemEvaluator ev(ck.store, data.xt(), ck.meta.deploy_head);
    const double full_acc = evaluate_accuracy(ev, WidthConfig::largest(arch), labels);
    CsvWriter csv({"widths", "flops", "flops_ratio", "accuracy", "delta_vs_full"});
    for (const auto& c : configs) {
        const double acc = evaluate_accuracy(ev, c, labels);
        csv.row({c.to_string(), csv_real(c.flops()), csv_real(c.flops() / ev.full_flops()), csv_real(acc),
                 csv_real(full_acc - acc)});
        log << c.to_string() << ": accuracy=" << acc << " flops_ratio=" << c.flops() / ev.full_flops() << "\n";
    }
    const auto path = config.output_dir / ("eval_" + mode_tag(ck.meta.mode) + ".csv");
    write_file_atomic(path, csv.str());
    return {{path}};
}

} // namespace slimda
