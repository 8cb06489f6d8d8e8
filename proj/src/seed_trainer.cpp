#include "slimda/seed_trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>

#include <json.hpp>

#include "slimda/kernels.hpp"

namespace slimda {

std::string to_string(TrainMode mode) {
    switch (mode) {
        case TrainMode::SlimDA: return "slimda";
        case TrainMode::Baseline: return "baseline";
        case TrainMode::Inplaced: return "inplaced";
    }
    return "unknown";
}

TrainMode parse_train_mode(const std::string& text) {
    if (text == "slimda") return TrainMode::SlimDA;
    if (text == "baseline") return TrainMode::Baseline;
    if (text == "inplaced") return TrainMode::Inplaced;
    throw ConfigError("unknown training mode '" + text + "' (expected slimda, baseline or inplaced)");
}

DeployHead deploy_head_for(TrainMode mode) {
    return mode == TrainMode::SlimDA ? DeployHead::Auxiliary : DeployHead::BiAverage;
}

void ConfidencePolicy::validate() const {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("confidence lambda must lie in [0, 1]");
    if (!(s >= 0.0 && s <= 1.0)) throw ConfigError("confidence exponent s must lie in [0, 1]");
}

void TrainerConfig::validate() const {
    if (m < 2) throw ConfigError("trainer: model batch size m must be >= 2");
    if (batch_size < 2) throw ConfigError("trainer: batch_size must be >= 2");
    if (!(tau > 0.0)) throw ConfigError("trainer: tau must be > 0");
    if (!(w_ent >= 0.0)) throw ConfigError("trainer: w_ent must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("trainer: momentum must lie in [0, 1)");
    if (!(lr.base > 0.0)) throw ConfigError("trainer: learning rate must be > 0");
    confidence.validate();
}

ModelBatch sample_model_batch(Rng& rng, const Architecture& arch, std::size_t m) {
    if (m < 2) throw UsageError("model batch size must be >= 2");
    std::vector<WidthConfig> configs;
    configs.reserve(m);
    configs.push_back(WidthConfig::largest(arch));
    configs.push_back(WidthConfig::smallest(arch));
    for (std::size_t j = 2; j < m; ++j) {
        std::vector<std::size_t> w(arch.block_count());
        for (std::size_t b = 0; b < w.size(); ++b) {
            w[b] = uniform_index(rng, arch.min_width(b), arch.block_max_widths[b]);
        }
        configs.emplace_back(arch, std::move(w));
    }
    std::stable_sort(configs.begin(), configs.end(), [](const WidthConfig& a, const WidthConfig& b) {
        if (a.flops() != b.flops()) return a.flops() > b.flops();
        return a > b;
    });
    ModelBatch batch;
    const double full = configs.front().flops();
    for (const auto& c : configs) batch.capacity.push_back(c.flops() / full);
    batch.configs = std::move(configs);
    return batch;
}

double confidence(double r, const ConfidencePolicy& policy) {
    if (policy.mode == ConfidenceMode::Hard) return r >= policy.lambda ? 1.0 : 0.0;
    const double a = 2.0 * r - 1.0;
    const double sign = a > 0.0 ? 1.0 : (a < 0.0 ? -1.0 : 0.0);
    return 0.5 * sign * std::pow(std::abs(a), policy.s) + 0.5;
}

std::vector<double> confidence(const ModelBatch& batch, const ConfidencePolicy& policy) {
    std::vector<double> out;
    out.reserve(batch.size());
    for (double r : batch.capacity) out.push_back(confidence(r, policy));
    return out;
}

Tensor ensemble(std::span<const Tensor> predictions, std::span<const double> confidences) {
    if (predictions.empty() || predictions.size() != confidences.size()) {
        throw UsageError("ensemble: need one confidence per prediction");
    }
    const double total = std::accumulate(confidences.begin(), confidences.end(), 0.0);
    if (!(total > 0.0)) throw UsageError("ensemble: confidences sum to zero");
    Tensor out(predictions.front().shape());
    for (std::size_t j = 0; j < predictions.size(); ++j) {
        require_same_shape(out, predictions[j], "ensemble");
        if (confidences[j] == 0.0) continue;
        kernels::axpy(confidences[j] / total, predictions[j].data(), out.data());
    }
    return out;
}

Tensor sharpen(const Tensor& g, double tau) {
    if (!(tau > 0.0)) throw UsageError("sharpen: tau must be > 0");
    Tensor out(g.shape());
    const double inv = 1.0 / tau;
    for (std::size_t r = 0; r < g.rows(); ++r) {
        auto in = g.row(r);
        auto dst = out.row(r);
        double top = -std::numeric_limits<double>::infinity();
        for (double p : in) {
            if (p < 0.0) throw UsageError("sharpen: negative probability");
            if (p > 0.0) top = std::max(top, inv * std::log(p));
        }
        if (!std::isfinite(top)) throw UsageError("sharpen: all-zero row");
        double sum = 0.0;
        for (std::size_t k = 0; k < in.size(); ++k) {
            dst[k] = in[k] > 0.0 ? std::exp(inv * std::log(in[k]) - top) : 0.0;
            sum += dst[k];
        }
        for (double& v : dst) v /= sum;
    }
    return out;
}

ad::Var seed_loss(DcForward& forward, const Tensor& g_seed, std::span<const int> ys) {
    ad::Graph& g = forward.graph();
    if (g_seed.rows() != forward.n_target()) throw UsageError("seed_loss: g_seed rows differ from target rows");
    ad::Var tgt = g.cross_entropy(forward.aux_log_probs_target(), g.constant(g_seed));
    ad::Var src = g.cross_entropy(forward.aux_log_probs_source(), g.constant(one_hot(ys, g_seed.cols())));
    return g.add(tgt, src);
}

double seed_loss(const SlimModel& model, const DomainBatch& batch, const Tensor& g_seed) {
    ad::Graph g;
    ModelGraph mg(g, model, TrainableSet::none());
    DcForward fw(mg, batch);
    return g.scalar(seed_loss(fw, g_seed, batch.ys));
}

ad::Var inplaced_distill_loss(DcForward& forward, const Tensor& teacher) {
    ad::Graph& g = forward.graph();
    if (teacher.rows() != forward.n_source() + forward.n_target()) {
        throw UsageError("inplaced_distill_loss: teacher rows differ from batch rows");
    }
    ad::Var t = g.constant(teacher);
    ad::Var s = g.cross_entropy(g.log_softmax(forward.logits_all(Head::Source)), t);
    ad::Var u = g.cross_entropy(g.log_softmax(forward.logits_all(Head::Target)), t);
    return g.add(s, u);
}

ModelBank ModelBank::initialize(const Architecture& arch, std::uint64_t seed, double momentum) {
    ModelBank bank{ParamStore::initialize(arch, seed), {}, 0};
    bank.optimizer.momentum = momentum;
    return bank;
}

namespace {

/// One model's graph for one sub-step.
struct ModelPass {
    ModelPass(const ParamStore& store, const WidthConfig& config, TrainableSet trainable,
              const DomainBatch& data)
        : model(store, config), mg(graph, model, trainable), fw(mg, data) {}

    ad::Graph graph;
    SlimModel model;
    ModelGraph mg;
    DcForward fw;
};

std::unique_ptr<ModelPass> make_pass(const ParamStore& store, const WidthConfig& config,
                                     TrainableSet trainable, const DomainBatch& data) {
    return std::make_unique<ModelPass>(store, config, trainable, data);
}

ad::Gradients zero_gradients(const ParamStore& store, std::span<const ad::ParamId> ids) {
    ad::Gradients out;
    for (ad::ParamId id : ids) out.emplace(id, Tensor(store.value(id).shape()));
    return out;
}

void accumulate(ad::Gradients& into, const ad::Gradients& grads, double weight) {
    for (auto& [id, acc] : into) {
        auto it = grads.find(id);
        if (it != grads.end()) kernels::axpy(weight, it->second.data(), acc.data());
    }
}

std::vector<ad::ParamId> concat_ids(std::vector<ad::ParamId> a, const std::vector<ad::ParamId>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

ad::Var classifier_objective(DcForward& fw) {
    return fw.graph().add(fw.loss_task(), fw.loss_domain_disc());
}

std::string describe(const ModelBatch& batch) {
    std::string s;
    for (const auto& c : batch.configs) s += (s.empty() ? "" : " ") + c.to_string();
    return s;
}

/// Re-raises numeric failures with the model batch attached.
template <class F>
StepMetrics guarded(const ModelBatch& batch, F&& body) {
    try {
        return body();
    } catch (const TrainingAborted&) {
        throw;
    } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " [model batch: " + describe(batch) + "]");
    }
}

void record_trace(StepTrace* trace, const ModelBatch& batch, const std::vector<double>& conf,
                  const ParamStore& store, double lr) {
    if (!trace) return;
    trace->batch = batch;
    trace->confidences = conf;
    trace->target = Tensor();
    trace->before = store;
    trace->between.reset();
    trace->classifier_update.clear();
    trace->extractor_update.clear();
    trace->lr = lr;
}

} // namespace

StepMetrics train_step(ModelBank& bank, const DomainBatch& data, const TrainerConfig& config,
                       Rng& model_rng, double lr, StepTrace* trace) {
    ParamStore& store = bank.store;
    const ModelBatch batch = sample_model_batch(model_rng, store.architecture(), config.m);
    const std::vector<double> conf = confidence(batch, config.confidence);
    record_trace(trace, batch, conf, store, lr);
    const std::size_t m = batch.size();
    const double inv_m = 1.0 / static_cast<double>(m);

    return guarded(batch, [&] {
        StepMetrics metrics;

        // Classifier sub-step.
        const auto cls_ids = concat_ids(store.bi_classifier_ids(), store.head_ids(Head::Auxiliary));
        ad::Gradients cls_update = zero_gradients(store, cls_ids);
        Tensor g_seed;
        {
            std::vector<std::unique_ptr<ModelPass>> passes;
            std::vector<Tensor> preds;
            for (const auto& c : batch.configs) {
                passes.push_back(make_pass(store, c, TrainableSet{false, true, true}, data));
                preds.push_back(passes.back()->graph.value(passes.back()->fw.task_prediction_target()));
            }
            g_seed = sharpen(ensemble(preds, conf), config.tau);
            for (auto& p : passes) {
                ad::Var cls = classifier_objective(p->fw);
                ad::Var seed = seed_loss(p->fw, g_seed, data.ys);
                accumulate(cls_update, p->graph.backward(p->graph.add(cls, seed)), inv_m);
                metrics.loss_task += inv_m * p->graph.scalar(p->fw.loss_task());
                metrics.loss_dd += inv_m * p->graph.scalar(p->fw.loss_domain_disc());
                metrics.loss_seed += inv_m * p->graph.scalar(seed);
            }
        }
        sgd_step(store.values(), cls_ids, cls_update, bank.optimizer, lr);
        if (trace) {
            trace->target = g_seed;
            trace->between = store;
            trace->classifier_update = std::move(cls_update);
        }

        // Extractor sub-step.
        const double conf_total = std::accumulate(conf.begin(), conf.end(), 0.0);
        const double rest_total = static_cast<double>(m) - conf_total;
        const auto ext_ids = store.extractor_ids();
        ad::Gradients ext_update = zero_gradients(store, ext_ids);
        for (std::size_t j = 0; j < m; ++j) {
            auto p = make_pass(store, batch.configs[j], TrainableSet{true, false, false}, data);
            ad::Graph& g = p->graph;
            const double a = conf[j] / conf_total;
            const double b = rest_total > 0.0 ? (1.0 - conf[j]) / rest_total : 0.0;
            ad::Var dc = p->fw.dc_loss(config.w_ent).extractor_loss;
            metrics.loss_conf += inv_m * g.scalar(p->fw.loss_confusion());
            metrics.loss_ent += inv_m * g.scalar(p->fw.loss_entropy_min());
            ad::Var objective;
            if (a > 0.0) objective = g.scale(dc, a);
            if (b > 0.0) {
                ad::Var seed = g.scale(seed_loss(p->fw, g_seed, data.ys), b);
                objective = objective.valid() ? g.add(objective, seed) : seed;
            }
            if (objective.valid()) accumulate(ext_update, g.backward(objective), 1.0);
        }
        sgd_step(store.values(), ext_ids, ext_update, bank.optimizer, lr);
        if (trace) trace->extractor_update = std::move(ext_update);
        ++bank.step;
        return metrics;
    });
}

StepMetrics train_step_baseline(ModelBank& bank, const DomainBatch& data, const TrainerConfig& config,
                                Rng& model_rng, double lr, StepTrace* trace) {
    ParamStore& store = bank.store;
    const ModelBatch batch = sample_model_batch(model_rng, store.architecture(), config.m);
    const std::vector<double> ones(batch.size(), 1.0);
    record_trace(trace, batch, ones, store, lr);
    const double inv_m = 1.0 / static_cast<double>(batch.size());

    return guarded(batch, [&] {
        StepMetrics metrics;
        const auto cls_ids = store.bi_classifier_ids();
        ad::Gradients cls_update = zero_gradients(store, cls_ids);
        for (const auto& c : batch.configs) {
            auto p = make_pass(store, c, TrainableSet{false, true, false}, data);
            accumulate(cls_update, p->graph.backward(classifier_objective(p->fw)), inv_m);
            metrics.loss_task += inv_m * p->graph.scalar(p->fw.loss_task());
            metrics.loss_dd += inv_m * p->graph.scalar(p->fw.loss_domain_disc());
        }
        sgd_step(store.values(), cls_ids, cls_update, bank.optimizer, lr);
        if (trace) {
            trace->between = store;
            trace->classifier_update = std::move(cls_update);
        }

        const auto ext_ids = store.extractor_ids();
        ad::Gradients ext_update = zero_gradients(store, ext_ids);
        for (const auto& c : batch.configs) {
            auto p = make_pass(store, c, TrainableSet{true, false, false}, data);
            ad::Var dc = p->fw.dc_loss(config.w_ent).extractor_loss;
            accumulate(ext_update, p->graph.backward(dc), inv_m);
            metrics.loss_conf += inv_m * p->graph.scalar(p->fw.loss_confusion());
            metrics.loss_ent += inv_m * p->graph.scalar(p->fw.loss_entropy_min());
        }
        sgd_step(store.values(), ext_ids, ext_update, bank.optimizer, lr);
        if (trace) trace->extractor_update = std::move(ext_update);
        ++bank.step;
        return metrics;
    });
}

StepMetrics train_step_inplaced(ModelBank& bank, const DomainBatch& data, const TrainerConfig& config,
                                Rng& model_rng, double lr, StepTrace* trace) {
    ParamStore& store = bank.store;
    const ModelBatch batch = sample_model_batch(model_rng, store.architecture(), config.m);
    std::vector<double> teacher_weight(batch.size(), 0.0);
    teacher_weight[0] = 1.0;
    record_trace(trace, batch, teacher_weight, store, lr);
    const std::size_t m = batch.size();
    const double inv_m = 1.0 / static_cast<double>(m);
    const double inv_students = 1.0 / static_cast<double>(m - 1);

    return guarded(batch, [&] {
        StepMetrics metrics;
        const auto cls_ids = store.bi_classifier_ids();
        ad::Gradients cls_update = zero_gradients(store, cls_ids);
        Tensor teacher;
        for (std::size_t j = 0; j < m; ++j) {
            auto p = make_pass(store, batch.configs[j], TrainableSet{false, true, false}, data);
            ad::Graph& g = p->graph;
            ad::Var objective;
            if (j == 0) {
                teacher = g.value(p->fw.task_prediction_all());
                objective = classifier_objective(p->fw);
                metrics.loss_task = g.scalar(p->fw.loss_task());
                metrics.loss_dd = g.scalar(p->fw.loss_domain_disc());
            } else {
                objective = inplaced_distill_loss(p->fw, teacher);
                metrics.loss_seed += inv_students * g.scalar(objective);
            }
            accumulate(cls_update, g.backward(objective), inv_m);
        }
        sgd_step(store.values(), cls_ids, cls_update, bank.optimizer, lr);
        if (trace) {
            trace->target = teacher;
            trace->between = store;
            trace->classifier_update = std::move(cls_update);
        }

        const auto ext_ids = store.extractor_ids();
        ad::Gradients ext_update = zero_gradients(store, ext_ids);
        for (std::size_t j = 0; j < m; ++j) {
            auto p = make_pass(store, batch.configs[j], TrainableSet{true, false, false}, data);
            ad::Graph& g = p->graph;
            ad::Var objective;
            if (j == 0) {
                objective = p->fw.dc_loss(config.w_ent).extractor_loss;
                metrics.loss_conf = g.scalar(p->fw.loss_confusion());
                metrics.loss_ent = g.scalar(p->fw.loss_entropy_min());
            } else {
                objective = inplaced_distill_loss(p->fw, teacher);
            }
            accumulate(ext_update, g.backward(objective), inv_m);
        }
        sgd_step(store.values(), ext_ids, ext_update, bank.optimizer, lr);
        if (trace) trace->extractor_update = std::move(ext_update);
        ++bank.step;
        return metrics;
    });
}

StepMetrics run_step(ModelBank& bank, const DomainBatch& data, const TrainerConfig& config,
                     Rng& model_rng, double lr, StepTrace* trace) {
    switch (config.mode) {
        case TrainMode::SlimDA: return train_step(bank, data, config, model_rng, lr, trace);
        case TrainMode::Baseline: return train_step_baseline(bank, data, config, model_rng, lr, trace);
        case TrainMode::Inplaced: return train_step_inplaced(bank, data, config, model_rng, lr, trace);
    }
    throw ConfigError("unknown training mode");
}

ad::Gradients term_gradients(const ParamStore& store, const WidthConfig& config,
                             const DomainBatch& data, LossTerm term, TrainableSet trainable,
                             double w_ent, const Tensor* g_seed) {
    auto p = make_pass(store, config, trainable, data);
    ad::Var loss;
    switch (term) {
        case LossTerm::DcClassifier: loss = classifier_objective(p->fw); break;
        case LossTerm::DcExtractor: loss = p->fw.dc_loss(w_ent).extractor_loss; break;
        case LossTerm::Seed:
            if (!g_seed) throw UsageError("term_gradients: the seed term needs g_seed");
            loss = seed_loss(p->fw, *g_seed, data.ys);
            break;
    }
    return p->graph.backward(loss);
}

double probe_accuracy(const ParamStore& store, const WidthConfig& config, const ProbeSet& probe,
                      DeployHead head) {
    SlimModel model(store, config);
    adabn_recalibrate(model, probe.xt);
    return accuracy(predict(model, probe.xt, head), probe.yt);
}

std::vector<EpochMetrics> train(ModelBank& bank, const DomainDataset& data, const TrainerConfig& config,
                                const ProbeSet* probe) {
    config.validate();
    const Architecture& arch = bank.store.architecture();
    if (data.dim() != arch.input_dim) throw ConfigError("train: dataset dimension differs from architecture input_dim");
    if (data.class_count() != arch.class_count) throw ConfigError("train: dataset class count differs from architecture");
    bank.optimizer.momentum = config.momentum;

    Rng data_rng = make_stream(config.seed, "data");
    Rng model_rng = make_stream(config.seed, "models");
    const std::size_t longest = std::max(data.n_source(), data.n_target());
    const std::size_t per_epoch = (longest + config.batch_size - 1) / config.batch_size;
    const double total = static_cast<double>(per_epoch * config.epochs);
    const WidthConfig full = WidthConfig::largest(arch);
    const WidthConfig slim = WidthConfig::smallest(arch);
    const DeployHead head = deploy_head_for(config.mode);

    std::vector<EpochMetrics> log;
    std::size_t iteration = 0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        EpochMetrics em;
        em.epoch = epoch + 1;
        em.mode = config.mode;
        const auto plan = epoch_plan(data.n_source(), data.n_target(), config.batch_size, data_rng);
        const double inv = 1.0 / static_cast<double>(plan.size());
        for (const auto& idx : plan) {
            const double lr = config.lr(static_cast<double>(iteration) / total);
            StepMetrics sm;
            try {
                sm = run_step(bank, gather(data, idx), config, model_rng, lr);
            } catch (const NumericError& e) {
                nlohmann::json dump = {{"error", e.what()},      {"epoch", epoch + 1},
                                       {"iteration", iteration}, {"step", bank.step},
                                       {"lr", lr},               {"mode", to_string(config.mode)},
                                       {"seed", config.seed}};
                throw TrainingAborted(e.what(), dump.dump(2));
            }
            em.loss.loss_task += inv * sm.loss_task;
            em.loss.loss_dd += inv * sm.loss_dd;
            em.loss.loss_conf += inv * sm.loss_conf;
            em.loss.loss_ent += inv * sm.loss_ent;
            em.loss.loss_seed += inv * sm.loss_seed;
            ++iteration;
        }
        if (probe) {
            em.probe_acc_full = probe_accuracy(bank.store, full, *probe, head);
            em.probe_acc_smallest = probe_accuracy(bank.store, slim, *probe, head);
        }
        em.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        log.push_back(em);
    }
    return log;
}

} // namespace slimda
