#include "slimda/symnet.hpp"

#include <string>

#include "slimda/error.hpp"

namespace slimda {

Tensor one_hot(std::span<const int> labels, std::size_t k) {
    Tensor t = Tensor::matrix(labels.size(), k);
    for (std::size_t r = 0; r < labels.size(); ++r) {
        if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= k) {
            throw UsageError("label " + std::to_string(labels[r]) + " outside [0, " + std::to_string(k) + ")");
        }
        t.at(r, static_cast<std::size_t>(labels[r])) = 1.0;
    }
    return t;
}

DcForward::DcForward(ModelGraph& model_graph, const DomainBatch& batch)
    : mg_(&model_graph),
      n_s_(batch.xs.rows()),
      n_t_(batch.xt.rows()),
      ys_(&batch.ys),
      k_(0) {
    if (batch.ys.size() != n_s_) throw ConfigError("batch: source rows and labels differ");
    ad::Graph& g = graph();
    const Tensor parts[] = {batch.xs, batch.xt};
    features_ = mg_->features(g.constant(vstack(parts)), ad::BnMode::Train);
    logits_s_ = mg_->logits(features_, Head::Source);
    logits_t_ = mg_->logits(features_, Head::Target);
    k_ = g.value(logits_s_).cols();
    one_hot(batch.ys, k_);  // validates labels up front
}

ad::Var DcForward::logits_all(Head head) {
    switch (head) {
        case Head::Source: return logits_s_;
        case Head::Target: return logits_t_;
        case Head::Auxiliary: return mg_->logits(features_, Head::Auxiliary);
    }
    throw ConfigError("unknown head");
}

ad::Var DcForward::st_probs() {
    if (!st_.valid()) {
        const ad::Var halves[] = {logits_s_, logits_t_};
        st_ = graph().softmax(graph().concat(halves, 1));
    }
    return st_;
}

ad::Var DcForward::loss_task_source() {
    if (!task_s_.valid()) {
        ad::Graph& g = graph();
        ad::Var lp = g.log_softmax(g.slice_rows(logits_s_, 0, n_s_));
        task_s_ = g.cross_entropy(lp, g.constant(one_hot(*ys_, k_)));
    }
    return task_s_;
}

ad::Var DcForward::loss_task_target() {
    if (!task_t_.valid()) {
        ad::Graph& g = graph();
        ad::Var lp = g.log_softmax(g.slice_rows(logits_t_, 0, n_s_));
        task_t_ = g.cross_entropy(lp, g.constant(one_hot(*ys_, k_)));
    }
    return task_t_;
}

ad::Var DcForward::loss_task() { return graph().add(loss_task_source(), loss_task_target()); }

ad::Var DcForward::loss_domain_disc() {
    if (!dd_.valid()) {
        ad::Graph& g = graph();
        ad::Var p = st_probs();
        ad::Var src_mass = g.sum_cols(g.slice_rows(p, 0, n_s_), 0, k_);
        ad::Var tgt_mass = g.sum_cols(g.slice_rows(p, n_s_, n_s_ + n_t_), k_, 2 * k_);
        dd_ = g.scale(g.add(g.mean(g.log_clamped(src_mass)), g.mean(g.log_clamped(tgt_mass))), -1.0);
    }
    return dd_;
}

ad::Var DcForward::loss_category_confusion() {
    if (!cat_.valid()) {
        ad::Graph& g = graph();
        Tensor selector = Tensor::matrix(n_s_, 2 * k_);
        for (std::size_t r = 0; r < n_s_; ++r) {
            const auto y = static_cast<std::size_t>((*ys_)[r]);
            selector.at(r, y) = 0.5;
            selector.at(r, y + k_) = 0.5;
        }
        ad::Var lp = g.log_clamped(g.slice_rows(st_probs(), 0, n_s_));
        cat_ = g.cross_entropy(lp, g.constant(std::move(selector)));
    }
    return cat_;
}

ad::Var DcForward::loss_domain_confusion() {
    if (!dom_.valid()) {
        ad::Graph& g = graph();
        ad::Var p = g.slice_rows(st_probs(), n_s_, n_s_ + n_t_);
        ad::Var first = g.mean(g.log_clamped(g.sum_cols(p, 0, k_)));
        ad::Var second = g.mean(g.log_clamped(g.sum_cols(p, k_, 2 * k_)));
        dom_ = g.scale(g.add(first, second), -0.5);
    }
    return dom_;
}

ad::Var DcForward::loss_confusion() {
    return graph().add(loss_category_confusion(), loss_domain_confusion());
}

ad::Var DcForward::task_prediction_all() {
    if (!task_pred_.valid()) {
        ad::Graph& g = graph();
        task_pred_ = g.scale(g.add(g.softmax(logits_s_), g.softmax(logits_t_)), 0.5);
    }
    return task_pred_;
}

ad::Var DcForward::task_prediction_target() {
    return graph().slice_rows(task_prediction_all(), n_s_, n_s_ + n_t_);
}

ad::Var DcForward::loss_entropy_min() {
    if (!ent_.valid()) {
        ad::Graph& g = graph();
        ad::Var p = task_prediction_target();
        ent_ = g.cross_entropy(g.log_clamped(p), p);
    }
    return ent_;
}

DcGradTargets DcForward::dc_loss(double w_ent) {
    ad::Graph& g = graph();
    DcGradTargets t;
    t.classifier_loss = g.add(loss_task(), loss_domain_disc());
    t.extractor_loss = w_ent == 0.0 ? loss_confusion()
                                    : g.add(loss_confusion(), g.scale(loss_entropy_min(), w_ent));
    return t;
}

ad::Var DcForward::aux_log_probs_all() {
    if (!aux_lp_.valid()) aux_lp_ = graph().log_softmax(mg_->logits(features_, Head::Auxiliary));
    return aux_lp_;
}

ad::Var DcForward::aux_log_probs_source() { return graph().slice_rows(aux_log_probs_all(), 0, n_s_); }

ad::Var DcForward::aux_log_probs_target() {
    return graph().slice_rows(aux_log_probs_all(), n_s_, n_s_ + n_t_);
}

DcLossParts DcForward::parts() {
    const ad::Graph& g = graph();
    DcLossParts p;
    p.task_s = g.scalar(loss_task_source());
    p.task_t = g.scalar(loss_task_target());
    p.domain_disc = g.scalar(loss_domain_disc());
    p.cat_confusion = g.scalar(loss_category_confusion());
    p.dom_confusion = g.scalar(loss_domain_confusion());
    p.entropy_min = g.scalar(loss_entropy_min());
    return p;
}

DcLossParts dc_loss_parts(const SlimModel& model, const DomainBatch& batch) {
    ad::Graph g;
    ModelGraph mg(g, model, TrainableSet::none());
    DcForward fw(mg, batch);
    return fw.parts();
}

namespace {

DomainBatch make_batch(const Tensor& xs, std::span<const int> ys, const Tensor& xt) {
    return DomainBatch{xs, std::vector<int>(ys.begin(), ys.end()), xt};
}

} // namespace

double loss_task(const SlimModel& model, const Tensor& xs, std::span<const int> ys, const Tensor& xt) {
    return dc_loss_parts(model, make_batch(xs, ys, xt)).task();
}

double loss_domain_disc(const SlimModel& model, const Tensor& xs, std::span<const int> ys,
                        const Tensor& xt) {
    return dc_loss_parts(model, make_batch(xs, ys, xt)).domain_disc;
}

double loss_confusion(const SlimModel& model, const Tensor& xs, std::span<const int> ys,
                      const Tensor& xt) {
    return dc_loss_parts(model, make_batch(xs, ys, xt)).confusion();
}

double loss_entropy_min(const SlimModel& model, const Tensor& xs, std::span<const int> ys,
                        const Tensor& xt) {
    return dc_loss_parts(model, make_batch(xs, ys, xt)).entropy_min;
}

} // namespace slimda
