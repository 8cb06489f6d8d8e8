#pragma once

// Bi-classifier domain-confusion objective (SymNet family).
//
// One DcForward runs the extractor over the stacked [source; target] batch in
// TRAIN mode and exposes every loss term as a graph node. Which parameters a
// term can reach is decided by the TrainableSet of the underlying ModelGraph:
// classifier steps bind the extractor as constants and extractor steps bind
// the classifiers as constants.

#include <span>
#include <vector>

#include "slimda/autodiff.hpp"
#include "slimda/datagen.hpp"
#include "slimda/slimnet.hpp"

namespace slimda {

struct DcLossParts {
    double task_s = 0.0;         // -mean log g^s_y(x^s)
    double task_t = 0.0;         // -mean log g^t_y(x^s)
    double domain_disc = 0.0;    // source mass in the first half, target mass in the second
    double cat_confusion = 0.0;  // true class in both halves, source samples
    double dom_confusion = 0.0;  // half/half mass, target samples
    double entropy_min = 0.0;    // entropy of (g^s + g^t) / 2 on target samples

    double task() const { return task_s + task_t; }
    double confusion() const { return cat_confusion + dom_confusion; }
};

struct DcGradTargets {
    ad::Var classifier_loss;  // task + domain discrimination; drives C^s, C^t
    ad::Var extractor_loss;   // confusion + w_ent * entropy; drives F
};

/// One-hot rows for labels in [0, K). Throws UsageError on out-of-range labels.
Tensor one_hot(std::span<const int> labels, std::size_t k);

class DcForward {
public:
    DcForward(ModelGraph& model_graph, const DomainBatch& batch);

    ad::Graph& graph() { return mg_->graph(); }
    std::size_t n_source() const noexcept { return n_s_; }
    std::size_t n_target() const noexcept { return n_t_; }

    ad::Var loss_task_source();
    ad::Var loss_task_target();
    ad::Var loss_task();
    ad::Var loss_domain_disc();
    ad::Var loss_category_confusion();
    ad::Var loss_domain_confusion();
    ad::Var loss_confusion();
    ad::Var loss_entropy_min();
    DcGradTargets dc_loss(double w_ent);

    /// (g^s + g^t) / 2 on the target rows.
    ad::Var task_prediction_target();
    /// (g^s + g^t) / 2 on all rows, source rows first.
    ad::Var task_prediction_all();
    /// C^s / C^t logits on all rows, source rows first.
    ad::Var logits_all(Head head);
    /// Log-probabilities of C^a on source and target rows.
    ad::Var aux_log_probs_source();
    ad::Var aux_log_probs_target();

    /// Values of all parts (forces every term).
    DcLossParts parts();

private:
    ad::Var st_probs();
    ad::Var aux_log_probs_all();

    ModelGraph* mg_;
    std::size_t n_s_;
    std::size_t n_t_;
    const std::vector<int>* ys_;
    std::size_t k_;
    ad::Var features_;
    ad::Var logits_s_, logits_t_, aux_lp_, st_, task_pred_;
    ad::Var task_s_, task_t_, dd_, cat_, dom_, ent_;
};

/// Evaluates every part for fixed parameters (no gradients).
DcLossParts dc_loss_parts(const SlimModel& model, const DomainBatch& batch);

double loss_task(const SlimModel& model, const Tensor& xs, std::span<const int> ys,
                 const Tensor& xt);
double loss_domain_disc(const SlimModel& model, const Tensor& xs, std::span<const int> ys,
                        const Tensor& xt);
double loss_confusion(const SlimModel& model, const Tensor& xs, std::span<const int> ys,
                      const Tensor& xt);
double loss_entropy_min(const SlimModel& model, const Tensor& xs, std::span<const int> ys,
                        const Tensor& xt);

} // namespace slimda
