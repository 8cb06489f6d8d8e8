#pragma once

// Stochastic ensemble distillation over a slimmable model bank.
//
// Every iteration samples a model batch (always the largest and the smallest
// width plus m-2 random ones) and performs two alternated sub-steps:
//
//   classifiers: C^s, C^t <- mean over the batch of the domain-confusion
//                classifier gradients; C^a <- mean of the distillation
//                gradients.
//   extractor:   F <- confidence-weighted mean of the domain-confusion
//                extractor gradients + (1 - confidence)-weighted mean of the
//                distillation gradients.
//
// The distillation target is the sharpened, confidence-weighted ensemble of
// the bi-classifier predictions, computed once per iteration from the
// pre-step parameters and treated as a constant.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "slimda/autodiff.hpp"
#include "slimda/datagen.hpp"
#include "slimda/error.hpp"
#include "slimda/optim.hpp"
#include "slimda/rng.hpp"
#include "slimda/slimnet.hpp"
#include "slimda/symnet.hpp"

namespace slimda {

enum class TrainMode { SlimDA, Baseline, Inplaced };

std::string to_string(TrainMode mode);
/// Accepts "slimda", "baseline", "inplaced"; throws ConfigError otherwise.
TrainMode parse_train_mode(const std::string& text);
/// C^a for SlimDA; the bi-classifier average for the ablations, whose C^a is never trained.
DeployHead deploy_head_for(TrainMode mode);

enum class ConfidenceMode { Hard, General };

struct ConfidencePolicy {
    ConfidenceMode mode = ConfidenceMode::Hard;
    double lambda = 0.5;
    /// Shape exponent of the general rule, in [0, 1].
    double s = 0.0;

    /// Throws ConfigError if lambda or s leave [0, 1].
    void validate() const;
};

struct TrainerConfig {
    std::size_t m = 10;
    std::size_t epochs = 10;
    std::size_t batch_size = 64;
    double w_ent = 0.1;
    double tau = 0.5;
    ConfidencePolicy confidence;
    TrainMode mode = TrainMode::SlimDA;
    LrSchedule lr;
    double momentum = 0.9;
    std::uint64_t seed = 0;

    /// Throws ConfigError on m < 2, batch_size < 2, tau <= 0 or negative weights.
    void validate() const;
};

struct ModelBatch {
    /// Sorted by FLOPs, largest first.
    std::vector<WidthConfig> configs;
    /// FLOPs_j / FLOPs_max.
    std::vector<double> capacity;

    std::size_t size() const noexcept { return configs.size(); }
};

/// Throws UsageError if m < 2.
ModelBatch sample_model_batch(Rng& rng, const Architecture& arch, std::size_t m);

double confidence(double capacity_ratio, const ConfidencePolicy& policy);
std::vector<double> confidence(const ModelBatch& batch, const ConfidencePolicy& policy);

/// Confidence-weighted average of per-model prediction matrices. Throws
/// UsageError when the weights sum to zero or the shapes disagree.
Tensor ensemble(std::span<const Tensor> predictions, std::span<const double> confidences);

/// Row-wise p^(1/tau) renormalization. Throws UsageError if tau <= 0.
Tensor sharpen(const Tensor& g, double tau);

/// Distillation loss of C^a: cross-entropy against g_seed on the target rows
/// plus cross-entropy against the labels on the source rows.
ad::Var seed_loss(DcForward& forward, const Tensor& g_seed, std::span<const int> ys);
double seed_loss(const SlimModel& model, const DomainBatch& batch, const Tensor& g_seed);

/// Cross-entropy of C^s and C^t on all rows (source first) against a teacher distribution.
ad::Var inplaced_distill_loss(DcForward& forward, const Tensor& teacher);

struct ModelBank {
    ParamStore store;
    SgdState optimizer;
    std::uint64_t step = 0;

    static ModelBank initialize(const Architecture& arch, std::uint64_t seed, double momentum = 0.9);
};

struct StepMetrics {
    double loss_task = 0.0;
    double loss_dd = 0.0;
    double loss_conf = 0.0;
    double loss_ent = 0.0;
    /// L_seed in SlimDA mode, the distillation loss of the small models in Inplaced mode.
    double loss_seed = 0.0;

    bool operator==(const StepMetrics&) const = default;
};

/// Everything a caller needs to audit one step.
struct StepTrace {
    ModelBatch batch;
    std::vector<double> confidences;
    /// Sharpened ensemble (SlimDA) or the largest model's prediction (Inplaced).
    Tensor target;
    std::optional<ParamStore> before;
    /// Parameters after the classifier sub-step, before the extractor sub-step.
    std::optional<ParamStore> between;
    ad::Gradients classifier_update;
    ad::Gradients extractor_update;
    double lr = 0.0;
};

/// One alternated SlimDA update.
StepMetrics train_step(ModelBank& bank, const DomainBatch& data, const TrainerConfig& config,
                       Rng& model_rng, double lr, StepTrace* trace = nullptr);
/// Plain averaging of the domain-confusion gradients; C^a untouched.
StepMetrics train_step_baseline(ModelBank& bank, const DomainBatch& data, const TrainerConfig& config,
                                Rng& model_rng, double lr, StepTrace* trace = nullptr);
/// Largest model on the domain-confusion losses, the rest distilled from it.
StepMetrics train_step_inplaced(ModelBank& bank, const DomainBatch& data, const TrainerConfig& config,
                                Rng& model_rng, double lr, StepTrace* trace = nullptr);
/// Dispatches on config.mode.
StepMetrics run_step(ModelBank& bank, const DomainBatch& data, const TrainerConfig& config,
                     Rng& model_rng, double lr, StepTrace* trace = nullptr);

enum class LossTerm {
    DcClassifier,  // task + domain discrimination
    DcExtractor,   // confusion + w_ent * entropy
    Seed,
};

/// Gradient of one loss term of one model with the given trainable groups
/// (others bound as constants). `g_seed` is required for LossTerm::Seed.
ad::Gradients term_gradients(const ParamStore& store, const WidthConfig& config,
                             const DomainBatch& data, LossTerm term, TrainableSet trainable,
                             double w_ent, const Tensor* g_seed = nullptr);

/// Target inputs with their labels, used only to report diagnostic accuracies.
struct ProbeSet {
    Tensor xt;
    std::vector<int> yt;
};

struct EpochMetrics {
    std::size_t epoch = 0;
    TrainMode mode = TrainMode::SlimDA;
    StepMetrics loss;
    double probe_acc_full = 0.0;
    double probe_acc_smallest = 0.0;
    double seconds = 0.0;
};

/// Raised when a step produces a non-finite value; dump() is a JSON state summary.
class TrainingAborted : public NumericError {
public:
    TrainingAborted(const std::string& what, std::string dump)
        : NumericError(what), dump_(std::move(dump)) {}
    const std::string& dump() const noexcept { return dump_; }

private:
    std::string dump_;
};

/// Runs config.epochs epochs. Batches come from the "data" stream and model
/// batches from the "models" stream of config.seed, so all modes see the same
/// data and the same sampled widths.
std::vector<EpochMetrics> train(ModelBank& bank, const DomainDataset& data, const TrainerConfig& config,
                                const ProbeSet* probe = nullptr);

/// AdaBN on probe.xt at `config`, then target accuracy with `head`.
double probe_accuracy(const ParamStore& store, const WidthConfig& config, const ProbeSet& probe,
                      DeployHead head);

} // namespace slimda
