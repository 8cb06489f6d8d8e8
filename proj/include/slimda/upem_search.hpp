#pragma once

// Unsupervised performance evaluation (UPEM) and width search.
//
// UPEM scores a candidate width by how far its target-domain predictions
// are from those of the full-width anchor: the sum of squared probability
// differences over all target samples and classes, divided by the number of
// target samples. Both models are AdaBN-recalibrated on the target inputs
// before predicting. Search code only ever sees target inputs; anything that
// takes labels is an evaluation helper.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "slimda/rng.hpp"
#include "slimda/slimnet.hpp"
#include "slimda/tensor.hpp"

namespace slimda {

struct UpemScore {
    WidthConfig config;
    double delta = 0.0;
    double flops_ratio = 0.0;
};

/// sum((a - b)^2) / rows. Throws ConfigError on shape mismatch.
double upem_delta(const Tensor& anchor, const Tensor& candidate);

/// Both models must already be recalibrated; otherwise UsageError.
double upem(const SlimModel& candidate, const SlimModel& anchor, const Tensor& xt,
            DeployHead head = DeployHead::Auxiliary);

/// Caches AdaBN-recalibrated predictions per width over one read-only store.
class UpemEvaluator {
public:
    UpemEvaluator(const ParamStore& store, Tensor xt, DeployHead head = DeployHead::Auxiliary);

    const ParamStore& store() const noexcept { return *store_; }
    const Architecture& architecture() const noexcept { return store_->architecture(); }
    const Tensor& target_inputs() const noexcept { return xt_; }
    DeployHead head() const noexcept { return head_; }
    double full_flops() const noexcept { return full_flops_; }

    const Tensor& predictions(const WidthConfig& config);
    const Tensor& anchor_predictions() { return predictions(WidthConfig::largest(architecture())); }
    UpemScore score(const WidthConfig& config);

private:
    const ParamStore* store_;
    Tensor xt_;
    DeployHead head_;
    double full_flops_;
    std::map<WidthConfig, Tensor> cache_;
};

struct CorrelationReport {
    double pearson = 0.0;
    double spearman = 0.0;
    std::size_t samples = 0;
};

/// Throw UsageError with fewer than 3 samples, mismatched lengths, or zero variance.
double pearson(std::span<const double> x, std::span<const double> y);
/// Pearson correlation of average ranks (ties share their mean rank).
double spearman(std::span<const double> x, std::span<const double> y);
CorrelationReport correlate(std::span<const double> deltas, std::span<const double> accuracies);

/// Uniform over each block's legal widths.
WidthConfig sample_uniform_config(Rng& rng, const Architecture& arch);

/// Random config whose FLOPs lie within budget * (1 +- tolerance): random
/// per-block growth directions, scaled by bisection to meet the budget.
/// Returns nullopt if `attempts` draws all miss the band.
std::optional<WidthConfig> sample_config_at_budget(Rng& rng, const Architecture& arch,
                                                   double budget_flops, double tolerance,
                                                   std::size_t attempts = 200);

struct RandomSearchResult {
    UpemScore best;
    std::vector<UpemScore> scores;  // in sampling order
    std::size_t best_index = 0;
};

/// n configs within +-tolerance of the budget, scored by UPEM. Throws
/// UsageError if the budget lies outside [smallest, largest] FLOPs or n == 0,
/// SearchError if the band cannot be hit.
RandomSearchResult random_search(UpemEvaluator& evaluator, double budget_flops, std::size_t n,
                                 Rng& rng, double tolerance = 0.02);

struct SearchPlan {
    /// Budgets as fractions of the full-width FLOPs, strictly increasing.
    std::vector<double> budget_ratios;
    std::size_t q = 20;
    double tolerance = 0.02;

    /// k equal FLOPs increments from the smallest to the largest config.
    static SearchPlan equal_steps(const Architecture& arch, std::size_t k, std::size_t q = 20,
                                  double tolerance = 0.02);
    /// Throws ConfigError unless ratios are strictly increasing within
    /// [smallest ratio, 1], q >= 1 and tolerance in [0, 1).
    void validate(const Architecture& arch) const;
};

struct GreedyStep {
    std::size_t step;
    double budget_ratio;
    UpemScore winner;
    std::vector<UpemScore> candidates;
    /// Every block reached its maximum before the budget was met.
    bool saturated = false;
};

/// Inherited greedy search from the smallest config: at each budget, q
/// candidates grow the previous winner one channel at a time on randomly
/// weighted blocks until the FLOPs band is reached; the min-UPEM candidate
/// becomes the next starting point.
std::vector<GreedyStep> inherited_greedy_search(UpemEvaluator& evaluator, const SearchPlan& plan,
                                                Rng& rng);

/// Target accuracy of a width under the evaluator's head. Evaluation only.
double evaluate_accuracy(UpemEvaluator& evaluator, const WidthConfig& config,
                         std::span<const int> target_labels);

/// n configs at budgets spread evenly across [smallest, largest] FLOPs.
std::vector<WidthConfig> spread_configs(Rng& rng, const Architecture& arch, std::size_t n,
                                        double lo_ratio = 0.0, double hi_ratio = 1.0,
                                        double tolerance = 0.02);

/// Spearman(FLOPs, target accuracy) over n spread configs. Throws UsageError if n < 3.
double monotonicity_probe(UpemEvaluator& evaluator, std::span<const int> target_labels,
                          std::size_t n, Rng& rng);

/// Norms of the prediction-error triangle on raw (unnormalized) sums:
/// |g_j - GT| <= |g - GT| + |g_j - g|.
struct TriangleCheck {
    double candidate_error = 0.0;  // |g_j - GT|
    double anchor_error = 0.0;     // |g - GT|
    double distance = 0.0;         // |g_j - g|
    bool holds() const { return candidate_error <= anchor_error + distance + 1e-12; }
};
TriangleCheck triangle_check(const Tensor& candidate, const Tensor& anchor,
                             std::span<const int> target_labels);

} // namespace slimda
