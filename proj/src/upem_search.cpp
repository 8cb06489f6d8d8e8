#include "slimda/upem_search.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "slimda/error.hpp"

namespace slimda {

double upem_delta(const Tensor& anchor, const Tensor& candidate) {
    require_same_shape(anchor, candidate, "upem");
    double sum = 0.0;
    for (std::size_t i = 0; i < anchor.size(); ++i) {
        const double d = candidate[i] - anchor[i];
        sum += d * d;
    }
    return sum / static_cast<double>(anchor.rows());
}

double upem(const SlimModel& candidate, const SlimModel& anchor, const Tensor& xt, DeployHead head) {
    if (!candidate.eval_ready() || !anchor.eval_ready()) {
        throw UsageError("upem: both models need AdaBN recalibration on the target data");
    }
    return upem_delta(predict(anchor, xt, head), predict(candidate, xt, head));
}

UpemEvaluator::UpemEvaluator(const ParamStore& store, Tensor xt, DeployHead head)
    : store_(&store),
      xt_(std::move(xt)),
      head_(head),
      full_flops_(WidthConfig::largest(store.architecture()).flops()) {
    if (xt_.rank() != 2 || xt_.cols() != store.architecture().input_dim) {
        throw ConfigError("upem: target inputs do not match the architecture input_dim");
    }
}

const Tensor& UpemEvaluator::predictions(const WidthConfig& config) {
    auto it = cache_.find(config);
    if (it != cache_.end()) return it->second;
    SlimModel model = slice(*store_, config);
    adabn_recalibrate(model, xt_);
    return cache_.emplace(config, predict(model, xt_, head_)).first->second;
}

UpemScore UpemEvaluator::score(const WidthConfig& config) {
    const Tensor& anchor = anchor_predictions();
    return UpemScore{config, upem_delta(anchor, predictions(config)), config.flops() / full_flops_};
}

namespace {

void require_samples(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw UsageError("correlation: sample lengths differ");
    if (x.size() < 3) throw UsageError("correlation needs at least 3 samples");
}

std::vector<double> average_ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
        i = j + 1;
    }
    return ranks;
}

double flops_of(const Architecture& arch, const std::vector<std::size_t>& w) { return flops(arch, w); }

} // namespace

double pearson(std::span<const double> x, std::span<const double> y) {
    require_samples(x, y);
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx <= 0.0 || syy <= 0.0) throw UsageError("correlation undefined: zero variance");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double spearman(std::span<const double> x, std::span<const double> y) {
    require_samples(x, y);
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    return pearson(rx, ry);
}

CorrelationReport correlate(std::span<const double> deltas, std::span<const double> accuracies) {
    return CorrelationReport{pearson(deltas, accuracies), spearman(deltas, accuracies), deltas.size()};
}

WidthConfig sample_uniform_config(Rng& rng, const Architecture& arch) {
    std::vector<std::size_t> w(arch.block_count());
    for (std::size_t b = 0; b < w.size(); ++b) w[b] = uniform_index(rng, arch.min_width(b), arch.block_max_widths[b]);
    return WidthConfig(arch, std::move(w));
}

std::optional<WidthConfig> sample_config_at_budget(Rng& rng, const Architecture& arch,
                                                   double budget_flops, double tolerance,
                                                   std::size_t attempts) {
    const std::size_t nb = arch.block_count();
    const double lo_band = budget_flops * (1.0 - tolerance);
    const double hi_band = budget_flops * (1.0 + tolerance);
    const double f_min = WidthConfig::smallest(arch).flops();
    const double f_max = WidthConfig::largest(arch).flops();
    if (hi_band < f_min || lo_band > f_max) return std::nullopt;

    std::vector<double> dir(nb);
    auto widths_at = [&](double t) {
        std::vector<std::size_t> w(nb);
        for (std::size_t b = 0; b < nb; ++b) {
            const double span = static_cast<double>(arch.block_max_widths[b] - arch.min_width(b));
            const double grow = std::min(span, std::round(t * dir[b] * span));
            w[b] = arch.min_width(b) + static_cast<std::size_t>(grow);
        }
        return w;
    };
    for (std::size_t a = 0; a < attempts; ++a) {
        for (auto& d : dir) d = 0.05 + uniform01(rng);
        const double t_top = 1.0 / *std::min_element(dir.begin(), dir.end());
        double lo = 0.0, hi = t_top;
        for (int it = 0; it < 60; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (flops_of(arch, widths_at(mid)) >= budget_flops) hi = mid;
            else lo = mid;
        }
        std::optional<std::vector<std::size_t>> best;
        double best_gap = 0.0;
        for (double t : {lo, hi}) {
            auto w = widths_at(t);
            const double f = flops_of(arch, w);
            if (f < lo_band || f > hi_band) continue;
            const double gap = std::abs(f - budget_flops);
            if (!best || gap < best_gap) {
                best = std::move(w);
                best_gap = gap;
            }
        }
        if (best) return WidthConfig(arch, std::move(*best));
    }
    return std::nullopt;
}

RandomSearchResult random_search(UpemEvaluator& evaluator, double budget_flops, std::size_t n,
                                 Rng& rng, double tolerance) {
    const Architecture& arch = evaluator.architecture();
    if (n == 0) throw UsageError("random_search: n must be >= 1");
    const double f_min = WidthConfig::smallest(arch).flops();
    const double f_max = WidthConfig::largest(arch).flops();
    if (budget_flops < f_min * (1.0 - 1e-12) || budget_flops > f_max * (1.0 + 1e-12)) {
        throw UsageError("random_search: budget outside the [smallest, largest] FLOPs range");
    }
    RandomSearchResult result{evaluator.score(WidthConfig::largest(arch)), {}, 0};
    result.scores.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto config = sample_config_at_budget(rng, arch, budget_flops, tolerance);
        if (!config) {
            throw SearchError("random_search: no config within " + std::to_string(tolerance * 100.0) +
                              "% of " + std::to_string(budget_flops) + " FLOPs");
        }
        result.scores.push_back(evaluator.score(*config));
        if (i == 0 || result.scores.back().delta < result.scores[result.best_index].delta) {
            result.best_index = i;
        }
    }
    result.best = result.scores[result.best_index];
    return result;
}

SearchPlan SearchPlan::equal_steps(const Architecture& arch, std::size_t k, std::size_t q, double tolerance) {
    if (k == 0) throw ConfigError("search plan: k must be >= 1");
    const double f_min = WidthConfig::smallest(arch).flops();
    const double f_max = WidthConfig::largest(arch).flops();
    SearchPlan plan;
    plan.q = q;
    plan.tolerance = tolerance;
    for (std::size_t i = 1; i <= k; ++i) {
        const double budget = f_min + (f_max - f_min) * static_cast<double>(i) / static_cast<double>(k);
        plan.budget_ratios.push_back(budget / f_max);
    }
    return plan;
}

void SearchPlan::validate(const Architecture& arch) const {
    if (budget_ratios.empty()) throw ConfigError("search plan: no budgets");
    if (q == 0) throw ConfigError("search plan: q must be >= 1");
    if (!(tolerance >= 0.0 && tolerance < 1.0)) throw ConfigError("search plan: tolerance must lie in [0, 1)");
    const double min_ratio = WidthConfig::smallest(arch).flops() / WidthConfig::largest(arch).flops();
    for (std::size_t i = 0; i < budget_ratios.size(); ++i) {
        const double r = budget_ratios[i];
        if (!(r >= min_ratio * (1.0 - 1e-12) && r <= 1.0 + 1e-12)) {
            throw ConfigError("search plan: budget ratio " + std::to_string(r) + " outside [" +
                              std::to_string(min_ratio) + ", 1]");
        }
        if (i > 0 && !(r > budget_ratios[i - 1])) throw ConfigError("search plan: budgets must be strictly increasing");
    }
}

std::vector<GreedyStep> inherited_greedy_search(UpemEvaluator& evaluator, const SearchPlan& plan, Rng& rng) {
    const Architecture& arch = evaluator.architecture();
    plan.validate(arch);
    const std::size_t nb = arch.block_count();
    const double f_max = evaluator.full_flops();

    std::vector<GreedyStep> steps;
    WidthConfig current = WidthConfig::smallest(arch);
    for (std::size_t s = 0; s < plan.budget_ratios.size(); ++s) {
        const double budget = plan.budget_ratios[s] * f_max;
        const double floor_band = budget * (1.0 - plan.tolerance);
        std::vector<UpemScore> candidates;
        bool any_saturated = false;
        std::size_t best = 0;
        for (std::size_t c = 0; c < plan.q; ++c) {
            std::vector<double> weight(nb);
            for (auto& v : weight) v = uniform01(rng);
            std::vector<std::size_t> w = current.widths();
            bool saturated = false;
            while (flops_of(arch, w) < floor_band) {
                double total = 0.0;
                for (std::size_t b = 0; b < nb; ++b) {
                    if (w[b] < arch.block_max_widths[b]) total += weight[b];
                }
                if (total <= 0.0) {
                    bool any_open = false;
                    for (std::size_t b = 0; b < nb; ++b) any_open |= w[b] < arch.block_max_widths[b];
                    if (!any_open) {
                        saturated = true;
                        break;
                    }
                    for (std::size_t b = 0; b < nb; ++b) weight[b] = w[b] < arch.block_max_widths[b] ? 1.0 : 0.0;
                    continue;
                }
                double pick = uniform01(rng) * total;
                std::size_t chosen = nb;
                for (std::size_t b = 0; b < nb; ++b) {
                    if (w[b] >= arch.block_max_widths[b]) continue;
                    chosen = b;
                    pick -= weight[b];
                    if (pick < 0.0) break;
                }
                ++w[chosen];
            }
            any_saturated = any_saturated || saturated;
            candidates.push_back(evaluator.score(WidthConfig(arch, std::move(w))));
            if (candidates.back().delta < candidates[best].delta) best = c;
        }
        current = candidates[best].config;
        UpemScore winner = candidates[best];
        steps.push_back(GreedyStep{s + 1, plan.budget_ratios[s], std::move(winner), std::move(candidates),
                                   any_saturated});
    }
    return steps;
}

double evaluate_accuracy(UpemEvaluator& evaluator, const WidthConfig& config, std::span<const int> target_labels) {
    return accuracy(evaluator.predictions(config), target_labels);
}

std::vector<WidthConfig> spread_configs(Rng& rng, const Architecture& arch, std::size_t n,
                                        double lo_ratio, double hi_ratio, double tolerance) {
    const double f_min = WidthConfig::smallest(arch).flops();
    const double f_max = WidthConfig::largest(arch).flops();
    std::vector<WidthConfig> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double ratio = lo_ratio + (hi_ratio - lo_ratio) * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
        const double budget = std::clamp(ratio * f_max, f_min, f_max);
        auto config = sample_config_at_budget(rng, arch, budget, tolerance);
        if (!config) throw SearchError("no config within tolerance of " + std::to_string(budget) + " FLOPs");
        out.push_back(std::move(*config));
    }
    return out;
}

double monotonicity_probe(UpemEvaluator& evaluator, std::span<const int> target_labels, std::size_t n, Rng& rng) {
    if (n < 3) throw UsageError("monotonicity_probe needs n >= 3");
    std::vector<double> f, acc;
    for (const auto& c : spread_configs(rng, evaluator.architecture(), n)) {
        f.push_back(c.flops());
        acc.push_back(evaluate_accuracy(evaluator, c, target_labels));
    }
    return spearman(f, acc);
}

TriangleCheck triangle_check(const Tensor& candidate, const Tensor& anchor, std::span<const int> target_labels) {
    require_same_shape(candidate, anchor, "triangle_check");
    if (candidate.rows() != target_labels.size()) throw ConfigError("triangle_check: label count mismatch");
    double ce = 0.0, ae = 0.0, dd = 0.0;
    for (std::size_t r = 0; r < candidate.rows(); ++r) {
        for (std::size_t k = 0; k < candidate.cols(); ++k) {
            const double gt = static_cast<std::size_t>(target_labels[r]) == k ? 1.0 : 0.0;
            const double c = candidate.at(r, k), a = anchor.at(r, k);
            ce += (c - gt) * (c - gt);
            ae += (a - gt) * (a - gt);
            dd += (c - a) * (c - a);
        }
    }
    return TriangleCheck{std::sqrt(ce), std::sqrt(ae), std::sqrt(dd)};
}

} // namespace slimda
