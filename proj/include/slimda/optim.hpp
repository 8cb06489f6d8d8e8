#pragma once

#include <map>
#include <span>
#include <vector>

#include "slimda/autodiff.hpp"
#include "slimda/tensor.hpp"

namespace slimda {

/// Classic (heavy-ball) momentum state: v <- mu*v + g; p <- p - lr*v.
struct SgdState {
    double momentum = 0.9;
    std::map<ad::ParamId, Tensor> buffers;
};

/// Applies one momentum step to params[id] for every id in `ids`.
/// Throws UsageError if lr <= 0 or a gradient is missing for one of `ids`.
void sgd_step(std::vector<Tensor>& params, std::span<const ad::ParamId> ids,
              const ad::Gradients& grads, SgdState& state, double lr);

struct LrSchedule {
    double base = 0.01;
    double alpha = 10.0;
    double beta = 0.75;

    /// base / (1 + alpha * progress)^beta for progress in [0, 1].
    double operator()(double progress) const;
};

} // namespace slimda
