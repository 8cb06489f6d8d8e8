#include "slimda/optim.hpp"

#include <cmath>
#include <string>

#include "slimda/error.hpp"
#include "slimda/kernels.hpp"

namespace slimda {

void sgd_step(std::vector<Tensor>& params, std::span<const ad::ParamId> ids,
              const ad::Gradients& grads, SgdState& state, double lr) {
    if (!(lr > 0.0)) throw UsageError("learning rate must be positive");
    for (ad::ParamId id : ids) {
        if (id >= params.size()) throw UsageError("unknown parameter id " + std::to_string(id));
        auto g = grads.find(id);
        if (g == grads.end()) throw UsageError("missing gradient for parameter " + std::to_string(id));
        require_same_shape(params[id], g->second, "sgd_step");
    }
    for (ad::ParamId id : ids) {
        Tensor& p = params[id];
        auto [buf, inserted] = state.buffers.try_emplace(id, p.shape(), 0.0);
        kernels::momentum_update(state.momentum, lr, grads.at(id).data(), buf->second.data(), p.data());
    }
}

double LrSchedule::operator()(double progress) const {
    if (!(progress >= 0.0 && progress <= 1.0)) {
        throw UsageError("learning-rate progress must lie in [0, 1], got " + std::to_string(progress));
    }
    return base / std::pow(1.0 + alpha * progress, beta);
}

} // namespace slimda
