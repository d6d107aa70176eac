#include "sgds/optimizer.hpp"

#include "sgds/errors.hpp"
#include "sgds/kernels.hpp"

#include <cmath>
#include <numbers>

namespace sgds {

double cosine_lr(std::size_t epoch, std::size_t total, double base_lr) {
    require(total > 0, "cosine_lr: total epochs must be positive");
    require(epoch < total, "cosine_lr: epoch out of range");
    const double phase = std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(total);
    return base_lr * (1.0 + std::cos(phase)) / 2.0;
}

OptimizerState make_optimizer(std::span<const Matrix> params, double base_lr, double momentum,
                              std::size_t total_epochs, double weight_decay) {
    require(base_lr > 0.0, "optimizer: base_lr must be positive");
    require(momentum >= 0.0 && momentum < 1.0, "optimizer: momentum must lie in [0, 1)");
    require(total_epochs > 0, "optimizer: total_epochs must be positive");
    OptimizerState s;
    s.base_lr = base_lr;
    s.momentum = momentum;
    s.weight_decay = weight_decay;
    s.total_epochs = total_epochs;
    for (const Matrix& p : params) s.velocity.emplace_back(p.rows(), p.cols());
    return s;
}

void sgd_step(OptimizerState& state, std::span<const std::reference_wrapper<Matrix>> params,
              std::span<const Matrix> grads) {
    require(params.size() == grads.size() && params.size() == state.velocity.size(),
            "sgd_step: parameter, gradient and momentum counts differ");
    const double lr = state.current_lr();
    for (std::size_t i = 0; i < params.size(); ++i) {
        Matrix& p = params[i].get();
        Matrix& v = state.velocity[i];
        const Matrix& g = grads[i];
        require(p.same_shape(g) && p.same_shape(v), "sgd_step: shape mismatch");
        auto vf = v.flat();
        for (double& x : vf) x *= state.momentum;
        kernels::axpy(1.0, g.flat(), vf);
        if (state.weight_decay != 0.0) kernels::axpy(state.weight_decay, p.flat(), vf);
        kernels::axpy(-lr, vf, p.flat());
    }
}

}  // namespace sgds
