#pragma once

#include "sgds/matrix.hpp"

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace sgds {

// base_lr * (1 + cos(pi * epoch / total)) / 2, epoch 0-based.
double cosine_lr(std::size_t epoch, std::size_t total, double base_lr);

struct OptimizerState {
    std::vector<Matrix> velocity;  // zero-initialized, one per parameter
    double base_lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 0.0;
    std::size_t epoch = 0;         // 0-based
    std::size_t total_epochs = 1;

    double current_lr() const { return cosine_lr(epoch, total_epochs, base_lr); }
};

OptimizerState make_optimizer(std::span<const Matrix> params, double base_lr, double momentum,
                              std::size_t total_epochs, double weight_decay = 0.0);

// v <- m*v + (g + wd*p);  p <- p - lr*v
void sgd_step(OptimizerState& state, std::span<const std::reference_wrapper<Matrix>> params,
              std::span<const Matrix> grads);

}  // namespace sgds
