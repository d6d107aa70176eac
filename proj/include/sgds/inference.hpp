#pragma once

#include "sgds/data.hpp"
#include "sgds/trainer.hpp"

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace sgds {

// Classifier logits w_c . phi(x; adapter) over all seen classes.
Vector adapter_logits(std::span<const double> x, const ContinualState& state, const Adapter& adapter);

double shannon_entropy(std::span<const double> probs);

struct AdapterSelection {
    std::size_t index = 0;
    std::vector<double> entropies;  // one per adapter
};

// Lowest-entropy adapter; ties go to the lower index.
AdapterSelection select_adapter(std::span<const double> x, const ContinualState& state);

// argmax_c [w_c . phi(x; A_t*) + w_c . phi(x; A_uni)], ties to the lower class id.
ClassId predict(std::span<const double> x, const ContinualState& state);

// Ensemble from precomputed logit vectors (aligned with state.seen).
std::size_t ensemble_argmax(std::span<const double> selected_logits, std::span<const double> universal_logits,
                            std::span<const ClassId> classes);

}  // namespace sgds
