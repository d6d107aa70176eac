#include "sgds/inference.hpp"

#include "sgds/errors.hpp"
#include "sgds/kernels.hpp"
#include "sgds/tape.hpp"

#include <cmath>

namespace sgds {

Vector adapter_logits(std::span<const double> x, const ContinualState& state, const Adapter& adapter) {
    const MaskHook hook = inference_hook(state.inference);
    const Vector phi =
        embed(x, state.backbone, &adapter, state.inference.target_layers, hook ? &hook : nullptr);
    Vector logits(state.classifier.rows());
    for (std::size_t c = 0; c < logits.size(); ++c) logits[c] = kernels::dot(state.classifier.row(c), phi);
    return logits;
}

double shannon_entropy(std::span<const double> probs) {
    double h = 0.0;
    for (double p : probs)
        if (p > 0.0) h -= p * std::log(p);
    return h;
}

namespace {

AdapterSelection lowest_entropy(std::span<const Vector> logits_per_adapter) {
    AdapterSelection sel;
    for (std::size_t i = 0; i < logits_per_adapter.size(); ++i) {
        sel.entropies.push_back(shannon_entropy(softmax(logits_per_adapter[i])));
        if (sel.entropies[i] < sel.entropies[sel.index]) sel.index = i;
    }
    return sel;
}

std::vector<Vector> logits_per_adapter(std::span<const double> x, const ContinualState& state) {
    std::vector<Vector> out;
    out.reserve(state.adapters.size());
    for (const Adapter& a : state.adapters) out.push_back(adapter_logits(x, state, a));
    return out;
}

}  // namespace

AdapterSelection select_adapter(std::span<const double> x, const ContinualState& state) {
    require(!state.adapters.empty(), "select_adapter: no trained adapters");
    return lowest_entropy(logits_per_adapter(x, state));
}

std::size_t ensemble_argmax(std::span<const double> selected_logits, std::span<const double> universal_logits,
                            std::span<const ClassId> classes) {
    require(selected_logits.size() == universal_logits.size() && selected_logits.size() == classes.size() &&
                !classes.empty(),
            "ensemble_argmax: length mismatch");
    std::size_t best = 0;
    double best_score = selected_logits[0] + universal_logits[0];
    for (std::size_t c = 1; c < classes.size(); ++c) {
        const double score = selected_logits[c] + universal_logits[c];
        if (score > best_score || (score == best_score && classes[c] < classes[best])) {
            best = c;
            best_score = score;
        }
    }
    return best;
}

ClassId predict(std::span<const double> x, const ContinualState& state) {
    require(!state.adapters.empty(), "predict: no trained adapters");
    const std::vector<Vector> logits = logits_per_adapter(x, state);
    const AdapterSelection sel = lowest_entropy(logits);
    const Vector uni = adapter_logits(x, state, state.universal);
    return state.seen[ensemble_argmax(logits[sel.index], uni, state.seen)];
}

}  // namespace sgds
