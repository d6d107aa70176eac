#pragma once

#include "sgds/backbone.hpp"
#include "sgds/data.hpp"
#include "sgds/matrix.hpp"
#include "sgds/sgds_core.hpp"
#include "sgds/tape.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <vector>

namespace sgds {

enum class ParamReg : std::uint8_t { Off, Up, Down, Both };

const char* param_reg_name(ParamReg r) noexcept;

struct ModelConfig {
    std::size_t num_blocks = 4;
    std::size_t width = 64;
    std::size_t rank = 16;
    std::uint64_t backbone_seed = 42;
    std::vector<std::size_t> adapter_layers;  // empty: every block
};

struct TrainConfig {
    std::size_t epochs = 20;
    std::size_t batch = 48;
    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 0.0;
    bool sgds_enabled = true;
    bool se_enabled = true;
    bool ac_enabled = true;
    ParamReg param_reg = ParamReg::Off;
    double reg_lambda = 0.1;
    SparsifierConfig sparsifier;    // target_layers empty: last block
    std::size_t align_samples = 256;
    std::uint64_t seed = 1993;

    void validate() const;
};

struct ClassStats {
    Vector mean;
    Vector var;  // diagonal, floored at 1e-6
    friend bool operator==(const ClassStats&, const ClassStats&) = default;
};

// How features are computed outside training.
struct InferenceSettings {
    bool topk = true;
    double k = 0.6;
    std::vector<std::size_t> target_layers;
    friend bool operator==(const InferenceSettings&, const InferenceSettings&) = default;
};

struct ContinualState {
    FrozenBackbone backbone;
    std::size_t rank = 16;
    std::vector<std::size_t> adapter_layers;
    std::vector<Adapter> adapters;      // one per completed task
    Adapter universal;                  // merge of all adapters, refreshed after each task
    std::vector<ClassId> seen;          // classifier row order
    Matrix classifier;                  // |seen| x d, unit rows
    std::map<ClassId, ClassStats> class_stats;
    std::map<ClassId, Vector> frozen_prototypes;  // adapter-free means used for strategy formulation
    ActivationCounters counters;
    std::vector<std::vector<ClassId>> task_classes;
    InferenceSettings inference;

    std::size_t num_tasks() const noexcept { return adapters.size(); }
    std::size_t row_of(ClassId c) const;

    friend bool operator==(const ContinualState&, const ContinualState&) = default;
};

ContinualState make_initial_state(const ModelConfig& model, const TrainConfig& train);

// Resolved target layers for a backbone depth (empty config means the last block).
std::vector<std::size_t> resolve_target_layers(const std::vector<std::size_t>& configured, std::size_t num_blocks);

// Exploration iff epoch <= floor(E/2), epoch 1-based.
Phase phase_for_epoch(std::size_t epoch, std::size_t total_epochs);

struct TaskLog {
    std::size_t task_index = 0;  // 1-based
    std::vector<SemanticProfile> profiles;
    std::vector<double> epoch_loss;  // mean classification loss per epoch
    std::vector<Phase> epoch_phase;
    double seconds = 0.0;
};

struct TrainHooks {
    std::function<void(const Tape&)> on_step;
};

// Trains a fresh adapter and new head rows on one task, then refreshes the
// Gaussian statistics, aligns old prototypes and rebuilds the classifier.
TaskLog train_task(ContinualState& state, const TaskData& task, const TrainConfig& cfg,
                   const TrainHooks* hooks = nullptr);

// Row c = prototype_c / ||prototype_c||.
Matrix build_classifier(std::span<const Vector> prototypes);

std::map<ClassId, ClassStats> fit_class_gaussians(const std::map<ClassId, std::vector<Vector>>& features);

// Mean of (new_embed(x) - old_embed(x)) over inputs.
Vector estimate_shift(std::span<const Sample> inputs, const Extractor& old_embed, const Extractor& new_embed);

// Mean of `samples` draws from N(mean, diag var), each translated by shift; mean + shift when samples == 0.
Vector translate_prototype(const ClassStats& stats, std::span<const double> shift, std::size_t samples,
                           CounterRng& rng);

struct AlignmentResult {
    Vector shift;
    std::map<ClassId, Vector> prototypes;
};

// Identity when the state has no previous adapter.
AlignmentResult align_old_prototypes(const ContinualState& state, const Adapter& new_adapter,
                                     std::span<const Sample> inputs, std::size_t samples_per_class,
                                     std::uint64_t seed);

// Appends zero rows for new classes to classifier and row_classes.
Matrix expand_head(const Matrix& classifier, std::vector<ClassId>& row_classes, std::span<const ClassId> new_classes);

// Mask hook used for features outside training (deterministic Top-K at target layers), or none.
MaskHook inference_hook(const InferenceSettings& settings);

}  // namespace sgds
