#include "sgds/trainer.hpp"

#include "sgds/errors.hpp"
#include "sgds/kernels.hpp"
#include "sgds/optimizer.hpp"
#include "sgds/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <set>

namespace sgds {

const char* param_reg_name(ParamReg r) noexcept {
    switch (r) {
        case ParamReg::Off: return "off";
        case ParamReg::Up: return "up";
        case ParamReg::Down: return "down";
        case ParamReg::Both: return "both";
    }
    return "?";
}

void TrainConfig::validate() const {
    require(epochs >= 1, "TrainConfig: epochs must be at least 1");
    require(batch >= 1, "TrainConfig: batch must be at least 1");
    require(lr > 0.0, "TrainConfig: lr must be positive");
    require(momentum >= 0.0 && momentum < 1.0, "TrainConfig: momentum must lie in [0, 1)");
    require(!(sgds_enabled && se_enabled && ac_enabled) || epochs >= 2,
            "TrainConfig: both phases enabled need at least 2 epochs");
    require(sparsifier.k > 0.0 && sparsifier.k <= 1.0, "TrainConfig: sparsity k must lie in (0, 1]");
    require(sparsifier.beta > 0.0 && sparsifier.gamma > 0.0, "TrainConfig: beta and gamma must be positive");
    require(reg_lambda >= 0.0, "TrainConfig: lambda must be non-negative");
}

std::size_t ContinualState::row_of(ClassId c) const {
    const auto it = std::find(seen.begin(), seen.end(), c);
    require(it != seen.end(), "ContinualState: class not seen");
    return static_cast<std::size_t>(it - seen.begin());
}

std::vector<std::size_t> resolve_target_layers(const std::vector<std::size_t>& configured, std::size_t num_blocks) {
    if (configured.empty()) return {num_blocks - 1};
    for (std::size_t l : configured) require(l < num_blocks, "target layer index out of range");
    return configured;
}

ContinualState make_initial_state(const ModelConfig& model, const TrainConfig& train) {
    ContinualState s;
    s.backbone = FrozenBackbone(model.num_blocks, model.width, model.backbone_seed);
    s.rank = model.rank;
    require(model.rank > 0 && 2 * model.rank <= model.width, "model: adapter rank must satisfy 0 < r <= d/2");
    if (model.adapter_layers.empty()) {
        s.adapter_layers.resize(model.num_blocks);
        std::iota(s.adapter_layers.begin(), s.adapter_layers.end(), std::size_t{0});
    } else {
        for (std::size_t l : model.adapter_layers) require(l < model.num_blocks, "adapter layer out of range");
        s.adapter_layers = model.adapter_layers;
    }
    const auto targets = resolve_target_layers(train.sparsifier.target_layers, model.num_blocks);
    s.classifier = Matrix(0, model.width);
    s.counters = ActivationCounters(targets, model.width);
    s.inference = InferenceSettings{train.sgds_enabled, train.sparsifier.k, targets};
    return s;
}

Phase phase_for_epoch(std::size_t epoch, std::size_t total_epochs) {
    return epoch <= total_epochs / 2 ? Phase::Exploration : Phase::Compaction;
}

MaskHook inference_hook(const InferenceSettings& settings) {
    if (!settings.topk) return {};
    const double k = settings.k;
    return [k](std::size_t, std::span<const double> x) { return topk_mask(x, k); };
}

Matrix build_classifier(std::span<const Vector> prototypes) {
    require(!prototypes.empty(), "build_classifier: no prototypes");
    const std::size_t d = prototypes.front().size();
    Matrix w(prototypes.size(), d);
    for (std::size_t c = 0; c < prototypes.size(); ++c) {
        require(prototypes[c].size() == d, "build_classifier: prototype sizes differ");
        const double n = l2_norm(prototypes[c]);
        require(n > 0.0, "build_classifier: zero prototype");
        auto row = w.row(c);
        for (std::size_t j = 0; j < d; ++j) row[j] = prototypes[c][j] / n;
    }
    return w;
}

std::map<ClassId, ClassStats> fit_class_gaussians(const std::map<ClassId, std::vector<Vector>>& features) {
    constexpr double kVarianceFloor = 1e-6;
    std::map<ClassId, ClassStats> out;
    for (const auto& [c, feats] : features) {
        require(!feats.empty(), "fit_class_gaussians: class without features");
        const std::size_t d = feats.front().size();
        const double inv = 1.0 / static_cast<double>(feats.size());
        ClassStats st{Vector(d, 0.0), Vector(d, 0.0)};
        for (const Vector& f : feats) kernels::axpy(inv, f, st.mean);
        for (const Vector& f : feats)
            for (std::size_t j = 0; j < d; ++j) st.var[j] += (f[j] - st.mean[j]) * (f[j] - st.mean[j]) * inv;
        for (double& v : st.var) v = std::max(v, kVarianceFloor);
        out.emplace(c, std::move(st));
    }
    return out;
}

Vector estimate_shift(std::span<const Sample> inputs, const Extractor& old_embed, const Extractor& new_embed) {
    require(!inputs.empty(), "estimate_shift: no inputs");
    Vector shift;
    const double inv = 1.0 / static_cast<double>(inputs.size());
    for (const Sample& s : inputs) {
        const Vector a = new_embed(s.input);
        const Vector b = old_embed(s.input);
        if (shift.empty()) shift.assign(a.size(), 0.0);
        for (std::size_t j = 0; j < a.size(); ++j) shift[j] += (a[j] - b[j]) * inv;
    }
    return shift;
}

Vector translate_prototype(const ClassStats& stats, std::span<const double> shift, std::size_t samples,
                           CounterRng& rng) {
    require(stats.mean.size() == shift.size(), "translate_prototype: dimension mismatch");
    const std::size_t d = shift.size();
    Vector out(d, 0.0);
    if (samples == 0) {
        for (std::size_t j = 0; j < d; ++j) out[j] = stats.mean[j] + shift[j];
        return out;
    }
    std::vector<double> sd(d);
    for (std::size_t j = 0; j < d; ++j) sd[j] = std::sqrt(stats.var[j]);
    const double inv = 1.0 / static_cast<double>(samples);
    Vector pseudo(d);
    for (std::size_t s = 0; s < samples; ++s) {
        for (std::size_t j = 0; j < d; ++j) pseudo[j] = stats.mean[j] + sd[j] * rng.normal() + shift[j];
        kernels::axpy(inv, pseudo, out);
    }
    return out;
}

AlignmentResult align_old_prototypes(const ContinualState& state, const Adapter& new_adapter,
                                     std::span<const Sample> inputs, std::size_t samples_per_class,
                                     std::uint64_t seed) {
    AlignmentResult res;
    if (state.adapters.empty()) {
        for (const auto& [c, st] : state.class_stats) res.prototypes.emplace(c, st.mean);
        res.shift.assign(state.backbone.width(), 0.0);
        return res;
    }
    const MaskHook hook = inference_hook(state.inference);
    const MaskHook* hp = hook ? &hook : nullptr;
    const Adapter& prev = state.adapters.back();
    const auto& targets = state.inference.target_layers;
    res.shift = estimate_shift(
        inputs, [&](std::span<const double> x) { return embed(x, state.backbone, &prev, targets, hp); },
        [&](std::span<const double> x) { return embed(x, state.backbone, &new_adapter, targets, hp); });
    for (const auto& [c, st] : state.class_stats) {
        CounterRng rng(derive_key(seed, {0xA1167, state.adapters.size(), c}));
        res.prototypes.emplace(c, translate_prototype(st, res.shift, samples_per_class, rng));
    }
    return res;
}

Matrix expand_head(const Matrix& classifier, std::vector<ClassId>& row_classes, std::span<const ClassId> new_classes) {
    require(classifier.rows() == row_classes.size(), "expand_head: classifier rows and class list differ");
    std::set<ClassId> present(row_classes.begin(), row_classes.end());
    for (ClassId c : new_classes) require(present.insert(c).second, "expand_head: duplicate class");
    std::vector<double> data = classifier.data();
    data.resize(data.size() + new_classes.size() * classifier.cols(), 0.0);
    row_classes.insert(row_classes.end(), new_classes.begin(), new_classes.end());
    return Matrix(row_classes.size(), classifier.cols(), std::move(data));
}

namespace {

struct BlockConstants {
    NodeId w1, b1, w2, b2;
};

struct AdapterParams {
    std::size_t layer;
    NodeId down, up;
};

double mean_of(const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

TaskLog train_task(ContinualState& state, const TaskData& task, const TrainConfig& cfg, const TrainHooks* hooks) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t task_index = state.adapters.size() + 1;
    const FrozenBackbone& bb = state.backbone;
    const std::size_t d = bb.width();

    require(!task.classes.empty() && !task.train.empty(), "train_task: empty task");
    {
        std::set<ClassId> seen(state.seen.begin(), state.seen.end());
        for (ClassId c : task.classes) require(seen.count(c) == 0, "train_task: class overlaps previously seen classes");
    }

    TaskLog log;
    log.task_index = task_index;

    // Phase 1: strategy formulation on frozen-backbone prototypes.
    const auto frozen = compute_prototypes(
        task.train, [&](std::span<const double> x) { return embed(x, bb, nullptr, {}, nullptr); }, task.classes);
    std::vector<Vector> old_protos;
    for (ClassId c : state.seen) old_protos.push_back(state.frozen_prototypes.at(c));
    std::vector<Vector> new_protos;
    for (ClassId c : task.classes) new_protos.push_back(frozen.at(c));
    log.profiles = formulate_task_strategies(state.seen, old_protos, task.classes, new_protos);
    std::map<ClassId, const SemanticProfile*> profile_of;
    for (const SemanticProfile& p : log.profiles) profile_of[p.cls] = &p;
    for (ClassId c : task.classes) state.counters.add_class(c);

    // Phase 2: fresh adapter, expanded head, two-stage training.
    Adapter adapter = make_adapter(static_cast<std::uint32_t>(task_index), bb.num_blocks(), d, state.rank,
                                   state.adapter_layers, cfg.seed);
    std::vector<ClassId> rows = state.seen;
    const Matrix expanded = expand_head(state.classifier, rows, task.classes);
    const std::size_t num_old = state.seen.size();
    const Matrix old_head(num_old, d, std::vector<double>(expanded.data().begin(),
                                                          expanded.data().begin() + static_cast<std::ptrdiff_t>(num_old * d)));
    Matrix new_head(task.classes.size(), d);
    std::map<ClassId, std::size_t> label_index;
    for (std::size_t i = 0; i < rows.size(); ++i) label_index[rows[i]] = i;

    std::vector<std::reference_wrapper<Matrix>> params;
    for (std::size_t l = 0; l < adapter.layers.size(); ++l) {
        if (!adapter.attached(l)) continue;
        params.emplace_back(adapter.layers[l]->down);
        params.emplace_back(adapter.layers[l]->up);
    }
    params.emplace_back(new_head);
    std::vector<Matrix> param_values;
    for (const Matrix& p : params) param_values.push_back(p);
    OptimizerState opt = make_optimizer(param_values, cfg.lr, cfg.momentum, cfg.epochs, cfg.weight_decay);
    param_values.clear();

    const auto& targets = state.counters.target_layers();
    auto is_target = [&](std::size_t l) { return std::find(targets.begin(), targets.end(), l) != targets.end(); };
    const std::vector<double> ones(d, 1.0);

    std::vector<std::size_t> order(task.train.size());
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const Phase phase = phase_for_epoch(epoch, cfg.epochs);
        log.epoch_phase.push_back(phase);
        opt.epoch = epoch - 1;
        const bool probabilistic = phase == Phase::Exploration ? cfg.se_enabled : cfg.ac_enabled;
        SparsifierConfig sp = cfg.sparsifier;
        sp.phase = phase;

        std::iota(order.begin(), order.end(), std::size_t{0});
        CounterRng shuffle_rng(derive_key(cfg.seed, {0x5AFF1E, task_index, epoch}));
        for (std::size_t i = order.size() - 1; i > 0; --i)
            std::swap(order[i], order[static_cast<std::size_t>(shuffle_rng.below(i + 1))]);

        std::vector<double> batch_losses;
        for (std::size_t start = 0, batch = 0; start < order.size(); start += cfg.batch, ++batch) {
            const std::size_t end = std::min(order.size(), start + cfg.batch);

            // Activation probabilities are fixed per batch from the counters at batch start.
            std::map<std::pair<ClassId, std::size_t>, std::vector<double>> probs;
            if (cfg.sgds_enabled) {
                for (std::size_t i = start; i < end; ++i) {
                    const ClassId c = task.train[order[i]].label;
                    for (std::size_t l : targets) {
                        auto key = std::make_pair(c, l);
                        if (probs.count(key)) continue;
                        probs[key] = probabilistic ? dispatch_probability(*profile_of.at(c), state.counters, l, sp) : ones;
                    }
                }
            }

            Tape tape;
            std::vector<BlockConstants> blocks;
            for (std::size_t l = 0; l < bb.num_blocks(); ++l) {
                const FrozenBlock& b = bb.block(l);
                blocks.push_back({tape.constant(b.w1), tape.constant(b.b1), tape.constant(b.w2), tape.constant(b.b2)});
            }
            std::vector<AdapterParams> adapter_nodes;
            std::vector<NodeId> param_nodes;
            for (std::size_t l = 0; l < adapter.layers.size(); ++l) {
                if (!adapter.attached(l)) continue;
                adapter_nodes.push_back({l, tape.parameter(adapter.layers[l]->down), tape.parameter(adapter.layers[l]->up)});
                param_nodes.push_back(adapter_nodes.back().down);
                param_nodes.push_back(adapter_nodes.back().up);
            }
            const NodeId head_new = tape.parameter(new_head);
            param_nodes.push_back(head_new);
            const std::optional<NodeId> head_old = num_old ? std::optional(tape.constant(old_head)) : std::nullopt;

            std::vector<NodeId> terms;
            std::vector<double> weights;
            const double inv_b = 1.0 / static_cast<double>(end - start);
            for (std::size_t i = start; i < end; ++i) {
                const Sample& s = task.train[order[i]];
                NodeId cur = tape.constant(Matrix::row_vector(s.input));
                std::size_t ai = 0;
                for (std::size_t l = 0; l < bb.num_blocks(); ++l) {
                    if (cfg.sgds_enabled && is_target(l)) {
                        CounterRng rng(derive_key(cfg.seed, {task_index, epoch, batch, i - start, l}));
                        const auto res = sparsify_and_record(tape.value(cur).flat(), probs.at({s.label, l}),
                                                             cfg.sparsifier.k, rng, &state.counters, s.label, l, true);
                        std::vector<double> m(d, 0.0);
                        for (std::size_t j : res.support) m[j] = 1.0;
                        cur = tape.mask(cur, std::move(m));
                    }
                    const BlockConstants& bc = blocks[l];
                    const NodeId h = tape.relu(tape.affine(cur, bc.w1, bc.b1));
                    NodeId out = tape.add(cur, tape.affine(h, bc.w2, bc.b2));
                    if (ai < adapter_nodes.size() && adapter_nodes[ai].layer == l) {
                        const NodeId z = tape.relu(tape.affine(cur, adapter_nodes[ai].down));
                        out = tape.add(out, tape.affine(z, adapter_nodes[ai].up));
                        ++ai;
                    }
                    cur = out;
                }
                const NodeId logits_new = tape.row_dot(cur, head_new);
                const NodeId logits = head_old ? tape.concat(tape.row_dot(cur, *head_old), logits_new) : logits_new;
                terms.push_back(tape.softmax_cross_entropy(logits, label_index.at(s.label)));
                weights.push_back(inv_b);
            }
            const NodeId cls_loss = tape.weighted_sum(terms, weights);
            NodeId loss = cls_loss;
            if (cfg.param_reg != ParamReg::Off && !state.adapters.empty() && cfg.reg_lambda > 0.0) {
                std::vector<NodeId> pen{cls_loss};
                std::vector<double> pw{1.0};
                const bool up = cfg.param_reg == ParamReg::Up || cfg.param_reg == ParamReg::Both;
                const bool down = cfg.param_reg == ParamReg::Down || cfg.param_reg == ParamReg::Both;
                for (const AdapterParams& ap : adapter_nodes) {
                    if (!is_target(ap.layer)) continue;
                    for (const Adapter& prev : state.adapters) {
                        if (up) {
                            pen.push_back(tape.gram_penalty(ap.up, prev.layers[ap.layer]->up));
                            pw.push_back(cfg.reg_lambda);
                        }
                        if (down) {
                            pen.push_back(tape.gram_penalty(ap.down, prev.layers[ap.layer]->down));
                            pw.push_back(cfg.reg_lambda);
                        }
                    }
                }
                loss = tape.weighted_sum(pen, pw);
            }

            const double loss_value = tape.scalar(loss);
            if (!std::isfinite(loss_value)) throw NumericError("non-finite training loss", loss.index);
            batch_losses.push_back(tape.scalar(cls_loss));

            const GradientSet grads = tape.backward(loss);
            std::vector<Matrix> g;
            g.reserve(param_nodes.size());
            for (NodeId p : param_nodes) g.push_back(grads.at(p));
            sgd_step(opt, params, g);
            if (hooks && hooks->on_step) hooks->on_step(tape);
        }
        log.epoch_loss.push_back(mean_of(batch_losses));
    }

    // Phase 3: statistics, alignment, classifier rebuild.
    const MaskHook hook = inference_hook(state.inference);
    const MaskHook* hp = hook ? &hook : nullptr;
    std::map<ClassId, std::vector<Vector>> feats;
    for (const Sample& s : task.train)
        feats[s.label].push_back(embed(s.input, bb, &adapter, state.inference.target_layers, hp));
    const auto new_stats = fit_class_gaussians(feats);

    const AlignmentResult aligned = align_old_prototypes(state, adapter, task.train, cfg.align_samples, cfg.seed);
    for (auto& [c, st] : state.class_stats) kernels::axpy(1.0, aligned.shift, st.mean);

    std::vector<Vector> protos;
    for (ClassId c : state.seen) protos.push_back(aligned.prototypes.at(c));
    for (ClassId c : task.classes) protos.push_back(new_stats.at(c).mean);

    for (const auto& [c, st] : new_stats) state.class_stats[c] = st;
    for (ClassId c : task.classes) state.frozen_prototypes[c] = frozen.at(c);
    state.seen = rows;
    state.classifier = build_classifier(protos);
    state.adapters.push_back(std::move(adapter));
    state.universal = merge_universal(state.adapters);
    state.task_classes.push_back(task.classes);

    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return log;
}

}  // namespace sgds
