#include "sgds/sgds_core.hpp"

#include "sgds/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sgds {

const char* strategy_name(Strategy s) noexcept {
    return s == Strategy::KnowledgeReuse ? "KnowledgeReuse" : "NewSubspaceAllocation";
}

const char* phase_name(Phase p) noexcept { return p == Phase::Exploration ? "Exploration" : "Compaction"; }

ActivationCounters::ActivationCounters(std::vector<std::size_t> target_layers, std::size_t width)
    : width_(width), layers_(std::move(target_layers)), global_(layers_.size() * width, 0) {
    require(width > 0, "ActivationCounters: width must be positive");
    std::vector<std::size_t> sorted = layers_;
    std::sort(sorted.begin(), sorted.end());
    require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(),
            "ActivationCounters: duplicate target layer");
}

bool ActivationCounters::is_target(std::size_t layer) const noexcept {
    return std::find(layers_.begin(), layers_.end(), layer) != layers_.end();
}

std::size_t ActivationCounters::slot(std::size_t layer) const {
    const auto it = std::find(layers_.begin(), layers_.end(), layer);
    require(it != layers_.end(), "ActivationCounters: layer is not a target layer");
    return static_cast<std::size_t>(it - layers_.begin());
}

std::size_t ActivationCounters::class_slot(ClassId c) const {
    const auto it = class_index_.find(c);
    require(it != class_index_.end(), "ActivationCounters: unknown class " + std::to_string(c));
    return it->second;
}

void ActivationCounters::add_class(ClassId c) {
    if (has_class(c)) return;
    class_index_.emplace(c, class_order_.size());
    class_order_.push_back(c);
    per_class_.emplace_back(layers_.size() * width_, 0);
}

std::span<const std::uint64_t> ActivationCounters::global(std::size_t layer) const {
    return std::span<const std::uint64_t>(global_).subspan(slot(layer) * width_, width_);
}

std::span<const std::uint64_t> ActivationCounters::per_class(ClassId c, std::size_t layer) const {
    return std::span<const std::uint64_t>(per_class_[class_slot(c)]).subspan(slot(layer) * width_, width_);
}

void ActivationCounters::record(ClassId c, std::size_t layer, std::span<const std::size_t> support) {
    const std::size_t s = slot(layer);
    auto& row = per_class_[class_slot(c)];
    for (std::size_t j : support) {
        require(j < width_, "ActivationCounters::record: unit out of range");
        ++global_[s * width_ + j];
        ++row[s * width_ + j];
    }
}

void ActivationCounters::set_counts(ClassId c, std::size_t layer, std::span<const std::uint64_t> row) {
    require(row.size() == width_, "ActivationCounters::set_counts: width mismatch");
    const std::size_t s = slot(layer);
    auto& dst = per_class_[class_slot(c)];
    for (std::size_t j = 0; j < width_; ++j) {
        global_[s * width_ + j] += row[j] - dst[s * width_ + j];
        dst[s * width_ + j] = row[j];
    }
}

bool ActivationCounters::consistent() const {
    for (std::size_t i = 0; i < global_.size(); ++i) {
        std::uint64_t sum = 0;
        for (const auto& row : per_class_) sum += row[i];
        if (sum != global_[i]) return false;
    }
    return true;
}

std::vector<double> relation_distribution(std::size_t c_index, std::span<const Vector> prototypes) {
    require(c_index < prototypes.size(), "relation_distribution: class not in the prototype set");
    std::vector<double> sims(prototypes.size());
    for (std::size_t i = 0; i < prototypes.size(); ++i)
        sims[i] = cosine_similarity(prototypes[c_index], prototypes[i]);
    const double mx = *std::max_element(sims.begin(), sims.end());
    double z = 0.0;
    for (double& s : sims) {
        s = std::exp(s - mx);
        z += s;
    }
    for (double& s : sims) s /= z;
    return sims;
}

SemanticProfile formulate_strategy(ClassId c, std::span<const ClassId> support, std::span<const double> relation,
                                   std::size_t num_old) {
    require(support.size() == relation.size(), "formulate_strategy: support/probability length mismatch");
    require(num_old <= support.size(), "formulate_strategy: num_old exceeds support");
    SemanticProfile p;
    p.cls = c;
    p.support.assign(support.begin(), support.end());
    p.relation.assign(relation.begin(), relation.end());
    p.num_old = num_old;
    for (std::size_t i = 0; i < relation.size(); ++i) (i < num_old ? p.s_old : p.s_new) += relation[i];
    p.strategy = p.s_old > p.s_new ? Strategy::KnowledgeReuse : Strategy::NewSubspaceAllocation;
    return p;
}

std::vector<SemanticProfile> formulate_task_strategies(std::span<const ClassId> old_classes,
                                                       std::span<const Vector> old_prototypes,
                                                       std::span<const ClassId> new_classes,
                                                       std::span<const Vector> new_prototypes) {
    require(old_classes.size() == old_prototypes.size() && new_classes.size() == new_prototypes.size(),
            "formulate_task_strategies: class/prototype count mismatch");
    std::vector<ClassId> support(old_classes.begin(), old_classes.end());
    support.insert(support.end(), new_classes.begin(), new_classes.end());
    std::vector<Vector> protos(old_prototypes.begin(), old_prototypes.end());
    protos.insert(protos.end(), new_prototypes.begin(), new_prototypes.end());

    std::vector<SemanticProfile> out;
    for (std::size_t i = 0; i < new_classes.size(); ++i) {
        const std::size_t idx = old_classes.size() + i;
        out.push_back(formulate_strategy(new_classes[i], support, relation_distribution(idx, protos),
                                         old_classes.size()));
    }
    return out;
}

namespace {

std::uint64_t row_max(std::span<const std::uint64_t> row) {
    return row.empty() ? 0 : *std::max_element(row.begin(), row.end());
}

}  // namespace

std::vector<double> reuse_probability(const ActivationCounters& counters, std::span<const OldClassWeight> old,
                                      std::size_t layer) {
    require(counters.is_target(layer), "reuse_probability: layer is not a target layer");
    std::vector<double> acc(counters.width(), 0.0);
    for (const OldClassWeight& w : old) {
        const auto row = counters.per_class(w.cls, layer);
        const std::uint64_t mx = row_max(row);
        if (mx == 0) continue;
        const double inv = 1.0 / static_cast<double>(mx);
        for (std::size_t j = 0; j < row.size(); ++j) acc[j] += w.p * (static_cast<double>(row[j]) * inv);
    }
    for (double& v : acc) v = 1.0 - std::exp(-v);
    return acc;
}

std::vector<double> allocation_probability(const ActivationCounters& counters, std::size_t layer, double beta) {
    require(counters.is_target(layer), "allocation_probability: layer is not a target layer");
    const auto row = counters.global(layer);
    const std::uint64_t mx = row_max(row);
    std::vector<double> p(row.size(), 1.0);
    if (mx == 0) return p;
    for (std::size_t j = 0; j < row.size(); ++j)
        p[j] = std::exp(-beta * (static_cast<double>(row[j]) / static_cast<double>(mx)));
    return p;
}

std::vector<double> compaction_probability(const ActivationCounters& counters, ClassId c, std::size_t layer,
                                           double gamma) {
    require(counters.is_target(layer), "compaction_probability: layer is not a target layer");
    require(counters.has_class(c), "compaction_probability: class has no counter row");
    const auto row = counters.per_class(c, layer);
    const std::uint64_t mx = row_max(row);
    std::vector<double> p(row.size(), 1.0);
    if (mx == 0) return p;
    for (std::size_t j = 0; j < row.size(); ++j)
        p[j] = 1.0 - std::exp(-gamma * (static_cast<double>(row[j]) / static_cast<double>(mx)));
    return p;
}

std::vector<OldClassWeight> old_class_weights(const SemanticProfile& profile) {
    std::vector<OldClassWeight> out;
    out.reserve(profile.num_old);
    for (std::size_t i = 0; i < profile.num_old; ++i) out.push_back({profile.support[i], profile.relation[i]});
    return out;
}

std::vector<double> dispatch_probability(const SemanticProfile& profile, const ActivationCounters& counters,
                                         std::size_t layer, const SparsifierConfig& config) {
    if (config.phase == Phase::Compaction) {
        require(counters.has_class(profile.cls), "dispatch_probability: unknown class in compaction");
        return compaction_probability(counters, profile.cls, layer, config.gamma);
    }
    if (profile.strategy == Strategy::KnowledgeReuse) {
        const auto weights = old_class_weights(profile);
        return reuse_probability(counters, weights, layer);
    }
    return allocation_probability(counters, layer, config.beta);
}

std::size_t topk_count(double k, std::size_t n) {
    return static_cast<std::size_t>(std::floor(k * static_cast<double>(n) + 1e-9));
}

std::vector<std::size_t> topk_support(std::span<const double> a, std::size_t keep) {
    std::vector<std::size_t> idx;
    for (std::size_t j = 0; j < a.size(); ++j)
        if (a[j] != 0.0) idx.push_back(j);
    if (idx.size() > keep) {
        std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep), idx.end(),
                         [&](std::size_t i, std::size_t j) {
                             const double ai = std::fabs(a[i]);
                             const double aj = std::fabs(a[j]);
                             return ai != aj ? ai > aj : i < j;
                         });
        idx.resize(keep);
        std::sort(idx.begin(), idx.end());
    }
    return idx;
}

Vector topk_mask(std::span<const double> x, double k) {
    require(k > 0.0 && k <= 1.0, "topk_mask: k must lie in (0, 1]");
    const std::size_t keep = topk_count(k, x.size());
    require(keep >= 1, "topk_mask: k * N < 1");
    Vector out(x.size(), 0.0);
    for (std::size_t j : topk_support(x, keep)) out[j] = x[j];
    return out;
}

SparsifyResult sparsify_and_record(std::span<const double> x, std::span<const double> p, double k, CounterRng& rng,
                                   ActivationCounters* counters, ClassId c, std::size_t layer, bool record) {
    require(x.size() == p.size(), "sparsify_and_record: |x| != |p|");
    require(k > 0.0 && k <= 1.0, "sparsify_and_record: k must lie in (0, 1]");
    const std::size_t keep = topk_count(k, x.size());
    require(keep >= 1, "sparsify_and_record: k * N < 1");

    Vector masked(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) masked[j] = rng.bernoulli(p[j]) ? x[j] : 0.0;

    SparsifyResult res;
    res.support = topk_support(masked, keep);
    res.output.assign(x.size(), 0.0);
    for (std::size_t j : res.support) res.output[j] = masked[j];
    if (record) {
        require(counters != nullptr, "sparsify_and_record: recording requires counters");
        counters->record(c, layer, res.support);
    }
    return res;
}

}  // namespace sgds
