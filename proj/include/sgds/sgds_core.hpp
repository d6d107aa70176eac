#pragma once

// Semantic-guided dynamic sparsification: strategy formulation, usage
// counters, the three activation-probability rules and the two-stage
// Bernoulli + Top-K sparsifier.

#include "sgds/data.hpp"
#include "sgds/matrix.hpp"
#include "sgds/rng.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace sgds {

enum class Strategy : std::uint8_t { KnowledgeReuse, NewSubspaceAllocation };
enum class Phase : std::uint8_t { Exploration, Compaction };

const char* strategy_name(Strategy s) noexcept;
const char* phase_name(Phase p) noexcept;

// Usage counters F (per target layer x unit) and F_c (per class x target layer x unit).
class ActivationCounters {
public:
    ActivationCounters() = default;
    ActivationCounters(std::vector<std::size_t> target_layers, std::size_t width);

    std::size_t width() const noexcept { return width_; }
    const std::vector<std::size_t>& target_layers() const noexcept { return layers_; }
    const std::vector<ClassId>& classes() const noexcept { return class_order_; }

    bool is_target(std::size_t layer) const noexcept;
    bool has_class(ClassId c) const noexcept { return class_index_.count(c) == 1; }

    // Adds an all-zero F_c row; no-op if present.
    void add_class(ClassId c);

    std::span<const std::uint64_t> global(std::size_t layer) const;
    std::span<const std::uint64_t> per_class(ClassId c, std::size_t layer) const;

    // F[l, j] += 1 and F_c[c, l, j] += 1 for each j in support.
    void record(ClassId c, std::size_t layer, std::span<const std::size_t> support);

    // Used when restoring from a dump; the caller keeps F = sum of F_c.
    void set_counts(ClassId c, std::size_t layer, std::span<const std::uint64_t> row);

    // F[l, j] == sum_c F_c[c, l, j] for every (l, j).
    bool consistent() const;

    friend bool operator==(const ActivationCounters&, const ActivationCounters&) = default;

private:
    std::size_t slot(std::size_t layer) const;
    std::size_t class_slot(ClassId c) const;

    std::size_t width_ = 0;
    std::vector<std::size_t> layers_;
    std::vector<std::uint64_t> global_;               // [slot][unit]
    std::vector<ClassId> class_order_;
    std::unordered_map<ClassId, std::size_t> class_index_;
    std::vector<std::vector<std::uint64_t>> per_class_;  // [class][slot * width + unit]
};

struct SemanticProfile {
    ClassId cls = 0;
    std::vector<ClassId> support;      // Y_{t-1} followed by C_t
    std::vector<double> relation;      // P(y|c), aligned with support
    std::size_t num_old = 0;           // first num_old entries of support are Y_{t-1}
    double s_old = 0.0;
    double s_new = 0.0;
    Strategy strategy = Strategy::NewSubspaceAllocation;
};

// softmax_y' cos(mu_c, mu_y') over all prototypes; c must be one of them.
std::vector<double> relation_distribution(std::size_t c_index, std::span<const Vector> prototypes);

// Sums P over the old (first num_old) and new entries; KnowledgeReuse iff S_old > S_new.
SemanticProfile formulate_strategy(ClassId c, std::span<const ClassId> support, std::span<const double> relation,
                                   std::size_t num_old);

// Profiles for every class of the current task. old_prototypes / new_prototypes
// are frozen-backbone class means in the order of old_classes / new_classes.
std::vector<SemanticProfile> formulate_task_strategies(std::span<const ClassId> old_classes,
                                                       std::span<const Vector> old_prototypes,
                                                       std::span<const ClassId> new_classes,
                                                       std::span<const Vector> new_prototypes);

struct OldClassWeight {
    ClassId cls;
    double p;
};

// [p_r]_j = 1 - exp(-sum_y P(y|c) F_c[y,l,j] / max_i F_c[y,l,i]); all-zero rows contribute 0.
std::vector<double> reuse_probability(const ActivationCounters& counters, std::span<const OldClassWeight> old,
                                      std::size_t layer);

// [p_a]_j = exp(-beta F[l,j] / max_i F[l,i]); 1 everywhere when max is 0.
std::vector<double> allocation_probability(const ActivationCounters& counters, std::size_t layer, double beta);

// p_j = 1 - exp(-gamma F_c[c,l,j] / max_k F_c[c,l,k]); 1 everywhere when max is 0.
std::vector<double> compaction_probability(const ActivationCounters& counters, ClassId c, std::size_t layer,
                                           double gamma);

struct SparsifierConfig {
    double k = 0.6;
    double beta = 0.5;
    double gamma = 1.0;
    std::vector<std::size_t> target_layers;
    Phase phase = Phase::Exploration;
};

std::vector<OldClassWeight> old_class_weights(const SemanticProfile& profile);

std::vector<double> dispatch_probability(const SemanticProfile& profile, const ActivationCounters& counters,
                                         std::size_t layer, const SparsifierConfig& config);

// floor(k * N), guarded against representation error in k * N.
std::size_t topk_count(double k, std::size_t n);

// Indices of the top `keep` nonzero |a_j|, ties to the lower index, ascending order.
std::vector<std::size_t> topk_support(std::span<const double> a, std::size_t keep);

// Deterministic Top-K (no Bernoulli stage), as used at inference.
Vector topk_mask(std::span<const double> x, double k);

struct SparsifyResult {
    Vector output;
    std::vector<std::size_t> support;  // ascending
};

// Bernoulli(p) mask, then Top-floor(kN) by magnitude; records the final support when `record`.
SparsifyResult sparsify_and_record(std::span<const double> x, std::span<const double> p, double k, CounterRng& rng,
                                   ActivationCounters* counters, ClassId c, std::size_t layer, bool record);

// CSV: layer,unit,F,c<id>... one row per (target layer, unit).
std::string counters_to_csv(const ActivationCounters& counters);
ActivationCounters counters_from_csv(const std::string& text);

}  // namespace sgds
