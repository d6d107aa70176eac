#pragma once

#include "sgds/matrix.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace sgds {

// Frozen residual MLP block: x + relu(x W1 + b1) W2 + b2.
struct FrozenBlock {
    Matrix w1;  // d x h
    Matrix b1;  // 1 x h
    Matrix w2;  // h x d
    Matrix b2;  // 1 x d
    friend bool operator==(const FrozenBlock&, const FrozenBlock&) = default;
};

class FrozenBackbone {
public:
    FrozenBackbone() = default;
    FrozenBackbone(std::size_t num_blocks, std::size_t width, std::uint64_t seed);

    std::size_t num_blocks() const noexcept { return blocks_.size(); }
    std::size_t width() const noexcept { return width_; }
    std::uint64_t seed() const noexcept { return seed_; }
    const FrozenBlock& block(std::size_t l) const { return blocks_.at(l); }

    // Used by tests to build hand-specified blocks.
    static FrozenBackbone from_blocks(std::vector<FrozenBlock> blocks);

    friend bool operator==(const FrozenBackbone&, const FrozenBackbone&) = default;

private:
    std::size_t width_ = 0;
    std::uint64_t seed_ = 0;
    std::vector<FrozenBlock> blocks_;
};

struct AdapterLayer {
    Matrix down;  // d x r
    Matrix up;    // r x d
    friend bool operator==(const AdapterLayer&, const AdapterLayer&) = default;
};

// One task's bottleneck adapter. layers[l] is empty for blocks without an adapter.
struct Adapter {
    std::uint32_t task_id = 0;
    std::size_t width = 0;
    std::size_t rank = 0;
    std::vector<std::optional<AdapterLayer>> layers;

    std::uint64_t layer_bitmap() const noexcept;
    bool attached(std::size_t l) const noexcept { return l < layers.size() && layers[l].has_value(); }
    bool same_shape(const Adapter& o) const noexcept;
    std::size_t num_parameters() const noexcept;

    // Flatten in layer order, down before up; and the inverse.
    Vector flatten() const;
    void assign_flat(std::span<const double> v);

    friend bool operator==(const Adapter&, const Adapter&) = default;
};

// Requires rank <= width / 2. W_down ~ N(0, 1/width), W_up = 0.
Adapter make_adapter(std::uint32_t task_id, std::size_t num_blocks, std::size_t width, std::size_t rank,
                     std::span<const std::size_t> layers, std::uint64_t seed);

// Called only at target layers with the block index and the block input.
using MaskHook = std::function<Vector(std::size_t layer, std::span<const double> x)>;

Vector mlp_forward(const FrozenBlock& block, std::span<const double> x);
Vector adapter_forward(const AdapterLayer& adapter, std::span<const double> x);

// output = x' + MLP(x') [+ relu(x' W_down) W_up], x' = hook(x) when a hook is given.
Vector block_forward(std::span<const double> x, const FrozenBlock& block, const AdapterLayer* adapter,
                     const MaskHook* hook, std::size_t layer = 0);

struct FeatureTrace {
    std::vector<Vector> target_inputs;  // one per target layer, post-mask
    Vector embedding;
};

// Runs all blocks; the hook is applied only at layers listed in target_layers.
FeatureTrace extract(std::span<const double> x, const FrozenBackbone& backbone, const Adapter* adapter,
                     std::span<const std::size_t> target_layers, const MaskHook* hook);

// Embedding only.
Vector embed(std::span<const double> x, const FrozenBackbone& backbone, const Adapter* adapter,
             std::span<const std::size_t> target_layers, const MaskHook* hook);

// sign(sum_i v_i[d]) * max_i |v_i[d]| per flattened coordinate.
Adapter merge_universal(std::span<const Adapter> adapters);

enum class PenaltyMode { Up, Down, Both };

// sum_l sum_i ||W^(l,t) W^(l,i)^T||_F^2 over the selected matrices.
double orthogonality_penalty(const Adapter& current, std::span<const Adapter> previous, PenaltyMode mode,
                             std::span<const std::size_t> layers);

// SGDSADP1 adapter checkpoint.
std::vector<std::uint8_t> serialize_adapter(const Adapter& adapter);
Adapter parse_adapter(std::span<const std::uint8_t> bytes);
void save_adapter(const std::filesystem::path& path, const Adapter& adapter);
Adapter load_adapter(const std::filesystem::path& path);

}  // namespace sgds
