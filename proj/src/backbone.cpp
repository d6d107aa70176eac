#include "sgds/backbone.hpp"

#include "sgds/binary_io.hpp"
#include "sgds/errors.hpp"
#include "sgds/kernels.hpp"
#include "sgds/rng.hpp"

#include <algorithm>
#include <cmath>

namespace sgds {

namespace {

Matrix gaussian_matrix(CounterRng& rng, std::size_t rows, std::size_t cols, double stddev) {
    Matrix m(rows, cols);
    for (double& v : m.flat()) v = stddev * rng.normal();
    return m;
}

bool contains(std::span<const std::size_t> layers, std::size_t l) {
    return std::find(layers.begin(), layers.end(), l) != layers.end();
}

}  // namespace

FrozenBackbone::FrozenBackbone(std::size_t num_blocks, std::size_t width, std::uint64_t seed)
    : width_(width), seed_(seed) {
    require(num_blocks > 0 && num_blocks <= 64, "FrozenBackbone: block count must be in 1..64");
    require(width > 0, "FrozenBackbone: width must be positive");
    const std::size_t hidden = width;
    const double s = static_cast<double>(width);
    for (std::size_t l = 0; l < num_blocks; ++l) {
        CounterRng rng(derive_key(seed, {0xB10C, l}));
        FrozenBlock b;
        b.w1 = gaussian_matrix(rng, width, hidden, 1.0 / std::sqrt(s));
        b.b1 = gaussian_matrix(rng, 1, hidden, 0.01);
        b.w2 = gaussian_matrix(rng, hidden, width, 0.5 / std::sqrt(static_cast<double>(hidden)));
        b.b2 = Matrix(1, width);
        blocks_.push_back(std::move(b));
    }
}

FrozenBackbone FrozenBackbone::from_blocks(std::vector<FrozenBlock> blocks) {
    require(!blocks.empty(), "FrozenBackbone::from_blocks: no blocks");
    FrozenBackbone bb;
    bb.width_ = blocks.front().w1.rows();
    for (const FrozenBlock& b : blocks) {
        require(b.w1.rows() == bb.width_ && b.w2.cols() == bb.width_ && b.b1.cols() == b.w1.cols() &&
                    b.w2.rows() == b.w1.cols() && b.b2.cols() == bb.width_,
                "FrozenBackbone::from_blocks: inconsistent block shapes");
    }
    bb.blocks_ = std::move(blocks);
    return bb;
}

std::uint64_t Adapter::layer_bitmap() const noexcept {
    std::uint64_t bits = 0;
    for (std::size_t l = 0; l < layers.size() && l < 64; ++l)
        if (layers[l]) bits |= std::uint64_t{1} << l;
    return bits;
}

bool Adapter::same_shape(const Adapter& o) const noexcept {
    return width == o.width && rank == o.rank && layers.size() == o.layers.size() &&
           layer_bitmap() == o.layer_bitmap();
}

std::size_t Adapter::num_parameters() const noexcept {
    std::size_t n = 0;
    for (const auto& l : layers)
        if (l) n += l->down.size() + l->up.size();
    return n;
}

Vector Adapter::flatten() const {
    Vector v;
    v.reserve(num_parameters());
    for (const auto& l : layers) {
        if (!l) continue;
        v.insert(v.end(), l->down.data().begin(), l->down.data().end());
        v.insert(v.end(), l->up.data().begin(), l->up.data().end());
    }
    return v;
}

void Adapter::assign_flat(std::span<const double> v) {
    require(v.size() == num_parameters(), "Adapter::assign_flat: length mismatch");
    std::size_t pos = 0;
    for (auto& l : layers) {
        if (!l) continue;
        for (Matrix* m : {&l->down, &l->up}) {
            std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(pos), m->size(), m->flat().begin());
            pos += m->size();
        }
    }
}

Adapter make_adapter(std::uint32_t task_id, std::size_t num_blocks, std::size_t width, std::size_t rank,
                     std::span<const std::size_t> layers, std::uint64_t seed) {
    require(rank > 0 && 2 * rank <= width, "make_adapter: rank must satisfy 0 < r <= d/2");
    Adapter a;
    a.task_id = task_id;
    a.width = width;
    a.rank = rank;
    a.layers.resize(num_blocks);
    for (std::size_t l : layers) {
        require(l < num_blocks, "make_adapter: layer index out of range");
        CounterRng rng(derive_key(seed, {0xADA, task_id, l}));
        a.layers[l] = AdapterLayer{gaussian_matrix(rng, width, rank, 1.0 / std::sqrt(static_cast<double>(width))),
                                   Matrix(rank, width)};
    }
    return a;
}

Vector mlp_forward(const FrozenBlock& block, std::span<const double> x) {
    Vector h = vec_mat(x, block.w1);
    kernels::axpy(1.0, block.b1.flat(), h);
    kernels::relu(h, h);
    Vector y = vec_mat(h, block.w2);
    kernels::axpy(1.0, block.b2.flat(), y);
    return y;
}

Vector adapter_forward(const AdapterLayer& adapter, std::span<const double> x) {
    Vector h = vec_mat(x, adapter.down);
    kernels::relu(h, h);
    return vec_mat(h, adapter.up);
}

Vector block_forward(std::span<const double> x, const FrozenBlock& block, const AdapterLayer* adapter,
                     const MaskHook* hook, std::size_t layer) {
    require(x.size() == block.w1.rows(), "block_forward: input dimension mismatch");
    Vector in = hook ? (*hook)(layer, x) : Vector(x.begin(), x.end());
    require(in.size() == x.size(), "block_forward: mask hook changed the dimension");
    Vector out = mlp_forward(block, in);
    kernels::axpy(1.0, in, out);
    if (adapter) {
        require(adapter->down.rows() == x.size() && adapter->up.cols() == x.size(),
                "block_forward: adapter shape mismatch");
        kernels::axpy(1.0, adapter_forward(*adapter, in), out);
    }
    return out;
}

FeatureTrace extract(std::span<const double> x, const FrozenBackbone& backbone, const Adapter* adapter,
                     std::span<const std::size_t> target_layers, const MaskHook* hook) {
    require(!x.empty(), "extract: empty input");
    require(x.size() == backbone.width(), "extract: input dimension mismatch");
    for (std::size_t l : target_layers) require(l < backbone.num_blocks(), "extract: target layer out of range");
    if (adapter) require(adapter->width == backbone.width() && adapter->layers.size() == backbone.num_blocks(),
                         "extract: adapter does not match backbone");

    FeatureTrace trace;
    Vector cur(x.begin(), x.end());
    for (std::size_t l = 0; l < backbone.num_blocks(); ++l) {
        const bool target = contains(target_layers, l);
        const AdapterLayer* al = adapter && adapter->attached(l) ? &*adapter->layers[l] : nullptr;
        if (target) {
            Vector in = hook ? (*hook)(l, cur) : cur;
            trace.target_inputs.push_back(in);
            cur = block_forward(in, backbone.block(l), al, nullptr, l);
        } else {
            cur = block_forward(cur, backbone.block(l), al, nullptr, l);
        }
    }
    trace.embedding = std::move(cur);
    return trace;
}

Vector embed(std::span<const double> x, const FrozenBackbone& backbone, const Adapter* adapter,
             std::span<const std::size_t> target_layers, const MaskHook* hook) {
    return extract(x, backbone, adapter, target_layers, hook).embedding;
}

Adapter merge_universal(std::span<const Adapter> adapters) {
    require(!adapters.empty(), "merge_universal: no adapters");
    const Adapter& first = adapters.front();
    for (const Adapter& a : adapters) require(a.same_shape(first), "merge_universal: adapter shapes differ");

    std::vector<Vector> flats;
    flats.reserve(adapters.size());
    for (const Adapter& a : adapters) flats.push_back(a.flatten());
    std::vector<const double*> ptrs;
    for (const Vector& f : flats) ptrs.push_back(f.data());

    Vector merged(flats.front().size());
    kernels::active().merge_sign_max(ptrs.data(), ptrs.size(), merged.data(), merged.size());

    Adapter out = first;
    out.task_id = 0;
    out.assign_flat(merged);
    return out;
}

double orthogonality_penalty(const Adapter& current, std::span<const Adapter> previous, PenaltyMode mode,
                             std::span<const std::size_t> layers) {
    double total = 0.0;
    for (const Adapter& prev : previous) {
        require(prev.same_shape(current), "orthogonality_penalty: adapter shapes differ");
        for (std::size_t l : layers) {
            if (!current.attached(l)) continue;
            const AdapterLayer& c = *current.layers[l];
            const AdapterLayer& p = *prev.layers[l];
            if (mode == PenaltyMode::Up || mode == PenaltyMode::Both) total += matmul_bt(c.up, p.up).squared_norm();
            if (mode == PenaltyMode::Down || mode == PenaltyMode::Both)
                total += matmul_bt(c.down, p.down).squared_norm();
        }
    }
    return total;
}

std::vector<std::uint8_t> serialize_adapter(const Adapter& adapter) {
    io::ByteWriter w;
    w.magic("SGDSADP1");
    w.u32(adapter.task_id);
    w.u32(static_cast<std::uint32_t>(adapter.layers.size()));
    w.u32(static_cast<std::uint32_t>(adapter.width));
    w.u32(static_cast<std::uint32_t>(adapter.rank));
    w.u64(adapter.layer_bitmap());
    for (double v : adapter.flatten()) w.f64(v);
    return w.take();
}

Adapter parse_adapter(std::span<const std::uint8_t> bytes) {
    io::ByteReader r(bytes);
    r.expect_magic("SGDSADP1");
    Adapter a;
    a.task_id = r.u32();
    const std::size_t header_at = r.offset();
    const std::uint32_t num_layers = r.u32();
    a.width = r.u32();
    a.rank = r.u32();
    const std::uint64_t bitmap = r.u64();
    if (num_layers == 0 || num_layers > 64 || a.width == 0 || a.rank == 0)
        throw FormatError("invalid adapter header", header_at);
    if (num_layers < 64 && (bitmap >> num_layers) != 0) throw FormatError("bitmap names a missing layer", header_at);
    a.layers.resize(num_layers);
    for (std::size_t l = 0; l < num_layers; ++l) {
        if (!((bitmap >> l) & 1U)) continue;
        AdapterLayer layer{Matrix(a.width, a.rank), Matrix(a.rank, a.width)};
        for (double& v : layer.down.flat()) v = r.f64();
        for (double& v : layer.up.flat()) v = r.f64();
        a.layers[l] = std::move(layer);
    }
    if (!r.at_end()) throw FormatError("trailing bytes after adapter matrices", r.offset());
    return a;
}

void save_adapter(const std::filesystem::path& path, const Adapter& adapter) {
    io::write_file(path, serialize_adapter(adapter));
}

Adapter load_adapter(const std::filesystem::path& path) { return parse_adapter(io::read_file(path)); }

}  // namespace sgds
