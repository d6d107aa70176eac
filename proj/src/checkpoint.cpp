#include "sgds/checkpoint.hpp"

#include "sgds/binary_io.hpp"
#include "sgds/errors.hpp"

#include <string>

namespace sgds {

namespace {

std::uint64_t bitmap_of(const std::vector<std::size_t>& layers) {
    std::uint64_t bits = 0;
    for (std::size_t l : layers) bits |= std::uint64_t{1} << l;
    return bits;
}

std::vector<std::size_t> layers_of(std::uint64_t bits) {
    std::vector<std::size_t> out;
    for (std::size_t l = 0; l < 64; ++l)
        if ((bits >> l) & 1U) out.push_back(l);
    return out;
}

void write_vector(io::ByteWriter& w, std::span<const double> v) {
    for (double x : v) w.f64(x);
}

Vector read_vector(io::ByteReader& r, std::size_t n) {
    Vector v(n);
    for (double& x : v) x = r.f64();
    return v;
}

std::filesystem::path adapter_path(const std::filesystem::path& dir, std::size_t t) {
    return dir / ("adapter_" + std::to_string(t) + ".sgdsadp");
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const ContinualState& state) {
    std::filesystem::create_directories(dir);
    for (std::size_t t = 0; t < state.adapters.size(); ++t) save_adapter(adapter_path(dir, t + 1), state.adapters[t]);

    const std::size_t d = state.backbone.width();
    io::ByteWriter w;
    w.magic("SGDSSTA1");
    w.u32(kStateFormatVersion);
    w.u32(static_cast<std::uint32_t>(state.backbone.num_blocks()));
    w.u32(static_cast<std::uint32_t>(d));
    w.u32(static_cast<std::uint32_t>(state.rank));
    w.u64(state.backbone.seed());
    w.u64(bitmap_of(state.adapter_layers));
    w.u32(state.inference.topk ? 1U : 0U);
    w.f64(state.inference.k);
    w.u64(bitmap_of(state.inference.target_layers));
    w.u32(static_cast<std::uint32_t>(state.adapters.size()));

    w.u32(static_cast<std::uint32_t>(state.seen.size()));
    for (ClassId c : state.seen) w.u32(c);
    write_vector(w, state.classifier.flat());
    for (ClassId c : state.seen) {
        const ClassStats& st = state.class_stats.at(c);
        write_vector(w, st.mean);
        write_vector(w, st.var);
        write_vector(w, state.frozen_prototypes.at(c));
    }
    w.u32(static_cast<std::uint32_t>(state.task_classes.size()));
    for (const auto& cls : state.task_classes) {
        w.u32(static_cast<std::uint32_t>(cls.size()));
        for (ClassId c : cls) w.u32(c);
    }
    io::write_file(dir / "state.bin", w.bytes());
    io::write_text(dir / "counters.csv", counters_to_csv(state.counters));
}

ContinualState load_checkpoint(const std::filesystem::path& dir) {
    const auto bytes = io::read_file(dir / "state.bin");
    io::ByteReader r(bytes);
    r.expect_magic("SGDSSTA1");
    const std::size_t version_at = r.offset();
    if (r.u32() != kStateFormatVersion) throw FormatError("unsupported state format version", version_at);

    const std::size_t shape_at = r.offset();
    const std::uint32_t blocks = r.u32();
    const std::uint32_t d = r.u32();
    const std::uint32_t rank = r.u32();
    if (blocks == 0 || blocks > 64 || d == 0 || rank == 0) throw FormatError("invalid model shape", shape_at);

    ContinualState s;
    s.backbone = FrozenBackbone(blocks, d, r.u64());
    s.rank = rank;
    s.adapter_layers = layers_of(r.u64());
    s.inference.topk = r.u32() != 0;
    s.inference.k = r.f64();
    s.inference.target_layers = layers_of(r.u64());
    const std::uint32_t num_adapters = r.u32();

    const std::uint32_t num_seen = r.u32();
    for (std::uint32_t i = 0; i < num_seen; ++i) s.seen.push_back(r.u32());
    s.classifier = Matrix(num_seen, d, read_vector(r, std::size_t{num_seen} * d));
    for (ClassId c : s.seen) {
        ClassStats st;
        st.mean = read_vector(r, d);
        st.var = read_vector(r, d);
        s.class_stats.emplace(c, std::move(st));
        s.frozen_prototypes.emplace(c, read_vector(r, d));
    }
    const std::uint32_t num_tasks = r.u32();
    for (std::uint32_t t = 0; t < num_tasks; ++t) {
        std::vector<ClassId> cls(r.u32());
        for (ClassId& c : cls) c = r.u32();
        s.task_classes.push_back(std::move(cls));
    }
    if (!r.at_end()) throw FormatError("trailing bytes in state blob", r.offset());

    for (std::size_t t = 1; t <= num_adapters; ++t) {
        Adapter a = load_adapter(adapter_path(dir, t));
        if (a.width != d || a.layers.size() != blocks) throw FormatError("adapter shape does not match state", 0);
        s.adapters.push_back(std::move(a));
    }
    if (!s.adapters.empty()) s.universal = merge_universal(s.adapters);
    s.counters = counters_from_csv(io::read_text(dir / "counters.csv"));
    return s;
}

}  // namespace sgds
