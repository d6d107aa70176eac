#include "sgds/data.hpp"

#include "sgds/binary_io.hpp"
#include "sgds/errors.hpp"
#include "sgds/kernels.hpp"
#include "sgds/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace sgds {

namespace io {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string(), 0);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string(), 0);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::filesystem::path& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

}  // namespace io

void TaskStream::validate() const {
    std::set<ClassId> seen;
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        const TaskData& task = tasks[t];
        std::set<ClassId> mine(task.classes.begin(), task.classes.end());
        for (ClassId c : mine) require(seen.insert(c).second, "TaskStream: class sets overlap across tasks");
        for (const auto* part : {&task.train, &task.test}) {
            for (const Sample& s : *part) {
                require(mine.count(s.label) == 1, "TaskStream: sample label outside its task's classes");
                require(s.input.size() == input_dim, "TaskStream: sample dimension mismatch");
            }
        }
    }
}

std::vector<std::vector<ClassId>> split_classes(std::size_t num_classes, std::size_t num_tasks,
                                                std::uint64_t seed) {
    require(num_tasks > 0 && num_classes > 0, "split_classes: counts must be positive");
    require(num_classes % num_tasks == 0, "split_classes: num_classes must be divisible by num_tasks");

    std::vector<ClassId> order(num_classes);
    std::iota(order.begin(), order.end(), ClassId{0});
    CounterRng rng(seed);
    for (std::size_t i = num_classes - 1; i > 0; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.below(i + 1));
        std::swap(order[i], order[j]);
    }

    const std::size_t per = num_classes / num_tasks;
    std::vector<std::vector<ClassId>> parts(num_tasks);
    for (std::size_t t = 0; t < num_tasks; ++t)
        parts[t].assign(order.begin() + static_cast<std::ptrdiff_t>(t * per),
                        order.begin() + static_cast<std::ptrdiff_t>((t + 1) * per));
    return parts;
}

TaskStream build_stream(const LabeledSet& train, const LabeledSet& test,
                        const std::vector<std::vector<ClassId>>& partition) {
    require(train.dim == test.dim, "build_stream: train/test dimension mismatch");
    TaskStream stream;
    stream.input_dim = train.dim;
    std::map<ClassId, std::size_t> owner;
    for (std::size_t t = 0; t < partition.size(); ++t)
        for (ClassId c : partition[t]) owner[c] = t;

    stream.tasks.resize(partition.size());
    for (std::size_t t = 0; t < partition.size(); ++t) stream.tasks[t].classes = partition[t];
    for (const Sample& s : train.samples)
        if (auto it = owner.find(s.label); it != owner.end()) stream.tasks[it->second].train.push_back(s);
    for (const Sample& s : test.samples)
        if (auto it = owner.find(s.label); it != owner.end()) stream.tasks[it->second].test.push_back(s);
    stream.validate();
    return stream;
}

namespace {

Vector gaussian_vector(CounterRng& rng, std::size_t dim) {
    Vector v(dim);
    for (double& x : v) x = rng.normal();
    return v;
}

void remove_component(Vector& v, std::span<const double> unit) {
    kernels::axpy(-kernels::dot(v, unit), unit, v);
}

void normalize(Vector& v) {
    const double n = l2_norm(v);
    require(n > 0.0, "synthetic: degenerate direction");
    for (double& x : v) x /= n;
}

}  // namespace

SyntheticData generate_synthetic_sets(const SyntheticSpec& spec) {
    require(spec.groups > 0 && spec.classes_per_group > 0, "synthetic: empty spec");
    require(spec.dim >= spec.groups, "synthetic: dim must be at least the number of groups");
    require(spec.dim >= 2, "synthetic: dim must be at least 2");
    require(spec.noise_sigma > 0.0, "synthetic: noise_sigma must be positive");
    require(spec.train_per_class > 0 && spec.test_per_class > 0, "synthetic: sample counts must be positive");

    CounterRng basis_rng(derive_key(spec.seed, {1}));
    std::vector<Vector> bases;
    for (std::size_t g = 0; g < spec.groups; ++g) {
        Vector b = gaussian_vector(basis_rng, spec.dim);
        // Two Gram-Schmidt passes for numerical orthogonality.
        for (int pass = 0; pass < 2; ++pass)
            for (const Vector& prev : bases) remove_component(b, prev);
        normalize(b);
        bases.push_back(std::move(b));
    }

    SyntheticData out;
    out.train.dim = out.test.dim = spec.dim;
    out.train.num_classes = out.test.num_classes = spec.num_classes();

    const double ca = std::cos(spec.within_group_angle);
    const double sa = std::sin(spec.within_group_angle);
    for (std::size_t g = 0; g < spec.groups; ++g) {
        for (std::size_t i = 0; i < spec.classes_per_group; ++i) {
            const auto cls = static_cast<ClassId>(g * spec.classes_per_group + i);
            CounterRng rng(derive_key(spec.seed, {2, cls}));
            Vector u = gaussian_vector(rng, spec.dim);
            for (int pass = 0; pass < 2; ++pass) remove_component(u, bases[g]);
            normalize(u);
            Vector mean(spec.dim);
            for (std::size_t k = 0; k < spec.dim; ++k) mean[k] = ca * bases[g][k] + sa * u[k];

            auto draw = [&](std::size_t count, std::vector<Sample>& dst) {
                for (std::size_t n = 0; n < count; ++n) {
                    Sample s{Vector(spec.dim), cls};
                    for (std::size_t k = 0; k < spec.dim; ++k) s.input[k] = mean[k] + spec.noise_sigma * rng.normal();
                    dst.push_back(std::move(s));
                }
            };
            draw(spec.train_per_class, out.train.samples);
            draw(spec.test_per_class, out.test.samples);
            out.class_means.push_back(std::move(mean));
        }
    }
    return out;
}

TaskStream generate_synthetic(const SyntheticSpec& spec, std::size_t num_tasks, std::uint64_t order_seed) {
    const SyntheticData data = generate_synthetic_sets(spec);
    return build_stream(data.train, data.test, split_classes(spec.num_classes(), num_tasks, order_seed));
}

std::vector<std::uint8_t> serialize_embeddings(const LabeledSet& set) {
    io::ByteWriter w;
    w.magic("SGDSEMB1");
    w.u32(static_cast<std::uint32_t>(set.samples.size()));
    w.u32(static_cast<std::uint32_t>(set.dim));
    w.u32(static_cast<std::uint32_t>(set.num_classes));
    for (const Sample& s : set.samples) {
        require(s.input.size() == set.dim, "serialize_embeddings: sample dimension mismatch");
        require(s.label < set.num_classes, "serialize_embeddings: label out of range");
        w.u32(s.label);
        for (double v : s.input) w.f32(static_cast<float>(v));
    }
    return w.take();
}

LabeledSet parse_embeddings(std::span<const std::uint8_t> bytes) {
    io::ByteReader r(bytes);
    r.expect_magic("SGDSEMB1");
    LabeledSet set;
    const std::uint32_t n = r.u32();
    const std::size_t dim_offset = r.offset();
    set.dim = r.u32();
    if (set.dim == 0) throw FormatError("embedding dimension is zero", dim_offset);
    set.num_classes = r.u32();
    set.samples.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        const std::size_t label_offset = r.offset();
        Sample s;
        s.label = r.u32();
        if (s.label >= set.num_classes) throw FormatError("label exceeds declared class count", label_offset);
        s.input.resize(set.dim);
        for (double& v : s.input) v = static_cast<double>(r.f32());
        set.samples.push_back(std::move(s));
    }
    if (!r.at_end()) throw FormatError("trailing bytes after last sample", r.offset());
    return set;
}

LabeledSet load_embeddings(const std::filesystem::path& path) { return parse_embeddings(io::read_file(path)); }

void save_embeddings(const std::filesystem::path& path, const LabeledSet& set) {
    io::write_file(path, serialize_embeddings(set));
}

std::map<ClassId, Vector> compute_prototypes(std::span<const Sample> samples, const Extractor& extractor,
                                             std::span<const ClassId> classes) {
    std::map<ClassId, Vector> sums;
    std::map<ClassId, std::size_t> counts;
    for (const Sample& s : samples) {
        Vector f = extractor(s.input);
        auto [it, inserted] = sums.try_emplace(s.label, f.size(), 0.0);
        require(it->second.size() == f.size(), "compute_prototypes: inconsistent feature size");
        kernels::axpy(1.0, f, it->second);
        ++counts[s.label];
    }
    for (ClassId c : classes) require(counts.count(c) == 1, "compute_prototypes: class has no samples");
    for (auto& [c, v] : sums) {
        const double inv = 1.0 / static_cast<double>(counts[c]);
        for (double& x : v) x *= inv;
    }
    return sums;
}

}  // namespace sgds
