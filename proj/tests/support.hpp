#pragma once

// Test-side oracles. These are written from the formulas directly and share
// no code with the library beyond the data types and the pinned generator.

#include "sgds/backbone.hpp"
#include "sgds/inference.hpp"
#include "sgds/rng.hpp"
#include "sgds/sgds_core.hpp"
#include "sgds/tape.hpp"
#include "sgds/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace testing {

using sgds::ClassId;
using sgds::Matrix;
using sgds::Vector;

inline Vector random_vector(std::mt19937_64& g, std::size_t n, double scale = 1.0) {
    std::normal_distribution<double> nd(0.0, scale);
    Vector v(n);
    for (double& x : v) x = nd(g);
    return v;
}

inline std::vector<std::size_t> all_blocks(std::size_t n) {
    std::vector<std::size_t> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = i;
    return v;
}

inline Matrix random_matrix(std::mt19937_64& g, std::size_t r, std::size_t c, double scale = 1.0) {
    return Matrix(r, c, random_vector(g, r * c, scale));
}

// ---- activation probabilities, long double throughout ----

inline std::vector<long double> oracle_allocation(const std::vector<std::uint64_t>& f, long double beta) {
    const std::uint64_t mx = *std::max_element(f.begin(), f.end());
    std::vector<long double> out(f.size(), 1.0L);
    if (mx == 0) return out;
    for (std::size_t j = 0; j < f.size(); ++j) out[j] = std::exp(-beta * static_cast<long double>(f[j]) / mx);
    return out;
}

// rows[y] = F_c[y, l, :], weights[y] = P(y|c).
inline std::vector<long double> oracle_reuse(const std::vector<std::vector<std::uint64_t>>& rows,
                                             const std::vector<long double>& weights) {
    const std::size_t n = rows.empty() ? 0 : rows.front().size();
    std::vector<long double> inner(n, 0.0L);
    for (std::size_t y = 0; y < rows.size(); ++y) {
        const std::uint64_t mx = *std::max_element(rows[y].begin(), rows[y].end());
        if (mx == 0) continue;
        for (std::size_t j = 0; j < n; ++j) inner[j] += weights[y] * static_cast<long double>(rows[y][j]) / mx;
    }
    std::vector<long double> out(n);
    for (std::size_t j = 0; j < n; ++j) out[j] = -std::expm1(-inner[j]);
    return out;
}

inline std::vector<long double> oracle_compaction(const std::vector<std::uint64_t>& row, long double gamma) {
    const std::uint64_t mx = *std::max_element(row.begin(), row.end());
    std::vector<long double> out(row.size(), 1.0L);
    if (mx == 0) return out;
    for (std::size_t j = 0; j < row.size(); ++j) out[j] = -std::expm1(-gamma * static_cast<long double>(row[j]) / mx);
    return out;
}

// ---- sparsifier: Bernoulli mask replayed from the same stream, then a full sort ----

struct OracleSparse {
    std::vector<double> output;
    std::vector<std::size_t> support;
    std::size_t nonzero_after_mask = 0;
};

inline OracleSparse oracle_sparsify(const Vector& x, const Vector& p, double k, std::uint64_t key) {
    sgds::CounterRng rng(key);
    std::vector<double> a(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double u = static_cast<double>(rng.next_u64() >> 11) * 0x1.0p-53;
        a[j] = u < p[j] ? x[j] : 0.0;
    }
    std::vector<std::size_t> idx;
    for (std::size_t j = 0; j < a.size(); ++j)
        if (a[j] != 0.0) idx.push_back(j);
    std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) {
        if (std::fabs(a[i]) != std::fabs(a[j])) return std::fabs(a[i]) > std::fabs(a[j]);
        return i < j;
    });
    OracleSparse r;
    r.nonzero_after_mask = idx.size();
    const auto keep = static_cast<std::size_t>(std::floor(static_cast<long double>(k) * x.size() + 1e-9L));
    if (idx.size() > keep) idx.resize(keep);
    std::sort(idx.begin(), idx.end());
    r.support = idx;
    r.output.assign(x.size(), 0.0);
    for (std::size_t j : idx) r.output[j] = a[j];
    return r;
}

// ---- fusion ----

inline Vector oracle_merge(const std::vector<Vector>& flats) {
    Vector out(flats.front().size());
    for (std::size_t d = 0; d < out.size(); ++d) {
        long double sum = 0;
        double mag = 0;
        for (const Vector& v : flats) {
            sum += v[d];
            mag = std::max(mag, std::fabs(v[d]));
        }
        out[d] = sum > 0 ? mag : (sum < 0 ? -mag : 0.0);
    }
    return out;
}

// ---- a plain forward pass for inference oracles ----

inline Vector oracle_embed(const Vector& x, const sgds::ContinualState& s, const sgds::Adapter& a) {
    Vector cur = x;
    const auto& bb = s.backbone;
    for (std::size_t l = 0; l < bb.num_blocks(); ++l) {
        const bool target = s.inference.topk && std::find(s.inference.target_layers.begin(),
                                                           s.inference.target_layers.end(),
                                                           l) != s.inference.target_layers.end();
        if (target) {
            const auto keep = static_cast<std::size_t>(std::floor(s.inference.k * cur.size() + 1e-9));
            std::vector<std::size_t> idx;
            for (std::size_t j = 0; j < cur.size(); ++j)
                if (cur[j] != 0.0) idx.push_back(j);
            std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) {
                if (std::fabs(cur[i]) != std::fabs(cur[j])) return std::fabs(cur[i]) > std::fabs(cur[j]);
                return i < j;
            });
            if (idx.size() > keep) idx.resize(keep);
            Vector m(cur.size(), 0.0);
            for (std::size_t j : idx) m[j] = cur[j];
            cur = m;
        }
        const auto& b = bb.block(l);
        const std::size_t d = cur.size(), h = b.w1.cols();
        Vector hid(h);
        for (std::size_t j = 0; j < h; ++j) {
            long double acc = b.b1(0, j);
            for (std::size_t i = 0; i < d; ++i) acc += static_cast<long double>(cur[i]) * b.w1(i, j);
            hid[j] = acc > 0 ? static_cast<double>(acc) : 0.0;
        }
        Vector out(d);
        for (std::size_t j = 0; j < d; ++j) {
            long double acc = cur[j] + static_cast<long double>(b.b2(0, j));
            for (std::size_t i = 0; i < h; ++i) acc += static_cast<long double>(hid[i]) * b.w2(i, j);
            if (a.attached(l)) {
                const auto& ad = *a.layers[l];
                for (std::size_t q = 0; q < ad.down.cols(); ++q) {
                    long double z = 0;
                    for (std::size_t i = 0; i < d; ++i) z += static_cast<long double>(cur[i]) * ad.down(i, q);
                    if (z > 0) acc += z * ad.up(q, j);
                }
            }
            out[j] = static_cast<double>(acc);
        }
        cur = out;
    }
    return cur;
}

inline Vector oracle_logits(const Vector& x, const sgds::ContinualState& s, const sgds::Adapter& a) {
    const Vector f = oracle_embed(x, s, a);
    Vector out(s.seen.size());
    for (std::size_t c = 0; c < s.seen.size(); ++c) {
        long double acc = 0;
        for (std::size_t j = 0; j < f.size(); ++j) acc += static_cast<long double>(s.classifier(c, j)) * f[j];
        out[c] = static_cast<double>(acc);
    }
    return out;
}

inline long double oracle_entropy(const Vector& logits) {
    long double mx = *std::max_element(logits.begin(), logits.end());
    long double z = 0;
    for (double v : logits) z += std::exp(static_cast<long double>(v) - mx);
    long double h = 0;
    for (double v : logits) {
        const long double p = std::exp(static_cast<long double>(v) - mx) / z;
        if (p > 0) h -= p * std::log(p);
    }
    return h;
}

// A small continual state with random adapters and classifier, for inference oracles.
inline sgds::ContinualState random_state(std::mt19937_64& g, std::size_t adapters, std::size_t classes,
                                         std::size_t d = 8, std::size_t r = 3, bool topk = false) {
    sgds::ModelConfig m;
    m.num_blocks = 2;
    m.width = d;
    m.rank = r;
    m.backbone_seed = g();
    sgds::TrainConfig t;
    t.sgds_enabled = topk;
    sgds::ContinualState s = sgds::make_initial_state(m, t);
    for (std::size_t i = 0; i < adapters; ++i) {
        sgds::Adapter a = sgds::make_adapter(static_cast<std::uint32_t>(i + 1), m.num_blocks, d, r, s.adapter_layers, g());
        for (auto& layer : a.layers) layer->up = random_matrix(g, r, d, 0.5);
        s.adapters.push_back(std::move(a));
    }
    s.universal = sgds::merge_universal(s.adapters);
    std::vector<Vector> protos;
    for (std::size_t c = 0; c < classes; ++c) {
        s.seen.push_back(static_cast<ClassId>(c));
        protos.push_back(random_vector(g, d));
    }
    s.classifier = sgds::build_classifier(protos);
    return s;
}

// ---- gradient check graphs ----

struct GradGraph {
    sgds::Tape tape;
    std::vector<sgds::NodeId> params;
    sgds::NodeId loss;
    std::size_t masks = 0;
};

// One frozen residual block with an adapter, a masked input, a split head and a
// batch of cross-entropy terms; optionally the orthogonality penalty.
inline GradGraph build_grad_graph(std::mt19937_64& g, std::size_t d, std::size_t r, bool with_mask,
                                  bool with_penalty) {
    GradGraph gg;
    sgds::Tape& t = gg.tape;
    const std::size_t old_classes = 2, new_classes = 3, batch = 3;
    const auto w1 = t.constant(random_matrix(g, d, d, 1.0 / std::sqrt(double(d))));
    const auto b1 = t.constant(random_matrix(g, 1, d, 0.1));
    const auto w2 = t.constant(random_matrix(g, d, d, 0.5 / std::sqrt(double(d))));
    const auto b2 = t.constant(random_matrix(g, 1, d, 0.1));
    const auto down = t.parameter(random_matrix(g, d, r, 1.0 / std::sqrt(double(d))));
    const auto up = t.parameter(random_matrix(g, r, d, 0.3));
    const auto head_new = t.parameter(random_matrix(g, new_classes, d, 0.3));
    const auto head_old = t.constant(random_matrix(g, old_classes, d, 0.3));
    gg.params = {down, up, head_new};

    std::uniform_int_distribution<std::size_t> label(0, old_classes + new_classes - 1);
    std::bernoulli_distribution keep(0.6);
    std::vector<sgds::NodeId> terms;
    std::vector<double> weights;
    for (std::size_t i = 0; i < batch; ++i) {
        auto x = t.constant(Matrix::row_vector(random_vector(g, d)));
        if (with_mask) {
            std::vector<double> m(d);
            for (double& v : m) v = keep(g) ? 1.0 : 0.0;
            x = t.mask(x, m);
            ++gg.masks;
        }
        const auto h = t.relu(t.affine(x, w1, b1));
        auto out = t.add(x, t.affine(h, w2, b2));
        out = t.add(out, t.affine(t.relu(t.affine(x, down)), up));
        const auto logits = t.concat(t.row_dot(out, head_old), t.row_dot(out, head_new));
        terms.push_back(t.softmax_cross_entropy(logits, label(g)));
        weights.push_back(1.0 / batch);
    }
    gg.loss = t.weighted_sum(terms, weights);
    if (with_penalty) {
        const auto pen_up = t.gram_penalty(up, random_matrix(g, r, d, 0.3));
        const auto pen_down = t.gram_penalty(down, random_matrix(g, d, r, 0.3));
        const std::vector<sgds::NodeId> parts{gg.loss, pen_up, pen_down};
        const std::vector<double> w{1.0, 0.1, 0.1};
        gg.loss = t.weighted_sum(parts, w);
    }
    return gg;
}

// Max over every parameter coordinate of |analytic - numeric| / max(|analytic|, |numeric|, floor).
inline double max_gradient_error(GradGraph& gg, double h = 1e-5, double floor = 1e-5) {
    const sgds::GradientSet grads = gg.tape.backward(gg.loss);
    double worst = 0.0;
    for (sgds::NodeId p : gg.params) {
        const Matrix base = gg.tape.value(p);
        const Matrix& analytic = grads.at(p);
        for (std::size_t i = 0; i < base.size(); ++i) {
            Matrix plus = base, minus = base;
            plus.flat()[i] += h;
            minus.flat()[i] -= h;
            gg.tape.set_leaf(p, plus);
            gg.tape.replay();
            const double lp = gg.tape.scalar(gg.loss);
            gg.tape.set_leaf(p, minus);
            gg.tape.replay();
            const double lm = gg.tape.scalar(gg.loss);
            const double numeric = (lp - lm) / (2 * h);
            const double a = analytic.flat()[i];
            const double err = std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), floor});
            worst = std::max(worst, err);
        }
        gg.tape.set_leaf(p, base);
        gg.tape.replay();
    }
    return worst;
}

}  // namespace testing
