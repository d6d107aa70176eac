#pragma once

// Dense inner-loop kernels. Every routine has a scalar reference
// implementation; vectorized variants are selected once at runtime from the
// CPU feature set. Set SGDS_KERNELS=scalar in the environment to force the
// reference path.
//
// Equivalence contract between variants:
//   axpy, relu, merge_sign_max  bit-identical to scalar
//   dot                         reassociated sum, relative error ~ n * eps

#include <cstddef>
#include <span>

namespace sgds::kernels {

struct KernelTable {
    const char* name;
    double (*dot)(const double* a, const double* b, std::size_t n);
    // y += alpha * x
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // out = max(x, 0); out may alias x
    void (*relu)(const double* x, double* out, std::size_t n);
    // out[i] = sign(sum_k in[k][i]) * max_k |in[k][i]|, sign(0) = 0
    void (*merge_sign_max)(const double* const* inputs, std::size_t count, double* out, std::size_t n);
};

const KernelTable& scalar_table() noexcept;

// nullptr when the variant was not compiled in or the CPU lacks the feature.
const KernelTable* avx2_table() noexcept;

// The table used by the span wrappers below.
const KernelTable& active() noexcept;

inline double dot(std::span<const double> a, std::span<const double> b) noexcept {
    return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) noexcept {
    active().axpy(alpha, x.data(), y.data(), x.size());
}

inline void relu(std::span<const double> x, std::span<double> out) noexcept {
    active().relu(x.data(), out.data(), x.size());
}

}  // namespace sgds::kernels
