#include "sgds/kernels.hpp"

#include <immintrin.h>

#include <cmath>

namespace sgds::kernels {

// Populated in dispatch.cpp only after a CPU feature check.
extern const KernelTable kAvx2Table;

namespace {

double dot_avx2(const double* a, const double* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
        acc1 = _mm256_add_pd(acc1, _mm256_mul_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4)));
    }
    for (; i + 4 <= n; i += 4) {
        acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    acc0 = _mm256_add_pd(acc0, acc1);
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, acc0);
    double s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
        _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void relu_avx2(const double* x, double* out, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_max_pd(_mm256_loadu_pd(x + i), zero));
    }
    for (; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void merge_sign_max_avx2(const double* const* inputs, std::size_t count, double* out, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    const __m256d abs_mask = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7FFFFFFFFFFFFFFFLL));
    const __m256d sign_bit = _mm256_castsi256_pd(_mm256_set1_epi64x(static_cast<long long>(0x8000000000000000ULL)));
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d sum = zero;
        __m256d mag = zero;
        for (std::size_t k = 0; k < count; ++k) {
            const __m256d v = _mm256_loadu_pd(inputs[k] + i);
            sum = _mm256_add_pd(sum, v);
            mag = _mm256_max_pd(mag, _mm256_and_pd(v, abs_mask));
        }
        const __m256d pos = _mm256_cmp_pd(sum, zero, _CMP_GT_OQ);
        const __m256d neg = _mm256_cmp_pd(sum, zero, _CMP_LT_OQ);
        const __m256d res = _mm256_or_pd(_mm256_and_pd(pos, mag),
                                         _mm256_and_pd(neg, _mm256_xor_pd(mag, sign_bit)));
        _mm256_storeu_pd(out + i, res);
    }
    for (; i < n; ++i) {
        double sum = 0.0;
        double mag = 0.0;
        for (std::size_t k = 0; k < count; ++k) {
            sum += inputs[k][i];
            mag = std::fmax(mag, std::fabs(inputs[k][i]));
        }
        out[i] = sum > 0.0 ? mag : (sum < 0.0 ? -mag : 0.0);
    }
}

}  // namespace

const KernelTable kAvx2Table{"avx2", dot_avx2, axpy_avx2, relu_avx2, merge_sign_max_avx2};

}  // namespace sgds::kernels
