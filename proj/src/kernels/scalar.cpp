#include "sgds/kernels.hpp"

#include <cmath>

namespace sgds::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void relu_scalar(const double* x, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void merge_sign_max_scalar(const double* const* inputs, std::size_t count, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
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

const KernelTable& scalar_table() noexcept {
    static const KernelTable table{"scalar", dot_scalar, axpy_scalar, relu_scalar, merge_sign_max_scalar};
    return table;
}

}  // namespace sgds::kernels
