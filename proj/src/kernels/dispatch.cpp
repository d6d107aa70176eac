#include "sgds/kernels.hpp"

#include <cstdlib>
#include <string_view>

namespace sgds::kernels {

#if defined(SGDS_HAVE_AVX2)
extern const KernelTable kAvx2Table;
#endif

const KernelTable* avx2_table() noexcept {
#if defined(SGDS_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
    static const bool supported = __builtin_cpu_supports("avx2");
    return supported ? &kAvx2Table : nullptr;
#else
    return nullptr;
#endif
}

namespace {

const KernelTable& select() noexcept {
    if (const char* env = std::getenv("SGDS_KERNELS"); env && std::string_view(env) == "scalar") {
        return scalar_table();
    }
    if (const KernelTable* t = avx2_table()) return *t;
    return scalar_table();
}

}  // namespace

const KernelTable& active() noexcept {
    static const KernelTable& table = select();
    return table;
}

}  // namespace sgds::kernels
