#include "kernels/kernels.hpp"

#include <cstdlib>
#include <cstring>
#include <stdexcept>

namespace prcaps::kernels {

const Ops& scalar_ops();
#if defined(__AVX2__)
const Ops& avx2_ops();
#endif
#if defined(__aarch64__)
const Ops& neon_ops();
#endif

const char* backend_name(Backend b) {
    switch (b) {
        case Backend::Scalar: return "scalar";
        case Backend::Avx2: return "avx2";
        case Backend::Neon: return "neon";
    }
    return "?";
}

std::vector<Backend> available_backends() {
    std::vector<Backend> v{Backend::Scalar};
#if defined(__AVX2__)
    if (__builtin_cpu_supports("avx2")) v.push_back(Backend::Avx2);
#endif
#if defined(__aarch64__)
    v.push_back(Backend::Neon);
#endif
    return v;
}

const Ops& ops_for(Backend b) {
    switch (b) {
        case Backend::Scalar: return scalar_ops();
#if defined(__AVX2__)
        case Backend::Avx2: return avx2_ops();
#endif
#if defined(__aarch64__)
        case Backend::Neon: return neon_ops();
#endif
        default: throw std::runtime_error("kernel backend not compiled into this binary");
    }
}

namespace {

Backend select_backend() {
    if (const char* env = std::getenv("PRCAPS_KERNELS")) {
        if (std::strcmp(env, "scalar") == 0) return Backend::Scalar;
        if (std::strcmp(env, "avx2") == 0) return Backend::Avx2;
        if (std::strcmp(env, "neon") == 0) return Backend::Neon;
        throw std::runtime_error(std::string("unknown PRCAPS_KERNELS value: ") + env);
    }
    auto avail = available_backends();
    return avail.back(); // widest available
}

} // namespace

Backend active_backend() {
    static const Backend b = select_backend();
    return b;
}

const Ops& ops() {
    static const Ops& t = ops_for(active_backend());
    return t;
}

void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n) {
    const Ops& t = ops();
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        double* ci = c + i * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] = t.dot(ai, b + j * k, k);
    }
}

void matmul_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n) {
    const Ops& t = ops();
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c + i * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] = 0.0;
        const double* ai = a + i * k;
        for (std::size_t l = 0; l < k; ++l) t.axpy(ai[l], b + l * n, ci, n);
    }
}

void matmul_tn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                   std::size_t n) {
    const Ops& t = ops();
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        const double* bi = b + i * n;
        for (std::size_t l = 0; l < k; ++l) t.axpy(ai[l], bi, c + l * n, n);
    }
}

} // namespace prcaps::kernels
