#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace prcaps::kernels {

// Flat double-precision kernels behind the tensor and geometry code.
// A scalar reference implementation always exists; vectorized variants
// (AVX2 on x86-64, NEON on aarch64) are selected once at startup based on
// CPU capability, overridable with PRCAPS_KERNELS=scalar|avx2|neon.
struct Ops {
    double (*dot)(const double* a, const double* b, std::size_t n);
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n); // y += alpha * x
    void (*scale)(double alpha, double* x, std::size_t n);                 // x *= alpha
    void (*add)(const double* a, const double* b, double* out, std::size_t n);
    void (*sub)(const double* a, const double* b, double* out, std::size_t n);
    void (*mul)(const double* a, const double* b, double* out, std::size_t n);
    double (*sum)(const double* a, std::size_t n);
};

enum class Backend { Scalar, Avx2, Neon };

const char* backend_name(Backend b);

// Backends compiled into this binary and usable on this CPU.
std::vector<Backend> available_backends();

// The dispatched table (selected once, then immutable).
const Ops& ops();
Backend active_backend();

// Direct access for equivalence tests.
const Ops& ops_for(Backend b);

// Small dense helpers built on the dispatched kernels.
// Row-major throughout.
// C[m,n] = A[m,k] * B[n,k]^T
void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n);
// C[m,n] = A[m,k] * B[k,n]
void matmul_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n);
// C[k,n] += A[m,k]^T * B[m,n]
void matmul_tn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                   std::size_t n);

} // namespace prcaps::kernels
