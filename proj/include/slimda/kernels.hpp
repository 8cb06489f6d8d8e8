#pragma once

// Dense inner-loop kernels with a scalar reference and an AVX2/FMA variant.
// The variant is chosen once at startup from CPUID (overridable with the
// SLIMDA_KERNELS=scalar|avx2 environment variable or set_backend()).
// All matrices are row-major and every kernel accumulates into its output.

#include <cstddef>
#include <span>
#include <string_view>

namespace slimda::kernels {

enum class Backend { Scalar, Avx2 };

struct KernelTable {
    Backend backend;
    // c[n x m] += a[n x k] * b[k x m]
    void (*gemm_nn)(std::size_t n, std::size_t k, std::size_t m, const double* a, const double* b,
                    double* c);
    // c[k x m] += a[n x k]^T * g[n x m]
    void (*gemm_tn)(std::size_t n, std::size_t k, std::size_t m, const double* a, const double* g,
                    double* c);
    // c[n x k] += g[n x m] * b[k x m]^T
    void (*gemm_nt)(std::size_t n, std::size_t m, std::size_t k, const double* g, const double* b,
                    double* c);
    // y += alpha * x
    void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
    double (*dot)(std::size_t n, const double* x, const double* y);
    // v = mu * v + g; p -= lr * v
    void (*momentum_update)(std::size_t n, double mu, double lr, const double* g, double* v,
                            double* p);
};

const KernelTable& scalar_table() noexcept;
/// Only callable when avx2_supported().
const KernelTable& avx2_table() noexcept;

bool avx2_supported() noexcept;
Backend active_backend() noexcept;
/// Throws UsageError if the backend is not supported on this CPU.
void set_backend(Backend b);
std::string_view backend_name(Backend b) noexcept;

const KernelTable& active() noexcept;

// Span-facing wrappers around the active table; they validate sizes.

void gemm_nn(std::size_t n, std::size_t k, std::size_t m, std::span<const double> a,
             std::span<const double> b, std::span<double> c);
void gemm_tn(std::size_t n, std::size_t k, std::size_t m, std::span<const double> a,
             std::span<const double> g, std::span<double> c);
void gemm_nt(std::size_t n, std::size_t m, std::size_t k, std::span<const double> g,
             std::span<const double> b, std::span<double> c);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
double dot(std::span<const double> x, std::span<const double> y);
void momentum_update(double mu, double lr, std::span<const double> g, std::span<double> v,
                     std::span<double> p);

namespace detail {
// Implemented in kernels_avx2.cpp, compiled with -mavx2 -mfma.
const KernelTable& make_avx2_table() noexcept;
} // namespace detail

} // namespace slimda::kernels
