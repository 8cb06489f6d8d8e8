// Compiled with -mavx2 -mfma; only reached through the dispatch table after a
// CPUID check, so no AVX2 instruction executes on older hardware.

#include "slimda/kernels.hpp"

#if defined(__x86_64__) || defined(__i386__)

#include <immintrin.h>

namespace slimda::kernels {

namespace {

inline double hsum(__m256d v) {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d s = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// c[r, j] += sum_q A(r, q) * b[q, j] where A(r, q) = a[r * a_rs + q * a_is].
// Register tile: 4 rows x 8 columns (8 accumulators), then 4 x 4, then a
// per-row vector/scalar tail.
void panel_gemm(std::size_t rows, std::size_t inner, std::size_t m, const double* a,
                std::size_t a_rs, std::size_t a_is, const double* b, double* c) {
    std::size_t r0 = 0;
    for (; r0 + 4 <= rows; r0 += 4) {
        const double* a0 = a + (r0 + 0) * a_rs;
        const double* a1 = a + (r0 + 1) * a_rs;
        const double* a2 = a + (r0 + 2) * a_rs;
        const double* a3 = a + (r0 + 3) * a_rs;
        double* c0 = c + (r0 + 0) * m;
        double* c1 = c + (r0 + 1) * m;
        double* c2 = c + (r0 + 2) * m;
        double* c3 = c + (r0 + 3) * m;
        std::size_t j = 0;
        for (; j + 8 <= m; j += 8) {
            __m256d x00 = _mm256_loadu_pd(c0 + j), x01 = _mm256_loadu_pd(c0 + j + 4);
            __m256d x10 = _mm256_loadu_pd(c1 + j), x11 = _mm256_loadu_pd(c1 + j + 4);
            __m256d x20 = _mm256_loadu_pd(c2 + j), x21 = _mm256_loadu_pd(c2 + j + 4);
            __m256d x30 = _mm256_loadu_pd(c3 + j), x31 = _mm256_loadu_pd(c3 + j + 4);
            for (std::size_t q = 0; q < inner; ++q) {
                const double* bq = b + q * m + j;
                const __m256d b0 = _mm256_loadu_pd(bq);
                const __m256d b1 = _mm256_loadu_pd(bq + 4);
                const std::size_t off = q * a_is;
                __m256d av = _mm256_broadcast_sd(a0 + off);
                x00 = _mm256_fmadd_pd(av, b0, x00);
                x01 = _mm256_fmadd_pd(av, b1, x01);
                av = _mm256_broadcast_sd(a1 + off);
                x10 = _mm256_fmadd_pd(av, b0, x10);
                x11 = _mm256_fmadd_pd(av, b1, x11);
                av = _mm256_broadcast_sd(a2 + off);
                x20 = _mm256_fmadd_pd(av, b0, x20);
                x21 = _mm256_fmadd_pd(av, b1, x21);
                av = _mm256_broadcast_sd(a3 + off);
                x30 = _mm256_fmadd_pd(av, b0, x30);
                x31 = _mm256_fmadd_pd(av, b1, x31);
            }
            _mm256_storeu_pd(c0 + j, x00), _mm256_storeu_pd(c0 + j + 4, x01);
            _mm256_storeu_pd(c1 + j, x10), _mm256_storeu_pd(c1 + j + 4, x11);
            _mm256_storeu_pd(c2 + j, x20), _mm256_storeu_pd(c2 + j + 4, x21);
            _mm256_storeu_pd(c3 + j, x30), _mm256_storeu_pd(c3 + j + 4, x31);
        }
        for (; j + 4 <= m; j += 4) {
            __m256d x0 = _mm256_loadu_pd(c0 + j), x1 = _mm256_loadu_pd(c1 + j);
            __m256d x2 = _mm256_loadu_pd(c2 + j), x3 = _mm256_loadu_pd(c3 + j);
            for (std::size_t q = 0; q < inner; ++q) {
                const __m256d bv = _mm256_loadu_pd(b + q * m + j);
                const std::size_t off = q * a_is;
                x0 = _mm256_fmadd_pd(_mm256_broadcast_sd(a0 + off), bv, x0);
                x1 = _mm256_fmadd_pd(_mm256_broadcast_sd(a1 + off), bv, x1);
                x2 = _mm256_fmadd_pd(_mm256_broadcast_sd(a2 + off), bv, x2);
                x3 = _mm256_fmadd_pd(_mm256_broadcast_sd(a3 + off), bv, x3);
            }
            _mm256_storeu_pd(c0 + j, x0), _mm256_storeu_pd(c1 + j, x1);
            _mm256_storeu_pd(c2 + j, x2), _mm256_storeu_pd(c3 + j, x3);
        }
        if (j < m) {
            for (std::size_t r = r0; r < r0 + 4; ++r) {
                double* cr = c + r * m;
                for (std::size_t q = 0; q < inner; ++q) {
                    const double arq = a[r * a_rs + q * a_is];
                    const double* bq = b + q * m;
                    for (std::size_t jj = j; jj < m; ++jj) cr[jj] += arq * bq[jj];
                }
            }
        }
    }
    for (std::size_t r = r0; r < rows; ++r) {
        double* cr = c + r * m;
        for (std::size_t q = 0; q < inner; ++q) {
            const double arq = a[r * a_rs + q * a_is];
            const __m256d av = _mm256_set1_pd(arq);
            const double* bq = b + q * m;
            std::size_t j = 0;
            for (; j + 4 <= m; j += 4) {
                _mm256_storeu_pd(cr + j, _mm256_fmadd_pd(av, _mm256_loadu_pd(bq + j),
                                                         _mm256_loadu_pd(cr + j)));
            }
            for (; j < m; ++j) cr[j] += arq * bq[j];
        }
    }
}

void gemm_nn_avx2(std::size_t n, std::size_t k, std::size_t m, const double* a, const double* b,
                  double* c) {
    panel_gemm(n, k, m, a, k, 1, b, c);
}

void gemm_tn_avx2(std::size_t n, std::size_t k, std::size_t m, const double* a, const double* g,
                  double* c) {
    panel_gemm(k, n, m, a, 1, k, g, c);
}

double dot_avx2(std::size_t n, const double* x, const double* y) {
    __m256d s0 = _mm256_setzero_pd();
    __m256d s1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
        s1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), s1);
    }
    for (; i + 4 <= n; i += 4) {
        s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
    }
    double acc = hsum(_mm256_add_pd(s0, s1));
    for (; i < n; ++i) acc += x[i] * y[i];
    return acc;
}

void gemm_nt_avx2(std::size_t n, std::size_t m, std::size_t k, const double* g, const double* b,
                  double* c) {
    for (std::size_t i = 0; i < n; ++i) {
        const double* gi = g + i * m;
        double* ci = c + i * k;
        for (std::size_t p = 0; p < k; ++p) ci[p] += dot_avx2(m, gi, b + p * m);
    }
}

void axpy_avx2(std::size_t n, double alpha, const double* x, double* y) {
    const __m256d av = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void momentum_update_avx2(std::size_t n, double mu, double lr, const double* g, double* v,
                          double* p) {
    const __m256d muv = _mm256_set1_pd(mu);
    const __m256d neg_lr = _mm256_set1_pd(-lr);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d vv = _mm256_fmadd_pd(muv, _mm256_loadu_pd(v + i), _mm256_loadu_pd(g + i));
        _mm256_storeu_pd(v + i, vv);
        _mm256_storeu_pd(p + i, _mm256_fmadd_pd(neg_lr, vv, _mm256_loadu_pd(p + i)));
    }
    for (; i < n; ++i) {
        v[i] = mu * v[i] + g[i];
        p[i] -= lr * v[i];
    }
}

constexpr KernelTable kAvx2{
    Backend::Avx2, gemm_nn_avx2, gemm_tn_avx2,        gemm_nt_avx2,
    axpy_avx2,     dot_avx2,     momentum_update_avx2,
};

} // namespace

const KernelTable& detail::make_avx2_table() noexcept { return kAvx2; }

} // namespace slimda::kernels

#else

namespace slimda::kernels {
// Non-x86 builds never report AVX2 support; fall back to the reference table.
const KernelTable& detail::make_avx2_table() noexcept { return scalar_table(); }
} // namespace slimda::kernels

#endif
