#include "slimda/kernels.hpp"

namespace slimda::kernels {

namespace {

void gemm_nn_scalar(std::size_t n, std::size_t k, std::size_t m, const double* a, const double* b,
                    double* c) {
    for (std::size_t i = 0; i < n; ++i) {
        double* ci = c + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a[i * k + p];
            const double* bp = b + p * m;
            for (std::size_t j = 0; j < m; ++j) ci[j] += aip * bp[j];
        }
    }
}

void gemm_tn_scalar(std::size_t n, std::size_t k, std::size_t m, const double* a, const double* g,
                    double* c) {
    for (std::size_t i = 0; i < n; ++i) {
        const double* gi = g + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a[i * k + p];
            double* cp = c + p * m;
            for (std::size_t j = 0; j < m; ++j) cp[j] += aip * gi[j];
        }
    }
}

void gemm_nt_scalar(std::size_t n, std::size_t m, std::size_t k, const double* g, const double* b,
                    double* c) {
    for (std::size_t i = 0; i < n; ++i) {
        const double* gi = g + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double* bp = b + p * m;
            double acc = 0.0;
            for (std::size_t j = 0; j < m; ++j) acc += gi[j] * bp[j];
            c[i * k + p] += acc;
        }
    }
}

void axpy_scalar(std::size_t n, double alpha, const double* x, double* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double dot_scalar(std::size_t n, const double* x, const double* y) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
    return acc;
}

void momentum_update_scalar(std::size_t n, double mu, double lr, const double* g, double* v,
                            double* p) {
    for (std::size_t i = 0; i < n; ++i) {
        v[i] = mu * v[i] + g[i];
        p[i] -= lr * v[i];
    }
}

constexpr KernelTable kScalar{
    Backend::Scalar, gemm_nn_scalar, gemm_tn_scalar,        gemm_nt_scalar,
    axpy_scalar,     dot_scalar,     momentum_update_scalar,
};

} // namespace

const KernelTable& scalar_table() noexcept { return kScalar; }

} // namespace slimda::kernels
