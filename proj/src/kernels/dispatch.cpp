#include <atomic>
#include <cstdlib>
#include <string>

#include "slimda/error.hpp"
#include "slimda/kernels.hpp"

namespace slimda::kernels {

namespace {

bool cpu_has_avx2() noexcept {
#if defined(__x86_64__) || defined(__i386__)
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const KernelTable* initial_table() noexcept {
    const bool has_avx2 = cpu_has_avx2();
    if (const char* env = std::getenv("SLIMDA_KERNELS")) {
        const std::string choice(env);
        if (choice == "scalar") return &scalar_table();
        if (choice == "avx2" && has_avx2) return &detail::make_avx2_table();
    }
    return has_avx2 ? &detail::make_avx2_table() : &scalar_table();
}

std::atomic<const KernelTable*>& current() noexcept {
    static std::atomic<const KernelTable*> table{initial_table()};
    return table;
}

void require(bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("kernel size mismatch: ") + what);
}

} // namespace

bool avx2_supported() noexcept {
    static const bool has = cpu_has_avx2();
    return has;
}

const KernelTable& avx2_table() noexcept { return detail::make_avx2_table(); }

Backend active_backend() noexcept { return active().backend; }

void set_backend(Backend b) {
    if (b == Backend::Avx2 && !avx2_supported()) {
        throw UsageError("AVX2/FMA kernels requested on a CPU without support");
    }
    current().store(b == Backend::Avx2 ? &avx2_table() : &scalar_table());
}

std::string_view backend_name(Backend b) noexcept {
    return b == Backend::Avx2 ? "avx2" : "scalar";
}

const KernelTable& active() noexcept { return *current().load(std::memory_order_relaxed); }

void gemm_nn(std::size_t n, std::size_t k, std::size_t m, std::span<const double> a,
             std::span<const double> b, std::span<double> c) {
    require(a.size() == n * k && b.size() == k * m && c.size() == n * m, "gemm_nn");
    active().gemm_nn(n, k, m, a.data(), b.data(), c.data());
}

void gemm_tn(std::size_t n, std::size_t k, std::size_t m, std::span<const double> a,
             std::span<const double> g, std::span<double> c) {
    require(a.size() == n * k && g.size() == n * m && c.size() == k * m, "gemm_tn");
    active().gemm_tn(n, k, m, a.data(), g.data(), c.data());
}

void gemm_nt(std::size_t n, std::size_t m, std::size_t k, std::span<const double> g,
             std::span<const double> b, std::span<double> c) {
    require(g.size() == n * m && b.size() == k * m && c.size() == n * k, "gemm_nt");
    active().gemm_nt(n, m, k, g.data(), b.data(), c.data());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    require(x.size() == y.size(), "axpy");
    active().axpy(x.size(), alpha, x.data(), y.data());
}

double dot(std::span<const double> x, std::span<const double> y) {
    require(x.size() == y.size(), "dot");
    return active().dot(x.size(), x.data(), y.data());
}

void momentum_update(double mu, double lr, std::span<const double> g, std::span<double> v,
                     std::span<double> p) {
    require(g.size() == v.size() && v.size() == p.size(), "momentum_update");
    active().momentum_update(g.size(), mu, lr, g.data(), v.data(), p.data());
}

} // namespace slimda::kernels
