#pragma once

// Independent reference implementations used as test oracles. Nothing in
// here calls the autodiff engine or the SIMD kernels: forward passes are
// plain triple loops over element-wise copies of the parameters.

#include <cmath>
#include <functional>
#include <vector>

#include "slimda/autodiff.hpp"
#include "slimda/rng.hpp"
#include "slimda/slimnet.hpp"
#include "slimda/tensor.hpp"

namespace oracle {

using slimda::Tensor;
using Matrix = std::vector<std::vector<double>>;

inline Tensor random_matrix(slimda::Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
    Tensor t = Tensor::matrix(r, c);
    for (auto& v : t.data()) v = scale * slimda::standard_normal(rng);
    return t;
}

inline Matrix to_matrix(const Tensor& t) {
    Matrix m(t.rows(), std::vector<double>(t.cols()));
    for (std::size_t r = 0; r < t.rows(); ++r)
        for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t.data()[r * t.cols() + c];
    return m;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

inline double max_abs_diff(const Matrix& a, const Tensor& b) {
    double d = 0.0;
    for (std::size_t r = 0; r < a.size(); ++r)
        for (std::size_t c = 0; c < a[r].size(); ++c) d = std::max(d, std::abs(a[r][c] - b.at(r, c)));
    return d;
}

inline double max_abs(const Tensor& a) {
    double m = 0.0;
    for (double v : a.data()) m = std::max(m, std::abs(v));
    return m;
}

/// Central finite differences of f with respect to every entry of x.
inline Tensor numeric_grad(const std::function<double()>& f, Tensor& x, double h = 1e-6) {
    Tensor g(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = f();
        x[i] = keep - h;
        const double down = f();
        x[i] = keep;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

/// ||a - n|| / max(||a|| + ||n||, floor): the usual gradient-check ratio.
/// The floor keeps structurally zero gradients (for example gamma of a
/// batchnorm feeding another batchnorm) from turning differencing noise of
/// about 1e-10 into a ratio near 1.
inline double gradient_rel_error(const Tensor& analytic, const Tensor& numeric, double floor = 1e-5) {
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
        na += analytic[i] * analytic[i];
        nn += numeric[i] * numeric[i];
    }
    return std::sqrt(diff) / std::max(std::sqrt(na) + std::sqrt(nn), floor);
}

inline Matrix softmax_rows(const Matrix& z) {
    Matrix p = z;
    for (auto& row : p) {
        double mx = row[0];
        for (double v : row) mx = std::max(mx, v);
        double s = 0.0;
        for (double& v : row) s += (v = std::exp(v - mx));
        for (double& v : row) v /= s;
    }
    return p;
}

/// A width-sliced network copied entry by entry out of the store.
struct PlainNet {
    struct Layer {
        Matrix w;
        std::vector<double> b, gamma, beta;
    };
    std::vector<Layer> layers;
    Matrix head[3];
    std::vector<double> head_bias[3];
};

inline PlainNet copy_network(const slimda::ParamStore& store, const slimda::WidthConfig& config) {
    const auto& arch = store.architecture();
    PlainNet net;
    std::size_t in = arch.input_dim;
    for (const auto& slot : store.layers()) {
        const std::size_t out = config.width(slot.block);
        PlainNet::Layer L;
        const Tensor& w = store.value(slot.weight);
        L.w.assign(in, std::vector<double>(out));
        for (std::size_t i = 0; i < in; ++i)
            for (std::size_t j = 0; j < out; ++j) L.w[i][j] = w.data()[i * w.cols() + j];
        for (std::size_t j = 0; j < out; ++j) {
            L.b.push_back(store.value(slot.bias).data()[j]);
            L.gamma.push_back(store.value(slot.gamma).data()[j]);
            L.beta.push_back(store.value(slot.beta).data()[j]);
        }
        net.layers.push_back(std::move(L));
        in = out;
    }
    for (int h = 0; h < 3; ++h) {
        const auto& slots = store.head(static_cast<slimda::Head>(h));
        const Tensor& w = store.value(slots.weight);
        net.head[h].assign(in, std::vector<double>(arch.class_count));
        for (std::size_t i = 0; i < in; ++i)
            for (std::size_t k = 0; k < arch.class_count; ++k) net.head[h][i][k] = w.data()[i * w.cols() + k];
        for (std::size_t k = 0; k < arch.class_count; ++k) net.head_bias[h].push_back(store.value(slots.bias).data()[k]);
    }
    return net;
}

inline Matrix affine(const Matrix& x, const Matrix& w, const std::vector<double>& b) {
    Matrix y(x.size(), std::vector<double>(b.size()));
    for (std::size_t r = 0; r < x.size(); ++r)
        for (std::size_t j = 0; j < b.size(); ++j) {
            double s = b[j];
            for (std::size_t i = 0; i < w.size(); ++i) s += x[r][i] * w[i][j];
            y[r][j] = s;
        }
    return y;
}

struct PlainStats {
    std::vector<std::vector<double>> mean, var;
};

/// Forward through the copied network. With `stats` == nullptr BN uses the
/// batch statistics (biased variance); `collect` receives the per-layer
/// batch statistics.
inline Matrix plain_features(const PlainNet& net, Matrix h, const PlainStats* stats = nullptr,
                             PlainStats* collect = nullptr) {
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const auto& L = net.layers[l];
        Matrix z = affine(h, L.w, L.b);
        const std::size_t n = z.size(), m = L.b.size();
        std::vector<double> mean(m, 0.0), var(m, 0.0);
        if (stats) {
            mean = stats->mean[l];
            var = stats->var[l];
        } else {
            for (const auto& row : z)
                for (std::size_t j = 0; j < m; ++j) mean[j] += row[j] / static_cast<double>(n);
            for (const auto& row : z)
                for (std::size_t j = 0; j < m; ++j) var[j] += (row[j] - mean[j]) * (row[j] - mean[j]) / static_cast<double>(n);
        }
        if (collect) {
            collect->mean.push_back(mean);
            collect->var.push_back(var);
        }
        for (auto& row : z)
            for (std::size_t j = 0; j < m; ++j) {
                const double v = (row[j] - mean[j]) / std::sqrt(var[j] + 1e-5) * L.gamma[j] + L.beta[j];
                row[j] = v > 0.0 ? v : 0.0;
            }
        h = std::move(z);
    }
    return h;
}

inline Matrix plain_logits(const PlainNet& net, const Matrix& features, slimda::Head head) {
    const int h = static_cast<int>(head);
    return affine(features, net.head[h], net.head_bias[h]);
}

/// Row entropy -sum p log p.
inline double entropy(std::span<const double> p) {
    double h = 0.0;
    for (double v : p)
        if (v > 0.0) h -= v * std::log(v);
    return h;
}

} // namespace oracle
