#include "slimda/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "slimda/error.hpp"

namespace slimda {

namespace {

std::size_t element_count(const std::vector<std::size_t>& shape) {
    if (shape.empty() || shape.size() > 2) {
        throw ConfigError("tensor rank must be 1 or 2, got shape " + shape_string(shape));
    }
    for (auto d : shape) {
        if (d == 0) throw ConfigError("tensor dimensions must be positive: " + shape_string(shape));
    }
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

} // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (element_count(shape_) != data_.size()) {
        throw ConfigError("tensor data length " + std::to_string(data_.size()) +
                          " does not match shape " + shape_string(shape_));
    }
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw ConfigError("ragged rows in Tensor::from_rows");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::block(std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1) const {
    if (r0 >= r1 || c0 >= c1 || r1 > rows() || c1 > cols()) {
        throw ConfigError("block [" + std::to_string(r0) + "," + std::to_string(r1) + ")x[" +
                          std::to_string(c0) + "," + std::to_string(c1) + ") out of range for " +
                          shape_string(shape_));
    }
    Tensor out = Tensor::matrix(r1 - r0, c1 - c0);
    const std::size_t w = c1 - c0;
    for (std::size_t r = r0; r < r1; ++r) {
        std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(r * cols() + c0), w,
                    out.data_.begin() + static_cast<std::ptrdiff_t>((r - r0) * w));
    }
    return out;
}

Tensor Tensor::gather_rows(std::span<const std::size_t> indices) const {
    if (indices.empty()) throw ConfigError("gather_rows with no indices");
    Tensor out = Tensor::matrix(indices.size(), cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= rows()) throw ConfigError("gather_rows index out of range");
        auto src = row(indices[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

std::string shape_string(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw ConfigError(std::string(what) + ": shape mismatch " + shape_string(a.shape()) +
                          " vs " + shape_string(b.shape()));
    }
}

Tensor vstack(std::span<const Tensor> parts) {
    if (parts.empty()) throw ConfigError("vstack of nothing");
    const std::size_t c = parts.front().cols();
    std::size_t r = 0;
    for (const auto& p : parts) {
        if (p.cols() != c) throw ConfigError("vstack column mismatch");
        r += p.rows();
    }
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& p : parts) data.insert(data.end(), p.data().begin(), p.data().end());
    return Tensor({r, c}, std::move(data));
}

} // namespace slimda
