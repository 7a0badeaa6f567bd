#include "rca/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>

namespace rca {

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
    for (auto extent : shape_)
        if (extent == 0) throw std::invalid_argument("tensor extents must be positive");
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    for (auto extent : shape_)
        if (extent == 0) throw std::invalid_argument("tensor extents must be positive");
    if (data_.size() != shape_size(shape_))
        throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                    " does not match shape " + shape_string(shape_));
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
    return Tensor({rows, cols}, std::vector<double>(values));
}

Tensor Tensor::row_vector(std::initializer_list<double> values) {
    return Tensor({1, values.size()}, std::vector<double>(values));
}

std::size_t Tensor::rows() const {
    switch (shape_.size()) {
        case 0:
        case 1: return 1;
        case 2: return shape_[0];
        default: throw std::logic_error("rank " + std::to_string(shape_.size()) + " tensor used as matrix");
    }
}

std::size_t Tensor::cols() const {
    switch (shape_.size()) {
        case 0: return 1;
        case 1: return shape_[0];
        case 2: return shape_[1];
        default: throw std::logic_error("rank " + std::to_string(shape_.size()) + " tensor used as matrix");
    }
}

std::span<double> Tensor::row(std::size_t r) {
    const auto c = cols();
    return std::span<double>(data_).subspan(r * c, c);
}

std::span<const double> Tensor::row(std::size_t r) const {
    const auto c = cols();
    return std::span<const double>(data_).subspan(r * c, c);
}

double Tensor::item() const {
    if (data_.size() != 1)
        throw std::logic_error("item() on tensor of shape " + shape_string(shape_));
    return data_[0];
}

Tensor Tensor::gather_rows(std::span<const std::size_t> indices) const {
    const auto c = cols();
    std::vector<double> out;
    out.reserve(indices.size() * c);
    for (auto idx : indices) {
        if (idx >= rows()) throw std::out_of_range("gather_rows index out of range");
        auto src = row(idx);
        out.insert(out.end(), src.begin(), src.end());
    }
    return Tensor({indices.size(), c}, std::move(out));
}

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.size() != b.size()) throw std::invalid_argument("max_abs_diff: size mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst;
}

}  // namespace rca
