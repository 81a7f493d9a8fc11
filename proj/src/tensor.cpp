#include "skelimg/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "skelimg/error.hpp"

namespace skelimg {

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (element_count(shape_) != data_.size()) {
        throw Error(ErrorCode::shape_mismatch, "tensor of shape " + shape_string() + " cannot hold " +
                                                   std::to_string(data_.size()) + " values");
    }
}

std::span<double> Tensor::row(std::size_t i) {
    const std::size_t stride = shape_.empty() ? 0 : data_.size() / shape_[0];
    return std::span<double>(data_).subspan(i * stride, stride);
}

std::span<const double> Tensor::row(std::size_t i) const {
    const std::size_t stride = shape_.empty() ? 0 : data_.size() / shape_[0];
    return std::span<const double>(data_).subspan(i * stride, stride);
}

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_string() const {
    std::string s = "(";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape_[i]);
    }
    return s + ")";
}

}  // namespace skelimg
