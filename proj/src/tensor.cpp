#include "lexforge/tensor.hpp"

#include "lexforge/errors.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

namespace lexforge {

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) out += ", ";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), values_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), values_(std::move(values)) {
    if (values_.size() != shape_size(shape_)) {
        throw Error(ErrorCode::ShapeError, std::to_string(values_.size()) + " values do not fill shape " +
                                               shape_string(shape_));
    }
}

std::size_t Tensor::rows() const noexcept {
    return shape_.empty() ? 1 : shape_.front();
}

std::size_t Tensor::cols() const noexcept {
    if (shape_.empty()) return 1;
    return shape_.front() == 0 ? 0 : values_.size() / shape_.front();
}

std::span<double> Tensor::grad() {
    if (!grad_ready_) {
        grad_.assign(values_.size(), 0.0);
        grad_ready_ = true;
    }
    return grad_;
}

void Tensor::zero_grad() {
    grad_.assign(values_.size(), 0.0);
    grad_ready_ = true;
}

}  // namespace lexforge
