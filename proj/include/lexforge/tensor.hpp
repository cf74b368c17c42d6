#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace lexforge {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major float64 tensor with an optional gradient accumulator of the
// same shape.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t size() const noexcept { return values_.size(); }
    std::size_t rank() const noexcept { return shape_.size(); }
    // Leading dimension and the product of the remaining ones.
    std::size_t rows() const noexcept;
    std::size_t cols() const noexcept;

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }
    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }
    double& at(std::size_t row, std::size_t col) { return values_[row * cols() + col]; }
    double at(std::size_t row, std::size_t col) const { return values_[row * cols() + col]; }

    bool requires_grad() const noexcept { return requires_grad_; }
    void set_requires_grad(bool on) noexcept { requires_grad_ = on; }

    bool has_grad() const noexcept { return grad_ready_; }
    // Allocates the accumulator (zeroed) on first use.
    std::span<double> grad();
    std::span<const double> grad() const { return grad_; }
    void zero_grad();
    void clear_grad() noexcept {
        grad_.clear();
        grad_.shrink_to_fit();
        grad_ready_ = false;
    }

    bool same_values(const Tensor& other) const noexcept {
        return shape_ == other.shape_ && values_ == other.values_;
    }

private:
    Shape shape_;
    std::vector<double> values_;
    std::vector<double> grad_;
    bool requires_grad_ = false;
    bool grad_ready_ = false;
};

}  // namespace lexforge
