#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "llie/errors.hpp"

namespace llie {

/// Dimensions of a rank-4 (batch, channels, height, width) array.
struct Shape {
    int n = 0;
    int c = 0;
    int h = 0;
    int w = 0;

    std::size_t numel() const {
        return static_cast<std::size_t>(n) * c * h * w;
    }
    std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

/// Dense NCHW array of doubles. Every tensor in the framework is rank 4;
/// vectors and scalars use trailing unit dimensions.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor scalar(double v) { return Tensor({1, 1, 1, 1}, v); }

    const Shape& shape() const { return shape_; }
    int n() const { return shape_.n; }
    int c() const { return shape_.c; }
    int h() const { return shape_.h; }
    int w() const { return shape_.w; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    std::size_t index(int n, int c, int y, int x) const {
        return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
    }
    double& at(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
    double at(int n, int c, int y, int x) const { return data_[index(n, c, y, x)]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    /// Contiguous C*H*W block of one batch item.
    std::span<double> sample(int n);
    std::span<const double> sample(int n) const;
    /// Contiguous H*W block of one (batch, channel) slice.
    std::span<double> channel(int n, int c);
    std::span<const double> channel(int n, int c) const;

    double item() const;
    void fill(double v);
    bool all_finite() const;

    /// Copies batch items [first, first+count) into a new tensor.
    Tensor slice_batch(int first, int count) const;
    static Tensor stack_batch(std::span<const Tensor> items);

private:
    Shape shape_;
    std::vector<double> data_;
};

/// Throws UsageError with `what` when shapes differ.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

/// Throws CorruptStateError when any element is NaN or infinite.
void require_finite(const Tensor& t, const char* what);

}  // namespace llie
