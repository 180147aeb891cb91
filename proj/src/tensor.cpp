#include "llie/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace llie {

std::string Shape::str() const {
    std::ostringstream os;
    os << "(" << n << "," << c << "," << h << "," << w << ")";
    return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape), data_(shape.numel(), fill) {
    if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
        throw UsageError("negative tensor dimension " + shape.str());
    }
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(shape), data_(std::move(values)) {
    if (data_.size() != shape.numel()) {
        throw UsageError("tensor value count does not match shape " + shape.str());
    }
}

std::span<double> Tensor::sample(int n) {
    const std::size_t len = static_cast<std::size_t>(shape_.c) * shape_.plane();
    return {data_.data() + n * len, len};
}

std::span<const double> Tensor::sample(int n) const {
    const std::size_t len = static_cast<std::size_t>(shape_.c) * shape_.plane();
    return {data_.data() + n * len, len};
}

std::span<double> Tensor::channel(int n, int c) {
    return {data_.data() + index(n, c, 0, 0), shape_.plane()};
}

std::span<const double> Tensor::channel(int n, int c) const {
    return {data_.data() + index(n, c, 0, 0), shape_.plane()};
}

double Tensor::item() const {
    if (data_.size() != 1) {
        throw UsageError("item() on tensor of shape " + shape_.str());
    }
    return data_[0];
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor Tensor::slice_batch(int first, int count) const {
    if (first < 0 || count < 0 || first + count > shape_.n) {
        throw UsageError("batch slice out of range for " + shape_.str());
    }
    Shape s = shape_;
    s.n = count;
    Tensor out(s);
    const std::size_t len = static_cast<std::size_t>(shape_.c) * shape_.plane();
    std::copy_n(data_.begin() + first * len, count * len, out.data_.begin());
    return out;
}

Tensor Tensor::stack_batch(std::span<const Tensor> items) {
    if (items.empty()) {
        throw UsageError("stack_batch of zero tensors");
    }
    Shape s = items.front().shape();
    int total = 0;
    for (const auto& t : items) {
        if (t.c() != s.c || t.h() != s.h || t.w() != s.w) {
            throw UsageError("stack_batch shape mismatch " + t.shape().str() + " vs " + s.str());
        }
        total += t.n();
    }
    s.n = total;
    Tensor out(s);
    auto it = out.data_.begin();
    for (const auto& t : items) {
        it = std::copy(t.data_.begin(), t.data_.end(), it);
    }
    return out;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw UsageError(std::string(what) + ": shape mismatch " + a.shape().str() + " vs " +
                         b.shape().str());
    }
}

void require_finite(const Tensor& t, const char* what) {
    if (!t.all_finite()) {
        throw CorruptStateError(std::string(what) + ": non-finite values in input");
    }
}

}  // namespace llie
