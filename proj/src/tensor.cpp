#include "litho/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace litho {

namespace {

std::size_t checked_product(const std::vector<int>& shape) {
    if (shape.empty()) {
        throw std::invalid_argument("tensor shape must have at least one extent");
    }
    std::size_t n = 1;
    for (int e : shape) {
        if (e < 1) {
            throw std::invalid_argument("tensor extents must be >= 1");
        }
        n *= static_cast<std::size_t>(e);
    }
    return n;
}

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "x" : "") << shape[i];
    }
    return os.str();
}

}  // namespace

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)), data_(checked_product(shape_), 0.0) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_product(shape_) != data_.size()) {
        throw std::invalid_argument("tensor data length does not match shape " +
                                    shape_str(shape_));
    }
}

void Tensor::fill(double v) {
    std::fill(data_.begin(), data_.end(), v);
}

Tensor zeros_like(const Tensor& t) {
    return Tensor(t.shape());
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(what) + ": shape mismatch " +
                                    shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
}

}  // namespace litho
