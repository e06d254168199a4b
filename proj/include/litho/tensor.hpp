#pragma once

#include <cstddef>
#include <vector>

namespace litho {

/// Dense row-major tensor of 64-bit floats.
///
/// Activations use a channels x height x width layout; convolution weights
/// use out_channels x in_channels x kernel_h x kernel_w. Every extent must
/// be >= 1 and the flat buffer length always equals the shape product.
class Tensor {
public:
    Tensor() = default;

    /// Zero-filled tensor of the given shape.
    explicit Tensor(std::vector<int> shape);

    /// Tensor wrapping an existing flat buffer; length must match the shape.
    Tensor(std::vector<int> shape, std::vector<double> data);

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int extent(int axis) const { return shape_[static_cast<std::size_t>(axis)]; }
    std::size_t size() const { return data_.size(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& buffer() { return data_; }
    const std::vector<double>& buffer() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // rank-3 accessors (c, h, w)
    double& at(int c, int h, int w) {
        return data_[flat3(c, h, w)];
    }
    double at(int c, int h, int w) const {
        return data_[flat3(c, h, w)];
    }

    void fill(double v);
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

private:
    std::size_t flat3(int c, int h, int w) const {
        return (static_cast<std::size_t>(c) * shape_[1] + h) * shape_[2] + w;
    }

    std::vector<int> shape_;
    std::vector<double> data_;
};

Tensor zeros_like(const Tensor& t);

/// Throws std::invalid_argument when the shapes differ; `what` names the
/// operands in the message.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace litho
