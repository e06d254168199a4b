#pragma once

#include <cstddef>
#include <vector>

#include "litho/tensor.hpp"

namespace litho {

/// 2-D cross-correlation of a CxHxW input with out_ch x in_ch x 3x3 weights
/// plus a per-output-channel bias. Output extents follow
/// H' = (H + 2*padding - 3) / stride + 1 (floor), likewise W'.
Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias,
              int padding, int stride);

struct Conv2dGrads {
    Tensor input;
    Tensor weights;
    Tensor bias;
};

/// Analytic gradients of a scalar loss through conv2d.
Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& weights,
                            const Tensor& grad_out, int padding, int stride);

struct MaxPoolResult {
    Tensor output;
    // winning flat input index per output cell, for backward routing
    std::vector<std::size_t> argmax;
};

/// Channel-wise max pooling. Ties go to the first cell in row-major scan.
MaxPoolResult maxpool2d(const Tensor& input, int window = 2, int stride = 2);

Tensor maxpool2d_backward(const std::vector<std::size_t>& argmax,
                          const std::vector<int>& input_shape,
                          const Tensor& grad_out);

/// h = x W + b with x of length N, W of shape NxM, b of length M.
Tensor matmul_affine(const Tensor& input, const Tensor& weights, const Tensor& bias);

struct AffineGrads {
    Tensor input;
    Tensor weights;
    Tensor bias;
};

AffineGrads matmul_affine_backward(const Tensor& input, const Tensor& weights,
                                   const Tensor& grad_out);

Tensor relu(const Tensor& input);
Tensor relu_backward(const Tensor& input, const Tensor& grad_out);

/// Numerically stable softmax. Rank-1 tensors are one distribution; rank-2
/// tensors are treated as rows of independent distributions over the last
/// axis.
Tensor softmax(const Tensor& input);

Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

}  // namespace litho
