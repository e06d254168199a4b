#include "litho/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace litho {

namespace {

constexpr int kKernel = 3;

// ceil(a / b) for b > 0, exact for negative a
int ceil_div(int a, int b) {
    return a > 0 ? (a + b - 1) / b : a / b;
}

void check_conv_args(const Tensor& input, const Tensor& weights, const Tensor& bias,
                     int padding, int stride) {
    if (input.rank() != 3) {
        throw std::invalid_argument("conv2d: input must be CxHxW");
    }
    if (weights.rank() != 4 || weights.extent(2) != kKernel || weights.extent(3) != kKernel) {
        throw std::invalid_argument("conv2d: weights must be out_ch x in_ch x 3x3");
    }
    if (weights.extent(1) != input.extent(0)) {
        throw std::invalid_argument(
            "conv2d: input has " + std::to_string(input.extent(0)) +
            " channels but weights expect " + std::to_string(weights.extent(1)));
    }
    if (bias.rank() != 1 || bias.extent(0) != weights.extent(0)) {
        throw std::invalid_argument("conv2d: bias length must equal output channel count");
    }
    if (padding < 0 || stride < 1) {
        throw std::invalid_argument("conv2d: padding must be >= 0 and stride >= 1");
    }
    if (input.extent(1) + 2 * padding < kKernel || input.extent(2) + 2 * padding < kKernel) {
        throw std::invalid_argument("conv2d: padded input smaller than the 3x3 kernel");
    }
}

struct ConvGeom {
    int cin, cout, h, w, oh, ow;
};

ConvGeom conv_geometry(const Tensor& input, const Tensor& weights, int padding, int stride) {
    ConvGeom g;
    g.cin = input.extent(0);
    g.h = input.extent(1);
    g.w = input.extent(2);
    g.cout = weights.extent(0);
    g.oh = (g.h + 2 * padding - kKernel) / stride + 1;
    g.ow = (g.w + 2 * padding - kKernel) / stride + 1;
    return g;
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias,
              int padding, int stride) {
    check_conv_args(input, weights, bias, padding, stride);
    const ConvGeom g = conv_geometry(input, weights, padding, stride);

    Tensor out({g.cout, g.oh, g.ow});
    const double* in = input.data();
    const double* w = weights.data();
    double* o = out.data();

    for (int oc = 0; oc < g.cout; ++oc) {
        double* oplane = o + static_cast<std::size_t>(oc) * g.oh * g.ow;
        const double b = bias[static_cast<std::size_t>(oc)];
        std::fill(oplane, oplane + static_cast<std::size_t>(g.oh) * g.ow, b);

        for (int ic = 0; ic < g.cin; ++ic) {
            const double* iplane = in + static_cast<std::size_t>(ic) * g.h * g.w;
            const double* wk = w + (static_cast<std::size_t>(oc) * g.cin + ic) * kKernel * kKernel;
            for (int kh = 0; kh < kKernel; ++kh) {
                for (int kw = 0; kw < kKernel; ++kw) {
                    const double wv = wk[kh * kKernel + kw];
                    // valid output rows: 0 <= oh*stride + kh - padding < h
                    const int oh0 = std::max(0, ceil_div(padding - kh, stride));
                    const int oh1 = std::min(g.oh, (g.h - 1 - kh + padding) / stride + 1);
                    const int ow0 = std::max(0, ceil_div(padding - kw, stride));
                    const int ow1 = std::min(g.ow, (g.w - 1 - kw + padding) / stride + 1);
                    for (int oh = oh0; oh < oh1; ++oh) {
                        const int ih = oh * stride + kh - padding;
                        const double* irow = iplane + static_cast<std::size_t>(ih) * g.w;
                        double* orow = oplane + static_cast<std::size_t>(oh) * g.ow;
                        if (stride == 1) {
                            const double* ip = irow + kw - padding;
                            for (int ow = ow0; ow < ow1; ++ow) {
                                orow[ow] += wv * ip[ow];
                            }
                        } else {
                            for (int ow = ow0; ow < ow1; ++ow) {
                                orow[ow] += wv * irow[ow * stride + kw - padding];
                            }
                        }
                    }
                }
            }
        }
    }
    return out;
}

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& weights,
                            const Tensor& grad_out, int padding, int stride) {
    // bias shape is implied by the weights; synthesize it for the arg check
    Tensor bias({weights.extent(0)});
    check_conv_args(input, weights, bias, padding, stride);
    const ConvGeom g = conv_geometry(input, weights, padding, stride);
    if (grad_out.rank() != 3 || grad_out.extent(0) != g.cout ||
        grad_out.extent(1) != g.oh || grad_out.extent(2) != g.ow) {
        throw std::invalid_argument("conv2d_backward: grad_out shape does not match conv output");
    }

    Conv2dGrads grads{zeros_like(input), zeros_like(weights), Tensor({g.cout})};
    const double* in = input.data();
    const double* w = weights.data();
    const double* go = grad_out.data();
    double* gi = grads.input.data();
    double* gw = grads.weights.data();

    for (int oc = 0; oc < g.cout; ++oc) {
        const double* goplane = go + static_cast<std::size_t>(oc) * g.oh * g.ow;

        double bsum = 0.0;
        for (std::size_t i = 0; i < static_cast<std::size_t>(g.oh) * g.ow; ++i) {
            bsum += goplane[i];
        }
        grads.bias[static_cast<std::size_t>(oc)] = bsum;

        for (int ic = 0; ic < g.cin; ++ic) {
            const double* iplane = in + static_cast<std::size_t>(ic) * g.h * g.w;
            double* giplane = gi + static_cast<std::size_t>(ic) * g.h * g.w;
            const double* wk = w + (static_cast<std::size_t>(oc) * g.cin + ic) * kKernel * kKernel;
            double* gwk = gw + (static_cast<std::size_t>(oc) * g.cin + ic) * kKernel * kKernel;

            for (int kh = 0; kh < kKernel; ++kh) {
                for (int kw = 0; kw < kKernel; ++kw) {
                    const double wv = wk[kh * kKernel + kw];
                    double wgrad = 0.0;
                    const int oh0 = std::max(0, ceil_div(padding - kh, stride));
                    const int oh1 = std::min(g.oh, (g.h - 1 - kh + padding) / stride + 1);
                    const int ow0 = std::max(0, ceil_div(padding - kw, stride));
                    const int ow1 = std::min(g.ow, (g.w - 1 - kw + padding) / stride + 1);
                    for (int oh = oh0; oh < oh1; ++oh) {
                        const int ih = oh * stride + kh - padding;
                        const double* irow = iplane + static_cast<std::size_t>(ih) * g.w;
                        double* girow = giplane + static_cast<std::size_t>(ih) * g.w;
                        const double* gorow = goplane + static_cast<std::size_t>(oh) * g.ow;
                        if (stride == 1) {
                            const int off = kw - padding;
                            for (int ow = ow0; ow < ow1; ++ow) {
                                wgrad += gorow[ow] * irow[ow + off];
                                girow[ow + off] += gorow[ow] * wv;
                            }
                        } else {
                            for (int ow = ow0; ow < ow1; ++ow) {
                                const int iw = ow * stride + kw - padding;
                                wgrad += gorow[ow] * irow[iw];
                                girow[iw] += gorow[ow] * wv;
                            }
                        }
                    }
                    gwk[kh * kKernel + kw] += wgrad;
                }
            }
        }
    }
    return grads;
}

MaxPoolResult maxpool2d(const Tensor& input, int window, int stride) {
    if (input.rank() != 3) {
        throw std::invalid_argument("maxpool2d: input must be CxHxW");
    }
    if (window < 1 || stride < 1) {
        throw std::invalid_argument("maxpool2d: window and stride must be >= 1");
    }
    const int c = input.extent(0), h = input.extent(1), w = input.extent(2);
    if (h < window || w < window) {
        throw std::invalid_argument("maxpool2d: input " + std::to_string(h) + "x" +
                                    std::to_string(w) + " smaller than window " +
                                    std::to_string(window));
    }
    const int oh = (h - window) / stride + 1;
    const int ow = (w - window) / stride + 1;

    MaxPoolResult res{Tensor({c, oh, ow}), {}};
    res.argmax.resize(static_cast<std::size_t>(c) * oh * ow);
    const double* in = input.data();
    double* out = res.output.data();

    std::size_t oi = 0;
    for (int ch = 0; ch < c; ++ch) {
        const std::size_t plane = static_cast<std::size_t>(ch) * h * w;
        for (int y = 0; y < oh; ++y) {
            for (int x = 0; x < ow; ++x, ++oi) {
                const int y0 = y * stride, x0 = x * stride;
                double best = in[plane + static_cast<std::size_t>(y0) * w + x0];
                std::size_t best_idx = plane + static_cast<std::size_t>(y0) * w + x0;
                for (int dy = 0; dy < window; ++dy) {
                    const std::size_t row = plane + static_cast<std::size_t>(y0 + dy) * w;
                    for (int dx = 0; dx < window; ++dx) {
                        const double v = in[row + x0 + dx];
                        if (v > best) {  // strict: first occurrence wins ties
                            best = v;
                            best_idx = row + x0 + dx;
                        }
                    }
                }
                out[oi] = best;
                res.argmax[oi] = best_idx;
            }
        }
    }
    return res;
}

Tensor maxpool2d_backward(const std::vector<std::size_t>& argmax,
                          const std::vector<int>& input_shape,
                          const Tensor& grad_out) {
    if (argmax.size() != grad_out.size()) {
        throw std::invalid_argument("maxpool2d_backward: argmax map does not match grad_out");
    }
    Tensor grad_in(input_shape);
    for (std::size_t i = 0; i < argmax.size(); ++i) {
        grad_in[argmax[i]] += grad_out[i];
    }
    return grad_in;
}

Tensor matmul_affine(const Tensor& input, const Tensor& weights, const Tensor& bias) {
    if (weights.rank() != 2) {
        throw std::invalid_argument("matmul_affine: weights must be NxM");
    }
    const int n = weights.extent(0), m = weights.extent(1);
    if (static_cast<std::size_t>(n) != input.size()) {
        throw std::invalid_argument(
            "matmul_affine: input length " + std::to_string(input.size()) +
            " does not match weight rows " + std::to_string(n));
    }
    if (bias.rank() != 1 || bias.extent(0) != m) {
        throw std::invalid_argument("matmul_affine: bias length must equal weight columns");
    }

    Tensor out({m});
    const double* x = input.data();
    const double* w = weights.data();
    double* o = out.data();
    std::copy(bias.data(), bias.data() + m, o);
    for (int i = 0; i < n; ++i) {
        const double xi = x[i];
        const double* wrow = w + static_cast<std::size_t>(i) * m;
        for (int j = 0; j < m; ++j) {
            o[j] += xi * wrow[j];
        }
    }
    return out;
}

AffineGrads matmul_affine_backward(const Tensor& input, const Tensor& weights,
                                   const Tensor& grad_out) {
    const int n = weights.extent(0), m = weights.extent(1);
    if (static_cast<std::size_t>(n) != input.size()) {
        throw std::invalid_argument("matmul_affine_backward: input/weight mismatch");
    }
    if (static_cast<std::size_t>(m) != grad_out.size()) {
        throw std::invalid_argument("matmul_affine_backward: grad_out/weight mismatch");
    }

    AffineGrads grads{zeros_like(input), zeros_like(weights), grad_out};
    const double* x = input.data();
    const double* w = weights.data();
    const double* go = grad_out.data();
    double* gx = grads.input.data();
    double* gw = grads.weights.data();
    for (int i = 0; i < n; ++i) {
        const double* wrow = w + static_cast<std::size_t>(i) * m;
        double* gwrow = gw + static_cast<std::size_t>(i) * m;
        double acc = 0.0;
        const double xi = x[i];
        for (int j = 0; j < m; ++j) {
            acc += wrow[j] * go[j];
            gwrow[j] = xi * go[j];
        }
        gx[i] = acc;
    }
    return grads;
}

Tensor relu(const Tensor& input) {
    Tensor out = input;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (out[i] < 0.0) out[i] = 0.0;
    }
    return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_out) {
    require_same_shape(input, grad_out, "relu_backward");
    Tensor grad_in = zeros_like(input);
    for (std::size_t i = 0; i < input.size(); ++i) {
        if (input[i] > 0.0) grad_in[i] = grad_out[i];
    }
    return grad_in;
}

Tensor softmax(const Tensor& input) {
    if (input.rank() != 1 && input.rank() != 2) {
        throw std::invalid_argument("softmax: expected a vector or a matrix of rows");
    }
    const int cols = input.extent(input.rank() - 1);
    const int rows = static_cast<int>(input.size()) / cols;

    Tensor out = input;
    for (int r = 0; r < rows; ++r) {
        double* v = out.data() + static_cast<std::size_t>(r) * cols;
        const double mx = *std::max_element(v, v + cols);
        double sum = 0.0;
        for (int j = 0; j < cols; ++j) {
            v[j] = std::exp(v[j] - mx);
            sum += v[j];
        }
        for (int j = 0; j < cols; ++j) {
            v[j] /= sum;
        }
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] += b[i];
    }
    return out;
}

Tensor scale(const Tensor& a, double s) {
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] *= s;
    }
    return out;
}

}  // namespace litho
