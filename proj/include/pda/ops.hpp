#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "pda/tensor.hpp"

// Differentiable tensor ops. Each op is recorded on the active Tape when one of
// its inputs requires a gradient; otherwise it is a plain forward evaluation.
// Every op rejects non-finite results with NumericError.
namespace pda::ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);

// x[m,n] + bias[n] broadcast over rows.
Tensor add_row_bias(const Tensor& x, const Tensor& bias);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor abs(const Tensor& x);

// Normalizes over the last axis; gamma and beta have the size of that axis.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
Tensor softmax(const Tensor& x, std::size_t axis);

// Column/row slicing and concatenation of rank-2 tensors.
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count);
Tensor concat_rows(const std::vector<Tensor>& parts);

// Spatial window of a [C,H,W] tensor.
Tensor crop(const Tensor& x, std::size_t row, std::size_t rows, std::size_t col, std::size_t cols);

struct Conv2dOptions {
    std::size_t stride = 1;
    // Defaults to (kernel - 1) / 2, i.e. "same" padding for odd kernels.
    std::optional<std::size_t> padding;
};

// Cross-correlation of x[C,H,W] with w[O,C,kh,kw]; bias[O] may be undefined.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv2dOptions options = {});

// Bilinear resampling of x[C,H,W] with the align-corners-false convention.
Tensor bilinear_resize(const Tensor& x, std::size_t out_height, std::size_t out_width);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Sampling position and blend weights along one axis for bilinear_resize.
struct ResizeTap {
    std::size_t lo = 0;
    std::size_t hi = 0;
    double frac = 0.0;
};
std::vector<ResizeTap> resize_taps(std::size_t in_size, std::size_t out_size);

}  // namespace pda::ops
