#pragma once

// Compute kernels behind the layer zoo and the blur. The functions in
// drgrade::kernels are OpenMP-parallel; drgrade::reference holds serial,
// straightforward versions with identical semantics used by the tests and
// the benchmark. Parallel loops only split independent outputs, so every
// output element is reduced in the same fixed order as the reference.

#include <cstddef>
#include <span>

namespace drgrade {

/// Geometry of a grouped 2D cross-correlation. groups == 1 is a standard
/// convolution; groups == in_channels == out_channels is depthwise.
/// Weights are laid out [out_channels, in_channels / groups, kernel_h, kernel_w].
struct ConvGeometry {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t in_h = 1;
  std::size_t in_w = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride = 1;
  std::size_t pad_h = 0;
  std::size_t pad_w = 0;
  std::size_t groups = 1;

  std::size_t out_h() const { return (in_h + 2 * pad_h - kernel_h) / stride + 1; }
  std::size_t out_w() const { return (in_w + 2 * pad_w - kernel_w) / stride + 1; }
  std::size_t in_per_group() const { return in_channels / groups; }
  std::size_t out_per_group() const { return out_channels / groups; }
  std::size_t weight_size() const { return out_channels * in_per_group() * kernel_h * kernel_w; }
  std::size_t input_size() const { return batch * in_channels * in_h * in_w; }
  std::size_t output_size() const { return batch * out_channels * out_h() * out_w(); }
};

struct PoolGeometry {
  std::size_t planes = 1;  // batch * channels
  std::size_t in_h = 2;
  std::size_t in_w = 2;
  std::size_t out_h() const { return in_h / 2; }
  std::size_t out_w() const { return in_w / 2; }
};

namespace kernels {

// y = conv(x, w) + bias. bias may be empty.
template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w, std::span<const T> bias,
                    std::span<T> y);
// dx = conv^T(dy, w). Overwrites dx.
template <typename T>
void conv2d_backward_input(const ConvGeometry& g, std::span<const T> dy, std::span<const T> w, std::span<T> dx);
// dw = sum over batch/positions of dy * x; db = sum of dy (db may be empty). Overwrites.
template <typename T>
void conv2d_backward_params(const ConvGeometry& g, std::span<const T> x, std::span<const T> dy, std::span<T> dw,
                            std::span<T> db);

// y[N,M] = x[N,D] * w[D,M] + b[M]
template <typename T>
void dense_forward(std::size_t n, std::size_t d, std::size_t m, std::span<const T> x, std::span<const T> w,
                   std::span<const T> b, std::span<T> y);
template <typename T>
void dense_backward(std::size_t n, std::size_t d, std::size_t m, std::span<const T> x, std::span<const T> w,
                    std::span<const T> dy, std::span<T> dx, std::span<T> dw, std::span<T> db);

// 2x2/stride-2 max pooling. argmax receives the flat in-plane index of the
// winner of each window (first occurrence in row-major window order).
template <typename T>
void maxpool2x2_forward(const PoolGeometry& g, std::span<const T> x, std::span<T> y, std::span<std::size_t> argmax);
template <typename T>
void maxpool2x2_backward(const PoolGeometry& g, std::span<const T> dy, std::span<const std::size_t> argmax,
                         std::span<T> dx);

// Per-channel mean and biased variance of x[N,C,S].
template <typename T>
void channel_moments(std::size_t n, std::size_t c, std::size_t spatial, std::span<const T> x, std::span<double> mean,
                     std::span<double> var);

// Separable convolution of an interleaved HxWxC float image with a
// symmetric 1D kernel of length 2r+1, half-sample symmetric borders.
void separable_blur(std::size_t h, std::size_t w, std::size_t channels, std::span<const float> kernel,
                    std::span<const float> in, std::span<float> out);

}  // namespace kernels

namespace reference {

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w, std::span<const T> bias,
                    std::span<T> y);
template <typename T>
void conv2d_backward_input(const ConvGeometry& g, std::span<const T> dy, std::span<const T> w, std::span<T> dx);
template <typename T>
void conv2d_backward_params(const ConvGeometry& g, std::span<const T> x, std::span<const T> dy, std::span<T> dw,
                            std::span<T> db);
template <typename T>
void dense_forward(std::size_t n, std::size_t d, std::size_t m, std::span<const T> x, std::span<const T> w,
                   std::span<const T> b, std::span<T> y);
template <typename T>
void dense_backward(std::size_t n, std::size_t d, std::size_t m, std::span<const T> x, std::span<const T> w,
                    std::span<const T> dy, std::span<T> dx, std::span<T> dw, std::span<T> db);
template <typename T>
void maxpool2x2_forward(const PoolGeometry& g, std::span<const T> x, std::span<T> y, std::span<std::size_t> argmax);
template <typename T>
void maxpool2x2_backward(const PoolGeometry& g, std::span<const T> dy, std::span<const std::size_t> argmax,
                         std::span<T> dx);
template <typename T>
void channel_moments(std::size_t n, std::size_t c, std::size_t spatial, std::span<const T> x, std::span<double> mean,
                     std::span<double> var);
void separable_blur(std::size_t h, std::size_t w, std::size_t channels, std::span<const float> kernel,
                    std::span<const float> in, std::span<float> out);

/// Half-sample symmetric reflection of index i into [0, n), periodic
/// with period 2n so any offset is valid.
std::size_t reflect_index(long long i, std::size_t n);

}  // namespace reference

}  // namespace drgrade
