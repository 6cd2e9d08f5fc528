#include <algorithm>
#include <limits>
#include <vector>

#include "drgrade/kernels.hpp"

namespace drgrade::reference {

std::size_t reflect_index(long long i, std::size_t n) {
  const long long period = 2 * static_cast<long long>(n);
  long long m = i % period;
  if (m < 0) m += period;
  if (m >= static_cast<long long>(n)) m = period - 1 - m;
  return static_cast<std::size_t>(m);
}

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w, std::span<const T> bias,
                    std::span<T> y) {
  const std::size_t oh = g.out_h(), ow = g.out_w(), cpg = g.in_per_group(), fpg = g.out_per_group();
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t f = 0; f < g.out_channels; ++f) {
      const std::size_t c0 = (f / fpg) * cpg;
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          T acc = 0;
          for (std::size_t cl = 0; cl < cpg; ++cl)
            for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
              for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                const long long iy = static_cast<long long>(oy * g.stride + ky) - static_cast<long long>(g.pad_h);
                const long long ix = static_cast<long long>(ox * g.stride + kx) - static_cast<long long>(g.pad_w);
                if (iy < 0 || ix < 0 || iy >= static_cast<long long>(g.in_h) || ix >= static_cast<long long>(g.in_w))
                  continue;
                acc += w[((f * cpg + cl) * g.kernel_h + ky) * g.kernel_w + kx] *
                       x[((n * g.in_channels + c0 + cl) * g.in_h + iy) * g.in_w + ix];
              }
          if (!bias.empty()) acc += bias[f];
          y[((n * g.out_channels + f) * oh + oy) * ow + ox] = acc;
        }
    }
}

template <typename T>
void conv2d_backward_input(const ConvGeometry& g, std::span<const T> dy, std::span<const T> w, std::span<T> dx) {
  const std::size_t oh = g.out_h(), ow = g.out_w(), cpg = g.in_per_group(), fpg = g.out_per_group();
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t c = 0; c < g.in_channels; ++c) {
      const std::size_t grp = c / cpg, cl = c % cpg;
      for (std::size_t iy = 0; iy < g.in_h; ++iy)
        for (std::size_t ix = 0; ix < g.in_w; ++ix) {
          T acc = 0;
          for (std::size_t fl = 0; fl < fpg; ++fl) {
            const std::size_t f = grp * fpg + fl;
            for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
              for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                const long long ty = static_cast<long long>(iy + g.pad_h) - static_cast<long long>(ky);
                const long long tx = static_cast<long long>(ix + g.pad_w) - static_cast<long long>(kx);
                if (ty < 0 || tx < 0) continue;
                if (ty % static_cast<long long>(g.stride) || tx % static_cast<long long>(g.stride)) continue;
                const std::size_t oy = static_cast<std::size_t>(ty) / g.stride;
                const std::size_t ox = static_cast<std::size_t>(tx) / g.stride;
                if (oy >= oh || ox >= ow) continue;
                acc += dy[((n * g.out_channels + f) * oh + oy) * ow + ox] *
                       w[((f * cpg + cl) * g.kernel_h + ky) * g.kernel_w + kx];
              }
          }
          dx[((n * g.in_channels + c) * g.in_h + iy) * g.in_w + ix] = acc;
        }
    }
}

template <typename T>
void conv2d_backward_params(const ConvGeometry& g, std::span<const T> x, std::span<const T> dy, std::span<T> dw,
                            std::span<T> db) {
  const std::size_t oh = g.out_h(), ow = g.out_w(), cpg = g.in_per_group(), fpg = g.out_per_group();
  for (std::size_t f = 0; f < g.out_channels; ++f) {
    const std::size_t c0 = (f / fpg) * cpg;
    for (std::size_t cl = 0; cl < cpg; ++cl)
      for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
        for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
          T acc = 0;
          for (std::size_t n = 0; n < g.batch; ++n)
            for (std::size_t oy = 0; oy < oh; ++oy)
              for (std::size_t ox = 0; ox < ow; ++ox) {
                const long long iy = static_cast<long long>(oy * g.stride + ky) - static_cast<long long>(g.pad_h);
                const long long ix = static_cast<long long>(ox * g.stride + kx) - static_cast<long long>(g.pad_w);
                if (iy < 0 || ix < 0 || iy >= static_cast<long long>(g.in_h) || ix >= static_cast<long long>(g.in_w))
                  continue;
                acc += dy[((n * g.out_channels + f) * oh + oy) * ow + ox] *
                       x[((n * g.in_channels + c0 + cl) * g.in_h + iy) * g.in_w + ix];
              }
          dw[((f * cpg + cl) * g.kernel_h + ky) * g.kernel_w + kx] = acc;
        }
    if (!db.empty()) {
      T acc = 0;
      for (std::size_t n = 0; n < g.batch; ++n)
        for (std::size_t i = 0; i < oh * ow; ++i) acc += dy[(n * g.out_channels + f) * oh * ow + i];
      db[f] = acc;
    }
  }
}

template <typename T>
void dense_forward(std::size_t n, std::size_t d, std::size_t m, std::span<const T> x, std::span<const T> w,
                   std::span<const T> b, std::span<T> y) {
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      T acc = 0;
      for (std::size_t k = 0; k < d; ++k) acc += x[i * d + k] * w[k * m + j];
      if (!b.empty()) acc += b[j];
      y[i * m + j] = acc;
    }
}

template <typename T>
void dense_backward(std::size_t n, std::size_t d, std::size_t m, std::span<const T> x, std::span<const T> w,
                    std::span<const T> dy, std::span<T> dx, std::span<T> dw, std::span<T> db) {
  if (!dx.empty())
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < d; ++k) {
        T acc = 0;
        for (std::size_t j = 0; j < m; ++j) acc += dy[i * m + j] * w[k * m + j];
        dx[i * d + k] = acc;
      }
  if (!dw.empty())
    for (std::size_t k = 0; k < d; ++k)
      for (std::size_t j = 0; j < m; ++j) {
        T acc = 0;
        for (std::size_t i = 0; i < n; ++i) acc += x[i * d + k] * dy[i * m + j];
        dw[k * m + j] = acc;
      }
  if (!db.empty())
    for (std::size_t j = 0; j < m; ++j) {
      T acc = 0;
      for (std::size_t i = 0; i < n; ++i) acc += dy[i * m + j];
      db[j] = acc;
    }
}

template <typename T>
void maxpool2x2_forward(const PoolGeometry& g, std::span<const T> x, std::span<T> y, std::span<std::size_t> argmax) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  for (std::size_t p = 0; p < g.planes; ++p)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        T best = -std::numeric_limits<T>::infinity();
        std::size_t where = 0;
        bool first = true;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = (2 * oy + dy) * g.in_w + 2 * ox + dx;
            const T v = x[p * g.in_h * g.in_w + idx];
            if (first || v > best) {
              best = v;
              where = idx;
              first = false;
            }
          }
        y[(p * oh + oy) * ow + ox] = best;
        argmax[(p * oh + oy) * ow + ox] = where;
      }
}

template <typename T>
void maxpool2x2_backward(const PoolGeometry& g, std::span<const T> dy, std::span<const std::size_t> argmax,
                         std::span<T> dx) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  std::fill(dx.begin(), dx.end(), T{0});
  for (std::size_t p = 0; p < g.planes; ++p)
    for (std::size_t i = 0; i < oh * ow; ++i) dx[p * g.in_h * g.in_w + argmax[p * oh * ow + i]] += dy[p * oh * ow + i];
}

template <typename T>
void channel_moments(std::size_t n, std::size_t c, std::size_t spatial, std::span<const T> x, std::span<double> mean,
                     std::span<double> var) {
  const double count = static_cast<double>(n * spatial);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < spatial; ++k) s += x[(i * c + ch) * spatial + k];
    const double mu = s / count;
    double q = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < spatial; ++k) {
        const double d = x[(i * c + ch) * spatial + k] - mu;
        q += d * d;
      }
    mean[ch] = mu;
    var[ch] = q / count;
  }
}

void separable_blur(std::size_t h, std::size_t w, std::size_t channels, std::span<const float> kernel,
                    std::span<const float> in, std::span<float> out) {
  const long long r = static_cast<long long>(kernel.size() / 2);
  std::vector<float> tmp(in.size());
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < channels; ++c) {
        float acc = 0.0f;
        for (long long k = -r; k <= r; ++k)
          acc += kernel[k + r] * in[(y * w + reflect_index(static_cast<long long>(x) + k, w)) * channels + c];
        tmp[(y * w + x) * channels + c] = acc;
      }
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < channels; ++c) {
        float acc = 0.0f;
        for (long long k = -r; k <= r; ++k)
          acc += kernel[k + r] * tmp[(reflect_index(static_cast<long long>(y) + k, h) * w + x) * channels + c];
        out[(y * w + x) * channels + c] = acc;
      }
}

#define DRGRADE_INSTANTIATE(T)                                                                                      \
  template void conv2d_forward<T>(const ConvGeometry&, std::span<const T>, std::span<const T>, std::span<const T>,   \
                                  std::span<T>);                                                                    \
  template void conv2d_backward_input<T>(const ConvGeometry&, std::span<const T>, std::span<const T>, std::span<T>); \
  template void conv2d_backward_params<T>(const ConvGeometry&, std::span<const T>, std::span<const T>, std::span<T>, \
                                          std::span<T>);                                                            \
  template void dense_forward<T>(std::size_t, std::size_t, std::size_t, std::span<const T>, std::span<const T>,      \
                                 std::span<const T>, std::span<T>);                                                 \
  template void dense_backward<T>(std::size_t, std::size_t, std::size_t, std::span<const T>, std::span<const T>,     \
                                  std::span<const T>, std::span<T>, std::span<T>, std::span<T>);                    \
  template void maxpool2x2_forward<T>(const PoolGeometry&, std::span<const T>, std::span<T>,                         \
                                      std::span<std::size_t>);                                                      \
  template void maxpool2x2_backward<T>(const PoolGeometry&, std::span<const T>, std::span<const std::size_t>,        \
                                       std::span<T>);                                                               \
  template void channel_moments<T>(std::size_t, std::size_t, std::size_t, std::span<const T>, std::span<double>,     \
                                   std::span<double>);

DRGRADE_INSTANTIATE(float)
DRGRADE_INSTANTIATE(double)

}  // namespace drgrade::reference
