#include <algorithm>
#include <limits>
#include <vector>

#include "drgrade/kernels.hpp"

namespace drgrade::kernels {

namespace {

using Index = long long;

// Output columns [lo, hi) whose input column ox*stride + k - pad lies in [0, in).
struct Span1d {
  std::size_t lo;
  std::size_t hi;
};

Span1d valid_outputs(std::size_t k, std::size_t pad, std::size_t stride, std::size_t in, std::size_t out) {
  std::size_t lo = 0;
  if (pad > k) lo = (pad - k + stride - 1) / stride;
  std::size_t hi = 0;
  if (in + pad > k) hi = std::min(out, (in + pad - k - 1) / stride + 1);
  return {std::min(lo, hi), hi};
}

}  // namespace

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w, std::span<const T> bias,
                    std::span<T> y) {
  const std::size_t oh = g.out_h(), ow = g.out_w(), cpg = g.in_per_group(), fpg = g.out_per_group();
  const std::size_t s = g.stride;
#pragma omp parallel for collapse(2) schedule(static)
  for (Index n = 0; n < static_cast<Index>(g.batch); ++n)
    for (Index f = 0; f < static_cast<Index>(g.out_channels); ++f) {
      T* yp = y.data() + (n * g.out_channels + f) * oh * ow;
      std::fill(yp, yp + oh * ow, T{0});
      const std::size_t c0 = (f / fpg) * cpg;
      for (std::size_t cl = 0; cl < cpg; ++cl) {
        const T* xp = x.data() + (n * g.in_channels + c0 + cl) * g.in_h * g.in_w;
        for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
          const Span1d rows = valid_outputs(ky, g.pad_h, s, g.in_h, oh);
          for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
            const T wv = w[((f * cpg + cl) * g.kernel_h + ky) * g.kernel_w + kx];
            const Span1d cols = valid_outputs(kx, g.pad_w, s, g.in_w, ow);
            for (std::size_t oy = rows.lo; oy < rows.hi; ++oy) {
              const T* xrow = xp + (oy * s + ky - g.pad_h) * g.in_w;
              T* yrow = yp + oy * ow;
              if (s == 1) {
                for (std::size_t ox = cols.lo; ox < cols.hi; ++ox) yrow[ox] += wv * xrow[ox + kx - g.pad_w];
              } else {
                for (std::size_t ox = cols.lo; ox < cols.hi; ++ox) yrow[ox] += wv * xrow[ox * s + kx - g.pad_w];
              }
            }
          }
        }
      }
      if (!bias.empty()) {
        const T b = bias[f];
        for (std::size_t i = 0; i < oh * ow; ++i) yp[i] += b;
      }
    }
}

template <typename T>
void conv2d_backward_input(const ConvGeometry& g, std::span<const T> dy, std::span<const T> w, std::span<T> dx) {
  const std::size_t oh = g.out_h(), ow = g.out_w(), cpg = g.in_per_group(), fpg = g.out_per_group();
  const std::size_t s = g.stride;
#pragma omp parallel for collapse(2) schedule(static)
  for (Index n = 0; n < static_cast<Index>(g.batch); ++n)
    for (Index c = 0; c < static_cast<Index>(g.in_channels); ++c) {
      T* dxp = dx.data() + (n * g.in_channels + c) * g.in_h * g.in_w;
      std::fill(dxp, dxp + g.in_h * g.in_w, T{0});
      const std::size_t grp = c / cpg, cl = c % cpg;
      for (std::size_t fl = 0; fl < fpg; ++fl) {
        const std::size_t f = grp * fpg + fl;
        const T* dyp = dy.data() + (n * g.out_channels + f) * oh * ow;
        for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
          const Span1d rows = valid_outputs(ky, g.pad_h, s, g.in_h, oh);
          for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
            const T wv = w[((f * cpg + cl) * g.kernel_h + ky) * g.kernel_w + kx];
            const Span1d cols = valid_outputs(kx, g.pad_w, s, g.in_w, ow);
            for (std::size_t oy = rows.lo; oy < rows.hi; ++oy) {
              T* dxrow = dxp + (oy * s + ky - g.pad_h) * g.in_w;
              const T* dyrow = dyp + oy * ow;
              if (s == 1) {
                for (std::size_t ox = cols.lo; ox < cols.hi; ++ox) dxrow[ox + kx - g.pad_w] += dyrow[ox] * wv;
              } else {
                for (std::size_t ox = cols.lo; ox < cols.hi; ++ox) dxrow[ox * s + kx - g.pad_w] += dyrow[ox] * wv;
              }
            }
          }
        }
      }
    }
}

template <typename T>
void conv2d_backward_params(const ConvGeometry& g, std::span<const T> x, std::span<const T> dy, std::span<T> dw,
                            std::span<T> db) {
  const std::size_t oh = g.out_h(), ow = g.out_w(), cpg = g.in_per_group(), fpg = g.out_per_group();
  const std::size_t s = g.stride;
#pragma omp parallel for collapse(2) schedule(static)
  for (Index f = 0; f < static_cast<Index>(g.out_channels); ++f)
    for (Index cl = 0; cl < static_cast<Index>(cpg); ++cl) {
      const std::size_t c = (f / fpg) * cpg + cl;
      for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
        const Span1d rows = valid_outputs(ky, g.pad_h, s, g.in_h, oh);
        for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
          const Span1d cols = valid_outputs(kx, g.pad_w, s, g.in_w, ow);
          T acc = 0;
          for (std::size_t n = 0; n < g.batch; ++n) {
            const T* xp = x.data() + (n * g.in_channels + c) * g.in_h * g.in_w;
            const T* dyp = dy.data() + (n * g.out_channels + f) * oh * ow;
            for (std::size_t oy = rows.lo; oy < rows.hi; ++oy) {
              const T* xrow = xp + (oy * s + ky - g.pad_h) * g.in_w;
              const T* dyrow = dyp + oy * ow;
              for (std::size_t ox = cols.lo; ox < cols.hi; ++ox) acc += dyrow[ox] * xrow[ox * s + kx - g.pad_w];
            }
          }
          dw[((f * cpg + cl) * g.kernel_h + ky) * g.kernel_w + kx] = acc;
        }
      }
    }
  if (!db.empty()) {
#pragma omp parallel for schedule(static)
    for (Index f = 0; f < static_cast<Index>(g.out_channels); ++f) {
      T acc = 0;
      for (std::size_t n = 0; n < g.batch; ++n) {
        const T* dyp = dy.data() + (n * g.out_channels + f) * oh * ow;
        for (std::size_t i = 0; i < oh * ow; ++i) acc += dyp[i];
      }
      db[f] = acc;
    }
  }
}

template <typename T>
void dense_forward(std::size_t n, std::size_t d, std::size_t m, std::span<const T> x, std::span<const T> w,
                   std::span<const T> b, std::span<T> y) {
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < static_cast<Index>(n); ++i) {
    T* yrow = y.data() + i * m;
    std::fill(yrow, yrow + m, T{0});
    const T* xrow = x.data() + i * d;
    for (std::size_t k = 0; k < d; ++k) {
      const T xv = xrow[k];
      const T* wrow = w.data() + k * m;
      for (std::size_t j = 0; j < m; ++j) yrow[j] += xv * wrow[j];
    }
    if (!b.empty())
      for (std::size_t j = 0; j < m; ++j) yrow[j] += b[j];
  }
}

template <typename T>
void dense_backward(std::size_t n, std::size_t d, std::size_t m, std::span<const T> x, std::span<const T> w,
                    std::span<const T> dy, std::span<T> dx, std::span<T> dw, std::span<T> db) {
  if (!dx.empty()) {
#pragma omp parallel for collapse(2) schedule(static)
    for (Index i = 0; i < static_cast<Index>(n); ++i)
      for (Index k = 0; k < static_cast<Index>(d); ++k) {
        const T* dyrow = dy.data() + i * m;
        const T* wrow = w.data() + k * m;
        T acc = 0;
        for (std::size_t j = 0; j < m; ++j) acc += dyrow[j] * wrow[j];
        dx[i * d + k] = acc;
      }
  }
  if (!dw.empty()) {
#pragma omp parallel for schedule(static)
    for (Index k = 0; k < static_cast<Index>(d); ++k) {
      T* dwrow = dw.data() + k * m;
      std::fill(dwrow, dwrow + m, T{0});
      for (std::size_t i = 0; i < n; ++i) {
        const T xv = x[i * d + k];
        const T* dyrow = dy.data() + i * m;
        for (std::size_t j = 0; j < m; ++j) dwrow[j] += xv * dyrow[j];
      }
    }
  }
  if (!db.empty()) {
    for (std::size_t j = 0; j < m; ++j) db[j] = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) db[j] += dy[i * m + j];
  }
}

template <typename T>
void maxpool2x2_forward(const PoolGeometry& g, std::span<const T> x, std::span<T> y, std::span<std::size_t> argmax) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
#pragma omp parallel for schedule(static)
  for (Index p = 0; p < static_cast<Index>(g.planes); ++p) {
    const T* xp = x.data() + p * g.in_h * g.in_w;
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t where = 2 * oy * g.in_w + 2 * ox;
        T best = xp[where];
        const std::size_t cand[3] = {where + 1, where + g.in_w, where + g.in_w + 1};
        for (std::size_t idx : cand)
          if (xp[idx] > best) {
            best = xp[idx];
            where = idx;
          }
        y[(p * oh + oy) * ow + ox] = best;
        argmax[(p * oh + oy) * ow + ox] = where;
      }
  }
}

template <typename T>
void maxpool2x2_backward(const PoolGeometry& g, std::span<const T> dy, std::span<const std::size_t> argmax,
                         std::span<T> dx) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
#pragma omp parallel for schedule(static)
  for (Index p = 0; p < static_cast<Index>(g.planes); ++p) {
    T* dxp = dx.data() + p * g.in_h * g.in_w;
    std::fill(dxp, dxp + g.in_h * g.in_w, T{0});
    for (std::size_t i = 0; i < oh * ow; ++i) dxp[argmax[p * oh * ow + i]] += dy[p * oh * ow + i];
  }
}

template <typename T>
void channel_moments(std::size_t n, std::size_t c, std::size_t spatial, std::span<const T> x, std::span<double> mean,
                     std::span<double> var) {
  const double count = static_cast<double>(n * spatial);
#pragma omp parallel for schedule(static)
  for (Index ch = 0; ch < static_cast<Index>(c); ++ch) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const T* p = x.data() + (i * c + ch) * spatial;
      for (std::size_t k = 0; k < spatial; ++k) s += p[k];
    }
    const double mu = s / count;
    double q = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const T* p = x.data() + (i * c + ch) * spatial;
      for (std::size_t k = 0; k < spatial; ++k) {
        const double d = p[k] - mu;
        q += d * d;
      }
    }
    mean[ch] = mu;
    var[ch] = q / count;
  }
}

void separable_blur(std::size_t h, std::size_t w, std::size_t channels, std::span<const float> kernel,
                    std::span<const float> in, std::span<float> out) {
  const std::size_t taps = kernel.size();
  const Index r = static_cast<Index>(taps / 2);
  const std::size_t row_len = w * channels;
  std::vector<float> tmp(in.size());

#pragma omp parallel
  {
    std::vector<float> padded((w + 2 * r) * channels);
#pragma omp for schedule(static)
    for (Index y = 0; y < static_cast<Index>(h); ++y) {
      const float* src = in.data() + y * row_len;
      for (Index j = 0; j < static_cast<Index>(w) + 2 * r; ++j) {
        const std::size_t sx = reference::reflect_index(j - r, w);
        for (std::size_t c = 0; c < channels; ++c) padded[j * channels + c] = src[sx * channels + c];
      }
      float* dst = tmp.data() + y * row_len;
      std::fill(dst, dst + row_len, 0.0f);
      for (std::size_t k = 0; k < taps; ++k) {
        const float kv = kernel[k];
        const float* p = padded.data() + k * channels;
        for (std::size_t i = 0; i < row_len; ++i) dst[i] += kv * p[i];
      }
    }

#pragma omp for schedule(static)
    for (Index y = 0; y < static_cast<Index>(h); ++y) {
      float* dst = out.data() + y * row_len;
      std::fill(dst, dst + row_len, 0.0f);
      for (std::size_t k = 0; k < taps; ++k) {
        const float kv = kernel[k];
        const float* src = tmp.data() + reference::reflect_index(y + static_cast<Index>(k) - r, h) * row_len;
        for (std::size_t i = 0; i < row_len; ++i) dst[i] += kv * src[i];
      }
    }
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

}  // namespace drgrade::kernels
