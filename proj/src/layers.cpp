#include "drgrade/layers.hpp"

#include <cmath>

namespace drgrade {

namespace {

using Index = long long;

void require_rank4(const Shape& s, const std::string& who) {
  DRGRADE_REQUIRE(s.size() == 4, ErrorKind::ShapeMismatch, who + ": expected [N,C,H,W], got " + shape_str(s));
}

template <typename T>
void ensure_grad(Param<T>& p) {
  if (p.grad.shape() != p.value.shape()) p.grad = Tensor<T>(p.value.shape());
}

}  // namespace

template <typename T>
T sigmoid(T x) {
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(std::string name, const Conv2dOptions& opts) : Layer<T>(std::move(name)), opts_(opts) {
  DRGRADE_REQUIRE(opts.kernel >= 1 && (opts.stride == 1 || opts.stride == 2), ErrorKind::InvalidArgument,
                  this->name_ + ": kernel must be >= 1 and stride 1 or 2");
  if (opts.depthwise)
    DRGRADE_REQUIRE(opts.in_channels == opts.out_channels, ErrorKind::InvalidArgument,
                    this->name_ + ": depthwise conv needs in_channels == out_channels");
  const std::size_t per_filter = opts.depthwise ? 1 : opts.in_channels;
  weight_ = {this->name_ + ".weight", Tensor<T>({opts.out_channels, per_filter, opts.kernel, opts.kernel}), {}, true,
             false, true};
  if (opts.bias) bias_ = {this->name_ + ".bias", Tensor<T>({opts.out_channels}), {}, true, false, false};
}

template <typename T>
ConvGeometry Conv2d<T>::geometry(const Shape& in) const {
  require_rank4(in, this->name_);
  DRGRADE_REQUIRE(in[1] == opts_.in_channels, ErrorKind::ShapeMismatch,
                  this->name_ + ": expected " + std::to_string(opts_.in_channels) + " input channels, got " +
                      shape_str(in));
  ConvGeometry g;
  g.batch = in[0];
  g.in_channels = opts_.in_channels;
  g.in_h = in[2];
  g.in_w = in[3];
  g.out_channels = opts_.out_channels;
  g.kernel_h = g.kernel_w = opts_.kernel;
  g.stride = opts_.stride;
  g.groups = opts_.depthwise ? opts_.in_channels : 1;
  if (opts_.padding == Padding::Same) g.pad_h = g.pad_w = (opts_.kernel - 1) / 2;
  DRGRADE_REQUIRE(g.in_h + 2 * g.pad_h >= g.kernel_h && g.in_w + 2 * g.pad_w >= g.kernel_w,
                  ErrorKind::ShapeMismatch,
                  this->name_ + ": input " + shape_str(in) + " smaller than kernel " + std::to_string(opts_.kernel));
  return g;
}

template <typename T>
Shape Conv2d<T>::output_shape(const Shape& in) const {
  const ConvGeometry g = geometry(in);
  return {g.batch, g.out_channels, g.out_h(), g.out_w()};
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x, Mode) {
  const ConvGeometry g = geometry(x.shape());
  Tensor<T> y({g.batch, g.out_channels, g.out_h(), g.out_w()});
  kernels::conv2d_forward<T>(g, x.data(), weight_.value.data(), bias_.value.data(), y.data());
  input_ = x;
  has_cache_ = true;
  return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& dy) {
  DRGRADE_REQUIRE(has_cache_, ErrorKind::State, this->name_ + ": backward before forward");
  const ConvGeometry g = geometry(input_.shape());
  DRGRADE_REQUIRE(dy.size() == g.output_size(), ErrorKind::ShapeMismatch, this->name_ + ": upstream gradient shape");
  if (weight_.trainable) {
    ensure_grad(weight_);
    std::span<T> db;
    if (opts_.bias && bias_.trainable) {
      ensure_grad(bias_);
      db = bias_.grad.data();
    }
    kernels::conv2d_backward_params<T>(g, input_.data(), dy.data(), weight_.grad.data(), db);
  }
  if (!this->input_grad_needed_) return {};
  Tensor<T> dx(input_.shape());
  kernels::conv2d_backward_input<T>(g, dy.data(), weight_.value.data(), dx.data());
  return dx;
}

template <typename T>
void Conv2d<T>::collect_params(std::vector<Param<T>*>& out) {
  out.push_back(&weight_);
  if (opts_.bias) out.push_back(&bias_);
}

// ----------------------------------------------------------- BatchNorm2d

template <typename T>
BatchNorm2d<T>::BatchNorm2d(std::string name, std::size_t channels, double momentum, double epsilon)
    : Layer<T>(std::move(name)), channels_(channels), momentum_(momentum), epsilon_(epsilon) {
  DRGRADE_REQUIRE(epsilon > 0 && momentum >= 0 && momentum <= 1, ErrorKind::InvalidArgument,
                  this->name_ + ": epsilon must be > 0 and momentum in [0,1]");
  gamma_ = {this->name_ + ".gamma", Tensor<T>({channels}, T{1}), {}, true, false, false};
  beta_ = {this->name_ + ".beta", Tensor<T>({channels}), {}, true, false, false};
  running_mean_ = {this->name_ + ".running_mean", Tensor<T>({channels}), {}, false, true, false};
  running_var_ = {this->name_ + ".running_var", Tensor<T>({channels}, T{1}), {}, false, true, false};
}

template <typename T>
Tensor<T> BatchNorm2d<T>::forward(const Tensor<T>& x, Mode mode) {
  const Shape& s = x.shape();
  DRGRADE_REQUIRE(s.size() >= 2 && s[1] == channels_, ErrorKind::ShapeMismatch,
                  this->name_ + ": expected channel dim " + std::to_string(channels_) + ", got " + shape_str(s));
  const std::size_t n = s[0];
  const std::size_t spatial = x.size() / (n * channels_);
  batch_stats_ = mode == Mode::Train && gamma_.trainable;

  std::vector<double> mean(channels_), var(channels_);
  if (batch_stats_) {
    DRGRADE_REQUIRE(n * spatial >= 2, ErrorKind::InvalidArgument,
                    this->name_ + ": train mode needs at least 2 values per channel");
    kernels::channel_moments<T>(n, channels_, spatial, x.data(), mean, var);
    for (std::size_t c = 0; c < channels_; ++c) {
      running_mean_.value[c] = static_cast<T>((1 - momentum_) * running_mean_.value[c] + momentum_ * mean[c]);
      running_var_.value[c] = static_cast<T>((1 - momentum_) * running_var_.value[c] + momentum_ * var[c]);
    }
  } else {
    for (std::size_t c = 0; c < channels_; ++c) {
      mean[c] = running_mean_.value[c];
      var[c] = running_var_.value[c];
    }
  }
  inv_std_.assign(channels_, 0.0);
  for (std::size_t c = 0; c < channels_; ++c) inv_std_[c] = 1.0 / std::sqrt(var[c] + epsilon_);

  xhat_ = Tensor<T>(s);
  Tensor<T> y(s);
#pragma omp parallel for collapse(2) schedule(static)
  for (Index i = 0; i < static_cast<Index>(n); ++i)
    for (Index c = 0; c < static_cast<Index>(channels_); ++c) {
      const std::size_t off = (i * channels_ + c) * spatial;
      const double mu = mean[c], inv = inv_std_[c];
      const T g = gamma_.value[c], b = beta_.value[c];
      for (std::size_t k = 0; k < spatial; ++k) {
        const T xh = static_cast<T>((x[off + k] - mu) * inv);
        xhat_[off + k] = xh;
        y[off + k] = g * xh + b;
      }
    }
  has_cache_ = true;
  return y;
}

template <typename T>
Tensor<T> BatchNorm2d<T>::backward(const Tensor<T>& dy) {
  DRGRADE_REQUIRE(has_cache_, ErrorKind::State, this->name_ + ": backward before forward");
  DRGRADE_REQUIRE(dy.shape() == xhat_.shape(), ErrorKind::ShapeMismatch, this->name_ + ": upstream gradient shape");
  const std::size_t n = xhat_.dim(0);
  const std::size_t spatial = xhat_.size() / (n * channels_);
  std::vector<double> sum_dy(channels_, 0.0), sum_dy_xhat(channels_, 0.0);
#pragma omp parallel for schedule(static)
  for (Index c = 0; c < static_cast<Index>(channels_); ++c)
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t off = (i * channels_ + c) * spatial;
      for (std::size_t k = 0; k < spatial; ++k) {
        sum_dy[c] += dy[off + k];
        sum_dy_xhat[c] += static_cast<double>(dy[off + k]) * xhat_[off + k];
      }
    }
  if (gamma_.trainable) {
    ensure_grad(gamma_);
    ensure_grad(beta_);
    for (std::size_t c = 0; c < channels_; ++c) {
      gamma_.grad[c] = static_cast<T>(sum_dy_xhat[c]);
      beta_.grad[c] = static_cast<T>(sum_dy[c]);
    }
  }
  if (!this->input_grad_needed_) return {};
  Tensor<T> dx(xhat_.shape());
  const double count = static_cast<double>(n * spatial);
#pragma omp parallel for collapse(2) schedule(static)
  for (Index i = 0; i < static_cast<Index>(n); ++i)
    for (Index c = 0; c < static_cast<Index>(channels_); ++c) {
      const std::size_t off = (i * channels_ + c) * spatial;
      const double scale = gamma_.value[c] * inv_std_[c];
      if (batch_stats_) {
        const double mdy = sum_dy[c] / count, mdyx = sum_dy_xhat[c] / count;
        for (std::size_t k = 0; k < spatial; ++k)
          dx[off + k] = static_cast<T>(scale * (dy[off + k] - mdy - xhat_[off + k] * mdyx));
      } else {
        for (std::size_t k = 0; k < spatial; ++k) dx[off + k] = static_cast<T>(scale * dy[off + k]);
      }
    }
  return dx;
}

template <typename T>
void BatchNorm2d<T>::collect_params(std::vector<Param<T>*>& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
  out.push_back(&running_mean_);
  out.push_back(&running_var_);
}

// ------------------------------------------------------------ activations

template <typename T>
Tensor<T> ReLU<T>::forward(const Tensor<T>& x, Mode) {
  input_ = x;
  Tensor<T> y(x.shape());
  const Index n = static_cast<Index>(x.size());
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < n; ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
  return y;
}

template <typename T>
Tensor<T> ReLU<T>::backward(const Tensor<T>& dy) {
  DRGRADE_REQUIRE(dy.shape() == input_.shape() && !input_.empty(), ErrorKind::State,
                  this->name_ + ": backward without matching forward");
  Tensor<T> dx(dy.shape());
  const Index n = static_cast<Index>(dy.size());
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < n; ++i) dx[i] = input_[i] > T{0} ? dy[i] : T{0};
  return dx;
}

template <typename T>
Tensor<T> Swish<T>::forward(const Tensor<T>& x, Mode) {
  input_ = x;
  Tensor<T> y(x.shape());
  const Index n = static_cast<Index>(x.size());
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < n; ++i) y[i] = x[i] * sigmoid(x[i]);
  return y;
}

template <typename T>
Tensor<T> Swish<T>::backward(const Tensor<T>& dy) {
  DRGRADE_REQUIRE(dy.shape() == input_.shape() && !input_.empty(), ErrorKind::State,
                  this->name_ + ": backward without matching forward");
  Tensor<T> dx(dy.shape());
  const Index n = static_cast<Index>(dy.size());
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < n; ++i) {
    const T s = sigmoid(input_[i]);
    dx[i] = dy[i] * (s + input_[i] * s * (T{1} - s));
  }
  return dx;
}

// --------------------------------------------------------------- pooling

template <typename T>
Shape MaxPool2d<T>::output_shape(const Shape& in) const {
  require_rank4(in, this->name_);
  DRGRADE_REQUIRE(in[2] >= 2 && in[3] >= 2, ErrorKind::ShapeMismatch,
                  this->name_ + ": input " + shape_str(in) + " smaller than 2x2 window");
  return {in[0], in[1], in[2] / 2, in[3] / 2};
}

template <typename T>
Tensor<T> MaxPool2d<T>::forward(const Tensor<T>& x, Mode) {
  const Shape out = output_shape(x.shape());
  in_shape_ = x.shape();
  PoolGeometry g{in_shape_[0] * in_shape_[1], in_shape_[2], in_shape_[3]};
  Tensor<T> y(out);
  argmax_.assign(y.size(), 0);
  kernels::maxpool2x2_forward<T>(g, x.data(), y.data(), argmax_);
  return y;
}

template <typename T>
Tensor<T> MaxPool2d<T>::backward(const Tensor<T>& dy) {
  DRGRADE_REQUIRE(!in_shape_.empty() && dy.size() == argmax_.size(), ErrorKind::State,
                  this->name_ + ": backward without matching forward");
  PoolGeometry g{in_shape_[0] * in_shape_[1], in_shape_[2], in_shape_[3]};
  Tensor<T> dx(in_shape_);
  kernels::maxpool2x2_backward<T>(g, dy.data(), argmax_, dx.data());
  return dx;
}

template <typename T>
Shape AdaptiveAvgPool2d<T>::output_shape(const Shape& in) const {
  require_rank4(in, this->name_);
  DRGRADE_REQUIRE(in[2] >= 1 && in[3] >= 1, ErrorKind::ShapeMismatch, this->name_ + ": empty spatial extent");
  return {in[0], in[1], 1, 1};
}

template <typename T>
Tensor<T> AdaptiveAvgPool2d<T>::forward(const Tensor<T>& x, Mode) {
  Tensor<T> y(output_shape(x.shape()));
  in_shape_ = x.shape();
  const std::size_t planes = in_shape_[0] * in_shape_[1], area = in_shape_[2] * in_shape_[3];
#pragma omp parallel for schedule(static)
  for (Index p = 0; p < static_cast<Index>(planes); ++p) {
    double s = 0;
    for (std::size_t k = 0; k < area; ++k) s += x[p * area + k];
    y[p] = static_cast<T>(s / static_cast<double>(area));
  }
  return y;
}

template <typename T>
Tensor<T> AdaptiveAvgPool2d<T>::backward(const Tensor<T>& dy) {
  DRGRADE_REQUIRE(!in_shape_.empty() && dy.size() == in_shape_[0] * in_shape_[1], ErrorKind::State,
                  this->name_ + ": backward without matching forward");
  Tensor<T> dx(in_shape_);
  const std::size_t planes = in_shape_[0] * in_shape_[1], area = in_shape_[2] * in_shape_[3];
  const T inv = T{1} / static_cast<T>(area);
#pragma omp parallel for schedule(static)
  for (Index p = 0; p < static_cast<Index>(planes); ++p)
    for (std::size_t k = 0; k < area; ++k) dx[p * area + k] = dy[p] * inv;
  return dx;
}

// --------------------------------------------------------------- dropout

template <typename T>
Dropout<T>::Dropout(std::string name, double rate, std::uint64_t seed)
    : Layer<T>(std::move(name)), rate_(rate), rng_(seed) {
  DRGRADE_REQUIRE(rate >= 0 && rate < 1, ErrorKind::InvalidArgument, this->name_ + ": rate must be in [0,1)");
}

template <typename T>
Tensor<T> Dropout<T>::forward(const Tensor<T>& x, Mode mode) {
  if (mode == Mode::Eval || rate_ == 0.0) {
    mask_.clear();
    return x;
  }
  if (!(freeze_mask_ && mask_.size() == x.size())) {
    mask_.resize(x.size());
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate_));
    for (auto& m : mask_) m = rng_.uniform() < rate_ ? T{0} : keep_scale;
  }
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * mask_[i];
  return y;
}

template <typename T>
Tensor<T> Dropout<T>::backward(const Tensor<T>& dy) {
  if (mask_.empty()) return dy;
  DRGRADE_REQUIRE(dy.size() == mask_.size(), ErrorKind::State, this->name_ + ": backward without matching forward");
  Tensor<T> dx(dy.shape());
  for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * mask_[i];
  return dx;
}

// ----------------------------------------------------------------- dense

template <typename T>
Dense<T>::Dense(std::string name, std::size_t in_features, std::size_t out_features)
    : Layer<T>(std::move(name)), in_(in_features), out_(out_features) {
  weight_ = {this->name_ + ".weight", Tensor<T>({in_features, out_features}), {}, true, false, true};
  bias_ = {this->name_ + ".bias", Tensor<T>({out_features}), {}, true, false, false};
}

template <typename T>
Shape Dense<T>::output_shape(const Shape& in) const {
  DRGRADE_REQUIRE(in.size() == 2 && in[1] == in_, ErrorKind::ShapeMismatch,
                  this->name_ + ": expected [N," + std::to_string(in_) + "], got " + shape_str(in));
  return {in[0], out_};
}

template <typename T>
Tensor<T> Dense<T>::forward(const Tensor<T>& x, Mode) {
  Tensor<T> y(output_shape(x.shape()));
  kernels::dense_forward<T>(x.dim(0), in_, out_, x.data(), weight_.value.data(), bias_.value.data(), y.data());
  input_ = x;
  has_cache_ = true;
  return y;
}

template <typename T>
Tensor<T> Dense<T>::backward(const Tensor<T>& dy) {
  DRGRADE_REQUIRE(has_cache_, ErrorKind::State, this->name_ + ": backward before forward");
  const std::size_t n = input_.dim(0);
  DRGRADE_REQUIRE(dy.shape() == Shape({n, out_}), ErrorKind::ShapeMismatch, this->name_ + ": upstream gradient shape");
  std::span<T> dw, db;
  if (weight_.trainable) {
    ensure_grad(weight_);
    dw = weight_.grad.data();
  }
  if (bias_.trainable) {
    ensure_grad(bias_);
    db = bias_.grad.data();
  }
  Tensor<T> dx;
  if (this->input_grad_needed_) dx = Tensor<T>(input_.shape());
  kernels::dense_backward<T>(n, in_, out_, input_.data(), weight_.value.data(), dy.data(), dx.data(), dw, db);
  return dx;
}

template <typename T>
void Dense<T>::collect_params(std::vector<Param<T>*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

template <typename T>
Shape Flatten<T>::output_shape(const Shape& in) const {
  DRGRADE_REQUIRE(!in.empty(), ErrorKind::ShapeMismatch, this->name_ + ": scalar input");
  return {in[0], numel(in) / std::max<std::size_t>(in[0], 1)};
}

template <typename T>
Tensor<T> Flatten<T>::forward(const Tensor<T>& x, Mode) {
  in_shape_ = x.shape();
  return x.reshaped(output_shape(x.shape()));
}

template <typename T>
Tensor<T> Flatten<T>::backward(const Tensor<T>& dy) {
  DRGRADE_REQUIRE(!in_shape_.empty(), ErrorKind::State, this->name_ + ": backward before forward");
  return dy.reshaped(in_shape_);
}

// --------------------------------------------------------- squeeze-excite

template <typename T>
SqueezeExcite<T>::SqueezeExcite(std::string name, std::size_t channels, std::size_t squeezed)
    : Layer<T>(name),
      channels_(channels),
      pool_(name + ".pool"),
      reduce_(name + ".reduce", Conv2dOptions{channels, squeezed, 1, 1, Padding::Valid, false, true}),
      act_(name + ".act"),
      expand_(name + ".expand", Conv2dOptions{squeezed, channels, 1, 1, Padding::Valid, false, true}) {}

template <typename T>
Tensor<T> SqueezeExcite<T>::forward(const Tensor<T>& x, Mode mode) {
  require_rank4(x.shape(), this->name_);
  input_ = x;
  Tensor<T> e = expand_.forward(act_.forward(reduce_.forward(pool_.forward(x, mode), mode), mode), mode);
  gate_ = Tensor<T>(e.shape());
  for (std::size_t i = 0; i < e.size(); ++i) gate_[i] = sigmoid(e[i]);
  const std::size_t area = x.dim(2) * x.dim(3);
  Tensor<T> y(x.shape());
  for (std::size_t p = 0; p < gate_.size(); ++p)
    for (std::size_t k = 0; k < area; ++k) y[p * area + k] = x[p * area + k] * gate_[p];
  return y;
}

template <typename T>
Tensor<T> SqueezeExcite<T>::backward(const Tensor<T>& dy) {
  DRGRADE_REQUIRE(dy.shape() == input_.shape() && !input_.empty(), ErrorKind::State,
                  this->name_ + ": backward without matching forward");
  const std::size_t area = input_.dim(2) * input_.dim(3);
  Tensor<T> de(gate_.shape());
  for (std::size_t p = 0; p < gate_.size(); ++p) {
    T acc = 0;
    for (std::size_t k = 0; k < area; ++k) acc += dy[p * area + k] * input_[p * area + k];
    de[p] = acc * gate_[p] * (T{1} - gate_[p]);
  }
  pool_.set_input_grad_needed(this->input_grad_needed_);
  reduce_.set_input_grad_needed(this->input_grad_needed_);
  expand_.set_input_grad_needed(true);
  Tensor<T> dr = act_.backward(expand_.backward(de));
  Tensor<T> dp = reduce_.backward(dr);
  if (!this->input_grad_needed_) return {};
  Tensor<T> dx = pool_.backward(dp);
  for (std::size_t p = 0; p < gate_.size(); ++p)
    for (std::size_t k = 0; k < area; ++k) dx[p * area + k] += dy[p * area + k] * gate_[p];
  return dx;
}

template <typename T>
void SqueezeExcite<T>::collect_params(std::vector<Param<T>*>& out) {
  reduce_.collect_params(out);
  expand_.collect_params(out);
}

template <typename T>
std::vector<Layer<T>*> SqueezeExcite<T>::children() {
  return {&pool_, &reduce_, &act_, &expand_};
}

// ------------------------------------------------------------ sequential

template <typename T>
Shape Sequential<T>::output_shape(const Shape& in) const {
  Shape s = in;
  for (const auto& l : layers_) s = l->output_shape(s);
  if (residual_)
    DRGRADE_REQUIRE(s == in, ErrorKind::ShapeMismatch, this->name_ + ": residual branch changes shape");
  return s;
}

template <typename T>
Tensor<T> Sequential<T>::forward(const Tensor<T>& x, Mode mode) {
  Tensor<T> h = x;
  for (auto& l : layers_) h = l->forward(h, mode);
  if (residual_) {
    DRGRADE_REQUIRE(h.shape() == x.shape(), ErrorKind::ShapeMismatch, this->name_ + ": residual shape mismatch");
    for (std::size_t i = 0; i < h.size(); ++i) h[i] += x[i];
  }
  return h;
}

template <typename T>
Tensor<T> Sequential<T>::backward(const Tensor<T>& dy) {
  Tensor<T> g = dy;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    if (i == 0) layers_[i]->set_input_grad_needed(this->input_grad_needed_);
    g = layers_[i]->backward(g);
  }
  if (!this->input_grad_needed_) return {};
  if (residual_)
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy[i];
  return g;
}

template <typename T>
void Sequential<T>::collect_params(std::vector<Param<T>*>& out) {
  for (auto& l : layers_) l->collect_params(out);
}

template <typename T>
void Sequential<T>::reseed(std::uint64_t seed) {
  for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i]->reseed(mix_seed({seed, i}));
}

template <typename T>
std::vector<Layer<T>*> Sequential<T>::children() {
  std::vector<Layer<T>*> out;
  for (auto& l : layers_) out.push_back(l.get());
  return out;
}

// --------------------------------------------------------------- softmax

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  DRGRADE_REQUIRE(logits.rank() == 2 && logits.dim(1) >= 1, ErrorKind::ShapeMismatch,
                  "softmax: expected [N,K], got " + shape_str(logits.shape()));
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  Tensor<T> p(logits.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const T* z = logits.ptr() + i * k;
    const T mx = *std::max_element(z, z + k);
    double sum = 0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(static_cast<double>(z[j] - mx));
    for (std::size_t j = 0; j < k; ++j) p[i * k + j] = static_cast<T>(std::exp(static_cast<double>(z[j] - mx)) / sum);
  }
  return p;
}

#define DRGRADE_INSTANTIATE(T)                     \
  template T sigmoid<T>(T);                        \
  template class Conv2d<T>;                        \
  template class BatchNorm2d<T>;                   \
  template class ReLU<T>;                          \
  template class Swish<T>;                         \
  template class MaxPool2d<T>;                     \
  template class Dropout<T>;                       \
  template class Dense<T>;                         \
  template class Flatten<T>;                       \
  template class AdaptiveAvgPool2d<T>;             \
  template class SqueezeExcite<T>;                 \
  template class Sequential<T>;                    \
  template Tensor<T> softmax<T>(const Tensor<T>&);

DRGRADE_INSTANTIATE(float)
DRGRADE_INSTANTIATE(double)

}  // namespace drgrade
