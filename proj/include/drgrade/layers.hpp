#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "drgrade/kernels.hpp"
#include "drgrade/rng.hpp"
#include "drgrade/tensor.hpp"

namespace drgrade {

enum class Mode { Train, Eval };

/// A named parameter slot. Buffers (batchnorm running statistics) are
/// never trainable and never carry a gradient. `regularized` marks conv and
/// dense weight tensors, the only ones the L2 penalty touches.
template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;  // empty until the first backward pass that needs it
  bool trainable = true;
  bool buffer = false;
  bool regularized = false;
};

/// Base of the layer zoo. A layer caches whatever its backward pass needs
/// during forward; backward may only follow a matching forward. backward
/// overwrites (does not accumulate) parameter gradients.
template <typename T>
class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;
  Layer(const Layer&) = delete;
  Layer& operator=(const Layer&) = delete;

  const std::string& name() const { return name_; }
  virtual std::string kind() const = 0;
  virtual Shape output_shape(const Shape& in) const = 0;
  virtual Tensor<T> forward(const Tensor<T>& x, Mode mode) = 0;
  virtual Tensor<T> backward(const Tensor<T>& dy) = 0;

  virtual void collect_params(std::vector<Param<T>*>& out) { (void)out; }
  virtual void reseed(std::uint64_t seed) { (void)seed; }
  /// Sub-layers, for composites; used for printing and traversal.
  virtual std::vector<Layer<T>*> children() { return {}; }

  std::vector<Param<T>*> params() {
    std::vector<Param<T>*> out;
    collect_params(out);
    return out;
  }
  bool has_trainable_params() {
    for (auto* p : params())
      if (p->trainable && !p->buffer) return true;
    return false;
  }

  /// When false, backward may skip computing the input gradient and return
  /// an empty tensor.
  void set_input_grad_needed(bool needed) { input_grad_needed_ = needed; }
  bool input_grad_needed() const { return input_grad_needed_; }

 protected:
  std::string name_;
  bool input_grad_needed_ = true;
};

template <typename T>
using LayerPtr = std::unique_ptr<Layer<T>>;

enum class Padding { Valid, Same };

struct Conv2dOptions {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  Padding padding = Padding::Valid;
  bool depthwise = false;
  bool bias = true;
};

/// Cross-correlation (no kernel flip). Valid output extent is
/// floor((H - k) / stride) + 1; same padding pads (k - 1) / 2 zeros on each side.
template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(std::string name, const Conv2dOptions& opts);
  std::string kind() const override { return opts_.depthwise ? "conv2d_dw" : "conv2d"; }
  Shape output_shape(const Shape& in) const override;
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& dy) override;
  void collect_params(std::vector<Param<T>*>& out) override;

  const Conv2dOptions& options() const { return opts_; }
  Param<T>& weight() { return weight_; }
  Param<T>& bias() { return bias_; }

 private:
  ConvGeometry geometry(const Shape& in) const;

  Conv2dOptions opts_;
  Param<T> weight_;
  Param<T> bias_;
  Tensor<T> input_;
  bool has_cache_ = false;
};

/// Batch normalization over [N,C,H,W] (or [N,C]). Train mode uses biased
/// batch statistics and updates running = (1 - momentum) * running +
/// momentum * batch. If gamma is frozen the layer always normalizes with
/// its running statistics and never updates them.
template <typename T>
class BatchNorm2d final : public Layer<T> {
 public:
  BatchNorm2d(std::string name, std::size_t channels, double momentum = 0.1, double epsilon = 1e-5);
  std::string kind() const override { return "batchnorm2d"; }
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& dy) override;
  void collect_params(std::vector<Param<T>*>& out) override;

  Param<T>& gamma() { return gamma_; }
  Param<T>& beta() { return beta_; }
  Param<T>& running_mean() { return running_mean_; }
  Param<T>& running_var() { return running_var_; }
  double epsilon() const { return epsilon_; }

 private:
  std::size_t channels_;
  double momentum_;
  double epsilon_;
  Param<T> gamma_, beta_, running_mean_, running_var_;
  // cache
  Tensor<T> xhat_;
  std::vector<double> inv_std_;
  bool batch_stats_ = false;
  bool has_cache_ = false;
};

template <typename T>
class ReLU final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  std::string kind() const override { return "relu"; }
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& dy) override;

 private:
  Tensor<T> input_;
};

/// x * sigmoid(x). Only the input is cached; backward recomputes the
/// sigmoid rather than storing the activation.
template <typename T>
class Swish final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  std::string kind() const override { return "swish"; }
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& dy) override;

 private:
  Tensor<T> input_;
};

/// 2x2 window, stride 2. A trailing odd row/column is dropped.
template <typename T>
class MaxPool2d final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  std::string kind() const override { return "maxpool2d"; }
  Shape output_shape(const Shape& in) const override;
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& dy) override;

 private:
  Shape in_shape_;
  std::vector<std::size_t> argmax_;
};

/// Inverted dropout. The mask stream is reseedable so that training is a
/// deterministic function of the seed.
template <typename T>
class Dropout final : public Layer<T> {
 public:
  Dropout(std::string name, double rate, std::uint64_t seed = 0);
  std::string kind() const override { return "dropout"; }
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& dy) override;
  void reseed(std::uint64_t seed) override { rng_ = Rng(seed); }

  double rate() const { return rate_; }
  /// Reuse the previous mask on subsequent train-mode calls (gradient checks).
  void freeze_mask(bool freeze) { freeze_mask_ = freeze; }

 private:
  double rate_;
  Rng rng_;
  std::vector<T> mask_;  // 0 or 1/(1-rate); empty means identity
  bool freeze_mask_ = false;
};

/// y = x W + b with W stored [in, out].
template <typename T>
class Dense final : public Layer<T> {
 public:
  Dense(std::string name, std::size_t in_features, std::size_t out_features);
  std::string kind() const override { return "dense"; }
  Shape output_shape(const Shape& in) const override;
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& dy) override;
  void collect_params(std::vector<Param<T>*>& out) override;

  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }
  Param<T>& weight() { return weight_; }
  Param<T>& bias() { return bias_; }

 private:
  std::size_t in_, out_;
  Param<T> weight_, bias_;
  Tensor<T> input_;
  bool has_cache_ = false;
};

template <typename T>
class Flatten final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  std::string kind() const override { return "flatten"; }
  Shape output_shape(const Shape& in) const override;
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& dy) override;

 private:
  Shape in_shape_;
};

/// Global spatial mean: [N,C,H,W] -> [N,C,1,1].
template <typename T>
class AdaptiveAvgPool2d final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  std::string kind() const override { return "adaptive_avgpool2d"; }
  Shape output_shape(const Shape& in) const override;
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& dy) override;

 private:
  Shape in_shape_;
};

/// Squeeze-and-excitation gate: x * sigmoid(W2 swish(W1 avgpool(x) + b1) + b2).
template <typename T>
class SqueezeExcite final : public Layer<T> {
 public:
  SqueezeExcite(std::string name, std::size_t channels, std::size_t squeezed);
  std::string kind() const override { return "squeeze_excite"; }
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& dy) override;
  void collect_params(std::vector<Param<T>*>& out) override;
  std::vector<Layer<T>*> children() override;

 private:
  std::size_t channels_;
  AdaptiveAvgPool2d<T> pool_;
  Conv2d<T> reduce_;
  Swish<T> act_;
  Conv2d<T> expand_;
  Tensor<T> input_;
  Tensor<T> gate_;  // sigmoid output, [N,C,1,1]
};

/// A chain of layers run in order, with an optional identity skip around
/// the whole chain (output = chain(x) + x).
template <typename T>
class Sequential : public Layer<T> {
 public:
  explicit Sequential(std::string name, bool residual = false) : Layer<T>(std::move(name)), residual_(residual) {}
  std::string kind() const override { return kind_; }
  void set_kind(std::string k) { kind_ = std::move(k); }
  Shape output_shape(const Shape& in) const override;
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& dy) override;
  void collect_params(std::vector<Param<T>*>& out) override;
  void reseed(std::uint64_t seed) override;
  std::vector<Layer<T>*> children() override;

  void add(LayerPtr<T> layer) { layers_.push_back(std::move(layer)); }
  std::size_t size() const { return layers_.size(); }
  Layer<T>& at(std::size_t i) { return *layers_.at(i); }
  bool residual() const { return residual_; }

 private:
  std::vector<LayerPtr<T>> layers_;
  bool residual_;
  std::string kind_ = "sequential";
};

/// Row-wise softmax with max subtraction.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

template <typename T>
T sigmoid(T x);

}  // namespace drgrade
