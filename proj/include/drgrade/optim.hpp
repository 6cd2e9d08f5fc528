#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "drgrade/layers.hpp"

namespace drgrade {

/// Per-grade loss weights. Presets are the two weight vectors reported
/// for the shallow network and the transfer model.
struct ClassWeights {
  std::array<double, 5> w{1, 1, 1, 1, 1};

  static ClassWeights uniform() { return {}; }
  static ClassWeights method1() { return {{1.2, 6.2, 3.0, 12.5, 8.2}}; }
  static ClassWeights transfer() { return {{1.0, 3.0, 3.0, 5.0, 5.0}}; }
  void validate() const;
};

template <typename T>
struct LossResult {
  double loss = 0;
  double weight_sum = 0;  // normalizer: sum of the batch's sample weights
  Tensor<T> dlogits;
};

/// Softmax-fused weighted cross-entropy, normalized by the sum of sample
/// weights: loss = sum_i w[y_i] * (-ln p_i[y_i]) / sum_i w[y_i].
template <typename T>
LossResult<T> weighted_ce(const Tensor<T>& logits, std::span<const int> labels, const ClassWeights& w);

template <typename T>
struct L2Result {
  double penalty = 0;
  std::vector<Tensor<T>> addends;  // one per regularized trainable param, in order
};

/// lambda * sum(w^2) over trainable conv/dense weight tensors; gradient addend 2*lambda*w.
template <typename T>
L2Result<T> l2_penalty(const std::vector<Param<T>*>& params, double lambda);

/// Same penalty, with the gradient addend accumulated directly into each
/// parameter's grad. Returns the penalty.
template <typename T>
double accumulate_l2(const std::vector<Param<T>*>& params, double lambda);

enum class OptimizerKind : std::uint8_t { Adam = 0, Sgd = 1 };

struct AdamHyper {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct SgdHyper {
  double lr = 0.01;
  double momentum = 0.9;
};

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> value;
};

/// First-order optimizer over a fixed list of parameters. Parameters that
/// are non-trainable (or buffers) are skipped at every step.
template <typename T>
class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual OptimizerKind kind() const = 0;
  /// Applies one update from the current grads. Throws NonFinite, leaving
  /// parameters and state untouched, if any gradient is non-finite.
  /// A parameter whose grad was never materialized is left as is.
  virtual void step() = 0;
  virtual double lr() const = 0;
  virtual void set_lr(double lr) = 0;
  virtual std::uint64_t steps() const = 0;
  virtual std::vector<NamedTensor<T>> export_state() const = 0;
  virtual void import_state(const std::vector<NamedTensor<T>>& state, std::uint64_t steps) = 0;
};

template <typename T>
class Adam final : public Optimizer<T> {
 public:
  Adam(std::vector<Param<T>*> params, const AdamHyper& hyper);
  OptimizerKind kind() const override { return OptimizerKind::Adam; }
  void step() override;
  double lr() const override { return hyper_.lr; }
  void set_lr(double lr) override { hyper_.lr = lr; }
  std::uint64_t steps() const override { return t_; }
  std::vector<NamedTensor<T>> export_state() const override;
  void import_state(const std::vector<NamedTensor<T>>& state, std::uint64_t steps) override;

 private:
  std::vector<Param<T>*> params_;
  AdamHyper hyper_;
  std::vector<Tensor<T>> m_, v_;
  std::uint64_t t_ = 0;
};

/// v <- momentum * v + g; theta <- theta - lr * v
template <typename T>
class SgdMomentum final : public Optimizer<T> {
 public:
  SgdMomentum(std::vector<Param<T>*> params, const SgdHyper& hyper);
  OptimizerKind kind() const override { return OptimizerKind::Sgd; }
  void step() override;
  double lr() const override { return hyper_.lr; }
  void set_lr(double lr) override { hyper_.lr = lr; }
  std::uint64_t steps() const override { return t_; }
  std::vector<NamedTensor<T>> export_state() const override;
  void import_state(const std::vector<NamedTensor<T>>& state, std::uint64_t steps) override;

 private:
  std::vector<Param<T>*> params_;
  SgdHyper hyper_;
  std::vector<Tensor<T>> velocity_;
  std::uint64_t t_ = 0;
};

enum class MetricMode : std::uint8_t { Min = 0, Max = 1 };

struct PlateauConfig {
  double factor = 0.85;
  std::size_t patience = 2;
  double min_delta = 1e-4;
  MetricMode mode = MetricMode::Min;
};

/// Reduce-on-plateau. The first metric always counts as an improvement.
/// When the count of non-improving epochs exceeds patience the rate is
/// cut to lr0 * factor^k and the count resets.
class PlateauScheduler {
 public:
  PlateauScheduler(double initial_lr, const PlateauConfig& cfg = {});

  /// Feeds one epoch's metric; returns the learning rate to use next.
  double update(double metric);

  double lr() const { return lr_; }
  double initial_lr() const { return initial_lr_; }
  std::size_t reductions() const { return reductions_; }
  std::size_t epochs_since_improvement() const { return since_; }
  double best() const { return best_; }
  const PlateauConfig& config() const { return cfg_; }

  void restore(double best, std::size_t since, std::size_t reductions);

 private:
  PlateauConfig cfg_;
  double initial_lr_;
  double lr_;
  double best_;
  std::size_t since_ = 0;
  std::size_t reductions_ = 0;
};

}  // namespace drgrade
