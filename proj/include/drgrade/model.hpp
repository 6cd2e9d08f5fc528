#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "drgrade/layers.hpp"

namespace drgrade {

struct ParamCounts {
  std::size_t total = 0;
  std::size_t trainable = 0;
  std::size_t non_trainable = 0;
  bool operator==(const ParamCounts&) const = default;
};

struct TraceEntry {
  std::string name;
  std::string kind;
  Shape output;
  std::size_t params = 0;
  int depth = 0;
};

/// Ordered stack of top-level layers plus the architecture tag used by
/// checkpoints. forward() returns logits; softmax is applied by
/// predict_proba() or fused into the loss.
template <typename T>
class Model {
 public:
  Model() = default;
  Model(std::string arch_tag, Shape input_chw) : arch_(std::move(arch_tag)), input_chw_(std::move(input_chw)) {}
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  const std::string& arch() const { return arch_; }
  const Shape& input_chw() const { return input_chw_; }
  void set_softmax_output(bool on) { softmax_output_ = on; }
  bool softmax_output() const { return softmax_output_; }

  void add(LayerPtr<T> layer) { layers_.push_back(std::move(layer)); }
  std::size_t num_layers() const { return layers_.size(); }
  Layer<T>& layer(std::size_t i) { return *layers_.at(i); }
  Layer<T>& back() { return *layers_.back(); }

  Tensor<T> forward(const Tensor<T>& x, Mode mode);
  /// Eval-mode forward followed by a row softmax.
  Tensor<T> predict_proba(const Tensor<T>& x);
  /// Backpropagates dlogits. Layers below the lowest one holding a
  /// trainable parameter are skipped unless the input gradient is requested.
  Tensor<T> backward(const Tensor<T>& dlogits, bool need_input_grad = false);

  std::vector<Param<T>*> params();
  std::vector<const Param<T>*> params() const;
  std::vector<Param<T>*> trainable_params();
  Param<T>* find_param(const std::string& name);
  void zero_grad();
  /// Reseeds every stochastic layer (dropout) from one seed.
  void reseed(std::uint64_t seed);

  ParamCounts count_params() const;
  /// Per-layer output shapes for a batch of one, including sub-layers of composites.
  std::vector<TraceEntry> shape_trace() const;

 private:
  std::string arch_;
  Shape input_chw_;
  bool softmax_output_ = false;
  std::vector<LayerPtr<T>> layers_;
};

}  // namespace drgrade
