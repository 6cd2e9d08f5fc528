#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "drgrade/model.hpp"

namespace drgrade {

inline constexpr std::size_t kNumClasses = 5;

/// Shallow network: three conv blocks with fixed 13/11/7 valid kernels
/// and 2x2 pooling, then flatten -> dense(hidden, relu) -> dense(classes).
struct Method1Config {
  std::size_t input_size = 512;
  std::array<std::size_t, 3> conv_channels = {16, 32, 48};
  std::size_t hidden_units = 171;
  std::size_t num_classes = kNumClasses;
  double dropout_rate = 0.25;
  double l2_lambda = 1e-4;
  double bn_momentum = 0.1;
  double bn_epsilon = 1e-5;

  static constexpr std::array<std::size_t, 3> kKernels = {13, 11, 7};
};

struct MBConvConfig {
  std::size_t in_channels = 16;
  std::size_t out_channels = 16;
  std::size_t expand_ratio = 1;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  bool squeeze_excite = false;
  double se_ratio = 0.25;

  std::size_t hidden_channels() const { return in_channels * expand_ratio; }
  bool operator==(const MBConvConfig&) const = default;
};

struct BackboneConfig {
  std::size_t input_size = 64;
  std::size_t stem_channels = 8;
  std::size_t stem_kernel = 3;
  std::size_t stem_stride = 2;
  std::vector<MBConvConfig> blocks;
  std::size_t head_channels = 0;  // optional 1x1 conv after the last block; 0 = none

  std::size_t feature_dim() const;
  void validate() const;

  /// Stem 8ch + two blocks (8->16, 16->32), feature_dim 32.
  static BackboneConfig tiny(std::size_t input_size = 64);
  /// B3-equivalent stage table (width 1.2, depth 1.4), 1x1 top conv to
  /// 1536 features.
  static BackboneConfig b3_like(std::size_t input_size = 512, bool squeeze_excite = false);
};

struct TransferConfig {
  BackboneConfig backbone = BackboneConfig::tiny();
  std::size_t num_classes = kNumClasses;
  double head_dropout = 0.3;
  bool freeze = true;
};

Model<float> build_method1(const Method1Config& cfg, std::uint64_t seed);
template <typename T>
Model<T> build_method1_as(const Method1Config& cfg, std::uint64_t seed);

/// expand 1x1 (omitted for ratio 1) -> bn -> swish -> depthwise kxk same
/// -> bn -> swish -> [se] -> project 1x1 -> bn; identity skip when stride 1
/// and in == out.
template <typename T>
LayerPtr<T> build_mbconv_block(const std::string& name, const MBConvConfig& cfg, std::uint64_t seed);

/// stem -> MBConv stack -> [top conv] -> avgpool -> flatten -> dropout -> head dense.
/// Freezes the backbone when cfg.freeze is set.
Model<float> build_transfer_model(const TransferConfig& cfg, std::uint64_t seed);
template <typename T>
Model<T> build_transfer_model_as(const TransferConfig& cfg, std::uint64_t seed);

/// Marks every parameter except the final dense layer non-trainable.
template <typename T>
void freeze_backbone(Model<T>& m);

template <typename T>
ParamCounts count_params(const Model<T>& m) {
  return m.count_params();
}

/// Architecture tags encode the full build configuration, e.g.
/// "method1;input=64;channels=4,8,12;hidden=32;classes=5;dropout=0.25;l2=0.0001".
std::string arch_tag(const Method1Config& cfg);
std::string arch_tag(const TransferConfig& cfg);
/// Text before the first ';'.
std::string arch_family(const std::string& tag);
Method1Config parse_method1_tag(const std::string& tag);
TransferConfig parse_transfer_tag(const std::string& tag);

/// Rebuilds a freshly initialized model from its tag.
template <typename T>
Model<T> build_from_tag(const std::string& tag, std::uint64_t seed);

}  // namespace drgrade
