#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "drgrade/model.hpp"
#include "drgrade/optim.hpp"

namespace drgrade {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Resumable training state: loop position, selection and scheduler
/// bookkeeping, and the optimizer's moment/velocity tensors.
template <typename T>
struct TrainingState {
  std::uint32_t epoch = 0;
  std::uint32_t best_epoch = 0;
  double best_metric = 0;
  std::uint64_t seed = 0;
  double lr = 0;
  OptimizerKind optimizer = OptimizerKind::Adam;
  std::uint64_t optimizer_steps = 0;
  double plateau_best = 0;
  std::uint32_t plateau_since = 0;
  std::uint32_t plateau_reductions = 0;
  std::vector<NamedTensor<T>> optimizer_state;
};

template <typename T>
struct Checkpoint {
  std::string arch;
  std::vector<NamedTensor<T>> tensors;  // parameters and running statistics, in model order
  std::optional<TrainingState<T>> state;
};

/// Layout (little-endian): "DRCK", u32 version, u16 tag length + tag,
/// u32 tensor count, then per tensor u16 name length + name, u8 dtype
/// (0 = f32, 1 = f64), u8 ndim, u32 dims[ndim], raw values; then a u8
/// flag and, when set, the training state.
template <typename T>
std::string encode_checkpoint(const Checkpoint<T>& ck);
template <typename T>
Checkpoint<T> decode_checkpoint(std::string_view bytes);

template <typename T>
Checkpoint<T> snapshot(const Model<T>& m, const TrainingState<T>* state = nullptr);
/// Copies checkpoint tensors into a model built for the same tag. Names and
/// shapes must match one to one.
template <typename T>
void restore(Model<T>& m, const Checkpoint<T>& ck);

/// Written to a sibling temp file and renamed, so an existing checkpoint is
/// never left half-written.
template <typename T>
void save_checkpoint(const Model<T>& m, const std::filesystem::path& path, const TrainingState<T>* state = nullptr);
template <typename T>
Checkpoint<T> read_checkpoint(const std::filesystem::path& path);
/// Rebuilds the model from the stored tag and loads its tensors. A non-empty
/// expected_family ("method1" or "transfer") is checked against the tag.
template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path, TrainingState<T>* state_out = nullptr,
                         std::string_view expected_family = {});

std::string read_file_bytes(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace drgrade
