#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "drgrade/checkpoint.hpp"
#include "drgrade/dataset.hpp"
#include "drgrade/metrics.hpp"
#include "drgrade/models.hpp"
#include "drgrade/optim.hpp"

namespace drgrade {

enum class Selection { MinValLoss, MaxValAcc };
enum class PlateauMetric { ValLoss, ValAcc };

struct TrainConfig {
  std::string arch = "method1";  // method1 | transfer
  Method1Config method1;
  TransferConfig transfer;

  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  ClassWeights class_weights = ClassWeights::method1();
  OptimizerKind optimizer = OptimizerKind::Adam;
  double lr = 1e-4;
  AdamHyper adam;
  double momentum = 0.9;
  bool scheduler = false;
  PlateauConfig plateau;
  PlateauMetric plateau_metric = PlateauMetric::ValLoss;
  Selection selection = Selection::MinValLoss;
  std::uint64_t seed = 42;
  bool deterministic = false;

  std::filesystem::path images_dir;
  std::filesystem::path train_manifest, val_manifest, test_manifest;
  std::filesystem::path out_dir = "run";

  /// Settings used for each architecture: Adam 1e-4, batch 32, min val loss
  /// for method1; SGD 0.01/0.9 with plateau decay, batch 64, max val acc
  /// for transfer.
  static TrainConfig defaults_for(const std::string& arch);
  std::string model_tag() const;
  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0;
  double train_acc = 0;
  double val_loss = 0;
  double val_acc = 0;
  double lr = 0;
  double wall_seconds = 0;  // not written to curves
};

struct EvalResult {
  double loss = 0;
  double accuracy = 0;
  ConfusionMatrix confusion;
};

struct TrainingResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  std::filesystem::path best_checkpoint;
  std::optional<EvalResult> test;
};

/// Supplies one CHW image tensor per sample.
class SampleSource {
 public:
  virtual ~SampleSource() = default;
  virtual Tensor<float> load(const SampleRecord& s) = 0;
};

/// Reads preprocessed PNGs as float CHW in [0,1], resizing to the model
/// input when sizes differ. Decoded images are cached up to a byte budget.
class PngSource final : public SampleSource {
 public:
  PngSource(std::size_t size, std::size_t cache_bytes = std::size_t{1} << 30);
  Tensor<float> load(const SampleRecord& s) override;

 private:
  std::size_t size_;
  std::size_t cache_bytes_;
  std::size_t cached_ = 0;
  std::unordered_map<std::string, Tensor<float>> cache_;
};

/// Stacks samples into an [N,C,H,W] batch.
Tensor<float> make_batch(SampleSource& src, std::span<const SampleRecord> samples);

struct EpochStats {
  double loss = 0;
  double accuracy = 0;
};

/// One pass over the epoch's batch order: forward, weighted CE + L2,
/// backward, optimizer step. Dropout masks are reseeded per batch from
/// (seed, epoch, batch). Loss is the weight-normalized data loss over the
/// epoch; accuracy comes from the same forward passes.
EpochStats train_epoch(Model<float>& m, SampleSource& src, const Manifest& train, Optimizer<float>& opt,
                       const ClassWeights& w, double l2_lambda, std::size_t batch_size, std::uint64_t seed,
                       std::size_t epoch);

using LogitFn = std::function<Tensor<float>(const Tensor<float>& batch)>;
/// Eval-mode scoring; prediction is the argmax of each row.
EvalResult evaluate(const LogitFn& logits, SampleSource& src, const Manifest& m, const ClassWeights& w,
                    std::size_t batch_size);
EvalResult evaluate(Model<float>& model, SampleSource& src, const Manifest& m, const ClassWeights& w,
                    std::size_t batch_size);

/// Best-epoch tracking; only a strict improvement moves the best, so ties
/// keep the earlier epoch.
class Selector {
 public:
  explicit Selector(Selection s) : sel_(s) {}
  bool offer(const EpochRecord& r);
  double metric(const EpochRecord& r) const;
  std::size_t best_epoch() const { return best_epoch_; }
  double best_metric() const { return best_; }
  void restore(std::size_t best_epoch, double best) {
    best_epoch_ = best_epoch;
    best_ = best;
  }

 private:
  Selection sel_;
  std::size_t best_epoch_ = 0;
  double best_ = 0;
};

/// Callbacks that make up one run. fit() wires them to a real model;
/// tests can script any of them.
struct EpochLoop {
  std::function<EpochStats(std::size_t epoch)> train;
  std::function<EpochStats(std::size_t epoch)> validate;
  std::function<void(double lr)> set_lr;
  /// Called after a record improves the selection metric.
  std::function<void(const EpochRecord& r, const Selector& sel, const PlateauScheduler* sched)> on_best;
  std::function<void(const std::vector<EpochRecord>& history)> on_epoch_end;
};

struct LoopResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
};

/// Runs epochs 1..epochs: train, validate, select, then step the scheduler
/// (when given) on the configured metric.
LoopResult run_loop(std::size_t epochs, double initial_lr, Selection selection, PlateauScheduler* sched,
                    PlateauMetric plateau_metric, const EpochLoop& loop);

/// Trailing moving average over up to `window` values ending at each index.
std::vector<double> trailing_mean(const std::vector<double>& v, std::size_t window);
/// Columns: epoch,train_loss,train_acc,val_loss,val_acc,val_loss_smooth,lr.
std::string curves_csv(const std::vector<EpochRecord>& history, std::size_t window = 10);
void emit_curves(const std::vector<EpochRecord>& history, const std::filesystem::path& path);

/// Full run: loads manifests, trains, checkpoints the best model to
/// <out>/best.ckpt, rewrites <out>/curves.csv every epoch, scores the best
/// checkpoint on the test manifest (if set) and writes <out>/report.json.
TrainingResult fit(const TrainConfig& cfg, SampleSource* source = nullptr);

std::string report_json(const TrainConfig& cfg, const TrainingResult& r);
std::string eval_json(const EvalResult& e);

}  // namespace drgrade
