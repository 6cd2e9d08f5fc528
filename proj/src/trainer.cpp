#include "drgrade/trainer.hpp"

#include <omp.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <iostream>
#include <limits>
#include <json.hpp>

#include "drgrade/imageproc.hpp"

namespace drgrade {

TrainConfig TrainConfig::defaults_for(const std::string& arch) {
  TrainConfig c;
  c.arch = arch;
  if (arch == "method1") return c;
  DRGRADE_REQUIRE(arch == "transfer", ErrorKind::InvalidArgument, "unknown arch '" + arch + "'");
  c.batch_size = 64;
  c.class_weights = ClassWeights::transfer();
  c.optimizer = OptimizerKind::Sgd;
  c.lr = 0.01;
  c.momentum = 0.9;
  c.scheduler = true;
  c.selection = Selection::MaxValAcc;
  return c;
}

std::string TrainConfig::model_tag() const { return arch == "method1" ? arch_tag(method1) : arch_tag(transfer); }

void TrainConfig::validate() const {
  DRGRADE_REQUIRE(arch == "method1" || arch == "transfer", ErrorKind::InvalidArgument, "unknown arch '" + arch + "'");
  DRGRADE_REQUIRE(epochs >= 1, ErrorKind::InvalidArgument, "epochs must be >= 1");
  DRGRADE_REQUIRE(batch_size >= 1, ErrorKind::InvalidArgument, "batch_size must be >= 1");
  DRGRADE_REQUIRE(lr >= 0 && std::isfinite(lr), ErrorKind::InvalidArgument, "lr must be finite and >= 0");
  DRGRADE_REQUIRE(momentum >= 0 && momentum < 1, ErrorKind::InvalidArgument, "momentum must be in [0,1)");
  DRGRADE_REQUIRE(plateau.factor > 0 && plateau.factor < 1, ErrorKind::InvalidArgument,
                  "plateau factor must be in (0,1)");
  class_weights.validate();
  if (arch == "transfer") transfer.backbone.validate();
}

PngSource::PngSource(std::size_t size, std::size_t cache_bytes) : size_(size), cache_bytes_(cache_bytes) {
  DRGRADE_REQUIRE(size >= 1, ErrorKind::InvalidArgument, "image size must be >= 1");
}

Tensor<float> PngSource::load(const SampleRecord& s) {
  const std::string key = s.path.string();
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  RgbImage img = read_png(s.path);
  if (img.height != size_ || img.width != size_) img = resize_bilinear(img, size_, size_);
  Tensor<float> t({3, size_, size_});
  const std::size_t plane = size_ * size_;
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c) t[c * plane + i] = img.data[i * 3 + c] / 255.0f;
  const std::size_t bytes = t.size() * sizeof(float);
  if (cached_ + bytes <= cache_bytes_) {
    cached_ += bytes;
    cache_.emplace(key, t);
  }
  return t;
}

Tensor<float> make_batch(SampleSource& src, std::span<const SampleRecord> samples) {
  DRGRADE_REQUIRE(!samples.empty(), ErrorKind::InvalidArgument, "empty batch");
  Tensor<float> first = src.load(samples[0]);
  Shape shape{samples.size()};
  shape.insert(shape.end(), first.shape().begin(), first.shape().end());
  Tensor<float> out(shape);
  const std::size_t per = first.size();
  std::copy(first.data().begin(), first.data().end(), out.data().begin());
  for (std::size_t i = 1; i < samples.size(); ++i) {
    Tensor<float> t = src.load(samples[i]);
    DRGRADE_REQUIRE(t.shape() == first.shape(), ErrorKind::ShapeMismatch,
                    samples[i].id + ": image shape " + shape_str(t.shape()) + " vs " + shape_str(first.shape()));
    std::copy(t.data().begin(), t.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  return out;
}

namespace {

int argmax_row(const Tensor<float>& logits, std::size_t row) {
  const std::size_t k = logits.dim(1);
  const float* p = logits.ptr() + row * k;
  return static_cast<int>(std::max_element(p, p + k) - p);
}

std::vector<int> labels_of(std::span<const SampleRecord> s) {
  std::vector<int> y(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) y[i] = s[i].grade;
  return y;
}

}  // namespace

EpochStats train_epoch(Model<float>& m, SampleSource& src, const Manifest& train, Optimizer<float>& opt,
                       const ClassWeights& w, double l2_lambda, std::size_t batch_size, std::uint64_t seed,
                       std::size_t epoch) {
  DRGRADE_REQUIRE(!train.empty(), ErrorKind::InvalidArgument, "empty training manifest");
  const auto batches = batch_iter(train, batch_size, seed, epoch);
  auto trainable = m.trainable_params();
  double loss_sum = 0, weight_sum = 0;
  std::size_t correct = 0;
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const auto& samples = batches[b];
    const Tensor<float> x = make_batch(src, samples);
    const auto y = labels_of(samples);
    m.reseed(mix_seed({seed, epoch, b}));
    const Tensor<float> logits = m.forward(x, Mode::Train);
    LossResult<float> ce;
    try {
      ce = weighted_ce(logits, y, w);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NonFinite) throw;
      ce.loss = std::numeric_limits<double>::quiet_NaN();
    }
    if (!std::isfinite(ce.loss))
      throw Error(ErrorKind::NonFinite, "epoch " + std::to_string(epoch) + " batch " + std::to_string(b + 1) +
                                            ": loss = " + std::to_string(ce.loss));
    m.backward(ce.dlogits);
    accumulate_l2(trainable, l2_lambda);
    opt.step();
    loss_sum += ce.loss * ce.weight_sum;
    weight_sum += ce.weight_sum;
    for (std::size_t i = 0; i < y.size(); ++i) correct += argmax_row(logits, i) == y[i];
  }
  return {loss_sum / weight_sum, static_cast<double>(correct) / static_cast<double>(train.size())};
}

EvalResult evaluate(const LogitFn& logits_fn, SampleSource& src, const Manifest& m, const ClassWeights& w,
                    std::size_t batch_size) {
  DRGRADE_REQUIRE(!m.empty(), ErrorKind::InvalidArgument, "evaluate: empty manifest");
  DRGRADE_REQUIRE(batch_size >= 1, ErrorKind::InvalidArgument, "batch size must be >= 1");
  std::vector<int> preds, labels;
  double loss_sum = 0, weight_sum = 0;
  for (std::size_t start = 0; start < m.size(); start += batch_size) {
    const std::span<const SampleRecord> samples(m.samples.data() + start, std::min(batch_size, m.size() - start));
    const auto y = labels_of(samples);
    const Tensor<float> logits = logits_fn(make_batch(src, samples));
    const auto ce = weighted_ce(logits, y, w);
    loss_sum += ce.loss * ce.weight_sum;
    weight_sum += ce.weight_sum;
    for (std::size_t i = 0; i < y.size(); ++i) preds.push_back(argmax_row(logits, i));
    labels.insert(labels.end(), y.begin(), y.end());
  }
  EvalResult r;
  r.confusion = confusion_matrix(preds, labels);
  r.accuracy = accuracy(r.confusion);
  r.loss = loss_sum / weight_sum;
  return r;
}

EvalResult evaluate(Model<float>& model, SampleSource& src, const Manifest& m, const ClassWeights& w,
                    std::size_t batch_size) {
  return evaluate([&model](const Tensor<float>& x) { return model.forward(x, Mode::Eval); }, src, m, w, batch_size);
}

double Selector::metric(const EpochRecord& r) const {
  return sel_ == Selection::MinValLoss ? r.val_loss : r.val_acc;
}

bool Selector::offer(const EpochRecord& r) {
  const double v = metric(r);
  const bool better = best_epoch_ == 0 || (sel_ == Selection::MinValLoss ? v < best_ : v > best_);
  if (better) {
    best_epoch_ = r.epoch;
    best_ = v;
  }
  return better;
}

LoopResult run_loop(std::size_t epochs, double initial_lr, Selection selection, PlateauScheduler* sched,
                    PlateauMetric plateau_metric, const EpochLoop& loop) {
  Selector sel(selection);
  LoopResult out;
  double lr = initial_lr;
  for (std::size_t e = 1; e <= epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochRecord r;
    r.epoch = e;
    r.lr = lr;
    const EpochStats tr = loop.train(e);
    const EpochStats va = loop.validate(e);
    r.train_loss = tr.loss;
    r.train_acc = tr.accuracy;
    r.val_loss = va.loss;
    r.val_acc = va.accuracy;
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.history.push_back(r);
    const bool improved = sel.offer(r);
    if (sched) {
      lr = sched->update(plateau_metric == PlateauMetric::ValLoss ? r.val_loss : r.val_acc);
      if (loop.set_lr) loop.set_lr(lr);
    }
    if (improved && loop.on_best) loop.on_best(r, sel, sched);
    if (loop.on_epoch_end) loop.on_epoch_end(out.history);
  }
  out.best_epoch = sel.best_epoch();
  return out;
}

std::vector<double> trailing_mean(const std::vector<double>& v, std::size_t window) {
  DRGRADE_REQUIRE(window >= 1, ErrorKind::InvalidArgument, "window must be >= 1");
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::size_t lo = i + 1 >= window ? i + 1 - window : 0;
    double s = 0;
    for (std::size_t k = lo; k <= i; ++k) s += v[k];
    out[i] = s / static_cast<double>(i + 1 - lo);
  }
  return out;
}

namespace {

// Shortest representation that round-trips.
std::string num(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::string curves_csv(const std::vector<EpochRecord>& history, std::size_t window) {
  DRGRADE_REQUIRE(!history.empty(), ErrorKind::InvalidArgument, "curves: empty history");
  std::vector<double> val_loss;
  for (const auto& r : history) val_loss.push_back(r.val_loss);
  const auto smooth = trailing_mean(val_loss, window);
  std::string s = "epoch,train_loss,train_acc,val_loss,val_acc,val_loss_smooth,lr\n";
  for (std::size_t i = 0; i < history.size(); ++i) {
    const auto& r = history[i];
    s += std::to_string(r.epoch) + "," + num(r.train_loss) + "," + num(r.train_acc) + "," + num(r.val_loss) + "," +
         num(r.val_acc) + "," + num(smooth[i]) + "," + num(r.lr) + "\n";
  }
  return s;
}

void emit_curves(const std::vector<EpochRecord>& history, const std::filesystem::path& path) {
  write_file_atomic(path, curves_csv(history));
}

std::string eval_json(const EvalResult& e) {
  nlohmann::json j;
  j["loss"] = e.loss;
  j["accuracy"] = e.accuracy;
  nlohmann::json counts = nlohmann::json::array(), norm = nlohmann::json::array();
  const auto frac = row_normalize(e.confusion);
  for (std::size_t t = 0; t < 5; ++t) {
    counts.push_back(std::vector<std::uint64_t>(e.confusion.counts[t].begin(), e.confusion.counts[t].end()));
    std::vector<double> row;
    for (double v : frac[t]) row.push_back(round2(v));
    norm.push_back(row);
  }
  j["confusion"] = counts;
  j["confusion_normalized"] = norm;
  std::vector<double> recall;
  for (double v : per_class_recall(e.confusion)) recall.push_back(round2(v));
  j["recall"] = recall;
  return j.dump();
}

std::string report_json(const TrainConfig& cfg, const TrainingResult& r) {
  nlohmann::json j;
  j["arch"] = cfg.model_tag();
  j["seed"] = cfg.seed;
  j["epochs"] = r.history.size();
  j["selection"] = cfg.selection == Selection::MinValLoss ? "min_val_loss" : "max_val_acc";
  j["best_epoch"] = r.best_epoch;
  const auto& best = r.history.at(r.best_epoch - 1);
  j["best"] = {{"train_loss", best.train_loss},
               {"train_acc", best.train_acc},
               {"val_loss", best.val_loss},
               {"val_acc", best.val_acc}};
  j["best_checkpoint"] = r.best_checkpoint.filename().string();
  if (r.test) j["test"] = nlohmann::json::parse(eval_json(*r.test));
  return j.dump(2) + "\n";
}

TrainingResult fit(const TrainConfig& cfg, SampleSource* source) {
  cfg.validate();
  if (cfg.deterministic) omp_set_num_threads(1);
  DRGRADE_REQUIRE(!cfg.train_manifest.empty() && !cfg.val_manifest.empty(), ErrorKind::InvalidArgument,
                  "train and validation manifests are required");
  const Manifest train = load_manifest(cfg.train_manifest, cfg.images_dir);
  const Manifest val = load_manifest(cfg.val_manifest, cfg.images_dir);
  DRGRADE_REQUIRE(!train.empty() && !val.empty(), ErrorKind::InvalidArgument, "train/val manifests are empty");

  Model<float> model = cfg.arch == "method1" ? build_method1(cfg.method1, cfg.seed)
                                             : build_transfer_model(cfg.transfer, cfg.seed);
  const double l2 = cfg.arch == "method1" ? cfg.method1.l2_lambda : 0.0;
  std::unique_ptr<PngSource> own;
  if (!source) {
    own = std::make_unique<PngSource>(model.input_chw().at(1));
    source = own.get();
  }

  std::unique_ptr<Optimizer<float>> opt;
  if (cfg.optimizer == OptimizerKind::Adam) {
    AdamHyper h = cfg.adam;
    h.lr = cfg.lr;
    opt = std::make_unique<Adam<float>>(model.trainable_params(), h);
  } else {
    opt = std::make_unique<SgdMomentum<float>>(model.trainable_params(), SgdHyper{cfg.lr, cfg.momentum});
  }
  std::optional<PlateauScheduler> sched;
  if (cfg.scheduler) {
    PlateauConfig pc = cfg.plateau;
    pc.mode = cfg.plateau_metric == PlateauMetric::ValLoss ? MetricMode::Min : MetricMode::Max;
    sched.emplace(cfg.lr, pc);
  }

  std::filesystem::create_directories(cfg.out_dir);
  TrainingResult result;
  result.best_checkpoint = cfg.out_dir / "best.ckpt";

  EpochLoop loop;
  loop.train = [&](std::size_t e) {
    return train_epoch(model, *source, train, *opt, cfg.class_weights, l2, cfg.batch_size, cfg.seed, e);
  };
  loop.validate = [&](std::size_t) {
    const auto r = evaluate(model, *source, val, cfg.class_weights, cfg.batch_size);
    return EpochStats{r.loss, r.accuracy};
  };
  loop.set_lr = [&](double lr) { opt->set_lr(lr); };
  loop.on_best = [&](const EpochRecord& r, const Selector& sel, const PlateauScheduler* s) {
    TrainingState<float> st;
    st.epoch = static_cast<std::uint32_t>(r.epoch);
    st.best_epoch = static_cast<std::uint32_t>(sel.best_epoch());
    st.best_metric = sel.best_metric();
    st.seed = cfg.seed;
    st.lr = opt->lr();
    st.optimizer = opt->kind();
    st.optimizer_steps = opt->steps();
    if (s) {
      st.plateau_best = s->best();
      st.plateau_since = static_cast<std::uint32_t>(s->epochs_since_improvement());
      st.plateau_reductions = static_cast<std::uint32_t>(s->reductions());
    }
    st.optimizer_state = opt->export_state();
    save_checkpoint(model, result.best_checkpoint, &st);
  };
  loop.on_epoch_end = [&](const std::vector<EpochRecord>& h) {
    emit_curves(h, cfg.out_dir / "curves.csv");
    const auto& r = h.back();
    std::cerr << "epoch " << r.epoch << "/" << cfg.epochs << " train_loss " << r.train_loss << " train_acc "
              << r.train_acc << " val_loss " << r.val_loss << " val_acc " << r.val_acc << " lr " << r.lr << " ("
              << r.wall_seconds << " s)\n";
  };

  auto lr_out = run_loop(cfg.epochs, cfg.lr, cfg.selection, sched ? &*sched : nullptr, cfg.plateau_metric, loop);
  result.history = std::move(lr_out.history);
  result.best_epoch = lr_out.best_epoch;

  if (!cfg.test_manifest.empty()) {
    const Manifest test = load_manifest(cfg.test_manifest, cfg.images_dir);
    if (!test.empty()) {
      Model<float> best = load_checkpoint<float>(result.best_checkpoint);
      result.test = evaluate(best, *source, test, cfg.class_weights, cfg.batch_size);
    }
  }
  write_file_atomic(cfg.out_dir / "report.json", report_json(cfg, result));
  return result;
}

}  // namespace drgrade
