#include "drgrade/cli.hpp"

#include <omp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "drgrade/checkpoint.hpp"
#include "drgrade/config.hpp"
#include "drgrade/dataset.hpp"
#include "drgrade/imageproc.hpp"
#include "drgrade/metrics.hpp"
#include "drgrade/models.hpp"
#include "drgrade/trainer.hpp"

namespace drgrade {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Bad flag values found after CLI11 has accepted the command line.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Runs f, reporting drgrade::Error InvalidArgument as a usage error.
template <typename F>
auto as_usage(F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::InvalidArgument) throw UsageError(e.what());
    throw;
  }
}

void pin_threads(bool deterministic) {
  if (deterministic) omp_set_num_threads(1);
}

struct PreprocessArgs {
  fs::path manifest, images, out;
  EnhanceParams params;
};

int cmd_preprocess(const PreprocessArgs& a, std::ostream& out, std::ostream& err) {
  as_usage([&] {
    a.params.validate();
    return 0;
  });
  const Manifest m = load_manifest(a.manifest, a.images);
  fs::create_directories(a.out);
  std::ostringstream csv;
  csv << "id_code,in_w,in_h,crop_w,crop_h,output\n";
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto& s = m.samples[i];
    PreprocessSummary r;
    try {
      r = preprocess_file(s.path, a.out / (s.id + ".png"), a.params);
    } catch (const Error& e) {
      throw Error(e.kind(), "sample " + s.id + ": " + e.what());
    }
    csv << s.id << "," << r.in_w << "," << r.in_h << "," << r.crop_w << "," << r.crop_h << ","
        << r.out_path.filename().string() << "\n";
    if ((i + 1) % 100 == 0 || i + 1 == m.size()) err << "preprocessed " << (i + 1) << "/" << m.size() << "\n";
  }
  write_file_atomic(a.out / "preprocess_summary.csv", csv.str());
  out << csv.str();
  out << json{{"command", "preprocess"}, {"images", m.size()}, {"size", a.params.size}, {"out", a.out.string()}}.dump()
      << "\n";
  return 0;
}

struct SplitArgs {
  fs::path manifest, images, out;
  std::uint64_t seed = 42;
  std::string ratios = "0.8,0.1,0.1";
  bool strict = false;
};

json distribution_json(const Manifest& m) {
  json j;
  j["n"] = m.size();
  if (m.empty()) return j;
  const auto d = class_distribution(m);
  j["counts"] = d.counts;
  j["percent"] = d.percent;
  return j;
}

int cmd_split(const SplitArgs& a, std::ostream& out) {
  const SplitRatios r = as_usage([&] {
    std::vector<double> v;
    std::stringstream ss(a.ratios);
    std::string tok;
    while (std::getline(ss, tok, ',')) v.push_back(parse_double("ratios", tok));
    DRGRADE_REQUIRE(v.size() == 3, ErrorKind::InvalidArgument, "ratios: expected train,val,test");
    SplitRatios sr{v[0], v[1], v[2]};
    sr.validate();
    return sr;
  });
  const Manifest m = load_manifest(a.manifest, a.images.empty() ? a.manifest.parent_path() : a.images);
  const Split s = stratified_split(m, r, a.seed, a.strict);
  fs::create_directories(a.out);
  write_manifest(s.train, a.out / "train.csv");
  write_manifest(s.val, a.out / "val.csv");
  write_manifest(s.test, a.out / "test.csv");
  json j{{"command", "split"}, {"seed", a.seed}, {"out", a.out.string()}};
  j["all"] = distribution_json(m);
  j["train"] = distribution_json(s.train);
  j["val"] = distribution_json(s.val);
  j["test"] = distribution_json(s.test);
  out << j.dump() << "\n";
  return 0;
}

struct TrainArgs {
  fs::path config;
  KeyValues overrides;
  fs::path manifest;
  std::vector<std::string> sets;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  TrainConfig cfg = as_usage([&] {
    KeyValues file;
    if (!a.config.empty()) file = read_config_file(a.config);
    KeyValues over = a.overrides;
    for (const auto& s : a.sets) {
      auto kv = parse_key_values(s);
      DRGRADE_REQUIRE(kv.size() == 1, ErrorKind::InvalidArgument, "--set expects key=value");
      over.push_back(kv[0]);
    }
    auto c = make_train_config(file, over);
    c.validate();
    return c;
  });
  pin_threads(cfg.deterministic);
  if (cfg.train_manifest.empty()) {
    if (a.manifest.empty()) throw UsageError("train needs --manifest or train_manifest/val_manifest settings");
    // Split the labels file here so a single command runs end to end.
    const Manifest m = load_manifest(a.manifest, cfg.images_dir);
    const Split s = stratified_split(m, SplitRatios{}, cfg.seed);
    fs::create_directories(cfg.out_dir);
    cfg.train_manifest = cfg.out_dir / "train.csv";
    cfg.val_manifest = cfg.out_dir / "val.csv";
    cfg.test_manifest = cfg.out_dir / "test.csv";
    write_manifest(s.train, cfg.train_manifest);
    write_manifest(s.val, cfg.val_manifest);
    write_manifest(s.test, cfg.test_manifest);
  }
  const TrainingResult r = fit(cfg);
  const auto& best = r.history.at(r.best_epoch - 1);
  json j{{"command", "train"},
         {"arch", cfg.arch},
         {"epochs", r.history.size()},
         {"best_epoch", r.best_epoch},
         {"best_val_loss", best.val_loss},
         {"best_val_acc", best.val_acc},
         {"checkpoint", r.best_checkpoint.string()}};
  if (r.test) j["test_acc"] = r.test->accuracy;
  out << j.dump() << "\n";
  return 0;
}

struct EvalArgs {
  fs::path checkpoint, manifest, images, out;
  std::string class_weights;
  std::size_t batch_size = 32;
  bool deterministic = false;
};

int cmd_evaluate(const EvalArgs& a, std::ostream& out) {
  pin_threads(a.deterministic);
  Model<float> model = load_checkpoint<float>(a.checkpoint);
  const ClassWeights w = as_usage([&] {
    if (!a.class_weights.empty()) return parse_class_weights(a.class_weights);
    return arch_family(model.arch()) == "method1" ? ClassWeights::method1() : ClassWeights::transfer();
  });
  if (a.batch_size == 0) throw UsageError("--batch-size must be >= 1");
  const Manifest m = load_manifest(a.manifest, a.images.empty() ? a.manifest.parent_path() : a.images);
  PngSource src(model.input_chw().at(1));
  const EvalResult r = evaluate(model, src, m, w, a.batch_size);
  out << confusion_report(r.confusion);
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    write_file_atomic(a.out / "eval_report.json", json::parse(eval_json(r)).dump(2) + "\n");
    write_file_atomic(a.out / "confusion.csv", confusion_csv(r.confusion));
  }
  json j = json::parse(eval_json(r));
  j["command"] = "evaluate";
  j["n"] = m.size();
  out << j.dump() << "\n";
  return 0;
}

struct PredictArgs {
  fs::path checkpoint, image;
  bool preprocess = false;
  EnhanceParams params;
};

int cmd_predict(const PredictArgs& a, std::ostream& out) {
  Model<float> model = load_checkpoint<float>(a.checkpoint);
  const std::size_t size = model.input_chw().at(1);
  RgbImage img = read_png(a.image);
  if (a.preprocess) {
    EnhanceParams p = a.params;
    p.size = size;
    as_usage([&] {
      p.validate();
      return 0;
    });
    img = preprocess_image(img, p);
  }
  struct One : SampleSource {
    RgbImage img;
    std::size_t size;
    Tensor<float> load(const SampleRecord&) override {
      const RgbImage r = (img.height == size && img.width == size) ? img : resize_bilinear(img, size, size);
      Tensor<float> t({3, size, size});
      const std::size_t plane = size * size;
      for (std::size_t i = 0; i < plane; ++i)
        for (std::size_t c = 0; c < 3; ++c) t[c * plane + i] = r.data[i * 3 + c] / 255.0f;
      return t;
    }
  } src;
  src.img = std::move(img);
  src.size = size;
  const SampleRecord rec{a.image.stem().string(), a.image, 0};
  const Tensor<float> proba = model.predict_proba(make_batch(src, std::span<const SampleRecord>(&rec, 1)));
  std::vector<double> p(proba.data().begin(), proba.data().end());
  const int grade = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
  out << json{{"command", "predict"}, {"image", a.image.string()}, {"grade", grade}, {"probabilities", p}}.dump()
      << "\n";
  return 0;
}

struct InspectArgs {
  std::string arch = "method1";
  fs::path checkpoint;
  fs::path save_init;
  std::uint64_t seed = 42;
  KeyValues overrides;
};

std::string layer_table(const Model<float>& m) {
  std::ostringstream s;
  s << std::left << std::setw(40) << "layer" << std::setw(18) << "kind" << std::setw(22) << "output" << "params\n";
  for (const auto& e : m.shape_trace()) {
    std::string shape = "[";
    for (std::size_t i = 0; i < e.output.size(); ++i) shape += (i ? "," : "") + std::to_string(e.output[i]);
    shape += "]";
    s << std::left << std::setw(40) << (std::string(2 * e.depth, ' ') + e.name) << std::setw(18) << e.kind
      << std::setw(22) << shape << e.params << "\n";
  }
  return s.str();
}

int cmd_inspect(const InspectArgs& a, std::ostream& out) {
  Model<float> model;
  if (!a.checkpoint.empty()) {
    model = load_checkpoint<float>(a.checkpoint);
  } else {
    const TrainConfig cfg = as_usage([&] {
      KeyValues over = a.overrides;
      over.emplace_back("arch", a.arch);
      auto c = make_train_config({}, over);
      c.validate();
      return c;
    });
    model = cfg.arch == "method1" ? build_method1(cfg.method1, a.seed) : build_transfer_model(cfg.transfer, a.seed);
  }
  out << "arch: " << model.arch() << "\n";
  out << layer_table(model);
  const ParamCounts c = model.count_params();
  out << "total: " << c.total << "\n";
  out << "trainable: " << c.trainable << "\n";
  out << "non-trainable: " << c.non_trainable << "\n";
  if (!a.save_init.empty()) save_checkpoint(model, a.save_init);
  json j{{"command", "inspect"},
         {"arch", model.arch()},
         {"total", c.total},
         {"trainable", c.trainable},
         {"non_trainable", c.non_trainable}};
  if (!a.save_init.empty()) j["saved"] = a.save_init.string();
  out << j.dump() << "\n";
  return 0;
}

// Adds the model-shape flags shared by train and inspect; each one lands
// in `kv` under its config key.
void add_model_flags(CLI::App* sub, KeyValues& kv) {
  auto bind = [&kv, sub](const std::string& flag, const std::string& key, const std::string& help) {
    sub->add_option_function<std::string>(
        flag, [&kv, key](const std::string& v) { kv.emplace_back(key, v); }, help);
  };
  bind("--input-size", "input_size", "Input image side length");
  bind("--channels", "channels", "Method-1 conv channels, e.g. 16,32,48");
  bind("--hidden", "hidden", "Method-1 hidden dense units");
  bind("--dropout", "dropout", "Method-1 dropout rate");
  bind("--backbone", "backbone", "Transfer backbone: tiny, b3 or b3_se");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Diabetic retinopathy grading: preprocessing, training and evaluation", "drgrade"};
  app.require_subcommand(1);
  app.fallthrough(false);

  PreprocessArgs pre;
  auto* sp = app.add_subcommand("preprocess", "Crop, resize and enhance every image of a labels file");
  sp->add_option("--manifest", pre.manifest, "Labels CSV (id_code,diagnosis)")->required();
  sp->add_option("--images", pre.images, "Directory of raw <id_code>.png images")->required();
  sp->add_option("--out", pre.out, "Output directory")->required();
  sp->add_option("--sigma", pre.params.sigma, "Gaussian sigma")->capture_default_str();
  sp->add_option("--alpha", pre.params.alpha, "Enhancement gain")->capture_default_str();
  sp->add_option("--offset", pre.params.offset, "Enhancement offset")->capture_default_str();
  sp->add_option("--crop-tol", pre.params.crop_tol, "Black-border tolerance")->capture_default_str();
  sp->add_option("--size", pre.params.size, "Output side length")->capture_default_str();

  SplitArgs split;
  auto* ss = app.add_subcommand("split", "Stratified train/val/test split of a labels file");
  ss->add_option("--manifest", split.manifest, "Labels CSV")->required();
  ss->add_option("--images", split.images, "Image directory (defaults to the manifest's)");
  ss->add_option("--out", split.out, "Output directory for train.csv, val.csv, test.csv")->required();
  ss->add_option("--seed", split.seed, "Shuffle seed")->capture_default_str();
  ss->add_option("--ratios", split.ratios, "train,val,test fractions")->capture_default_str();
  ss->add_flag("--strict", split.strict, "Require at least 3 samples in every present grade");

  TrainArgs train;
  auto* st = app.add_subcommand("train", "Train a model and keep the best checkpoint");
  st->add_option("--config", train.config, "key = value settings file");
  st->add_option("--manifest", train.manifest, "Labels CSV to split when no split manifests are configured");
  {
    auto bind = [&](const std::string& flag, const std::string& key, const std::string& help) {
      st->add_option_function<std::string>(
          flag, [&train, key](const std::string& v) { train.overrides.emplace_back(key, v); }, help);
    };
    bind("--arch", "arch", "method1 or transfer");
    bind("--seed", "seed", "Run seed");
    bind("--images", "images", "Directory of preprocessed images");
    bind("--out", "out", "Output directory");
    bind("--epochs", "epochs", "Number of epochs");
    bind("--batch-size", "batch_size", "Batch size");
    bind("--lr", "lr", "Initial learning rate");
    bind("--class-weights", "class_weights", "Five comma-separated loss weights");
    st->add_flag_callback(
        "--deterministic", [&train] { train.overrides.emplace_back("deterministic", "true"); },
        "Single-threaded, reproducible run");
    add_model_flags(st, train.overrides);
    st->add_option("--set", train.sets, "Any config setting as key=value (repeatable)");
  }

  EvalArgs ev;
  auto* se = app.add_subcommand("evaluate", "Score a checkpoint on a labels file");
  se->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  se->add_option("--manifest", ev.manifest, "Labels CSV")->required();
  se->add_option("--images", ev.images, "Directory of preprocessed images");
  se->add_option("--out", ev.out, "Directory for eval_report.json and confusion.csv");
  se->add_option("--class-weights", ev.class_weights, "Five comma-separated loss weights");
  se->add_option("--batch-size", ev.batch_size, "Batch size")->capture_default_str();
  se->add_flag("--deterministic", ev.deterministic, "Single-threaded run");

  PredictArgs pr;
  auto* spr = app.add_subcommand("predict", "Grade one image");
  spr->add_option("--checkpoint", pr.checkpoint, "Checkpoint file")->required();
  spr->add_option("image,--image", pr.image, "PNG image")->required();
  spr->add_flag("--preprocess", pr.preprocess, "Run crop/resize/enhance before predicting");
  spr->add_option("--sigma", pr.params.sigma, "Gaussian sigma")->capture_default_str();
  spr->add_option("--alpha", pr.params.alpha, "Enhancement gain")->capture_default_str();
  spr->add_option("--offset", pr.params.offset, "Enhancement offset")->capture_default_str();
  spr->add_option("--crop-tol", pr.params.crop_tol, "Black-border tolerance")->capture_default_str();

  InspectArgs in;
  auto* si = app.add_subcommand("inspect", "Print the layer table, shape trace and parameter counts");
  si->add_option("--arch", in.arch, "method1 or transfer")->capture_default_str();
  si->add_option("--checkpoint", in.checkpoint, "Inspect a saved model instead");
  si->add_option("--save-init", in.save_init, "Write the freshly initialized model to this checkpoint");
  si->add_option("--seed", in.seed, "Initialization seed")->capture_default_str();
  add_model_flags(si, in.overrides);

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (sp->parsed()) return cmd_preprocess(pre, out, err);
    if (ss->parsed()) return cmd_split(split, out);
    if (st->parsed()) return cmd_train(train, out);
    if (se->parsed()) return cmd_evaluate(ev, out);
    if (spr->parsed()) return cmd_predict(pr, out);
    if (si->parsed()) return cmd_inspect(in, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  err << app.help();
  return 2;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace drgrade
