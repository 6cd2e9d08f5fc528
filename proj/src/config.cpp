#include "drgrade/config.hpp"

#include <charconv>
#include <cmath>

#include "drgrade/checkpoint.hpp"

namespace drgrade {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename N>
N parse_number(const std::string& key, const std::string& s) {
  N v{};
  const auto t = trim(s);
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  DRGRADE_REQUIRE(ec == std::errc{} && p == t.data() + t.size() && !t.empty(), ErrorKind::InvalidArgument,
                  key + ": cannot parse '" + s + "'");
  return v;
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(',', start);
    out.push_back(trim(std::string_view(s).substr(start, pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

double parse_double(const std::string& key, const std::string& s) {
  const double v = parse_number<double>(key, s);
  DRGRADE_REQUIRE(std::isfinite(v), ErrorKind::InvalidArgument, key + ": value must be finite");
  return v;
}

std::size_t parse_size(const std::string& key, const std::string& s) { return parse_number<std::size_t>(key, s); }
std::uint64_t parse_u64(const std::string& key, const std::string& s) { return parse_number<std::uint64_t>(key, s); }

bool parse_bool(const std::string& key, const std::string& s) {
  const auto t = trim(s);
  if (t == "1" || t == "true" || t == "on" || t == "yes") return true;
  if (t == "0" || t == "false" || t == "off" || t == "no") return false;
  throw Error(ErrorKind::InvalidArgument, key + ": expected a boolean, got '" + s + "'");
}

ClassWeights parse_class_weights(const std::string& s) {
  const auto parts = split_commas(s);
  DRGRADE_REQUIRE(parts.size() == 5, ErrorKind::InvalidArgument, "class weights: expected 5 comma-separated values");
  ClassWeights w;
  for (std::size_t i = 0; i < 5; ++i) w.w[i] = parse_double("class weights", parts[i]);
  w.validate();
  return w;
}

std::vector<std::size_t> parse_size_list(const std::string& s) {
  std::vector<std::size_t> out;
  for (const auto& p : split_commas(s)) out.push_back(parse_size("list", p));
  return out;
}

KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::size_t line_no = 0, start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line(text, start, end - start);
    start = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    DRGRADE_REQUIRE(eq != std::string::npos, ErrorKind::Parse,
                    "config line " + std::to_string(line_no) + ": expected key = value");
    auto key = trim(std::string_view(line).substr(0, eq));
    DRGRADE_REQUIRE(!key.empty(), ErrorKind::Parse, "config line " + std::to_string(line_no) + ": empty key");
    kv.emplace_back(std::move(key), trim(std::string_view(line).substr(eq + 1)));
  }
  return kv;
}

KeyValues read_config_file(const std::filesystem::path& path) { return parse_key_values(read_file_bytes(path)); }

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "arch",          "epochs",          "batch_size",     "lr",
      "optimizer",     "momentum",        "adam_beta1",     "adam_beta2",
      "adam_epsilon",  "scheduler",       "plateau_factor", "plateau_patience",
      "plateau_min_delta", "plateau_metric", "selection",   "class_weights",
      "seed",          "deterministic",   "images",         "train_manifest",
      "val_manifest",  "test_manifest",   "out",            "input_size",
      "channels",      "hidden",          "dropout",        "l2",
      "backbone",      "freeze",          "head_dropout",
  };
  return keys;
}

void apply_setting(TrainConfig& c, const std::string& key, const std::string& v) {
  if (key == "arch") {
    DRGRADE_REQUIRE(v == c.arch, ErrorKind::InvalidArgument, "arch must be resolved before other settings");
  } else if (key == "epochs") {
    c.epochs = parse_size(key, v);
  } else if (key == "batch_size") {
    c.batch_size = parse_size(key, v);
  } else if (key == "lr") {
    c.lr = parse_double(key, v);
  } else if (key == "optimizer") {
    if (v == "adam")
      c.optimizer = OptimizerKind::Adam;
    else if (v == "sgd")
      c.optimizer = OptimizerKind::Sgd;
    else
      throw Error(ErrorKind::InvalidArgument, "optimizer: expected adam or sgd");
  } else if (key == "momentum") {
    c.momentum = parse_double(key, v);
  } else if (key == "adam_beta1") {
    c.adam.beta1 = parse_double(key, v);
  } else if (key == "adam_beta2") {
    c.adam.beta2 = parse_double(key, v);
  } else if (key == "adam_epsilon") {
    c.adam.epsilon = parse_double(key, v);
  } else if (key == "scheduler") {
    c.scheduler = parse_bool(key, v);
  } else if (key == "plateau_factor") {
    c.plateau.factor = parse_double(key, v);
  } else if (key == "plateau_patience") {
    c.plateau.patience = parse_size(key, v);
  } else if (key == "plateau_min_delta") {
    c.plateau.min_delta = parse_double(key, v);
  } else if (key == "plateau_metric") {
    if (v == "val_loss")
      c.plateau_metric = PlateauMetric::ValLoss;
    else if (v == "val_acc")
      c.plateau_metric = PlateauMetric::ValAcc;
    else
      throw Error(ErrorKind::InvalidArgument, "plateau_metric: expected val_loss or val_acc");
  } else if (key == "selection") {
    if (v == "min_val_loss")
      c.selection = Selection::MinValLoss;
    else if (v == "max_val_acc")
      c.selection = Selection::MaxValAcc;
    else
      throw Error(ErrorKind::InvalidArgument, "selection: expected min_val_loss or max_val_acc");
  } else if (key == "class_weights") {
    c.class_weights = parse_class_weights(v);
  } else if (key == "seed") {
    c.seed = parse_u64(key, v);
  } else if (key == "deterministic") {
    c.deterministic = parse_bool(key, v);
  } else if (key == "images") {
    c.images_dir = v;
  } else if (key == "train_manifest") {
    c.train_manifest = v;
  } else if (key == "val_manifest") {
    c.val_manifest = v;
  } else if (key == "test_manifest") {
    c.test_manifest = v;
  } else if (key == "out") {
    c.out_dir = v;
  } else if (key == "input_size") {
    const auto s = parse_size(key, v);
    c.method1.input_size = s;
    c.transfer.backbone.input_size = s;
  } else if (key == "channels") {
    const auto ch = parse_size_list(v);
    DRGRADE_REQUIRE(ch.size() == 3, ErrorKind::InvalidArgument, "channels: expected 3 values");
    std::copy(ch.begin(), ch.end(), c.method1.conv_channels.begin());
  } else if (key == "hidden") {
    c.method1.hidden_units = parse_size(key, v);
  } else if (key == "dropout") {
    c.method1.dropout_rate = parse_double(key, v);
  } else if (key == "l2") {
    c.method1.l2_lambda = parse_double(key, v);
  } else if (key == "backbone") {
    const auto input = c.transfer.backbone.input_size;
    if (v == "tiny")
      c.transfer.backbone = BackboneConfig::tiny(input);
    else if (v == "b3")
      c.transfer.backbone = BackboneConfig::b3_like(input, false);
    else if (v == "b3_se")
      c.transfer.backbone = BackboneConfig::b3_like(input, true);
    else
      throw Error(ErrorKind::InvalidArgument, "backbone: expected tiny, b3 or b3_se");
  } else if (key == "freeze") {
    c.transfer.freeze = parse_bool(key, v);
  } else if (key == "head_dropout") {
    c.transfer.head_dropout = parse_double(key, v);
  } else {
    throw Error(ErrorKind::InvalidArgument, "unknown setting '" + key + "'");
  }
}

TrainConfig make_train_config(const KeyValues& file, const KeyValues& overrides) {
  std::string arch = "method1";
  for (const auto* kv : {&file, &overrides})
    for (const auto& [k, v] : *kv)
      if (k == "arch") arch = v;
  TrainConfig c = TrainConfig::defaults_for(arch);
  for (const auto* kv : {&file, &overrides})
    for (const auto& [k, v] : *kv)
      if (k != "arch") apply_setting(c, k, v);
  c.validate();
  return c;
}

}  // namespace drgrade
