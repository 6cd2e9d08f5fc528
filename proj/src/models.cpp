#include "drgrade/models.hpp"

#include <charconv>
#include <map>
#include <sstream>

#include "drgrade/init.hpp"

namespace drgrade {

namespace {

template <typename T>
void init_weight(Param<T>& p, std::uint64_t seed) {
  p.value = glorot_normal_init<T>(p.value.shape(), seed);
}

std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, const std::string& key) {
  double v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  DRGRADE_REQUIRE(res.ec == std::errc() && res.ptr == s.data() + s.size(), ErrorKind::Parse,
                  "arch tag: bad number for '" + key + "': " + s);
  return v;
}

std::size_t parse_size(const std::string& s, const std::string& key) {
  std::size_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  DRGRADE_REQUIRE(res.ec == std::errc() && res.ptr == s.data() + s.size(), ErrorKind::Parse,
                  "arch tag: bad integer for '" + key + "': " + s);
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::map<std::string, std::string> tag_fields(const std::string& tag) {
  std::map<std::string, std::string> kv;
  auto parts = split(tag, ';');
  for (std::size_t i = 1; i < parts.size(); ++i) {
    const auto eq = parts[i].find('=');
    DRGRADE_REQUIRE(eq != std::string::npos, ErrorKind::Parse, "arch tag: malformed field '" + parts[i] + "'");
    kv[parts[i].substr(0, eq)] = parts[i].substr(eq + 1);
  }
  return kv;
}

const std::string& field(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  DRGRADE_REQUIRE(it != kv.end(), ErrorKind::Parse, "arch tag: missing field '" + key + "'");
  return it->second;
}

template <typename T>
LayerPtr<T> make_conv(const std::string& name, const Conv2dOptions& o, std::uint64_t seed) {
  auto conv = std::make_unique<Conv2d<T>>(name, o);
  init_weight(conv->weight(), seed);
  return conv;
}

}  // namespace

// --------------------------------------------------------------- method 1

template <typename T>
Model<T> build_method1_as(const Method1Config& cfg, std::uint64_t seed) {
  DRGRADE_REQUIRE(cfg.num_classes >= 1 && cfg.hidden_units >= 1, ErrorKind::InvalidArgument,
                  "method1: classes and hidden units must be >= 1");
  Model<T> m(arch_tag(cfg), {3, cfg.input_size, cfg.input_size});
  m.set_softmax_output(true);
  std::size_t in_ch = 3, spatial = cfg.input_size;
  std::uint64_t k = 0;
  for (std::size_t b = 0; b < 3; ++b) {
    const std::size_t kernel = Method1Config::kKernels[b];
    DRGRADE_REQUIRE(spatial >= kernel && (spatial - kernel + 1) >= 2, ErrorKind::ShapeMismatch,
                    "method1: input size " + std::to_string(cfg.input_size) + " underflows block " +
                        std::to_string(b + 1));
    const std::string id = std::to_string(b + 1);
    const std::size_t out_ch = cfg.conv_channels[b];
    m.add(make_conv<T>("conv" + id, {in_ch, out_ch, kernel, 1, Padding::Valid, false, true}, mix_seed({seed, k++})));
    m.add(std::make_unique<BatchNorm2d<T>>("bn" + id, out_ch, cfg.bn_momentum, cfg.bn_epsilon));
    m.add(std::make_unique<ReLU<T>>("relu" + id));
    m.add(std::make_unique<Dropout<T>>("drop" + id + "a", cfg.dropout_rate, mix_seed({seed, k++})));
    m.add(std::make_unique<MaxPool2d<T>>("pool" + id));
    m.add(std::make_unique<Dropout<T>>("drop" + id + "b", cfg.dropout_rate, mix_seed({seed, k++})));
    spatial = (spatial - kernel + 1) / 2;
    in_ch = out_ch;
  }
  const std::size_t flat = in_ch * spatial * spatial;
  m.add(std::make_unique<Flatten<T>>("flatten"));
  auto fc1 = std::make_unique<Dense<T>>("fc1", flat, cfg.hidden_units);
  init_weight(fc1->weight(), mix_seed({seed, k++}));
  m.add(std::move(fc1));
  m.add(std::make_unique<ReLU<T>>("relu_fc1"));
  auto fc2 = std::make_unique<Dense<T>>("fc2", cfg.hidden_units, cfg.num_classes);
  init_weight(fc2->weight(), mix_seed({seed, k++}));
  m.add(std::move(fc2));
  return m;
}

Model<float> build_method1(const Method1Config& cfg, std::uint64_t seed) { return build_method1_as<float>(cfg, seed); }

// ----------------------------------------------------------------- MBConv

template <typename T>
LayerPtr<T> build_mbconv_block(const std::string& name, const MBConvConfig& cfg, std::uint64_t seed) {
  DRGRADE_REQUIRE(cfg.kernel == 3 || cfg.kernel == 5, ErrorKind::InvalidArgument, name + ": kernel must be 3 or 5");
  DRGRADE_REQUIRE(cfg.stride == 1 || cfg.stride == 2, ErrorKind::InvalidArgument, name + ": stride must be 1 or 2");
  DRGRADE_REQUIRE(cfg.expand_ratio >= 1 && cfg.in_channels >= 1 && cfg.out_channels >= 1,
                  ErrorKind::InvalidArgument, name + ": channels and expand ratio must be >= 1");
  const bool residual = cfg.stride == 1 && cfg.in_channels == cfg.out_channels;
  auto block = std::make_unique<Sequential<T>>(name, residual);
  block->set_kind("mbconv");
  const std::size_t hidden = cfg.hidden_channels();
  std::uint64_t k = 0;
  if (cfg.expand_ratio != 1) {
    block->add(make_conv<T>(name + ".expand_conv", {cfg.in_channels, hidden, 1, 1, Padding::Valid, false, false},
                            mix_seed({seed, k++})));
    block->add(std::make_unique<BatchNorm2d<T>>(name + ".bn0", hidden));
    block->add(std::make_unique<Swish<T>>(name + ".swish0"));
  }
  block->add(make_conv<T>(name + ".depthwise_conv",
                          {hidden, hidden, cfg.kernel, cfg.stride, Padding::Same, true, false},
                          mix_seed({seed, k++})));
  block->add(std::make_unique<BatchNorm2d<T>>(name + ".bn1", hidden));
  block->add(std::make_unique<Swish<T>>(name + ".swish1"));
  if (cfg.squeeze_excite) {
    const std::size_t squeezed =
        std::max<std::size_t>(1, static_cast<std::size_t>(static_cast<double>(cfg.in_channels) * cfg.se_ratio));
    auto se = std::make_unique<SqueezeExcite<T>>(name + ".se", hidden, squeezed);
    for (auto* p : se->params())
      if (p->regularized) init_weight(*p, mix_seed({seed, k++}));
    block->add(std::move(se));
  }
  block->add(make_conv<T>(name + ".project_conv", {hidden, cfg.out_channels, 1, 1, Padding::Valid, false, false},
                          mix_seed({seed, k++})));
  block->add(std::make_unique<BatchNorm2d<T>>(name + ".bn2", cfg.out_channels));
  return block;
}

// --------------------------------------------------------------- backbone

std::size_t BackboneConfig::feature_dim() const {
  if (head_channels) return head_channels;
  return blocks.empty() ? stem_channels : blocks.back().out_channels;
}

void BackboneConfig::validate() const {
  std::size_t ch = stem_channels;
  DRGRADE_REQUIRE(stem_channels >= 1 && (stem_kernel % 2 == 1) && (stem_stride == 1 || stem_stride == 2),
                  ErrorKind::InvalidArgument, "backbone: bad stem");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    DRGRADE_REQUIRE(blocks[i].in_channels == ch, ErrorKind::InvalidArgument,
                    "backbone: block " + std::to_string(i) + " expects " + std::to_string(blocks[i].in_channels) +
                        " channels but receives " + std::to_string(ch));
    ch = blocks[i].out_channels;
  }
}

BackboneConfig BackboneConfig::tiny(std::size_t input_size) {
  BackboneConfig b;
  b.input_size = input_size;
  b.stem_channels = 8;
  b.blocks = {{8, 16, 1, 3, 1}, {16, 32, 6, 5, 2}};
  return b;
}

BackboneConfig BackboneConfig::b3_like(std::size_t input_size, bool squeeze_excite) {
  struct Stage {
    std::size_t expand, kernel, stride, out, repeats;
  };
  // Width 1.2 / depth 1.4 scaling of the baseline stage table.
  const Stage stages[] = {{1, 3, 1, 24, 2}, {6, 3, 2, 32, 3}, {6, 5, 2, 48, 3}, {6, 3, 2, 96, 5},
                          {6, 5, 1, 136, 5}, {6, 5, 2, 232, 6}, {6, 3, 1, 384, 2}};
  BackboneConfig b;
  b.input_size = input_size;
  b.stem_channels = 40;
  b.stem_kernel = 3;
  b.stem_stride = 2;
  std::size_t ch = b.stem_channels;
  for (const auto& s : stages) {
    for (std::size_t r = 0; r < s.repeats; ++r) {
      MBConvConfig blk{r == 0 ? ch : s.out, s.out, s.expand, s.kernel, r == 0 ? s.stride : 1, squeeze_excite, 0.25};
      b.blocks.push_back(blk);
    }
    ch = s.out;
  }
  b.head_channels = 1536;
  return b;
}

template <typename T>
Model<T> build_transfer_model_as(const TransferConfig& cfg, std::uint64_t seed) {
  const BackboneConfig& b = cfg.backbone;
  b.validate();
  Model<T> m(arch_tag(cfg), {3, b.input_size, b.input_size});
  std::uint64_t k = 0;
  m.add(make_conv<T>("stem.conv", {3, b.stem_channels, b.stem_kernel, b.stem_stride, Padding::Same, false, false},
                     mix_seed({seed, k++})));
  m.add(std::make_unique<BatchNorm2d<T>>("stem.bn", b.stem_channels));
  m.add(std::make_unique<Swish<T>>("stem.swish"));
  for (std::size_t i = 0; i < b.blocks.size(); ++i)
    m.add(build_mbconv_block<T>("blocks." + std::to_string(i), b.blocks[i], mix_seed({seed, k++})));
  if (b.head_channels) {
    const std::size_t in = b.blocks.empty() ? b.stem_channels : b.blocks.back().out_channels;
    m.add(make_conv<T>("top.conv", {in, b.head_channels, 1, 1, Padding::Valid, false, false}, mix_seed({seed, k++})));
    m.add(std::make_unique<BatchNorm2d<T>>("top.bn", b.head_channels));
    m.add(std::make_unique<Swish<T>>("top.swish"));
  }
  m.add(std::make_unique<AdaptiveAvgPool2d<T>>("avgpool"));
  m.add(std::make_unique<Flatten<T>>("flatten"));
  m.add(std::make_unique<Dropout<T>>("head_dropout", cfg.head_dropout, mix_seed({seed, k++})));
  auto head = std::make_unique<Dense<T>>("head", b.feature_dim(), cfg.num_classes);
  init_weight(head->weight(), mix_seed({seed, k++}));
  m.add(std::move(head));
  if (cfg.freeze) freeze_backbone(m);
  return m;
}

Model<float> build_transfer_model(const TransferConfig& cfg, std::uint64_t seed) {
  return build_transfer_model_as<float>(cfg, seed);
}

template <typename T>
void freeze_backbone(Model<T>& m) {
  std::size_t last_dense = m.num_layers();
  for (std::size_t i = m.num_layers(); i-- > 0;)
    if (dynamic_cast<Dense<T>*>(&m.layer(i))) {
      last_dense = i;
      break;
    }
  DRGRADE_REQUIRE(last_dense < m.num_layers(), ErrorKind::InvalidArgument, "freeze_backbone: model has no dense head");
  for (std::size_t i = 0; i < m.num_layers(); ++i)
    for (auto* p : m.layer(i).params()) p->trainable = (i == last_dense) && !p->buffer;
}

// ------------------------------------------------------------------- tags

std::string arch_tag(const Method1Config& c) {
  std::ostringstream s;
  s << "method1;input=" << c.input_size << ";channels=" << c.conv_channels[0] << "," << c.conv_channels[1] << ","
    << c.conv_channels[2] << ";hidden=" << c.hidden_units << ";classes=" << c.num_classes
    << ";dropout=" << fmt_double(c.dropout_rate) << ";l2=" << fmt_double(c.l2_lambda);
  return s.str();
}

std::string arch_tag(const TransferConfig& c) {
  std::ostringstream s;
  const auto& b = c.backbone;
  s << "transfer;input=" << b.input_size << ";stem=" << b.stem_channels << "," << b.stem_kernel << ","
    << b.stem_stride << ";blocks=";
  for (std::size_t i = 0; i < b.blocks.size(); ++i) {
    const auto& k = b.blocks[i];
    if (i) s << "|";
    s << k.in_channels << "-" << k.out_channels << "-" << k.expand_ratio << "-" << k.kernel << "-" << k.stride << "-"
      << (k.squeeze_excite ? 1 : 0);
  }
  s << ";top=" << b.head_channels << ";classes=" << c.num_classes << ";dropout=" << fmt_double(c.head_dropout)
    << ";freeze=" << (c.freeze ? 1 : 0);
  return s.str();
}

std::string arch_family(const std::string& tag) { return tag.substr(0, tag.find(';')); }

Method1Config parse_method1_tag(const std::string& tag) {
  DRGRADE_REQUIRE(arch_family(tag) == "method1", ErrorKind::ArchMismatch, "expected a method1 tag, got '" + tag + "'");
  const auto kv = tag_fields(tag);
  Method1Config c;
  c.input_size = parse_size(field(kv, "input"), "input");
  const auto ch = split(field(kv, "channels"), ',');
  DRGRADE_REQUIRE(ch.size() == 3, ErrorKind::Parse, "arch tag: channels needs 3 values");
  for (std::size_t i = 0; i < 3; ++i) c.conv_channels[i] = parse_size(ch[i], "channels");
  c.hidden_units = parse_size(field(kv, "hidden"), "hidden");
  c.num_classes = parse_size(field(kv, "classes"), "classes");
  c.dropout_rate = parse_double(field(kv, "dropout"), "dropout");
  c.l2_lambda = parse_double(field(kv, "l2"), "l2");
  return c;
}

TransferConfig parse_transfer_tag(const std::string& tag) {
  DRGRADE_REQUIRE(arch_family(tag) == "transfer", ErrorKind::ArchMismatch,
                  "expected a transfer tag, got '" + tag + "'");
  const auto kv = tag_fields(tag);
  TransferConfig c;
  auto& b = c.backbone;
  b.input_size = parse_size(field(kv, "input"), "input");
  const auto stem = split(field(kv, "stem"), ',');
  DRGRADE_REQUIRE(stem.size() == 3, ErrorKind::Parse, "arch tag: stem needs 3 values");
  b.stem_channels = parse_size(stem[0], "stem");
  b.stem_kernel = parse_size(stem[1], "stem");
  b.stem_stride = parse_size(stem[2], "stem");
  b.blocks.clear();
  const std::string& blocks = field(kv, "blocks");
  if (!blocks.empty())
    for (const auto& spec : split(blocks, '|')) {
      const auto f = split(spec, '-');
      DRGRADE_REQUIRE(f.size() == 6, ErrorKind::Parse, "arch tag: bad block '" + spec + "'");
      MBConvConfig k;
      k.in_channels = parse_size(f[0], "blocks");
      k.out_channels = parse_size(f[1], "blocks");
      k.expand_ratio = parse_size(f[2], "blocks");
      k.kernel = parse_size(f[3], "blocks");
      k.stride = parse_size(f[4], "blocks");
      k.squeeze_excite = parse_size(f[5], "blocks") != 0;
      b.blocks.push_back(k);
    }
  b.head_channels = parse_size(field(kv, "top"), "top");
  c.num_classes = parse_size(field(kv, "classes"), "classes");
  c.head_dropout = parse_double(field(kv, "dropout"), "dropout");
  c.freeze = parse_size(field(kv, "freeze"), "freeze") != 0;
  return c;
}

template <typename T>
Model<T> build_from_tag(const std::string& tag, std::uint64_t seed) {
  const std::string family = arch_family(tag);
  if (family == "method1") return build_method1_as<T>(parse_method1_tag(tag), seed);
  if (family == "transfer") return build_transfer_model_as<T>(parse_transfer_tag(tag), seed);
  throw Error(ErrorKind::ArchMismatch, "unknown architecture family '" + family + "'");
}

#define DRGRADE_INSTANTIATE(T)                                                                        \
  template Model<T> build_method1_as<T>(const Method1Config&, std::uint64_t);                         \
  template LayerPtr<T> build_mbconv_block<T>(const std::string&, const MBConvConfig&, std::uint64_t); \
  template Model<T> build_transfer_model_as<T>(const TransferConfig&, std::uint64_t);                 \
  template void freeze_backbone<T>(Model<T>&);                                                        \
  template Model<T> build_from_tag<T>(const std::string&, std::uint64_t);

DRGRADE_INSTANTIATE(float)
DRGRADE_INSTANTIATE(double)

}  // namespace drgrade
