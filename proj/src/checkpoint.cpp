#include "drgrade/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "drgrade/models.hpp"

namespace drgrade {

namespace {

constexpr char kMagic[4] = {'D', 'R', 'C', 'K'};

template <typename T>
constexpr std::uint8_t dtype_code() {
  return std::is_same_v<T, float> ? 0 : 1;
}

class Writer {
 public:
  template <typename U>
  void uint(U v) {
    static_assert(std::is_unsigned_v<U>);
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  template <typename T>
  void value(T v) {
    if constexpr (std::is_same_v<T, float>)
      uint(std::bit_cast<std::uint32_t>(v));
    else
      uint(std::bit_cast<std::uint64_t>(v));
  }
  void bytes(std::string_view s) { out_.append(s); }
  void str16(std::string_view s) {
    DRGRADE_REQUIRE(s.size() <= std::numeric_limits<std::uint16_t>::max(), ErrorKind::InvalidArgument,
                    "checkpoint string too long");
    uint(static_cast<std::uint16_t>(s.size()));
    bytes(s);
  }
  template <typename T>
  void tensor(const NamedTensor<T>& t) {
    str16(t.name);
    uint(dtype_code<T>());
    DRGRADE_REQUIRE(t.value.rank() <= 255, ErrorKind::InvalidArgument, "tensor rank too large");
    uint(static_cast<std::uint8_t>(t.value.rank()));
    for (auto d : t.value.shape()) uint(static_cast<std::uint32_t>(d));
    for (T v : t.value.data()) value(v);
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  template <typename U>
  U uint() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  template <typename T>
  T value() {
    if constexpr (std::is_same_v<T, float>)
      return std::bit_cast<float>(uint<std::uint32_t>());
    else
      return std::bit_cast<double>(uint<std::uint64_t>());
  }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string str16() { return std::string(bytes(uint<std::uint16_t>())); }
  template <typename T>
  NamedTensor<T> tensor() {
    NamedTensor<T> t;
    t.name = str16();
    const auto dtype = uint<std::uint8_t>();
    DRGRADE_REQUIRE(dtype == dtype_code<T>(), ErrorKind::ShapeMismatch,
                    "tensor " + t.name + ": stored dtype " + std::to_string(dtype) + " does not match the model");
    const auto ndim = uint<std::uint8_t>();
    Shape shape(ndim);
    for (auto& d : shape) d = uint<std::uint32_t>();
    const std::size_t n = numel(shape);
    need(n * sizeof(T));
    std::vector<T> data(n);
    for (auto& v : data) v = value<T>();
    t.value = Tensor<T>(std::move(shape), std::move(data));
    return t;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n)
      throw Error(ErrorKind::Truncated, "checkpoint ends at byte " + std::to_string(in_.size()) + ", needed " +
                                            std::to_string(pos_ + n));
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace

template <typename T>
std::string encode_checkpoint(const Checkpoint<T>& ck) {
  Writer w;
  w.bytes(std::string_view(kMagic, 4));
  w.uint(kCheckpointVersion);
  w.str16(ck.arch);
  w.uint(static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& t : ck.tensors) w.tensor(t);
  w.uint(static_cast<std::uint8_t>(ck.state ? 1 : 0));
  if (ck.state) {
    const auto& s = *ck.state;
    w.uint(s.epoch);
    w.uint(s.best_epoch);
    w.f64(s.best_metric);
    w.uint(s.seed);
    w.f64(s.lr);
    w.uint(static_cast<std::uint8_t>(s.optimizer));
    w.uint(s.optimizer_steps);
    w.f64(s.plateau_best);
    w.uint(s.plateau_since);
    w.uint(s.plateau_reductions);
    w.uint(static_cast<std::uint32_t>(s.optimizer_state.size()));
    for (const auto& t : s.optimizer_state) w.tensor(t);
  }
  return w.take();
}

template <typename T>
Checkpoint<T> decode_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw Error(ErrorKind::BadMagic, "not a checkpoint file");
  r.bytes(4);
  const auto version = r.uint<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw Error(ErrorKind::UnsupportedVersion, "checkpoint version " + std::to_string(version));
  Checkpoint<T> ck;
  ck.arch = r.str16();
  const auto count = r.uint<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) ck.tensors.push_back(r.tensor<T>());
  const auto flag = r.uint<std::uint8_t>();
  DRGRADE_REQUIRE(flag <= 1, ErrorKind::Parse, "bad training-state flag");
  if (flag) {
    TrainingState<T> s;
    s.epoch = r.uint<std::uint32_t>();
    s.best_epoch = r.uint<std::uint32_t>();
    s.best_metric = r.f64();
    s.seed = r.uint<std::uint64_t>();
    s.lr = r.f64();
    const auto kind = r.uint<std::uint8_t>();
    DRGRADE_REQUIRE(kind <= 1, ErrorKind::Parse, "unknown optimizer kind " + std::to_string(kind));
    s.optimizer = static_cast<OptimizerKind>(kind);
    s.optimizer_steps = r.uint<std::uint64_t>();
    s.plateau_best = r.f64();
    s.plateau_since = r.uint<std::uint32_t>();
    s.plateau_reductions = r.uint<std::uint32_t>();
    const auto n = r.uint<std::uint32_t>();
    for (std::uint32_t i = 0; i < n; ++i) s.optimizer_state.push_back(r.tensor<T>());
    ck.state = std::move(s);
  }
  DRGRADE_REQUIRE(r.done(), ErrorKind::Parse, "trailing bytes after checkpoint");
  return ck;
}

template <typename T>
Checkpoint<T> snapshot(const Model<T>& m, const TrainingState<T>* state) {
  Checkpoint<T> ck;
  ck.arch = m.arch();
  for (const auto* p : m.params()) ck.tensors.push_back({p->name, p->value});
  if (state) ck.state = *state;
  return ck;
}

template <typename T>
void restore(Model<T>& m, const Checkpoint<T>& ck) {
  DRGRADE_REQUIRE(ck.arch == m.arch(), ErrorKind::ArchMismatch,
                  "checkpoint arch '" + ck.arch + "' vs model '" + m.arch() + "'");
  auto params = m.params();
  DRGRADE_REQUIRE(params.size() == ck.tensors.size(), ErrorKind::ArchMismatch,
                  "checkpoint has " + std::to_string(ck.tensors.size()) + " tensors, model expects " +
                      std::to_string(params.size()));
  // Validate everything before touching the model.
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& t = ck.tensors[i];
    DRGRADE_REQUIRE(t.name == params[i]->name, ErrorKind::ArchMismatch,
                    "tensor " + std::to_string(i) + " is '" + t.name + "', expected '" + params[i]->name + "'");
    DRGRADE_REQUIRE(t.value.shape() == params[i]->value.shape(), ErrorKind::ShapeMismatch,
                    t.name + ": stored " + shape_str(t.value.shape()) + ", expected " +
                        shape_str(params[i]->value.shape()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = ck.tensors[i].value;
}

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  DRGRADE_REQUIRE(f.good(), ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return std::move(ss).str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    DRGRADE_REQUIRE(f.good(), ErrorKind::Io, "cannot write " + tmp.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    f.flush();
    DRGRADE_REQUIRE(f.good(), ErrorKind::Io, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

template <typename T>
void save_checkpoint(const Model<T>& m, const std::filesystem::path& path, const TrainingState<T>* state) {
  write_file_atomic(path, encode_checkpoint(snapshot(m, state)));
}

template <typename T>
Checkpoint<T> read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint<T>(read_file_bytes(path));
}

template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path, TrainingState<T>* state_out,
                         std::string_view expected_family) {
  auto ck = read_checkpoint<T>(path);
  const std::string family = arch_family(ck.arch);
  if (!expected_family.empty() && family != expected_family)
    throw Error(ErrorKind::ArchMismatch,
                "checkpoint holds a '" + family + "' model, expected '" + std::string(expected_family) + "'");
  Model<T> m = build_from_tag<T>(ck.arch, 0);
  restore(m, ck);
  if (state_out && ck.state) *state_out = std::move(*ck.state);
  return m;
}

#define DRGRADE_INSTANTIATE(T)                                                                              \
  template std::string encode_checkpoint<T>(const Checkpoint<T>&);                                          \
  template Checkpoint<T> decode_checkpoint<T>(std::string_view);                                            \
  template Checkpoint<T> snapshot<T>(const Model<T>&, const TrainingState<T>*);                             \
  template void restore<T>(Model<T>&, const Checkpoint<T>&);                                                \
  template void save_checkpoint<T>(const Model<T>&, const std::filesystem::path&, const TrainingState<T>*); \
  template Checkpoint<T> read_checkpoint<T>(const std::filesystem::path&);                                  \
  template Model<T> load_checkpoint<T>(const std::filesystem::path&, TrainingState<T>*, std::string_view);
DRGRADE_INSTANTIATE(float)
DRGRADE_INSTANTIATE(double)
#undef DRGRADE_INSTANTIATE

}  // namespace drgrade
