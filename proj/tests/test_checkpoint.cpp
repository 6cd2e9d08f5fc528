#include <doctest.h>

#include <cstring>
#include <fstream>

#include "drgrade/checkpoint.hpp"
#include "drgrade/error.hpp"
#include "drgrade/models.hpp"
#include "test_support.hpp"

using namespace drgrade;
using drgrade::testing::fresh_dir;

namespace {

Method1Config small_method1() {
  Method1Config c;
  c.input_size = 64;
  c.conv_channels = {3, 4, 5};
  c.hidden_units = 8;
  return c;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error thrown");
  return ErrorKind::State;
}

TrainingState<float> sample_state(const Model<float>& m) {
  TrainingState<float> s;
  s.epoch = 7;
  s.best_epoch = 4;
  s.best_metric = 0.3125;
  s.seed = 99;
  s.lr = 8.5e-5;
  s.optimizer = OptimizerKind::Sgd;
  s.optimizer_steps = 123;
  s.plateau_best = 0.75;
  s.plateau_since = 1;
  s.plateau_reductions = 2;
  for (const auto* p : m.params())
    if (p->trainable) {
      Tensor<float> v(p->value.shape());
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.001f * static_cast<float>(i);
      s.optimizer_state.push_back({"sgd.v." + p->name, v});
    }
  return s;
}

}  // namespace

TEST_CASE("save, load, save is byte-identical") {
  const auto dir = fresh_dir("ckpt_roundtrip");
  SUBCASE("method1 without state") {
    const Model<float> m = build_method1(small_method1(), 5);
    save_checkpoint(m, dir / "a.ckpt");
    Model<float> back = load_checkpoint<float>(dir / "a.ckpt");
    save_checkpoint(back, dir / "b.ckpt");
    CHECK(read_file_bytes(dir / "a.ckpt") == read_file_bytes(dir / "b.ckpt"));
    CHECK(back.arch() == m.arch());
    CHECK(back.count_params() == m.count_params());
  }
  SUBCASE("transfer model with training state") {
    const Model<float> m = build_transfer_model(TransferConfig{}, 3);
    const auto st = sample_state(m);
    save_checkpoint(m, dir / "t.ckpt", &st);
    TrainingState<float> loaded;
    Model<float> back = load_checkpoint<float>(dir / "t.ckpt", &loaded, "transfer");
    save_checkpoint(back, dir / "t2.ckpt", &loaded);
    CHECK(read_file_bytes(dir / "t.ckpt") == read_file_bytes(dir / "t2.ckpt"));
    CHECK(loaded.epoch == 7);
    CHECK(loaded.best_epoch == 4);
    CHECK(loaded.best_metric == 0.3125);
    CHECK(loaded.lr == 8.5e-5);
    CHECK(loaded.optimizer == OptimizerKind::Sgd);
    CHECK(loaded.optimizer_steps == 123);
    CHECK(loaded.plateau_reductions == 2);
    REQUIRE(loaded.optimizer_state.size() == st.optimizer_state.size());
    for (std::size_t i = 0; i < st.optimizer_state.size(); ++i) {
      CHECK(loaded.optimizer_state[i].name == st.optimizer_state[i].name);
      CHECK(loaded.optimizer_state[i].value == st.optimizer_state[i].value);
    }
    // trainability is a property of the architecture, not of the file
    CHECK(back.count_params() == m.count_params());
  }
}

TEST_CASE("loaded tensors are bit-exact") {
  const Model<float> m = build_method1(small_method1(), 11);
  const auto bytes = encode_checkpoint(snapshot(m));
  const auto ck = decode_checkpoint<float>(bytes);
  const auto ps = m.params();
  REQUIRE(ck.tensors.size() == ps.size());
  for (std::size_t i = 0; i < ps.size(); ++i) {
    CHECK(ck.tensors[i].name == ps[i]->name);
    CHECK(std::memcmp(ck.tensors[i].value.ptr(), ps[i]->value.ptr(), ps[i]->value.size() * sizeof(float)) == 0);
  }
  CHECK_FALSE(ck.state.has_value());
}

TEST_CASE("header layout") {
  const Model<float> m = build_method1(small_method1(), 1);
  const auto bytes = encode_checkpoint(snapshot(m));
  REQUIRE(bytes.size() > 16);
  CHECK(bytes.substr(0, 4) == "DRCK");
  CHECK(static_cast<unsigned char>(bytes[4]) == 1);
  CHECK(bytes[5] == 0);
  const std::size_t tag_len = static_cast<unsigned char>(bytes[8]) | (static_cast<unsigned char>(bytes[9]) << 8);
  CHECK(bytes.substr(10, tag_len) == m.arch());
}

TEST_CASE("corrupt checkpoints are rejected") {
  const Model<float> m = build_method1(small_method1(), 1);
  const std::string good = encode_checkpoint(snapshot(m));

  SUBCASE("bad magic") {
    std::string b = good;
    b[0] = 'X';
    CHECK(kind_of([&] { decode_checkpoint<float>(b); }) == ErrorKind::BadMagic);
  }
  SUBCASE("unsupported version") {
    std::string b = good;
    b[4] = 2;
    CHECK(kind_of([&] { decode_checkpoint<float>(b); }) == ErrorKind::UnsupportedVersion);
  }
  SUBCASE("truncated at every length") {
    for (std::size_t n = 0; n < good.size(); n += 1 + n / 7) {
      const auto k = kind_of([&] { decode_checkpoint<float>(good.substr(0, n)); });
      CHECK((k == ErrorKind::Truncated || (n < 4 && k == ErrorKind::BadMagic)));
    }
  }
  SUBCASE("trailing bytes") {
    CHECK(kind_of([&] { decode_checkpoint<float>(good + "x"); }) == ErrorKind::Parse);
  }
  SUBCASE("dtype mismatch") {
    CHECK(kind_of([&] { decode_checkpoint<double>(good); }) == ErrorKind::ShapeMismatch);
  }
  SUBCASE("missing file") {
    CHECK(kind_of([&] { read_checkpoint<float>(fresh_dir("ckpt_missing") / "none.ckpt"); }) == ErrorKind::Io);
  }
}

TEST_CASE("architecture and shape checks") {
  const auto dir = fresh_dir("ckpt_arch");
  const Model<float> m = build_method1(small_method1(), 1);
  save_checkpoint(m, dir / "m1.ckpt");

  CHECK(kind_of([&] { load_checkpoint<float>(dir / "m1.ckpt", nullptr, "transfer"); }) == ErrorKind::ArchMismatch);
  CHECK_NOTHROW(load_checkpoint<float>(dir / "m1.ckpt", nullptr, "method1"));

  SUBCASE("different tag") {
    Method1Config other = small_method1();
    other.hidden_units = 9;
    Model<float> target = build_method1(other, 1);
    CHECK(kind_of([&] { restore(target, read_checkpoint<float>(dir / "m1.ckpt")); }) == ErrorKind::ArchMismatch);
  }
  SUBCASE("tensor of the wrong shape") {
    auto ck = read_checkpoint<float>(dir / "m1.ckpt");
    ck.tensors[0].value = Tensor<float>({1, 2, 3});
    Model<float> target = build_method1(small_method1(), 2);
    CHECK(kind_of([&] { restore(target, ck); }) == ErrorKind::ShapeMismatch);
  }
  SUBCASE("renamed tensor") {
    auto ck = read_checkpoint<float>(dir / "m1.ckpt");
    ck.tensors[1].name = "bogus";
    Model<float> target = build_method1(small_method1(), 2);
    CHECK(kind_of([&] { restore(target, ck); }) == ErrorKind::ArchMismatch);
  }
}

TEST_CASE("restore makes models compute identically") {
  Model<float> a = build_method1(small_method1(), 21);
  Model<float> b = build_method1(small_method1(), 22);
  const auto x = drgrade::testing::random_tensor<float>({2, 3, 64, 64}, 3);
  CHECK_FALSE(a.forward(x, Mode::Eval) == b.forward(x, Mode::Eval));
  restore(b, snapshot(a));
  CHECK(a.forward(x, Mode::Eval) == b.forward(x, Mode::Eval));
}

TEST_CASE("atomic write replaces the old file") {
  const auto dir = fresh_dir("ckpt_atomic");
  write_file_atomic(dir / "f.bin", "first");
  write_file_atomic(dir / "f.bin", "second");
  CHECK(read_file_bytes(dir / "f.bin") == "second");
  std::size_t entries = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir)) ++entries;
  CHECK(entries == 1);
}
