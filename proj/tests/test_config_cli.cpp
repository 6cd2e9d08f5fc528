#include <doctest.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "drgrade/cli.hpp"
#include "drgrade/config.hpp"
#include "drgrade/error.hpp"
#include "test_support.hpp"

using namespace drgrade;
using drgrade::testing::fresh_dir;
using nlohmann::json;

namespace {

struct CliRun {
  int code;
  std::string out, err;
  json last_json() const {
    const auto end = out.find_last_not_of('\n');
    const auto start = out.rfind('\n', end);
    return json::parse(out.substr(start == std::string::npos ? 0 : start + 1, end - start));
  }
};

CliRun cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
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

const std::vector<std::string> kReducedFlags{"--input-size", "64", "--channels", "4,8,12", "--hidden", "16"};

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("key-value parsing") {
  const auto kv = parse_key_values("# comment\n\nepochs = 5\n  lr=0.001   # trailing\nepochs = 7\n");
  REQUIRE(kv.size() == 3);
  CHECK(kv[0] == std::pair<std::string, std::string>{"epochs", "5"});
  CHECK(kv[1] == std::pair<std::string, std::string>{"lr", "0.001"});
  CHECK(kv[2].second == "7");
  try {
    parse_key_values("epochs = 5\nno equals sign\n");
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("config line 2") != std::string::npos);
  }
}

TEST_CASE("train config assembly") {
  SUBCASE("method1 defaults") {
    const auto cfg = make_train_config({}, {});
    CHECK(cfg.arch == "method1");
    CHECK(cfg.batch_size == 32);
    CHECK(cfg.epochs == 200);
  }
  SUBCASE("arch in the file loads its defaults, later settings win") {
    const auto cfg = make_train_config({{"epochs", "9"}, {"arch", "transfer"}, {"epochs", "11"}}, {{"lr", "0.05"}});
    CHECK(cfg.arch == "transfer");
    CHECK(cfg.batch_size == 64);
    CHECK(cfg.optimizer == OptimizerKind::Sgd);
    CHECK(cfg.epochs == 11);
    CHECK(cfg.lr == 0.05);
  }
  SUBCASE("override arch beats the file") {
    const auto cfg = make_train_config({{"arch", "transfer"}}, {{"arch", "method1"}});
    CHECK(cfg.arch == "method1");
    CHECK(cfg.batch_size == 32);
  }
  SUBCASE("every documented key") {
    TrainConfig cfg;
    apply_setting(cfg, "class_weights", "1,2,3,4,5");
    CHECK(cfg.class_weights.w == std::array<double, 5>{1, 2, 3, 4, 5});
    apply_setting(cfg, "optimizer", "sgd");
    CHECK(cfg.optimizer == OptimizerKind::Sgd);
    apply_setting(cfg, "selection", "max_val_acc");
    CHECK(cfg.selection == Selection::MaxValAcc);
    apply_setting(cfg, "plateau_metric", "val_acc");
    CHECK(cfg.plateau_metric == PlateauMetric::ValAcc);
    apply_setting(cfg, "channels", "4,8,12");
    CHECK(cfg.method1.conv_channels == std::array<std::size_t, 3>{4, 8, 12});
    apply_setting(cfg, "deterministic", "true");
    CHECK(cfg.deterministic);
    apply_setting(cfg, "seed", "18446744073709551615");
    CHECK(cfg.seed == 18446744073709551615ull);
    apply_setting(cfg, "backbone", "b3");
    CHECK(cfg.transfer.backbone.feature_dim() == 1536);
    CHECK(config_keys().size() >= 30);
  }
  SUBCASE("bad settings") {
    TrainConfig cfg;
    CHECK(kind_of([&] { apply_setting(cfg, "learning_rate", "1"); }) == ErrorKind::InvalidArgument);
    CHECK(kind_of([&] { apply_setting(cfg, "epochs", "ten"); }) == ErrorKind::InvalidArgument);
    CHECK(kind_of([&] { apply_setting(cfg, "epochs", "-3"); }) == ErrorKind::InvalidArgument);
    CHECK(kind_of([&] { apply_setting(cfg, "lr", "1e-3x"); }) == ErrorKind::InvalidArgument);
    CHECK(kind_of([&] { apply_setting(cfg, "optimizer", "rmsprop"); }) == ErrorKind::InvalidArgument);
    CHECK(kind_of([&] { apply_setting(cfg, "deterministic", "maybe"); }) == ErrorKind::InvalidArgument);
    CHECK(kind_of([&] { parse_class_weights("1,2,3,4"); }) == ErrorKind::InvalidArgument);
    CHECK(kind_of([&] { parse_class_weights("1,2,3,4,-5"); }) == ErrorKind::InvalidArgument);
    CHECK(kind_of([&] { make_train_config({{"epochs", "0"}}, {}); }) == ErrorKind::InvalidArgument);
  }
}

TEST_CASE("cli exit codes") {
  CHECK(cli({}).code == 2);
  CHECK(cli({"frobnicate"}).code == 2);
  CHECK(cli({"--help"}).code == 0);
  CHECK(cli({"train", "--help"}).code == 0);
  CHECK(cli({"split", "--out", "x"}).code == 2);                     // missing --manifest
  CHECK(cli({"train", "--epochs", "ten"}).code == 2);                 // malformed value
  CHECK(cli({"train", "--set", "bogus=1", "--manifest", "m"}).code == 2);  // unknown key
  const auto dir = fresh_dir("cli_codes");
  const auto missing = cli({"evaluate", "--checkpoint", (dir / "none.ckpt").string(), "--manifest", "m.csv"});
  CHECK(missing.code == 1);
  CHECK(missing.err.find("error") != std::string::npos);
}

TEST_CASE("inspect reports the parameter split") {
  const auto r = cli({"inspect", "--arch", "method1"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("non-trainable: 192") != std::string::npos);
  CHECK(r.out.find("total: 26814631") != std::string::npos);
  const auto j = r.last_json();
  CHECK(j["non_trainable"] == 192);

  const auto t = cli({"inspect", "--arch", "transfer", "--backbone", "b3", "--input-size", "64"});
  REQUIRE(t.code == 0);
  CHECK(t.last_json()["trainable"] == 7685);
}

TEST_CASE("predict on a constant image") {
  const auto dir = fresh_dir("cli_predict");
  const auto ckpt = (dir / "init.ckpt").string();
  REQUIRE(cli(concat({"inspect", "--arch", "method1", "--save-init", ckpt}, kReducedFlags)).code == 0);
  RgbImage gray(64, 64, 3);
  std::fill(gray.data.begin(), gray.data.end(), std::uint8_t{128});
  write_png(dir / "gray.png", gray);

  const auto r = cli({"predict", "--checkpoint", ckpt, (dir / "gray.png").string()});
  REQUIRE(r.code == 0);
  const auto j = r.last_json();
  REQUIRE(j["probabilities"].size() == 5);
  double s = 0;
  for (double p : j["probabilities"]) {
    CHECK(p >= 0);
    s += p;
  }
  CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
  const int grade = j["grade"];
  CHECK(grade >= 0);
  CHECK(grade <= 4);

  // a constant image has no foreground to crop
  CHECK(cli({"predict", "--checkpoint", ckpt, "--preprocess", (dir / "gray.png").string()}).code == 0);
  RgbImage black(64, 64, 3);
  write_png(dir / "black.png", black);
  CHECK(cli({"predict", "--checkpoint", ckpt, "--preprocess", (dir / "black.png").string()}).code == 1);
}

TEST_CASE("split, preprocess, train and evaluate through the cli") {
  const auto dir = fresh_dir("cli_flow");
  const auto labels = drgrade::testing::write_png_set(dir / "raw", 10, 72, 3);

  const auto sp = cli({"split", "--manifest", labels.string(), "--out", (dir / "split").string(), "--seed", "7"});
  REQUIRE(sp.code == 0);
  CHECK(sp.last_json()["all"]["n"] == 50);
  CHECK(load_manifest(dir / "split" / "train.csv", {}).size() == 40);
  CHECK(load_manifest(dir / "split" / "val.csv", {}).size() == 5);

  const auto pre = cli({"preprocess", "--manifest", labels.string(), "--images", (dir / "raw").string(), "--out",
                        (dir / "pre").string(), "--size", "64", "--sigma", "3"});
  REQUIRE(pre.code == 0);
  CHECK(pre.last_json()["images"] == 50);
  CHECK(read_png(dir / "pre" / "img3x9.png").width == 64);
  CHECK(std::filesystem::exists(dir / "pre" / "preprocess_summary.csv"));

  const auto tr = cli(concat({"train", "--manifest", labels.string(), "--images", (dir / "pre").string(), "--out",
                              (dir / "run").string(), "--epochs", "2", "--batch-size", "8", "--deterministic"},
                             kReducedFlags));
  REQUIRE(tr.code == 0);
  const auto tj = tr.last_json();
  CHECK(tj["epochs"] == 2);
  CHECK(std::filesystem::exists(dir / "run" / "best.ckpt"));
  CHECK(std::filesystem::exists(dir / "run" / "curves.csv"));
  CHECK(std::filesystem::exists(dir / "run" / "train.csv"));

  const auto ev = cli({"evaluate", "--checkpoint", (dir / "run" / "best.ckpt").string(), "--manifest",
                       (dir / "run" / "test.csv").string(), "--images", (dir / "pre").string(), "--out",
                       (dir / "eval").string()});
  REQUIRE(ev.code == 0);
  const auto ej = ev.last_json();
  CHECK(ej["n"] == load_manifest(dir / "run" / "test.csv", {}).size());
  CHECK(ej["accuracy"] >= 0.0);
  CHECK(std::filesystem::exists(dir / "eval" / "confusion.csv"));
}
