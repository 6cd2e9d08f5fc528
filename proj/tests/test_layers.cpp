#include <doctest.h>

#include <cmath>

#include "drgrade/gradcheck.hpp"
#include "drgrade/layers.hpp"
#include "drgrade/optim.hpp"
#include "test_support.hpp"

using namespace drgrade;
using drgrade::testing::random_tensor;

namespace {

constexpr double kTol = 1e-5;

void randomize(Layer<double>& l, std::uint64_t seed) {
  for (auto* p : l.params()) {
    if (p->buffer) continue;
    p->value = random_tensor<double>(p->value.shape(), seed++, 0.5);
  }
}

void check_layer(Layer<double>& l, const Tensor<double>& x, Mode mode = Mode::Train) {
  const auto r = gradient_check(l, x, mode);
  CAPTURE(l.name());
  CAPTURE(r.worst);
  CHECK(r.slots > 0);
  CHECK(r.max_rel_error <= kTol);
}

}  // namespace

TEST_CASE("conv2d gradients, standard and depthwise") {
  struct Case {
    Conv2dOptions o;
    Shape in;
  };
  const Case cases[] = {
      {{3, 4, 3, 1, Padding::Valid, false, true}, {2, 3, 7, 6}},
      {{2, 3, 5, 2, Padding::Same, false, true}, {1, 2, 9, 9}},
      {{4, 2, 1, 1, Padding::Valid, false, false}, {3, 4, 4, 5}},
      {{3, 3, 3, 1, Padding::Same, true, false}, {2, 3, 6, 5}},
      {{4, 4, 5, 2, Padding::Same, true, false}, {1, 4, 9, 8}},
      {{2, 2, 3, 2, Padding::Valid, true, true}, {2, 2, 7, 7}},
  };
  std::uint64_t seed = 1;
  for (const auto& c : cases) {
    Conv2d<double> conv("conv", c.o);
    randomize(conv, seed);
    check_layer(conv, random_tensor<double>(c.in, seed + 100));
    ++seed;
  }
}

TEST_CASE("conv2d shapes") {
  Conv2d<float> valid("c", {3, 16, 13, 1, Padding::Valid, false, true});
  CHECK(valid.output_shape({1, 3, 512, 512}) == Shape{1, 16, 500, 500});
  Conv2d<float> same("c", {8, 8, 5, 2, Padding::Same, true, false});
  CHECK(same.output_shape({2, 8, 33, 32}) == Shape{2, 8, 17, 16});
  CHECK(same.params().size() == 1);
  CHECK(same.params()[0]->value.shape() == Shape{8, 1, 5, 5});
  CHECK_THROWS_AS(valid.output_shape({1, 4, 64, 64}), Error);
}

TEST_CASE("batchnorm2d gradients in train mode") {
  for (Shape in : {Shape{4, 3, 5, 5}, Shape{2, 2, 3, 4}, Shape{6, 5}}) {
    BatchNorm2d<double> bn("bn", in[1]);
    randomize(bn, 3);
    check_layer(bn, random_tensor<double>(in, 42, 2.0));
  }
}

TEST_CASE("batchnorm2d statistics") {
  BatchNorm2d<double> bn("bn", 2, 0.1, 1e-5);
  Tensor<double> x({2, 2, 1, 2}, std::vector<double>{1, 3, 10, 10, 5, 7, 20, 30});
  const auto y = bn.forward(x, Mode::Train);
  // channel 0 values {1,3,5,7}: mean 4, biased var 5
  const double inv = 1 / std::sqrt(5 + 1e-5);
  CHECK(y.at(0, 0, 0, 0) == doctest::Approx((1 - 4) * inv).epsilon(1e-12));
  CHECK(bn.running_mean().value[0] == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(bn.running_var().value[0] == doctest::Approx(0.9 + 0.5).epsilon(1e-12));
  // channel 1 values {10,10,20,30}: mean 17.5, var 68.75
  CHECK(bn.running_mean().value[1] == doctest::Approx(1.75).epsilon(1e-12));
  CHECK(bn.running_var().value[1] == doctest::Approx(0.9 + 6.875).epsilon(1e-12));

  // Eval mode normalizes with the running statistics and leaves them alone.
  const auto rm = bn.running_mean().value;
  const auto ye = bn.forward(x, Mode::Eval);
  CHECK(bn.running_mean().value == rm);
  CHECK(ye.at(0, 0, 0, 0) == doctest::Approx((1 - 0.4) / std::sqrt(1.4 + 1e-5)).epsilon(1e-12));

  // Frozen gamma: running statistics even in train mode, no updates.
  bn.gamma().trainable = false;
  const auto yf = bn.forward(x, Mode::Train);
  CHECK(yf == ye);
  CHECK(bn.running_mean().value == rm);
}

TEST_CASE("relu, swish, maxpool, avgpool, flatten gradients") {
  std::uint64_t seed = 5;
  for (Shape in : {Shape{2, 3, 4, 4}, Shape{1, 2, 6, 5}, Shape{3, 1, 3, 7}}) {
    ReLU<double> relu("relu");
    check_layer(relu, random_tensor<double>(in, seed++));
    Swish<double> swish("swish");
    check_layer(swish, random_tensor<double>(in, seed++, 2.0));
    MaxPool2d<double> pool("pool");
    check_layer(pool, random_tensor<double>(in, seed++));
    AdaptiveAvgPool2d<double> gap("gap");
    check_layer(gap, random_tensor<double>(in, seed++));
    Flatten<double> flat("flat");
    check_layer(flat, random_tensor<double>(in, seed++));
  }
}

TEST_CASE("swish value and sigmoid") {
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(-800.0) >= 0.0);
  CHECK(sigmoid(800.0) == 1.0);
  Swish<double> s("s");
  const auto y = s.forward(Tensor<double>({1, 3}, std::vector<double>{-1, 0, 2}), Mode::Eval);
  CHECK(y[0] == doctest::Approx(-1 / (1 + std::exp(1.0))).epsilon(1e-15));
  CHECK(y[1] == 0.0);
  CHECK(y[2] == doctest::Approx(2 / (1 + std::exp(-2.0))).epsilon(1e-15));
}

TEST_CASE("dense gradients") {
  std::uint64_t seed = 9;
  for (auto [n, d, m] : {std::tuple{3, 7, 4}, std::tuple{1, 5, 5}, std::tuple{6, 2, 9}}) {
    Dense<double> dense("fc", d, m);
    randomize(dense, seed++);
    check_layer(dense, random_tensor<double>({std::size_t(n), std::size_t(d)}, seed++));
  }
}

TEST_CASE("dropout with a fixed mask") {
  std::uint64_t seed = 20;
  for (Shape in : {Shape{2, 3, 4, 4}, Shape{5, 7}, Shape{1, 1, 9, 9}}) {
    Dropout<double> drop("drop", 0.3, seed++);
    drop.forward(random_tensor<double>(in, 1), Mode::Train);
    drop.freeze_mask(true);
    check_layer(drop, random_tensor<double>(in, seed++));
  }
}

TEST_CASE("dropout is inverted and identity in eval") {
  Dropout<double> drop("drop", 0.25, 3);
  Tensor<double> x({1, 100000}, 1.0);
  const auto y = drop.forward(x, Mode::Train);
  double sum = 0;
  std::size_t zeros = 0;
  for (double v : y.data()) {
    sum += v;
    zeros += v == 0;
    if (v != 0) CHECK(v == doctest::Approx(1 / 0.75).epsilon(1e-15));
  }
  CHECK(std::abs(double(zeros) / 1e5 - 0.25) < 0.01);
  CHECK(std::abs(sum / 1e5 - 1.0) < 0.02);
  CHECK(drop.forward(x, Mode::Eval) == x);

  // Same seed, same mask.
  Dropout<double> a("a", 0.5, 77), b("b", 0.5, 77);
  CHECK(a.forward(x, Mode::Train) == b.forward(x, Mode::Train));
  a.reseed(78);
  b.reseed(79);
  CHECK_FALSE(a.forward(x, Mode::Train) == b.forward(x, Mode::Train));
}

TEST_CASE("squeeze-excite and residual chain gradients") {
  std::uint64_t seed = 30;
  for (Shape in : {Shape{2, 4, 3, 3}, Shape{1, 6, 4, 5}, Shape{3, 2, 2, 2}}) {
    SqueezeExcite<double> se("se", in[1], std::max<std::size_t>(1, in[1] / 2));
    randomize(se, seed++);
    check_layer(se, random_tensor<double>(in, seed++));

    Sequential<double> block("block", true);
    block.add(std::make_unique<Conv2d<double>>("block.c1", Conv2dOptions{in[1], in[1], 3, 1, Padding::Same, true, false}));
    block.add(std::make_unique<BatchNorm2d<double>>("block.bn", in[1]));
    block.add(std::make_unique<Swish<double>>("block.act"));
    randomize(block, seed++);
    check_layer(block, random_tensor<double>(in, seed++));
  }
}

TEST_CASE("fused softmax and weighted cross-entropy gradient") {
  const ClassWeights w = ClassWeights::method1();
  std::uint64_t seed = 40;
  for (std::size_t n : {1, 4, 9}) {
    Tensor<double> logits = random_tensor<double>({n, 5}, seed++, 3.0);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>((i * 3 + seed) % 5);
    const auto res = weighted_ce(logits, labels, w);
    auto f = [&] { return weighted_ce(logits, labels, w).loss; };
    const auto r = check_gradients({&logits}, {&res.dlogits}, {"logits"}, f);
    CHECK(r.max_rel_error <= kTol);
  }
}

TEST_CASE("softmax rows") {
  Tensor<double> z({2, 5}, std::vector<double>{1, 2, 3, 4, 5, 1000, 1000, 1000, 1000, 1000});
  const auto p = softmax(z);
  for (std::size_t r = 0; r < 2; ++r) {
    double s = 0;
    for (std::size_t k = 0; k < 5; ++k) s += p[r * 5 + k];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-15));
  }
  CHECK(p[5] == doctest::Approx(0.2).epsilon(1e-15));
  const double denom = std::exp(-4.0) + std::exp(-3.0) + std::exp(-2.0) + std::exp(-1.0) + 1.0;
  CHECK(p[4] == doctest::Approx(1.0 / denom).epsilon(1e-14));
}
