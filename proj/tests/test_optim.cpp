#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "drgrade/error.hpp"
#include "drgrade/optim.hpp"

using namespace drgrade;

namespace {

Param<double> scalar(double v) {
  Param<double> p;
  p.name = "x";
  p.value = Tensor<double>({1});
  p.value[0] = v;
  p.grad = Tensor<double>({1});
  return p;
}

Tensor<double> matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
  Tensor<double> t({rows, cols});
  for (std::size_t i = 0; i < v.size(); ++i) t[i] = v[i];
  return t;
}

template <typename Opt, typename Hyper>
std::vector<double> trace(Hyper h, bool quadratic, std::size_t steps) {
  Param<double> p = scalar(1.0);
  Opt opt({&p}, h);
  std::vector<double> out;
  for (std::size_t s = 0; s < steps; ++s) {
    p.grad[0] = quadratic ? 2 * p.value[0] : 1.0;
    opt.step();
    out.push_back(p.value[0]);
  }
  return out;
}

void check_trace(const std::vector<double>& got, const std::vector<double>& want) {
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

}  // namespace

TEST_CASE("weighted cross-entropy matches hand computation") {
  const auto logits = matrix(3, 5, {0.5, -1, 2, 0.3, -0.2, 1, 1, 1, 1, 1, -3, 0, 4, -1, 2.5});
  const std::vector<int> labels{3, 1, 4};
  const auto r = weighted_ce(logits, labels, ClassWeights::method1());
  CHECK(r.loss == doctest::Approx(1.8945032888410167).epsilon(1e-12));
  CHECK(r.weight_sum == doctest::Approx(12.5 + 6.2 + 8.2));
}

TEST_CASE("single sample with p = 0.1 gives ln 10 regardless of weight") {
  // logits chosen so that softmax puts 0.1 on class 3
  const double a = std::log(0.9 / 4), b = std::log(0.1);
  const auto logits = matrix(1, 5, {a, a, a, b, a});
  const std::vector<int> labels{3};
  const auto r = weighted_ce(logits, labels, ClassWeights::method1());
  CHECK(r.loss == doctest::Approx(2.302585).epsilon(1e-6));
}

TEST_CASE("weighted cross-entropy invariants") {
  const auto logits = matrix(3, 5, {0.5, -1, 2, 0.3, -0.2, 1, 1, 1, 1, 1, -3, 0, 4, -1, 2.5});
  const std::vector<int> labels{3, 1, 4};

  SUBCASE("unit weights reduce to the unweighted mean") {
    const auto r = weighted_ce(logits, labels, ClassWeights::uniform());
    double sum = 0;
    for (std::size_t i = 0; i < 3; ++i) {
      double z = 0;
      for (std::size_t j = 0; j < 5; ++j) z += std::exp(logits[i * 5 + j]);
      sum += std::log(z) - logits[i * 5 + labels[i]];
    }
    CHECK(r.loss == doctest::Approx(sum / 3).epsilon(1e-12));
  }
  SUBCASE("scaling every weight leaves the loss unchanged") {
    ClassWeights scaled = ClassWeights::method1();
    for (auto& w : scaled.w) w *= 7.5;
    CHECK(weighted_ce(logits, labels, scaled).loss ==
          doctest::Approx(weighted_ce(logits, labels, ClassWeights::method1()).loss).epsilon(1e-12));
  }
  SUBCASE("gradient rows sum to zero") {
    const auto r = weighted_ce(logits, labels, ClassWeights::transfer());
    for (std::size_t i = 0; i < 3; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < 5; ++j) s += r.dlogits[i * 5 + j];
      CHECK(std::abs(s) < 1e-14);
    }
  }
  SUBCASE("a confident correct prediction has near-zero loss") {
    const auto big = matrix(1, 5, {0, 0, 100, 0, 0});
    const std::vector<int> y{2};
    const auto r = weighted_ce(big, y, ClassWeights::method1());
    CHECK(r.loss >= 0);
    CHECK(r.loss <= 1e-6);
  }
  SUBCASE("a confidently wrong prediction stays finite") {
    const auto big = matrix(1, 5, {1000, 0, 0, 0, 0});
    const std::vector<int> y{4};
    const auto r = weighted_ce(big, y, ClassWeights::method1());
    CHECK(std::isfinite(r.loss));
    CHECK(r.loss == doctest::Approx(1000));
  }
  SUBCASE("gradient matches central differences") {
    const auto r = weighted_ce(logits, labels, ClassWeights::method1());
    for (std::size_t k = 0; k < logits.size(); ++k) {
      auto lp = logits, lm = logits;
      lp[k] += 1e-6;
      lm[k] -= 1e-6;
      const double num = (weighted_ce(lp, labels, ClassWeights::method1()).loss -
                          weighted_ce(lm, labels, ClassWeights::method1()).loss) /
                         2e-6;
      CHECK(r.dlogits[k] == doctest::Approx(num).epsilon(1e-6));
    }
  }
  SUBCASE("bad labels are rejected") {
    const std::vector<int> bad{3, 1, 5};
    CHECK_THROWS_AS(weighted_ce(logits, bad, ClassWeights::method1()), Error);
    const std::vector<int> short_labels{3, 1};
    CHECK_THROWS_AS(weighted_ce(logits, short_labels, ClassWeights::method1()), Error);
  }
}

TEST_CASE("l2 penalty and gradient addend") {
  Param<double> w = scalar(3.0);
  w.regularized = true;
  Param<double> b = scalar(5.0);  // bias: not regularized
  std::vector<Param<double>*> ps{&w, &b};
  const auto r = l2_penalty(ps, 0.1);
  CHECK(r.penalty == doctest::Approx(0.9));
  REQUIRE(r.addends.size() == 1);
  CHECK(r.addends[0][0] == doctest::Approx(0.6));

  w.grad[0] = 1.0;
  CHECK(accumulate_l2(ps, 0.1) == doctest::Approx(0.9));
  CHECK(w.grad[0] == doctest::Approx(1.6));
  CHECK(l2_penalty(ps, 0.0).penalty == 0.0);

  w.trainable = false;
  CHECK(l2_penalty(ps, 0.1).penalty == 0.0);
}

TEST_CASE("adam trajectories") {
  AdamHyper h;
  h.lr = 0.1;
  check_trace(trace<Adam<double>>(h, false, 5),
              {0.900000001, 0.8000000020000007, 0.7000000030000006, 0.6000000040000012, 0.5000000050000013});
  check_trace(trace<Adam<double>>(h, true, 5),
              {0.9000000005, 0.8004122286917928, 0.7015862729460303, 0.603939060573746, 0.507963659264342});
}

TEST_CASE("sgd momentum trajectories") {
  SgdHyper h;
  h.lr = 0.1;
  h.momentum = 0.9;
  check_trace(trace<SgdMomentum<double>>(h, false, 5),
              {0.9, 0.71, 0.43899999999999995, 0.0950999999999999, -0.31441000000000013});
  check_trace(trace<SgdMomentum<double>>(h, true, 5),
              {0.8, 0.45999999999999996, 0.06199999999999989, -0.30860000000000015, -0.5804200000000002});
}

TEST_CASE("optimizer invariants") {
  SUBCASE("first adam step moves by about lr") {
    for (double g : {1e-3, 1.0, 1e3}) {
      Param<double> p = scalar(0.0);
      Adam<double> opt({&p}, AdamHyper{});
      p.grad[0] = g;
      opt.step();
      CHECK(p.value[0] == doctest::Approx(-1e-4).epsilon(1e-4));
    }
  }
  SUBCASE("zero gradient leaves parameters where they are") {
    Param<double> a = scalar(2.5), b = scalar(2.5);
    Adam<double> adam({&a}, AdamHyper{});
    SgdMomentum<double> sgd({&b}, SgdHyper{});
    a.grad[0] = b.grad[0] = 0;
    for (int i = 0; i < 3; ++i) {
      adam.step();
      sgd.step();
    }
    CHECK(a.value[0] == 2.5);
    CHECK(b.value[0] == 2.5);
  }
  SUBCASE("non-trainable parameters are skipped") {
    Param<double> frozen = scalar(1.0), live = scalar(1.0);
    frozen.trainable = false;
    frozen.grad[0] = live.grad[0] = 1.0;
    Adam<double> opt({&frozen, &live}, AdamHyper{});
    opt.step();
    CHECK(frozen.value[0] == 1.0);
    CHECK(live.value[0] < 1.0);
  }
  SUBCASE("a non-finite gradient aborts without touching anything") {
    Param<double> a = scalar(1.0), b = scalar(1.0);
    Adam<double> opt({&a, &b}, AdamHyper{});
    a.grad[0] = 1.0;
    b.grad[0] = std::numeric_limits<double>::quiet_NaN();
    try {
      opt.step();
      FAIL("expected a NonFinite error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::NonFinite);
    }
    CHECK(a.value[0] == 1.0);
    CHECK(b.value[0] == 1.0);
    CHECK(opt.steps() == 0);
    for (const auto& nt : opt.export_state()) CHECK(nt.value[0] == 0.0);
  }
  SUBCASE("float parameters update too") {
    Param<float> p;
    p.name = "w";
    p.value = Tensor<float>({2});
    p.grad = Tensor<float>({2});
    p.grad[0] = 1.0f;
    p.grad[1] = -1.0f;
    SgdMomentum<float> opt({&p}, SgdHyper{});
    opt.step();
    CHECK(p.value[0] == doctest::Approx(-0.01f));
    CHECK(p.value[1] == doctest::Approx(0.01f));
  }
}

TEST_CASE("convergence on x^2") {
  auto run = [](auto& opt, Param<double>& p) {
    for (int s = 0; s < 1000; ++s) {
      p.grad[0] = 2 * p.value[0];
      opt.step();
    }
    return std::abs(p.value[0]);
  };
  SUBCASE("sgd at the transfer-model rate") {
    Param<double> p = scalar(1.0);
    SgdMomentum<double> opt({&p}, SgdHyper{});
    CHECK(run(opt, p) < 1e-3);
  }
  SUBCASE("adam at 1e-2") {
    AdamHyper h;
    h.lr = 1e-2;
    Param<double> p = scalar(1.0);
    Adam<double> opt({&p}, h);
    CHECK(run(opt, p) < 1e-3);
  }
  SUBCASE("adam at 1e-4 is bounded by about lr per step") {
    // Each step moves at most ~lr, so 1000 steps cannot cover distance 1.
    Param<double> p = scalar(1.0);
    Adam<double> opt({&p}, AdamHyper{});
    const double x = run(opt, p);
    CHECK(x < 1.0);
    CHECK(1.0 - x <= 1000 * 1e-4 * 1.01);
  }
}

TEST_CASE("reduce on plateau") {
  SUBCASE("flat metric cuts the rate after patience is exceeded") {
    PlateauScheduler s(0.01);
    CHECK(s.update(1) == 0.01);
    CHECK(s.update(1) == 0.01);
    CHECK(s.update(1) == 0.01);
    CHECK(s.update(1) == doctest::Approx(0.0085).epsilon(1e-15));
    CHECK(s.reductions() == 1);
  }
  SUBCASE("rate after k cuts is exactly lr0 * factor^k") {
    PlateauScheduler s(0.01);
    s.update(1);
    for (std::size_t k = 1; k <= 6; ++k) {
      for (int i = 0; i < 3; ++i) s.update(1);
      CHECK(s.reductions() == k);
      CHECK(s.lr() == 0.01 * std::pow(0.85, static_cast<double>(k)));
    }
  }
  SUBCASE("improvements reset the counter") {
    PlateauScheduler s(0.01);
    for (double v : {1.0, 1.0, 1.0, 0.5, 0.5, 0.5, 0.4}) s.update(v);
    CHECK(s.reductions() == 0);
  }
  SUBCASE("changes smaller than min_delta do not count") {
    PlateauScheduler s(0.01);
    for (double v : {1.0, 0.99995, 0.99993, 0.99991}) s.update(v);
    CHECK(s.reductions() == 1);
  }
  SUBCASE("max mode") {
    PlateauConfig c;
    c.mode = MetricMode::Max;
    PlateauScheduler s(0.01, c);
    for (double v : {0.2, 0.5, 0.5, 0.5, 0.5}) s.update(v);
    CHECK(s.reductions() == 1);
    CHECK(s.best() == 0.5);
  }
  SUBCASE("restore reproduces the rate") {
    PlateauScheduler s(0.01);
    s.restore(0.3, 1, 3);
    CHECK(s.lr() == 0.01 * std::pow(0.85, 3.0));
    CHECK(s.update(0.3) == s.lr());
    CHECK(s.update(0.3) == 0.01 * std::pow(0.85, 4.0));
  }
  CHECK_THROWS_AS(PlateauScheduler(0.0), Error);
  CHECK_THROWS_AS(PlateauScheduler(0.01).update(std::nan("")), Error);
}
