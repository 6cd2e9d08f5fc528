#include <doctest.h>

#include <cmath>
#include <vector>

#include "drgrade/error.hpp"
#include "drgrade/metrics.hpp"
#include "drgrade/rng.hpp"
#include "test_support.hpp"

using namespace drgrade;
using drgrade::testing::recall_fixture;

namespace {

// Per-grade test-set sizes from a 0.8/0.1/0.1 floor split of the
// 1805/370/999/193/295 class counts.
constexpr std::array<std::size_t, 5> kTestCounts{181, 37, 101, 20, 30};

void check_recalls(const std::array<double, 5>& target) {
  const auto [preds, labels] = recall_fixture(kTestCounts, target);
  const auto cm = confusion_matrix(preds, labels);
  const auto r = per_class_recall(cm);
  const auto f = row_normalize(cm);
  for (std::size_t g = 0; g < 5; ++g) {
    CHECK(std::abs(r[g] - target[g]) <= 0.5 / static_cast<double>(kTestCounts[g]) + 1e-12);
    CHECK(f[g][g] == r[g]);
    CHECK(cm.row_sum(g) == kTestCounts[g]);
  }
}

}  // namespace

TEST_CASE("hand-tallied confusion matrix") {
  const std::vector<int> labels{0, 0, 1, 2, 3, 4};
  const std::vector<int> preds{0, 2, 1, 2, 2, 2};
  const auto cm = confusion_matrix(preds, labels);
  CHECK(cm.counts[0][0] == 1);
  CHECK(cm.counts[0][2] == 1);
  CHECK(cm.counts[1][1] == 1);
  CHECK(cm.counts[2][2] == 1);
  CHECK(cm.counts[3][2] == 1);
  CHECK(cm.counts[4][2] == 1);
  CHECK(cm.total() == 6);
  CHECK(accuracy(cm) == 0.5);
  const auto r = per_class_recall(cm);
  CHECK(r == std::array<double, 5>{0.5, 1, 1, 0, 0});
  CHECK(confusion_csv(cm) ==
        "true,pred0,pred1,pred2,pred3,pred4\n0,1,0,1,0,0\n1,0,1,0,0,0\n2,0,0,1,0,0\n3,0,0,1,0,0\n4,0,0,1,0,0\n");
  const std::string report = confusion_report(cm);
  CHECK(report.find("1 (50.00%)") != std::string::npos);
  CHECK(report.find("1 (100.00%)") != std::string::npos);
}

TEST_CASE("diagonal matrix is perfect") {
  const std::vector<int> y{0, 1, 2, 3, 4, 4, 0};
  const auto cm = confusion_matrix(y, y);
  CHECK(accuracy(cm) == 1.0);
  for (double r : per_class_recall(cm)) CHECK(r == 1.0);
}

TEST_CASE("shallow-network recall fixture") { check_recalls({0.92, 0.15, 0.77, 0.21, 0.03}); }

TEST_CASE("transfer-model recall fixture") { check_recalls({0.97, 0.41, 0.73, 0.30, 0.56}); }

TEST_CASE("metric invariants on random matrices") {
  Rng rng(2024);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.below(300);
    std::vector<int> preds(n), labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      // skew labels so some rows are often empty
      labels[i] = static_cast<int>(rng.below(trial % 2 ? 3 : 5));
      preds[i] = static_cast<int>(rng.below(5));
    }
    const auto cm = confusion_matrix(preds, labels);
    CHECK(cm.total() == n);
    const auto f = row_normalize(cm);
    const auto r = per_class_recall(cm);
    double weighted = 0;
    for (std::size_t g = 0; g < 5; ++g) {
      double s = 0;
      for (double v : f[g]) s += v;
      if (cm.row_sum(g) == 0) {
        CHECK(s == 0.0);
      } else {
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
      }
      weighted += r[g] * static_cast<double>(cm.row_sum(g)) / static_cast<double>(n);
    }
    CHECK(accuracy(cm) == doctest::Approx(weighted).epsilon(1e-12));
  }
}

TEST_CASE("round2") {
  CHECK(round2(49.2876) == 49.29);
  CHECK(round2(-1.005001) == -1.01);
  CHECK(round2(0.125) == 0.13);
  CHECK(round2(2.0) == 2.0);
}

TEST_CASE("metric errors") {
  const std::vector<int> a{0, 1}, b{0};
  CHECK_THROWS_AS(confusion_matrix(a, b), Error);
  const std::vector<int> bad{0, 5};
  CHECK_THROWS_AS(confusion_matrix(bad, a), Error);
  const std::vector<int> neg{-1, 0};
  CHECK_THROWS_AS(confusion_matrix(a, neg), Error);
  CHECK_THROWS_AS(accuracy(ConfusionMatrix{}), Error);
  const auto r = per_class_recall(ConfusionMatrix{});
  for (double v : r) CHECK(v == 0.0);
}
