#include "drgrade/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "drgrade/error.hpp"

namespace drgrade {

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (const auto& row : counts)
    for (auto v : row) t += v;
  return t;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t grade) const {
  std::uint64_t t = 0;
  for (auto v : counts.at(grade)) t += v;
  return t;
}

ConfusionMatrix confusion_matrix(std::span<const int> preds, std::span<const int> labels) {
  DRGRADE_REQUIRE(preds.size() == labels.size(), ErrorKind::InvalidArgument,
                  "confusion_matrix: " + std::to_string(preds.size()) + " predictions vs " +
                      std::to_string(labels.size()) + " labels");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    DRGRADE_REQUIRE(preds[i] >= 0 && preds[i] < 5 && labels[i] >= 0 && labels[i] < 5, ErrorKind::InvalidArgument,
                    "confusion_matrix: grade out of range at index " + std::to_string(i));
    ++cm.counts[labels[i]][preds[i]];
  }
  return cm;
}

Fractions5x5 row_normalize(const ConfusionMatrix& cm) {
  Fractions5x5 f{};
  for (std::size_t t = 0; t < 5; ++t) {
    const std::uint64_t s = cm.row_sum(t);
    if (s == 0) continue;
    for (std::size_t p = 0; p < 5; ++p) f[t][p] = static_cast<double>(cm.counts[t][p]) / static_cast<double>(s);
  }
  return f;
}

double accuracy(const ConfusionMatrix& cm) {
  const std::uint64_t total = cm.total();
  DRGRADE_REQUIRE(total > 0, ErrorKind::InvalidArgument, "accuracy: empty confusion matrix");
  std::uint64_t trace = 0;
  for (std::size_t g = 0; g < 5; ++g) trace += cm.counts[g][g];
  return static_cast<double>(trace) / static_cast<double>(total);
}

std::array<double, 5> per_class_recall(const ConfusionMatrix& cm) {
  const auto f = row_normalize(cm);
  std::array<double, 5> r{};
  for (std::size_t g = 0; g < 5; ++g) r[g] = f[g][g];
  return r;
}

double round2(double v) { return std::round(v * 100.0) / 100.0; }

std::string confusion_csv(const ConfusionMatrix& cm) {
  std::ostringstream s;
  s << "true,pred0,pred1,pred2,pred3,pred4\n";
  for (std::size_t t = 0; t < 5; ++t) {
    s << t;
    for (auto v : cm.counts[t]) s << "," << v;
    s << "\n";
  }
  return s.str();
}

std::string confusion_report(const ConfusionMatrix& cm) {
  const auto f = row_normalize(cm);
  std::ostringstream s;
  s << "true\\pred";
  for (int p = 0; p < 5; ++p) s << std::setw(16) << p;
  s << "\n";
  for (std::size_t t = 0; t < 5; ++t) {
    s << std::setw(9) << t;
    for (std::size_t p = 0; p < 5; ++p) {
      std::ostringstream cell;
      cell << cm.counts[t][p] << " (" << std::fixed << std::setprecision(2) << round2(100.0 * f[t][p]) << "%)";
      s << std::setw(16) << cell.str();
    }
    s << "\n";
  }
  return s.str();
}

}  // namespace drgrade
