#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>

namespace drgrade {

/// counts[true grade][predicted grade]
struct ConfusionMatrix {
  std::array<std::array<std::uint64_t, 5>, 5> counts{};

  std::uint64_t total() const;
  std::uint64_t row_sum(std::size_t grade) const;
  bool operator==(const ConfusionMatrix&) const = default;
};

using Fractions5x5 = std::array<std::array<double, 5>, 5>;

ConfusionMatrix confusion_matrix(std::span<const int> preds, std::span<const int> labels);
/// Rows divided by their sums; empty rows stay zero.
Fractions5x5 row_normalize(const ConfusionMatrix& cm);
/// trace / total. Throws on an empty matrix.
double accuracy(const ConfusionMatrix& cm);
/// Diagonal of the row-normalized matrix (0 for an empty row).
std::array<double, 5> per_class_recall(const ConfusionMatrix& cm);

/// Round half away from zero to two decimals.
double round2(double v);

/// "true,pred0,...,pred4" header then one row per true grade.
std::string confusion_csv(const ConfusionMatrix& cm);
/// Human-readable table of counts and row percentages.
std::string confusion_report(const ConfusionMatrix& cm);

}  // namespace drgrade
