#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace drgrade {

struct SampleRecord {
  std::string id;
  std::filesystem::path path;
  int grade = 0;
  bool operator==(const SampleRecord&) const = default;
};

struct Manifest {
  std::vector<SampleRecord> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  std::vector<int> labels() const;
};

/// Reads an APTOS-style labels file (header "id_code,diagnosis"). Each
/// sample's path is <images_dir>/<id_code>.png. Errors name the 1-based
/// data row.
Manifest load_manifest(const std::filesystem::path& csv_path, const std::filesystem::path& images_dir);
Manifest parse_manifest(const std::string& csv_text, const std::filesystem::path& images_dir);
void write_manifest(const Manifest& m, const std::filesystem::path& csv_path);

struct ClassDistribution {
  std::array<std::size_t, 5> counts{};
  std::array<double, 5> percent{};  // rounded to 2 decimals
};

ClassDistribution class_distribution(const Manifest& m);

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
  void validate() const;
};

struct Split {
  Manifest train, val, test;
};

/// Per grade: seeded shuffle, then floor(train*n) to train, floor(val*n)
/// to val and the remainder to test. Each output keeps manifest order.
/// strict requires at least 3 samples in every non-empty grade.
Split stratified_split(const Manifest& m, const SplitRatios& r, std::uint64_t seed, bool strict = false);

/// Per-grade allocation used by stratified_split.
struct Allocation {
  std::size_t train = 0, val = 0, test = 0;
};
Allocation split_counts(std::size_t n, const SplitRatios& r);

/// One epoch's batches from a permutation seeded by (seed, epoch). The
/// final partial batch is kept.
std::vector<std::vector<SampleRecord>> batch_iter(const Manifest& m, std::size_t batch_size, std::uint64_t seed,
                                                  std::uint64_t epoch);
/// The permutation behind batch_iter.
std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, std::uint64_t epoch);

}  // namespace drgrade
