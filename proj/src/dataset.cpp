#include "drgrade/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "drgrade/error.hpp"
#include "drgrade/metrics.hpp"
#include "drgrade/rng.hpp"

namespace drgrade {

namespace {

constexpr std::uint64_t kSplitStream = 0x5b117;

std::string trim(std::string s) {
  const char* ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

void fisher_yates(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

}  // namespace

std::vector<int> Manifest::labels() const {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.grade);
  return out;
}

Manifest parse_manifest(const std::string& csv_text, const std::filesystem::path& images_dir) {
  std::istringstream in(csv_text);
  std::string line;
  DRGRADE_REQUIRE(static_cast<bool>(std::getline(in, line)), ErrorKind::Parse, "manifest: missing header");
  std::string header = trim(line);
  if (header.rfind("\xEF\xBB\xBF", 0) == 0) header = header.substr(3);
  DRGRADE_REQUIRE(header == "id_code,diagnosis", ErrorKind::Parse,
                  "manifest: expected header 'id_code,diagnosis', got '" + header + "'");
  Manifest m;
  std::set<std::string> seen;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty()) continue;
    ++row;
    const std::string where = "manifest row " + std::to_string(row);
    const auto comma = line.find(',');
    DRGRADE_REQUIRE(comma != std::string::npos && line.find(',', comma + 1) == std::string::npos, ErrorKind::Parse,
                    where + ": expected 2 fields in '" + line + "'");
    const std::string id = trim(line.substr(0, comma));
    const std::string grade_text = trim(line.substr(comma + 1));
    DRGRADE_REQUIRE(!id.empty(), ErrorKind::Parse, where + ": empty id_code");
    int grade = -1;
    auto res = std::from_chars(grade_text.data(), grade_text.data() + grade_text.size(), grade);
    DRGRADE_REQUIRE(res.ec == std::errc() && res.ptr == grade_text.data() + grade_text.size(), ErrorKind::Parse,
                    where + ": diagnosis '" + grade_text + "' is not an integer");
    DRGRADE_REQUIRE(grade >= 0 && grade <= 4, ErrorKind::InvalidArgument,
                    where + ": diagnosis " + std::to_string(grade) + " outside 0-4");
    DRGRADE_REQUIRE(seen.insert(id).second, ErrorKind::InvalidArgument, where + ": duplicate id_code '" + id + "'");
    m.samples.push_back({id, images_dir / (id + ".png"), grade});
  }
  return m;
}

Manifest load_manifest(const std::filesystem::path& csv_path, const std::filesystem::path& images_dir) {
  std::ifstream f(csv_path, std::ios::binary);
  DRGRADE_REQUIRE(f.good(), ErrorKind::Io, "cannot open manifest " + csv_path.string());
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse_manifest(buf.str(), images_dir);
}

void write_manifest(const Manifest& m, const std::filesystem::path& csv_path) {
  std::ofstream f(csv_path, std::ios::binary);
  DRGRADE_REQUIRE(f.good(), ErrorKind::Io, "cannot write manifest " + csv_path.string());
  f << "id_code,diagnosis\n";
  for (const auto& s : m.samples) f << s.id << "," << s.grade << "\n";
  DRGRADE_REQUIRE(f.good(), ErrorKind::Io, "write failed for " + csv_path.string());
}

ClassDistribution class_distribution(const Manifest& m) {
  DRGRADE_REQUIRE(!m.empty(), ErrorKind::InvalidArgument, "class_distribution: empty manifest");
  ClassDistribution d;
  for (const auto& s : m.samples) ++d.counts.at(s.grade);
  for (std::size_t g = 0; g < 5; ++g)
    d.percent[g] = round2(100.0 * static_cast<double>(d.counts[g]) / static_cast<double>(m.size()));
  return d;
}

void SplitRatios::validate() const {
  for (double r : {train, val, test})
    DRGRADE_REQUIRE(r > 0 && r < 1, ErrorKind::InvalidArgument, "split ratios must each lie in (0,1)");
  DRGRADE_REQUIRE(std::abs(train + val + test - 1.0) <= 1e-9, ErrorKind::InvalidArgument,
                  "split ratios must sum to 1");
}

Allocation split_counts(std::size_t n, const SplitRatios& r) {
  // The epsilon absorbs products such as 0.29 * 100 = 28.999999999999996.
  Allocation a;
  a.train = static_cast<std::size_t>(std::floor(r.train * static_cast<double>(n) + 1e-9));
  a.val = static_cast<std::size_t>(std::floor(r.val * static_cast<double>(n) + 1e-9));
  a.train = std::min(a.train, n);
  a.val = std::min(a.val, n - a.train);
  a.test = n - a.train - a.val;
  return a;
}

Split stratified_split(const Manifest& m, const SplitRatios& r, std::uint64_t seed, bool strict) {
  r.validate();
  std::array<std::vector<std::size_t>, 5> by_grade;
  for (std::size_t i = 0; i < m.size(); ++i) by_grade.at(m.samples[i].grade).push_back(i);

  std::vector<int> dest(m.size(), 0);  // 0 train, 1 val, 2 test
  for (std::size_t g = 0; g < 5; ++g) {
    auto& idx = by_grade[g];
    if (strict)
      DRGRADE_REQUIRE(idx.empty() || idx.size() >= 3, ErrorKind::InvalidArgument,
                      "stratified_split: grade " + std::to_string(g) + " has only " + std::to_string(idx.size()) +
                          " samples (strict mode needs >= 3)");
    Rng rng(mix_seed({seed, kSplitStream, g}));
    fisher_yates(idx, rng);
    const Allocation a = split_counts(idx.size(), r);
    for (std::size_t k = 0; k < idx.size(); ++k) dest[idx[k]] = k < a.train ? 0 : (k < a.train + a.val ? 1 : 2);
  }
  Split s;
  for (std::size_t i = 0; i < m.size(); ++i) {
    Manifest& out = dest[i] == 0 ? s.train : (dest[i] == 1 ? s.val : s.test);
    out.samples.push_back(m.samples[i]);
  }
  return s;
}

std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed({seed, epoch}));
  fisher_yates(order, rng);
  return order;
}

std::vector<std::vector<SampleRecord>> batch_iter(const Manifest& m, std::size_t batch_size, std::uint64_t seed,
                                                  std::uint64_t epoch) {
  DRGRADE_REQUIRE(batch_size >= 1, ErrorKind::InvalidArgument, "batch size must be >= 1");
  const auto order = epoch_permutation(m.size(), seed, epoch);
  std::vector<std::vector<SampleRecord>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    std::vector<SampleRecord> b;
    for (std::size_t k = start; k < std::min(order.size(), start + batch_size); ++k) b.push_back(m.samples[order[k]]);
    batches.push_back(std::move(b));
  }
  return batches;
}

}  // namespace drgrade
