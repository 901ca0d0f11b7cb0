#include "mmsurv/harness/split.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "mmsurv/errors.hpp"

namespace mmsurv::harness {

void SplitFractions::validate() const {
  if (!(train > 0.0 && val > 0.0 && test > 0.0)) throw ConfigError("split fractions must be positive");
  if (std::abs(train + val + test - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
}

Split stratified_split(std::span<const EventRecord> records, SplitFractions f, std::uint64_t seed) {
  f.validate();
  const std::size_t n = records.size();
  if (n < 3) throw InsufficientDataError("a three-way split needs at least three patients");
  validate_records(records);

  std::array<std::size_t, 3> target{};
  target[0] = static_cast<std::size_t>(std::floor(f.train * static_cast<double>(n)));
  target[1] = static_cast<std::size_t>(std::lround(static_cast<double>(n - target[0]) * f.val / (f.val + f.test)));
  target[2] = n - target[0] - target[1];
  if (target[0] == 0 || target[1] == 0 || target[2] == 0) {
    throw InsufficientDataError("cohort of " + std::to_string(n) + " leaves an empty partition");
  }

  // time quartile cuts by nearest rank over all patients
  std::vector<double> sorted = record_times(records);
  std::sort(sorted.begin(), sorted.end());
  std::array<double, 3> cuts{};
  for (std::size_t q = 1; q <= 3; ++q) cuts[q - 1] = sorted[(q * n + 3) / 4 - 1];
  auto stratum = [&](const EventRecord& r) {
    const auto quartile = static_cast<std::size_t>(std::upper_bound(cuts.begin(), cuts.end(), r.time) - cuts.begin());
    return static_cast<std::size_t>(r.event) * 4 + std::min<std::size_t>(quartile, 3);
  };

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return stratum(records[a]) < stratum(records[b]); });

  std::array<std::size_t, 3> assigned{};
  Split s;
  std::array<std::vector<std::size_t>*, 3> parts{&s.train, &s.val, &s.test};
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t best = 0;
    double best_deficit = -1e300;
    for (std::size_t p = 0; p < 3; ++p) {
      if (assigned[p] == target[p]) continue;
      const double deficit = static_cast<double>(target[p]) * static_cast<double>(k + 1) / static_cast<double>(n) -
                             static_cast<double>(assigned[p]);
      if (deficit > best_deficit) {
        best_deficit = deficit;
        best = p;
      }
    }
    ++assigned[best];
    parts[best]->push_back(order[k]);
  }
  for (auto* p : parts) std::sort(p->begin(), p->end());
  return s;
}

std::string to_string(Partition p) {
  switch (p) {
    case Partition::train: return "train";
    case Partition::val: return "val";
    case Partition::test: return "test";
  }
  return "unknown";
}

void SplitAudit::read(Partition p, std::size_t rows, const std::string& stage) {
  entries_.push_back({stage, p, rows, evaluating_});
}

std::size_t SplitAudit::test_reads_before_evaluation() const {
  return static_cast<std::size_t>(std::count_if(entries_.begin(), entries_.end(), [](const Entry& e) {
    return e.partition == Partition::test && !e.during_evaluation;
  }));
}

std::string SplitAudit::to_text() const {
  std::ostringstream out;
  for (const auto& e : entries_) {
    out << (e.during_evaluation ? "evaluation" : "development") << '\t' << e.stage << '\t' << to_string(e.partition)
        << '\t' << e.rows << '\n';
  }
  return out.str();
}

void SplitAudit::append_to(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::app);
  if (!out) throw ParseError("cannot write split audit log " + path.string());
  out << to_text();
}

std::size_t SplitAudit::count_test_reads_before_evaluation(const std::filesystem::path& log) {
  std::ifstream in(log);
  if (!in) throw ParseError("cannot open split audit log " + log.string());
  std::size_t count = 0;
  std::string line, phase, stage, partition;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::getline(fields, phase, '\t');
    std::getline(fields, stage, '\t');
    std::getline(fields, partition, '\t');
    if (partition == "test" && phase != "evaluation") ++count;
  }
  return count;
}

}  // namespace mmsurv::harness
