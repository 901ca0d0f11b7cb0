#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mmsurv/records.hpp"

namespace mmsurv::harness {

struct SplitFractions {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;
  void validate() const;  // ConfigError unless positive and summing to 1
};

struct Split {
  std::vector<std::size_t> train, val, test;  // row indices, ascending
};

// Stratified on (event, survival-time quartile). Sizes: train =
// floor(train * n), val = round of its share of the remainder, test the rest.
// Within the stratum-ordered list each patient goes to the partition with the
// largest deficit against its target count.
Split stratified_split(std::span<const EventRecord> records, SplitFractions fractions, std::uint64_t seed);

enum class Partition { train, val, test };
std::string to_string(Partition p);

// Log of which partitions each pipeline stage touched.
class SplitAudit {
 public:
  struct Entry {
    std::string stage;
    Partition partition;
    std::size_t rows;
    bool during_evaluation;
  };

  void read(Partition p, std::size_t rows, const std::string& stage);
  void begin_evaluation() { evaluating_ = true; }
  bool evaluating() const noexcept { return evaluating_; }
  std::size_t test_reads_before_evaluation() const;
  const std::vector<Entry>& entries() const noexcept { return entries_; }

  std::string to_text() const;
  void append_to(const std::filesystem::path& path) const;
  static std::size_t count_test_reads_before_evaluation(const std::filesystem::path& log);

 private:
  std::vector<Entry> entries_;
  bool evaluating_ = false;
};

}  // namespace mmsurv::harness
