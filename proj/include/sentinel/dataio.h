#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sentinel/fusion.h"

namespace sentinel::data {

using fusion::Label;

struct LabeledExample {
  std::string text;  // non-empty after trimming
  Label label = Label::kBenign;
  std::string source;

  bool operator==(const LabeledExample&) const = default;
};

struct LineError {
  std::size_t line = 0;  // 1-based; CSV reports the record's first line
  std::string message;
};

struct LoadReport {
  std::vector<LabeledExample> examples;
  std::vector<LineError> errors;
};

// Fraction of malformed records above which loading aborts with DataError.
inline constexpr double kMaxMalformedFraction = 0.10;

// One JSON object per line with `text` and `label` (0/1 or "benign"/"injection")
// and optional `source`. Blank lines are ignored. `default_source` fills
// missing sources (defaults to the file stem).
LoadReport load_jsonl(const std::filesystem::path& path, std::string default_source = {});

// RFC 4180 CSV with a header row naming at least `text` and `label`
// (optional `source`). Quoted fields may contain commas, quotes and newlines.
LoadReport load_csv(const std::filesystem::path& path, std::string default_source = {});

// Dispatches on extension: .csv -> load_csv, anything else -> load_jsonl.
LoadReport load_examples(const std::filesystem::path& path, std::string default_source = {});

// Canonical JSONL: {"text": ..., "label": 0|1, "source": ...} per line.
void write_jsonl(const std::vector<LabeledExample>& examples, const std::filesystem::path& path);
std::string to_jsonl_line(const LabeledExample& example);

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct DatasetSplit {
  std::vector<LabeledExample> train;
  std::vector<LabeledExample> val;
  std::vector<LabeledExample> test;
  // Positions in the input each part was drawn from.
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> val_indices;
  std::vector<std::size_t> test_indices;
  std::uint64_t seed = 0;
  SplitRatios ratios;
};

inline constexpr std::size_t kMinSplitExamples = 10;

// Seeded shuffle, then contiguous cut. val and test get floor(n * ratio);
// train takes the remainder. Throws ConfigError when ratios are negative or do
// not sum to 1 (+-1e-9), DataError when fewer than 10 examples are given.
DatasetSplit split(const std::vector<LabeledExample>& examples, SplitRatios ratios,
                   std::uint64_t seed);

}  // namespace sentinel::data
