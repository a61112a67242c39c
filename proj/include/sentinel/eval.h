#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sentinel/dataio.h"
#include "sentinel/detector.h"

namespace sentinel::eval {

using fusion::Label;

// Injection is the positive class.
struct ConfusionMatrix {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  void add(Label truth, Label predicted);
  std::size_t total() const noexcept { return tp + fp + fn + tn; }
  bool operator==(const ConfusionMatrix&) const = default;
};

struct EvalReport {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  // Set when the metric's denominator was zero and 0 was reported instead.
  bool accuracy_undefined = false;
  bool precision_undefined = false;
  bool recall_undefined = false;
  bool f1_undefined = false;
  ConfusionMatrix matrix;
  // Rule name -> number of examples on which the rule fired, in pack order.
  std::vector<std::pair<std::string, std::size_t>> rule_triggers;
  std::size_t degraded = 0;  // verdicts decided fail-closed
  std::string model_version;
  std::string rule_pack_version;

  bool operator==(const EvalReport&) const = default;
};

// Accuracy, precision, recall and F1 of a confusion matrix.
EvalReport metrics(const ConfusionMatrix& matrix);

// Runs the detector over every example. Throws DataError when `examples` is
// empty; provider failures propagate.
EvalReport evaluate(const detect::Detector& detector,
                    std::span<const data::LabeledExample> examples);

struct AttackResult {
  double rate = 0.0;  // passed / total
  std::size_t passed = 0;
  std::size_t total = 0;
  std::vector<std::size_t> successful;  // corpus indices classified benign
};

// Fraction of known attacks the detector lets through.
AttackResult attack_success_rate(const detect::Detector& detector,
                                 std::span<const std::string> attack_corpus);

// Plain-text table: A / P / R / F1 columns, the confusion matrix and per-rule
// trigger counts. Undefined metrics print as "0.0000*".
std::string render_text(const EvalReport& report);
std::string render_json(const EvalReport& report);
// Throws ParseError.
EvalReport report_from_json(std::string_view json_text);

}  // namespace sentinel::eval
