#include <cstdio>
#include <sstream>

#include "json.hpp"
#include "sentinel/errors.h"
#include "sentinel/eval.h"

namespace sentinel::eval {
namespace {

using nlohmann::json;

double ratio(std::size_t num, std::size_t den, bool& undefined) {
  undefined = den == 0;
  return undefined ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

std::string metric_cell(double v, bool undefined) {
  return fixed4(v) + (undefined ? "*" : " ");
}

}  // namespace

void ConfusionMatrix::add(Label truth, Label predicted) {
  const bool pos_truth = truth == Label::kInjection;
  const bool pos_pred = predicted == Label::kInjection;
  if (pos_truth && pos_pred) ++tp;
  else if (!pos_truth && pos_pred) ++fp;
  else if (pos_truth) ++fn;
  else ++tn;
}

EvalReport metrics(const ConfusionMatrix& m) {
  EvalReport r;
  r.matrix = m;
  r.accuracy = ratio(m.tp + m.tn, m.total(), r.accuracy_undefined);
  r.precision = ratio(m.tp, m.tp + m.fp, r.precision_undefined);
  r.recall = ratio(m.tp, m.tp + m.fn, r.recall_undefined);
  const double sum = r.precision + r.recall;
  r.f1_undefined = !(sum > 0.0);
  // 2PR/(P+R) rewritten over counts; one rounding instead of four.
  r.f1 = r.f1_undefined ? 0.0
                        : static_cast<double>(2 * m.tp) /
                              static_cast<double>(2 * m.tp + m.fp + m.fn);
  return r;
}

EvalReport evaluate(const detect::Detector& detector,
                    std::span<const data::LabeledExample> examples) {
  if (examples.empty()) throw DataError("evaluation needs at least one example");
  const auto names = detector.rule_pack().names();
  std::vector<std::size_t> triggers(names.size(), 0);
  ConfusionMatrix matrix;
  std::size_t degraded = 0;
  for (const auto& ex : examples) {
    const auto verdict = detector.detect(ex.text);
    matrix.add(ex.label, verdict.label);
    if (verdict.degraded) ++degraded;
    for (const auto& rule : verdict.triggered_rules) {
      for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == rule) ++triggers[i];
      }
    }
  }
  EvalReport report = metrics(matrix);
  for (std::size_t i = 0; i < names.size(); ++i) report.rule_triggers.emplace_back(names[i], triggers[i]);
  report.degraded = degraded;
  report.model_version = detector.model_version();
  report.rule_pack_version = detector.rule_pack().version();
  return report;
}

AttackResult attack_success_rate(const detect::Detector& detector,
                                 std::span<const std::string> attack_corpus) {
  AttackResult out;
  out.total = attack_corpus.size();
  for (std::size_t i = 0; i < attack_corpus.size(); ++i) {
    if (detector.detect(attack_corpus[i]).label == Label::kBenign) out.successful.push_back(i);
  }
  out.passed = out.successful.size();
  out.rate = out.total == 0 ? 0.0 : static_cast<double>(out.passed) / static_cast<double>(out.total);
  return out;
}

std::string render_text(const EvalReport& r) {
  std::ostringstream out;
  out << "model: " << r.model_version << "  rule pack: " << r.rule_pack_version << '\n';
  out << "examples: " << r.matrix.total();
  if (r.degraded) out << "  (degraded verdicts: " << r.degraded << ')';
  out << "\n\n";
  out << "  A        P        R        F1\n";
  std::string cells = "  " + metric_cell(r.accuracy, r.accuracy_undefined) + "  " +
                      metric_cell(r.precision, r.precision_undefined) + "  " +
                      metric_cell(r.recall, r.recall_undefined) + "  " +
                      metric_cell(r.f1, r.f1_undefined);
  cells.erase(cells.find_last_not_of(' ') + 1);
  out << cells << '\n';
  if (r.accuracy_undefined || r.precision_undefined || r.recall_undefined || r.f1_undefined) {
    out << "  * denominator was zero; reported as 0\n";
  }
  out << "\n                 pred injection  pred benign\n";
  char row[96];
  std::snprintf(row, sizeof(row), "  true injection %14zu  %11zu\n", r.matrix.tp, r.matrix.fn);
  out << row;
  std::snprintf(row, sizeof(row), "  true benign    %14zu  %11zu\n", r.matrix.fp, r.matrix.tn);
  out << row;
  if (!r.rule_triggers.empty()) {
    out << "\nrule triggers\n";
    for (const auto& [name, count] : r.rule_triggers) {
      std::snprintf(row, sizeof(row), "  %-24s %zu\n", name.c_str(), count);
      out << row;
    }
  }
  return out.str();
}

std::string render_json(const EvalReport& r) {
  json triggers = json::object();
  json order = json::array();
  for (const auto& [name, count] : r.rule_triggers) {
    triggers[name] = count;
    order.push_back(name);
  }
  json doc{{"accuracy", r.accuracy},
           {"precision", r.precision},
           {"recall", r.recall},
           {"f1", r.f1},
           {"undefined",
            {{"accuracy", r.accuracy_undefined},
             {"precision", r.precision_undefined},
             {"recall", r.recall_undefined},
             {"f1", r.f1_undefined}}},
           {"confusion", {{"tp", r.matrix.tp}, {"fp", r.matrix.fp}, {"fn", r.matrix.fn}, {"tn", r.matrix.tn}}},
           {"rule_triggers", triggers},
           {"rule_order", order},
           {"degraded", r.degraded},
           {"model_version", r.model_version},
           {"rule_pack_version", r.rule_pack_version}};
  return doc.dump(2) + "\n";
}

EvalReport report_from_json(std::string_view json_text) {
  try {
    const json doc = json::parse(json_text);
    EvalReport r;
    r.accuracy = doc.at("accuracy").get<double>();
    r.precision = doc.at("precision").get<double>();
    r.recall = doc.at("recall").get<double>();
    r.f1 = doc.at("f1").get<double>();
    const json& undef = doc.at("undefined");
    r.accuracy_undefined = undef.at("accuracy").get<bool>();
    r.precision_undefined = undef.at("precision").get<bool>();
    r.recall_undefined = undef.at("recall").get<bool>();
    r.f1_undefined = undef.at("f1").get<bool>();
    const json& c = doc.at("confusion");
    r.matrix = {c.at("tp").get<std::size_t>(), c.at("fp").get<std::size_t>(),
                c.at("fn").get<std::size_t>(), c.at("tn").get<std::size_t>()};
    const json& triggers = doc.at("rule_triggers");
    for (const auto& name : doc.at("rule_order")) {
      const auto key = name.get<std::string>();
      r.rule_triggers.emplace_back(key, triggers.at(key).get<std::size_t>());
    }
    r.degraded = doc.value("degraded", std::size_t{0});
    r.model_version = doc.at("model_version").get<std::string>();
    r.rule_pack_version = doc.at("rule_pack_version").get<std::string>();
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed evaluation report: ") + e.what());
  }
}

}  // namespace sentinel::eval
