#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "sentinel/detector.h"
#include "sentinel/errors.h"
#include "sentinel/eval.h"
#include "test_support.h"

namespace sentinel::eval {
namespace {

using data::LabeledExample;

constexpr Label I = Label::kInjection;
constexpr Label B = Label::kBenign;

// Predicts whatever label is scripted for the text.
class ScriptedDetector final : public detect::Detector {
 public:
  explicit ScriptedDetector(std::map<std::string, Label> script,
                            std::map<std::string, std::vector<std::string>> fired = {})
      : script_(std::move(script)), fired_(std::move(fired)) {}

  detect::DetectionVerdict detect(std::string_view text) const override {
    detect::DetectionVerdict v;
    const std::string key(text);
    v.label = script_.at(key);
    v.p_injection = v.label == I ? 1.0 : 0.0;
    if (const auto it = fired_.find(key); it != fired_.end()) v.triggered_rules = it->second;
    v.degraded = key.rfind("degraded", 0) == 0;
    return v;
  }
  const rules::RulePack& rule_pack() const noexcept override {
    return rules::default_rule_pack();
  }
  const std::string& model_version() const noexcept override { return version_; }
  double threshold() const noexcept override { return 0.5; }

 private:
  std::map<std::string, Label> script_;
  std::map<std::string, std::vector<std::string>> fired_;
  std::string version_ = "scripted";
};

struct Crafted {
  std::vector<Label> truth;
  std::vector<Label> predicted;
};

EvalReport run(const Crafted& c) {
  std::map<std::string, Label> script;
  std::vector<LabeledExample> examples;
  for (std::size_t i = 0; i < c.truth.size(); ++i) {
    const auto text = "t" + std::to_string(i);
    script[text] = c.predicted[i];
    examples.push_back({text, c.truth[i], "crafted"});
  }
  return evaluate(ScriptedDetector(script), examples);
}

TEST(Metrics, WorkedExample) {
  const auto r = metrics({3, 1, 1, 5});
  EXPECT_EQ(r.accuracy, 0.8);
  EXPECT_EQ(r.precision, 0.75);
  EXPECT_EQ(r.recall, 0.75);
  EXPECT_EQ(r.f1, 0.75);
  EXPECT_FALSE(r.precision_undefined || r.recall_undefined || r.f1_undefined);
}

TEST(Metrics, EmptyMatrixIsFlaggedEverywhere) {
  const auto r = metrics({});
  EXPECT_TRUE(r.accuracy_undefined && r.precision_undefined && r.recall_undefined &&
              r.f1_undefined);
  EXPECT_EQ(r.accuracy, 0.0);
}

TEST(Evaluate, FiveCraftedPredictionSets) {
  // Counts and metric values worked out by hand for each set.
  struct Expect {
    Crafted set;
    ConfusionMatrix m;
    double a, p, r, f1;
    bool p_undef, r_undef, f1_undef;
  };
  const std::vector<Expect> cases = {
      {{{I, I, I, I, B, B, B, B, B, B}, {I, I, I, B, I, B, B, B, B, B}},
       {3, 1, 1, 5}, 0.8, 0.75, 0.75, 0.75, false, false, false},
      {{{I, B, I, B}, {I, B, I, B}}, {2, 0, 0, 2}, 1.0, 1.0, 1.0, 1.0, false, false, false},
      {{{I, I, B}, {B, B, B}}, {0, 0, 2, 1}, 1.0 / 3.0, 0.0, 0.0, 0.0, true, false, true},
      {{{B, B, B, B}, {I, B, B, B}}, {0, 1, 0, 3}, 0.75, 0.0, 0.0, 0.0, false, true, true},
      {{{I, I, I, I, I, B, B, B}, {I, I, I, I, B, I, I, B}},
       {4, 2, 1, 1}, 5.0 / 8.0, 2.0 / 3.0, 0.8, 8.0 / 11.0, false, false, false},
  };
  for (std::size_t k = 0; k < cases.size(); ++k) {
    const auto& c = cases[k];
    const auto r = run(c.set);
    EXPECT_EQ(r.matrix, c.m) << k;
    EXPECT_EQ(r.accuracy, c.a) << k;
    EXPECT_EQ(r.precision, c.p) << k;
    EXPECT_EQ(r.recall, c.r) << k;
    EXPECT_EQ(r.f1, c.f1) << k;
    EXPECT_EQ(r.precision_undefined, c.p_undef) << k;
    EXPECT_EQ(r.recall_undefined, c.r_undef) << k;
    EXPECT_EQ(r.f1_undefined, c.f1_undef) << k;
    EXPECT_FALSE(r.accuracy_undefined);
    EXPECT_EQ(r.matrix.total(), c.set.truth.size());
  }
}

TEST(Evaluate, InvariantUnderReordering) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    Crafted c;
    for (int i = 0; i < 40; ++i) {
      c.truth.push_back(rng() % 2 ? I : B);
      c.predicted.push_back(rng() % 2 ? I : B);
    }
    const auto base = run(c);
    std::vector<std::size_t> perm(c.truth.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Crafted shuffled;
    for (auto i : perm) {
      shuffled.truth.push_back(c.truth[i]);
      shuffled.predicted.push_back(c.predicted[i]);
    }
    EXPECT_EQ(run(shuffled), base);
  }
}

TEST(Evaluate, CountsRuleTriggersAndDegradedVerdicts) {
  const ScriptedDetector det({{"a", I}, {"b", I}, {"degraded c", I}},
                             {{"a", {"is_ignore", "is_shot_attack"}}, {"b", {"is_ignore"}}});
  const std::vector<LabeledExample> ex{{"a", I, ""}, {"b", B, ""}, {"degraded c", I, ""}};
  const auto r = evaluate(det, ex);
  ASSERT_EQ(r.rule_triggers.size(), 10u);
  EXPECT_EQ(r.rule_triggers[0], (std::pair<std::string, std::size_t>{"is_ignore", 2}));
  EXPECT_EQ(r.rule_triggers[8], (std::pair<std::string, std::size_t>{"is_shot_attack", 1}));
  EXPECT_EQ(r.rule_triggers[1].second, 0u);
  EXPECT_EQ(r.degraded, 1u);
  EXPECT_EQ(r.model_version, "scripted");
  EXPECT_EQ(r.rule_pack_version, rules::default_rule_pack().version());
}

TEST(Evaluate, EmptyInputIsRejected) {
  const ScriptedDetector det({});
  EXPECT_THROW(evaluate(det, std::vector<LabeledExample>{}), DataError);
}

TEST(AttackSuccessRate, Extremes) {
  const ScriptedDetector catches({{"x", I}, {"y", I}});
  const ScriptedDetector misses({{"x", B}, {"y", B}});
  const std::vector<std::string> corpus{"x", "y"};
  EXPECT_EQ(attack_success_rate(catches, corpus).rate, 0.0);
  const auto r = attack_success_rate(misses, corpus);
  EXPECT_EQ(r.rate, 1.0);
  EXPECT_EQ(r.successful, (std::vector<std::size_t>{0, 1}));
}

TEST(AttackSuccessRate, ThirtySixOfTwoHundredFiftyOne) {
  std::map<std::string, Label> script;
  std::vector<std::string> corpus;
  for (int i = 0; i < 251; ++i) {
    corpus.push_back("attack " + std::to_string(i));
    script[corpus.back()] = i % 7 == 3 ? B : I;
  }
  std::size_t passing = 0;
  for (const auto& [text, label] : script) passing += label == B;
  ASSERT_EQ(passing, 36u);
  const auto r = attack_success_rate(ScriptedDetector(script), corpus);
  EXPECT_EQ(r.passed, 36u);
  EXPECT_EQ(r.total, 251u);
  EXPECT_NEAR(r.rate * 100.0, 14.34, 0.005);
  char pct[16];
  std::snprintf(pct, sizeof(pct), "%.2f", r.rate * 100.0);
  EXPECT_STREQ(pct, "14.34");
}

EvalReport sample_report() {
  EvalReport r = metrics({3, 1, 1, 5});
  r.rule_triggers = {{"is_ignore", 2}, {"is_shot_attack", 0}};
  r.model_version = "model-abc";
  r.rule_pack_version = "p1";
  return r;
}

TEST(Render, TextGolden) {
  EXPECT_EQ(render_text(sample_report()),
            testing::read_text(testing::source_dir() / "tests" / "golden" / "eval_report.txt"));
}

TEST(Render, UndefinedMetricsAreMarked) {
  EvalReport r = metrics({0, 0, 2, 1});
  r.degraded = 1;
  r.model_version = "heuristics-only";
  r.rule_pack_version = "p1";
  EXPECT_EQ(render_text(r), testing::read_text(testing::source_dir() / "tests" / "golden" /
                                               "eval_report_undefined.txt"));
}

TEST(Render, JsonRoundTrip) {
  const auto r = sample_report();
  EXPECT_EQ(report_from_json(render_json(r)), r);
  auto flagged = metrics({0, 0, 2, 1});
  flagged.degraded = 4;
  EXPECT_EQ(report_from_json(render_json(flagged)), flagged);
  const auto doc = nlohmann::json::parse(render_json(r));
  EXPECT_EQ(doc["confusion"]["tp"], 3);
  EXPECT_EQ(doc["rule_triggers"]["is_ignore"], 2);
  EXPECT_THROW(report_from_json("{}"), ParseError);
}

}  // namespace
}  // namespace sentinel::eval
