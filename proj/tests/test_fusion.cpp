#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <random>

#include "sentinel/detector.h"
#include "sentinel/errors.h"
#include "sentinel/fusion.h"
#include "test_support.h"

namespace sentinel::fusion {
namespace {

HeadParams random_head(std::size_t in, std::size_t hidden, std::mt19937_64& rng,
                       double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  HeadParams p = HeadParams::zeros(in, hidden);
  for (auto* m : {&p.w1, &p.w2}) {
    for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = u(rng);
  }
  for (auto* v : {&p.b1, &p.b2}) {
    for (Eigen::Index i = 0; i < v->size(); ++i) (*v)[i] = u(rng);
  }
  return p;
}

Eigen::VectorXd random_vector(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  Eigen::VectorXd x(static_cast<Eigen::Index>(n));
  for (auto& v : x) v = u(rng);
  return x;
}

TEST(Fuse, ConcatenatesInOrder) {
  const embed::SemanticEmbedding e{{0.5, -0.5}, "t"};
  rules::HeuristicFeatureVector h{{1, 0}, {"a", "b"}};
  const auto f = fuse(e, h);
  EXPECT_EQ(f.values, (Eigen::VectorXd(4) << 0.5, -0.5, 1.0, 0.0).finished());
  EXPECT_EQ(f.embedding_dim, 2u);
  EXPECT_EQ(f.heuristic_dim, 2u);
  EXPECT_EQ(std::vector<double>(f.embedding().begin(), f.embedding().end()), e.values);
  EXPECT_EQ(std::vector<double>(f.heuristics().begin(), f.heuristics().end()),
            (std::vector<double>{1.0, 0.0}));
}

TEST(Fuse, ZerosGiveZeroVector) {
  const embed::SemanticEmbedding e{{0.0, 0.0, 0.0}, "t"};
  rules::HeuristicFeatureVector h{{0, 0}, {"a", "b"}};
  EXPECT_TRUE(fuse(e, h).values.isZero());
}

TEST(Fuse, DimensionMismatch) {
  const embed::SemanticEmbedding e{{0.5, -0.5}, "t"};
  rules::HeuristicFeatureVector h{{1}, {"a"}};
  EXPECT_THROW(fuse(e, h, 3, 1), DimensionError);
  EXPECT_THROW(fuse(e, h, 2, 2), DimensionError);
  EXPECT_NO_THROW(fuse(e, h, 2, 1));
}

TEST(Forward, ZeroParamsAreUniform) {
  const auto p = HeadParams::zeros(3, 4);
  const auto pred = forward(Eigen::VectorXd::Ones(3), p);
  EXPECT_EQ(pred.p_benign, 0.5);
  EXPECT_EQ(pred.p_injection, 0.5);
  EXPECT_EQ(pred.label, Label::kInjection);  // p_injection >= threshold
}

TEST(Forward, HandComputedTinyHead) {
  // x = [0.5, 1]; pre = [-0.5, 1.25]; relu = [0, 1.25]; logits = [0.1, 2.4].
  HeadParams p = HeadParams::zeros(2, 2);
  p.w1 << 1.0, -1.0, 0.5, 2.0;
  p.b1 << 0.0, -1.0;
  p.w2 << 1.0, 0.0, -1.0, 2.0;
  p.b2 << 0.1, -0.1;
  const auto pred = forward((Eigen::VectorXd(2) << 0.5, 1.0).finished(), p);
  // p_injection = 1 / (1 + exp(-2.3)).
  EXPECT_NEAR(pred.p_injection, 0.9088770389851438, 1e-12);
  EXPECT_NEAR(pred.p_benign, 0.09112296101485615, 1e-12);
  EXPECT_EQ(pred.label, Label::kInjection);
  const auto strict = forward((Eigen::VectorXd(2) << 0.5, 1.0).finished(), p, 0.95);
  EXPECT_EQ(strict.label, Label::kBenign);
  EXPECT_EQ(strict.threshold, 0.95);
}

TEST(Forward, ProbabilitiesSumToOneOnRandomHeads) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t in = 1 + rng() % 12, hidden = 1 + rng() % 8;
    const auto p = random_head(in, hidden, rng, trial < 250 ? 1.0 : 200.0);
    const auto pred = forward(random_vector(in, rng), p);
    EXPECT_NEAR(pred.p_benign + pred.p_injection, 1.0, 1e-9);
    EXPECT_GE(pred.p_injection, 0.0);
    EXPECT_LE(pred.p_injection, 1.0);
  }
}

TEST(Forward, LargeLogitsDoNotOverflow) {
  HeadParams p = HeadParams::zeros(1, 1);
  p.w1(0, 0) = 1.0;
  p.w2(1, 0) = 1e6;
  const auto pred = forward(Eigen::VectorXd::Ones(1), p);
  EXPECT_EQ(pred.p_injection, 1.0);
  EXPECT_EQ(pred.p_benign, 0.0);
}

TEST(Forward, Errors) {
  const auto p = HeadParams::zeros(3, 2);
  EXPECT_THROW(forward(Eigen::VectorXd::Ones(4), p), DimensionError);
  Eigen::VectorXd x = Eigen::VectorXd::Ones(3);
  x[1] = std::nan("");
  EXPECT_THROW(forward(x, p), NumericError);
  HeadParams bad = p;
  bad.b2[0] = std::numeric_limits<double>::infinity();
  EXPECT_THROW(forward(Eigen::VectorXd::Ones(3), bad), NumericError);
}

TEST(Loss, Identities) {
  Prediction uniform;
  EXPECT_NEAR(loss(uniform, Label::kBenign), std::log(2.0), 1e-12);
  EXPECT_NEAR(loss(uniform, Label::kInjection), 0.693147180559945, 1e-12);
  Prediction sure{1.0, 0.0, Label::kBenign, 0.5};
  EXPECT_EQ(loss(sure, Label::kBenign), 0.0);
  EXPECT_NEAR(loss(sure, Label::kInjection), -std::log(1e-12), 1e-9);  // clamped
  Prediction p{0.9, 0.1, Label::kBenign, 0.5};
  EXPECT_NEAR(loss(p, Label::kInjection), 2.302585, 1e-6);
}

double loss_at(const Eigen::VectorXd& x, Label y, const HeadParams& p) {
  return loss(forward(x, p), y);
}

TEST(Backward, MatchesCentralFiniteDifferencesOnTwentyRandomHeads) {
  std::mt19937_64 rng(20240601);
  constexpr double kEps = 1e-5;
  double worst = 0.0;
  int heads = 0;
  while (heads < 20) {
    const std::size_t in = 2 + rng() % 5, hidden = 2 + rng() % 4;
    const auto p = random_head(in, hidden, rng);
    const auto x = random_vector(in, rng);
    // Stay away from ReLU kinks so the finite difference is well defined.
    const Eigen::VectorXd pre = p.w1 * x + p.b1;
    if ((pre.array().abs() < 1e-3).any()) continue;
    ++heads;
    const Label y = (rng() % 2) ? Label::kInjection : Label::kBenign;
    const auto g = backward(x, y, p);

    auto check = [&](auto member) {
      HeadParams probe = p;
      auto& target = probe.*member;
      const auto& analytic = g.*member;
      for (Eigen::Index i = 0; i < target.size(); ++i) {
        const double saved = target.data()[i];
        target.data()[i] = saved + kEps;
        const double up = loss_at(x, y, probe);
        target.data()[i] = saved - kEps;
        const double down = loss_at(x, y, probe);
        target.data()[i] = saved;
        const double numeric = (up - down) / (2 * kEps);
        const double a = analytic.data()[i];
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
        worst = std::max(worst, std::abs(a - numeric) / denom);
      }
    };
    check(&HeadParams::w1);
    check(&HeadParams::b1);
    check(&HeadParams::w2);
    check(&HeadParams::b2);
  }
  EXPECT_LE(worst, 1e-4);
}

TEST(Backward, ZeroInputGivesZeroW1Gradient) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 10; ++i) {
    const auto p = random_head(5, 3, rng);
    const auto g = backward(Eigen::VectorXd::Zero(5), Label::kInjection, p);
    EXPECT_TRUE(g.w1.isZero());
  }
}

TEST(Backward, GradientVanishesAfterFittingOneSample) {
  std::mt19937_64 rng(4);
  const auto x = random_vector(4, rng);
  const TrainingSample s{x, Label::kInjection};
  TrainConfig c;
  c.hidden = 8;
  c.weight_decay = 0.0;
  c.learning_rate = 0.05;
  c.max_epochs = 400;
  c.patience = 400;
  c.batch_size = 1;
  const auto r = train(std::span(&s, 1), std::span(&s, 1), c);
  const auto g = backward(x, Label::kInjection, r.params);
  const double norm = std::sqrt(g.w1.squaredNorm() + g.b1.squaredNorm() +
                                g.w2.squaredNorm() + g.b2.squaredNorm());
  EXPECT_LT(norm, 1e-3);
}

TEST(AdamW, ZeroDecayMatchesReferenceAdam) {
  std::mt19937_64 rng(12);
  TrainConfig c;
  c.weight_decay = 0.0;
  c.learning_rate = 0.01;
  HeadParams p = random_head(3, 2, rng);
  AdamW opt(c, p);

  // Reference Adam over flattened parameters.
  auto flatten = [](const HeadParams& h) {
    std::vector<double> out;
    for (const auto* m : {&h.w1, &h.w2}) out.insert(out.end(), m->data(), m->data() + m->size());
    for (const auto* v : {&h.b1, &h.b2}) out.insert(out.end(), v->data(), v->data() + v->size());
    return out;
  };
  std::vector<double> theta = flatten(p), m(theta.size(), 0.0), v(theta.size(), 0.0);
  for (int t = 1; t <= 25; ++t) {
    const HeadParams g = random_head(3, 2, rng);
    const auto gf = flatten(g);
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = 0.9 * m[i] + 0.1 * gf[i];
      v[i] = 0.999 * v[i] + 0.001 * gf[i] * gf[i];
      const double mh = m[i] / (1 - std::pow(0.9, t));
      const double vh = v[i] / (1 - std::pow(0.999, t));
      theta[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    }
    opt.step(p, g);
    const auto got = flatten(p);
    for (std::size_t i = 0; i < theta.size(); ++i) ASSERT_NEAR(got[i], theta[i], 1e-14);
  }
  EXPECT_EQ(opt.steps(), 25u);
}

TEST(AdamW, DecayIsDecoupledFromGradient) {
  std::mt19937_64 rng(13);
  TrainConfig c;
  c.learning_rate = 0.1;
  c.weight_decay = 0.5;
  HeadParams p = random_head(2, 2, rng);
  const HeadParams before = p;
  AdamW opt(c, p);
  opt.step(p, HeadParams::zeros(2, 2));
  EXPECT_TRUE(p.w1.isApprox(before.w1 * 0.95, 1e-15));
  EXPECT_TRUE(p.b2.isApprox(before.b2 * 0.95, 1e-15));
}

TEST(EarlyStopping, StopsAfterPatienceWithoutImprovement) {
  EarlyStopping es(3);
  const std::vector<double> losses{1.0, 0.9, 0.95, 0.96, 0.97};
  std::vector<bool> stops;
  for (double l : losses) stops.push_back(es.update(l));
  EXPECT_EQ(stops, (std::vector<bool>{false, false, false, false, true}));
  EXPECT_EQ(es.best_epoch(), 2u);
  EXPECT_EQ(es.best_loss(), 0.9);
  EXPECT_EQ(es.epochs_seen(), 5u);
}

TEST(EarlyStopping, EqualLossIsNotImprovement) {
  EarlyStopping es(1);
  EXPECT_FALSE(es.update(1.0));
  EXPECT_TRUE(es.update(1.0));
  EXPECT_THROW(EarlyStopping(0), ConfigError);
}

TEST(TrainConfig, PresetsAndValidation) {
  const TrainConfig d;
  EXPECT_EQ(d.learning_rate, 1e-3);
  EXPECT_EQ(d.batch_size, 16u);
  EXPECT_EQ(d.weight_decay, 0.02);
  EXPECT_EQ(d.patience, 3u);
  EXPECT_EQ(d.hidden, 256u);
  const auto ref = TrainConfig::reference_preset();
  EXPECT_EQ(ref.learning_rate, 2e-5);
  TrainConfig bad;
  bad.batch_size = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = {};
  bad.learning_rate = -1;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = {};
  bad.patience = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(InitParams, BoundedAndSeeded) {
  const auto a = init_params(16, 8, 7);
  EXPECT_EQ(a, init_params(16, 8, 7));
  EXPECT_FALSE(a == init_params(16, 8, 8));
  EXPECT_LE(a.w1.cwiseAbs().maxCoeff(), 0.25);
  EXPECT_LE(a.b1.cwiseAbs().maxCoeff(), 0.25);
  EXPECT_LE(a.w2.cwiseAbs().maxCoeff(), 1.0 / std::sqrt(8.0));
}

std::vector<TrainingSample> separable_samples() {
  const auto report = data::load_jsonl(testing::fixture("separable_200.jsonl"));
  const embed::StubProvider stub(64);
  return detect::featurize(report.examples, rules::default_rule_pack(), stub);
}

TEST(Train, SeparableFixtureReachesNinetyFivePercent) {
  const auto samples = separable_samples();
  ASSERT_EQ(samples.size(), 200u);
  TrainConfig c;
  c.max_epochs = 50;
  const auto start = std::chrono::steady_clock::now();
  const auto r = train(samples, samples, c);
  EXPECT_LT(std::chrono::steady_clock::now() - start, std::chrono::seconds(30));
  EXPECT_LE(r.log.size(), 50u);
  const auto [loss_value, accuracy] = evaluate_loss(samples, r.params);
  EXPECT_GE(accuracy, 0.95);
  EXPECT_EQ(loss_value, r.best_val_loss);
}

TEST(Train, DeterministicPerSeed) {
  const auto samples = separable_samples();
  TrainConfig c;
  c.max_epochs = 5;
  c.hidden = 32;
  const auto a = train(samples, samples, c);
  const auto b = train(samples, samples, c);
  EXPECT_EQ(a.params, b.params);
  c.seed = 43;
  EXPECT_FALSE(train(samples, samples, c).params == a.params);
}

TEST(Train, ReturnsBestValidationParameters) {
  std::mt19937_64 rng(77);
  std::vector<TrainingSample> noisy, val;
  for (int i = 0; i < 60; ++i) {
    noisy.push_back({random_vector(6, rng), (rng() % 2) ? Label::kInjection : Label::kBenign});
    val.push_back({random_vector(6, rng), (rng() % 2) ? Label::kInjection : Label::kBenign});
  }
  TrainConfig c;
  c.learning_rate = 0.05;
  c.hidden = 16;
  c.max_epochs = 40;
  std::vector<EpochLog> seen;
  const auto r = train(noisy, val, c, [&](const EpochLog& e) { seen.push_back(e); });
  ASSERT_EQ(seen.size(), r.log.size());
  double best = std::numeric_limits<double>::infinity();
  for (const auto& e : r.log) best = std::min(best, e.val_loss);
  EXPECT_EQ(r.best_val_loss, best);
  EXPECT_EQ(evaluate_loss(val, r.params).first, best);
  EXPECT_EQ(r.log[r.best_epoch - 1].val_loss, best);
  EXPECT_LT(r.log.size(), 40u);  // random labels: early stopping kicks in
}

TEST(Train, RejectsBadInput) {
  TrainConfig c;
  std::vector<TrainingSample> empty;
  std::vector<TrainingSample> one{{Eigen::VectorXd::Ones(3), Label::kBenign}};
  std::vector<TrainingSample> other{{Eigen::VectorXd::Ones(4), Label::kBenign}};
  EXPECT_THROW(train(empty, one, c), DataError);
  EXPECT_THROW(train(one, other, c), DimensionError);
  std::vector<TrainingSample> nan{{Eigen::VectorXd::Constant(3, std::nan("")), Label::kBenign}};
  EXPECT_THROW(train(nan, one, c), NumericError);
}

FusionHeadParams sample_model() {
  FusionHeadParams m;
  std::mt19937_64 rng(5);
  m.head = random_head(12, 4, rng);
  m.head.w1(0, 0) = 0.1;          // not exactly representable
  m.head.w1(0, 1) = 1.0 / 3.0;
  m.head.b1(0) = -2.5e-300;
  m.embedding_dim = 10;
  m.heuristic_dim = 2;
  m.rule_pack_version = "pack-7";
  m.provider_backend = "stub";
  m.provider_dim = 10;
  return m;
}

TEST(ModelFile, RoundTripIsExact) {
  const auto m = sample_model();
  EXPECT_EQ(parse_params(serialize_params(m)), m);
  testing::TempDir dir;
  save_params(m, dir / "model.json");
  EXPECT_EQ(load_params(dir / "model.json"), m);
  EXPECT_EQ(model_fingerprint(m), model_fingerprint(load_params(dir / "model.json")));
  EXPECT_EQ(model_fingerprint(m).rfind("model-", 0), 0u);
  EXPECT_EQ(model_fingerprint(m).size(), 18u);
}

TEST(ModelFile, ExpectationsAreChecked) {
  testing::TempDir dir;
  save_params(sample_model(), dir / "model.json");
  EXPECT_THROW(load_params(dir / "model.json", {11, 0, ""}), DimensionError);
  EXPECT_THROW(load_params(dir / "model.json", {0, 10, ""}), DimensionError);
  EXPECT_THROW(load_params(dir / "model.json", {0, 0, "other"}), ConfigError);
  EXPECT_NO_THROW(load_params(dir / "model.json", {10, 2, "pack-7"}));
}

TEST(ModelFile, TruncatedAndMalformedFilesAreParseErrors) {
  const auto text = serialize_params(sample_model());
  for (std::size_t cut : {std::size_t{0}, std::size_t{1}, text.size() / 3, text.size() / 2,
                          text.size() - 2}) {
    EXPECT_THROW(parse_params(text.substr(0, cut)), ParseError) << cut;
  }
  auto doc = nlohmann::json::parse(text);
  doc["w1"].erase(doc["w1"].begin());
  EXPECT_THROW(parse_params(doc.dump()), ParseError);
  doc = nlohmann::json::parse(text);
  doc.erase("b2");
  EXPECT_THROW(parse_params(doc.dump()), ParseError);
  doc = nlohmann::json::parse(text);
  doc["format_version"] = 99;
  EXPECT_THROW(parse_params(doc.dump()), ConfigError);
  EXPECT_THROW(load_params("/nonexistent/model.json"), DataError);
}

TEST(Labels, ParseAndPrint) {
  EXPECT_EQ(parse_label("1"), Label::kInjection);
  EXPECT_EQ(parse_label("benign"), Label::kBenign);
  EXPECT_EQ(to_string(Label::kInjection), "injection");
  EXPECT_THROW(parse_label("maybe"), DataError);
}

}  // namespace
}  // namespace sentinel::fusion
