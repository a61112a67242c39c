#include <cmath>
#include <limits>

#include "sentinel/errors.h"
#include "sentinel/fusion.h"

namespace sentinel::fusion {
namespace {

constexpr double kProbabilityFloor = 1e-12;

void require_finite(const Eigen::Ref<const Eigen::VectorXd>& v, const char* what) {
  if (!v.allFinite()) throw NumericError(std::string("non-finite value in ") + what);
}

}  // namespace

std::string_view to_string(Label label) {
  return label == Label::kInjection ? "injection" : "benign";
}

Label parse_label(std::string_view text) {
  if (text == "0" || text == "benign") return Label::kBenign;
  if (text == "1" || text == "injection") return Label::kInjection;
  throw DataError("unknown label '" + std::string(text) +
                  "' (expected 0, 1, benign or injection)");
}

FusedFeature fuse(const embed::SemanticEmbedding& embedding,
                  const rules::HeuristicFeatureVector& heuristics,
                  std::size_t expected_embedding_dim, std::size_t expected_heuristic_dim) {
  const std::size_t d = embedding.values.size();
  const std::size_t k = heuristics.bits.size();
  if (expected_embedding_dim != 0 && d != expected_embedding_dim) {
    throw DimensionError("embedding has " + std::to_string(d) + " dimensions, expected " +
                         std::to_string(expected_embedding_dim));
  }
  if (expected_heuristic_dim != 0 && k != expected_heuristic_dim) {
    throw DimensionError("heuristic vector has " + std::to_string(k) +
                         " features, expected " + std::to_string(expected_heuristic_dim));
  }
  FusedFeature out;
  out.embedding_dim = d;
  out.heuristic_dim = k;
  out.values.resize(static_cast<Eigen::Index>(d + k));
  for (std::size_t i = 0; i < d; ++i) out.values[static_cast<Eigen::Index>(i)] = embedding.values[i];
  for (std::size_t i = 0; i < k; ++i) {
    out.values[static_cast<Eigen::Index>(d + i)] = heuristics.bits[i] ? 1.0 : 0.0;
  }
  return out;
}

HeadParams HeadParams::zeros(std::size_t input_dim, std::size_t hidden) {
  const auto in = static_cast<Eigen::Index>(input_dim);
  const auto h = static_cast<Eigen::Index>(hidden);
  return HeadParams{Eigen::MatrixXd::Zero(h, in), Eigen::VectorXd::Zero(h),
                    Eigen::MatrixXd::Zero(2, h), Eigen::VectorXd::Zero(2)};
}

void HeadParams::check() const {
  if (w1.rows() == 0 || w1.cols() == 0 || b1.size() != w1.rows() || w2.rows() != 2 ||
      w2.cols() != w1.rows() || b2.size() != 2) {
    throw DimensionError("fusion head parameter shapes are inconsistent");
  }
  if (!w1.allFinite() || !b1.allFinite() || !w2.allFinite() || !b2.allFinite()) {
    throw NumericError("fusion head parameters contain non-finite values");
  }
}

std::size_t HeadParams::parameter_count() const noexcept {
  return static_cast<std::size_t>(w1.size() + b1.size() + w2.size() + b2.size());
}

bool HeadParams::operator==(const HeadParams& other) const {
  auto same = [](const auto& a, const auto& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
  };
  return same(w1, other.w1) && same(b1, other.b1) && same(w2, other.w2) &&
         same(b2, other.b2);
}

Prediction forward(const Eigen::Ref<const Eigen::VectorXd>& x, const HeadParams& params,
                   double threshold) {
  if (x.size() != params.w1.cols()) {
    throw DimensionError("fused feature has " + std::to_string(x.size()) +
                         " values, head expects " + std::to_string(params.w1.cols()));
  }
  const Eigen::VectorXd hidden = (params.w1 * x + params.b1).cwiseMax(0.0);
  const Eigen::Vector2d logits = params.w2 * hidden + params.b2;
  require_finite(logits, "logits");
  const double shift = logits.maxCoeff();
  const double e0 = std::exp(logits[0] - shift);
  const double e1 = std::exp(logits[1] - shift);
  Prediction p;
  p.p_benign = e0 / (e0 + e1);
  p.p_injection = e1 / (e0 + e1);
  p.threshold = threshold;
  p.label = p.p_injection >= threshold ? Label::kInjection : Label::kBenign;
  return p;
}

double loss(const Prediction& prediction, Label label) {
  const double p = label == Label::kInjection ? prediction.p_injection : prediction.p_benign;
  return -std::log(std::max(p, kProbabilityFloor));
}

HeadGradients backward(const Eigen::Ref<const Eigen::VectorXd>& x, Label label,
                       const HeadParams& params) {
  if (x.size() != params.w1.cols()) {
    throw DimensionError("fused feature size does not match the head input");
  }
  const Eigen::VectorXd pre = params.w1 * x + params.b1;
  const Eigen::VectorXd hidden = pre.cwiseMax(0.0);
  const Eigen::Vector2d logits = params.w2 * hidden + params.b2;
  const double shift = logits.maxCoeff();
  Eigen::Vector2d probs((logits.array() - shift).exp());
  probs /= probs.sum();

  HeadGradients g = HeadParams::zeros(params.input_dim(), params.hidden());
  const int target = static_cast<int>(label);
  if (probs[target] < kProbabilityFloor) return g;  // clamped region: loss is flat

  Eigen::Vector2d dlogits = probs;
  dlogits[target] -= 1.0;
  g.w2 = dlogits * hidden.transpose();
  g.b2 = dlogits;
  const Eigen::VectorXd dhidden =
      (params.w2.transpose() * dlogits).cwiseProduct((pre.array() > 0.0).cast<double>().matrix());
  g.w1 = dhidden * x.transpose();
  g.b1 = dhidden;
  return g;
}

}  // namespace sentinel::fusion
