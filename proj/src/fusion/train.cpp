#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "sentinel/errors.h"
#include "sentinel/fusion.h"
#include "util/random.h"

namespace sentinel::fusion {
namespace {

void fill_uniform(Eigen::MatrixXd& m, std::mt19937_64& rng, double bound) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = util::uniform_symmetric(rng, bound);
  }
}

void fill_uniform(Eigen::VectorXd& v, std::mt19937_64& rng, double bound) {
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = util::uniform_symmetric(rng, bound);
}

struct BatchResult {
  double loss_sum = 0.0;
  HeadGradients grads;
};

// Mean-loss gradient over the samples selected by `indices`.
BatchResult batch_gradients(std::span<const TrainingSample> samples,
                            std::span<const std::size_t> indices, const HeadParams& params) {
  const auto batch = static_cast<Eigen::Index>(indices.size());
  const auto in = params.w1.cols();
  Eigen::MatrixXd x(in, batch);
  Eigen::VectorXi labels(batch);
  for (Eigen::Index j = 0; j < batch; ++j) {
    const auto& sample = samples[indices[static_cast<std::size_t>(j)]];
    x.col(j) = sample.x;
    labels[j] = static_cast<int>(sample.label);
  }

  const Eigen::MatrixXd pre = (params.w1 * x).colwise() + params.b1;
  const Eigen::MatrixXd hidden = pre.cwiseMax(0.0);
  const Eigen::MatrixXd logits = (params.w2 * hidden).colwise() + params.b2;

  BatchResult result;
  Eigen::MatrixXd dlogits(2, batch);
  for (Eigen::Index j = 0; j < batch; ++j) {
    const double shift = logits.col(j).maxCoeff();
    Eigen::Vector2d p((logits.col(j).array() - shift).exp());
    p /= p.sum();
    const int target = labels[j];
    const double p_true = p[target];
    result.loss_sum += -std::log(std::max(p_true, 1e-12));
    if (p_true < 1e-12) {
      dlogits.col(j).setZero();
    } else {
      p[target] -= 1.0;
      dlogits.col(j) = p;
    }
  }
  if (!std::isfinite(result.loss_sum)) {
    throw NumericError("training loss became non-finite (NaN/inf); check learning rate and "
                       "input features");
  }
  dlogits /= static_cast<double>(batch);

  const Eigen::MatrixXd dhidden =
      (params.w2.transpose() * dlogits).cwiseProduct((pre.array() > 0.0).cast<double>().matrix());
  result.grads.w2 = dlogits * hidden.transpose();
  result.grads.b2 = dlogits.rowwise().sum();
  result.grads.w1 = dhidden * x.transpose();
  result.grads.b1 = dhidden.rowwise().sum();
  return result;
}

}  // namespace

TrainConfig TrainConfig::reference_preset() {
  TrainConfig c;
  c.learning_rate = 2e-5;
  c.batch_size = 16;
  c.weight_decay = 0.02;
  c.patience = 3;
  return c;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be positive");
  }
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (weight_decay < 0.0 || !std::isfinite(weight_decay)) {
    throw ConfigError("weight_decay must be non-negative");
  }
  if (patience == 0) throw ConfigError("patience must be >= 1");
  if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
  if (hidden == 0) throw ConfigError("hidden width must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive");
}

AdamW::AdamW(const TrainConfig& config, const HeadParams& shape_like)
    : lr_(config.learning_rate),
      beta1_(config.beta1),
      beta2_(config.beta2),
      eps_(config.epsilon),
      weight_decay_(config.weight_decay),
      m_(HeadParams::zeros(shape_like.input_dim(), shape_like.hidden())),
      v_(HeadParams::zeros(shape_like.input_dim(), shape_like.hidden())) {}

void AdamW::step(HeadParams& params, const HeadGradients& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
    if (weight_decay_ != 0.0) p *= (1.0 - lr_ * weight_decay_);
    p.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  };
  update(params.w1, grads.w1, m_.w1, v_.w1);
  update(params.b1, grads.b1, m_.b1, v_.b1);
  update(params.w2, grads.w2, m_.w2, v_.w2);
  update(params.b2, grads.b2, m_.b2, v_.b2);
}

EarlyStopping::EarlyStopping(std::size_t patience)
    : patience_(patience), best_loss_(std::numeric_limits<double>::infinity()) {
  if (patience_ == 0) throw ConfigError("patience must be >= 1");
}

bool EarlyStopping::update(double val_loss) {
  ++epochs_;
  improved_last_ = val_loss < best_loss_;
  if (improved_last_) {
    best_loss_ = val_loss;
    best_epoch_ = epochs_;
    stale_ = 0;
  } else {
    ++stale_;
  }
  return stale_ >= patience_;
}

HeadParams init_params(std::size_t input_dim, std::size_t hidden, std::uint64_t seed) {
  HeadParams p = HeadParams::zeros(input_dim, hidden);
  std::mt19937_64 rng(seed);
  const double bound1 = 1.0 / std::sqrt(static_cast<double>(input_dim));
  const double bound2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  fill_uniform(p.w1, rng, bound1);
  fill_uniform(p.b1, rng, bound1);
  fill_uniform(p.w2, rng, bound2);
  fill_uniform(p.b2, rng, bound2);
  return p;
}

std::pair<double, double> evaluate_loss(std::span<const TrainingSample> samples,
                                        const HeadParams& params) {
  if (samples.empty()) return {0.0, 0.0};
  double total = 0.0;
  std::size_t correct = 0;
  for (const auto& s : samples) {
    const Prediction p = forward(s.x, params);
    total += loss(p, s.label);
    if (p.label == s.label) ++correct;
  }
  const auto n = static_cast<double>(samples.size());
  return {total / n, static_cast<double>(correct) / n};
}

TrainResult train(std::span<const TrainingSample> train_set,
                  std::span<const TrainingSample> val_set, const TrainConfig& config,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  config.validate();
  if (train_set.empty() || val_set.empty()) {
    throw DataError("training and validation sets must be non-empty");
  }
  const auto input_dim = static_cast<std::size_t>(train_set.front().x.size());
  if (input_dim == 0) throw DimensionError("training samples have no features");
  for (const auto* set : {&train_set, &val_set}) {
    for (const auto& s : *set) {
      if (static_cast<std::size_t>(s.x.size()) != input_dim) {
        throw DimensionError("training samples have inconsistent feature sizes");
      }
      if (!s.x.allFinite()) throw NumericError("training sample contains non-finite features");
    }
  }

  HeadParams params = init_params(input_dim, config.hidden, config.seed);
  AdamW optimizer(config, params);
  EarlyStopping stopper(config.patience);
  std::mt19937_64 shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  result.params = params;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    util::shuffle(std::span<std::size_t>(order), shuffle_rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t len = std::min(config.batch_size, order.size() - start);
      const auto batch = batch_gradients(
          train_set, std::span<const std::size_t>(order).subspan(start, len), params);
      optimizer.step(params, batch.grads);
    }

    EpochLog entry;
    entry.epoch = epoch;
    std::tie(entry.train_loss, entry.train_accuracy) = evaluate_loss(train_set, params);
    std::tie(entry.val_loss, entry.val_accuracy) = evaluate_loss(val_set, params);
    if (!std::isfinite(entry.val_loss) || !std::isfinite(entry.train_loss)) {
      throw NumericError("loss became non-finite at epoch " + std::to_string(epoch));
    }
    const bool stop = stopper.update(entry.val_loss);
    entry.improved = stopper.improved_last();
    if (entry.improved) result.params = params;
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
    if (stop) break;
  }
  result.best_epoch = stopper.best_epoch();
  result.best_val_loss = stopper.best_loss();
  result.optimizer_steps = optimizer.steps();
  return result;
}

}  // namespace sentinel::fusion
