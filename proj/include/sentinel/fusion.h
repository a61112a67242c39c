#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sentinel/embed.h"
#include "sentinel/rules.h"

namespace sentinel::fusion {

enum class Label : int { kBenign = 0, kInjection = 1 };

std::string_view to_string(Label label);
// Accepts 0/1, "benign"/"injection". Throws DataError otherwise.
Label parse_label(std::string_view text);

// [embedding | heuristic bits]; the trailing heuristic_dim slots are 0 or 1.
struct FusedFeature {
  Eigen::VectorXd values;
  std::size_t embedding_dim = 0;
  std::size_t heuristic_dim = 0;

  std::span<const double> embedding() const {
    return {values.data(), embedding_dim};
  }
  std::span<const double> heuristics() const {
    return {values.data() + embedding_dim, heuristic_dim};
  }
};

// Concatenation in declared order. When expected dims are given (non-zero),
// inputs must match them or DimensionError is thrown.
FusedFeature fuse(const embed::SemanticEmbedding& embedding,
                  const rules::HeuristicFeatureVector& heuristics,
                  std::size_t expected_embedding_dim = 0,
                  std::size_t expected_heuristic_dim = 0);

// Two fully connected layers: ReLU hidden layer, softmax over 2 classes.
struct HeadParams {
  Eigen::MatrixXd w1;  // hidden x input
  Eigen::VectorXd b1;  // hidden
  Eigen::MatrixXd w2;  // 2 x hidden
  Eigen::VectorXd b2;  // 2

  static HeadParams zeros(std::size_t input_dim, std::size_t hidden);

  std::size_t input_dim() const noexcept { return static_cast<std::size_t>(w1.cols()); }
  std::size_t hidden() const noexcept { return static_cast<std::size_t>(w1.rows()); }
  // Throws DimensionError when shapes disagree, NumericError on non-finite entries.
  void check() const;
  std::size_t parameter_count() const noexcept;
  bool operator==(const HeadParams& other) const;
};

using HeadGradients = HeadParams;

struct Prediction {
  double p_benign = 0.5;
  double p_injection = 0.5;
  Label label = Label::kBenign;
  double threshold = 0.5;
};

// Throws DimensionError on size mismatch, NumericError on non-finite values.
Prediction forward(const Eigen::Ref<const Eigen::VectorXd>& x, const HeadParams& params,
                   double threshold = 0.5);

// -log p(true class), probability clamped below at 1e-12.
double loss(const Prediction& prediction, Label label);

// Exact gradient of loss(forward(x), label) with respect to every parameter.
HeadGradients backward(const Eigen::Ref<const Eigen::VectorXd>& x, Label label,
                       const HeadParams& params);

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 16;
  double weight_decay = 0.02;
  std::size_t patience = 3;
  std::size_t max_epochs = 50;
  std::size_t hidden = 256;
  std::uint64_t seed = 42;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  // Optimizer settings reported for full encoder fine-tuning (lr 2e-5).
  static TrainConfig reference_preset();
  void validate() const;  // throws ConfigError
};

// Adam with decoupled weight decay (AdamW): p <- p - lr*(m_hat/(sqrt(v_hat)+eps) + wd*p).
class AdamW {
 public:
  AdamW(const TrainConfig& config, const HeadParams& shape_like);
  void step(HeadParams& params, const HeadGradients& grads);
  std::size_t steps() const noexcept { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_, weight_decay_;
  std::size_t t_ = 0;
  HeadParams m_;
  HeadParams v_;
};

// Stops once validation loss has failed to improve for `patience` epochs in
// a row; remembers the best epoch (1-based).
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience);
  // Records one epoch's validation loss; returns true when training should stop.
  bool update(double val_loss);
  bool improved_last() const noexcept { return improved_last_; }
  std::size_t best_epoch() const noexcept { return best_epoch_; }
  double best_loss() const noexcept { return best_loss_; }
  std::size_t epochs_seen() const noexcept { return epochs_; }

 private:
  std::size_t patience_;
  std::size_t epochs_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t stale_ = 0;
  double best_loss_;
  bool improved_last_ = false;
};

struct TrainingSample {
  Eigen::VectorXd x;
  Label label = Label::kBenign;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  bool improved = false;
};

struct TrainResult {
  HeadParams params;  // best-validation-loss parameters
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  std::size_t optimizer_steps = 0;
};

// Seeded initialization: every weight and bias ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
HeadParams init_params(std::size_t input_dim, std::size_t hidden, std::uint64_t seed);

// Mini-batch AdamW on mean cross-entropy with per-epoch seeded shuffling and
// early stopping on validation loss. Throws NumericError on a NaN loss.
// `on_epoch` (optional) observes every epoch as it completes.
TrainResult train(std::span<const TrainingSample> train_set,
                  std::span<const TrainingSample> val_set, const TrainConfig& config,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

// Mean loss and accuracy of `params` over `samples`.
std::pair<double, double> evaluate_loss(std::span<const TrainingSample> samples,
                                        const HeadParams& params);

// Trained head plus the compatibility metadata stored in the model file.
struct FusionHeadParams {
  HeadParams head;
  std::size_t embedding_dim = 0;
  std::size_t heuristic_dim = 0;
  std::string rule_pack_version;
  std::string provider_backend = "stub";
  std::size_t provider_dim = 0;

  bool operator==(const FusionHeadParams&) const = default;
};

inline constexpr int kModelFormatVersion = 1;

// Model file: UTF-8 JSON {format_version, d, n_heur, hidden, w1 (row-major),
// b1, w2, b2, rule_pack_version, provider: {backend, dim}}. Doubles are
// written in shortest round-trip form, so load(save(p)) == p exactly.
std::string serialize_params(const FusionHeadParams& params);
FusionHeadParams parse_params(std::string_view json_text);
void save_params(const FusionHeadParams& params, const std::filesystem::path& path);

// Fields left empty/zero are not checked.
struct ModelExpectations {
  std::size_t embedding_dim = 0;
  std::size_t heuristic_dim = 0;
  std::string rule_pack_version;
};

// Throws ParseError on malformed or truncated files, DimensionError or
// ConfigError when the file disagrees with `expect`.
FusionHeadParams load_params(const std::filesystem::path& path,
                             const ModelExpectations& expect = {});

// Short content hash of a serialized model, used as its version string.
std::string model_fingerprint(const FusionHeadParams& params);

}  // namespace sentinel::fusion
