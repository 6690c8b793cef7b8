#pragma once

#include "deepsets/model.hpp"
#include "deepsets/tasks.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace deepsets {

enum class LossKind { kMse, kSetSoftmaxNll, kMargin };

std::string_view to_string(LossKind l);
LossKind loss_from_string(std::string_view s);

struct AdamConfig {
  double step_size = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct ArchitectureSpec {
  enum class Kind { kInvariant, kEquivariant };
  Kind kind = Kind::kInvariant;

  std::vector<Index> phi_widths{64, 64, 64};
  Activation phi_activation = Activation::kRelu;
  Pool pool = Pool::kSum;
  std::vector<Index> rho_widths{64, 32, 1};
  Activation rho_activation = Activation::kRelu;

  EquivariantVariant variant = EquivariantVariant::kMaxpoolNormalized;
  std::vector<Index> equivariant_widths{64, 64, 1};
  Activation equivariant_activation = Activation::kTanh;
};

struct TrainConfig {
  TaskKind task = TaskKind::kDigitSum;
  ArchitectureSpec architecture;
  AdamConfig optimizer;
  std::size_t batch_size = 32;
  int epochs = 10;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::kMse;
  /// Delta of the margin loss.
  double margin = 1.0;
  /// Multiplies the step size after every epoch.
  double step_decay = 1.0;
  /// Writes measured wall time into metrics; off keeps metrics reproducible.
  bool record_timing = false;

  static TrainConfig defaults(TaskKind task);
  /// Fields absent from `j` keep the defaults of the task named in `j`.
  static TrainConfig from_json(const nlohmann::json& j);
  [[nodiscard]] nlohmann::json to_json() const;
  /// Throws std::invalid_argument when the loss does not fit the task or a
  /// hyperparameter is out of range.
  void validate() const;
};

struct MetricsRecord {
  int epoch = 0;
  double train_loss = 0.0;
  /// MSE (population), rounded-exact accuracy (digit-sum) or selection
  /// accuracy (outlier).
  double eval_metric = 0.0;
  double wall_seconds = 0.0;
};

std::string metrics_csv(const std::vector<MetricsRecord>& records);

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}
  /// One update of every parameter from its gradient (same order and shapes).
  void step(std::span<Tensor* const> params, std::span<const Tensor> grads);
  void set_step_size(double s) { config_.step_size = s; }
  [[nodiscard]] double step_size() const { return config_.step_size; }

 private:
  AdamConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  long long t_ = 0;
};

/// Fresh model for `config`. `set_size` fixes the output width of an
/// invariant model on the outlier task (one score per position).
SetModel build_model(const TrainConfig& config, Index input_width, Index set_size = 0);

/// Model output for a batch: N x 1 predictions for regression tasks, a flat
/// per-member score vector with per-set offsets for the outlier task.
struct BatchScores {
  Tensor values;
  std::vector<Index> offsets;
};
BatchScores predict(const SetModel& model, TaskKind task, const SetBatch& batch);

/// Loss of a forward graph, recorded on `tape`.
Var task_loss(const TrainConfig& config, Var output, const SetBatch& batch, std::span<const double> targets);

struct TrainResult {
  SetModel model;
  std::vector<MetricsRecord> metrics;
};

/// Adam over shuffled mini-batches of whole sets. Metrics are computed on
/// `eval` when given, else on the training data. Deterministic in the seed.
TrainResult train(const TrainConfig& config, const LabeledSetDataset& data, const LabeledSetDataset* eval = nullptr);

MetricsRecord evaluate(const SetModel& model, const LabeledSetDataset& data, TaskKind task);

/// Argmax with ties broken toward the lowest index.
Index first_argmax(std::span<const double> scores);

}  // namespace deepsets
