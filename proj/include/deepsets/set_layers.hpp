#pragma once

#include "deepsets/set_batch.hpp"
#include "deepsets/tensor.hpp"

#include <random>
#include <string_view>
#include <vector>

namespace deepsets {

enum class Activation { kIdentity, kRelu, kTanh, kSigmoid, kElu };
enum class Pool { kSum, kMax, kMean };
enum class ConditionMode { kNone, kConcatAfterPool };

std::string_view to_string(Activation a);
std::string_view to_string(Pool p);
std::string_view to_string(ConditionMode m);
Activation activation_from_string(std::string_view s);
Pool pool_from_string(std::string_view s);
ConditionMode condition_mode_from_string(std::string_view s);

Var activate(Var x, Activation a);
Var pool_segments(Var x, std::span<const Index> offsets, Pool p);

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(Index fan_in, Index fan_out, std::mt19937_64& rng);

/// Output of a model recorded on a tape, together with the leaf nodes its
/// parameters were bound to (same order as the model's parameters()).
struct ModelGraph {
  Var output;
  std::vector<Var> parameters;
};

struct DenseLayer {
  Tensor weight;  // in x out
  Tensor bias;    // 1 x out
  Activation activation = Activation::kRelu;

  static DenseLayer random(Index in, Index out, Activation a, std::mt19937_64& rng);
  [[nodiscard]] Index in_width() const { return weight.rows(); }
  [[nodiscard]] Index out_width() const { return weight.cols(); }
  Var forward(Var x, Var w, Var b) const;
};

/// rho(pool_{x in X} phi(x)), optionally with a per-set condition z
/// concatenated to the pooled representation before rho.
class InvariantModel {
 public:
  struct Architecture {
    Index input_width = 1;
    std::vector<Index> phi_widths;
    Activation phi_activation = Activation::kRelu;
    Pool pool = Pool::kSum;
    std::vector<Index> rho_widths;
    Activation rho_activation = Activation::kRelu;
    /// Leaves the last rho layer without a nonlinearity.
    bool linear_output = true;
    ConditionMode condition_mode = ConditionMode::kNone;
    Index condition_width = 0;
  };

  InvariantModel() = default;
  InvariantModel(std::vector<DenseLayer> phi, Pool pool, std::vector<DenseLayer> rho,
                 ConditionMode condition_mode = ConditionMode::kNone, Index condition_width = 0);

  static InvariantModel random(const Architecture& arch, std::mt19937_64& rng);

  [[nodiscard]] const std::vector<DenseLayer>& phi() const { return phi_; }
  [[nodiscard]] const std::vector<DenseLayer>& rho() const { return rho_; }
  [[nodiscard]] Pool pool() const { return pool_; }
  [[nodiscard]] ConditionMode condition_mode() const { return condition_mode_; }
  [[nodiscard]] Index condition_width() const { return condition_width_; }
  /// 0 when phi is empty (identity): any width is accepted then.
  [[nodiscard]] Index input_width() const;
  /// Output width given the element width (relevant when phi and rho are identities).
  [[nodiscard]] Index output_width(Index element_width) const;

  [[nodiscard]] std::vector<Tensor*> parameters();
  [[nodiscard]] std::vector<const Tensor*> parameters() const;
  [[nodiscard]] std::size_t parameter_count() const;

  ModelGraph forward(Tape& tape, const SetBatch& batch) const;
  /// Same graph on caller-owned parameter leaves (parameters() order).
  Var forward(Tape& tape, const SetBatch& batch, std::span<const Var> params) const;
  /// num_sets x output_width.
  [[nodiscard]] Tensor predict(const SetBatch& batch) const;

 private:
  std::vector<DenseLayer> phi_;
  Pool pool_ = Pool::kSum;
  std::vector<DenseLayer> rho_;
  ConditionMode condition_mode_ = ConditionMode::kNone;
  Index condition_width_ = 0;
};

Tensor invariant_forward(const InvariantModel& model, const SetBatch& batch);

enum class EquivariantVariant {
  /// sigma(lambda x + gamma 1 1^T x + beta), single channel.
  kScalarLambdaGamma,
  /// sigma(beta + x Lambda - 1 1^T x Gamma).
  kFullLambdaGamma,
  /// sigma(beta + (x - 1 maxpool(x)) Gamma); Lambda is not used.
  kMaxpoolNormalized,
  /// sigma(beta + x Lambda + 1 maxpool(x) Gamma).
  kMaxpoolLambdaGamma,
};

std::string_view to_string(EquivariantVariant v);
EquivariantVariant equivariant_variant_from_string(std::string_view s);

struct EquivariantLayer {
  EquivariantVariant variant = EquivariantVariant::kMaxpoolNormalized;
  Tensor lambda;  // D x D' (empty for kMaxpoolNormalized)
  Tensor gamma;   // D x D'
  Tensor beta;    // 1 x D'
  Activation activation = Activation::kTanh;

  static EquivariantLayer random(EquivariantVariant variant, Index in, Index out, Activation a,
                                 std::mt19937_64& rng);
  static EquivariantLayer scalar(double lambda, double gamma, Activation a = Activation::kIdentity);

  [[nodiscard]] Index in_width() const { return gamma.rows(); }
  [[nodiscard]] Index out_width() const { return gamma.cols(); }
  /// lambda I + gamma 1 1^T for sets of size m (scalar variant only).
  [[nodiscard]] Tensor theta(Index m) const;

  [[nodiscard]] std::vector<Tensor*> parameters();
  [[nodiscard]] std::vector<const Tensor*> parameters() const;

  /// Applies the layer to every set of a ragged batch at once.
  Var forward(Var x, std::span<const Index> offsets, std::span<const Var> params) const;
};

/// M x D -> M x D'.
Tensor equivariant_forward(const EquivariantLayer& layer, const Tensor& set);

class EquivariantStack {
 public:
  EquivariantStack() = default;
  explicit EquivariantStack(std::vector<EquivariantLayer> layers);

  static EquivariantStack random(EquivariantVariant variant, Index input_width, std::span<const Index> widths,
                                 Activation activation, std::mt19937_64& rng, bool linear_output = true);

  [[nodiscard]] const std::vector<EquivariantLayer>& layers() const { return layers_; }
  [[nodiscard]] Index input_width() const { return layers_.empty() ? 0 : layers_.front().in_width(); }
  [[nodiscard]] Index output_width() const { return layers_.empty() ? 0 : layers_.back().out_width(); }

  [[nodiscard]] std::vector<Tensor*> parameters();
  [[nodiscard]] std::vector<const Tensor*> parameters() const;
  [[nodiscard]] std::size_t parameter_count() const;

  /// total_elements x output_width.
  ModelGraph forward(Tape& tape, const SetBatch& batch) const;
  Var forward(Tape& tape, const SetBatch& batch, std::span<const Var> params) const;
  [[nodiscard]] Tensor predict(const SetBatch& batch) const;

 private:
  std::vector<EquivariantLayer> layers_;
};

// Parameter-sharing structure of a single-channel dense layer on sets of size M.

/// lambda I + gamma 1 1^T.
Tensor build_theta(double lambda, double gamma, Index m);

/// Enumerates all M! permutation matrices (M <= 8). Entrywise tolerance 1e-12.
bool commutes_with_all_permutations(const Tensor& theta, double tolerance = 1e-12);

/// Dimension of {Theta in R^{MxM} : Theta P = P Theta for every permutation P},
/// from the nullspace of the commutation constraints of all transpositions.
Index commutant_dimension(Index m);

}  // namespace deepsets
