#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace deepsets {

using Index = Eigen::Index;

/// Dense row-major 64-bit array. Scalars are 1x1, vectors are single rows.
using Tensor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using Vector = Eigen::VectorXd;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Tape;

/// Handle to a node recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  [[nodiscard]] std::size_t id() const { return id_; }
  [[nodiscard]] Tape* tape() const { return tape_; }
  [[nodiscard]] const Tensor& value() const;
  [[nodiscard]] Index rows() const { return value().rows(); }
  [[nodiscard]] Index cols() const { return value().cols(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

enum class PrimitiveKind {
  kLeaf,
  kMatMul,
  kAdd,  // broadcasts a 1xC right operand over rows
  kSub,  // same broadcasting as kAdd
  kScale,
  kRelu,
  kTanh,
  kSigmoid,
  kElu,
  kReduceSum,
  kReduceMax,
  kReduceMean,
  kSoftmax,
  kConcat,
  kSegmentSum,
  kSegmentMax,
  kSegmentMean,
  kSegmentBroadcast,
  kMseLoss,
  kHingeMarginLoss,
  kSetSoftmaxNll,
};

std::string_view primitive_name(PrimitiveKind kind);
/// Throws std::invalid_argument for names that are not primitives.
PrimitiveKind primitive_from_name(std::string_view name);

/// Per-kind attributes. Unused fields are ignored.
struct Attributes {
  int axis = 0;
  double scalar = 1.0;
  /// Set boundaries for segment reductions and the set softmax.
  std::vector<Index> offsets;
  /// Target member index per set for kSetSoftmaxNll.
  std::vector<Index> targets;
};

/// Append-only record of primitive applications. Inputs always precede the
/// node that consumes them, so a single reverse sweep is a valid backward pass.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = delete;
  Tape& operator=(Tape&&) = delete;

  Var parameter(Tensor value);
  Var constant(Tensor value);

  Var apply(PrimitiveKind kind, std::span<const Var> inputs, const Attributes& attrs = {});

  /// Reverse sweep from a 1x1 node. Replaces any earlier gradients.
  void backprop(Var loss);

  /// Gradient of the last backprop target with respect to `v`. Zero-filled
  /// when `v` does not influence the loss.
  [[nodiscard]] Tensor grad(Var v) const;

  [[nodiscard]] const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }
  [[nodiscard]] PrimitiveKind kind(std::size_t id) const { return nodes_.at(id).kind; }

 private:
  struct Node {
    PrimitiveKind kind = PrimitiveKind::kLeaf;
    std::vector<std::size_t> inputs;
    Tensor value;
    Attributes attrs;
    // argmax rows/cols for reductions, softmax output for the nll head.
    std::vector<Index> saved_index;
    Tensor saved;
    bool needs_grad = false;
  };

  Var push(Node node);
  void accumulate(std::size_t id, const Tensor& g);
  void backward_node(const Node& node, const Tensor& g);

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
};

/// Generic entry point: records `kind` applied to `inputs` on their tape.
Var apply_primitive(PrimitiveKind kind, std::span<const Var> inputs, const Attributes& attrs = {});

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double s);
Var relu(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var elu(Var a);
Var reduce_sum(Var a, int axis);
Var reduce_max(Var a, int axis);
Var reduce_mean(Var a, int axis);
Var softmax(Var a, int axis);
Var concat(Var a, Var b, int axis);
Var segment_sum(Var a, std::span<const Index> offsets);
Var segment_max(Var a, std::span<const Index> offsets);
Var segment_mean(Var a, std::span<const Index> offsets);
/// Repeats row s of `pooled` for every member of set s.
Var segment_broadcast(Var pooled, std::span<const Index> offsets);
/// Mean squared residual over all entries.
Var mse_loss(Var prediction, Var target);
/// Mean over entries of max(0, neg - pos + delta).
Var hinge_margin_loss(Var positive, Var negative, double delta);
/// Mean over sets of -log softmax(scores within the set)[target]. Scores are
/// read in flat row-major order, so an N x K matrix with offsets 0,K,2K,...
/// is treated as N sets of K members.
Var set_softmax_nll(Var scores, std::span<const Index> offsets, std::span<const Index> targets);

/// Max over sampled coordinates of |analytic - central difference| / max(1, |analytic|).
struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t coordinates_checked = 0;
};

using GraphBuilder = std::function<Var(Tape&, std::span<const Var>)>;

/// Samples up to `samples_per_tensor` coordinates of every parameter (all of
/// them for small tensors). Throws if `f` is not deterministic.
GradCheckResult grad_check(const GraphBuilder& f, std::span<const Tensor> params, double step = 1e-5,
                           std::size_t samples_per_tensor = 16, std::uint64_t seed = 0);

}  // namespace deepsets
