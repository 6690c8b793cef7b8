#include "deepsets/set_layers.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace deepsets {

namespace {

template <typename E>
struct NamedEnum {
  E value;
  std::string_view name;
};

constexpr std::array<NamedEnum<Activation>, 5> kActivations{{
    {Activation::kIdentity, "identity"},
    {Activation::kRelu, "relu"},
    {Activation::kTanh, "tanh"},
    {Activation::kSigmoid, "sigmoid"},
    {Activation::kElu, "elu"},
}};
constexpr std::array<NamedEnum<Pool>, 3> kPools{{{Pool::kSum, "sum"}, {Pool::kMax, "max"}, {Pool::kMean, "mean"}}};
constexpr std::array<NamedEnum<ConditionMode>, 2> kConditionModes{
    {{ConditionMode::kNone, "none"}, {ConditionMode::kConcatAfterPool, "concat-after-pool"}}};
constexpr std::array<NamedEnum<EquivariantVariant>, 4> kVariants{{
    {EquivariantVariant::kScalarLambdaGamma, "scalar-lambda-gamma"},
    {EquivariantVariant::kFullLambdaGamma, "full-lambda-gamma"},
    {EquivariantVariant::kMaxpoolNormalized, "maxpool-normalized"},
    {EquivariantVariant::kMaxpoolLambdaGamma, "maxpool-lambda-gamma"},
}};

template <typename E, std::size_t N>
std::string_view name_of(const std::array<NamedEnum<E>, N>& table, E value) {
  for (const auto& entry : table) {
    if (entry.value == value) return entry.name;
  }
  return "unknown";
}

template <typename E, std::size_t N>
E parse(const std::array<NamedEnum<E>, N>& table, std::string_view s, const char* what) {
  for (const auto& entry : table) {
    if (entry.name == s) return entry.value;
  }
  throw std::invalid_argument(std::string("unknown ") + what + ": " + std::string(s));
}

}  // namespace

std::string_view to_string(Activation a) { return name_of(kActivations, a); }
std::string_view to_string(Pool p) { return name_of(kPools, p); }
std::string_view to_string(ConditionMode m) { return name_of(kConditionModes, m); }
std::string_view to_string(EquivariantVariant v) { return name_of(kVariants, v); }
Activation activation_from_string(std::string_view s) { return parse(kActivations, s, "activation"); }
Pool pool_from_string(std::string_view s) { return parse(kPools, s, "pool"); }
ConditionMode condition_mode_from_string(std::string_view s) {
  return parse(kConditionModes, s, "condition mode");
}
EquivariantVariant equivariant_variant_from_string(std::string_view s) {
  return parse(kVariants, s, "equivariant variant");
}

Var activate(Var x, Activation a) {
  switch (a) {
    case Activation::kIdentity:
      return x;
    case Activation::kRelu:
      return relu(x);
    case Activation::kTanh:
      return tanh(x);
    case Activation::kSigmoid:
      return sigmoid(x);
    case Activation::kElu:
      return elu(x);
  }
  return x;
}

Var pool_segments(Var x, std::span<const Index> offsets, Pool p) {
  switch (p) {
    case Pool::kSum:
      return segment_sum(x, offsets);
    case Pool::kMax:
      return segment_max(x, offsets);
    case Pool::kMean:
      return segment_mean(x, offsets);
  }
  return segment_sum(x, offsets);
}

Tensor glorot_uniform(Index fan_in, Index fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor w(fan_in, fan_out);
  for (Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
  return w;
}

DenseLayer DenseLayer::random(Index in, Index out, Activation a, std::mt19937_64& rng) {
  return DenseLayer{glorot_uniform(in, out, rng), Tensor::Zero(1, out), a};
}

Var DenseLayer::forward(Var x, Var w, Var b) const { return activate(add(matmul(x, w), b), activation); }

// ---------------------------------------------------------------------------
// Invariant model

InvariantModel::InvariantModel(std::vector<DenseLayer> phi, Pool pool, std::vector<DenseLayer> rho,
                               ConditionMode condition_mode, Index condition_width)
    : phi_(std::move(phi)),
      pool_(pool),
      rho_(std::move(rho)),
      condition_mode_(condition_mode),
      condition_width_(condition_width) {
  for (std::size_t i = 1; i < phi_.size(); ++i) {
    if (phi_[i].in_width() != phi_[i - 1].out_width()) throw ShapeError("InvariantModel: phi widths do not chain");
  }
  for (std::size_t i = 1; i < rho_.size(); ++i) {
    if (rho_[i].in_width() != rho_[i - 1].out_width()) throw ShapeError("InvariantModel: rho widths do not chain");
  }
  for (const auto& l : phi_) {
    if (l.bias.rows() != 1 || l.bias.cols() != l.out_width()) throw ShapeError("InvariantModel: bad phi bias");
  }
  for (const auto& l : rho_) {
    if (l.bias.rows() != 1 || l.bias.cols() != l.out_width()) throw ShapeError("InvariantModel: bad rho bias");
  }
  if (condition_mode_ == ConditionMode::kNone && condition_width_ != 0) {
    throw ShapeError("InvariantModel: condition width given without conditioning");
  }
  if (condition_mode_ == ConditionMode::kConcatAfterPool && condition_width_ <= 0) {
    throw ShapeError("InvariantModel: conditioning requires a positive condition width");
  }
  if (!phi_.empty() && !rho_.empty() &&
      rho_.front().in_width() != phi_.back().out_width() + condition_width_) {
    throw ShapeError("InvariantModel: rho input width must equal phi output width plus condition width");
  }
}

InvariantModel InvariantModel::random(const Architecture& arch, std::mt19937_64& rng) {
  if (arch.input_width <= 0) throw ShapeError("InvariantModel: input width must be positive");
  std::vector<DenseLayer> phi;
  Index width = arch.input_width;
  for (Index w : arch.phi_widths) {
    phi.push_back(DenseLayer::random(width, w, arch.phi_activation, rng));
    width = w;
  }
  const Index cond = arch.condition_mode == ConditionMode::kConcatAfterPool ? arch.condition_width : 0;
  width += cond;
  std::vector<DenseLayer> rho;
  for (std::size_t i = 0; i < arch.rho_widths.size(); ++i) {
    const bool last = i + 1 == arch.rho_widths.size();
    const Activation a = last && arch.linear_output ? Activation::kIdentity : arch.rho_activation;
    rho.push_back(DenseLayer::random(width, arch.rho_widths[i], a, rng));
    width = arch.rho_widths[i];
  }
  return InvariantModel(std::move(phi), arch.pool, std::move(rho), arch.condition_mode, cond);
}

Index InvariantModel::input_width() const { return phi_.empty() ? 0 : phi_.front().in_width(); }

Index InvariantModel::output_width(Index element_width) const {
  if (!rho_.empty()) return rho_.back().out_width();
  return (phi_.empty() ? element_width : phi_.back().out_width()) + condition_width_;
}

std::vector<Tensor*> InvariantModel::parameters() {
  std::vector<Tensor*> out;
  for (auto& l : phi_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  for (auto& l : rho_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<const Tensor*> InvariantModel::parameters() const {
  std::vector<const Tensor*> out;
  for (const auto& l : phi_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  for (const auto& l : rho_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::size_t InvariantModel::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* p : parameters()) n += static_cast<std::size_t>(p->size());
  return n;
}

ModelGraph InvariantModel::forward(Tape& tape, const SetBatch& batch) const {
  if (!phi_.empty() && batch.width() != input_width()) {
    throw ShapeError("InvariantModel: element width " + std::to_string(batch.width()) + " but phi expects " +
                     std::to_string(input_width()));
  }
  const bool conditioned = condition_mode_ == ConditionMode::kConcatAfterPool;
  if (conditioned != batch.condition().has_value()) {
    throw ShapeError(conditioned ? "InvariantModel: condition required" : "InvariantModel: unexpected condition");
  }
  if (conditioned && batch.condition()->cols() != condition_width_) {
    throw ShapeError("InvariantModel: condition width mismatch");
  }

  ModelGraph graph;
  for (const Tensor* p : parameters()) graph.parameters.push_back(tape.parameter(*p));
  graph.output = forward(tape, batch, graph.parameters);
  return graph;
}

Var InvariantModel::forward(Tape& tape, const SetBatch& batch, std::span<const Var> params) const {
  if (params.size() != 2 * (phi_.size() + rho_.size())) throw ShapeError("InvariantModel: wrong parameter count");
  std::size_t k = 0;
  Var h = tape.constant(batch.elements());
  for (const auto& layer : phi_) {
    h = layer.forward(h, params[k], params[k + 1]);
    k += 2;
  }
  h = pool_segments(h, batch.offsets(), pool_);
  if (condition_mode_ == ConditionMode::kConcatAfterPool) {
    if (!batch.condition()) throw ShapeError("InvariantModel: condition required");
    h = concat(h, tape.constant(*batch.condition()), 1);
  }
  if (!rho_.empty() && h.cols() != rho_.front().in_width()) {
    throw ShapeError("InvariantModel: pooled width does not match rho input");
  }
  for (const auto& layer : rho_) {
    h = layer.forward(h, params[k], params[k + 1]);
    k += 2;
  }
  return h;
}

Tensor InvariantModel::predict(const SetBatch& batch) const {
  Tape tape;
  return forward(tape, batch).output.value();
}

Tensor invariant_forward(const InvariantModel& model, const SetBatch& batch) { return model.predict(batch); }

// ---------------------------------------------------------------------------
// Equivariant layers

EquivariantLayer EquivariantLayer::random(EquivariantVariant variant, Index in, Index out, Activation a,
                                          std::mt19937_64& rng) {
  if (variant == EquivariantVariant::kScalarLambdaGamma && (in != 1 || out != 1)) {
    throw ShapeError("scalar-lambda-gamma layers are single-channel");
  }
  EquivariantLayer layer;
  layer.variant = variant;
  layer.activation = a;
  if (variant != EquivariantVariant::kMaxpoolNormalized) layer.lambda = glorot_uniform(in, out, rng);
  layer.gamma = glorot_uniform(in, out, rng);
  layer.beta = Tensor::Zero(1, out);
  return layer;
}

EquivariantLayer EquivariantLayer::scalar(double lambda, double gamma, Activation a) {
  EquivariantLayer layer;
  layer.variant = EquivariantVariant::kScalarLambdaGamma;
  layer.lambda = Tensor::Constant(1, 1, lambda);
  layer.gamma = Tensor::Constant(1, 1, gamma);
  layer.beta = Tensor::Zero(1, 1);
  layer.activation = a;
  return layer;
}

Tensor EquivariantLayer::theta(Index m) const {
  if (variant != EquivariantVariant::kScalarLambdaGamma) {
    throw std::logic_error("theta is defined for the scalar variant only");
  }
  return build_theta(lambda(0, 0), gamma(0, 0), m);
}

std::vector<Tensor*> EquivariantLayer::parameters() {
  std::vector<Tensor*> out;
  if (variant != EquivariantVariant::kMaxpoolNormalized) out.push_back(&lambda);
  out.push_back(&gamma);
  out.push_back(&beta);
  return out;
}

std::vector<const Tensor*> EquivariantLayer::parameters() const {
  std::vector<const Tensor*> out;
  if (variant != EquivariantVariant::kMaxpoolNormalized) out.push_back(&lambda);
  out.push_back(&gamma);
  out.push_back(&beta);
  return out;
}

Var EquivariantLayer::forward(Var x, std::span<const Index> offsets, std::span<const Var> params) const {
  if (x.cols() != in_width()) {
    throw ShapeError("EquivariantLayer: input width " + std::to_string(x.cols()) + " but layer expects " +
                     std::to_string(in_width()));
  }
  if (beta.rows() != 1 || beta.cols() != out_width()) throw ShapeError("EquivariantLayer: bad beta shape");
  if (variant != EquivariantVariant::kMaxpoolNormalized &&
      (lambda.rows() != gamma.rows() || lambda.cols() != gamma.cols())) {
    throw ShapeError("EquivariantLayer: Lambda and Gamma shapes differ");
  }
  if (variant == EquivariantVariant::kScalarLambdaGamma && (in_width() != 1 || out_width() != 1)) {
    throw ShapeError("scalar-lambda-gamma layers are single-channel");
  }

  Var pre;
  switch (variant) {
    case EquivariantVariant::kScalarLambdaGamma: {
      const Var pooled = segment_broadcast(segment_sum(x, offsets), offsets);
      pre = add(matmul(x, params[0]), matmul(pooled, params[1]));
      pre = add(pre, params[2]);
      break;
    }
    case EquivariantVariant::kFullLambdaGamma: {
      const Var pooled = segment_broadcast(segment_sum(x, offsets), offsets);
      pre = sub(matmul(x, params[0]), matmul(pooled, params[1]));
      pre = add(pre, params[2]);
      break;
    }
    case EquivariantVariant::kMaxpoolNormalized: {
      const Var pooled = segment_broadcast(segment_max(x, offsets), offsets);
      pre = add(matmul(sub(x, pooled), params[0]), params[1]);
      break;
    }
    case EquivariantVariant::kMaxpoolLambdaGamma: {
      const Var pooled = segment_broadcast(segment_max(x, offsets), offsets);
      pre = add(matmul(x, params[0]), matmul(pooled, params[1]));
      pre = add(pre, params[2]);
      break;
    }
  }
  return activate(pre, activation);
}

Tensor equivariant_forward(const EquivariantLayer& layer, const Tensor& set) {
  if (set.rows() < 1) throw ShapeError("equivariant_forward: empty set");
  Tape tape;
  std::vector<Var> params;
  for (const Tensor* p : layer.parameters()) params.push_back(tape.parameter(*p));
  const std::array<Index, 2> offsets{0, set.rows()};
  return layer.forward(tape.constant(set), offsets, params).value();
}

EquivariantStack::EquivariantStack(std::vector<EquivariantLayer> layers) : layers_(std::move(layers)) {
  for (std::size_t i = 1; i < layers_.size(); ++i) {
    if (layers_[i].in_width() != layers_[i - 1].out_width()) {
      throw ShapeError("EquivariantStack: layer widths do not chain");
    }
  }
}

EquivariantStack EquivariantStack::random(EquivariantVariant variant, Index input_width,
                                          std::span<const Index> widths, Activation activation,
                                          std::mt19937_64& rng, bool linear_output) {
  std::vector<EquivariantLayer> layers;
  Index in = input_width;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const bool last = i + 1 == widths.size();
    const Activation a = last && linear_output ? Activation::kIdentity : activation;
    layers.push_back(EquivariantLayer::random(variant, in, widths[i], a, rng));
    in = widths[i];
  }
  return EquivariantStack(std::move(layers));
}

std::vector<Tensor*> EquivariantStack::parameters() {
  std::vector<Tensor*> out;
  for (auto& l : layers_) {
    for (Tensor* p : l.parameters()) out.push_back(p);
  }
  return out;
}

std::vector<const Tensor*> EquivariantStack::parameters() const {
  std::vector<const Tensor*> out;
  for (const auto& l : layers_) {
    for (const Tensor* p : l.parameters()) out.push_back(p);
  }
  return out;
}

std::size_t EquivariantStack::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* p : parameters()) n += static_cast<std::size_t>(p->size());
  return n;
}

ModelGraph EquivariantStack::forward(Tape& tape, const SetBatch& batch) const {
  if (layers_.empty()) throw ShapeError("EquivariantStack: no layers");
  ModelGraph graph;
  for (const Tensor* p : parameters()) graph.parameters.push_back(tape.parameter(*p));
  graph.output = forward(tape, batch, graph.parameters);
  return graph;
}

Var EquivariantStack::forward(Tape& tape, const SetBatch& batch, std::span<const Var> params) const {
  if (layers_.empty()) throw ShapeError("EquivariantStack: no layers");
  Var h = tape.constant(batch.elements());
  std::size_t k = 0;
  for (const auto& layer : layers_) {
    const std::size_t n = layer.parameters().size();
    if (k + n > params.size()) throw ShapeError("EquivariantStack: wrong parameter count");
    h = layer.forward(h, batch.offsets(), params.subspan(k, n));
    k += n;
  }
  if (k != params.size()) throw ShapeError("EquivariantStack: wrong parameter count");
  return h;
}

Tensor EquivariantStack::predict(const SetBatch& batch) const {
  Tape tape;
  return forward(tape, batch).output.value();
}

// ---------------------------------------------------------------------------
// Permutation structure

Tensor build_theta(double lambda, double gamma, Index m) {
  if (m < 1) throw std::invalid_argument("build_theta: M must be positive");
  Tensor theta = Tensor::Constant(m, m, gamma);
  theta.diagonal().array() += lambda;
  return theta;
}

bool commutes_with_all_permutations(const Tensor& theta, double tolerance) {
  const Index m = theta.rows();
  if (theta.cols() != m) throw ShapeError("commutes_with_all_permutations: square matrix required");
  if (m > 8) throw std::invalid_argument("commutes_with_all_permutations: M must be at most 8");
  std::vector<Index> perm(static_cast<std::size_t>(m));
  std::iota(perm.begin(), perm.end(), Index{0});
  Tensor p = Tensor::Zero(m, m);
  do {
    p.setZero();
    for (Index i = 0; i < m; ++i) p(i, perm[static_cast<std::size_t>(i)]) = 1.0;
    if (((theta * p) - (p * theta)).cwiseAbs().maxCoeff() > tolerance) return false;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return true;
}

Index commutant_dimension(Index m) {
  if (m < 2 || m > 6) throw std::invalid_argument("commutant_dimension: M must lie in [2, 6]");
  const Index unknowns = m * m;
  const Index transpositions = m * (m - 1) / 2;
  Eigen::MatrixXd constraints = Eigen::MatrixXd::Zero(transpositions * unknowns, unknowns);

  Index block = 0;
  for (Index k = 0; k < m; ++k) {
    for (Index l = k + 1; l < m; ++l, ++block) {
      Eigen::MatrixXd p = Eigen::MatrixXd::Identity(m, m);
      p.row(k).swap(p.row(l));
      for (Index u = 0; u < unknowns; ++u) {
        Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(m, m);
        basis(u / m, u % m) = 1.0;
        const Eigen::MatrixXd residual = p * basis - basis * p;
        constraints.block(block * unknowns, u, unknowns, 1) =
            Eigen::Map<const Eigen::VectorXd>(residual.data(), unknowns);
      }
    }
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(constraints);
  lu.setThreshold(1e-10);
  return unknowns - lu.rank();
}

}  // namespace deepsets
