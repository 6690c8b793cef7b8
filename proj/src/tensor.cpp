#include "deepsets/tensor.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <utility>

namespace deepsets {

namespace {

constexpr std::array<std::pair<PrimitiveKind, std::string_view>, 21> kNames{{
    {PrimitiveKind::kLeaf, "leaf"},
    {PrimitiveKind::kMatMul, "matmul"},
    {PrimitiveKind::kAdd, "add"},
    {PrimitiveKind::kSub, "sub"},
    {PrimitiveKind::kScale, "scale"},
    {PrimitiveKind::kRelu, "relu"},
    {PrimitiveKind::kTanh, "tanh"},
    {PrimitiveKind::kSigmoid, "sigmoid"},
    {PrimitiveKind::kElu, "elu"},
    {PrimitiveKind::kReduceSum, "reduce_sum"},
    {PrimitiveKind::kReduceMax, "reduce_max"},
    {PrimitiveKind::kReduceMean, "reduce_mean"},
    {PrimitiveKind::kSoftmax, "softmax"},
    {PrimitiveKind::kConcat, "concat"},
    {PrimitiveKind::kSegmentSum, "segment_sum"},
    {PrimitiveKind::kSegmentMax, "segment_max"},
    {PrimitiveKind::kSegmentMean, "segment_mean"},
    {PrimitiveKind::kSegmentBroadcast, "segment_broadcast"},
    {PrimitiveKind::kMseLoss, "mse_loss"},
    {PrimitiveKind::kHingeMarginLoss, "hinge_margin_loss"},
    {PrimitiveKind::kSetSoftmaxNll, "set_softmax_nll"},
}};

std::string shape_str(const Tensor& t) {
  std::ostringstream os;
  os << "[" << t.rows() << "x" << t.cols() << "]";
  return os.str();
}

[[noreturn]] void shape_fail(PrimitiveKind kind, const std::string& what) {
  throw ShapeError(std::string(primitive_name(kind)) + ": " + what);
}

void require_arity(PrimitiveKind kind, std::span<const Var> inputs, std::size_t n) {
  if (inputs.size() != n) {
    shape_fail(kind, "expected " + std::to_string(n) + " inputs, got " + std::to_string(inputs.size()));
  }
}

void require_axis(PrimitiveKind kind, int axis) {
  if (axis != 0 && axis != 1) shape_fail(kind, "axis must be 0 or 1");
}

void validate_offsets(PrimitiveKind kind, std::span<const Index> offsets, Index rows) {
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != rows) {
    shape_fail(kind, "offsets must start at 0 and end at " + std::to_string(rows));
  }
  for (std::size_t i = 1; i < offsets.size(); ++i) {
    if (offsets[i] <= offsets[i - 1]) shape_fail(kind, "offsets must be strictly increasing");
  }
}

bool broadcast_rhs(PrimitiveKind kind, const Tensor& a, const Tensor& b) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return false;
  if (b.rows() == 1 && b.cols() == a.cols()) return true;
  shape_fail(kind, "cannot combine " + shape_str(a) + " with " + shape_str(b));
}

// Sum of rows [begin, end) accumulated left to right.
RowVector row_sum(const Tensor& x, Index begin, Index end) {
  RowVector acc = RowVector::Zero(x.cols());
  for (Index r = begin; r < end; ++r) acc += x.row(r);
  return acc;
}

}  // namespace

std::string_view primitive_name(PrimitiveKind kind) {
  for (const auto& [k, name] : kNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

PrimitiveKind primitive_from_name(std::string_view name) {
  for (const auto& [k, n] : kNames) {
    if (n == name) return k;
  }
  throw std::invalid_argument("unknown primitive kind: " + std::string(name));
}

const Tensor& Var::value() const {
  if (tape_ == nullptr) throw std::logic_error("Var is not bound to a tape");
  return tape_->value(id_);
}

Var Tape::parameter(Tensor value) {
  Node node;
  node.value = std::move(value);
  node.needs_grad = true;
  return push(std::move(node));
}

Var Tape::constant(Tensor value) {
  Node node;
  node.value = std::move(value);
  return push(std::move(node));
}

Var Tape::push(Node node) {
  if (!node.value.allFinite()) {
    throw NonFiniteError(std::string(primitive_name(node.kind)) + " produced a non-finite value");
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::apply(PrimitiveKind kind, std::span<const Var> inputs, const Attributes& attrs) {
  for (const Var& v : inputs) {
    if (v.tape() != this) throw std::invalid_argument("input recorded on a different tape");
    if (v.id() >= nodes_.size()) throw std::logic_error("input node does not precede its consumer");
  }

  Node node;
  node.kind = kind;
  node.attrs = attrs;
  for (const Var& v : inputs) {
    node.inputs.push_back(v.id());
    node.needs_grad = node.needs_grad || nodes_[v.id()].needs_grad;
  }
  auto in = [&](std::size_t i) -> const Tensor& { return nodes_[inputs[i].id()].value; };

  switch (kind) {
    case PrimitiveKind::kLeaf:
      shape_fail(kind, "leaves are created with parameter() or constant()");
    case PrimitiveKind::kMatMul: {
      require_arity(kind, inputs, 2);
      if (in(0).cols() != in(1).rows()) {
        shape_fail(kind, "inner extents differ: " + shape_str(in(0)) + " * " + shape_str(in(1)));
      }
      node.value = in(0) * in(1);
      break;
    }
    case PrimitiveKind::kAdd:
    case PrimitiveKind::kSub: {
      require_arity(kind, inputs, 2);
      const double sign = kind == PrimitiveKind::kAdd ? 1.0 : -1.0;
      if (broadcast_rhs(kind, in(0), in(1))) {
        node.value = in(0);
        node.value.rowwise() += sign * in(1).row(0);
      } else {
        node.value = in(0) + sign * in(1);
      }
      break;
    }
    case PrimitiveKind::kScale:
      require_arity(kind, inputs, 1);
      node.value = attrs.scalar * in(0);
      break;
    case PrimitiveKind::kRelu:
      require_arity(kind, inputs, 1);
      node.value = in(0).cwiseMax(0.0);
      break;
    case PrimitiveKind::kTanh:
      require_arity(kind, inputs, 1);
      node.value = in(0).array().tanh().matrix();
      break;
    case PrimitiveKind::kSigmoid:
      require_arity(kind, inputs, 1);
      node.value = (1.0 / (1.0 + (-in(0).array()).exp())).matrix();
      break;
    case PrimitiveKind::kElu:
      require_arity(kind, inputs, 1);
      node.value = in(0).unaryExpr([](double x) { return x > 0.0 ? x : std::expm1(x); });
      break;
    case PrimitiveKind::kReduceSum:
    case PrimitiveKind::kReduceMean: {
      require_arity(kind, inputs, 1);
      require_axis(kind, attrs.axis);
      const Tensor& x = in(0);
      if (attrs.axis == 0) {
        node.value = row_sum(x, 0, x.rows());
        if (kind == PrimitiveKind::kReduceMean) node.value /= static_cast<double>(x.rows());
      } else {
        node.value.resize(x.rows(), 1);
        for (Index r = 0; r < x.rows(); ++r) {
          double acc = 0.0;
          for (Index c = 0; c < x.cols(); ++c) acc += x(r, c);
          node.value(r, 0) = kind == PrimitiveKind::kReduceMean ? acc / static_cast<double>(x.cols()) : acc;
        }
      }
      break;
    }
    case PrimitiveKind::kReduceMax: {
      require_arity(kind, inputs, 1);
      require_axis(kind, attrs.axis);
      const Tensor& x = in(0);
      if (attrs.axis == 0) {
        node.value.resize(1, x.cols());
        node.saved_index.resize(static_cast<std::size_t>(x.cols()));
        for (Index c = 0; c < x.cols(); ++c) {
          Index best = 0;
          for (Index r = 1; r < x.rows(); ++r) {
            if (x(r, c) > x(best, c)) best = r;
          }
          node.value(0, c) = x(best, c);
          node.saved_index[static_cast<std::size_t>(c)] = best;
        }
      } else {
        node.value.resize(x.rows(), 1);
        node.saved_index.resize(static_cast<std::size_t>(x.rows()));
        for (Index r = 0; r < x.rows(); ++r) {
          Index best = 0;
          for (Index c = 1; c < x.cols(); ++c) {
            if (x(r, c) > x(r, best)) best = c;
          }
          node.value(r, 0) = x(r, best);
          node.saved_index[static_cast<std::size_t>(r)] = best;
        }
      }
      break;
    }
    case PrimitiveKind::kSoftmax: {
      require_arity(kind, inputs, 1);
      require_axis(kind, attrs.axis);
      const Tensor& x = in(0);
      node.value.resizeLike(x);
      if (attrs.axis == 1) {
        for (Index r = 0; r < x.rows(); ++r) {
          const double m = x.row(r).maxCoeff();
          node.value.row(r) = (x.row(r).array() - m).exp().matrix();
          node.value.row(r) /= node.value.row(r).sum();
        }
      } else {
        for (Index c = 0; c < x.cols(); ++c) {
          const double m = x.col(c).maxCoeff();
          node.value.col(c) = (x.col(c).array() - m).exp().matrix();
          node.value.col(c) /= node.value.col(c).sum();
        }
      }
      break;
    }
    case PrimitiveKind::kConcat: {
      require_arity(kind, inputs, 2);
      require_axis(kind, attrs.axis);
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (attrs.axis == 0) {
        if (a.cols() != b.cols()) shape_fail(kind, "column counts differ");
        node.value.resize(a.rows() + b.rows(), a.cols());
        node.value << a, b;
      } else {
        if (a.rows() != b.rows()) shape_fail(kind, "row counts differ");
        node.value.resize(a.rows(), a.cols() + b.cols());
        node.value << a, b;
      }
      break;
    }
    case PrimitiveKind::kSegmentSum:
    case PrimitiveKind::kSegmentMean: {
      require_arity(kind, inputs, 1);
      const Tensor& x = in(0);
      validate_offsets(kind, attrs.offsets, x.rows());
      const auto sets = static_cast<Index>(attrs.offsets.size() - 1);
      node.value.resize(sets, x.cols());
      for (Index s = 0; s < sets; ++s) {
        const Index b = attrs.offsets[static_cast<std::size_t>(s)];
        const Index e = attrs.offsets[static_cast<std::size_t>(s) + 1];
        node.value.row(s) = row_sum(x, b, e);
        if (kind == PrimitiveKind::kSegmentMean) node.value.row(s) /= static_cast<double>(e - b);
      }
      break;
    }
    case PrimitiveKind::kSegmentMax: {
      require_arity(kind, inputs, 1);
      const Tensor& x = in(0);
      validate_offsets(kind, attrs.offsets, x.rows());
      const auto sets = static_cast<Index>(attrs.offsets.size() - 1);
      node.value.resize(sets, x.cols());
      node.saved_index.resize(static_cast<std::size_t>(sets * x.cols()));
      for (Index s = 0; s < sets; ++s) {
        const Index b = attrs.offsets[static_cast<std::size_t>(s)];
        const Index e = attrs.offsets[static_cast<std::size_t>(s) + 1];
        for (Index c = 0; c < x.cols(); ++c) {
          Index best = b;
          for (Index r = b + 1; r < e; ++r) {
            if (x(r, c) > x(best, c)) best = r;
          }
          node.value(s, c) = x(best, c);
          node.saved_index[static_cast<std::size_t>(s * x.cols() + c)] = best;
        }
      }
      break;
    }
    case PrimitiveKind::kSegmentBroadcast: {
      require_arity(kind, inputs, 1);
      const Tensor& pooled = in(0);
      if (attrs.offsets.empty()) shape_fail(kind, "offsets required");
      validate_offsets(kind, attrs.offsets, attrs.offsets.back());
      if (static_cast<Index>(attrs.offsets.size() - 1) != pooled.rows()) {
        shape_fail(kind, "one pooled row per set required");
      }
      node.value.resize(attrs.offsets.back(), pooled.cols());
      for (Index s = 0; s < pooled.rows(); ++s) {
        const Index b = attrs.offsets[static_cast<std::size_t>(s)];
        const Index e = attrs.offsets[static_cast<std::size_t>(s) + 1];
        node.value.middleRows(b, e - b).rowwise() = pooled.row(s);
      }
      break;
    }
    case PrimitiveKind::kMseLoss: {
      require_arity(kind, inputs, 2);
      if (in(0).rows() != in(1).rows() || in(0).cols() != in(1).cols()) {
        shape_fail(kind, "prediction " + shape_str(in(0)) + " vs target " + shape_str(in(1)));
      }
      if (in(0).size() == 0) shape_fail(kind, "empty prediction");
      node.value.resize(1, 1);
      node.value(0, 0) = (in(0) - in(1)).squaredNorm() / static_cast<double>(in(0).size());
      break;
    }
    case PrimitiveKind::kHingeMarginLoss: {
      require_arity(kind, inputs, 2);
      if (in(0).rows() != in(1).rows() || in(0).cols() != in(1).cols()) {
        shape_fail(kind, "positive and negative scores differ in shape");
      }
      if (in(0).size() == 0) shape_fail(kind, "empty scores");
      node.value.resize(1, 1);
      node.value(0, 0) = ((in(1) - in(0)).array() + attrs.scalar).cwiseMax(0.0).sum() /
                         static_cast<double>(in(0).size());
      break;
    }
    case PrimitiveKind::kSetSoftmaxNll: {
      require_arity(kind, inputs, 1);
      const Tensor& x = in(0);
      validate_offsets(kind, attrs.offsets, x.size());
      const std::size_t sets = attrs.offsets.size() - 1;
      if (attrs.targets.size() != sets) shape_fail(kind, "one target per set required");
      const double* flat = x.data();
      node.saved.resize(1, x.size());
      double total = 0.0;
      for (std::size_t s = 0; s < sets; ++s) {
        const Index b = attrs.offsets[s];
        const Index e = attrs.offsets[s + 1];
        const Index t = attrs.targets[s];
        if (t < 0 || t >= e - b) shape_fail(kind, "target index outside its set");
        double m = flat[b];
        for (Index i = b + 1; i < e; ++i) m = std::max(m, flat[i]);
        double z = 0.0;
        for (Index i = b; i < e; ++i) {
          node.saved(0, i) = std::exp(flat[i] - m);
          z += node.saved(0, i);
        }
        for (Index i = b; i < e; ++i) node.saved(0, i) /= z;
        total += m + std::log(z) - flat[b + t];
      }
      node.value.resize(1, 1);
      node.value(0, 0) = total / static_cast<double>(sets);
      break;
    }
  }
  return push(std::move(node));
}

void Tape::accumulate(std::size_t id, const Tensor& g) {
  if (!nodes_[id].needs_grad) return;
  Tensor& slot = grads_[id];
  if (slot.size() == 0) {
    slot = g;
  } else {
    slot += g;
  }
}

void Tape::backprop(Var loss) {
  if (loss.tape() != this) throw std::invalid_argument("loss recorded on a different tape");
  const Tensor& lv = nodes_.at(loss.id()).value;
  if (lv.rows() != 1 || lv.cols() != 1) throw ShapeError("backprop: loss must be 1x1, got " + shape_str(lv));

  grads_.assign(nodes_.size(), Tensor());
  grads_[loss.id()] = Tensor::Ones(1, 1);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    const Node& node = nodes_[i];
    if (!node.needs_grad || grads_[i].size() == 0 || node.kind == PrimitiveKind::kLeaf) continue;
    for (std::size_t input : node.inputs) {
      if (input >= i) throw std::logic_error("backprop: node visited before its inputs");
    }
    backward_node(node, grads_[i]);
  }
}

void Tape::backward_node(const Node& node, const Tensor& g) {
  auto in = [&](std::size_t i) -> const Tensor& { return nodes_[node.inputs[i]].value; };
  auto id = [&](std::size_t i) { return node.inputs[i]; };
  const Attributes& attrs = node.attrs;

  switch (node.kind) {
    case PrimitiveKind::kLeaf:
      break;
    case PrimitiveKind::kMatMul:
      if (nodes_[id(0)].needs_grad) accumulate(id(0), g * in(1).transpose());
      if (nodes_[id(1)].needs_grad) accumulate(id(1), in(0).transpose() * g);
      break;
    case PrimitiveKind::kAdd:
    case PrimitiveKind::kSub: {
      const double sign = node.kind == PrimitiveKind::kAdd ? 1.0 : -1.0;
      accumulate(id(0), g);
      if (nodes_[id(1)].needs_grad) {
        if (in(1).rows() == 1 && in(0).rows() != 1) {
          Tensor gb = sign * row_sum(g, 0, g.rows());
          accumulate(id(1), gb);
        } else {
          accumulate(id(1), sign * g);
        }
      }
      break;
    }
    case PrimitiveKind::kScale:
      accumulate(id(0), attrs.scalar * g);
      break;
    case PrimitiveKind::kRelu:
      accumulate(id(0), (in(0).array() > 0.0).select(g, 0.0));
      break;
    case PrimitiveKind::kTanh:
      accumulate(id(0), (g.array() * (1.0 - node.value.array().square())).matrix());
      break;
    case PrimitiveKind::kSigmoid:
      accumulate(id(0), (g.array() * node.value.array() * (1.0 - node.value.array())).matrix());
      break;
    case PrimitiveKind::kElu:
      accumulate(id(0), (in(0).array() > 0.0).select(g, (g.array() * (node.value.array() + 1.0)).matrix()));
      break;
    case PrimitiveKind::kReduceSum:
    case PrimitiveKind::kReduceMean: {
      const Tensor& x = in(0);
      Tensor gx(x.rows(), x.cols());
      if (attrs.axis == 0) {
        const double w = node.kind == PrimitiveKind::kReduceMean ? 1.0 / static_cast<double>(x.rows()) : 1.0;
        gx.rowwise() = w * g.row(0);
      } else {
        const double w = node.kind == PrimitiveKind::kReduceMean ? 1.0 / static_cast<double>(x.cols()) : 1.0;
        gx.colwise() = w * g.col(0);
      }
      accumulate(id(0), gx);
      break;
    }
    case PrimitiveKind::kReduceMax: {
      const Tensor& x = in(0);
      Tensor gx = Tensor::Zero(x.rows(), x.cols());
      if (attrs.axis == 0) {
        for (Index c = 0; c < x.cols(); ++c) gx(node.saved_index[static_cast<std::size_t>(c)], c) = g(0, c);
      } else {
        for (Index r = 0; r < x.rows(); ++r) gx(r, node.saved_index[static_cast<std::size_t>(r)]) = g(r, 0);
      }
      accumulate(id(0), gx);
      break;
    }
    case PrimitiveKind::kSoftmax: {
      const Tensor& y = node.value;
      Tensor gx(y.rows(), y.cols());
      if (attrs.axis == 1) {
        for (Index r = 0; r < y.rows(); ++r) {
          const double dot = g.row(r).dot(y.row(r));
          gx.row(r) = (y.row(r).array() * (g.row(r).array() - dot)).matrix();
        }
      } else {
        for (Index c = 0; c < y.cols(); ++c) {
          const double dot = g.col(c).dot(y.col(c));
          gx.col(c) = (y.col(c).array() * (g.col(c).array() - dot)).matrix();
        }
      }
      accumulate(id(0), gx);
      break;
    }
    case PrimitiveKind::kConcat: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (attrs.axis == 0) {
        accumulate(id(0), g.topRows(a.rows()));
        accumulate(id(1), g.bottomRows(b.rows()));
      } else {
        accumulate(id(0), g.leftCols(a.cols()));
        accumulate(id(1), g.rightCols(b.cols()));
      }
      break;
    }
    case PrimitiveKind::kSegmentSum:
    case PrimitiveKind::kSegmentMean: {
      const Tensor& x = in(0);
      Tensor gx(x.rows(), x.cols());
      for (std::size_t s = 0; s + 1 < attrs.offsets.size(); ++s) {
        const Index b = attrs.offsets[s];
        const Index e = attrs.offsets[s + 1];
        const double w = node.kind == PrimitiveKind::kSegmentMean ? 1.0 / static_cast<double>(e - b) : 1.0;
        gx.middleRows(b, e - b).rowwise() = w * g.row(static_cast<Index>(s));
      }
      accumulate(id(0), gx);
      break;
    }
    case PrimitiveKind::kSegmentMax: {
      const Tensor& x = in(0);
      Tensor gx = Tensor::Zero(x.rows(), x.cols());
      for (Index s = 0; s < g.rows(); ++s) {
        for (Index c = 0; c < x.cols(); ++c) {
          gx(node.saved_index[static_cast<std::size_t>(s * x.cols() + c)], c) += g(s, c);
        }
      }
      accumulate(id(0), gx);
      break;
    }
    case PrimitiveKind::kSegmentBroadcast: {
      Tensor gp(static_cast<Index>(attrs.offsets.size() - 1), g.cols());
      for (std::size_t s = 0; s + 1 < attrs.offsets.size(); ++s) {
        gp.row(static_cast<Index>(s)) = row_sum(g, attrs.offsets[s], attrs.offsets[s + 1]);
      }
      accumulate(id(0), gp);
      break;
    }
    case PrimitiveKind::kMseLoss: {
      const Tensor gp = (2.0 * g(0, 0) / static_cast<double>(in(0).size())) * (in(0) - in(1));
      accumulate(id(0), gp);
      if (nodes_[id(1)].needs_grad) accumulate(id(1), -gp);
      break;
    }
    case PrimitiveKind::kHingeMarginLoss: {
      const double w = g(0, 0) / static_cast<double>(in(0).size());
      const Tensor active = (((in(1) - in(0)).array() + attrs.scalar) > 0.0).cast<double>().matrix();
      accumulate(id(0), -w * active);
      accumulate(id(1), w * active);
      break;
    }
    case PrimitiveKind::kSetSoftmaxNll: {
      const Tensor& x = in(0);
      const std::size_t sets = attrs.offsets.size() - 1;
      const double w = g(0, 0) / static_cast<double>(sets);
      Tensor gx(x.rows(), x.cols());
      double* flat = gx.data();
      for (std::size_t s = 0; s < sets; ++s) {
        const Index b = attrs.offsets[s];
        const Index e = attrs.offsets[s + 1];
        for (Index i = b; i < e; ++i) flat[i] = w * node.saved(0, i);
        flat[b + attrs.targets[s]] -= w;
      }
      accumulate(id(0), gx);
      break;
    }
  }
}

Tensor Tape::grad(Var v) const {
  if (v.tape() != this) throw std::invalid_argument("variable recorded on a different tape");
  const Tensor& value = nodes_.at(v.id()).value;
  if (v.id() < grads_.size() && grads_[v.id()].size() != 0) return grads_[v.id()];
  return Tensor::Zero(value.rows(), value.cols());
}

Var apply_primitive(PrimitiveKind kind, std::span<const Var> inputs, const Attributes& attrs) {
  if (inputs.empty() || inputs.front().tape() == nullptr) {
    throw std::invalid_argument(std::string(primitive_name(kind)) + ": inputs must be bound to a tape");
  }
  return inputs.front().tape()->apply(kind, inputs, attrs);
}

namespace {

Var unary(PrimitiveKind kind, Var a, Attributes attrs = {}) {
  const std::array<Var, 1> in{a};
  return apply_primitive(kind, in, attrs);
}

Var binary(PrimitiveKind kind, Var a, Var b, Attributes attrs = {}) {
  const std::array<Var, 2> in{a, b};
  return apply_primitive(kind, in, attrs);
}

Attributes axis_attr(int axis) {
  Attributes attrs;
  attrs.axis = axis;
  return attrs;
}

Attributes offsets_attr(std::span<const Index> offsets) {
  Attributes attrs;
  attrs.offsets.assign(offsets.begin(), offsets.end());
  return attrs;
}

}  // namespace

Var matmul(Var a, Var b) { return binary(PrimitiveKind::kMatMul, a, b); }
Var add(Var a, Var b) { return binary(PrimitiveKind::kAdd, a, b); }
Var sub(Var a, Var b) { return binary(PrimitiveKind::kSub, a, b); }

Var scale(Var a, double s) {
  Attributes attrs;
  attrs.scalar = s;
  return unary(PrimitiveKind::kScale, a, attrs);
}

Var relu(Var a) { return unary(PrimitiveKind::kRelu, a); }
Var tanh(Var a) { return unary(PrimitiveKind::kTanh, a); }
Var sigmoid(Var a) { return unary(PrimitiveKind::kSigmoid, a); }
Var elu(Var a) { return unary(PrimitiveKind::kElu, a); }
Var reduce_sum(Var a, int axis) { return unary(PrimitiveKind::kReduceSum, a, axis_attr(axis)); }
Var reduce_max(Var a, int axis) { return unary(PrimitiveKind::kReduceMax, a, axis_attr(axis)); }
Var reduce_mean(Var a, int axis) { return unary(PrimitiveKind::kReduceMean, a, axis_attr(axis)); }
Var softmax(Var a, int axis) { return unary(PrimitiveKind::kSoftmax, a, axis_attr(axis)); }
Var concat(Var a, Var b, int axis) { return binary(PrimitiveKind::kConcat, a, b, axis_attr(axis)); }

Var segment_sum(Var a, std::span<const Index> offsets) {
  return unary(PrimitiveKind::kSegmentSum, a, offsets_attr(offsets));
}
Var segment_max(Var a, std::span<const Index> offsets) {
  return unary(PrimitiveKind::kSegmentMax, a, offsets_attr(offsets));
}
Var segment_mean(Var a, std::span<const Index> offsets) {
  return unary(PrimitiveKind::kSegmentMean, a, offsets_attr(offsets));
}
Var segment_broadcast(Var pooled, std::span<const Index> offsets) {
  return unary(PrimitiveKind::kSegmentBroadcast, pooled, offsets_attr(offsets));
}

Var mse_loss(Var prediction, Var target) { return binary(PrimitiveKind::kMseLoss, prediction, target); }

Var hinge_margin_loss(Var positive, Var negative, double delta) {
  Attributes attrs;
  attrs.scalar = delta;
  return binary(PrimitiveKind::kHingeMarginLoss, positive, negative, attrs);
}

Var set_softmax_nll(Var scores, std::span<const Index> offsets, std::span<const Index> targets) {
  Attributes attrs = offsets_attr(offsets);
  attrs.targets.assign(targets.begin(), targets.end());
  return unary(PrimitiveKind::kSetSoftmaxNll, scores, attrs);
}

GradCheckResult grad_check(const GraphBuilder& f, std::span<const Tensor> params, double step,
                           std::size_t samples_per_tensor, std::uint64_t seed) {
  if (!(step > 0.0) || step > 1e-2) throw std::invalid_argument("grad_check: step must lie in (0, 1e-2]");

  std::vector<Tensor> point(params.begin(), params.end());
  auto evaluate = [&]() {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(point.size());
    for (const Tensor& p : point) vars.push_back(tape.parameter(p));
    const Var out = f(tape, vars);
    if (out.rows() != 1 || out.cols() != 1) throw ShapeError("grad_check: f must return a 1x1 value");
    return out.value()(0, 0);
  };

  const double first = evaluate();
  if (evaluate() != first) throw std::runtime_error("grad_check: f is not deterministic");

  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& p : point) vars.push_back(tape.parameter(p));
    const Var out = f(tape, vars);
    tape.backprop(out);
    for (const Var& v : vars) analytic.push_back(tape.grad(v));
  }

  std::mt19937_64 rng(seed);
  GradCheckResult result;
  for (std::size_t t = 0; t < point.size(); ++t) {
    std::vector<Index> coords(static_cast<std::size_t>(point[t].size()));
    std::iota(coords.begin(), coords.end(), Index{0});
    if (coords.size() > samples_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(samples_per_tensor);
    }
    for (Index k : coords) {
      double& x = point[t].data()[k];
      const double saved = x;
      x = saved + step;
      const double up = evaluate();
      x = saved - step;
      const double down = evaluate();
      x = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[t].data()[k];
      result.max_relative_error =
          std::max(result.max_relative_error, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
      ++result.coordinates_checked;
    }
  }
  return result;
}

}  // namespace deepsets
