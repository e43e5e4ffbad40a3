#include "beamunfold/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "beamunfold/error.hpp"
#include "beamunfold/linalg.hpp"
#include "beamunfold/nn_kernels.hpp"

namespace beamunfold::ad {

namespace {

void require_inputs(std::span<const Var> inputs, std::size_t n, const char* what) {
  if (inputs.size() != n)
    throw Error(ErrorKind::InvalidArgument,
                std::string(what) + ": expected " + std::to_string(n) + " inputs");
}

void require_nonempty(std::span<const Var> inputs, const char* what) {
  if (inputs.empty()) throw Error(ErrorKind::InvalidArgument, std::string(what) + ": no inputs");
}

void require_scalar(const CMatrix& a, const char* what) {
  if (a.rows() != 1 || a.cols() != 1)
    throw Error(ErrorKind::ShapeMismatch, std::string(what) + ": expected a 1x1 operand");
}

void project_real(CMatrix& a) {
  for (auto& z : a.data()) z = {z.real(), 0.0};
}

void accumulate(CMatrix& slot, const CMatrix& contribution) {
  if (slot.empty())
    slot = contribution;
  else
    slot += contribution;
}

}  // namespace

const CMatrix& Var::value() const {
  if (!tape_) throw Error(ErrorKind::InvalidArgument, "use of an unbound Var");
  return tape_->value(index_);
}

bool Var::is_real() const {
  if (!tape_) throw Error(ErrorKind::InvalidArgument, "use of an unbound Var");
  return tape_->is_real(index_);
}

const CMatrix& Gradients::operator[](Var leaf) const {
  const auto it = std::lower_bound(leaf_nodes_.begin(), leaf_nodes_.end(), leaf.index());
  if (it == leaf_nodes_.end() || *it != leaf.index())
    throw Error(ErrorKind::InvalidArgument, "node is not a parameter leaf of this tape");
  return grads_[static_cast<std::size_t>(it - leaf_nodes_.begin())];
}

void Tape::reserve(std::size_t nodes) {
  nodes_.reserve(nodes);
  values_.reserve(nodes);
  inputs_.reserve(2 * nodes);
}

Var Tape::push(Op op, CMatrix value, bool real, std::span<const Var> inputs, double param,
               std::uint32_t cache) {
  bool tracked = op == Op::Leaf;
  const auto first = static_cast<std::uint32_t>(inputs_.size());
  for (const Var& v : inputs) {
    if (v.tape() != this)
      throw Error(ErrorKind::InvalidArgument, "input recorded on a different tape");
    tracked = tracked || nodes_[v.index()].tracked;
    inputs_.push_back(v.index());
  }
  if (real) project_real(value);
  const auto index = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back(Node{op, real, tracked, first, static_cast<std::uint32_t>(inputs.size()),
                        cache, param});
  values_.push_back(std::move(value));
  return Var(this, index);
}

Var Tape::leaf(CMatrix value, bool real) {
  if (value.empty()) throw Error(ErrorKind::ShapeMismatch, "leaf with no entries");
  if (!value.all_finite()) throw Error(ErrorKind::NonFinite, "leaf with non-finite entries");
  Var v = push(Op::Leaf, std::move(value), real, {}, 0.0);
  leaves_.push_back(v.index());
  return v;
}

Var Tape::constant(CMatrix value, bool real) {
  if (value.empty()) throw Error(ErrorKind::ShapeMismatch, "constant with no entries");
  return push(Op::Constant, std::move(value), real, {}, 0.0);
}

Var Tape::record(Op op, std::span<const Var> in, double param) {
  auto val = [&](std::size_t i) -> const CMatrix& { return values_[in[i].index()]; };
  auto real_in = [&](std::size_t i) { return nodes_[in[i].index()].real; };
  switch (op) {
    case Op::Leaf:
    case Op::Constant:
      throw Error(ErrorKind::InvalidArgument, "use leaf() or constant() for inputs");
    case Op::MatMul: {
      require_inputs(in, 2, "matmul");
      if (val(0).cols() != val(1).rows())
        throw Error(ErrorKind::ShapeMismatch, "matmul: inner dimensions differ");
      return push(op, matmul(val(0), val(1)), real_in(0) && real_in(1), in, param);
    }
    case Op::Adjoint:
      require_inputs(in, 1, "adjoint");
      return push(op, adjoint(val(0)), real_in(0), in, param);
    case Op::Add:
      require_inputs(in, 2, "add");
      require_same_shape(val(0), val(1), "add");
      return push(op, val(0) + val(1), real_in(0) && real_in(1), in, param);
    case Op::Sub:
      require_inputs(in, 2, "sub");
      require_same_shape(val(0), val(1), "sub");
      return push(op, val(0) - val(1), real_in(0) && real_in(1), in, param);
    case Op::Scale:
      require_inputs(in, 1, "scale");
      return push(op, scale(val(0), param), real_in(0), in, param);
    case Op::ScaleBy: {
      require_inputs(in, 2, "scale_by");
      require_scalar(val(1), "scale_by");
      const cplx s = val(1)[0];
      if (real_in(1)) return push(op, val(0) * s.real(), real_in(0), in, param);
      return push(op, val(0) * s, false, in, param);
    }
    case Op::AddIdentity:
      require_inputs(in, 1, "add_identity");
      if (!val(0).is_square()) throw Error(ErrorKind::ShapeMismatch, "add_identity: not square");
      return push(op, add_identity(val(0), param), real_in(0), in, param);
    case Op::InverseHpd: {
      require_inputs(in, 1, "inverse_hpd");
      if (!val(0).is_square()) throw Error(ErrorKind::ShapeMismatch, "inverse_hpd: not square");
      CMatrix inv = linalg::Cholesky(val(0)).inverse();
      return push(op, std::move(inv), false, in, param);
    }
    case Op::LogDetHpd: {
      require_inputs(in, 1, "logdet_hpd");
      if (!val(0).is_square()) throw Error(ErrorKind::ShapeMismatch, "logdet_hpd: not square");
      const linalg::Cholesky chol(val(0));
      cache_.push_back(chol.inverse());
      return push(op, CMatrix::scalar(chol.logdet()), true, in, param,
                  static_cast<std::uint32_t>(cache_.size() - 1));
    }
    case Op::FrobeniusSq:
      require_inputs(in, 1, "frobenius_norm_sq");
      return push(op, CMatrix::scalar(linalg::frobenius_norm_sq(val(0))), true, in, param);
    case Op::ComplexRelu:
      require_inputs(in, 1, "complex_relu");
      return push(op, complex_relu(val(0)), real_in(0), in, param);
    case Op::RealPart:
      require_inputs(in, 1, "real_part");
      return push(op, real_part(val(0)), true, in, param);
    case Op::Reciprocal: {
      require_inputs(in, 1, "reciprocal");
      require_scalar(val(0), "reciprocal");
      const cplx z = val(0)[0];
      if (z == cplx(0.0, 0.0)) throw Error(ErrorKind::NonFinite, "reciprocal of zero");
      if (real_in(0)) return push(op, CMatrix::scalar(1.0 / z.real()), true, in, param);
      return push(op, CMatrix::scalar(1.0 / z), false, in, param);
    }
    case Op::Softplus:
      require_inputs(in, 1, "softplus");
      return push(op, softplus(val(0)), true, in, param);
    case Op::PowerScaleFactor: {
      require_nonempty(in, "power_scale_factor");
      if (!(param > 0.0))
        throw Error(ErrorKind::InvalidArgument, "power_scale_factor: budget must be positive");
      double total = 0.0;
      for (std::size_t i = 0; i < in.size(); ++i) total += linalg::frobenius_norm_sq(val(i));
      const double s =
          total > param * (1.0 + kPowerScaleSlack) ? std::sqrt(param / total) : 1.0;
      return push(op, CMatrix::scalar(s), true, in, param);
    }
    case Op::FlattenConcat: {
      require_nonempty(in, "flatten_concat");
      std::vector<CMatrix> parts;
      parts.reserve(in.size());
      bool real = true;
      for (std::size_t i = 0; i < in.size(); ++i) {
        parts.push_back(val(i));
        real = real && real_in(i);
      }
      return push(op, flatten_concat(parts), real, in, param);
    }
    case Op::Sum: {
      require_nonempty(in, "sum");
      CMatrix out = val(0);
      bool real = real_in(0);
      for (std::size_t i = 1; i < in.size(); ++i) {
        require_same_shape(out, val(i), "sum");
        out += val(i);
        real = real && real_in(i);
      }
      return push(op, std::move(out), real, in, param);
    }
    case Op::Gram:
      require_inputs(in, 1, "gram");
      return push(op, gram(val(0)), real_in(0), in, param);
    case Op::Trace:
      require_inputs(in, 1, "trace");
      if (!val(0).is_square()) throw Error(ErrorKind::ShapeMismatch, "trace: not square");
      return push(op, CMatrix::scalar(trace(val(0))), real_in(0), in, param);
  }
  throw Error(ErrorKind::InvalidArgument, "unknown primitive");
}

Gradients Tape::backward(Var root) const {
  if (root.tape() != this) throw Error(ErrorKind::InvalidArgument, "root from another tape");
  const std::uint32_t r = root.index();
  if (values_[r].rows() != 1 || values_[r].cols() != 1 || !nodes_[r].real)
    throw Error(ErrorKind::NotScalar, "backward root must be a real 1x1 node");

  std::vector<CMatrix> adj(r + 1);
  adj[r] = CMatrix::scalar(1.0);

  for (std::uint32_t n = r + 1; n-- > 0;) {
    const Node& node = nodes_[n];
    if (!node.tracked || adj[n].empty()) continue;
    if (node.op == Op::Leaf || node.op == Op::Constant) continue;
    CMatrix& g = adj[n];
    if (node.real) project_real(g);

    const std::uint32_t* in = inputs_.data() + node.first_input;
    auto in_val = [&](std::size_t i) -> const CMatrix& { return values_[in[i]]; };
    auto wants = [&](std::size_t i) { return nodes_[in[i]].tracked; };
    auto give = [&](std::size_t i, const CMatrix& c) {
      if (wants(i)) accumulate(adj[in[i]], c);
    };

    switch (node.op) {
      case Op::Leaf:
      case Op::Constant:
        break;
      case Op::MatMul:
        if (wants(0)) give(0, matmul(g, adjoint(in_val(1))));
        if (wants(1)) give(1, matmul_adj_left(in_val(0), g));
        break;
      case Op::Adjoint:
        give(0, adjoint(g));
        break;
      case Op::Add:
        give(0, g);
        give(1, g);
        break;
      case Op::Sub:
        give(0, g);
        if (wants(1)) give(1, -g);
        break;
      case Op::Scale:
        give(0, g * node.param);
        break;
      case Op::ScaleBy: {
        const cplx s = in_val(1)[0];
        if (wants(0)) {
          if (nodes_[in[1]].real)
            give(0, g * s.real());
          else
            give(0, g * std::conj(s));
        }
        if (wants(1)) give(1, CMatrix::scalar(std::conj(inner(g, in_val(0)))));
        break;
      }
      case Op::AddIdentity:
        give(0, g);
        break;
      case Op::InverseHpd: {
        if (!wants(0)) break;
        const CMatrix& b = values_[n];
        give(0, hermitian_part(-matmul(matmul(b, g), b)));
        break;
      }
      case Op::LogDetHpd:
        give(0, cache_[node.cache] * g[0].real());
        break;
      case Op::FrobeniusSq:
        give(0, in_val(0) * (2.0 * g[0].real()));
        break;
      case Op::ComplexRelu: {
        if (!wants(0)) break;
        CMatrix c = g;
        const CMatrix& x = in_val(0);
        for (std::size_t i = 0; i < c.size(); ++i)
          c[i] = {x[i].real() > 0.0 ? c[i].real() : 0.0, x[i].imag() > 0.0 ? c[i].imag() : 0.0};
        give(0, c);
        break;
      }
      case Op::RealPart: {
        CMatrix c = g;
        project_real(c);
        give(0, c);
        break;
      }
      case Op::Reciprocal: {
        const cplx z = in_val(0)[0];
        give(0, CMatrix::scalar(-g[0] / std::conj(z * z)));
        break;
      }
      case Op::Softplus: {
        if (!wants(0)) break;
        CMatrix c = g;
        const CMatrix& x = in_val(0);
        for (std::size_t i = 0; i < c.size(); ++i) c[i] = {logistic(x[i].real()) * g[i].real(), 0.0};
        give(0, c);
        break;
      }
      case Op::PowerScaleFactor: {
        const double s = values_[n][0].real();
        double total = 0.0;
        for (std::size_t i = 0; i < node.input_count; ++i)
          total += linalg::frobenius_norm_sq(in_val(i));
        if (!(total > node.param * (1.0 + kPowerScaleSlack))) break;  // feasible branch: constant 1
        const double coeff = -(s / total) * g[0].real();
        for (std::size_t i = 0; i < node.input_count; ++i)
          if (wants(i)) give(i, in_val(i) * coeff);
        break;
      }
      case Op::FlattenConcat: {
        std::size_t pos = 0;
        for (std::size_t i = 0; i < node.input_count; ++i) {
          const CMatrix& x = in_val(i);
          if (wants(i)) {
            CMatrix c(x.rows(), x.cols());
            for (std::size_t j = 0; j < x.size(); ++j) c[j] = g[pos + j];
            give(i, c);
          }
          pos += x.size();
        }
        break;
      }
      case Op::Sum:
        for (std::size_t i = 0; i < node.input_count; ++i) give(i, g);
        break;
      case Op::Gram:
        if (wants(0)) give(0, matmul(g + adjoint(g), in_val(0)));
        break;
      case Op::Trace: {
        if (!wants(0)) break;
        const std::size_t m = in_val(0).rows();
        CMatrix c(m, m);
        for (std::size_t i = 0; i < m; ++i) c(i, i) = g[0];
        give(0, c);
        break;
      }
    }
    g = CMatrix();  // release interior adjoints early
  }

  Gradients out;
  out.leaf_nodes_ = leaves_;
  out.grads_.reserve(leaves_.size());
  for (std::uint32_t l : leaves_) {
    if (l <= r && !adj[l].empty()) {
      CMatrix g = std::move(adj[l]);
      if (nodes_[l].real) project_real(g);
      out.grads_.push_back(std::move(g));
    } else {
      out.grads_.emplace_back(values_[l].rows(), values_[l].cols());
    }
  }
  return out;
}

// Free-function front end. Each call records one primitive on the tape of its
// first operand.

namespace {
Tape& tape_of(Var a) {
  if (!a.valid()) throw Error(ErrorKind::InvalidArgument, "use of an unbound Var");
  return *a.tape();
}
Var rec(Op op, std::initializer_list<Var> in, double param = 0.0) {
  const std::span<const Var> s(in.begin(), in.size());
  return tape_of(*in.begin()).record(op, s, param);
}
Var rec_span(Op op, std::span<const Var> in, double param = 0.0) {
  if (in.empty()) throw Error(ErrorKind::InvalidArgument, "empty operand list");
  return tape_of(in[0]).record(op, in, param);
}
}  // namespace

Var matmul(Var a, Var b) { return rec(Op::MatMul, {a, b}); }
Var adjoint(Var a) { return rec(Op::Adjoint, {a}); }
Var operator+(Var a, Var b) { return rec(Op::Add, {a, b}); }
Var operator-(Var a, Var b) { return rec(Op::Sub, {a, b}); }
Var scale(Var a, double s) { return rec(Op::Scale, {a}, s); }
Var scale(Var a, Var s) { return rec(Op::ScaleBy, {a, s}); }
Var add_identity(Var a, double c) { return rec(Op::AddIdentity, {a}, c); }
Var inverse_hpd(Var a) { return rec(Op::InverseHpd, {a}); }
Var logdet_hpd(Var a) { return rec(Op::LogDetHpd, {a}); }
Var frobenius_norm_sq(Var a) { return rec(Op::FrobeniusSq, {a}); }
Var complex_relu(Var a) { return rec(Op::ComplexRelu, {a}); }
Var real_part(Var a) { return rec(Op::RealPart, {a}); }
Var reciprocal(Var a) { return rec(Op::Reciprocal, {a}); }
Var softplus(Var a) { return rec(Op::Softplus, {a}); }
Var power_scale_factor(std::span<const Var> parts, double power) {
  return rec_span(Op::PowerScaleFactor, parts, power);
}
Var flatten_concat(std::span<const Var> parts) { return rec_span(Op::FlattenConcat, parts); }
Var sum(std::span<const Var> parts) { return rec_span(Op::Sum, parts); }
Var gram(Var a) { return rec(Op::Gram, {a}); }
Var trace(Var a) { return rec(Op::Trace, {a}); }
Var norm_sq(Var a) { return frobenius_norm_sq(a); }
Var hermitian_part(Var a) { return scale(a + adjoint(a), 0.5); }
Var step_towards(Var v, Var dir, Var lambda) { return v + scale(dir, reciprocal(lambda)); }

GradCheckReport grad_check(const ScalarFunction& f, std::span<const LeafSpec> params,
                           double step, double rel_floor, double abs_floor) {
  if (!(step > 0.0)) throw Error(ErrorKind::InvalidArgument, "grad_check: step must be positive");

  auto evaluate = [&](const std::vector<CMatrix>& values, Gradients* grads) {
    Tape tape;
    std::vector<Var> leaves;
    leaves.reserve(values.size());
    for (std::size_t i = 0; i < values.size(); ++i)
      leaves.push_back(tape.leaf(values[i], params[i].real));
    const Var out = f(tape, leaves);
    if (grads) *grads = tape.backward(out);
    return out.value()[0].real();
  };

  std::vector<CMatrix> values;
  for (const auto& p : params) values.push_back(p.value);
  Gradients grads;
  evaluate(values, &grads);

  std::vector<double> analytic, numeric;
  for (std::size_t p = 0; p < params.size(); ++p) {
    const std::size_t parts = params[p].real ? 1 : 2;
    for (std::size_t e = 0; e < values[p].size(); ++e) {
      for (std::size_t c = 0; c < parts; ++c) {
        const cplx delta = c == 0 ? cplx(step, 0.0) : cplx(0.0, step);
        const cplx saved = values[p][e];
        values[p][e] = saved + delta;
        const double up = evaluate(values, nullptr);
        values[p][e] = saved - delta;
        const double down = evaluate(values, nullptr);
        values[p][e] = saved;
        numeric.push_back((up - down) / (2.0 * step));
        const cplx g = grads.at(p)[e];
        analytic.push_back(c == 0 ? g.real() : g.imag());
      }
    }
  }

  GradCheckReport report;
  report.components = numeric.size();
  double scale_fd = 0.0;
  for (double v : numeric) scale_fd = std::max(scale_fd, std::abs(v));
  const double floor = std::max(abs_floor, rel_floor * scale_fd);
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    report.max_rel_error = std::max(report.max_rel_error, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return report;
}

}  // namespace beamunfold::ad
