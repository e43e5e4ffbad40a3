#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "beamunfold/cmatrix.hpp"

// Reverse-mode differentiation over complex matrices.
//
// Every value is a complex matrix; a complex entry z = a + ib is treated as the
// real pair (a, b). The adjoint stored for a node is the complex matrix
// G = df/da + i df/db, so for a real loss f the first-order change is
// df = Re tr(G^H dX). Nodes flagged real hold real values and have the
// imaginary part of their adjoint discarded.

namespace beamunfold::ad {

enum class Op : std::uint8_t {
  Leaf,
  Constant,
  MatMul,
  Adjoint,
  Add,
  Sub,
  Scale,         // by a real constant (param)
  ScaleBy,       // by a 1x1 node
  AddIdentity,   // + param * I
  InverseHpd,    // inverse of the Hermitian part, Cholesky based
  LogDetHpd,     // ln det of the Hermitian part
  FrobeniusSq,
  ComplexRelu,
  RealPart,
  Reciprocal,    // 1x1
  Softplus,      // 1x1, real
  PowerScaleFactor,  // min(1, sqrt(param / sum ||X_k||^2))
  FlattenConcat,
  Sum,
  Gram,          // X X^H
  Trace,
};

class Tape;

/// Handle to a recorded node.
class Var {
 public:
  Var() = default;

  Tape* tape() const noexcept { return tape_; }
  std::uint32_t index() const noexcept { return index_; }
  bool valid() const noexcept { return tape_ != nullptr; }

  const CMatrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool is_real() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t index) : tape_(tape), index_(index) {}
  Tape* tape_ = nullptr;
  std::uint32_t index_ = 0;
};

/// Adjoints of the leaves of one backward pass.
class Gradients {
 public:
  const CMatrix& operator[](Var leaf) const;
  std::size_t size() const noexcept { return grads_.size(); }
  /// i-th leaf in creation order.
  const CMatrix& at(std::size_t i) const { return grads_.at(i); }

 private:
  friend class Tape;
  std::vector<std::uint32_t> leaf_nodes_;
  std::vector<CMatrix> grads_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Tracked parameter.
  Var leaf(CMatrix value, bool real = false);
  /// Untracked input; no adjoint is propagated into it.
  Var constant(CMatrix value, bool real = false);

  /// Appends one primitive with eagerly computed forward value.
  Var record(Op op, std::span<const Var> inputs, double param = 0.0);

  /// Root must be a real 1x1 node (NotScalar otherwise).
  Gradients backward(Var root) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  const CMatrix& value(std::uint32_t node) const { return values_[node]; }
  bool is_real(std::uint32_t node) const { return nodes_[node].real; }
  void reserve(std::size_t nodes);

 private:
  struct Node {
    Op op;
    bool real;
    bool tracked;
    std::uint32_t first_input;
    std::uint32_t input_count;
    std::uint32_t cache;  // index into cache_, or kNone
    double param;
  };
  static constexpr std::uint32_t kNone = 0xffffffffu;

  Var push(Op op, CMatrix value, bool real, std::span<const Var> inputs, double param,
           std::uint32_t cache = kNone);

  std::vector<Node> nodes_;
  std::vector<CMatrix> values_;
  std::vector<std::uint32_t> inputs_;
  std::vector<CMatrix> cache_;
  std::vector<std::uint32_t> leaves_;
};

Var matmul(Var a, Var b);
Var adjoint(Var a);
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var scale(Var a, double s);
Var scale(Var a, Var s);
Var add_identity(Var a, double c);
Var inverse_hpd(Var a);
Var logdet_hpd(Var a);
Var frobenius_norm_sq(Var a);
Var complex_relu(Var a);
Var real_part(Var a);
Var reciprocal(Var a);
Var softplus(Var a);
Var power_scale_factor(std::span<const Var> parts, double power);
Var flatten_concat(std::span<const Var> parts);
Var sum(std::span<const Var> parts);
Var gram(Var a);
Var trace(Var a);
Var hermitian_part(Var a);
Var norm_sq(Var a);
inline Var trace_of(Var a) { return trace(a); }
inline const CMatrix& value_of(const Var& a) { return a.value(); }
/// v + dir / lambda with a positive real 1x1 lambda.
Var step_towards(Var v, Var dir, Var lambda);

struct LeafSpec {
  CMatrix value;
  bool real = false;
};

using ScalarFunction = std::function<Var(Tape&, std::span<const Var>)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t components = 0;
};

/// Central differences against backward() for every real component of every
/// leaf. Error per component is |g - fd| / max(|g|, |fd|, floor) with
/// floor = max(abs_floor, rel_floor * max_j |fd_j|).
GradCheckReport grad_check(const ScalarFunction& f, std::span<const LeafSpec> params,
                           double step, double rel_floor = 1e-3, double abs_floor = 1e-12);

}  // namespace beamunfold::ad
