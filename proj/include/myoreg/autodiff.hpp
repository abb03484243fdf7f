#pragma once

// Scalar reverse-mode tape with an embedded forward-mode tangent bundle.
//
// A Var is a handle to a node on a Tape. A TangentValue pairs a primal Var
// with three tangent Vars (coefficients of d/dX1, d/dX2, d/dX3). Because the
// tangent coefficients are themselves tape nodes, a single backward pass
// differentiates spatial derivatives with respect to the parameters.

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "myoreg/errors.hpp"

namespace myoreg::ad {

enum class OpKind : std::uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Sin,
  Cos,
  Tanh,
  Exp,
  Log,
  Sqrt,
  SmoothAbs,
  Atan2,
  Min,
  Max,
};

// Smoothing radius of SmoothAbs: |x| ~ sqrt(x^2 + eps^2) - eps.
inline constexpr double kSmoothAbsEps = 1e-3;

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::uint32_t index) : tape_(tape), index_(index) {}

  double value() const;
  Tape* tape() const { return tape_; }
  std::uint32_t index() const { return index_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::uint32_t index_ = 0;
};

struct TapeNode {
  double value = 0.0;
  std::array<std::uint32_t, 2> parents{0, 0};
  std::array<double, 2> partials{0.0, 0.0};
  std::uint8_t arity = 0;
};

// Adjoints indexed by tape node.
class Gradient {
 public:
  explicit Gradient(std::vector<double> adjoints) : adjoints_(std::move(adjoints)) {}
  double operator[](const Var& v) const;
  std::size_t size() const { return adjoints_.size(); }

 private:
  std::vector<double> adjoints_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var variable(double value);
  Var constant(double value) { return variable(value); }

  // Appends a node for `kind` applied to the operands. Unary kinds ignore b.
  Var record(OpKind kind, Var a, Var b = {});

  // Reverse accumulation from a scalar output node.
  Gradient backward(Var output) const;

  // Drops all nodes but keeps the allocation for the next evaluation.
  void reset();

  std::size_t size() const { return nodes_.size(); }
  const TapeNode& node(std::uint32_t i) const { return nodes_[i]; }

 private:
  void check_owned(const Var& v, const char* what) const;
  std::vector<TapeNode> nodes_;
};

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator-(Var a);
Var operator+(Var a, double b);
Var operator+(double a, Var b);
Var operator-(Var a, double b);
Var operator-(double a, Var b);
Var operator*(Var a, double b);
Var operator*(double a, Var b);
Var operator/(Var a, double b);
Var operator/(double a, Var b);
Var sin(Var a);
Var cos(Var a);
Var tanh(Var a);
Var exp(Var a);
Var log(Var a);
Var sqrt(Var a);
Var smooth_abs(Var a);
Var atan2(Var y, Var x);
Var min(Var a, Var b);
Var max(Var a, Var b);

// Primal plus spatial tangent. has_tangent == false means an all-zero tangent
// (parameters and constants), which avoids recording multiplications by zero.
struct TangentValue {
  Var primal;
  std::array<Var, 3> tangent{};
  bool has_tangent = false;

  double value() const { return primal.value(); }
  Tape* tape() const { return primal.tape(); }
  // Tangent coefficient j as a node; materializes a zero constant when absent.
  Var d(int j) const;

  static TangentValue constant(Tape& tape, double v) { return {tape.variable(v), {}, false}; }
  static TangentValue lift(Var v) { return {v, {}, false}; }
};

TangentValue operator+(const TangentValue& a, const TangentValue& b);
TangentValue operator-(const TangentValue& a, const TangentValue& b);
TangentValue operator*(const TangentValue& a, const TangentValue& b);
TangentValue operator/(const TangentValue& a, const TangentValue& b);
TangentValue operator-(const TangentValue& a);
TangentValue operator+(const TangentValue& a, double b);
TangentValue operator+(double a, const TangentValue& b);
TangentValue operator-(const TangentValue& a, double b);
TangentValue operator-(double a, const TangentValue& b);
TangentValue operator*(const TangentValue& a, double b);
TangentValue operator*(double a, const TangentValue& b);
TangentValue operator/(const TangentValue& a, double b);
TangentValue operator/(double a, const TangentValue& b);
TangentValue sin(const TangentValue& a);
TangentValue cos(const TangentValue& a);
TangentValue tanh(const TangentValue& a);
TangentValue exp(const TangentValue& a);
TangentValue log(const TangentValue& a);
TangentValue sqrt(const TangentValue& a);
TangentValue smooth_abs(const TangentValue& a);
TangentValue atan2(const TangentValue& y, const TangentValue& x);

using TangentVec3 = std::array<TangentValue, 3>;
using VarMat3 = std::array<std::array<Var, 3>, 3>;

// Seeds X with unit tangents, evaluates f, and returns d f_i / d X_j as tape
// nodes. The seeded inputs are tape variables, so the caller may also
// differentiate with respect to X through the returned primal values.
VarMat3 spatial_jacobian(Tape& tape, const std::function<TangentVec3(const TangentVec3&)>& f,
                         const std::array<double, 3>& x, TangentVec3* output = nullptr);

// Inputs seeded with the i-th standard basis tangent.
TangentVec3 seed_coordinates(Tape& tape, const std::array<double, 3>& x);

}  // namespace myoreg::ad
