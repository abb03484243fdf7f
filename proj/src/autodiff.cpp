#include "myoreg/autodiff.hpp"

#include <cmath>
#include <string>

namespace myoreg::ad {

double Var::value() const {
  if (tape_ == nullptr) throw UsageError("value() on a detached Var");
  return tape_->node(index_).value;
}

double Gradient::operator[](const Var& v) const {
  if (v.index() >= adjoints_.size()) return 0.0;
  return adjoints_[v.index()];
}

Var Tape::variable(double value) {
  TapeNode n;
  n.value = value;
  nodes_.push_back(n);
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

void Tape::check_owned(const Var& v, const char* what) const {
  if (v.tape() != this || v.index() >= nodes_.size()) {
    throw UsageError(std::string(what) + ": operand is not on this tape");
  }
}

Var Tape::record(OpKind kind, Var a, Var b) {
  check_owned(a, "record");
  const bool binary = kind == OpKind::Add || kind == OpKind::Sub || kind == OpKind::Mul ||
                      kind == OpKind::Div || kind == OpKind::Atan2 || kind == OpKind::Min ||
                      kind == OpKind::Max;
  if (binary) check_owned(b, "record");

  const double x = nodes_[a.index()].value;
  const double y = binary ? nodes_[b.index()].value : 0.0;
  TapeNode n;
  n.parents = {a.index(), binary ? b.index() : 0u};
  n.arity = binary ? 2 : 1;

  switch (kind) {
    case OpKind::Leaf:
      throw UsageError("record: Leaf is not an operation; use variable()");
    case OpKind::Add:
      n.value = x + y;
      n.partials = {1.0, 1.0};
      break;
    case OpKind::Sub:
      n.value = x - y;
      n.partials = {1.0, -1.0};
      break;
    case OpKind::Mul:
      n.value = x * y;
      n.partials = {y, x};
      break;
    case OpKind::Div:
      n.value = x / y;
      n.partials = {1.0 / y, -x / (y * y)};
      break;
    case OpKind::Neg:
      n.value = -x;
      n.partials = {-1.0, 0.0};
      break;
    case OpKind::Sin:
      n.value = std::sin(x);
      n.partials = {std::cos(x), 0.0};
      break;
    case OpKind::Cos:
      n.value = std::cos(x);
      n.partials = {-std::sin(x), 0.0};
      break;
    case OpKind::Tanh: {
      const double t = std::tanh(x);
      n.value = t;
      n.partials = {1.0 - t * t, 0.0};
      break;
    }
    case OpKind::Exp:
      n.value = std::exp(x);
      n.partials = {n.value, 0.0};
      break;
    case OpKind::Log:
      if (!(x > 0.0)) throw DomainError("log of non-positive argument", x);
      n.value = std::log(x);
      n.partials = {1.0 / x, 0.0};
      break;
    case OpKind::Sqrt:
      if (!(x > 0.0)) throw DomainError("sqrt of non-positive argument", x);
      n.value = std::sqrt(x);
      n.partials = {0.5 / n.value, 0.0};
      break;
    case OpKind::SmoothAbs: {
      const double r = std::sqrt(x * x + kSmoothAbsEps * kSmoothAbsEps);
      n.value = r - kSmoothAbsEps;
      n.partials = {x / r, 0.0};
      break;
    }
    case OpKind::Atan2: {
      // x holds the first operand (y-coordinate), y the second.
      const double r2 = x * x + y * y;
      if (r2 == 0.0) {
        n.value = 0.0;
        n.partials = {0.0, 0.0};
      } else {
        n.value = std::atan2(x, y);
        n.partials = {y / r2, -x / r2};
      }
      break;
    }
    case OpKind::Min:
      // Ties go to the first operand.
      n.value = x <= y ? x : y;
      n.partials = x <= y ? std::array<double, 2>{1.0, 0.0} : std::array<double, 2>{0.0, 1.0};
      break;
    case OpKind::Max:
      n.value = x >= y ? x : y;
      n.partials = x >= y ? std::array<double, 2>{1.0, 0.0} : std::array<double, 2>{0.0, 1.0};
      break;
  }
  nodes_.push_back(n);
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Gradient Tape::backward(Var output) const {
  check_owned(output, "backward");
  std::vector<double> adj(nodes_.size(), 0.0);
  adj[output.index()] = 1.0;
  for (std::int64_t i = output.index(); i >= 0; --i) {
    const double g = adj[static_cast<std::size_t>(i)];
    if (g == 0.0) continue;
    const TapeNode& n = nodes_[static_cast<std::size_t>(i)];
    for (std::uint8_t k = 0; k < n.arity; ++k) adj[n.parents[k]] += g * n.partials[k];
  }
  return Gradient(std::move(adj));
}

void Tape::reset() { nodes_.clear(); }

namespace {
Tape& tape_of(const Var& a) {
  if (a.tape() == nullptr) throw UsageError("operation on a detached Var");
  return *a.tape();
}
}  // namespace

Var operator+(Var a, Var b) { return tape_of(a).record(OpKind::Add, a, b); }
Var operator-(Var a, Var b) { return tape_of(a).record(OpKind::Sub, a, b); }
Var operator*(Var a, Var b) { return tape_of(a).record(OpKind::Mul, a, b); }
Var operator/(Var a, Var b) { return tape_of(a).record(OpKind::Div, a, b); }
Var operator-(Var a) { return tape_of(a).record(OpKind::Neg, a); }
Var operator+(Var a, double b) { return a + tape_of(a).constant(b); }
Var operator+(double a, Var b) { return tape_of(b).constant(a) + b; }
Var operator-(Var a, double b) { return a - tape_of(a).constant(b); }
Var operator-(double a, Var b) { return tape_of(b).constant(a) - b; }
Var operator*(Var a, double b) { return a * tape_of(a).constant(b); }
Var operator*(double a, Var b) { return tape_of(b).constant(a) * b; }
Var operator/(Var a, double b) { return a / tape_of(a).constant(b); }
Var operator/(double a, Var b) { return tape_of(b).constant(a) / b; }
Var sin(Var a) { return tape_of(a).record(OpKind::Sin, a); }
Var cos(Var a) { return tape_of(a).record(OpKind::Cos, a); }
Var tanh(Var a) { return tape_of(a).record(OpKind::Tanh, a); }
Var exp(Var a) { return tape_of(a).record(OpKind::Exp, a); }
Var log(Var a) { return tape_of(a).record(OpKind::Log, a); }
Var sqrt(Var a) { return tape_of(a).record(OpKind::Sqrt, a); }
Var smooth_abs(Var a) { return tape_of(a).record(OpKind::SmoothAbs, a); }
Var atan2(Var y, Var x) { return tape_of(y).record(OpKind::Atan2, y, x); }
Var min(Var a, Var b) { return tape_of(a).record(OpKind::Min, a, b); }
Var max(Var a, Var b) { return tape_of(a).record(OpKind::Max, a, b); }

// ---- tangent bundle -------------------------------------------------------

Var TangentValue::d(int j) const {
  if (has_tangent) return tangent[static_cast<std::size_t>(j)];
  return tape_of(primal).constant(0.0);
}

namespace {

// Tangent of f(a) given the derivative node df = f'(a).
TangentValue chain(Var value, Var df, const TangentValue& a) {
  TangentValue r{value, {}, a.has_tangent};
  if (a.has_tangent) {
    for (int j = 0; j < 3; ++j) r.tangent[j] = df * a.tangent[j];
  }
  return r;
}

// Tangent of f(a, b) given partial nodes.
TangentValue chain2(Var value, Var da, const TangentValue& a, Var db, const TangentValue& b) {
  TangentValue r{value, {}, a.has_tangent || b.has_tangent};
  for (int j = 0; j < 3 && r.has_tangent; ++j) {
    if (a.has_tangent && b.has_tangent) {
      r.tangent[j] = da * a.tangent[j] + db * b.tangent[j];
    } else if (a.has_tangent) {
      r.tangent[j] = da * a.tangent[j];
    } else {
      r.tangent[j] = db * b.tangent[j];
    }
  }
  return r;
}

}  // namespace

TangentValue operator+(const TangentValue& a, const TangentValue& b) {
  TangentValue r{a.primal + b.primal, {}, a.has_tangent || b.has_tangent};
  for (int j = 0; j < 3 && r.has_tangent; ++j) {
    if (a.has_tangent && b.has_tangent) {
      r.tangent[j] = a.tangent[j] + b.tangent[j];
    } else {
      r.tangent[j] = a.has_tangent ? a.tangent[j] : b.tangent[j];
    }
  }
  return r;
}

TangentValue operator-(const TangentValue& a) {
  TangentValue r{-a.primal, {}, a.has_tangent};
  for (int j = 0; j < 3 && r.has_tangent; ++j) r.tangent[j] = -a.tangent[j];
  return r;
}

TangentValue operator-(const TangentValue& a, const TangentValue& b) {
  TangentValue r{a.primal - b.primal, {}, a.has_tangent || b.has_tangent};
  for (int j = 0; j < 3 && r.has_tangent; ++j) {
    if (a.has_tangent && b.has_tangent) {
      r.tangent[j] = a.tangent[j] - b.tangent[j];
    } else {
      r.tangent[j] = a.has_tangent ? a.tangent[j] : -b.tangent[j];
    }
  }
  return r;
}

TangentValue operator*(const TangentValue& a, const TangentValue& b) {
  return chain2(a.primal * b.primal, b.primal, a, a.primal, b);
}

TangentValue operator/(const TangentValue& a, const TangentValue& b) {
  const Var q = a.primal / b.primal;
  if (!b.has_tangent) return chain(q, 1.0 / b.primal, a);
  // d(a/b) = (da - q db) / b
  const Var inv = 1.0 / b.primal;
  return chain2(q, inv, a, -(q * inv), b);
}

TangentValue operator+(const TangentValue& a, double b) {
  TangentValue r = a;
  r.primal = a.primal + b;
  return r;
}
TangentValue operator+(double a, const TangentValue& b) { return b + a; }
TangentValue operator-(const TangentValue& a, double b) { return a + (-b); }
TangentValue operator-(double a, const TangentValue& b) { return (-b) + a; }

TangentValue operator*(const TangentValue& a, double b) {
  TangentValue r{a.primal * b, {}, a.has_tangent};
  for (int j = 0; j < 3 && r.has_tangent; ++j) r.tangent[j] = a.tangent[j] * b;
  return r;
}
TangentValue operator*(double a, const TangentValue& b) { return b * a; }
TangentValue operator/(const TangentValue& a, double b) { return a * (1.0 / b); }
TangentValue operator/(double a, const TangentValue& b) {
  const Var q = a / b.primal;
  if (!b.has_tangent) return {q, {}, false};
  return chain(q, -(q / b.primal), b);
}

TangentValue sin(const TangentValue& a) { return chain(sin(a.primal), cos(a.primal), a); }
TangentValue cos(const TangentValue& a) { return chain(cos(a.primal), -sin(a.primal), a); }

TangentValue tanh(const TangentValue& a) {
  const Var t = tanh(a.primal);
  if (!a.has_tangent) return {t, {}, false};
  return chain(t, 1.0 - t * t, a);
}

TangentValue exp(const TangentValue& a) {
  const Var e = exp(a.primal);
  return chain(e, e, a);
}

TangentValue log(const TangentValue& a) {
  const Var l = log(a.primal);
  if (!a.has_tangent) return {l, {}, false};
  return chain(l, 1.0 / a.primal, a);
}

TangentValue sqrt(const TangentValue& a) {
  const Var s = sqrt(a.primal);
  if (!a.has_tangent) return {s, {}, false};
  return chain(s, 0.5 / s, a);
}

TangentValue smooth_abs(const TangentValue& a) {
  const Var s = smooth_abs(a.primal);
  if (!a.has_tangent) return {s, {}, false};
  // d/dx (sqrt(x^2+eps^2) - eps) = x / (s + eps)
  return chain(s, a.primal / (s + kSmoothAbsEps), a);
}

TangentValue atan2(const TangentValue& y, const TangentValue& x) {
  const Var v = atan2(y.primal, x.primal);
  if (!y.has_tangent && !x.has_tangent) return {v, {}, false};
  const double r2v = y.value() * y.value() + x.value() * x.value();
  if (r2v == 0.0) {
    Tape& t = *y.tape();
    return {v, {t.constant(0.0), t.constant(0.0), t.constant(0.0)}, true};
  }
  const Var r2 = y.primal * y.primal + x.primal * x.primal;
  return chain2(v, x.primal / r2, y, -(y.primal / r2), x);
}

TangentVec3 seed_coordinates(Tape& tape, const std::array<double, 3>& x) {
  TangentVec3 seeded;
  for (int i = 0; i < 3; ++i) {
    seeded[i].primal = tape.variable(x[i]);
    seeded[i].has_tangent = true;
    for (int j = 0; j < 3; ++j) seeded[i].tangent[j] = tape.constant(i == j ? 1.0 : 0.0);
  }
  return seeded;
}

VarMat3 spatial_jacobian(Tape& tape, const std::function<TangentVec3(const TangentVec3&)>& f,
                         const std::array<double, 3>& x, TangentVec3* output) {
  const TangentVec3 out = f(seed_coordinates(tape, x));
  VarMat3 jac;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) jac[i][j] = out[i].d(j);
  }
  if (output != nullptr) *output = out;
  return jac;
}

}  // namespace myoreg::ad
