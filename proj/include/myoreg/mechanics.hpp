#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <type_traits>

#include "myoreg/autodiff.hpp"
#include "myoreg/errors.hpp"

namespace myoreg {

template <class S>
using Matrix3 = std::array<std::array<S, 3>, 3>;

struct MaterialParams {
  double lambda = 1e5;  // volume-penalty weight
};

// Thrown by neo_hookean_energy when det F <= 0.
class InvertedElementError : public std::runtime_error {
 public:
  InvertedElementError(double jacobian, std::optional<std::array<double, 3>> position)
      : std::runtime_error(message(jacobian, position)), jacobian_(jacobian), position_(position) {}
  double jacobian() const noexcept { return jacobian_; }
  const std::optional<std::array<double, 3>>& position() const noexcept { return position_; }

 private:
  static std::string message(double j, const std::optional<std::array<double, 3>>& p) {
    std::string m = "inverted element: det F = " + std::to_string(j);
    if (p) m += " at (" + std::to_string((*p)[0]) + ", " + std::to_string((*p)[1]) + ", " + std::to_string((*p)[2]) + ")";
    return m;
  }
  double jacobian_;
  std::optional<std::array<double, 3>> position_;
};

template <class S>
struct DeformationState {
  Matrix3<S> F;
  Matrix3<S> C;  // F^T F
  S J;           // det F
};

// C = F^T F and J = det F by cofactor expansion along the first row.
template <class S>
DeformationState<S> deformation_state(const Matrix3<S>& F) {
  DeformationState<S> st{F, {}, {}};
  for (int i = 0; i < 3; ++i) {
    for (int j = i; j < 3; ++j) {
      S acc = F[0][i] * F[0][j];
      acc = acc + F[1][i] * F[1][j];
      acc = acc + F[2][i] * F[2][j];
      st.C[i][j] = acc;
      st.C[j][i] = acc;
    }
  }
  const S c0 = F[1][1] * F[2][2] - F[1][2] * F[2][1];
  const S c1 = F[1][2] * F[2][0] - F[1][0] * F[2][2];
  const S c2 = F[1][0] * F[2][1] - F[1][1] * F[2][0];
  st.J = F[0][0] * c0 + F[0][1] * c1 + F[0][2] * c2;
  return st;
}

// W = tr C - 3 - 2 log J + lambda (J - 1)^2.
template <class S>
S neo_hookean_energy(const DeformationState<S>& st, const MaterialParams& mat,
                     std::optional<std::array<double, 3>> position = std::nullopt) {
  using std::log;
  double j_value;
  if constexpr (std::is_same_v<S, double>) {
    j_value = st.J;
  } else {
    j_value = st.J.value();
  }
  if (!(j_value > 0.0)) throw InvertedElementError(j_value, position);
  const S trace = st.C[0][0] + st.C[1][1] + st.C[2][2];
  const S dj = st.J - 1.0;
  return trace - 3.0 - 2.0 * log(st.J) + mat.lambda * (dj * dj);
}

// Replacement energy for J <= 0 during training: 1e6 (1 + J^2).
inline constexpr double kInversionPenaltyScale = 1e6;

template <class S>
S inversion_penalty(const S& jacobian) {
  return kInversionPenaltyScale * (1.0 + jacobian * jacobian);
}

// Closed-form energy and dW/dF for the batched training path. Inverted
// samples (J <= 0) use the penalty and are flagged.
struct EnergyWithGradient {
  double energy = 0.0;
  Matrix3<double> dF{};
  double jacobian = 1.0;
  bool inverted = false;
};
EnergyWithGradient neo_hookean_with_gradient(const Matrix3<double>& F, const MaterialParams& mat);

// Cofactor matrix: d det F / d F.
Matrix3<double> cofactor(const Matrix3<double>& F);

}  // namespace myoreg
