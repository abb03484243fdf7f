#include "myoreg/mechanics.hpp"

namespace myoreg {

Matrix3<double> cofactor(const Matrix3<double>& F) {
  Matrix3<double> c;
  c[0][0] = F[1][1] * F[2][2] - F[1][2] * F[2][1];
  c[0][1] = F[1][2] * F[2][0] - F[1][0] * F[2][2];
  c[0][2] = F[1][0] * F[2][1] - F[1][1] * F[2][0];
  c[1][0] = F[0][2] * F[2][1] - F[0][1] * F[2][2];
  c[1][1] = F[0][0] * F[2][2] - F[0][2] * F[2][0];
  c[1][2] = F[0][1] * F[2][0] - F[0][0] * F[2][1];
  c[2][0] = F[0][1] * F[1][2] - F[0][2] * F[1][1];
  c[2][1] = F[0][2] * F[1][0] - F[0][0] * F[1][2];
  c[2][2] = F[0][0] * F[1][1] - F[0][1] * F[1][0];
  return c;
}

EnergyWithGradient neo_hookean_with_gradient(const Matrix3<double>& F, const MaterialParams& mat) {
  const DeformationState<double> st = deformation_state(F);
  const Matrix3<double> cof = cofactor(F);
  EnergyWithGradient r;
  r.jacobian = st.J;
  if (!(st.J > 0.0)) {
    r.inverted = true;
    r.energy = inversion_penalty(st.J);
    const double scale = 2.0 * kInversionPenaltyScale * st.J;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) r.dF[i][j] = scale * cof[i][j];
    }
    return r;
  }
  r.energy = neo_hookean_energy(st, mat);
  // dW/dF = 2F - (2/J) cof F + 2 lambda (J - 1) cof F
  const double cof_scale = -2.0 / st.J + 2.0 * mat.lambda * (st.J - 1.0);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) r.dF[i][j] = 2.0 * F[i][j] + cof_scale * cof[i][j];
  }
  return r;
}

}  // namespace myoreg
