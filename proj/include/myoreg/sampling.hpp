#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "myoreg/autodiff.hpp"
#include "myoreg/model.hpp"
#include "myoreg/volume.hpp"

namespace myoreg {

namespace detail {
inline double value_of(double v) { return v; }
inline double value_of(const ad::Var& v) { return v.value(); }
inline double value_of(const ad::TangentValue& v) { return v.value(); }
inline double constant_like(double, double v) { return v; }
inline ad::Var constant_like(const ad::Var& ref, double v) { return ref.tape()->constant(v); }
inline ad::TangentValue constant_like(const ad::TangentValue& ref, double v) {
  return ad::TangentValue::constant(*ref.tape(), v);
}
}  // namespace detail

// Trilinear interpolation at a physical point with border replication.
// Differentiable in p for every scalar type; clamped axes contribute no derivative.
template <class S>
S trilinear_sample(const ImageVolume& vol, const std::array<S, 3>& p) {
  std::array<int, 3> base{};
  std::array<S, 3> frac;
  for (int a = 0; a < 3; ++a) {
    const double pv = detail::value_of(p[a]);
    if (!std::isfinite(pv)) throw UsageError("trilinear_sample: non-finite coordinate");
    const int n = vol.dims[a];
    const double qv = pv / vol.spacing[a] - 0.5;
    if (n == 1) {
      base[a] = 0;
      frac[a] = detail::constant_like(p[a], 0.0);
      continue;
    }
    if (qv <= 0.0) {
      base[a] = 0;
      frac[a] = detail::constant_like(p[a], 0.0);
    } else if (qv >= n - 1) {
      base[a] = n - 2;
      frac[a] = detail::constant_like(p[a], 1.0);
    } else {
      base[a] = std::min(static_cast<int>(std::floor(qv)), n - 2);
      frac[a] = p[a] * (1.0 / vol.spacing[a]) - (0.5 + base[a]);
    }
  }
  auto corner = [&](int di, int dj, int dk) -> double {
    const int i = std::min(base[0] + di, vol.dims[0] - 1);
    const int j = std::min(base[1] + dj, vol.dims[1] - 1);
    const int k = std::min(base[2] + dk, vol.dims[2] - 1);
    return static_cast<double>(vol.at(i, j, k));
  };
  const double v000 = corner(0, 0, 0), v100 = corner(1, 0, 0), v010 = corner(0, 1, 0), v110 = corner(1, 1, 0);
  const double v001 = corner(0, 0, 1), v101 = corner(1, 0, 1), v011 = corner(0, 1, 1), v111 = corner(1, 1, 1);
  const S c00 = frac[0] * (v100 - v000) + v000;
  const S c10 = frac[0] * (v110 - v010) + v010;
  const S c01 = frac[0] * (v101 - v001) + v001;
  const S c11 = frac[0] * (v111 - v011) + v011;
  const S c0 = c00 + frac[1] * (c10 - c00);
  const S c1 = c01 + frac[1] * (c11 - c01);
  return c0 + frac[2] * (c1 - c0);
}

// Value and physical-coordinate gradient, same convention as trilinear_sample.
struct SampleWithGradient {
  double value = 0.0;
  Vec3 gradient{0.0, 0.0, 0.0};
};
SampleWithGradient trilinear_sample_with_gradient(const ImageVolume& vol, const Vec3& p);

using PointMap = std::function<Vec3(const Vec3&)>;

// Pulls a template mask back onto the reference grid: out(X) = mask(phi(X)),
// nearest neighbour; points mapped outside the grid are background.
BinaryMask warp_mask(const BinaryMask& mask, const Vec3& spacing, const PointMap& phi);
BinaryMask warp_mask(const BinaryMask& mask, const Vec3& spacing, const DeformationModel& model, double t);

std::vector<Vec3> warp_landmarks(std::span<const Vec3> landmarks, const DeformationModel& model, double t);

}  // namespace myoreg
