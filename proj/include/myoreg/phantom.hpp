#pragma once

// Synthetic incompressible "LV" phantom: a textured annular tube about the
// domain's z-axis that contracts and twists over the cycle.
//
// Base map (cylindrical about the axis): r' = sqrt(r^2 - c(t)),
// theta' = theta + rho(t), z' = z. Since r' dr' = r dr it preserves volume
// exactly. An optional in-plane curl overlay of amplitude a_hf and k_hf
// cycles per domain is applied first (in reference coordinates).

#include <array>
#include <cstdint>
#include <vector>

#include "myoreg/mechanics.hpp"
#include "myoreg/volume.hpp"

namespace myoreg {

struct PhantomSpec {
  Dims3 dims{64, 64, 64};
  Vec3 spacing{1.0, 1.0, 1.0};
  int frames = 8;
  double r_inner = 12.0;           // mm
  double r_outer = 20.0;           // mm
  double contraction = 70.0;       // c_max, mm^2
  double twist = 0.2;              // rho at t = 1, radians
  double hf_amplitude = 0.0;       // a_hf, mm
  double hf_cycles = 8.0;          // k_hf, cycles per domain
  double z_begin_fraction = 0.15;  // tube extent along z
  double z_end_fraction = 0.85;
  double texture_max_cycles = 6.0;  // texture band limit, cycles per domain
  int texture_modes = 32;
  int landmark_count = 12;

  Vec3 extent() const { return {dims[0] * spacing[0], dims[1] * spacing[1], dims[2] * spacing[2]}; }
  // Throws ConfigError when the geometry is inconsistent.
  void validate() const;
};

struct AnalyticDeformation {
  Vec3 displacement{};
  double jacobian = 1.0;
  bool in_core = false;  // r^2 <= c(t): degenerate region collapsed onto the axis
};

// Closed-form ground truth for one PhantomSpec.
class PhantomField {
 public:
  PhantomField(const PhantomSpec& spec, std::uint64_t texture_seed);

  // Smooth ramp s(t) = (1 - cos(pi t)) / 2.
  static double ramp(double t);
  double contraction_at(double t) const;
  double twist_at(double t) const;

  Vec3 map(const Vec3& x, double t) const;      // phi_t(X)
  Vec3 inverse(const Vec3& y, double t) const;  // phi_t^-1(y)
  Matrix3<double> gradient(const Vec3& x, double t) const;
  AnalyticDeformation deformation(const Vec3& x, double t) const;

  // Reference-configuration intensity and LV membership.
  double intensity(const Vec3& x) const;
  bool in_wall(const Vec3& x) const;

  const PhantomSpec& spec() const { return spec_; }
  Vec3 axis() const { return {0.5 * extent_[0], 0.5 * extent_[1], 0.0}; }

 private:
  Vec3 overlay(const Vec3& x, double t) const;
  Vec3 overlay_inverse(const Vec3& y, double t) const;
  Vec3 base(const Vec3& x, double t) const;
  Vec3 base_inverse(const Vec3& y, double t) const;

  struct Mode {
    Vec3 wave;  // radians per mm
    double phase;
  };
  double noise(const std::vector<Mode>& modes, const Vec3& x) const;

  PhantomSpec spec_;
  Vec3 extent_;
  double z_begin_, z_end_;
  std::array<std::vector<Mode>, 2> texture_;
};

// Free-function form of PhantomField::deformation.
AnalyticDeformation analytic_deformation(const PhantomSpec& spec, const Vec3& x, double t);

struct Phantom {
  PhantomSpec spec;
  std::uint64_t seed = 0;
  CineSequence sequence;  // frame i carries its mask and ground-truth landmarks
  PhantomField field;
};

// Frame i is frame 0 pulled back through phi_{t_i}^-1, evaluated analytically.
Phantom generate_sequence(const PhantomSpec& spec, std::uint64_t seed);

}  // namespace myoreg
