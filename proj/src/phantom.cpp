#include "myoreg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace myoreg {

namespace {
constexpr double kPi = std::numbers::pi;

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

void PhantomSpec::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 2) throw ConfigError("phantom: every dimension needs at least 2 voxels");
    if (!(spacing[a] > 0.0)) throw ConfigError("phantom: spacing must be positive");
  }
  const Vec3 e = extent();
  const double half = 0.5 * std::min(e[0], e[1]);
  if (!(r_inner > 0.0 && r_inner < r_outer && r_outer < half)) {
    throw ConfigError("phantom: need 0 < r_inner < r_outer < half the in-plane extent");
  }
  if (!(contraction >= 0.0 && contraction < r_inner * r_inner)) {
    throw ConfigError("phantom: contraction must lie in [0, r_inner^2)");
  }
  if (frames < 2) throw ConfigError("phantom: at least two frames required");
  if (!(z_begin_fraction >= 0.0 && z_begin_fraction < z_end_fraction && z_end_fraction <= 1.0)) {
    throw ConfigError("phantom: z fractions must satisfy 0 <= begin < end <= 1");
  }
  if (hf_amplitude < 0.0 || hf_cycles <= 0.0) throw ConfigError("phantom: invalid high-frequency overlay");
  if (texture_modes < 1 || !(texture_max_cycles >= 1.0)) throw ConfigError("phantom: invalid texture settings");
  if (landmark_count < 0) throw ConfigError("phantom: landmark count must be non-negative");
}

PhantomField::PhantomField(const PhantomSpec& spec, std::uint64_t texture_seed)
    : spec_(spec), extent_(spec.extent()) {
  spec_.validate();
  z_begin_ = spec.z_begin_fraction * extent_[2];
  z_end_ = spec.z_end_fraction * extent_[2];
  std::mt19937_64 rng(texture_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& modes : texture_) {
    modes.resize(static_cast<std::size_t>(spec.texture_modes));
    for (Mode& m : modes) {
      Vec3 dir{normal(rng), normal(rng), normal(rng)};
      const double len = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
      const double cycles = 1.0 + (spec.texture_max_cycles - 1.0) * unit(rng);
      for (int a = 0; a < 3; ++a) m.wave[a] = 2.0 * kPi * cycles * dir[a] / (len * extent_[a]);
      m.phase = 2.0 * kPi * unit(rng);
    }
  }
}

double PhantomField::ramp(double t) { return 0.5 * (1.0 - std::cos(kPi * t)); }
double PhantomField::contraction_at(double t) const { return spec_.contraction * ramp(t); }
double PhantomField::twist_at(double t) const { return spec_.twist * ramp(t); }

Vec3 PhantomField::overlay(const Vec3& x, double t) const {
  if (spec_.hf_amplitude == 0.0) return x;
  const double s = ramp(t);
  const double kx = 2.0 * kPi * spec_.hf_cycles / extent_[0];
  const double ky = 2.0 * kPi * spec_.hf_cycles / extent_[1];
  // u = curl(0, 0, psi) with psi = (a / ky) sin(kx x) sin(ky y): divergence free.
  const double a = spec_.hf_amplitude;
  const double ux = a * std::sin(kx * x[0]) * std::cos(ky * x[1]);
  const double uy = -a * (kx / ky) * std::cos(kx * x[0]) * std::sin(ky * x[1]);
  return {x[0] + s * ux, x[1] + s * uy, x[2]};
}

Vec3 PhantomField::overlay_inverse(const Vec3& y, double t) const {
  if (spec_.hf_amplitude == 0.0) return y;
  Vec3 x = y;
  for (int it = 0; it < 200; ++it) {
    const Vec3 fx = overlay(x, t);
    const double dx = y[0] - fx[0], dy = y[1] - fx[1];
    x[0] += dx;
    x[1] += dy;
    if (std::abs(dx) + std::abs(dy) < 1e-13) break;
  }
  return x;
}

Vec3 PhantomField::base(const Vec3& x, double t) const {
  const Vec3 c = axis();
  const double px = x[0] - c[0], py = x[1] - c[1];
  const double r2 = px * px + py * py;
  const double cc = contraction_at(t);
  if (r2 <= cc) return {c[0], c[1], x[2]};
  const double g = r2 > 0.0 ? std::sqrt(1.0 - cc / r2) : 1.0;
  const double rho = twist_at(t);
  const double cr = std::cos(rho), sr = std::sin(rho);
  return {c[0] + g * (cr * px - sr * py), c[1] + g * (sr * px + cr * py), x[2]};
}

Vec3 PhantomField::base_inverse(const Vec3& y, double t) const {
  const Vec3 c = axis();
  const double qx = y[0] - c[0], qy = y[1] - c[1];
  const double r2 = qx * qx + qy * qy;
  const double cc = contraction_at(t);
  const double rho = twist_at(t);
  const double cr = std::cos(rho), sr = std::sin(rho);
  // Undo the rotation, then r = sqrt(r'^2 + c).
  const double ux = cr * qx + sr * qy, uy = -sr * qx + cr * qy;
  if (r2 == 0.0) return {c[0] + std::sqrt(cc), c[1], y[2]};
  const double g = std::sqrt(1.0 + cc / r2);
  return {c[0] + g * ux, c[1] + g * uy, y[2]};
}

Vec3 PhantomField::map(const Vec3& x, double t) const { return base(overlay(x, t), t); }

Vec3 PhantomField::inverse(const Vec3& y, double t) const { return overlay_inverse(base_inverse(y, t), t); }

Matrix3<double> PhantomField::gradient(const Vec3& x, double t) const {
  // Overlay gradient.
  Matrix3<double> fh{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  if (spec_.hf_amplitude != 0.0) {
    const double s = ramp(t);
    const double kx = 2.0 * kPi * spec_.hf_cycles / extent_[0];
    const double ky = 2.0 * kPi * spec_.hf_cycles / extent_[1];
    const double a = spec_.hf_amplitude;
    const double sx = std::sin(kx * x[0]), cx = std::cos(kx * x[0]);
    const double sy = std::sin(ky * x[1]), cy = std::cos(ky * x[1]);
    fh[0][0] += s * a * kx * cx * cy;
    fh[0][1] += -s * a * ky * sx * sy;
    fh[1][0] += s * a * (kx / ky) * kx * sx * sy;
    fh[1][1] += -s * a * kx * cx * cy;
  }
  // Base gradient at the overlaid point: Rot(rho) (g I + 2 g' p p^T), g' = d g / d r^2.
  const Vec3 h = overlay(x, t);
  const Vec3 c = axis();
  const double px = h[0] - c[0], py = h[1] - c[1];
  const double r2 = px * px + py * py;
  const double cc = contraction_at(t);
  Matrix3<double> fb{{{0, 0, 0}, {0, 0, 0}, {0, 0, 1}}};
  if (r2 > cc) {
    const double g = std::sqrt(1.0 - cc / r2);
    const double gp = cc / (2.0 * r2 * r2 * g);
    const double m00 = g + 2.0 * gp * px * px, m01 = 2.0 * gp * px * py, m11 = g + 2.0 * gp * py * py;
    const double rho = twist_at(t);
    const double cr = std::cos(rho), sr = std::sin(rho);
    fb[0][0] = cr * m00 - sr * m01;
    fb[0][1] = cr * m01 - sr * m11;
    fb[1][0] = sr * m00 + cr * m01;
    fb[1][1] = sr * m01 + cr * m11;
  }
  Matrix3<double> f{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      for (int k = 0; k < 3; ++k) f[i][j] += fb[i][k] * fh[k][j];
    }
  }
  return f;
}

AnalyticDeformation PhantomField::deformation(const Vec3& x, double t) const {
  AnalyticDeformation d;
  const Vec3 y = map(x, t);
  for (int a = 0; a < 3; ++a) d.displacement[a] = y[a] - x[a];
  d.jacobian = deformation_state(gradient(x, t)).J;
  const Vec3 h = overlay(x, t);
  const Vec3 c = axis();
  d.in_core = (h[0] - c[0]) * (h[0] - c[0]) + (h[1] - c[1]) * (h[1] - c[1]) <= contraction_at(t);
  return d;
}

double PhantomField::noise(const std::vector<Mode>& modes, const Vec3& x) const {
  double acc = 0.0;
  for (const Mode& m : modes) acc += std::cos(m.wave[0] * x[0] + m.wave[1] * x[1] + m.wave[2] * x[2] + m.phase);
  return acc / std::sqrt(0.5 * static_cast<double>(modes.size()));
}

bool PhantomField::in_wall(const Vec3& x) const {
  const Vec3 c = axis();
  const double r = std::hypot(x[0] - c[0], x[1] - c[1]);
  return r >= spec_.r_inner && r <= spec_.r_outer && x[2] >= z_begin_ && x[2] <= z_end_;
}

double PhantomField::intensity(const Vec3& x) const {
  const Vec3 c = axis();
  const double r = std::hypot(x[0] - c[0], x[1] - c[1]);
  const double w = 0.5 * std::min({spec_.spacing[0], spec_.spacing[1], spec_.spacing[2]});
  const double zband = logistic((x[2] - z_begin_) / w) * logistic((z_end_ - x[2]) / w);
  const double wall = logistic((r - spec_.r_inner) / w) * logistic((spec_.r_outer - r) / w) * zband;
  const double blood = logistic((spec_.r_inner - r) / w) * zband;
  const double background = 0.45 + 0.12 * noise(texture_[0], x);
  const double myocardium = 0.22 + 0.08 * noise(texture_[1], x);
  const double v = background * (1.0 - wall - blood) + myocardium * wall + 0.85 * blood;
  return std::clamp(v, 0.0, 1.0);
}

AnalyticDeformation analytic_deformation(const PhantomSpec& spec, const Vec3& x, double t) {
  return PhantomField(spec, 0).deformation(x, t);
}

Phantom generate_sequence(const PhantomSpec& spec, std::uint64_t seed) {
  Phantom ph{spec, seed, {}, PhantomField(spec, seed)};
  const PhantomField& field = ph.field;
  const int n_frames = spec.frames;

  // Landmarks on the mid-wall circle, cycling through 25/50/75% of the tube.
  std::vector<Vec3> landmarks;
  const double r_mid = 0.5 * (spec.r_inner + spec.r_outer);
  const Vec3 c = field.axis();
  const double z0 = spec.z_begin_fraction * spec.extent()[2];
  const double z1 = spec.z_end_fraction * spec.extent()[2];
  for (int i = 0; i < spec.landmark_count; ++i) {
    const double theta = 2.0 * kPi * i / spec.landmark_count;
    const double q = 0.25 * (1 + i % 3);
    landmarks.push_back({c[0] + r_mid * std::cos(theta), c[1] + r_mid * std::sin(theta), z0 + q * (z1 - z0)});
  }

  for (int f = 0; f < n_frames; ++f) {
    const double t = static_cast<double>(f) / (n_frames - 1);
    ImageVolume vol(spec.dims, spec.spacing);
    BinaryMask mask(spec.dims);
    for (int k = 0; k < spec.dims[2]; ++k) {
      for (int j = 0; j < spec.dims[1]; ++j) {
        for (int i = 0; i < spec.dims[0]; ++i) {
          const Vec3 y = voxel_center(spec.spacing, i, j, k);
          const Vec3 x = f == 0 ? y : field.inverse(y, t);
          vol.at(i, j, k) = static_cast<float>(field.intensity(x));
          mask.set(i, j, k, field.in_wall(x));
        }
      }
    }
    vol.mask = std::move(mask);
    for (const Vec3& p : landmarks) vol.landmarks.push_back(f == 0 ? p : field.map(p, t));
    ph.sequence.frames.push_back(std::move(vol));
    ph.sequence.times.push_back(t);
  }
  ph.sequence.reference_index = 0;
  return ph;
}

}  // namespace myoreg
