#include "myoreg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>

#include <fftw3.h>

#include "myoreg/batch.hpp"
#include "myoreg/sampling.hpp"

namespace myoreg {

std::size_t MaskSlice::count() const {
  return static_cast<std::size_t>(std::count_if(data.begin(), data.end(), [](std::uint8_t v) { return v != 0; }));
}

MaskSlice extract_slice(const BinaryMask& mask, int k) {
  if (k < 0 || k >= mask.dims[2]) throw UsageError("extract_slice: slice index out of range");
  MaskSlice s{mask.dims[0], mask.dims[1], {}};
  const std::size_t n = static_cast<std::size_t>(s.nx) * static_cast<std::size_t>(s.ny);
  const auto first = mask.data.begin() + static_cast<std::ptrdiff_t>(n * static_cast<std::size_t>(k));
  s.data.assign(first, first + static_cast<std::ptrdiff_t>(n));
  return s;
}

namespace {

double dice_counts(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  std::size_t na = 0, nb = 0, both = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a[i] != 0, y = b[i] != 0;
    na += x;
    nb += y;
    both += x && y;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

// Uniform bucket grid over contour points for exact nearest-neighbour queries.
class ContourIndex {
 public:
  ContourIndex(const std::vector<std::array<double, 2>>& pts, std::array<double, 2> extent, double cell)
      : pts_(pts), cell_(cell) {
    nx_ = std::max(1, static_cast<int>(std::ceil(extent[0] / cell)));
    ny_ = std::max(1, static_cast<int>(std::ceil(extent[1] / cell)));
    buckets_.resize(static_cast<std::size_t>(nx_ * ny_));
    for (std::size_t i = 0; i < pts.size(); ++i) buckets_[bucket(cell_x(pts[i][0]), cell_y(pts[i][1]))].push_back(i);
  }

  double nearest(const std::array<double, 2>& q) const {
    const int cx = cell_x(q[0]), cy = cell_y(q[1]);
    double best = std::numeric_limits<double>::infinity();
    const int max_ring = std::max(nx_, ny_);
    for (int r = 0; r <= max_ring; ++r) {
      for (int j = cy - r; j <= cy + r; ++j) {
        if (j < 0 || j >= ny_) continue;
        const bool edge_row = j == cy - r || j == cy + r;
        for (int i = cx - r; i <= cx + r; i += (edge_row || r == 0) ? 1 : 2 * r) {
          if (i < 0 || i >= nx_) continue;
          for (std::size_t p : buckets_[bucket(i, j)]) {
            best = std::min(best, std::hypot(pts_[p][0] - q[0], pts_[p][1] - q[1]));
          }
        }
      }
      // Anything outside ring r is at least r cells away.
      if (best <= r * cell_) break;
    }
    return best;
  }

 private:
  int cell_x(double x) const { return std::clamp(static_cast<int>(std::floor(x / cell_)), 0, nx_ - 1); }
  int cell_y(double y) const { return std::clamp(static_cast<int>(std::floor(y / cell_)), 0, ny_ - 1); }
  std::size_t bucket(int i, int j) const { return static_cast<std::size_t>(i + nx_ * j); }

  const std::vector<std::array<double, 2>>& pts_;
  double cell_;
  int nx_ = 1, ny_ = 1;
  std::vector<std::vector<std::size_t>> buckets_;
};

double directed_mean(const std::vector<std::array<double, 2>>& from, const std::vector<std::array<double, 2>>& to,
                     std::array<double, 2> extent, double cell) {
  const ContourIndex index(to, extent, cell);
  double sum = 0.0;
  for (const auto& p : from) sum += index.nearest(p);
  return sum / static_cast<double>(from.size());
}

void check_same_dims(const Dims3& a, const Dims3& b, const char* what) {
  if (a != b) throw UsageError(std::string(what) + ": mask dimensions differ");
}

}  // namespace

double dice(const BinaryMask& a, const BinaryMask& b) {
  check_same_dims(a.dims, b.dims, "dice");
  return dice_counts(a.data, b.data);
}

double dice(const MaskSlice& a, const MaskSlice& b) {
  if (a.nx != b.nx || a.ny != b.ny) throw UsageError("dice: slice dimensions differ");
  return dice_counts(a.data, b.data);
}

std::vector<std::array<double, 2>> contour_points(const MaskSlice& m, std::array<double, 2> spacing) {
  std::vector<std::array<double, 2>> out;
  auto inside = [&](int i, int j) { return i >= 0 && j >= 0 && i < m.nx && j < m.ny && m.at(i, j); };
  for (int j = 0; j < m.ny; ++j) {
    for (int i = 0; i < m.nx; ++i) {
      if (!m.at(i, j)) continue;
      if (!inside(i - 1, j) || !inside(i + 1, j) || !inside(i, j - 1) || !inside(i, j + 1)) {
        out.push_back({(i + 0.5) * spacing[0], (j + 0.5) * spacing[1]});
      }
    }
  }
  return out;
}

std::optional<double> mean_contour_distance(const MaskSlice& a, const MaskSlice& b, std::array<double, 2> spacing) {
  if (a.nx != b.nx || a.ny != b.ny) throw UsageError("mean_contour_distance: slice dimensions differ");
  const auto ca = contour_points(a, spacing);
  const auto cb = contour_points(b, spacing);
  if (ca.empty() || cb.empty()) return std::nullopt;
  const std::array<double, 2> extent{a.nx * spacing[0], a.ny * spacing[1]};
  const double cell = 8.0 * std::max(spacing[0], spacing[1]);
  return 0.5 * (directed_mean(ca, cb, extent, cell) + directed_mean(cb, ca, extent, cell));
}

std::array<int, 3> slice_levels(const BinaryMask& mask) {
  int z_min = std::numeric_limits<int>::max(), z_max = -1;
  for (int k = 0; k < mask.dims[2]; ++k) {
    for (int j = 0; j < mask.dims[1] && (k < z_min || k > z_max); ++j) {
      for (int i = 0; i < mask.dims[0]; ++i) {
        if (mask.at(i, j, k)) {
          z_min = std::min(z_min, k);
          z_max = std::max(z_max, k);
          break;
        }
      }
    }
  }
  if (z_max < 0) throw UsageError("slice_levels: empty mask");
  std::array<int, 3> out{};
  const double q[3] = {0.25, 0.5, 0.75};
  for (int l = 0; l < 3; ++l) out[l] = static_cast<int>(std::floor(z_min + q[l] * (z_max - z_min) + 0.5));
  return out;
}

std::vector<double> landmark_tracking_error(std::span<const Vec3> predicted, std::span<const Vec3> truth) {
  if (predicted.size() != truth.size()) throw UsageError("landmark_tracking_error: landmark counts differ");
  std::vector<double> out(predicted.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double dx = predicted[i][0] - truth[i][0];
    const double dy = predicted[i][1] - truth[i][1];
    const double dz = predicted[i][2] - truth[i][2];
    out[i] = std::sqrt(dx * dx + dy * dy + dz * dz);
  }
  return out;
}

namespace {

std::vector<Vec3> mask_centres(const BinaryMask& mask, const Vec3& spacing, std::optional<int> slice) {
  std::vector<Vec3> pts;
  const int k0 = slice ? *slice : 0;
  const int k1 = slice ? *slice + 1 : mask.dims[2];
  if (slice && (*slice < 0 || *slice >= mask.dims[2])) throw UsageError("jacobian_deviation: slice out of range");
  for (int k = k0; k < k1; ++k) {
    for (int j = 0; j < mask.dims[1]; ++j) {
      for (int i = 0; i < mask.dims[0]; ++i) {
        if (mask.at(i, j, k)) pts.push_back(voxel_center(spacing, i, j, k));
      }
    }
  }
  return pts;
}

JacobianStats summarize(const std::vector<Matrix3<double>>& grads) {
  JacobianStats s;
  s.samples = grads.size();
  if (grads.empty()) throw UsageError("jacobian_deviation: empty mask");
  std::size_t inverted = 0;
  for (const auto& F : grads) {
    const double J = deformation_state(F).J;
    s.mean_abs_deviation += std::abs(J - 1.0);
    inverted += J <= 0.0;
  }
  s.mean_abs_deviation /= static_cast<double>(grads.size());
  s.inversion_fraction = static_cast<double>(inverted) / static_cast<double>(grads.size());
  return s;
}

}  // namespace

JacobianStats jacobian_deviation(const DeformationModel& model, const BinaryMask& mask, const Vec3& spacing, double t,
                                 std::optional<int> slice) {
  return summarize(deformation_gradients(model, mask_centres(mask, spacing, slice), t));
}

JacobianStats jacobian_deviation(const GradientField& field, const BinaryMask& mask, const Vec3& spacing,
                                 std::optional<int> slice) {
  const std::vector<Vec3> pts = mask_centres(mask, spacing, slice);
  std::vector<Matrix3<double>> grads;
  grads.reserve(pts.size());
  for (const Vec3& p : pts) grads.push_back(field(p));
  return summarize(grads);
}

double MetricsRecord::mean_landmark_error() const {
  if (landmark_errors.empty()) return 0.0;
  return std::accumulate(landmark_errors.begin(), landmark_errors.end(), 0.0) /
         static_cast<double>(landmark_errors.size());
}

double MetricsRecord::mean_landmark_baseline() const {
  if (landmark_baseline.empty()) return 0.0;
  return std::accumulate(landmark_baseline.begin(), landmark_baseline.end(), 0.0) /
         static_cast<double>(landmark_baseline.size());
}

MetricsRecord evaluate(const DeformationModel& model, const CineSequence& seq, int frame_index) {
  seq.validate();
  if (frame_index < 0 || static_cast<std::size_t>(frame_index) >= seq.frames.size()) {
    throw UsageError("evaluate: frame index out of range");
  }
  const ImageVolume& ref = seq.reference();
  const ImageVolume& frame = seq.frames[static_cast<std::size_t>(frame_index)];
  if (!frame.mask) throw UsageError("evaluate: frame carries no mask");
  const BinaryMask& ref_mask = *ref.mask;
  MetricsRecord rec;
  rec.frame = frame_index;
  rec.t = seq.times[static_cast<std::size_t>(frame_index)];

  const BinaryMask warped = warp_mask(*frame.mask, ref.spacing, model, rec.t);
  rec.dsc = dice(warped, ref_mask);
  const std::array<int, 3> levels = slice_levels(ref_mask);
  const std::array<double, 2> spacing2{ref.spacing[0], ref.spacing[1]};
  for (int l = 0; l < 3; ++l) {
    SliceMetrics& s = rec.levels[l];
    s.slice = levels[l];
    const MaskSlice a = extract_slice(warped, s.slice);
    const MaskSlice b = extract_slice(ref_mask, s.slice);
    s.dsc = dice(a, b);
    s.mcd = mean_contour_distance(a, b, spacing2);
    s.jac_dev = jacobian_deviation(model, ref_mask, ref.spacing, rec.t, s.slice).mean_abs_deviation;
  }
  const JacobianStats all = jacobian_deviation(model, ref_mask, ref.spacing, rec.t);
  rec.jac_dev = all.mean_abs_deviation;
  rec.inversion_fraction = all.inversion_fraction;
  if (!ref.landmarks.empty()) {
    const std::vector<Vec3> moved = warp_landmarks(ref.landmarks, model, rec.t);
    rec.landmark_errors = landmark_tracking_error(moved, frame.landmarks);
    rec.landmark_baseline = landmark_tracking_error(ref.landmarks, frame.landmarks);
  }
  return rec;
}

std::vector<SweepRow> grid_sweep(const NetworkConfig& network, const CineSequence& seq, const TrainConfig& base,
                                 std::span<const SweepPoint> grid, int frame_index) {
  if (grid.empty()) throw UsageError("grid_sweep: empty grid");
  std::vector<SweepRow> rows;
  for (const SweepPoint& p : grid) {
    TrainConfig cfg = base;
    cfg.mu = p.mu;
    cfg.lambda = p.lambda;
    const TrainResult r = train(network, seq, cfg);
    rows.push_back({p, evaluate(r.model, seq, frame_index)});
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const SweepRow& a, const SweepRow& b) { return a.metrics.jac_dev < b.metrics.jac_dev; });
  return rows;
}

double radial_frequency(const Dims3& dims, int kx, int ky, int kz) {
  auto signed_bin = [](int k, int n) { return static_cast<double>(k <= n / 2 ? k : k - n); };
  const double fx = signed_bin(kx, dims[0]), fy = signed_bin(ky, dims[1]), fz = signed_bin(kz, dims[2]);
  return std::sqrt(fx * fx + fy * fy + fz * fz);
}

std::vector<double> band_energies(const SampledField& field, std::span<const double> band_edges) {
  if (band_edges.empty() || band_edges[0] != 0.0) throw UsageError("band_energies: first band edge must be 0");
  for (std::size_t b = 1; b < band_edges.size(); ++b) {
    if (!(band_edges[b] > band_edges[b - 1])) throw UsageError("band_energies: band edges must increase");
  }
  const std::size_t n = voxel_count(field.dims);
  if (field.values.size() != n * static_cast<std::size_t>(field.components)) {
    throw UsageError("band_energies: value count does not match dims");
  }
  std::vector<double> energy(band_edges.size(), 0.0);
  const double norm = 1.0 / (static_cast<double>(n) * static_cast<double>(n));
  for (int c = 0; c < field.components; ++c) {
    std::vector<std::complex<double>> data(n);
    for (std::size_t v = 0; v < n; ++v) data[v] = field.at(v, c);
    auto* buf = reinterpret_cast<fftw_complex*>(data.data());
    const fftw_plan plan =
        fftw_plan_dft_3d(field.dims[2], field.dims[1], field.dims[0], buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
    fftw_execute(plan);
    fftw_destroy_plan(plan);
    for (int k = 0; k < field.dims[2]; ++k) {
      for (int j = 0; j < field.dims[1]; ++j) {
        for (int i = 0; i < field.dims[0]; ++i) {
          const double f = radial_frequency(field.dims, i, j, k);
          const auto it = std::upper_bound(band_edges.begin(), band_edges.end(), f);
          const std::size_t band = static_cast<std::size_t>(it - band_edges.begin()) - 1;
          energy[band] += std::norm(data[linear_index(field.dims, i, j, k)]) * norm;
        }
      }
    }
  }
  return energy;
}

BandEnergyReport spectral_report(const SampledField& target, std::span<const std::string> variants,
                                 std::span<const SampledField> fitted, std::span<const double> band_edges) {
  if (variants.size() != fitted.size()) throw UsageError("spectral_report: one field per variant required");
  BandEnergyReport rep;
  rep.band_edges.assign(band_edges.begin(), band_edges.end());
  for (std::size_t v = 0; v < fitted.size(); ++v) {
    const SampledField& f = fitted[v];
    if (f.dims != target.dims || f.components != target.components) {
      throw UsageError("spectral_report: fields must share a grid");
    }
    SampledField residual = f;
    double total = 0.0;
    for (std::size_t i = 0; i < residual.values.size(); ++i) {
      residual.values[i] -= target.values[i];
      total += residual.values[i] * residual.values[i];
    }
    rep.variants.push_back(variants[v]);
    rep.energies.push_back(band_energies(residual, band_edges));
    rep.totals.push_back(total / static_cast<double>(voxel_count(target.dims)));
  }
  return rep;
}

}  // namespace myoreg
