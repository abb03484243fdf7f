#pragma once

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "myoreg/mechanics.hpp"
#include "myoreg/model.hpp"
#include "myoreg/training.hpp"
#include "myoreg/volume.hpp"

namespace myoreg {

// One z-slice of a mask, x-fastest.
struct MaskSlice {
  int nx = 0;
  int ny = 0;
  std::vector<std::uint8_t> data;

  bool at(int i, int j) const { return data[static_cast<std::size_t>(i + nx * j)] != 0; }
  std::size_t count() const;
};

MaskSlice extract_slice(const BinaryMask& mask, int k);

// 2|a n b| / (|a| + |b|); 1 when both are empty.
double dice(const BinaryMask& a, const BinaryMask& b);
double dice(const MaskSlice& a, const MaskSlice& b);

// Centres of mask pixels with at least one background 4-neighbour (pixels off
// the slice count as background), in millimetres.
std::vector<std::array<double, 2>> contour_points(const MaskSlice& m, std::array<double, 2> spacing);

// Symmetric mean of directed nearest-contour distances. nullopt when either
// mask is empty.
std::optional<double> mean_contour_distance(const MaskSlice& a, const MaskSlice& b, std::array<double, 2> spacing);

// Indices floor(z_min + q (z_max - z_min) + 0.5) for q = 0.25, 0.5, 0.75.
std::array<int, 3> slice_levels(const BinaryMask& mask);

std::vector<double> landmark_tracking_error(std::span<const Vec3> predicted, std::span<const Vec3> truth);

struct JacobianStats {
  double mean_abs_deviation = 0.0;  // mean |det F - 1|
  double inversion_fraction = 0.0;  // share of samples with det F <= 0
  std::size_t samples = 0;
};

using GradientField = std::function<Matrix3<double>(const Vec3&)>;

// Over the voxel centres of `mask`, optionally restricted to slice k.
JacobianStats jacobian_deviation(const DeformationModel& model, const BinaryMask& mask, const Vec3& spacing, double t,
                                 std::optional<int> slice = std::nullopt);
JacobianStats jacobian_deviation(const GradientField& field, const BinaryMask& mask, const Vec3& spacing,
                                 std::optional<int> slice = std::nullopt);

struct SliceMetrics {
  int slice = 0;
  double dsc = 0.0;
  std::optional<double> mcd;
  double jac_dev = 0.0;
};

struct MetricsRecord {
  int frame = 0;
  double t = 0.0;
  std::array<SliceMetrics, 3> levels{};  // basal, mid, apical
  double dsc = 0.0;                       // whole volume
  double jac_dev = 0.0;                   // whole reference mask
  double inversion_fraction = 0.0;
  std::vector<double> landmark_errors;
  std::vector<double> landmark_baseline;  // identity map

  double mean_landmark_error() const;
  double mean_landmark_baseline() const;
};

// Compares the frame mask pulled back through phi(., t_frame) with the
// reference mask; landmarks are carried forward from the reference frame.
MetricsRecord evaluate(const DeformationModel& model, const CineSequence& seq, int frame_index);

struct SweepPoint {
  double mu = 0.0;
  double lambda = 0.0;
};

struct SweepRow {
  SweepPoint point;
  MetricsRecord metrics;
};

// One training run per point, evaluated on `frame_index`; rows sorted by
// ascending whole-mask jac_dev (stable).
std::vector<SweepRow> grid_sweep(const NetworkConfig& network, const CineSequence& seq, const TrainConfig& base,
                                 std::span<const SweepPoint> grid, int frame_index);

// Samples of a vector field on a regular grid, component-interleaved per voxel.
struct SampledField {
  Dims3 dims{0, 0, 0};
  int components = 1;
  std::vector<double> values;

  double& at(std::size_t voxel, int c) { return values[voxel * static_cast<std::size_t>(components) + c]; }
  double at(std::size_t voxel, int c) const { return values[voxel * static_cast<std::size_t>(components) + c]; }
};

struct BandEnergyReport {
  std::vector<double> band_edges;  // lower edges, cycles per domain; last band is open
  std::vector<std::string> variants;
  std::vector<std::vector<double>> energies;  // [variant][band]
  std::vector<double> totals;                 // mean squared residual per variant
};

// Radial frequency in cycles per domain of DFT bin (kx, ky, kz).
double radial_frequency(const Dims3& dims, int kx, int ky, int kz);

// Band energies (Parseval-normalized: they sum to the mean squared value) of one field.
std::vector<double> band_energies(const SampledField& field, std::span<const double> band_edges);

// Residual fitted - target per variant, reduced to band energies.
BandEnergyReport spectral_report(const SampledField& target, std::span<const std::string> variants,
                                 std::span<const SampledField> fitted, std::span<const double> band_edges);

}  // namespace myoreg
