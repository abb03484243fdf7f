#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "myoreg/errors.hpp"

namespace myoreg {

using Vec3 = std::array<double, 3>;
using Dims3 = std::array<int, 3>;

inline std::size_t voxel_count(const Dims3& d) {
  return static_cast<std::size_t>(d[0]) * static_cast<std::size_t>(d[1]) * static_cast<std::size_t>(d[2]);
}

// x-fastest linear index.
inline std::size_t linear_index(const Dims3& d, int i, int j, int k) {
  return static_cast<std::size_t>(i) +
         static_cast<std::size_t>(d[0]) * (static_cast<std::size_t>(j) + static_cast<std::size_t>(d[1]) * k);
}

// Voxel (i, j, k) has its centre at ((i + 0.5) s_x, (j + 0.5) s_y, (k + 0.5) s_z).
inline Vec3 voxel_center(const Vec3& spacing, int i, int j, int k) {
  return {(i + 0.5) * spacing[0], (j + 0.5) * spacing[1], (k + 0.5) * spacing[2]};
}

struct BinaryMask {
  Dims3 dims{0, 0, 0};
  std::vector<std::uint8_t> data;  // 0 or 1

  BinaryMask() = default;
  explicit BinaryMask(Dims3 d) : dims(d), data(voxel_count(d), 0) {}

  bool at(int i, int j, int k) const { return data[linear_index(dims, i, j, k)] != 0; }
  void set(int i, int j, int k, bool v) { data[linear_index(dims, i, j, k)] = v ? 1 : 0; }
  std::size_t count() const;
  bool empty() const { return count() == 0; }
};

struct ImageVolume {
  Dims3 dims{0, 0, 0};
  Vec3 spacing{1.0, 1.0, 1.0};  // mm per voxel
  std::vector<float> intensities;  // normalized to [0, 1]
  std::optional<BinaryMask> mask;
  std::vector<Vec3> landmarks;  // physical coordinates

  ImageVolume() = default;
  ImageVolume(Dims3 d, Vec3 s) : dims(d), spacing(s), intensities(voxel_count(d), 0.0f) {}

  float at(int i, int j, int k) const { return intensities[linear_index(dims, i, j, k)]; }
  float& at(int i, int j, int k) { return intensities[linear_index(dims, i, j, k)]; }
  Vec3 extent() const { return {dims[0] * spacing[0], dims[1] * spacing[1], dims[2] * spacing[2]}; }

  // Throws UsageError on non-finite or out-of-range intensities or mismatched mask dims.
  void validate() const;
};

// Ordered cine frames. Frame `reference_index` is the reference (ED) image
// and carries the LV mask; times are normalized to [0, 1].
struct CineSequence {
  std::vector<ImageVolume> frames;
  std::vector<double> times;
  int reference_index = 0;

  const ImageVolume& reference() const { return frames.at(static_cast<std::size_t>(reference_index)); }
  // Throws ConfigError when frames disagree on geometry or times are not increasing.
  void validate() const;
};

}  // namespace myoreg
