#include "myoreg/sampling.hpp"

#include <algorithm>

#include "myoreg/batch.hpp"

namespace myoreg {

SampleWithGradient trilinear_sample_with_gradient(const ImageVolume& vol, const Vec3& p) {
  std::array<int, 3> base{};
  std::array<double, 3> f{};
  std::array<double, 3> df{};  // d frac / d p
  for (int a = 0; a < 3; ++a) {
    if (!std::isfinite(p[a])) throw UsageError("trilinear_sample: non-finite coordinate");
    const int n = vol.dims[a];
    const double q = p[a] / vol.spacing[a] - 0.5;
    if (n == 1 || q <= 0.0) {
      base[a] = 0;
      f[a] = 0.0;
    } else if (q >= n - 1) {
      base[a] = n - 2;
      f[a] = 1.0;
    } else {
      base[a] = std::min(static_cast<int>(std::floor(q)), n - 2);
      f[a] = q - base[a];
      df[a] = 1.0 / vol.spacing[a];
    }
  }
  double v[2][2][2];
  for (int dk = 0; dk < 2; ++dk) {
    for (int dj = 0; dj < 2; ++dj) {
      for (int di = 0; di < 2; ++di) {
        const int i = std::min(base[0] + di, vol.dims[0] - 1);
        const int j = std::min(base[1] + dj, vol.dims[1] - 1);
        const int k = std::min(base[2] + dk, vol.dims[2] - 1);
        v[di][dj][dk] = static_cast<double>(vol.at(i, j, k));
      }
    }
  }
  const double fx = f[0], fy = f[1], fz = f[2];
  const double c00 = v[0][0][0] + fx * (v[1][0][0] - v[0][0][0]);
  const double c10 = v[0][1][0] + fx * (v[1][1][0] - v[0][1][0]);
  const double c01 = v[0][0][1] + fx * (v[1][0][1] - v[0][0][1]);
  const double c11 = v[0][1][1] + fx * (v[1][1][1] - v[0][1][1]);
  const double c0 = c00 + fy * (c10 - c00);
  const double c1 = c01 + fy * (c11 - c01);
  SampleWithGradient r;
  r.value = c0 + fz * (c1 - c0);

  const double dc00 = v[1][0][0] - v[0][0][0], dc10 = v[1][1][0] - v[0][1][0];
  const double dc01 = v[1][0][1] - v[0][0][1], dc11 = v[1][1][1] - v[0][1][1];
  const double dc0_dx = dc00 + fy * (dc10 - dc00);
  const double dc1_dx = dc01 + fy * (dc11 - dc01);
  r.gradient[0] = df[0] * (dc0_dx + fz * (dc1_dx - dc0_dx));
  r.gradient[1] = df[1] * ((c10 - c00) + fz * ((c11 - c01) - (c10 - c00)));
  r.gradient[2] = df[2] * (c1 - c0);
  return r;
}

namespace {
BinaryMask pull_back(const BinaryMask& mask, const Vec3& spacing, const std::vector<Vec3>& mapped) {
  BinaryMask out(mask.dims);
  std::size_t idx = 0;
  for (int k = 0; k < mask.dims[2]; ++k) {
    for (int j = 0; j < mask.dims[1]; ++j) {
      for (int i = 0; i < mask.dims[0]; ++i, ++idx) {
        const Vec3& q = mapped[idx];
        std::array<int, 3> v{};
        bool inside = true;
        for (int a = 0; a < 3; ++a) {
          const double c = std::floor(q[a] / spacing[a]);
          if (!std::isfinite(c) || c < 0.0 || c >= mask.dims[a]) {
            inside = false;
            break;
          }
          v[a] = static_cast<int>(c);
        }
        out.data[idx] = inside && mask.at(v[0], v[1], v[2]) ? 1 : 0;
      }
    }
  }
  return out;
}

std::vector<Vec3> grid_centers(const Dims3& dims, const Vec3& spacing) {
  std::vector<Vec3> pts;
  pts.reserve(voxel_count(dims));
  for (int k = 0; k < dims[2]; ++k) {
    for (int j = 0; j < dims[1]; ++j) {
      for (int i = 0; i < dims[0]; ++i) pts.push_back(voxel_center(spacing, i, j, k));
    }
  }
  return pts;
}
}  // namespace

BinaryMask warp_mask(const BinaryMask& mask, const Vec3& spacing, const PointMap& phi) {
  std::vector<Vec3> mapped = grid_centers(mask.dims, spacing);
  for (Vec3& p : mapped) p = phi(p);
  return pull_back(mask, spacing, mapped);
}

BinaryMask warp_mask(const BinaryMask& mask, const Vec3& spacing, const DeformationModel& model, double t) {
  const std::vector<Vec3> centers = grid_centers(mask.dims, spacing);
  return pull_back(mask, spacing, map_points(model, centers, t));
}

std::vector<Vec3> warp_landmarks(std::span<const Vec3> landmarks, const DeformationModel& model, double t) {
  std::vector<Vec3> out;
  out.reserve(landmarks.size());
  for (const Vec3& p : landmarks) out.push_back(model.map(p, t));
  return out;
}

}  // namespace myoreg
