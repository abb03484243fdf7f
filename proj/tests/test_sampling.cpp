#include <cmath>
#include <random>

#include "doctest.h"
#include "myoreg/sampling.hpp"
#include "oracles.hpp"

using namespace myoreg;

namespace {

ImageVolume affine_volume(Dims3 d, Vec3 s) {
  ImageVolume v(d, s);
  for (int k = 0; k < d[2]; ++k) {
    for (int j = 0; j < d[1]; ++j) {
      for (int i = 0; i < d[0]; ++i) {
        const Vec3 c = voxel_center(s, i, j, k);
        v.at(i, j, k) = static_cast<float>(0.1 + 0.02 * c[0] - 0.01 * c[1] + 0.03 * c[2]);
      }
    }
  }
  return v;
}

ImageVolume random_volume(Dims3 d, Vec3 s, std::uint64_t seed) {
  ImageVolume v(d, s);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (float& x : v.intensities) x = u(rng);
  return v;
}

}  // namespace

TEST_CASE("samples at voxel centres are exact") {
  const ImageVolume v = random_volume({5, 6, 7}, {1.0, 2.0, 0.5}, 1);
  for (int k = 0; k < 7; ++k) {
    for (int j = 0; j < 6; ++j) {
      for (int i = 0; i < 5; ++i) {
        CHECK(trilinear_sample(v, voxel_center(v.spacing, i, j, k)) == doctest::Approx(v.at(i, j, k)).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("affine fields are reproduced in the interior") {
  const ImageVolume v = affine_volume({8, 8, 8}, {1.5, 1.0, 2.0});
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int n = 0; n < 100; ++n) {
    const Vec3 p{0.75 + 10.5 * u(rng), 0.5 + 7.0 * u(rng), 1.0 + 14.0 * u(rng)};
    const double expected = 0.1 + 0.02 * p[0] - 0.01 * p[1] + 0.03 * p[2];
    CHECK(trilinear_sample(v, p) == doctest::Approx(expected).epsilon(1e-5));
    const SampleWithGradient sg = trilinear_sample_with_gradient(v, p);
    CHECK(sg.gradient[0] == doctest::Approx(0.02).epsilon(1e-4));
    CHECK(sg.gradient[1] == doctest::Approx(-0.01).epsilon(1e-4));
    CHECK(sg.gradient[2] == doctest::Approx(0.03).epsilon(1e-4));
  }
}

TEST_CASE("border replication and zero derivative on clamped axes") {
  const ImageVolume v = random_volume({4, 4, 4}, {1.0, 1.0, 1.0}, 3);
  CHECK(trilinear_sample(v, Vec3{-5.0, 0.5, 0.5}) == doctest::Approx(v.at(0, 0, 0)));
  CHECK(trilinear_sample(v, Vec3{100.0, 3.5, 3.5}) == doctest::Approx(v.at(3, 3, 3)));
  const SampleWithGradient sg = trilinear_sample_with_gradient(v, {-2.0, 1.7, 2.2});
  CHECK(sg.gradient[0] == 0.0);
  CHECK(sg.gradient[1] != 0.0);
  CHECK_THROWS_AS(trilinear_sample(v, Vec3{std::nan(""), 0.0, 0.0}), UsageError);
}

TEST_CASE("gradient matches finite differences away from cell faces") {
  const ImageVolume v = random_volume({6, 6, 6}, {1.0, 1.5, 2.0}, 4);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.1, 0.9);
  for (int n = 0; n < 50; ++n) {
    // keep each coordinate inside one cell
    const std::vector<double> p{(1.5 + u(rng)) * 1.0, (2.5 + u(rng)) * 1.5, (1.5 + u(rng)) * 2.0};
    const SampleWithGradient sg = trilinear_sample_with_gradient(v, {p[0], p[1], p[2]});
    auto f = [&](const std::vector<double>& q) { return trilinear_sample(v, Vec3{q[0], q[1], q[2]}); };
    for (std::size_t a = 0; a < 3; ++a) {
      CHECK(sg.gradient[a] == doctest::Approx(oracle::central_difference(f, p, a, 1e-6)).epsilon(1e-5));
    }
    ad::Tape tape;
    ad::TangentVec3 xs = ad::seed_coordinates(tape, {p[0], p[1], p[2]});
    const ad::TangentValue s = trilinear_sample(v, xs);
    CHECK(s.value() == doctest::Approx(sg.value).epsilon(1e-12));
    for (int a = 0; a < 3; ++a) CHECK(s.d(a).value() == doctest::Approx(sg.gradient[a]).epsilon(1e-12));
  }
}

TEST_CASE("mask warping") {
  BinaryMask m({6, 6, 6});
  m.set(2, 3, 4, true);
  m.set(5, 5, 5, true);
  const Vec3 s{1.0, 1.0, 1.0};
  const BinaryMask same = warp_mask(m, s, [](const Vec3& x) { return x; });
  CHECK(same.data == m.data);
  const BinaryMask shifted = warp_mask(m, s, [](const Vec3& x) { return Vec3{x[0] + 1.0, x[1], x[2]}; });
  CHECK(shifted.at(1, 3, 4));
  CHECK_FALSE(shifted.at(2, 3, 4));
  CHECK(shifted.at(4, 5, 5));
  CHECK(shifted.count() == 2);
  // everything mapped outside the grid is background
  const BinaryMask gone = warp_mask(m, s, [](const Vec3& x) { return Vec3{x[0] + 100.0, x[1], x[2]}; });
  CHECK(gone.empty());
}

TEST_CASE("identity model leaves masks and landmarks unchanged") {
  NetworkConfig c;
  c.hidden_layers = 1;
  c.hidden_width = 4;
  DeformationModel model{c, Parameters(c), Normalization{{6, 6, 6}}};
  BinaryMask m({6, 6, 6});
  m.set(1, 2, 3, true);
  CHECK(warp_mask(m, {1, 1, 1}, model, 0.7).data == m.data);
  const std::vector<Vec3> lm{{1.0, 2.0, 3.0}, {4.5, 0.2, 5.9}};
  CHECK(warp_landmarks(lm, model, 0.7) == lm);
}
