#include "myoreg/encoding.hpp"

#include <random>

namespace myoreg {

FourierEncoder::FourierEncoder(int features, double sigma, std::uint64_t seed)
    : features_(features), sigma_(sigma), seed_(seed) {
  if (features < 1) throw UsageError("FourierEncoder: feature count must be positive");
  if (!(sigma >= 0.0)) throw UsageError("FourierEncoder: sigma must be non-negative");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  b_.resize(static_cast<std::size_t>(features * kInputDim));
  for (double& v : b_) v = sigma * normal(rng);
}

FourierEncoder::FourierEncoder(int features, double sigma, std::uint64_t seed, std::vector<double> matrix)
    : features_(features), sigma_(sigma), seed_(seed), b_(std::move(matrix)) {
  if (features < 1) throw UsageError("FourierEncoder: feature count must be positive");
  if (b_.size() != static_cast<std::size_t>(features * kInputDim)) {
    throw UsageError("FourierEncoder: matrix size does not match features x 3");
  }
}

std::vector<double> FourierEncoder::encode(std::span<const double> x) const {
  if (x.size() != kInputDim) throw UsageError("FourierEncoder::encode: expected a 3-vector");
  return encode(std::array<double, 3>{x[0], x[1], x[2]});
}

}  // namespace myoreg
