#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "myoreg/autodiff.hpp"
#include "myoreg/errors.hpp"

namespace myoreg {

// Random Fourier feature map gamma(X) = [cos(BX), sin(BX)] over the three
// spatial coordinates. B is m x 3 with i.i.d. N(0, sigma^2) entries.
class FourierEncoder {
 public:
  static constexpr int kInputDim = 3;

  FourierEncoder(int features, double sigma, std::uint64_t seed);
  // Rebuilds an encoder from a realized matrix (row-major, features x 3).
  FourierEncoder(int features, double sigma, std::uint64_t seed, std::vector<double> matrix);

  int features() const { return features_; }
  int output_dim() const { return 2 * features_; }
  double sigma() const { return sigma_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<double>& matrix() const { return b_; }
  double b(int row, int col) const { return b_[static_cast<std::size_t>(row * kInputDim + col)]; }

  // BX for one point.
  template <class S>
  std::vector<S> project(const std::array<S, 3>& x) const {
    std::vector<S> out;
    out.reserve(static_cast<std::size_t>(features_));
    for (int i = 0; i < features_; ++i) {
      S acc = x[0] * b(i, 0);
      acc = acc + x[1] * b(i, 1);
      acc = acc + x[2] * b(i, 2);
      out.push_back(acc);
    }
    return out;
  }

  // gamma(X): first m entries cos(BX), last m entries sin(BX).
  template <class S>
  std::vector<S> encode(const std::array<S, 3>& x) const {
    using std::cos;
    using std::sin;
    const std::vector<S> bx = project(x);
    std::vector<S> out;
    out.reserve(static_cast<std::size_t>(2 * features_));
    for (const S& v : bx) out.push_back(cos(v));
    for (const S& v : bx) out.push_back(sin(v));
    return out;
  }

  std::vector<double> encode(std::span<const double> x) const;

 private:
  int features_;
  double sigma_;
  std::uint64_t seed_;
  std::vector<double> b_;
};

namespace detail {
inline double phase_atan2(double y, double x) { return (y == 0.0 && x == 0.0) ? 0.0 : std::atan2(y, x); }
inline ad::Var phase_atan2(ad::Var y, ad::Var x) { return ad::atan2(y, x); }
inline ad::TangentValue phase_atan2(const ad::TangentValue& y, const ad::TangentValue& x) {
  return ad::atan2(y, x);
}
}  // namespace detail

// Amplitude and phase derived from the Fourier-feature signal of one sample.
template <class S>
struct ModulationState {
  S energy;
  S alpha;
  S phase;
};

// E = sum (cos bx_i + sin bx_i)^2, alpha = sigmoid(E),
// phase = atan2(sum sin bx_i, sum cos bx_i) with atan2(0, 0) = 0.
template <class S>
ModulationState<S> modulation_params(const std::vector<S>& bx) {
  using std::cos;
  using std::exp;
  using std::sin;
  if (bx.empty()) throw UsageError("modulation_params: empty feature vector");
  S energy{}, sum_sin{}, sum_cos{};
  for (std::size_t i = 0; i < bx.size(); ++i) {
    const S c = cos(bx[i]);
    const S s = sin(bx[i]);
    const S cs = c + s;
    if (i == 0) {
      energy = cs * cs;
      sum_sin = s;
      sum_cos = c;
    } else {
      energy = energy + cs * cs;
      sum_sin = sum_sin + s;
      sum_cos = sum_cos + c;
    }
  }
  const S alpha = 1.0 / (1.0 + exp(-energy));
  return {energy, alpha, detail::phase_atan2(sum_sin, sum_cos)};
}

}  // namespace myoreg
