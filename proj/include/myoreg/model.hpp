#pragma once

// Coordinate network u(X, t; theta). The network lives in normalized
// coordinates xn in [-1, 1]^3 and predicts a normalized displacement; the
// physical map is phi(X) = X + (L / 2) * u_n(xn, t) with xn = 2 X / L - 1.

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "myoreg/autodiff.hpp"
#include "myoreg/encoding.hpp"
#include "myoreg/errors.hpp"

namespace myoreg {

enum class Activation { Tanh, Siren, FFSiren, AM, PSK, QPSK };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);
bool is_sinusoidal(Activation a);
bool is_modulated(Activation a);

struct NetworkConfig {
  int hidden_layers = 5;
  int hidden_width = 64;
  Activation activation = Activation::Tanh;
  double omega0 = 30.0;
  std::optional<FourierEncoder> encoder;

  int input_dim() const;
  static constexpr int output_dim() { return 3; }
  // Throws ConfigError when the activation/encoder combination is invalid.
  void validate() const;
};

struct LayerShape {
  int in = 0;
  int out = 0;
  std::size_t weight_offset = 0;  // row-major out x in
  std::size_t bias_offset = 0;
};

// Flat parameter vector with per-layer views. Layer order: input to output,
// each layer stored as weights then biases.
class Parameters {
 public:
  Parameters() = default;
  explicit Parameters(const NetworkConfig& config);  // all zeros
  static Parameters from_flat(const NetworkConfig& config, std::vector<double> flat);

  const std::vector<LayerShape>& layers() const { return layers_; }
  std::span<const double> flat() const { return values_; }
  std::span<double> flat() { return values_; }
  std::size_t size() const { return values_.size(); }

  double weight(std::size_t layer, int row, int col) const {
    const LayerShape& s = layers_[layer];
    return values_[s.weight_offset + static_cast<std::size_t>(row * s.in + col)];
  }
  double bias(std::size_t layer, int row) const {
    return values_[layers_[layer].bias_offset + static_cast<std::size_t>(row)];
  }
  double& weight(std::size_t layer, int row, int col) {
    const LayerShape& s = layers_[layer];
    return values_[s.weight_offset + static_cast<std::size_t>(row * s.in + col)];
  }
  double& bias(std::size_t layer, int row) {
    return values_[layers_[layer].bias_offset + static_cast<std::size_t>(row)];
  }

 private:
  std::vector<LayerShape> layers_;
  std::vector<double> values_;
};

// Xavier-uniform (Tanh) or SIREN initialization; biases are zero.
Parameters init_params(const NetworkConfig& config, std::uint64_t seed);

// Maps physical millimetres onto [-1, 1] over the domain extents.
struct Normalization {
  std::array<double, 3> extent{1.0, 1.0, 1.0};

  template <class S>
  std::array<S, 3> to_normalized(const std::array<S, 3>& x) const {
    return {x[0] * (2.0 / extent[0]) - 1.0, x[1] * (2.0 / extent[1]) - 1.0, x[2] * (2.0 / extent[2]) - 1.0};
  }
  double displacement_scale(int axis) const { return 0.5 * extent[static_cast<std::size_t>(axis)]; }
};

// psi(x) for the given family. `mod` must be present exactly for AM/PSK/QPSK.
template <class S>
S activation_apply(Activation kind, const S& x, const ModulationState<S>* mod) {
  using std::cos;
  using std::sin;
  using std::tanh;
  if (is_modulated(kind) != (mod != nullptr)) {
    throw UsageError("activation_apply: modulation state must be given exactly for AM/PSK/QPSK");
  }
  switch (kind) {
    case Activation::Tanh:
      return tanh(x);
    case Activation::Siren:
    case Activation::FFSiren:
      return sin(x);
    case Activation::AM:
      return mod->alpha * sin(x);
    case Activation::PSK:
      return sin(x + mod->phase);
    case Activation::QPSK: {
      const S shifted = x + mod->phase;
      return sin(shifted) + cos(shifted);
    }
  }
  throw UsageError("activation_apply: unknown activation");
}

// Network output u_n for normalized input xn and time t. S is the evaluation
// scalar (double, ad::Var, ad::TangentValue); P is the parameter scalar, either
// double or S.
template <class S, class P>
std::array<S, 3> evaluate_network(const NetworkConfig& config, const std::vector<LayerShape>& layers,
                                  std::span<const P> theta, const std::array<S, 3>& xn, const S& t) {
  std::vector<S> act;
  std::optional<ModulationState<S>> mod;
  if (config.activation == Activation::FFSiren) {
    act = config.encoder->encode(xn);
  } else {
    act = {xn[0], xn[1], xn[2]};
  }
  act.push_back(t);
  if (is_modulated(config.activation)) mod = modulation_params(config.encoder->project(xn));

  const bool sinusoidal = is_sinusoidal(config.activation);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LayerShape& shape = layers[l];
    const bool output_layer = l + 1 == layers.size();
    std::vector<S> next;
    next.reserve(static_cast<std::size_t>(shape.out));
    for (int r = 0; r < shape.out; ++r) {
      const std::size_t row = shape.weight_offset + static_cast<std::size_t>(r * shape.in);
      S acc = act[0] * theta[row];
      for (int c = 1; c < shape.in; ++c) acc = acc + act[static_cast<std::size_t>(c)] * theta[row + c];
      acc = acc + theta[shape.bias_offset + static_cast<std::size_t>(r)];
      if (!output_layer) {
        if (sinusoidal) acc = acc * config.omega0;
        acc = activation_apply<S>(config.activation, acc, mod ? &*mod : nullptr);
      }
      next.push_back(acc);
    }
    act = std::move(next);
  }
  return {act[0], act[1], act[2]};
}

struct ForwardResult {
  std::array<double, 3> phi;  // normalized coordinates
  std::array<double, 3> u;
};

// Evaluation in normalized coordinates.
ForwardResult forward(const NetworkConfig& config, const Parameters& params, const std::array<double, 3>& xn,
                      double t);

using Mat3 = std::array<std::array<double, 3>, 3>;

struct JacobianResult {
  std::array<double, 3> phi;  // physical millimetres
  Mat3 F;                     // d phi / d X, physical
};

// Physical-coordinate map and deformation gradient via the tangent tape.
JacobianResult forward_with_jacobian(const NetworkConfig& config, const Parameters& params,
                                     const Normalization& norm, const std::array<double, 3>& x, double t);

// Tape version with theta as tape nodes: returns phi (physical) and F whose
// entries are differentiable with respect to theta.
struct TapeJacobian {
  ad::TangentVec3 phi;
  ad::VarMat3 F;
};
TapeJacobian forward_with_jacobian_tape(ad::Tape& tape, const NetworkConfig& config,
                                        const std::vector<LayerShape>& layers, std::span<const ad::Var> theta,
                                        const Normalization& norm, const std::array<double, 3>& x, double t);

// A trained or initialized deformation: config + parameters + coordinate frame.
struct DeformationModel {
  NetworkConfig config;
  Parameters params;
  Normalization norm;

  // Physical phi(X, t).
  std::array<double, 3> map(const std::array<double, 3>& x, double t) const;
};

}  // namespace myoreg
