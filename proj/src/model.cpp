#include "myoreg/model.hpp"

#include <random>

namespace myoreg {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Tanh:
      return "tanh";
    case Activation::Siren:
      return "siren";
    case Activation::FFSiren:
      return "ffs";
    case Activation::AM:
      return "am";
    case Activation::PSK:
      return "psk";
    case Activation::QPSK:
      return "qpsk";
  }
  return "unknown";
}

Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "siren") return Activation::Siren;
  if (s == "ffs" || s == "ffsiren") return Activation::FFSiren;
  if (s == "am") return Activation::AM;
  if (s == "psk") return Activation::PSK;
  if (s == "qpsk") return Activation::QPSK;
  throw ConfigError("unknown activation '" + s + "' (expected tanh, siren, ffs, am, psk, qpsk)");
}

bool is_sinusoidal(Activation a) { return a != Activation::Tanh; }

bool is_modulated(Activation a) { return a == Activation::AM || a == Activation::PSK || a == Activation::QPSK; }

int NetworkConfig::input_dim() const {
  if (activation == Activation::FFSiren) {
    if (!encoder) throw ConfigError("FFSiren requires a Fourier encoder");
    return encoder->output_dim() + 1;
  }
  return 4;
}

void NetworkConfig::validate() const {
  if (hidden_layers < 0) throw ConfigError("hidden_layers must be non-negative");
  if (hidden_width < 1) throw ConfigError("hidden_width must be positive");
  if (is_sinusoidal(activation) && !(omega0 > 0.0)) throw ConfigError("omega0 must be positive");
  const bool needs_encoder = activation == Activation::FFSiren || is_modulated(activation);
  if (needs_encoder && !encoder) throw ConfigError(to_string(activation) + " requires a Fourier encoder");
  if (!needs_encoder && encoder) throw ConfigError(to_string(activation) + " does not take a Fourier encoder");
}

Parameters::Parameters(const NetworkConfig& config) {
  config.validate();
  std::vector<int> widths{config.input_dim()};
  for (int i = 0; i < config.hidden_layers; ++i) widths.push_back(config.hidden_width);
  widths.push_back(NetworkConfig::output_dim());
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    LayerShape s;
    s.in = widths[l];
    s.out = widths[l + 1];
    s.weight_offset = offset;
    offset += static_cast<std::size_t>(s.in * s.out);
    s.bias_offset = offset;
    offset += static_cast<std::size_t>(s.out);
    layers_.push_back(s);
  }
  values_.assign(offset, 0.0);
}

Parameters Parameters::from_flat(const NetworkConfig& config, std::vector<double> flat) {
  Parameters p(config);
  if (flat.size() != p.values_.size()) {
    throw UsageError("Parameters::from_flat: expected " + std::to_string(p.values_.size()) + " values, got " +
                     std::to_string(flat.size()));
  }
  p.values_ = std::move(flat);
  return p;
}

Parameters init_params(const NetworkConfig& config, std::uint64_t seed) {
  Parameters p(config);
  std::mt19937_64 rng(seed);
  const bool sinusoidal = is_sinusoidal(config.activation);
  for (std::size_t l = 0; l < p.layers().size(); ++l) {
    const LayerShape s = p.layers()[l];
    double bound = 0.0;
    if (!sinusoidal) {
      bound = std::sqrt(6.0 / static_cast<double>(s.in + s.out));
    } else if (l == 0) {
      bound = 1.0 / static_cast<double>(s.in);
    } else {
      bound = std::sqrt(6.0 / static_cast<double>(s.in)) / config.omega0;
    }
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (int r = 0; r < s.out; ++r) {
      for (int c = 0; c < s.in; ++c) p.weight(l, r, c) = dist(rng);
    }
  }
  return p;
}

namespace {
void require_finite(const std::array<double, 3>& x, double t) {
  for (double v : x) {
    if (!std::isfinite(v)) throw UsageError("forward: non-finite coordinate");
  }
  if (!std::isfinite(t)) throw UsageError("forward: non-finite time");
}
}  // namespace

ForwardResult forward(const NetworkConfig& config, const Parameters& params, const std::array<double, 3>& xn,
                      double t) {
  require_finite(xn, t);
  const std::array<double, 3> u = evaluate_network<double, double>(config, params.layers(), params.flat(), xn, t);
  return {{xn[0] + u[0], xn[1] + u[1], xn[2] + u[2]}, u};
}

namespace {

template <class P>
ad::TangentVec3 physical_map(const NetworkConfig& config, const std::vector<LayerShape>& layers,
                             std::span<const P> theta, const Normalization& norm, const ad::TangentVec3& x,
                             ad::Tape& tape, double t) {
  const ad::TangentVec3 xn = norm.to_normalized(x);
  const ad::TangentValue tv = ad::TangentValue::constant(tape, t);
  const ad::TangentVec3 u = evaluate_network<ad::TangentValue, P>(config, layers, theta, xn, tv);
  ad::TangentVec3 phi;
  for (int i = 0; i < 3; ++i) phi[i] = x[i] + u[i] * norm.displacement_scale(i);
  return phi;
}

}  // namespace

JacobianResult forward_with_jacobian(const NetworkConfig& config, const Parameters& params,
                                     const Normalization& norm, const std::array<double, 3>& x, double t) {
  require_finite(x, t);
  ad::Tape tape;
  ad::TangentVec3 phi;
  const ad::VarMat3 jac = ad::spatial_jacobian(
      tape,
      [&](const ad::TangentVec3& xs) {
        return physical_map<double>(config, params.layers(), params.flat(), norm, xs, tape, t);
      },
      x, &phi);
  JacobianResult r;
  for (int i = 0; i < 3; ++i) {
    r.phi[i] = phi[i].value();
    for (int j = 0; j < 3; ++j) r.F[i][j] = jac[i][j].value();
  }
  return r;
}

TapeJacobian forward_with_jacobian_tape(ad::Tape& tape, const NetworkConfig& config,
                                        const std::vector<LayerShape>& layers, std::span<const ad::Var> theta,
                                        const Normalization& norm, const std::array<double, 3>& x, double t) {
  require_finite(x, t);
  std::vector<ad::TangentValue> lifted;
  lifted.reserve(theta.size());
  for (const ad::Var& v : theta) lifted.push_back(ad::TangentValue::lift(v));
  TapeJacobian out;
  out.F = ad::spatial_jacobian(
      tape,
      [&](const ad::TangentVec3& xs) {
        return physical_map<ad::TangentValue>(config, layers, std::span<const ad::TangentValue>(lifted), norm, xs,
                                              tape, t);
      },
      x, &out.phi);
  return out;
}

std::array<double, 3> DeformationModel::map(const std::array<double, 3>& x, double t) const {
  const std::array<double, 3> xn = norm.to_normalized(x);
  const ForwardResult r = forward(config, params, xn, t);
  return {x[0] + r.u[0] * norm.displacement_scale(0), x[1] + r.u[1] * norm.displacement_scale(1),
          x[2] + r.u[2] * norm.displacement_scale(2)};
}

}  // namespace myoreg
