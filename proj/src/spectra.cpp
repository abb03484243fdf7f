#include "myoreg/spectra.hpp"

#include <random>

#include "myoreg/batch.hpp"
#include "myoreg/training.hpp"

namespace myoreg {

void FitConfig::validate() const {
  if (iterations < 0) throw ConfigError("fit: iterations must be non-negative");
  if (batch < 1 || chunk_size < 1) throw ConfigError("fit: batch and chunk size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("fit: learning rate must be positive");
  if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("fit: t must lie in [0, 1]");
}

void SpectraConfig::validate() const {
  phantom.validate();
  fit.validate();
  if (variants.empty()) throw ConfigError("spectra: no variants requested");
  if (band_edges.empty() || band_edges[0] != 0.0) throw ConfigError("spectra: band edges must start at 0");
  for (std::size_t b = 1; b < band_edges.size(); ++b) {
    if (!(band_edges[b] > band_edges[b - 1])) throw ConfigError("spectra: band edges must increase");
  }
}

DeformationModel fit_displacement(const NetworkConfig& network, const PhantomField& field, const FitConfig& config) {
  network.validate();
  config.validate();
  const PhantomSpec& spec = field.spec();
  DeformationModel model{network, init_params(network, config.seed), Normalization{spec.extent()}};
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_int_distribution<int> ix(0, spec.dims[0] - 1), iy(0, spec.dims[1] - 1), iz(0, spec.dims[2] - 1);
  AdamState adam;
  const Eigen::Index chunk = config.chunk_size;
  std::vector<double> grad(model.params.size());
  for (int it = 0; it < config.iterations; ++it) {
    std::vector<Vec3> pts(static_cast<std::size_t>(config.batch));
    for (Vec3& p : pts) {
      const int i = ix(rng), j = iy(rng), k = iz(rng);
      p = voxel_center(spec.spacing, i, j, k);
    }
    std::fill(grad.begin(), grad.end(), 0.0);
    BatchEvaluator eval(model.config, model.params);
    for (Eigen::Index start = 0; start < config.batch; start += chunk) {
      const Eigen::Index n = std::min<Eigen::Index>(chunk, config.batch - start);
      Eigen::Matrix3Xd xn(3, n), target(3, n);
      for (Eigen::Index k = 0; k < n; ++k) {
        const Vec3& p = pts[static_cast<std::size_t>(start + k)];
        const Vec3 q = model.norm.to_normalized(p);
        const Vec3 y = field.map(p, config.t);
        for (int a = 0; a < 3; ++a) {
          xn(a, k) = q[a];
          target(a, k) = (y[a] - p[a]) / model.norm.displacement_scale(a);
        }
      }
      eval.forward(xn, Eigen::RowVectorXd::Constant(n, config.t), false);
      const Eigen::Matrix3Xd adj = (2.0 / config.batch) * (eval.output() - target);
      std::vector<double> part(grad.size(), 0.0);
      eval.backward(adj, nullptr, part);
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += part[i];
    }
    adam_step(model.params.flat(), grad, adam, config.learning_rate, AdamConfig{});
  }
  return model;
}

namespace {

std::vector<Vec3> slice_points(const PhantomSpec& spec, int k) {
  if (k < 0 || k >= spec.dims[2]) throw UsageError("displacement_slice: slice out of range");
  std::vector<Vec3> pts;
  pts.reserve(static_cast<std::size_t>(spec.dims[0] * spec.dims[1]));
  for (int j = 0; j < spec.dims[1]; ++j) {
    for (int i = 0; i < spec.dims[0]; ++i) pts.push_back(voxel_center(spec.spacing, i, j, k));
  }
  return pts;
}

SampledField displacement_field(const std::vector<Vec3>& pts, const std::vector<Vec3>& mapped, const PhantomSpec& spec) {
  SampledField f{{spec.dims[0], spec.dims[1], 1}, 3, std::vector<double>(pts.size() * 3)};
  for (std::size_t v = 0; v < pts.size(); ++v) {
    for (int a = 0; a < 3; ++a) f.at(v, a) = mapped[v][a] - pts[v][a];
  }
  return f;
}

}  // namespace

SampledField displacement_slice(const DeformationModel& model, const PhantomSpec& spec, int k, double t) {
  const std::vector<Vec3> pts = slice_points(spec, k);
  return displacement_field(pts, map_points(model, pts, t), spec);
}

SampledField displacement_slice(const PhantomField& field, int k, double t) {
  const std::vector<Vec3> pts = slice_points(field.spec(), k);
  std::vector<Vec3> mapped;
  mapped.reserve(pts.size());
  for (const Vec3& p : pts) mapped.push_back(field.map(p, t));
  return displacement_field(pts, mapped, field.spec());
}

BandEnergyReport run_spectra(const SpectraConfig& config, std::uint64_t seed) {
  config.validate();
  const PhantomField field(config.phantom, seed);
  const int mid = config.phantom.dims[2] / 2;
  const SampledField target = displacement_slice(field, mid, config.fit.t);
  std::vector<std::string> names;
  std::vector<SampledField> fitted;
  for (Activation a : config.variants) {
    NetworkConfig net;
    net.activation = a;
    net.hidden_layers = config.hidden_layers;
    net.hidden_width = config.hidden_width;
    net.omega0 = config.omega0;
    if (a == Activation::FFSiren || is_modulated(a)) net.encoder = FourierEncoder(config.features, config.sigma, seed);
    FitConfig fit = config.fit;
    fit.seed = seed;
    const DeformationModel model = fit_displacement(net, field, fit);
    names.push_back(to_string(a));
    fitted.push_back(displacement_slice(model, config.phantom, mid, config.fit.t));
  }
  return spectral_report(target, names, fitted, config.band_edges);
}

}  // namespace myoreg
