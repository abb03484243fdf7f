#pragma once

// Spectral-bias experiment: each activation variant regresses the analytic
// phantom displacement at a fixed time under the same iteration budget, and
// the residual on the mid-z slice is split into radial frequency bands.

#include <cstdint>
#include <vector>

#include "myoreg/metrics.hpp"
#include "myoreg/model.hpp"
#include "myoreg/phantom.hpp"

namespace myoreg {

struct FitConfig {
  int iterations = 10000;
  int batch = 512;
  double learning_rate = 1e-4;
  double t = 1.0;
  std::uint64_t seed = 0;
  int chunk_size = 64;

  void validate() const;
};

// Least-squares fit of u_n(X, t) to the normalized analytic displacement at
// voxel centres drawn uniformly from the phantom grid.
DeformationModel fit_displacement(const NetworkConfig& network, const PhantomField& field, const FitConfig& config);

// Displacement (mm, 3 components) on slice z = k of the phantom grid.
SampledField displacement_slice(const DeformationModel& model, const PhantomSpec& spec, int k, double t);
SampledField displacement_slice(const PhantomField& field, int k, double t);

struct SpectraConfig {
  PhantomSpec phantom = [] {
    PhantomSpec s;
    s.hf_amplitude = 0.5;
    s.hf_cycles = 8.0;
    return s;
  }();
  std::vector<Activation> variants{Activation::Tanh, Activation::Siren, Activation::FFSiren};
  std::vector<double> band_edges{0.0, 4.0, 8.0};
  int hidden_layers = 5;
  int hidden_width = 64;
  double omega0 = 30.0;
  int features = 8;  // Fourier features for FF-S and the modulated variants
  double sigma = 1.0;
  FitConfig fit;

  void validate() const;
};

// One fit per variant with seed `seed`; the same seed drives the encoder draw.
BandEnergyReport run_spectra(const SpectraConfig& config, std::uint64_t seed);

}  // namespace myoreg
