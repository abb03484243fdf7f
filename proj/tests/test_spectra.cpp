#include <cmath>

#include "doctest.h"
#include "myoreg/spectra.hpp"

using namespace myoreg;

namespace {

PhantomSpec small_spec() {
  PhantomSpec s;
  s.dims = {16, 16, 8};
  s.spacing = {4.0, 4.0, 4.0};
  s.r_inner = 10.0;
  s.r_outer = 20.0;
  s.contraction = 50.0;
  s.hf_amplitude = 1.0;
  s.hf_cycles = 4.0;
  return s;
}

NetworkConfig small_net(Activation a) {
  NetworkConfig c;
  c.hidden_layers = 2;
  c.hidden_width = 16;
  c.activation = a;
  if (a == Activation::FFSiren) c.encoder = FourierEncoder(4, 1.0, 2);
  return c;
}

double mse(const SampledField& a, const SampledField& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) s += (a.values[i] - b.values[i]) * (a.values[i] - b.values[i]);
  return s / static_cast<double>(a.values.size());
}

}  // namespace

TEST_CASE("config validation") {
  FitConfig f;
  CHECK_NOTHROW(f.validate());
  f.batch = 0;
  CHECK_THROWS_AS(f.validate(), ConfigError);
  f = FitConfig{};
  f.t = 1.5;
  CHECK_THROWS_AS(f.validate(), ConfigError);
  SpectraConfig s;
  CHECK_NOTHROW(s.validate());
  s.band_edges = {1.0, 4.0};
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.band_edges = {0.0, 4.0, 4.0};
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.band_edges = {0.0};
  s.variants.clear();
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("analytic displacement slice matches the field map") {
  const PhantomField field(small_spec(), 1);
  const SampledField d = displacement_slice(field, 3, 0.6);
  CHECK(d.dims == Dims3{16, 16, 1});
  CHECK(d.components == 3);
  for (int j : {0, 5, 11}) {
    for (int i : {2, 9, 15}) {
      const Vec3 x = voxel_center(field.spec().spacing, i, j, 3);
      const Vec3 y = field.map(x, 0.6);
      const std::size_t v = static_cast<std::size_t>(i + 16 * j);
      for (int a = 0; a < 3; ++a) CHECK(d.at(v, a) == y[a] - x[a]);
    }
  }
  CHECK_THROWS_AS(displacement_slice(field, 8, 0.5), UsageError);
}

TEST_CASE("zero-iteration fit is the initial network") {
  const PhantomField field(small_spec(), 1);
  FitConfig f;
  f.iterations = 0;
  f.seed = 4;
  const NetworkConfig net = small_net(Activation::Tanh);
  const DeformationModel m = fit_displacement(net, field, f);
  const Parameters p = init_params(net, 4);
  CHECK(std::equal(m.params.flat().begin(), m.params.flat().end(), p.flat().begin()));
}

TEST_CASE("fitting reduces the slice residual and is reproducible") {
  const PhantomField field(small_spec(), 1);
  const SampledField target = displacement_slice(field, 4, 1.0);
  FitConfig f;
  f.batch = 64;
  f.learning_rate = 1e-3;
  for (Activation a : {Activation::Tanh, Activation::Siren, Activation::FFSiren}) {
    CAPTURE(to_string(a));
    f.iterations = 0;
    const double before = mse(displacement_slice(fit_displacement(small_net(a), field, f), field.spec(), 4, 1.0), target);
    f.iterations = 300;
    const DeformationModel m = fit_displacement(small_net(a), field, f);
    const double after = mse(displacement_slice(m, field.spec(), 4, 1.0), target);
    CHECK(after < 0.5 * before);
    const DeformationModel again = fit_displacement(small_net(a), field, f);
    CHECK(std::equal(m.params.flat().begin(), m.params.flat().end(), again.params.flat().begin()));
  }
}

TEST_CASE("run_spectra report shape") {
  SpectraConfig s;
  s.phantom = small_spec();
  s.hidden_layers = 1;
  s.hidden_width = 8;
  s.features = 4;
  s.fit.iterations = 5;
  s.fit.batch = 16;
  s.band_edges = {0.0, 2.0, 4.0, 6.0};
  const BandEnergyReport r = run_spectra(s, 3);
  REQUIRE(r.variants == std::vector<std::string>{"tanh", "siren", "ffs"});
  for (std::size_t v = 0; v < 3; ++v) {
    REQUIRE(r.energies[v].size() == 4);
    double sum = 0.0;
    for (double e : r.energies[v]) sum += e;
    CHECK(sum == doctest::Approx(r.totals[v]).epsilon(1e-9));
  }
  const BandEnergyReport again = run_spectra(s, 3);
  CHECK(again.energies == r.energies);
}
