#include "myoreg/cli.hpp"

#include <fstream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "myoreg/batch.hpp"
#include "myoreg/io.hpp"
#include "myoreg/metrics.hpp"
#include "myoreg/phantom.hpp"
#include "myoreg/sampling.hpp"
#include "myoreg/spectra.hpp"
#include "myoreg/training.hpp"

namespace myoreg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Sections of a --config file. Missing sections keep their defaults.
struct RunConfig {
  json phantom = json::object();
  json network = json::object();
  json train = json::object();
  json spectra = json::object();
};

RunConfig load_config(const std::string& path) {
  RunConfig rc;
  if (path.empty()) return rc;
  const json j = io::read_json(path);
  if (!j.is_object()) throw IoError(path + ": config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "phantom") {
      rc.phantom = value;
    } else if (key == "network") {
      rc.network = value;
    } else if (key == "train") {
      rc.train = value;
    } else if (key == "spectra") {
      rc.spectra = value;
    } else {
      io::warn(path + ": ignoring unknown section '" + key + "'");
    }
  }
  return rc;
}

// Config-file values that fail validation are reported against the file.
template <class Fn>
auto from_config(const std::string& path, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    if (path.empty()) throw;
    throw IoError(path + ": " + e.what());
  }
}

struct NetworkFlags {
  std::optional<std::string> activation;
  std::optional<int> hidden_layers, hidden_width, features;
  std::optional<double> sigma, omega0;
};

void add_network_flags(CLI::App* app, NetworkFlags& f) {
  app->add_option("--activation", f.activation, "tanh, siren, ffs, am, psk or qpsk");
  app->add_option("--hidden-layers", f.hidden_layers);
  app->add_option("--hidden-width", f.hidden_width);
  app->add_option("--features", f.features, "Fourier features m");
  app->add_option("--sigma", f.sigma, "Fourier feature scale");
  app->add_option("--omega0", f.omega0);
}

NetworkConfig build_network(json j, const NetworkFlags& f, std::uint64_t seed, const std::string& config_path) {
  if (f.activation) j["activation"] = *f.activation;
  if (f.hidden_layers) j["hidden_layers"] = *f.hidden_layers;
  if (f.hidden_width) j["hidden_width"] = *f.hidden_width;
  if (f.omega0) j["omega0"] = *f.omega0;
  const Activation a = activation_from_string(j.value("activation", std::string("tanh")));
  const bool needs_encoder = a == Activation::FFSiren || is_modulated(a);
  if (needs_encoder) {
    json e = j.value("encoder", json::object());
    if (f.features) e["features"] = *f.features;
    if (f.sigma) e["sigma"] = *f.sigma;
    if (!e.contains("seed")) e["seed"] = seed;
    j["encoder"] = e;
  } else if (f.features || f.sigma) {
    throw UsageError("--features/--sigma apply only to ffs, am, psk and qpsk");
  }
  return from_config(config_path, [&] { return io::network_from_json(j); });
}

void print_error(std::ostream& err, const char* kind, const std::string& message) {
  err << json{{"error", kind}, {"message", message}}.dump() << "\n";
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<Vec3> read_points_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string() + ": cannot open for reading");
  std::vector<Vec3> pts;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#' || std::isalpha(static_cast<unsigned char>(line[0]))) continue;
    const auto cells = split_csv(line);
    try {
      if (cells.size() != 3) throw std::invalid_argument("expected x,y,z");
      pts.push_back({std::stod(cells[0]), std::stod(cells[1]), std::stod(cells[2])});
    } catch (const std::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return pts;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Physics-informed neural registration of cine volumes"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON file with phantom/network/train/spectra sections");
    sub->add_option("--seed", seed, "Random seed");
  };

  // synth
  CLI::App* synth = app.add_subcommand("synth", "Generate a phantom cine sequence");
  add_common(synth);
  std::string synth_out;
  std::optional<std::vector<int>> synth_dims;
  std::optional<double> synth_spacing, synth_hf, synth_hf_cycles;
  std::optional<int> synth_frames;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--dims", synth_dims, "Grid size x y z")->expected(3);
  synth->add_option("--spacing", synth_spacing, "Isotropic voxel size (mm)");
  synth->add_option("--frames", synth_frames);
  synth->add_option("--hf-amplitude", synth_hf, "High-frequency overlay amplitude (mm)");
  synth->add_option("--hf-cycles", synth_hf_cycles, "High-frequency overlay cycles per domain");

  // train
  CLI::App* trn = app.add_subcommand("train", "Fit a deformation network to a sequence");
  add_common(trn);
  std::string train_seq, train_out, train_history;
  NetworkFlags train_net;
  std::optional<int> train_iters, train_sim_batch, train_reg_batch, train_threads;
  std::optional<double> train_lr, train_mu, train_lambda;
  trn->add_option("--sequence", train_seq, "sequence.json")->required();
  trn->add_option("--out", train_out, "Checkpoint path")->required();
  trn->add_option("--history", train_history, "Loss history CSV");
  trn->add_option("--iterations", train_iters);
  trn->add_option("--lr", train_lr);
  trn->add_option("--mu", train_mu);
  trn->add_option("--lambda", train_lambda);
  trn->add_option("--similarity-batch", train_sim_batch);
  trn->add_option("--reg-batch", train_reg_batch);
  trn->add_option("--threads", train_threads);
  add_network_flags(trn, train_net);

  // register
  CLI::App* reg = app.add_subcommand("register", "Apply a trained map to a volume or to points");
  std::string reg_ckpt, reg_volume, reg_points, reg_out;
  double reg_t = 1.0;
  reg->add_option("--checkpoint", reg_ckpt)->required();
  reg->add_option("--t", reg_t, "Normalized time")->check(CLI::Range(0.0, 1.0));
  auto* vol_opt = reg->add_option("--volume", reg_volume, "Template volume header; output is T(phi(X, t))");
  auto* pts_opt = reg->add_option("--points", reg_points, "CSV of x,y,z; output is displacement and det F");
  vol_opt->excludes(pts_opt);
  reg->add_option("--out", reg_out)->required();

  // eval
  CLI::App* ev = app.add_subcommand("eval", "Evaluate a checkpoint against a sequence");
  std::string eval_ckpt, eval_seq, eval_out;
  std::optional<int> eval_frame;
  ev->add_option("--checkpoint", eval_ckpt)->required();
  ev->add_option("--sequence", eval_seq)->required();
  ev->add_option("--frame", eval_frame, "Frame index (default: last)");
  ev->add_option("--out", eval_out)->required();

  // spectra
  CLI::App* spec = app.add_subcommand("spectra", "Residual band energies per activation variant");
  add_common(spec);
  std::string spec_out, spec_csv, spec_variants = "tanh,siren,ffs", spec_bands;
  std::optional<std::string> spec_seeds;
  std::optional<int> spec_iters, spec_batch, spec_layers, spec_width;
  std::optional<std::vector<int>> spec_dims;
  spec->add_option("--out", spec_out, "Report JSON")->required();
  spec->add_option("--csv", spec_csv, "Plot-ready CSV of band energies");
  spec->add_option("--variants", spec_variants, "Comma-separated activations");
  spec->add_option("--bands", spec_bands, "Comma-separated lower band edges, starting at 0");
  spec->add_option("--seeds", spec_seeds, "Comma-separated seeds");
  spec->add_option("--iterations", spec_iters);
  spec->add_option("--batch", spec_batch);
  spec->add_option("--hidden-layers", spec_layers);
  spec->add_option("--hidden-width", spec_width);
  spec->add_option("--dims", spec_dims)->expected(3);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    print_error(err, "usage", e.what());
    return kExitUsage;
  }

  try {
    const RunConfig rc = load_config(config_path);

    if (synth->parsed()) {
      json pj = rc.phantom;
      if (synth_dims) pj["dims"] = *synth_dims;
      if (synth_spacing) pj["spacing"] = {*synth_spacing, *synth_spacing, *synth_spacing};
      if (synth_frames) pj["frames"] = *synth_frames;
      if (synth_hf) pj["hf_amplitude"] = *synth_hf;
      if (synth_hf_cycles) pj["hf_cycles"] = *synth_hf_cycles;
      const PhantomSpec ps = from_config(config_path, [&] { return io::phantom_from_json(pj); });
      const Phantom ph = generate_sequence(ps, seed.value_or(0));
      const fs::path dir = io::output_path(synth_out);
      io::save_sequence(dir / "sequence.json", ph.sequence);
      io::save_report(dir / "phantom.json", {{"seed", ph.seed}, {"phantom", io::to_json(ps)}});
      out << "wrote " << (dir / "sequence.json").string() << "\n";
      return kExitOk;
    }

    if (trn->parsed()) {
      const CineSequence seq = io::load_sequence(train_seq);
      json tj = rc.train;
      if (seed) tj["seed"] = *seed;
      if (train_iters) tj["iterations"] = *train_iters;
      if (train_lr) tj["learning_rate"] = *train_lr;
      if (train_mu) tj["mu"] = *train_mu;
      if (train_lambda) tj["lambda"] = *train_lambda;
      if (train_sim_batch) tj["similarity_batch"] = *train_sim_batch;
      if (train_reg_batch) tj["reg_batch"] = *train_reg_batch;
      if (train_threads) tj["threads"] = *train_threads;
      const TrainConfig tc = from_config(config_path, [&] { return io::train_from_json(tj); });
      const NetworkConfig net = build_network(rc.network, train_net, tc.seed, config_path);
      const fs::path ckpt_path = io::output_path(train_out);
      TrainResult result = [&] {
        try {
          return train(net, seq, tc, [&](const HistoryEntry& e) {
            out << "iter " << e.iteration << " loss " << e.total << " sim " << e.similarity << " reg "
                << e.regularization << " inv " << e.inversions << "\n";
          });
        } catch (const TrainingError& e) {
          const fs::path rescue = fs::path(ckpt_path).replace_extension(".last_good.json");
          io::save_checkpoint(rescue, {{net, e.last_good(), Normalization{seq.reference().extent()}}, tc,
                                       e.iteration() - 1});
          throw TrainingError(std::string(e.what()) + " (last good parameters saved to " + rescue.string() + ")",
                              e.last_good(), e.iteration());
        }
      }();
      io::save_checkpoint(ckpt_path, {result.model, tc, tc.iterations});
      if (!train_history.empty()) io::save_history_csv(io::output_path(train_history), result.history);
      out << "wrote " << ckpt_path.string() << "\n";
      return kExitOk;
    }

    if (reg->parsed()) {
      const io::Checkpoint ckpt = io::load_checkpoint(reg_ckpt);
      const fs::path out_path = io::output_path(reg_out);
      if (!reg_points.empty()) {
        const std::vector<Vec3> pts = read_points_csv(reg_points);
        const auto mapped = map_points(ckpt.model, pts, reg_t);
        const auto grads = deformation_gradients(ckpt.model, pts, reg_t);
        std::ostringstream csv;
        csv.precision(17);
        csv << "x,y,z,ux,uy,uz,det_f\n";
        for (std::size_t i = 0; i < pts.size(); ++i) {
          csv << pts[i][0] << ',' << pts[i][1] << ',' << pts[i][2] << ',' << mapped[i][0] - pts[i][0] << ','
              << mapped[i][1] - pts[i][1] << ',' << mapped[i][2] - pts[i][2] << ','
              << deformation_state(grads[i]).J << '\n';
        }
        io::write_text_atomic(out_path, csv.str());
      } else if (!reg_volume.empty()) {
        const ImageVolume tmpl = io::load_volume(reg_volume);
        ImageVolume warped(tmpl.dims, tmpl.spacing);
        std::vector<Vec3> centres;
        centres.reserve(voxel_count(tmpl.dims));
        for (int k = 0; k < tmpl.dims[2]; ++k) {
          for (int j = 0; j < tmpl.dims[1]; ++j) {
            for (int i = 0; i < tmpl.dims[0]; ++i) centres.push_back(voxel_center(tmpl.spacing, i, j, k));
          }
        }
        const auto mapped = map_points(ckpt.model, centres, reg_t);
        for (std::size_t v = 0; v < mapped.size(); ++v) {
          warped.intensities[v] = static_cast<float>(std::clamp(trilinear_sample(tmpl, mapped[v]), 0.0, 1.0));
        }
        if (tmpl.mask) {
          warped.mask = warp_mask(*tmpl.mask, tmpl.spacing, [&](const Vec3& x) {
            return map_points(ckpt.model, std::span(&x, 1), reg_t)[0];
          });
        }
        io::save_volume(out_path, warped);
      } else {
        throw UsageError("register needs --volume or --points");
      }
      out << "wrote " << out_path.string() << "\n";
      return kExitOk;
    }

    if (ev->parsed()) {
      const io::Checkpoint ckpt = io::load_checkpoint(eval_ckpt);
      const CineSequence seq = io::load_sequence(eval_seq);
      const int frame = eval_frame.value_or(static_cast<int>(seq.frames.size()) - 1);
      const MetricsRecord m = evaluate(ckpt.model, seq, frame);
      const fs::path out_path = io::output_path(eval_out);
      io::save_metrics(out_path, m);
      out << "dsc " << m.dsc << " jac_dev " << m.jac_dev << " landmark " << m.mean_landmark_error() << "\n";
      out << "wrote " << out_path.string() << "\n";
      return kExitOk;
    }

    if (spec->parsed()) {
      SpectraConfig sc;
      const json& sj = rc.spectra;
      if (!rc.phantom.empty() || spec_dims) {
        json pj = io::to_json(sc.phantom);
        for (const auto& [k, v] : rc.phantom.items()) pj[k] = v;
        if (spec_dims) pj["dims"] = *spec_dims;
        sc.phantom = from_config(config_path, [&] { return io::phantom_from_json(pj); });
      }
      sc.fit.iterations = spec_iters.value_or(sj.value("iterations", sc.fit.iterations));
      sc.fit.batch = spec_batch.value_or(sj.value("batch", sc.fit.batch));
      sc.fit.learning_rate = sj.value("learning_rate", sc.fit.learning_rate);
      sc.hidden_layers = spec_layers.value_or(sj.value("hidden_layers", sc.hidden_layers));
      sc.hidden_width = spec_width.value_or(sj.value("hidden_width", sc.hidden_width));
      sc.features = sj.value("features", sc.features);
      sc.sigma = sj.value("sigma", sc.sigma);
      sc.variants.clear();
      for (const std::string& v : split_csv(spec_variants)) sc.variants.push_back(activation_from_string(v));
      if (!spec_bands.empty()) {
        sc.band_edges.clear();
        for (const std::string& b : split_csv(spec_bands)) sc.band_edges.push_back(std::stod(b));
      }
      std::vector<std::uint64_t> seeds;
      if (spec_seeds) {
        for (const std::string& s : split_csv(*spec_seeds)) seeds.push_back(std::stoull(s));
      } else {
        seeds.push_back(seed.value_or(0));
      }
      json runs = json::array();
      std::ostringstream csv;
      csv.precision(17);
      csv << "seed,variant,band,lower_edge,energy\n";
      for (std::uint64_t s : seeds) {
        const BandEnergyReport r = run_spectra(sc, s);
        json run = io::to_json(r);
        run["seed"] = s;
        runs.push_back(run);
        for (std::size_t v = 0; v < r.variants.size(); ++v) {
          for (std::size_t b = 0; b < r.band_edges.size(); ++b) {
            csv << s << ',' << r.variants[v] << ',' << b << ',' << r.band_edges[b] << ',' << r.energies[v][b] << '\n';
          }
        }
        out << "seed " << s << " done\n";
      }
      json report{{"format", "myoreg-spectra"},
                  {"version", 1},
                  {"band_edges", sc.band_edges},
                  {"phantom", io::to_json(sc.phantom)},
                  {"iterations", sc.fit.iterations},
                  {"batch", sc.fit.batch},
                  {"runs", runs}};
      const fs::path out_path = io::output_path(spec_out);
      io::save_report(out_path, report);
      if (!spec_csv.empty()) io::write_text_atomic(io::output_path(spec_csv), csv.str());
      out << "wrote " << out_path.string() << "\n";
      return kExitOk;
    }
  } catch (const IoError& e) {
    print_error(err, "io", e.what());
    return kExitFailure;
  } catch (const UsageError& e) {
    print_error(err, "usage", e.what());
    return kExitUsage;
  } catch (const ConfigError& e) {
    print_error(err, "usage", e.what());
    return kExitUsage;
  } catch (const TrainingError& e) {
    print_error(err, "training", e.what());
    return kExitFailure;
  } catch (const std::invalid_argument& e) {
    print_error(err, "usage", std::string("invalid number: ") + e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    print_error(err, "internal", e.what());
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace myoreg
