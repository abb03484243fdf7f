#include "myoreg/io.hpp"

#include <algorithm>
#include <bit>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>

#include <zlib.h>

namespace myoreg::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::mutex warning_mutex;
WarningHandler warning_handler;

void check_keys(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) warn(where + ": ignoring unknown key '" + key + "'");
  }
}

template <class T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + ": bad value for '" + key + "': " + e.what());
  }
}

template <class T>
T require(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw IoError(where + ": missing key '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw IoError(where + ": bad value for '" + key + "': " + e.what());
  }
}

void check_version(const json& j, const char* format, int expected, const fs::path& path) {
  const std::string where = path.string();
  const auto found_format = require<std::string>(j, "format", where);
  if (found_format != format) throw IoError(where + ": expected format '" + format + "', found '" + found_format + "'");
  const int version = require<int>(j, "version", where);
  if (version != expected) {
    throw VersionError(where + ": format version " + std::to_string(version) + " is not supported (expected " +
                           std::to_string(expected) + "); re-export the file with this release",
                       version, expected);
  }
}

template <class T>
void append_le(std::vector<std::uint8_t>& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<std::uint8_t, sizeof(T)> b;
  std::memcpy(b.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
  out.insert(out.end(), b.begin(), b.end());
}

template <class T>
T read_le(const std::uint8_t* p) {
  std::array<std::uint8_t, sizeof(T)> b;
  std::memcpy(b.data(), p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
  T v;
  std::memcpy(&v, b.data(), sizeof(T));
  return v;
}

std::string stem_of(const fs::path& header) {
  std::string s = header.filename().string();
  if (s.size() > 5 && s.ends_with(".json")) s.resize(s.size() - 5);
  return s;
}

json vec3(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }

Vec3 vec3_from(const json& j, const std::string& where) {
  try {
    const auto v = j.get<std::vector<double>>();
    if (v.size() != 3) throw ConfigError(where + ": expected 3 components");
    return {v[0], v[1], v[2]};
  } catch (const json::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

}  // namespace

void set_warning_handler(WarningHandler handler) {
  std::lock_guard lock(warning_mutex);
  warning_handler = std::move(handler);
}

void warn(const std::string& message) {
  std::lock_guard lock(warning_mutex);
  if (warning_handler) {
    warning_handler(message);
  } else {
    std::cerr << "warning: " << message << "\n";
  }
}

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  std::size_t offset = 0;
  while (offset < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - offset, 1u << 30);
    crc = ::crc32(crc, bytes.data() + offset, static_cast<uInt>(n));
    offset += n;
  }
  return static_cast<std::uint32_t>(crc);
}

fs::path output_path(const fs::path& p) {
  if (p.is_absolute()) return p;
  const char* dir = std::getenv(kOutputDirEnv);
  if (dir == nullptr || *dir == '\0') return p;
  return fs::path(dir) / p;
}

void write_atomic(const fs::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(tmp.string() + ": cannot open for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError(tmp.string() + ": write failed");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError(path.string() + ": rename failed: " + ec.message());
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  write_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open for reading");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

json read_json(const fs::path& path) {
  const auto bytes = read_bytes(path);
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw IoError(path.string() + ": invalid JSON: " + e.what());
  }
}

void save_volume(const fs::path& header, const ImageVolume& vol) {
  vol.validate();
  const std::string stem = stem_of(header);
  const fs::path dir = header.parent_path();

  std::vector<std::uint8_t> payload;
  payload.reserve(vol.intensities.size() * 4);
  for (float v : vol.intensities) append_le(payload, v);
  const auto [lo, hi] = std::minmax_element(vol.intensities.begin(), vol.intensities.end());

  json h;
  h["format"] = "myoreg-volume";
  h["version"] = kVolumeVersion;
  h["dims"] = {vol.dims[0], vol.dims[1], vol.dims[2]};
  h["spacing"] = vec3(vol.spacing);
  h["dtype"] = "float32-le";
  h["order"] = "x-fastest";
  h["intensity_range"] = {vol.intensities.empty() ? 0.0f : *lo, vol.intensities.empty() ? 0.0f : *hi};
  h["payload"] = stem + ".raw";
  h["payload_crc32"] = crc32(payload);
  write_atomic(dir / (stem + ".raw"), payload);
  if (vol.mask) {
    h["mask"] = stem + ".mask.raw";
    h["mask_crc32"] = crc32(vol.mask->data);
    write_atomic(dir / (stem + ".mask.raw"), vol.mask->data);
  }
  if (!vol.landmarks.empty()) {
    json lm = json::array();
    for (const Vec3& p : vol.landmarks) lm.push_back(vec3(p));
    h["landmarks"] = lm;
  }
  write_text_atomic(header, h.dump(2) + "\n");
}

ImageVolume load_volume(const fs::path& header) {
  const json h = read_json(header);
  const std::string where = header.string();
  check_version(h, "myoreg-volume", kVolumeVersion, header);
  check_keys(h,
             {"format", "version", "dims", "spacing", "dtype", "order", "intensity_range", "payload", "payload_crc32",
              "mask", "mask_crc32", "landmarks"},
             where);
  if (require<std::string>(h, "dtype", where) != "float32-le") throw IoError(where + ": unsupported dtype");
  if (require<std::string>(h, "order", where) != "x-fastest") throw IoError(where + ": unsupported order");
  const auto dims = require<std::vector<int>>(h, "dims", where);
  if (dims.size() != 3) throw IoError(where + ": dims must have 3 entries");
  ImageVolume vol;
  vol.dims = {dims[0], dims[1], dims[2]};
  for (int d : dims) {
    if (d < 1) throw IoError(where + ": dims must be positive");
  }
  try {
    vol.spacing = vec3_from(h.at("spacing"), where + ": spacing");
  } catch (const ConfigError& e) {
    throw IoError(e.what());
  }
  const std::size_t n = voxel_count(vol.dims);
  const fs::path dir = header.parent_path();

  const fs::path payload_path = dir / require<std::string>(h, "payload", where);
  const auto payload = read_bytes(payload_path);
  if (payload.size() != n * 4) {
    throw IntegrityError(payload_path.string() + ": payload has " + std::to_string(payload.size()) +
                         " bytes, expected " + std::to_string(n * 4));
  }
  if (crc32(payload) != require<std::uint32_t>(h, "payload_crc32", where)) {
    throw IntegrityError(payload_path.string() + ": checksum mismatch");
  }
  vol.intensities.resize(n);
  for (std::size_t i = 0; i < n; ++i) vol.intensities[i] = read_le<float>(payload.data() + 4 * i);

  if (h.contains("mask")) {
    const fs::path mask_path = dir / require<std::string>(h, "mask", where);
    auto bytes = read_bytes(mask_path);
    if (bytes.size() != n) throw IntegrityError(mask_path.string() + ": mask payload has the wrong length");
    if (crc32(bytes) != require<std::uint32_t>(h, "mask_crc32", where)) {
      throw IntegrityError(mask_path.string() + ": checksum mismatch");
    }
    BinaryMask m(vol.dims);
    m.data = std::move(bytes);
    vol.mask = std::move(m);
  }
  if (h.contains("landmarks")) {
    try {
      for (const auto& p : h.at("landmarks")) vol.landmarks.push_back(vec3_from(p, where + ": landmarks"));
    } catch (const ConfigError& e) {
      throw IoError(e.what());
    }
  }
  try {
    vol.validate();
  } catch (const UsageError& e) {
    throw IoError(where + ": " + e.what());
  }
  return vol;
}

void save_sequence(const fs::path& path, const CineSequence& seq) {
  seq.validate();
  const fs::path dir = path.parent_path();
  json j;
  j["format"] = "myoreg-sequence";
  j["version"] = kSequenceVersion;
  j["times"] = seq.times;
  j["reference_index"] = seq.reference_index;
  json frames = json::array();
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%03zu.json", i);
    save_volume(dir / name, seq.frames[i]);
    frames.push_back(name);
  }
  j["frames"] = frames;
  write_text_atomic(path, j.dump(2) + "\n");
}

CineSequence load_sequence(const fs::path& path) {
  const json j = read_json(path);
  const std::string where = path.string();
  check_version(j, "myoreg-sequence", kSequenceVersion, path);
  check_keys(j, {"format", "version", "times", "reference_index", "frames"}, where);
  CineSequence seq;
  seq.times = require<std::vector<double>>(j, "times", where);
  seq.reference_index = require<int>(j, "reference_index", where);
  for (const auto& name : require<std::vector<std::string>>(j, "frames", where)) {
    seq.frames.push_back(load_volume(path.parent_path() / name));
  }
  try {
    seq.validate();
  } catch (const ConfigError& e) {
    throw IoError(where + ": " + e.what());
  }
  return seq;
}

json to_json(const NetworkConfig& c) {
  json j;
  j["activation"] = to_string(c.activation);
  j["hidden_layers"] = c.hidden_layers;
  j["hidden_width"] = c.hidden_width;
  j["omega0"] = c.omega0;
  if (c.encoder) {
    j["encoder"] = {{"features", c.encoder->features()},
                    {"input_dim", 3},
                    {"sigma", c.encoder->sigma()},
                    {"seed", c.encoder->seed()},
                    {"matrix", c.encoder->matrix()}};
  }
  return j;
}

NetworkConfig network_from_json(const json& j) {
  const std::string where = "network";
  check_keys(j, {"activation", "hidden_layers", "hidden_width", "omega0", "encoder"}, where);
  NetworkConfig c;
  c.activation = activation_from_string(get_or<std::string>(j, "activation", to_string(c.activation), where));
  c.hidden_layers = get_or(j, "hidden_layers", c.hidden_layers, where);
  c.hidden_width = get_or(j, "hidden_width", c.hidden_width, where);
  c.omega0 = get_or(j, "omega0", c.omega0, where);
  if (j.contains("encoder")) {
    const json& e = j.at("encoder");
    check_keys(e, {"features", "input_dim", "sigma", "seed", "matrix"}, where + ".encoder");
    const int features = get_or(e, "features", 8, where);
    const double sigma = get_or(e, "sigma", 1.0, where);
    const auto seed = get_or<std::uint64_t>(e, "seed", 0, where);
    if (get_or(e, "input_dim", 3, where) != 3) throw ConfigError(where + ".encoder: input_dim must be 3");
    try {
      if (e.contains("matrix")) {
        c.encoder = FourierEncoder(features, sigma, seed, get_or<std::vector<double>>(e, "matrix", {}, where));
      } else {
        c.encoder = FourierEncoder(features, sigma, seed);
      }
    } catch (const UsageError& err) {
      throw ConfigError(where + ".encoder: " + err.what());
    }
  }
  c.validate();
  return c;
}

json to_json(const TrainConfig& c) {
  return {{"mu", c.mu},
          {"lambda", c.lambda},
          {"learning_rate", c.learning_rate},
          {"iterations", c.iterations},
          {"similarity_batch", c.similarity_batch},
          {"reg_batch", c.reg_batch},
          {"seed", c.seed},
          {"adam", {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"epsilon", c.adam.epsilon}}},
          {"history_every", c.history_every},
          {"chunk_size", c.chunk_size},
          {"threads", c.threads}};
}

TrainConfig train_from_json(const json& j, TrainConfig c) {
  const std::string where = "train";
  check_keys(j,
             {"mu", "lambda", "learning_rate", "iterations", "similarity_batch", "reg_batch", "seed", "adam",
              "history_every", "chunk_size", "threads"},
             where);
  c.mu = get_or(j, "mu", c.mu, where);
  c.lambda = get_or(j, "lambda", c.lambda, where);
  c.learning_rate = get_or(j, "learning_rate", c.learning_rate, where);
  c.iterations = get_or(j, "iterations", c.iterations, where);
  c.similarity_batch = get_or(j, "similarity_batch", c.similarity_batch, where);
  c.reg_batch = get_or(j, "reg_batch", c.reg_batch, where);
  c.seed = get_or(j, "seed", c.seed, where);
  c.history_every = get_or(j, "history_every", c.history_every, where);
  c.chunk_size = get_or(j, "chunk_size", c.chunk_size, where);
  c.threads = get_or(j, "threads", c.threads, where);
  if (j.contains("adam")) {
    const json& a = j.at("adam");
    check_keys(a, {"beta1", "beta2", "epsilon"}, where + ".adam");
    c.adam.beta1 = get_or(a, "beta1", c.adam.beta1, where);
    c.adam.beta2 = get_or(a, "beta2", c.adam.beta2, where);
    c.adam.epsilon = get_or(a, "epsilon", c.adam.epsilon, where);
  }
  c.validate();
  return c;
}

json to_json(const PhantomSpec& s) {
  return {{"dims", {s.dims[0], s.dims[1], s.dims[2]}},
          {"spacing", vec3(s.spacing)},
          {"frames", s.frames},
          {"r_inner", s.r_inner},
          {"r_outer", s.r_outer},
          {"contraction", s.contraction},
          {"twist", s.twist},
          {"hf_amplitude", s.hf_amplitude},
          {"hf_cycles", s.hf_cycles},
          {"z_begin_fraction", s.z_begin_fraction},
          {"z_end_fraction", s.z_end_fraction},
          {"texture_max_cycles", s.texture_max_cycles},
          {"texture_modes", s.texture_modes},
          {"landmark_count", s.landmark_count}};
}

PhantomSpec phantom_from_json(const json& j, PhantomSpec s) {
  const std::string where = "phantom";
  check_keys(j,
             {"dims", "spacing", "frames", "r_inner", "r_outer", "contraction", "twist", "hf_amplitude", "hf_cycles",
              "z_begin_fraction", "z_end_fraction", "texture_max_cycles", "texture_modes", "landmark_count"},
             where);
  if (j.contains("dims")) {
    const auto d = get_or<std::vector<int>>(j, "dims", {}, where);
    if (d.size() != 3) throw ConfigError(where + ": dims must have 3 entries");
    s.dims = {d[0], d[1], d[2]};
  }
  if (j.contains("spacing")) s.spacing = vec3_from(j.at("spacing"), where + ": spacing");
  s.frames = get_or(j, "frames", s.frames, where);
  s.r_inner = get_or(j, "r_inner", s.r_inner, where);
  s.r_outer = get_or(j, "r_outer", s.r_outer, where);
  s.contraction = get_or(j, "contraction", s.contraction, where);
  s.twist = get_or(j, "twist", s.twist, where);
  s.hf_amplitude = get_or(j, "hf_amplitude", s.hf_amplitude, where);
  s.hf_cycles = get_or(j, "hf_cycles", s.hf_cycles, where);
  s.z_begin_fraction = get_or(j, "z_begin_fraction", s.z_begin_fraction, where);
  s.z_end_fraction = get_or(j, "z_end_fraction", s.z_end_fraction, where);
  s.texture_max_cycles = get_or(j, "texture_max_cycles", s.texture_max_cycles, where);
  s.texture_modes = get_or(j, "texture_modes", s.texture_modes, where);
  s.landmark_count = get_or(j, "landmark_count", s.landmark_count, where);
  s.validate();
  return s;
}

namespace {

std::vector<std::uint8_t> param_bytes(std::span<const double> values) {
  std::vector<std::uint8_t> out;
  out.reserve(values.size() * 8);
  for (double v : values) append_le(out, v);
  return out;
}

}  // namespace

void save_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
  json j;
  j["format"] = "myoreg-checkpoint";
  j["version"] = kCheckpointVersion;
  j["network"] = to_json(ckpt.model.config);
  j["extent"] = vec3(ckpt.model.norm.extent);
  j["train"] = to_json(ckpt.train);
  j["iterations"] = ckpt.iterations;
  const std::span<const double> flat = ckpt.model.params.flat();
  j["parameters"] = std::vector<double>(flat.begin(), flat.end());
  j["parameters_crc32"] = crc32(param_bytes(flat));
  write_text_atomic(path, j.dump(1) + "\n");
}

Checkpoint load_checkpoint(const fs::path& path) {
  const json j = read_json(path);
  const std::string where = path.string();
  check_version(j, "myoreg-checkpoint", kCheckpointVersion, path);
  check_keys(j, {"format", "version", "network", "extent", "train", "iterations", "parameters", "parameters_crc32"},
             where);
  Checkpoint c;
  try {
    c.model.config = network_from_json(j.at("network"));
    c.model.norm.extent = vec3_from(j.at("extent"), where + ": extent");
    c.train = train_from_json(j.at("train"));
  } catch (const ConfigError& e) {
    throw IoError(where + ": " + e.what());
  } catch (const json::exception& e) {
    throw IoError(where + ": " + e.what());
  }
  c.iterations = require<long>(j, "iterations", where);
  auto flat = require<std::vector<double>>(j, "parameters", where);
  if (crc32(param_bytes(flat)) != require<std::uint32_t>(j, "parameters_crc32", where)) {
    throw IntegrityError(where + ": parameter checksum mismatch");
  }
  try {
    c.model.params = Parameters::from_flat(c.model.config, std::move(flat));
  } catch (const UsageError& e) {
    throw IntegrityError(where + ": " + e.what());
  }
  return c;
}

json to_json(const MetricsRecord& m) {
  static const char* names[3] = {"basal", "mid", "apical"};
  json levels = json::object();
  for (int l = 0; l < 3; ++l) {
    const SliceMetrics& s = m.levels[l];
    levels[names[l]] = {{"slice", s.slice},
                        {"dsc", s.dsc},
                        {"mcd", s.mcd ? json(*s.mcd) : json(nullptr)},
                        {"jac_dev", s.jac_dev}};
  }
  return {{"format", "myoreg-metrics"},
          {"version", 1},
          {"frame", m.frame},
          {"t", m.t},
          {"levels", levels},
          {"dsc", m.dsc},
          {"jac_dev", m.jac_dev},
          {"inversion_fraction", m.inversion_fraction},
          {"landmark_errors", m.landmark_errors},
          {"landmark_baseline", m.landmark_baseline},
          {"mean_landmark_error", m.mean_landmark_error()},
          {"mean_landmark_baseline", m.mean_landmark_baseline()}};
}

json to_json(const BandEnergyReport& r) {
  json variants = json::array();
  for (std::size_t v = 0; v < r.variants.size(); ++v) {
    variants.push_back({{"name", r.variants[v]}, {"band_energy", r.energies[v]}, {"total", r.totals[v]}});
  }
  return {{"band_edges", r.band_edges}, {"variants", variants}};
}

void save_metrics(const fs::path& path, const MetricsRecord& m) { write_text_atomic(path, to_json(m).dump(2) + "\n"); }

void save_report(const fs::path& path, const json& report) { write_text_atomic(path, report.dump(2) + "\n"); }

void save_history_csv(const fs::path& path, const TrainingHistory& h) {
  std::ostringstream out;
  out.precision(17);
  out << "iteration,total,similarity,regularization,inversions\n";
  for (const HistoryEntry& e : h.entries) {
    out << e.iteration << ',' << e.total << ',' << e.similarity << ',' << e.regularization << ',' << e.inversions
        << '\n';
  }
  write_text_atomic(path, out.str());
}

}  // namespace myoreg::io
