#include <cstdlib>
#include <fstream>
#include <random>

#include <unistd.h>

#include "doctest.h"
#include "myoreg/io.hpp"

using namespace myoreg;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / ("myoreg_io_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

ImageVolume random_volume(std::uint64_t seed) {
  ImageVolume v({8, 8, 8}, {1.0, 1.25, 2.0});
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (float& x : v.intensities) x = u(rng);
  BinaryMask m(v.dims);
  for (auto& b : m.data) b = u(rng) > 0.7f;
  v.mask = m;
  v.landmarks = {{1.0 / 3.0, 2.5, 7.125}, {0.1, 0.2, 0.3}};
  return v;
}

void flip_byte(const fs::path& p, std::size_t offset) {
  std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
  f.seekg(static_cast<std::streamoff>(offset));
  char c;
  f.get(c);
  f.seekp(static_cast<std::streamoff>(offset));
  f.put(static_cast<char>(c ^ 0x01));
}

}  // namespace

TEST_CASE("crc32 check value") {
  const std::string s = "123456789";
  CHECK(io::crc32(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size())) == 0xCBF43926u);
}

TEST_CASE("volume round trip is bit-identical") {
  TempDir dir;
  const ImageVolume v = random_volume(1);
  io::save_volume(dir.path / "vol.json", v);
  const ImageVolume r = io::load_volume(dir.path / "vol.json");
  CHECK(r.dims == v.dims);
  CHECK(r.spacing == v.spacing);
  CHECK(r.intensities == v.intensities);
  REQUIRE(r.mask.has_value());
  CHECK(r.mask->data == v.mask->data);
  CHECK(r.landmarks == v.landmarks);
  CHECK(fs::file_size(dir.path / "vol.raw") == 8 * 8 * 8 * 4);
  CHECK_FALSE(fs::exists(dir.path / "vol.raw.tmp"));
}

TEST_CASE("corruption and truncation are detected") {
  TempDir dir;
  io::save_volume(dir.path / "vol.json", random_volume(2));
  flip_byte(dir.path / "vol.raw", 777);
  CHECK_THROWS_AS(io::load_volume(dir.path / "vol.json"), io::IntegrityError);

  io::save_volume(dir.path / "vol.json", random_volume(2));
  flip_byte(dir.path / "vol.mask.raw", 5);
  CHECK_THROWS_AS(io::load_volume(dir.path / "vol.json"), io::IntegrityError);

  io::save_volume(dir.path / "vol.json", random_volume(2));
  fs::resize_file(dir.path / "vol.raw", 100);
  CHECK_THROWS_AS(io::load_volume(dir.path / "vol.json"), io::IntegrityError);
  CHECK_THROWS_AS(io::load_volume(dir.path / "missing.json"), IoError);
}

TEST_CASE("version mismatch and unknown keys") {
  TempDir dir;
  io::save_volume(dir.path / "vol.json", random_volume(3));
  nlohmann::json h = io::read_json(dir.path / "vol.json");
  h["comment"] = "added by hand";
  io::write_text_atomic(dir.path / "vol.json", h.dump());
  std::vector<std::string> warnings;
  io::set_warning_handler([&](const std::string& w) { warnings.push_back(w); });
  CHECK_NOTHROW(io::load_volume(dir.path / "vol.json"));
  io::set_warning_handler({});
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("comment") != std::string::npos);

  h["version"] = 99;
  io::write_text_atomic(dir.path / "vol.json", h.dump());
  try {
    (void)io::load_volume(dir.path / "vol.json");
    FAIL("expected VersionError");
  } catch (const io::VersionError& e) {
    CHECK(e.found() == 99);
    CHECK(e.expected() == io::kVolumeVersion);
  }
}

TEST_CASE("checkpoint round trip preserves forward outputs bit-exactly") {
  TempDir dir;
  for (Activation a : {Activation::Tanh, Activation::Siren, Activation::FFSiren, Activation::AM, Activation::PSK,
                       Activation::QPSK}) {
    CAPTURE(to_string(a));
    NetworkConfig c;
    c.hidden_layers = 2;
    c.hidden_width = 6;
    c.activation = a;
    if (a != Activation::Tanh && a != Activation::Siren) c.encoder = FourierEncoder(8, 1.0, 4);
    io::Checkpoint ck{{c, init_params(c, 9), Normalization{{64.0, 48.0, 32.0}}}, TrainConfig{}, 123};
    ck.train.mu = 1.0 / 3.0;
    io::save_checkpoint(dir.path / "ck.json", ck);
    const io::Checkpoint r = io::load_checkpoint(dir.path / "ck.json");
    CHECK(r.iterations == 123);
    CHECK(r.train.mu == ck.train.mu);
    CHECK(r.model.config.activation == a);
    CHECK(std::equal(r.model.params.flat().begin(), r.model.params.flat().end(), ck.model.params.flat().begin()));
    if (c.encoder) CHECK(r.model.config.encoder->matrix() == c.encoder->matrix());
    for (const Vec3& x : {Vec3{1.0, 2.0, 3.0}, Vec3{40.1, 17.3, 29.9}}) {
      CHECK(r.model.map(x, 0.37) == ck.model.map(x, 0.37));
    }
  }
}

TEST_CASE("checkpoint parameter tampering is detected") {
  TempDir dir;
  NetworkConfig c;
  c.hidden_layers = 1;
  c.hidden_width = 4;
  io::save_checkpoint(dir.path / "ck.json", {{c, init_params(c, 1), Normalization{}}, {}, 0});
  nlohmann::json j = io::read_json(dir.path / "ck.json");
  j["parameters"][3] = j["parameters"][3].get<double>() + 1e-9;
  io::write_text_atomic(dir.path / "ck.json", j.dump());
  CHECK_THROWS_AS(io::load_checkpoint(dir.path / "ck.json"), io::IntegrityError);
}

TEST_CASE("sequence round trip") {
  TempDir dir;
  CineSequence seq;
  for (int i = 0; i < 3; ++i) seq.frames.push_back(random_volume(10 + i));
  seq.times = {0.0, 0.5, 1.0};
  io::save_sequence(dir.path / "sequence.json", seq);
  const CineSequence r = io::load_sequence(dir.path / "sequence.json");
  REQUIRE(r.frames.size() == 3);
  CHECK(r.times == seq.times);
  CHECK(r.frames[2].intensities == seq.frames[2].intensities);
}

TEST_CASE("config readers") {
  const TrainConfig t = io::train_from_json({{"mu", 0.0}, {"iterations", 7}});
  CHECK(t.mu == 0.0);
  CHECK(t.iterations == 7);
  CHECK(t.learning_rate == 1e-3);
  CHECK_THROWS_AS(io::train_from_json({{"iterations", "many"}}), ConfigError);
  CHECK_THROWS_AS(io::train_from_json({{"learning_rate", -1.0}}), ConfigError);
  const PhantomSpec p = io::phantom_from_json({{"dims", {48, 48, 32}}, {"hf_amplitude", 0.5}});
  CHECK(p.dims == Dims3{48, 48, 32});
  CHECK(io::phantom_from_json(io::to_json(p)).hf_amplitude == 0.5);
  CHECK_THROWS_AS(io::network_from_json({{"activation", "ffs"}}), ConfigError);
  CHECK(io::network_from_json({{"activation", "ffs"}, {"encoder", {{"features", 8}, {"sigma", 1.0}}}})
            .encoder->features() == 8);
}

TEST_CASE("metrics JSON marks undefined contour distances as null") {
  MetricsRecord m;
  m.levels[0].mcd = 1.5;
  const nlohmann::json j = io::to_json(m);
  CHECK(j["levels"]["basal"]["mcd"] == 1.5);
  CHECK(j["levels"]["mid"]["mcd"].is_null());
}

TEST_CASE("history CSV and output directory override") {
  TempDir dir;
  TrainingHistory h;
  h.entries.push_back({100, 0.5, 0.25, 10.0, 2});
  ::setenv(io::kOutputDirEnv, dir.path.c_str(), 1);
  const fs::path p = io::output_path("sub/h.csv");
  ::unsetenv(io::kOutputDirEnv);
  CHECK(p == dir.path / "sub/h.csv");
  CHECK(io::output_path("rel.csv") == fs::path("rel.csv"));
  io::save_history_csv(p, h);
  std::ifstream in(p);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == "iteration,total,similarity,regularization,inversions");
  CHECK(row == "100,0.5,0.25,10,2");
}
