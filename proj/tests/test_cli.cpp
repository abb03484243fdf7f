#include <fstream>
#include <sstream>

#include <unistd.h>

#include "doctest.h"
#include "myoreg/cli.hpp"
#include "myoreg/io.hpp"

using namespace myoreg;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "myoreg");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

struct Workspace {
  fs::path dir;
  Workspace() : dir(fs::temp_directory_path() / ("myoreg_cli_" + std::to_string(::getpid()))) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Workspace() { fs::remove_all(dir); }
  std::string operator/(const std::string& name) const { return (dir / name).string(); }
};

const std::vector<std::string> kSmallSynth{"--dims", "20", "20", "14", "--spacing", "2.5", "--frames", "3"};

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"frobnicate"}).code == kExitUsage);
  CHECK(cli({"eval", "--checkpoint", "a", "--sequence", "b", "--out", "c", "--bogus"}).code == kExitUsage);
  const Run r = cli({"synth"});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("\"error\":\"usage\"") != std::string::npos);
  CHECK(cli({"--help"}).code == kExitOk);
}

TEST_CASE("bad input files exit with code 1 and name the path") {
  Workspace ws;
  const Run r = cli({"eval", "--checkpoint", ws / "missing.json", "--sequence", ws / "s.json", "--out", ws / "m.json"});
  CHECK(r.code == kExitFailure);
  CHECK(r.err.find("missing.json") != std::string::npos);
  std::ofstream(ws / "bad.json") << "{ not json";
  CHECK(cli({"synth", "--out", ws / "seq", "--config", ws / "bad.json"}).code == kExitFailure);
  std::ofstream(ws / "badval.json") << R"({"phantom": {"frames": 1}})";
  const Run v = cli({"synth", "--out", ws / "seq", "--config", ws / "badval.json"});
  CHECK(v.code == kExitFailure);
  CHECK(v.err.find("badval.json") != std::string::npos);
}

TEST_CASE("synth, zero-iteration train and eval give identity metrics") {
  Workspace ws;
  std::vector<std::string> synth{"synth", "--out", ws / "seq", "--seed", "4"};
  synth.insert(synth.end(), kSmallSynth.begin(), kSmallSynth.end());
  REQUIRE(cli(synth).code == kExitOk);
  REQUIRE(cli({"train", "--sequence", ws / "seq/sequence.json", "--out", ws / "ck.json", "--iterations", "0",
               "--hidden-layers", "1", "--hidden-width", "4"})
              .code == kExitOk);
  const Run e = cli({"eval", "--checkpoint", ws / "ck.json", "--sequence", ws / "seq/sequence.json", "--out",
                     ws / "m.json"});
  REQUIRE(e.code == kExitOk);
  const nlohmann::json m = io::read_json(ws / "m.json");
  CHECK(m["frame"] == 2);
  CHECK(m["dsc"].get<double>() < 1.0);
  CHECK(m["dsc"].get<double>() > 0.3);
  // zero iterations leaves the Xavier initialization, which is not the identity; check
  // only the shape here and the identity values through a zero checkpoint below.
  CHECK(m["levels"].size() == 3);

  io::Checkpoint ck = io::load_checkpoint(ws / "ck.json");
  for (double& v : ck.model.params.flat()) v = 0.0;
  io::save_checkpoint(ws / "zero.json", ck);
  REQUIRE(cli({"eval", "--checkpoint", ws / "zero.json", "--sequence", ws / "seq/sequence.json", "--out",
               ws / "z.json"})
              .code == kExitOk);
  const nlohmann::json z = io::read_json(ws / "z.json");
  CHECK(z["jac_dev"] == 0.0);
  CHECK(z["landmark_errors"] == z["landmark_baseline"]);
}

TEST_CASE("fixed-seed runs produce byte-identical files") {
  Workspace ws;
  for (const char* run : {"a", "b"}) {
    std::vector<std::string> synth{"synth", "--out", ws / (std::string(run) + "/seq"), "--seed", "2"};
    synth.insert(synth.end(), kSmallSynth.begin(), kSmallSynth.end());
    REQUIRE(cli(synth).code == kExitOk);
    REQUIRE(cli({"train", "--sequence", ws / (std::string(run) + "/seq/sequence.json"), "--out",
                 ws / (std::string(run) + "/ck.json"), "--iterations", "15", "--hidden-layers", "2",
                 "--hidden-width", "8", "--similarity-batch", "100", "--reg-batch", "100", "--seed", "7",
                 "--history", ws / (std::string(run) + "/h.csv")})
                .code == kExitOk);
  }
  for (const char* f : {"seq/frame_001.raw", "seq/frame_001.json", "seq/sequence.json", "ck.json", "h.csv"}) {
    CAPTURE(f);
    CHECK(slurp(ws / (std::string("a/") + f)) == slurp(ws / (std::string("b/") + f)));
  }
}

TEST_CASE("register exports displacements and warped volumes") {
  Workspace ws;
  std::vector<std::string> synth{"synth", "--out", ws / "seq"};
  synth.insert(synth.end(), kSmallSynth.begin(), kSmallSynth.end());
  REQUIRE(cli(synth).code == kExitOk);
  REQUIRE(cli({"train", "--sequence", ws / "seq/sequence.json", "--out", ws / "ck.json", "--iterations", "2",
               "--hidden-layers", "1", "--hidden-width", "4", "--activation", "ffs", "--features", "4"})
              .code == kExitOk);
  std::ofstream(ws / "pts.csv") << "x,y,z\n1,2,3\n10.5,20,7\n";
  REQUIRE(cli({"register", "--checkpoint", ws / "ck.json", "--points", ws / "pts.csv", "--t", "0.5", "--out",
               ws / "disp.csv"})
              .code == kExitOk);
  std::ifstream in(ws / "disp.csv");
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 3);
  REQUIRE(cli({"register", "--checkpoint", ws / "ck.json", "--volume", ws / "seq/frame_002.json", "--out",
               ws / "warped.json"})
              .code == kExitOk);
  const ImageVolume w = io::load_volume(ws / "warped.json");
  CHECK(w.dims == Dims3{20, 20, 14});
  CHECK(w.mask.has_value());
  CHECK(cli({"register", "--checkpoint", ws / "ck.json", "--out", ws / "x"}).code == kExitUsage);
}

TEST_CASE("spectra report has one energy per requested band") {
  Workspace ws;
  std::ofstream(ws / "cfg.json") << R"({"phantom": {"dims": [16, 16, 8], "spacing": [4, 4, 4], "r_inner": 10,
    "r_outer": 20, "contraction": 50}})";
  const Run r = cli({"spectra", "--config", ws / "cfg.json", "--variants", "tanh,ffs", "--bands", "0,2,4,6",
                     "--iterations", "3", "--batch", "16", "--hidden-layers", "1", "--hidden-width", "8", "--out",
                     ws / "rep.json", "--csv", ws / "rep.csv"});
  REQUIRE(r.code == kExitOk);
  const nlohmann::json j = io::read_json(ws / "rep.json");
  REQUIRE(j["runs"].size() == 1);
  const auto& variants = j["runs"][0]["variants"];
  REQUIRE(variants.size() == 2);
  for (const auto& v : variants) CHECK(v["band_energy"].size() == 4);
  CHECK(cli({"spectra", "--variants", "relu", "--out", ws / "x.json"}).code == kExitUsage);
}
