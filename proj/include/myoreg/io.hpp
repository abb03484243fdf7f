#pragma once

// On-disk formats. A volume is a JSON header next to a raw little-endian
// float32 payload (x-fastest) with an optional uint8 mask payload and an
// optional landmark list. Checkpoints, metrics and reports are JSON; loss
// histories are CSV. Every write goes to a temporary file that is then
// renamed over the target.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>

#include <nlohmann/json.hpp>

#include "myoreg/errors.hpp"
#include "myoreg/metrics.hpp"
#include "myoreg/model.hpp"
#include "myoreg/phantom.hpp"
#include "myoreg/training.hpp"
#include "myoreg/volume.hpp"

namespace myoreg::io {

inline constexpr int kVolumeVersion = 1;
inline constexpr int kSequenceVersion = 1;
inline constexpr int kCheckpointVersion = 1;
inline constexpr const char* kOutputDirEnv = "MYOREG_OUTPUT_DIR";

// Stored content checksum does not match, or the payload is truncated.
class IntegrityError : public IoError {
 public:
  using IoError::IoError;
};

// File written by a different format version.
class VersionError : public IoError {
 public:
  VersionError(const std::string& what, int found, int expected)
      : IoError(what), found_(found), expected_(expected) {}
  int found() const { return found_; }
  int expected() const { return expected_; }

 private:
  int found_;
  int expected_;
};

// Receives non-fatal warnings (unknown header keys). Defaults to stderr.
using WarningHandler = std::function<void(const std::string&)>;
void set_warning_handler(WarningHandler handler);
void warn(const std::string& message);

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

// Relative paths resolve under $MYOREG_OUTPUT_DIR when it is set.
std::filesystem::path output_path(const std::filesystem::path& p);

void write_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
nlohmann::json read_json(const std::filesystem::path& path);

// header: <dir>/<stem>.json; payloads <stem>.raw and <stem>.mask.raw next to it.
void save_volume(const std::filesystem::path& header, const ImageVolume& vol);
ImageVolume load_volume(const std::filesystem::path& header);

// sequence.json listing frame headers (relative to its directory) and times.
void save_sequence(const std::filesystem::path& path, const CineSequence& seq);
CineSequence load_sequence(const std::filesystem::path& path);

struct Checkpoint {
  DeformationModel model;
  TrainConfig train;
  long iterations = 0;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// JSON forms. The *_from_json readers warn about unknown keys and throw
// ConfigError on wrong types or invalid values.
nlohmann::json to_json(const NetworkConfig& c);
NetworkConfig network_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_from_json(const nlohmann::json& j, TrainConfig base = {});
nlohmann::json to_json(const PhantomSpec& s);
PhantomSpec phantom_from_json(const nlohmann::json& j, PhantomSpec base = {});
nlohmann::json to_json(const MetricsRecord& m);
nlohmann::json to_json(const BandEnergyReport& r);

void save_metrics(const std::filesystem::path& path, const MetricsRecord& m);
void save_report(const std::filesystem::path& path, const nlohmann::json& report);
void save_history_csv(const std::filesystem::path& path, const TrainingHistory& h);

}  // namespace myoreg::io
