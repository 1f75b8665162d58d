#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "tomcoord/autodiff/params.hpp"
#include "tomcoord/runner/config.hpp"

namespace tomcoord::runner {

namespace fs = std::filesystem;

// A prerequisite artifact is absent, or was produced under other settings.
class StageMissing : public std::runtime_error {
 public:
  StageMissing(Stage stage, const std::string& detail);
  Stage stage;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Who produced an artifact.
struct Stamp {
  Stage stage = Stage::population;
  std::string hash;
  std::uint64_t seed = 0;
};
Stamp stamp_for(const RunConfig& cfg, Stage s);

// $TOMCOORD_OUT, or ./tomcoord-out when unset.
fs::path output_root();
fs::path run_dir(const RunConfig& cfg);

// JSON document {"stamp": {...}, ...body}.
void write_json(const fs::path& path, const nlohmann::json& body, const Stamp& stamp);
nlohmann::json read_json(const fs::path& path, const Stamp& expected);

// "TOMCKPT1\n", one stamp line, then f64 segments.
void write_checkpoint(const fs::path& path, const ad::ParamVector& params, const Stamp& stamp);
ad::ParamVector read_checkpoint(const fs::path& path, const Stamp& expected);

// True when the file exists and carries the expected stamp.
bool has_artifact(const fs::path& path, const Stamp& expected);

void write_file(const fs::path& path, const std::string& text);
std::string read_file(const fs::path& path);

}  // namespace tomcoord::runner
