#include "tomcoord/runner/store.hpp"

#include <bit>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

namespace tomcoord::runner {

using nlohmann::json;

namespace {

constexpr char kMagic[] = "TOMCKPT1\n";

json stamp_json(const Stamp& s) { return {{"stage", to_string(s.stage)}, {"config_hash", s.hash}, {"seed", s.seed}}; }

void check_stamp(const json& j, const Stamp& expected, const fs::path& path) {
  if (!j.is_object() || !j.contains("config_hash")) {
    throw StageMissing(expected.stage, path.string() + " carries no stamp");
  }
  if (j.value("stage", "") != to_string(expected.stage) || j.value("config_hash", "") != expected.hash ||
      j.value("seed", std::uint64_t{0}) != expected.seed) {
    throw StageMissing(expected.stage, path.string() + " was produced by config " + j.value("config_hash", "?") +
                                           ", current is " + expected.hash + "; rerun the stage");
  }
}

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::istream& is) {
  T v;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw IoError("checkpoint truncated");
  return v;
}

}  // namespace

StageMissing::StageMissing(Stage s, const std::string& detail)
    : std::runtime_error("missing " + to_string(s) + " stage: " + detail), stage(s) {}

Stamp stamp_for(const RunConfig& cfg, Stage s) { return {s, stage_hash(cfg, s), cfg.seed}; }

fs::path output_root() {
  const char* env = std::getenv("TOMCOORD_OUT");
  return env != nullptr && *env != '\0' ? fs::path(env) : fs::path("tomcoord-out");
}

fs::path run_dir(const RunConfig& cfg) { return output_root() / cfg.name; }

void write_file(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  // Write then rename so an interrupted run never leaves half a file.
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw IoError("cannot write " + path.string());
    f << text;
    if (!f) throw IoError("write failed: " + path.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " into place: " + ec.message());
}

std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_json(const fs::path& path, const json& body, const Stamp& stamp) {
  json j = body.is_object() ? body : json{{"value", body}};
  j["stamp"] = stamp_json(stamp);
  write_file(path, j.dump(1) + "\n");
}

json read_json(const fs::path& path, const Stamp& expected) {
  if (!fs::exists(path)) throw StageMissing(expected.stage, path.string() + " not found");
  json j = json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) throw IoError(path.string() + " is not valid JSON");
  check_stamp(j.value("stamp", json{}), expected, path);
  return j;
}

void write_checkpoint(const fs::path& path, const ad::ParamVector& params, const Stamp& stamp) {
  std::ostringstream os(std::ios::binary);
  os << kMagic << stamp_json(stamp).dump() << '\n';
  put<std::uint32_t>(os, static_cast<std::uint32_t>(params.num_segments()));
  for (std::size_t i = 0; i < params.num_segments(); ++i) {
    const auto& seg = params.segment(i);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(seg.name.size()));
    os.write(seg.name.data(), static_cast<std::streamsize>(seg.name.size()));
    const auto& shape = seg.value.shape();
    put<std::uint32_t>(os, static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) put<std::uint64_t>(os, d);
    for (double v : seg.value.data()) put<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
  }
  write_file(path, os.str());
}

ad::ParamVector read_checkpoint(const fs::path& path, const Stamp& expected) {
  if (!fs::exists(path)) throw StageMissing(expected.stage, path.string() + " not found");
  std::istringstream is(read_file(path), std::ios::binary);
  char magic[sizeof(kMagic) - 1];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw IoError(path.string() + " is not a checkpoint");
  }
  std::string line;
  std::getline(is, line);
  const json st = json::parse(line, nullptr, false);
  if (st.is_discarded()) throw IoError(path.string() + " has a corrupt stamp");
  check_stamp(st, expected, path);
  ad::ParamVector out;
  const auto n = take<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string name(take<std::uint32_t>(is), '\0');
    if (!is.read(name.data(), static_cast<std::streamsize>(name.size()))) throw IoError("checkpoint truncated");
    ad::Shape shape(take<std::uint32_t>(is));
    std::size_t count = 1;
    for (auto& d : shape) count *= d = static_cast<std::size_t>(take<std::uint64_t>(is));
    std::vector<double> data(count);
    for (auto& v : data) v = std::bit_cast<double>(take<std::uint64_t>(is));
    out.add(name, ad::Tensor(shape, std::move(data)));
  }
  return out;
}

bool has_artifact(const fs::path& path, const Stamp& expected) {
  if (!fs::exists(path)) return false;
  try {
    if (path.extension() == ".json") {
      read_json(path, expected);
    } else {
      std::ifstream f(path, std::ios::binary);
      std::string magic_line, line;
      std::getline(f, magic_line);
      std::getline(f, line);
      const json st = json::parse(line, nullptr, false);
      if (st.is_discarded()) return false;
      check_stamp(st, expected, path);
    }
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace tomcoord::runner
