#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "advdyn/error.hpp"

#ifndef ADVDYN_VERSION
#define ADVDYN_VERSION "0.1.0"
#endif

namespace advdyn {

inline constexpr const char* kLibraryVersion = ADVDYN_VERSION;
inline constexpr const char* kManifestName = "manifest.json";

/// Record of one CLI run: resolved parameters, seeds and emitted files
/// (paths relative to the output directory).
struct RunManifest {
  std::string subcommand;
  nlohmann::json parameters = nlohmann::json::object();
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> artifacts;
  std::string library_version = kLibraryVersion;
  double wall_time_seconds = 0.0;
  nlohmann::json notes = nlohmann::json::object();
};

inline nlohmann::json to_json(const RunManifest& m) {
  return nlohmann::json{{"format", "advdyn-manifest"},
                        {"version", 1},
                        {"subcommand", m.subcommand},
                        {"parameters", m.parameters},
                        {"seeds", m.seeds},
                        {"artifacts", m.artifacts},
                        {"library_version", m.library_version},
                        {"wall_time_seconds", m.wall_time_seconds},
                        {"notes", m.notes}};
}

inline RunManifest manifest_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "advdyn-manifest") throw Error(ErrorKind::Format, "not an advdyn manifest");
  RunManifest m;
  m.subcommand = j.at("subcommand").get<std::string>();
  m.parameters = j.at("parameters");
  m.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  m.artifacts = j.at("artifacts").get<std::vector<std::string>>();
  m.library_version = j.at("library_version").get<std::string>();
  m.wall_time_seconds = j.value("wall_time_seconds", 0.0);
  m.notes = j.value("notes", nlohmann::json::object());
  return m;
}

/// Creates `dir` and proves it is writable, before any computation starts.
inline void prepare_output_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create output directory " + dir.string() + ": " + ec.message());
  const auto probe = dir / ".advdyn-write-probe";
  {
    std::ofstream os(probe);
    if (!os) throw Error(ErrorKind::Io, "output directory " + dir.string() + " is not writable");
  }
  std::filesystem::remove(probe, ec);
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw Error(ErrorKind::Io, "cannot read " + p.string());
  return std::string(std::istreambuf_iterator<char>(is), {});
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream os(p, std::ios::binary);
  os << content;
  if (!os) throw Error(ErrorKind::Io, "cannot write " + p.string());
}

inline RunManifest load_manifest(const std::filesystem::path& p) {
  try {
    return manifest_from_json(nlohmann::json::parse(read_file(p)));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Format, p.string() + ": " + e.what());
  }
}

/// Artifacts that differ byte-for-byte between two output directories.
inline std::vector<std::string> diff_artifacts(const RunManifest& m, const std::filesystem::path& a,
                                               const std::filesystem::path& b) {
  std::vector<std::string> diff;
  for (const auto& name : m.artifacts) {
    std::string x, y;
    try {
      x = read_file(a / name);
      y = read_file(b / name);
    } catch (const Error&) {
      diff.push_back(name);
      continue;
    }
    if (x != y) diff.push_back(name);
  }
  return diff;
}

class WallClock {
 public:
  WallClock() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace advdyn
