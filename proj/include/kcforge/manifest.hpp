#pragma once

#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "kcforge/error.hpp"
#include "kcforge/hash.hpp"
#include "kcforge/version.hpp"

namespace kcforge {

// Provenance record written next to every command's outputs: the command,
// the resolved configuration, content digests of every consumed input file,
// the seeds, the tool version and a timestamp.
struct RunManifest {
  std::string command;
  std::map<std::string, std::string> config;
  std::map<std::string, std::string> input_digests;  // path -> sha256
  std::vector<std::uint64_t> seeds;
  std::string tool_version = kVersion;
  std::string timestamp;  // ISO-8601 UTC
};

// Honors SOURCE_DATE_EPOCH (the reproducible-builds convention) so re-runs
// can produce byte-identical manifests.
inline std::string manifest_timestamp() {
  std::time_t now = std::time(nullptr);
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) {
    try {
      now = static_cast<std::time_t>(std::stoll(epoch));
    } catch (const std::exception&) {
      throw ValidationError("SOURCE_DATE_EPOCH is not an integer");
    }
  }
  std::tm utc{};
  gmtime_r(&now, &utc);
  char buffer[32];
  std::strftime(buffer, sizeof(buffer), "%Y-%m-%dT%H:%M:%SZ", &utc);
  return buffer;
}

inline void add_input(RunManifest& manifest, const std::filesystem::path& path) {
  manifest.input_digests[path.string()] = sha256_file_hex(path);
}

inline nlohmann::json manifest_to_json(const RunManifest& manifest) {
  return {{"command", manifest.command},
          {"config", manifest.config},
          {"inputs", manifest.input_digests},
          {"seeds", manifest.seeds},
          {"tool_version", manifest.tool_version},
          {"timestamp", manifest.timestamp}};
}

inline void write_manifest(const RunManifest& manifest,
                           const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot open manifest file '" + path.string() + "'");
  }
  out << manifest_to_json(manifest).dump(2) << '\n';
  if (!out) {
    throw IoError("write failure on manifest file '" + path.string() + "'");
  }
}

}  // namespace kcforge
