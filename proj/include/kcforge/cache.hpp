#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include <json.hpp>

#include "kcforge/error.hpp"
#include "kcforge/hash.hpp"

namespace kcforge {

// Content-addressed response cache: one JSON file per request, named by the
// SHA-256 of the request key material. Each file keeps the key material
// alongside the response, so the directory doubles as an audit log. Writes
// go to a temp file first and are renamed into place, which keeps concurrent
// writers safe on POSIX filesystems.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) {
      throw IoError("cannot create cache directory '" + dir_.string() +
                    "': " + ec.message());
    }
  }

  const std::filesystem::path& dir() const { return dir_; }

  std::optional<std::string> lookup(const std::string& key_material) const {
    const auto path = entry_path(key_material);
    std::ifstream in(path, std::ios::binary);
    if (!in) {
      return std::nullopt;
    }
    nlohmann::json entry;
    try {
      entry = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception&) {
      return std::nullopt;  // unreadable entry behaves like a miss
    }
    if (!entry.contains("response") || !entry["response"].is_string()) {
      return std::nullopt;
    }
    return entry["response"].get<std::string>();
  }

  void store(const std::string& key_material,
             const std::string& response) const {
    const auto path = entry_path(key_material);
    nlohmann::json entry = {{"request", key_material}, {"response", response}};
    static std::atomic<std::uint64_t> counter{0};
    const auto tmp = dir_ / (".tmp-" + path.stem().string() + "-" +
                             std::to_string(counter.fetch_add(1)));
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) {
        throw IoError("cannot open cache temp file '" + tmp.string() + "'");
      }
      out << entry.dump(2) << '\n';
      if (!out) {
        throw IoError("write failure on cache temp file '" + tmp.string() +
                      "'");
      }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
      std::filesystem::remove(tmp);
      throw IoError("cannot publish cache entry '" + path.string() +
                    "': " + ec.message());
    }
  }

 private:
  std::filesystem::path entry_path(const std::string& key_material) const {
    return dir_ / (sha256_hex(key_material) + ".json");
  }

  std::filesystem::path dir_;
};

}  // namespace kcforge
