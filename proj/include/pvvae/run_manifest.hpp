#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace pvvae {

/// Lowercase hex SHA-1 of "blob <size>\0" followed by the bytes, as git
/// computes object ids.
std::string git_blob_sha1(const std::vector<uint8_t>& bytes);

/// File name of the per-command manifest inside an output directory.
inline constexpr const char* kRunManifestName = "run_manifest.json";

/// One hash over a set of files and directories. Directories are walked
/// recursively in sorted order; each file contributes "<relative path>
/// <blob sha1>\n" to the hashed listing; run manifests inside directories are
/// skipped so provenance files never change an artifact's identity. Missing
/// paths throw IoError.
std::string artifact_hash(const std::vector<std::filesystem::path>& inputs);

/// Provenance record written once per CLI command. Only the wall-clock
/// fields differ between two identical runs.
struct RunManifest {
  std::string command;
  std::vector<std::string> arguments;
  nlohmann::ordered_json config;
  uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::string input_hash;
  std::vector<std::string> outputs;
  nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
  std::string started_at;
  double wall_clock_seconds = 0.0;

  nlohmann::ordered_json to_json() const;
  void write(const std::filesystem::path& path) const;
};

/// UTC timestamp in ISO 8601 form.
std::string utc_timestamp();

}  // namespace pvvae
