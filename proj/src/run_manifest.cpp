#include "pvvae/run_manifest.hpp"

#include "pvvae/errors.hpp"
#include "pvvae/tensor_io.hpp"

#include <openssl/sha.h>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace pvvae {

namespace {

std::string hex(const unsigned char* digest, size_t n) {
  std::ostringstream out;
  for (size_t i = 0; i < n; ++i) out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return out.str();
}

std::string sha1(const std::string& data) {
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(data.data()), data.size(), digest);
  return hex(digest, SHA_DIGEST_LENGTH);
}

}  // namespace

std::string git_blob_sha1(const std::vector<uint8_t>& bytes) {
  std::string payload = "blob " + std::to_string(bytes.size());
  payload.push_back('\0');
  payload.append(bytes.begin(), bytes.end());
  return sha1(payload);
}

std::string artifact_hash(const std::vector<std::filesystem::path>& inputs) {
  namespace fs = std::filesystem;
  std::string listing;
  for (const auto& root : inputs) {
    if (!fs::exists(root)) throw IoError("cannot hash missing input " + root.string());
    std::vector<fs::path> files;
    if (fs::is_directory(root)) {
      for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file() && e.path().filename() != kRunManifestName) files.push_back(e.path());
      std::sort(files.begin(), files.end());
    } else {
      files.push_back(root);
    }
    for (const auto& f : files) {
      const auto rel = fs::is_directory(root) ? fs::relative(f, root) : f.filename();
      listing += rel.generic_string() + " " + git_blob_sha1(read_file_bytes(f)) + "\n";
    }
  }
  return sha1(listing);
}

nlohmann::ordered_json RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["format"] = "pvvae-run";
  j["command"] = command;
  j["arguments"] = arguments;
  j["seed"] = seed;
  j["config"] = config;
  j["inputs"] = inputs;
  j["input_hash"] = input_hash;
  j["outputs"] = outputs;
  j["metrics"] = metrics;
  j["started_at"] = started_at;
  j["wall_clock_seconds"] = wall_clock_seconds;
  return j;
}

void RunManifest::write(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write run manifest " + path.string());
  out << to_json().dump(2) << "\n";
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

}  // namespace pvvae
