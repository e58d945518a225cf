#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "xling/selftrain.hpp"

namespace xling {

struct ManifestPhase {
  std::string name;
  std::string stage;
  int round = 0;
  std::string checkpoint;  // relative to the run directory; empty if not written
  std::string params_sha256;
  std::vector<MetricValue> metrics;
};

/// Record of one run. Everything except `timestamps` is a pure function of
/// config, data and seed.
struct RunManifest {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::map<std::string, std::size_t> set_sizes;
  std::vector<ManifestPhase> phases;
  std::vector<RoundSummary> rounds;
  std::vector<std::string> removed_ids;
  /// "<phase>.start" / "<phase>.end" -> ISO-8601 UTC.
  std::map<std::string, std::string> timestamps;
};

nlohmann::json to_json(const RunManifest& manifest, bool with_timestamps = true);
RunManifest manifest_from_json(const nlohmann::json& j);

/// Atomic rewrite via a temporary file and rename.
void write_manifest(const RunManifest& manifest, const std::filesystem::path& path);
/// Throws DataError if missing or malformed.
RunManifest read_manifest(const std::filesystem::path& path);

std::string utc_timestamp();

/// Exclusive advisory lock on a run directory, held for the object's lifetime.
class RunDirLock {
 public:
  explicit RunDirLock(const std::filesystem::path& run_dir);
  ~RunDirLock();
  RunDirLock(const RunDirLock&) = delete;
  RunDirLock& operator=(const RunDirLock&) = delete;

 private:
  int fd_ = -1;
};

}  // namespace xling
