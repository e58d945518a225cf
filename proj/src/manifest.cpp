#include "xling/manifest.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <sstream>

#include "xling/error.hpp"

namespace xling {

using nlohmann::json;

namespace {

json metrics_json(const std::vector<MetricValue>& metrics) {
  json out = json::array();
  for (const auto& m : metrics) out.push_back({{"dataset", m.dataset}, {"metric", m.metric}, {"value", m.value}});
  return out;
}

std::vector<MetricValue> metrics_from(const json& j) {
  std::vector<MetricValue> out;
  for (const auto& m : j) out.push_back({m.at("dataset"), m.at("metric"), m.at("value")});
  return out;
}

}  // namespace

json to_json(const RunManifest& manifest, bool with_timestamps) {
  json phases = json::array();
  for (const auto& p : manifest.phases) {
    phases.push_back({{"name", p.name},
                      {"stage", p.stage},
                      {"round", p.round},
                      {"checkpoint", p.checkpoint},
                      {"params_sha256", p.params_sha256},
                      {"metrics", metrics_json(p.metrics)}});
  }
  json rounds = json::array();
  for (const auto& r : manifest.rounds) {
    rounds.push_back({{"round", r.round},
                      {"alpha", r.alpha},
                      {"pseudo_labeled", r.pseudo_labeled},
                      {"source_kept", r.source_kept},
                      {"removed_ids", r.removed_ids},
                      {"warnings", r.warnings}});
  }
  json j = {{"command", manifest.command},
            {"config_hash", manifest.config_hash},
            {"seed", manifest.seed},
            {"set_sizes", manifest.set_sizes},
            {"phases", std::move(phases)},
            {"rounds", std::move(rounds)},
            {"removed_ids", manifest.removed_ids}};
  if (with_timestamps) j["timestamps"] = manifest.timestamps;
  return j;
}

RunManifest manifest_from_json(const json& j) {
  RunManifest m;
  try {
    m.command = j.at("command");
    m.config_hash = j.at("config_hash");
    m.seed = j.at("seed");
    m.set_sizes = j.at("set_sizes").get<std::map<std::string, std::size_t>>();
    for (const auto& p : j.at("phases")) {
      m.phases.push_back({p.at("name"), p.at("stage"), p.at("round"), p.at("checkpoint"),
                          p.at("params_sha256"), metrics_from(p.at("metrics"))});
    }
    for (const auto& r : j.at("rounds")) {
      RoundSummary s;
      s.round = r.at("round");
      s.alpha = r.at("alpha");
      s.pseudo_labeled = r.at("pseudo_labeled");
      s.source_kept = r.at("source_kept");
      s.removed_ids = r.at("removed_ids").get<std::vector<std::string>>();
      s.warnings = r.at("warnings").get<std::vector<std::string>>();
      m.rounds.push_back(std::move(s));
    }
    m.removed_ids = j.at("removed_ids").get<std::vector<std::string>>();
    if (j.contains("timestamps")) {
      m.timestamps = j.at("timestamps").get<std::map<std::string, std::string>>();
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

void write_manifest(const RunManifest& manifest, const std::filesystem::path& path) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << to_json(manifest).dump(2) << '\n';
    if (!out) throw DataError("cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

RunManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("no manifest at " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  json j = json::parse(buf.str(), nullptr, false);
  if (j.is_discarded()) throw DataError(path.string() + ": invalid JSON");
  return manifest_from_json(j);
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

RunDirLock::RunDirLock(const std::filesystem::path& run_dir) {
  std::filesystem::create_directories(run_dir);
  const auto path = run_dir / ".lock";
  fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) throw DataError("cannot open " + path.string() + ": " + std::strerror(errno));
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw DataError("run directory " + run_dir.string() + " is in use by another process");
  }
}

RunDirLock::~RunDirLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

}  // namespace xling
