#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "xling/corpus.hpp"
#include "xling/model.hpp"

namespace xling {

inline constexpr int kCheckpointFormatVersion = 1;

enum class Stage { base, finetuned, soft, hard };

std::string to_string(Stage stage);
Stage parse_stage(const std::string& text);

struct CheckpointMetadata {
  Stage stage = Stage::base;
  int round = 0;
  std::uint64_t seed = 0;
  std::string config_hash;

  bool operator==(const CheckpointMetadata&) const = default;
};

struct Checkpoint {
  ModelParams<double> params;
  Vocab vocab;
  CheckpointMetadata metadata;
};

/// JSON envelope with base64 little-endian f64 arrays and a SHA-256 of the
/// arrays section. Written atomically.
void save_checkpoint(const ModelParams<double>& params, const Vocab& vocab,
                     const CheckpointMetadata& metadata, const std::filesystem::path& path);

/// Throws DataError on version mismatch, truncation, or checksum failure.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// The checksum save_checkpoint would record for these parameters.
std::string params_digest(const ModelParams<double>& params);

}  // namespace xling
