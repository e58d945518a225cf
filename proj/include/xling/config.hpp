#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "xling/model.hpp"
#include "xling/synthetic.hpp"

namespace xling {

struct PhaseConfig {
  std::size_t epochs = 10;
  double lr = 1e-2;
  std::size_t batch_size = 32;
  bool freeze_embeddings = false;
};

enum class ThresholdMode { automatic, fixed };
/// How source samples are judged consistent: the full recall condition at
/// alpha plus a correct label, or a correct ensemble argmax alone.
enum class SourceFilter { thresholded, argmax };
/// Soft targets per student voter: the paired teacher voter, or the teacher's voter mean.
enum class TeacherTargets { paired, mean };

struct PipelineConfig {
  std::uint64_t seed = 1;
  double rounds = 1.5;
  int num_classes = 2;
  std::string source_lang = "src";
  std::string target_lang = "tgt";

  std::size_t dim = 16;
  std::size_t voters = 3;
  std::size_t base_hidden = 32;
  std::size_t hidden_step = 4;

  std::string source_train;
  std::string target_unlabeled;
  std::string target_test;
  std::string btf_corpus;
  std::string base_checkpoint;

  bool btf_enabled = true;
  double mask_rate = 0.15;
  PhaseConfig btf{3, 1e-2, 32, false};
  PhaseConfig finetune{10, 1e-2, 32, true};
  PhaseConfig soft{5, 1e-2, 32, false};
  PhaseConfig hard{20, 1e-2, 32, false};
  double weight_decay = 0.0;
  double warmup_ratio = 0.0;

  ThresholdMode threshold_mode = ThresholdMode::automatic;
  double fixed_alpha = 0.9;
  std::vector<double> grid = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6,  0.7,
                              0.8, 0.9, 0.95, 0.99, 0.995, 0.999};
  std::size_t min_recalled = 0;  // 0: max(10, 1% of records)
  SourceFilter source_filter = SourceFilter::thresholded;
  TeacherTargets teacher_targets = TeacherTargets::paired;

  SynthSpec synth;

  std::string corpus_tagged_source;
  std::string corpus_translation_table;
  std::string corpus_target;
  std::size_t corpus_cap = 60000;

  std::string eval_checkpoint;
  std::string eval_data;
  std::string eval_predictions;  // tagged JSONL scored against eval_data by entity F1

  ModelDims model_dims(std::size_t vocab_size) const {
    return {vocab_size, dim, static_cast<std::size_t>(num_classes), voters, base_hidden, hidden_step};
  }
};

/// Throws ConfigError naming the offending key.
void set_config_value(PipelineConfig& config, const std::string& key, const std::string& value);

/// Applies "key=value" strings in order.
void apply_overrides(PipelineConfig& config, const std::vector<std::string>& overrides);

/// Reads a flat key=value file ('#' starts a comment; lists as [a, b, c]),
/// then applies overrides and validates.
PipelineConfig parse_config(const std::filesystem::path& path,
                            const std::vector<std::string>& overrides = {});

/// Throws ConfigError on inconsistent settings.
void validate(const PipelineConfig& config);

/// Every key in sorted order, one "key = value" per line; parse_config reads it back.
std::string to_text(const PipelineConfig& config);

/// SHA-256 of to_text(config).
std::string config_hash(const PipelineConfig& config);

}  // namespace xling
