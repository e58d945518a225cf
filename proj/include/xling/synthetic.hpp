#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "xling/corpus.hpp"

namespace xling {

/// Parameters of the generated bilingual classification task.
///
/// Each language has `vocab_per_language` private words related by a hidden
/// one-to-one dictionary; `signal_per_class` of them per class carry label
/// signal and the rest are noise. A further `shared_tokens` entity-like words
/// are spelled identically in both languages and follow the document label
/// at rate `anchor_strength`; they are the only surface overlap between the
/// languages.
struct SynthSpec {
  int num_classes = 2;
  std::size_t vocab_per_language = 200;
  std::size_t signal_per_class = 20;
  std::size_t shared_tokens = 20;
  std::size_t n_labeled_source = 500;
  std::size_t n_unlabeled_target = 2000;
  std::size_t n_test_target = 500;
  std::size_t n_btf_source = 2000;
  double signal_strength = 0.7;   // P(signal word follows the latent class), in (0, 1]
  double signal_rate = 0.5;       // P(a position holds a signal word)
  double anchor_rate = 0.15;      // P(a position holds a shared word)
  double anchor_strength = 0.6;   // P(shared word follows the label)
  std::size_t min_length = 8;
  std::size_t max_length = 32;
  std::string source_lang = "src";
  std::string target_lang = "tgt";
};

struct SynthTask {
  std::vector<LabeledExample> source_labeled;
  std::vector<Document> target_unlabeled;
  /// Hidden labels of target_unlabeled, for diagnostics only; never written out.
  std::vector<int> target_unlabeled_labels;
  std::vector<LabeledExample> target_test;
  /// Unlabeled documents of both languages for masked-token pretraining.
  std::vector<Document> btf_corpus;
  /// Source word -> target word for every private word.
  std::vector<std::pair<std::string, std::string>> dictionary;
};

SynthTask generate_synthetic_task(const SynthSpec& spec, std::uint64_t seed);

/// Writes source_train.jsonl, target_unlabeled.jsonl, target_test.jsonl,
/// btf_corpus.jsonl and dictionary.tsv into `dir`.
void write_synthetic_task(const SynthTask& task, const std::filesystem::path& dir);

}  // namespace xling
