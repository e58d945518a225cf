#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "xling/eval.hpp"

namespace xling {

/// Whitespace-pretokenized text with a language tag.
struct Document {
  std::string id;
  std::string lang;
  std::vector<std::string> tokens;

  bool operator==(const Document&) const = default;
};

struct LabeledExample {
  Document doc;
  int label = 0;

  bool operator==(const LabeledExample&) const = default;
};

struct TaggedDocument {
  Document doc;
  BioSequence tags;
};

using TokenId = std::int32_t;

class Vocab {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kMask = 2;
  static constexpr std::size_t kReserved = 3;

  Vocab();
  /// Reserved tokens first, then `tokens` in the given order; duplicates of
  /// reserved or earlier tokens are dropped.
  explicit Vocab(std::span<const std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  TokenId id(std::string_view token) const;
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::vector<TokenId> encode(const Document& doc) const;

  static bool is_reserved(TokenId id) { return id >= 0 && id < static_cast<TokenId>(kReserved); }

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Union of all tokens, sorted after the reserved entries.
Vocab build_vocab(std::span<const std::vector<Document>> corpora);

/// A masked copy of one document and the (position, original id) targets.
struct MaskedBatch {
  std::vector<TokenId> input;
  std::vector<std::pair<std::size_t, TokenId>> targets;
};

/// Masks ceil(rate * n) of the n non-reserved positions, chosen uniformly
/// without replacement.
MaskedBatch mask_tokens(const Document& doc, const Vocab& vocab, double rate, std::uint64_t seed);

// JSONL I/O. One object per line:
//   {"id": str, "lang": str, "tokens": [str], "label": int?, "tags": [str]?}

std::vector<Document> load_unlabeled(const std::filesystem::path& path);
std::vector<LabeledExample> load_labeled(const std::filesystem::path& path, int num_classes);
std::vector<TaggedDocument> load_tagged(const std::filesystem::path& path);

void write_unlabeled(const std::filesystem::path& path, std::span<const Document> docs);
void write_labeled(const std::filesystem::path& path, std::span<const LabeledExample> data);

/// Two-column TSV (source form, target form), no header.
std::map<std::string, std::string> load_translation_table(const std::filesystem::path& path);

/// min(|src|, |tgt|) documents of each language in a seeded shuffle. The
/// larger side is subsampled without replacement; `epoch` picks a fresh draw.
std::vector<Document> balanced_resample(std::span<const Document> source,
                                        std::span<const Document> target, std::uint64_t seed,
                                        std::uint64_t epoch = 0);

/// Space-joined surface forms of every entity span in the tagged data.
std::set<std::string> extract_entity_surface_forms(std::span<const TaggedDocument> data);

/// Target documents containing a translated entity as a contiguous,
/// case-sensitive token run; first-match order, at most `cap` documents.
std::vector<Document> build_entity_corpus(const std::set<std::string>& entities,
                                          const std::map<std::string, std::string>& translation,
                                          std::span<const Document> target_corpus,
                                          std::size_t cap);

std::vector<std::string> split_whitespace(std::string_view text);

}  // namespace xling
