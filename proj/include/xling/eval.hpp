#pragma once

#include <span>
#include <string>
#include <vector>

namespace xling {

using BioSequence = std::vector<std::string>;

/// A typed entity over an inclusive token range.
struct EntitySpan {
  std::string type;
  std::size_t start = 0;
  std::size_t end = 0;

  auto operator<=>(const EntitySpan&) const = default;
};

enum class BioPrefix { outside, begin, inside };

struct BioTag {
  BioPrefix prefix = BioPrefix::outside;
  std::string type;
};

/// Parses O | B-<type> | I-<type>; throws DataError otherwise.
BioTag parse_bio_tag(const std::string& tag);

/// Maximal entity spans. An I-X that cannot continue an open X span starts a
/// new one, as conlleval does.
std::vector<EntitySpan> decode_spans(std::span<const std::string> tags);

/// Inverse of decode_spans for disjoint spans over a sequence of `length` tags.
BioSequence encode_spans(std::span<const EntitySpan> spans, std::size_t length);

struct PrfScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t true_positives = 0;
  std::size_t predicted = 0;
  std::size_t gold = 0;
};

/// Entity-level micro P/R/F1 with exact (type, start, end) matching.
PrfScore entity_f1(std::span<const BioSequence> gold, std::span<const BioSequence> predicted);

/// Exact-match fraction of two equal-length, non-empty label vectors.
double accuracy(std::span<const int> predicted, std::span<const int> gold);

}  // namespace xling
