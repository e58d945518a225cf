#include "xling/eval.hpp"

#include <algorithm>

#include "xling/error.hpp"

namespace xling {

BioTag parse_bio_tag(const std::string& tag) {
  if (tag == "O") return {};
  if (tag.size() > 2 && tag[1] == '-' && (tag[0] == 'B' || tag[0] == 'I')) {
    return {tag[0] == 'B' ? BioPrefix::begin : BioPrefix::inside, tag.substr(2)};
  }
  throw DataError("unparseable BIO tag '" + tag + "'");
}

std::vector<EntitySpan> decode_spans(std::span<const std::string> tags) {
  std::vector<EntitySpan> spans;
  bool open = false;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    BioTag tag = parse_bio_tag(tags[i]);
    switch (tag.prefix) {
      case BioPrefix::outside:
        open = false;
        break;
      case BioPrefix::inside:
        if (open && spans.back().type == tag.type) {
          spans.back().end = i;
          break;
        }
        [[fallthrough]];
      case BioPrefix::begin:
        spans.push_back({std::move(tag.type), i, i});
        open = true;
        break;
    }
  }
  return spans;
}

BioSequence encode_spans(std::span<const EntitySpan> spans, std::size_t length) {
  BioSequence tags(length, "O");
  for (const auto& span : spans) {
    if (span.start > span.end || span.end >= length) {
      throw DataError("entity span out of range");
    }
    tags[span.start] = "B-" + span.type;
    for (std::size_t i = span.start + 1; i <= span.end; ++i) tags[i] = "I-" + span.type;
  }
  return tags;
}

PrfScore entity_f1(std::span<const BioSequence> gold, std::span<const BioSequence> predicted) {
  if (gold.size() != predicted.size()) {
    throw DataError("entity_f1: " + std::to_string(gold.size()) + " gold sequences vs " +
                    std::to_string(predicted.size()) + " predicted");
  }
  PrfScore score;
  for (std::size_t k = 0; k < gold.size(); ++k) {
    if (gold[k].size() != predicted[k].size()) {
      throw DataError("entity_f1: length mismatch in sequence " + std::to_string(k));
    }
    auto g = decode_spans(gold[k]);
    auto p = decode_spans(predicted[k]);
    score.gold += g.size();
    score.predicted += p.size();
    // Both lists are ordered by start and disjoint, so a merge walk finds all exact matches.
    std::size_t i = 0, j = 0;
    while (i < g.size() && j < p.size()) {
      if (g[i] == p[j]) {
        ++score.true_positives;
        ++i;
        ++j;
      } else if (std::tie(g[i].start, g[i].end) < std::tie(p[j].start, p[j].end)) {
        ++i;
      } else {
        ++j;
      }
    }
  }
  const auto tp = static_cast<double>(score.true_positives);
  score.precision = score.predicted ? tp / static_cast<double>(score.predicted) : 0.0;
  score.recall = score.gold ? tp / static_cast<double>(score.gold) : 0.0;
  const double denom = score.precision + score.recall;
  score.f1 = denom > 0.0 ? 2.0 * score.precision * score.recall / denom : 0.0;
  return score;
}

double accuracy(std::span<const int> predicted, std::span<const int> gold) {
  if (predicted.size() != gold.size() || gold.empty()) {
    throw DataError("accuracy: need equal-length non-empty label vectors");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) hits += predicted[i] == gold[i];
  return static_cast<double>(hits) / static_cast<double>(gold.size());
}

}  // namespace xling
