#include "xling/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>

#include "xling/error.hpp"
#include "xling/random.hpp"

namespace xling {

namespace {

using nlohmann::json;

const std::vector<std::string> kReservedTokens = {"[PAD]", "[UNK]", "[MASK]"};

std::string at_line(const std::filesystem::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line) + ": ";
}

std::vector<std::string> string_array(const json& value, const char* key) {
  if (!value.is_array()) throw std::invalid_argument(std::string("'") + key + "' must be an array");
  std::vector<std::string> out;
  out.reserve(value.size());
  for (const auto& item : value) {
    if (!item.is_string()) {
      throw std::invalid_argument(std::string("'") + key + "' must contain strings");
    }
    out.push_back(item.get<std::string>());
  }
  return out;
}

Document parse_document(const json& record) {
  if (!record.is_object()) throw std::invalid_argument("record is not a JSON object");
  for (const char* key : {"id", "lang", "tokens"}) {
    if (!record.contains(key)) throw std::invalid_argument(std::string("missing '") + key + "'");
  }
  if (!record["id"].is_string() || !record["lang"].is_string()) {
    throw std::invalid_argument("'id' and 'lang' must be strings");
  }
  Document doc{record["id"].get<std::string>(), record["lang"].get<std::string>(),
               string_array(record["tokens"], "tokens")};
  if (doc.tokens.empty()) throw std::invalid_argument("'tokens' is empty");
  if (doc.lang.empty()) throw std::invalid_argument("'lang' is empty");
  return doc;
}

/// Calls `fn(record)` for every non-blank line, converting failures into
/// DataErrors that name the line.
template <typename Fn>
void for_each_record(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(json::parse(line));
    } catch (const json::exception& e) {
      throw DataError(at_line(path, lineno) + "malformed JSON: " + e.what());
    } catch (const std::invalid_argument& e) {
      throw DataError(at_line(path, lineno) + e.what());
    }
  }
}

json to_json(const Document& doc) {
  return json{{"id", doc.id}, {"lang", doc.lang}, {"tokens", doc.tokens}};
}

void write_lines(const std::filesystem::path& path, const std::vector<json>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& r : records) out << r.dump() << '\n';
}

}  // namespace

Vocab::Vocab() : Vocab(std::span<const std::string>{}) {}

Vocab::Vocab(std::span<const std::string> tokens) {
  auto add = [this](const std::string& t) {
    if (index_.emplace(t, static_cast<TokenId>(tokens_.size())).second) tokens_.push_back(t);
  };
  for (const auto& t : kReservedTokens) add(t);
  for (const auto& t : tokens) add(t);
}

TokenId Vocab::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

std::vector<TokenId> Vocab::encode(const Document& doc) const {
  std::vector<TokenId> ids;
  ids.reserve(doc.tokens.size());
  for (const auto& t : doc.tokens) ids.push_back(id(t));
  return ids;
}

Vocab build_vocab(std::span<const std::vector<Document>> corpora) {
  std::set<std::string> unique;
  for (const auto& corpus : corpora) {
    for (const auto& doc : corpus) unique.insert(doc.tokens.begin(), doc.tokens.end());
  }
  std::vector<std::string> sorted(unique.begin(), unique.end());
  return Vocab(sorted);
}

MaskedBatch mask_tokens(const Document& doc, const Vocab& vocab, double rate, std::uint64_t seed) {
  if (!(rate > 0.0 && rate < 1.0)) throw DataError("mask rate must lie in (0, 1)");
  if (doc.tokens.empty()) throw DataError("cannot mask empty document '" + doc.id + "'");
  MaskedBatch batch;
  batch.input = vocab.encode(doc);
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < batch.input.size(); ++i) {
    if (!Vocab::is_reserved(batch.input[i])) candidates.push_back(i);
  }
  if (candidates.empty()) {
    throw DataError("document '" + doc.id + "' has no maskable tokens");
  }
  const auto count = static_cast<std::size_t>(
      std::ceil(rate * static_cast<double>(candidates.size()) - 1e-12));
  Rng rng(seed);
  // Partial Fisher-Yates: the first `count` slots are a uniform sample.
  for (std::size_t i = 0; i < count; ++i) {
    std::swap(candidates[i], candidates[i + uniform_index(rng, candidates.size() - i)]);
  }
  candidates.resize(std::max<std::size_t>(count, 1));
  std::sort(candidates.begin(), candidates.end());
  for (std::size_t pos : candidates) {
    batch.targets.emplace_back(pos, batch.input[pos]);
    batch.input[pos] = Vocab::kMask;
  }
  return batch;
}

std::vector<Document> load_unlabeled(const std::filesystem::path& path) {
  std::vector<Document> docs;
  for_each_record(path, [&](const json& r) { docs.push_back(parse_document(r)); });
  return docs;
}

std::vector<LabeledExample> load_labeled(const std::filesystem::path& path, int num_classes) {
  std::vector<LabeledExample> data;
  for_each_record(path, [&](const json& r) {
    Document doc = parse_document(r);
    if (!r.contains("label") || !r["label"].is_number_integer()) {
      throw std::invalid_argument("missing integer 'label'");
    }
    const auto label = r["label"].get<long long>();
    if (label < 0 || label >= num_classes) {
      throw std::invalid_argument("label " + std::to_string(label) + " outside [0, " +
                                  std::to_string(num_classes) + ")");
    }
    data.push_back({std::move(doc), static_cast<int>(label)});
  });
  return data;
}

std::vector<TaggedDocument> load_tagged(const std::filesystem::path& path) {
  std::vector<TaggedDocument> data;
  for_each_record(path, [&](const json& r) {
    Document doc = parse_document(r);
    if (!r.contains("tags")) throw std::invalid_argument("missing 'tags'");
    auto tags = string_array(r["tags"], "tags");
    if (tags.size() != doc.tokens.size()) {
      throw std::invalid_argument("'tags' and 'tokens' differ in length");
    }
    for (const auto& t : tags) {
      try {
        parse_bio_tag(t);
      } catch (const DataError& e) {
        throw std::invalid_argument(e.what());
      }
    }
    data.push_back({std::move(doc), std::move(tags)});
  });
  return data;
}

void write_unlabeled(const std::filesystem::path& path, std::span<const Document> docs) {
  std::vector<json> records;
  for (const auto& d : docs) records.push_back(to_json(d));
  write_lines(path, records);
}

void write_labeled(const std::filesystem::path& path, std::span<const LabeledExample> data) {
  std::vector<json> records;
  for (const auto& ex : data) {
    json r = to_json(ex.doc);
    r["label"] = ex.label;
    records.push_back(std::move(r));
  }
  write_lines(path, records);
}

std::map<std::string, std::string> load_translation_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::map<std::string, std::string> table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw DataError(at_line(path, lineno) + "expected exactly two tab-separated columns");
    }
    table.emplace(line.substr(0, tab), line.substr(tab + 1));
  }
  return table;
}

std::vector<Document> balanced_resample(std::span<const Document> source,
                                        std::span<const Document> target, std::uint64_t seed,
                                        std::uint64_t epoch) {
  if (source.empty() || target.empty()) {
    throw DataError("balanced_resample: both languages need at least one document");
  }
  const std::size_t k = std::min(source.size(), target.size());
  Rng rng = make_rng(seed, "balanced_resample", epoch);
  auto draw = [&](std::span<const Document> side, std::vector<Document>& out) {
    std::vector<std::size_t> order(side.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    if (side.size() > k) {
      shuffle(order.begin(), order.end(), rng);
      order.resize(k);
    }
    for (std::size_t i : order) out.push_back(side[i]);
  };
  std::vector<Document> mixed;
  mixed.reserve(2 * k);
  draw(source, mixed);
  draw(target, mixed);
  shuffle(mixed.begin(), mixed.end(), rng);
  return mixed;
}

std::set<std::string> extract_entity_surface_forms(std::span<const TaggedDocument> data) {
  std::set<std::string> forms;
  for (const auto& item : data) {
    if (item.tags.size() != item.doc.tokens.size()) {
      throw DataError("document '" + item.doc.id + "': tags and tokens differ in length");
    }
    for (const auto& span : decode_spans(item.tags)) {
      std::string form = item.doc.tokens[span.start];
      for (std::size_t i = span.start + 1; i <= span.end; ++i) form += " " + item.doc.tokens[i];
      forms.insert(std::move(form));
    }
  }
  return forms;
}

std::vector<Document> build_entity_corpus(const std::set<std::string>& entities,
                                          const std::map<std::string, std::string>& translation,
                                          std::span<const Document> target_corpus,
                                          std::size_t cap) {
  std::vector<std::vector<std::string>> needles;
  for (const auto& entity : entities) {
    auto it = translation.find(entity);
    if (it == translation.end()) continue;
    auto tokens = split_whitespace(it->second);
    if (!tokens.empty()) needles.push_back(std::move(tokens));
  }
  std::vector<Document> out;
  for (const auto& doc : target_corpus) {
    if (out.size() >= cap) break;
    const bool hit = std::any_of(needles.begin(), needles.end(), [&](const auto& needle) {
      return std::search(doc.tokens.begin(), doc.tokens.end(), needle.begin(), needle.end()) !=
             doc.tokens.end();
    });
    if (hit) out.push_back(doc);
  }
  return out;
}

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace xling
