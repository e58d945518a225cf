#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "test_util.hpp"
#include "xling/corpus.hpp"
#include "xling/error.hpp"
#include "xling/random.hpp"

namespace xling {
namespace {

using testing::TempDir;
using testing::write_file;

Document doc(std::string id, std::string lang, std::vector<std::string> tokens) {
  return {std::move(id), std::move(lang), std::move(tokens)};
}

std::vector<Document> docs(const std::string& lang, std::size_t n) {
  std::vector<Document> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(doc(lang + std::to_string(i), lang, {"w"}));
  return out;
}

TEST(Vocab, SortedAfterReservedTokens) {
  const std::vector<std::vector<Document>> corpora{{doc("1", "en", {"b", "a"})}};
  const Vocab v = build_vocab(corpora);
  ASSERT_EQ(v.size(), 5u);
  EXPECT_EQ(v.token(0), "[PAD]");
  EXPECT_EQ(v.token(1), "[UNK]");
  EXPECT_EQ(v.token(2), "[MASK]");
  EXPECT_EQ(v.id("a"), 3);
  EXPECT_EQ(v.id("b"), 4);
}

TEST(Vocab, EmptyCorpusHasOnlyReservedTokens) {
  EXPECT_EQ(build_vocab(std::vector<std::vector<Document>>{}).size(), 3u);
}

TEST(Vocab, LiteralMaskTokenCollidesWithReservedId) {
  const std::vector<std::vector<Document>> corpora{{doc("1", "en", {"[MASK]", "x"})}};
  const Vocab v = build_vocab(corpora);
  EXPECT_EQ(v.size(), 4u);
  EXPECT_EQ(v.id("[MASK]"), Vocab::kMask);
}

TEST(Vocab, UnknownTokensMapToUnk) {
  const Vocab v(std::vector<std::string>{"a"});
  EXPECT_EQ(v.id("zzz"), Vocab::kUnk);
  EXPECT_EQ(v.encode(doc("1", "en", {"a", "q"})), (std::vector<TokenId>{3, Vocab::kUnk}));
}

TEST(LoadLabeled, ParsesOneRecord) {
  TempDir dir;
  write_file(dir / "a.jsonl", R"({"id":"a","lang":"en","tokens":["good","book"],"label":1})" "\n");
  const auto data = load_labeled(dir / "a.jsonl", 2);
  ASSERT_EQ(data.size(), 1u);
  EXPECT_EQ(data[0].label, 1);
  EXPECT_EQ(data[0].doc, doc("a", "en", {"good", "book"}));
}

TEST(LoadLabeled, EmptyFileGivesEmptyList) {
  TempDir dir;
  write_file(dir / "e.jsonl", "");
  EXPECT_TRUE(load_labeled(dir / "e.jsonl", 2).empty());
}

TEST(LoadLabeled, LabelOutOfRangeNamesLine) {
  TempDir dir;
  write_file(dir / "bad.jsonl", R"({"id":"a","lang":"en","tokens":["x"],"label":5})" "\n");
  try {
    load_labeled(dir / "bad.jsonl", 2);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(":1:"), std::string::npos) << e.what();
  }
}

TEST(LoadLabeled, MissingFileIsDataError) {
  EXPECT_THROW(load_labeled("/nonexistent/x.jsonl", 2), DataError);
}

TEST(LoadUnlabeled, KeepsFileOrderAndDuplicateIds) {
  TempDir dir;
  write_file(dir / "u.jsonl",
             R"({"id":"a","lang":"en","tokens":["x"]})" "\n"
             R"({"id":"a","lang":"en","tokens":["y"]})" "\n\n"
             R"({"id":"c","lang":"en","tokens":["z"]})" "\n");
  const auto d = load_unlabeled(dir / "u.jsonl");
  ASSERT_EQ(d.size(), 3u);
  EXPECT_EQ(d[0].tokens[0], "x");
  EXPECT_EQ(d[1].id, "a");
  EXPECT_EQ(d[2].id, "c");
}

TEST(LoadUnlabeled, MissingTokensNamesLine) {
  TempDir dir;
  write_file(dir / "u.jsonl",
             R"({"id":"a","lang":"en","tokens":["x"]})" "\n" R"({"id":"b","lang":"en"})" "\n");
  try {
    load_unlabeled(dir / "u.jsonl");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
  }
}

TEST(LoadUnlabeled, MalformedJsonAndEmptyTokensRejected) {
  TempDir dir;
  write_file(dir / "m.jsonl", "{not json\n");
  EXPECT_THROW(load_unlabeled(dir / "m.jsonl"), DataError);
  write_file(dir / "t.jsonl", R"({"id":"a","lang":"en","tokens":[]})" "\n");
  EXPECT_THROW(load_unlabeled(dir / "t.jsonl"), DataError);
}

TEST(Jsonl, WriteThenLoadRoundTrips) {
  TempDir dir;
  const std::vector<LabeledExample> data{{doc("a", "en", {"x", "y"}), 1}, {doc("b", "de", {"z"}), 0}};
  write_labeled(dir / "l.jsonl", data);
  EXPECT_EQ(load_labeled(dir / "l.jsonl", 2), data);
}

TEST(LoadTagged, TagsMustAlignWithTokens) {
  TempDir dir;
  write_file(dir / "t.jsonl", R"({"id":"a","lang":"en","tokens":["x","y"],"tags":["O"]})" "\n");
  EXPECT_THROW(load_tagged(dir / "t.jsonl"), DataError);
}

TEST(TranslationTable, TwoColumnsRequired) {
  TempDir dir;
  write_file(dir / "t.tsv", "Paris\tParís\nNew York\tNueva York\n");
  const auto table = load_translation_table(dir / "t.tsv");
  EXPECT_EQ(table.at("New York"), "Nueva York");
  write_file(dir / "bad.tsv", "a\tb\tc\n");
  EXPECT_THROW(load_translation_table(dir / "bad.tsv"), DataError);
}

TEST(BalancedResample, DownsamplesLargerSide) {
  const auto out = balanced_resample(docs("src", 100), docs("tgt", 40), 3);
  EXPECT_EQ(std::count_if(out.begin(), out.end(), [](auto& d) { return d.lang == "src"; }), 40);
  EXPECT_EQ(std::count_if(out.begin(), out.end(), [](auto& d) { return d.lang == "tgt"; }), 40);
}

TEST(BalancedResample, EqualSidesKeepEverything) {
  const auto src = docs("src", 10), tgt = docs("tgt", 10);
  auto out = balanced_resample(src, tgt, 3);
  ASSERT_EQ(out.size(), 20u);
  std::vector<std::string> ids;
  for (const auto& d : out) ids.push_back(d.id);
  std::sort(ids.begin(), ids.end());
  EXPECT_EQ(std::unique(ids.begin(), ids.end()), ids.end());
}

TEST(BalancedResample, DeterministicPerSeedAndEpoch) {
  const auto src = docs("src", 50), tgt = docs("tgt", 20);
  EXPECT_EQ(balanced_resample(src, tgt, 5, 1), balanced_resample(src, tgt, 5, 1));
  EXPECT_NE(balanced_resample(src, tgt, 5, 1), balanced_resample(src, tgt, 5, 2));
}

TEST(BalancedResample, EmptySideThrows) {
  EXPECT_THROW(balanced_resample(docs("src", 3), {}, 1), DataError);
}

TEST(BalancedResample, EqualCountsOverRandomSizes) {
  Rng rng = make_rng(11, "resample-sizes");
  for (int trial = 0; trial < 50; ++trial) {
    const auto ns = 1 + uniform_index(rng, 60), nt = 1 + uniform_index(rng, 60);
    const auto out = balanced_resample(docs("src", ns), docs("tgt", nt), rng());
    const auto k = static_cast<long>(std::min(ns, nt));
    EXPECT_EQ(std::count_if(out.begin(), out.end(), [](auto& d) { return d.lang == "src"; }), k);
    EXPECT_EQ(std::count_if(out.begin(), out.end(), [](auto& d) { return d.lang == "tgt"; }), k);
  }
}

TEST(EntitySurfaceForms, MultiTokenAndSingletons) {
  const std::vector<TaggedDocument> a{{doc("1", "en", {"New", "York", "is", "big"}), {"B-LOC", "I-LOC", "O", "O"}}};
  EXPECT_EQ(extract_entity_surface_forms(a), (std::set<std::string>{"New York"}));
  const std::vector<TaggedDocument> b{{doc("2", "en", {"a", "b"}), {"O", "O"}}};
  EXPECT_TRUE(extract_entity_surface_forms(b).empty());
  const std::vector<TaggedDocument> c{{doc("3", "en", {"Anna", "Marie"}), {"B-PER", "B-PER"}}};
  EXPECT_EQ(extract_entity_surface_forms(c), (std::set<std::string>{"Anna", "Marie"}));
}

TEST(EntitySurfaceForms, LengthMismatchThrows) {
  const std::vector<TaggedDocument> a{{doc("1", "en", {"x", "y"}), {"O"}}};
  EXPECT_THROW(extract_entity_surface_forms(a), DataError);
}

TEST(EntityCorpus, SingleTokenMatch) {
  const std::vector<Document> corpus{doc("1", "es", {"vivo", "en", "París"}), doc("2", "es", {"hola"})};
  const auto out = build_entity_corpus({"Paris"}, {{"Paris", "París"}}, corpus, 10);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].id, "1");
}

TEST(EntityCorpus, EmptyTableGivesNothing) {
  const std::vector<Document> corpus{doc("1", "es", {"París"})};
  EXPECT_TRUE(build_entity_corpus({"Paris"}, {}, corpus, 10).empty());
}

TEST(EntityCorpus, MultiTokenSubsequenceAndCaseSensitivity) {
  const std::vector<Document> corpus{doc("1", "es", {"en", "Nueva", "York", "hoy"}),
                                     doc("2", "es", {"Nueva", "hoy", "York"}),
                                     doc("3", "es", {"nueva", "york"})};
  const auto out = build_entity_corpus({"New York"}, {{"New York", "Nueva York"}}, corpus, 10);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].id, "1");
}

TEST(EntityCorpus, CapAndSubsetProperty) {
  Rng rng = make_rng(12, "entity-corpus");
  const std::vector<std::string> words{"a", "b", "c", "d"};
  std::vector<Document> corpus;
  for (int i = 0; i < 200; ++i) {
    std::vector<std::string> toks;
    for (std::size_t k = 0, n = 1 + uniform_index(rng, 6); k < n; ++k) toks.push_back(words[uniform_index(rng, 4)]);
    corpus.push_back(doc(std::to_string(i), "xx", toks));
  }
  const std::map<std::string, std::string> table{{"E1", "a b"}, {"E2", "d d c"}};
  const auto out = build_entity_corpus({"E1", "E2", "E3"}, table, corpus, 1000);
  // Independent scan: render each document with sentinels and search substrings.
  auto contains = [](const Document& d, const std::string& phrase) {
    std::string text = " ";
    for (const auto& t : d.tokens) text += t + " ";
    return text.find(" " + phrase + " ") != std::string::npos;
  };
  std::vector<std::string> expected;
  for (const auto& d : corpus) {
    if (contains(d, "a b") || contains(d, "d d c")) expected.push_back(d.id);
  }
  std::vector<std::string> got;
  for (const auto& d : out) got.push_back(d.id);
  EXPECT_EQ(got, expected);
  const auto capped = build_entity_corpus({"E1", "E2"}, table, corpus, 3);
  ASSERT_EQ(capped.size(), std::min<std::size_t>(3, expected.size()));
  for (std::size_t i = 0; i < capped.size(); ++i) EXPECT_EQ(capped[i].id, expected[i]);
}

TEST(MaskTokens, CeilingRule) {
  const Vocab v(std::vector<std::string>{"a", "b", "c", "d", "e", "f", "g", "h", "i", "j"});
  const auto ten = doc("1", "en", {"a", "b", "c", "d", "e", "f", "g", "h", "i", "j"});
  EXPECT_EQ(mask_tokens(ten, v, 0.15, 1).targets.size(), 2u);
  EXPECT_EQ(mask_tokens(doc("2", "en", {"a"}), v, 0.15, 1).targets.size(), 1u);
}

TEST(MaskTokens, TargetsAreExactlyTheMaskedPositions) {
  const Vocab v(std::vector<std::string>{"a", "b", "c"});
  Rng rng = make_rng(13, "mask-property");
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> toks;
    for (std::size_t k = 0, n = 1 + uniform_index(rng, 30); k < n; ++k) toks.push_back(std::string(1, char('a' + uniform_index(rng, 3))));
    const Document d = doc("x", "en", toks);
    const double rate = 0.05 + 0.9 * uniform_unit(rng);
    const auto batch = mask_tokens(d, v, rate, rng());
    const auto original = v.encode(d);
    EXPECT_EQ(batch.targets.size(), static_cast<std::size_t>(std::ceil(rate * toks.size() - 1e-12)));
    std::vector<std::size_t> masked;
    for (std::size_t i = 0; i < batch.input.size(); ++i) {
      if (batch.input[i] == Vocab::kMask) masked.push_back(i);
      else EXPECT_EQ(batch.input[i], original[i]);
    }
    std::vector<std::size_t> positions;
    for (const auto& [pos, id] : batch.targets) {
      positions.push_back(pos);
      EXPECT_EQ(id, original[pos]);
      EXPECT_FALSE(Vocab::is_reserved(id));
    }
    EXPECT_EQ(positions, masked);
  }
}

TEST(MaskTokens, DeterministicGivenSeed) {
  const Vocab v(std::vector<std::string>{"a", "b", "c", "d"});
  const auto d = doc("1", "en", {"a", "b", "c", "d", "a", "b", "c", "d"});
  EXPECT_EQ(mask_tokens(d, v, 0.3, 9).targets, mask_tokens(d, v, 0.3, 9).targets);
}

TEST(MaskTokens, RejectsBadInput) {
  const Vocab v(std::vector<std::string>{"a"});
  EXPECT_THROW(mask_tokens(doc("1", "en", {}), v, 0.15, 1), DataError);
  EXPECT_THROW(mask_tokens(doc("1", "en", {"a"}), v, 0.0, 1), DataError);
  EXPECT_THROW(mask_tokens(doc("1", "en", {"a"}), v, 1.0, 1), DataError);
}

TEST(MaskTokens, ReservedTokensAreNeverMasked) {
  const Vocab v(std::vector<std::string>{"a"});
  const auto batch = mask_tokens(doc("1", "en", {"[MASK]", "a", "[PAD]"}), v, 0.9, 4);
  ASSERT_EQ(batch.targets.size(), 1u);
  EXPECT_EQ(batch.targets[0].first, 1u);
}

}  // namespace
}  // namespace xling
