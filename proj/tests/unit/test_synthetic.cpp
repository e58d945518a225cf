#include <gtest/gtest.h>

#include <map>
#include <set>

#include "task_fixture.hpp"
#include "test_util.hpp"
#include "xling/error.hpp"

namespace xling {
namespace {

using testing::read_file;
using testing::TempDir;

/// Word -> labels of the documents containing it.
std::map<std::string, std::set<int>> label_sets(std::span<const LabeledExample> data) {
  std::map<std::string, std::set<int>> out;
  for (const auto& ex : data) {
    for (const auto& t : ex.doc.tokens) out[t].insert(ex.label);
  }
  return out;
}

/// With full signal strength and no shared words, a private word seen with a
/// single label is a signal word of that class; noise words are common enough
/// to be seen with both labels.
std::map<std::string, int> signal_classes(const SynthSpec& base, std::uint64_t seed) {
  SynthSpec spec = base;
  spec.signal_strength = 1.0;
  spec.anchor_rate = 0.0;
  spec.n_labeled_source = 2000;
  const auto task = generate_synthetic_task(spec, seed);
  std::map<std::string, int> out;
  for (const auto& [word, labels] : label_sets(task.source_labeled)) {
    if (labels.size() == 1) out[word] = *labels.begin();
  }
  return out;
}

TEST(Synthetic, DeterministicFiles) {
  TempDir dir;
  const auto spec = testing::small_spec();
  write_synthetic_task(generate_synthetic_task(spec, 3), dir / "a");
  write_synthetic_task(generate_synthetic_task(spec, 3), dir / "b");
  write_synthetic_task(generate_synthetic_task(spec, 4), dir / "c");
  for (const char* name : {"source_train.jsonl", "target_unlabeled.jsonl", "target_test.jsonl",
                           "btf_corpus.jsonl", "dictionary.tsv"}) {
    EXPECT_EQ(read_file(dir / "a" / name), read_file(dir / "b" / name)) << name;
  }
  EXPECT_NE(read_file(dir / "a" / "source_train.jsonl"), read_file(dir / "c" / "source_train.jsonl"));
}

TEST(Synthetic, CountsAndSingleExample) {
  auto spec = testing::small_spec();
  auto task = generate_synthetic_task(spec, 1);
  EXPECT_EQ(task.source_labeled.size(), spec.n_labeled_source);
  EXPECT_EQ(task.target_unlabeled.size(), spec.n_unlabeled_target);
  EXPECT_EQ(task.target_unlabeled_labels.size(), spec.n_unlabeled_target);
  EXPECT_EQ(task.target_test.size(), spec.n_test_target);
  EXPECT_EQ(task.btf_corpus.size(), spec.n_btf_source + spec.n_unlabeled_target);
  spec.n_labeled_source = 1;
  EXPECT_EQ(generate_synthetic_task(spec, 1).source_labeled.size(), 1u);
}

TEST(Synthetic, RejectsBadSpecs) {
  auto spec = testing::small_spec();
  spec.signal_strength = 0.0;
  EXPECT_THROW(generate_synthetic_task(spec, 1), ConfigError);
  spec.signal_strength = 1.01;
  EXPECT_THROW(generate_synthetic_task(spec, 1), ConfigError);
  spec = testing::small_spec();
  spec.n_test_target = 0;
  EXPECT_THROW(generate_synthetic_task(spec, 1), ConfigError);
}

TEST(Synthetic, DisjointVocabulariesAndDictionary) {
  const auto spec = testing::small_spec();
  const auto task = generate_synthetic_task(spec, 2);
  std::set<std::string> src, tgt;
  for (const auto& ex : task.source_labeled) {
    EXPECT_EQ(ex.doc.lang, "src");
    src.insert(ex.doc.tokens.begin(), ex.doc.tokens.end());
  }
  for (const auto& ex : task.target_test) {
    EXPECT_EQ(ex.doc.lang, "tgt");
    tgt.insert(ex.doc.tokens.begin(), ex.doc.tokens.end());
  }
  std::set<std::string> shared;
  for (const auto& w : src) {
    if (tgt.count(w)) shared.insert(w);
  }
  EXPECT_LE(shared.size(), spec.shared_tokens);
  for (const auto& w : shared) EXPECT_EQ(w.rfind("ent_", 0), 0u) << w;

  ASSERT_EQ(task.dictionary.size(), spec.vocab_per_language);
  std::set<std::string> keys, values;
  for (const auto& [s, t] : task.dictionary) {
    keys.insert(s);
    values.insert(t);
    EXPECT_EQ(s.rfind("src_", 0), 0u);
    EXPECT_EQ(t.rfind("tgt_", 0), 0u);
  }
  EXPECT_EQ(keys.size(), spec.vocab_per_language);
  EXPECT_EQ(values.size(), spec.vocab_per_language);
}

TEST(Synthetic, LabelsAreMajoritySignalClass) {
  const auto spec = testing::small_spec();
  const auto classes = signal_classes(spec, 5);
  ASSERT_EQ(classes.size(), static_cast<std::size_t>(spec.num_classes) * spec.signal_per_class);

  // The dictionary carries each source signal word onto a target word of the same class.
  std::map<std::string, int> all = classes;
  const auto task = generate_synthetic_task(spec, 5);
  for (const auto& [s, t] : task.dictionary) {
    if (classes.count(s)) all[t] = classes.at(s);
  }

  auto check = [&](const LabeledExample& ex) {
    std::vector<int> votes(spec.num_classes, 0);
    for (const auto& t : ex.doc.tokens) {
      if (all.count(t)) ++votes[all.at(t)];
    }
    const int top = *std::max_element(votes.begin(), votes.end());
    ASSERT_EQ(std::count(votes.begin(), votes.end(), top), 1) << ex.doc.id;
    EXPECT_EQ(votes[ex.label], top) << ex.doc.id;
  };
  for (const auto& ex : task.source_labeled) check(ex);
  for (const auto& ex : task.target_test) check(ex);
  for (std::size_t i = 0; i < task.target_unlabeled.size(); ++i) {
    check({task.target_unlabeled[i], task.target_unlabeled_labels[i]});
  }
}

TEST(Synthetic, FullSignalTransfersAboveNinetyPercent) {
  SynthSpec spec;
  spec.signal_strength = 1.0;
  PipelineConfig config;
  const auto task = generate_synthetic_task(spec, 11);
  const auto data = testing::task_data(task, config);
  const auto vocab = task_vocab(data);
  const auto base = build_base(config, vocab, data);
  const auto tuned = finetune_source(base, vocab, data.source, config.finetune,
                                     train_options(config), 12);
  EXPECT_GT(evaluate_accuracy(tuned.params, vocab, data.target_test), 0.9);
}

}  // namespace
}  // namespace xling
