#include "xling/synthetic.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "xling/error.hpp"
#include "xling/random.hpp"

namespace xling {

namespace {

std::string numbered(const std::string& prefix, std::size_t i, int width = 4) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*zu", width, i);
  return prefix + buf;
}

/// Surface forms for one language: concept i -> word. Word numbers are a
/// seeded permutation so that spellings reveal nothing about classes.
std::vector<std::string> make_lexicon(const std::string& lang, std::size_t n, Rng& rng) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::string> words(n);
  for (std::size_t i = 0; i < n; ++i) words[i] = numbered(lang + "_", perm[i], 3);
  return words;
}

class Generator {
 public:
  Generator(const SynthSpec& spec, std::uint64_t seed) : spec_(spec), seed_(seed) {
    Rng rng = make_rng(seed, "synthetic.lexicon");
    source_words_ = make_lexicon(spec.source_lang, spec.vocab_per_language, rng);
    target_words_ = make_lexicon(spec.target_lang, spec.vocab_per_language, rng);
    for (std::size_t i = 0; i < spec.shared_tokens; ++i) shared_words_.push_back(numbered("ent_", i, 2));
  }

  /// One document and the label given by its majority signal class.
  LabeledExample sample(bool target, Rng& rng, std::string id) const {
    const auto classes = static_cast<std::size_t>(spec_.num_classes);
    const auto& lexicon = target ? target_words_ : source_words_;
    const std::size_t n_signal = classes * spec_.signal_per_class;
    const std::size_t n_noise = spec_.vocab_per_language - n_signal;
    const std::size_t anchors_per_class = spec_.shared_tokens / classes;

    const std::size_t latent = uniform_index(rng, classes);
    const std::size_t length =
        spec_.min_length + uniform_index(rng, spec_.max_length - spec_.min_length + 1);
    auto pick_class = [&](double strength) {
      return uniform_unit(rng) < strength ? latent : uniform_index(rng, classes);
    };

    for (;;) {
      // Slot kinds first, then signal words; anchors follow the resulting label.
      enum class Slot { signal, anchor, noise };
      std::vector<Slot> slots(length);
      for (auto& slot : slots) {
        const double u = uniform_unit(rng);
        slot = u < spec_.signal_rate                                               ? Slot::signal
               : u < spec_.signal_rate + spec_.anchor_rate && anchors_per_class > 0 ? Slot::anchor
                                                                                   : Slot::noise;
      }
      std::vector<std::size_t> votes(classes, 0);
      std::vector<std::size_t> signal_class(length, 0);
      for (std::size_t k = 0; k < length; ++k) {
        if (slots[k] != Slot::signal) continue;
        signal_class[k] = pick_class(spec_.signal_strength);
        ++votes[signal_class[k]];
      }
      // Require a strict majority so the label is a function of the words.
      const auto top = std::max_element(votes.begin(), votes.end());
      if (*top == 0 || std::count(votes.begin(), votes.end(), *top) > 1) continue;
      const auto label = static_cast<std::size_t>(top - votes.begin());

      Document doc{id, target ? spec_.target_lang : spec_.source_lang, {}};
      for (std::size_t k = 0; k < length; ++k) {
        switch (slots[k]) {
          case Slot::signal:
            doc.tokens.push_back(lexicon[signal_class[k] * spec_.signal_per_class +
                                         uniform_index(rng, spec_.signal_per_class)]);
            break;
          case Slot::anchor: {
            const std::size_t c =
                uniform_unit(rng) < spec_.anchor_strength ? label : uniform_index(rng, classes);
            doc.tokens.push_back(shared_words_[c * anchors_per_class + uniform_index(rng, anchors_per_class)]);
            break;
          }
          case Slot::noise:
            doc.tokens.push_back(lexicon[n_signal + uniform_index(rng, n_noise)]);
            break;
        }
      }
      return {std::move(doc), static_cast<int>(label)};
    }
  }

  std::vector<LabeledExample> batch(bool target, std::size_t n, const std::string& tag) const {
    Rng rng = make_rng(seed_, "synthetic." + tag);
    std::vector<LabeledExample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(sample(target, rng, numbered(tag + "-", i)));
    return out;
  }

  std::vector<std::pair<std::string, std::string>> dictionary() const {
    std::vector<std::pair<std::string, std::string>> dict;
    for (std::size_t i = 0; i < source_words_.size(); ++i) {
      dict.emplace_back(source_words_[i], target_words_[i]);
    }
    std::sort(dict.begin(), dict.end());
    return dict;
  }

 private:
  const SynthSpec& spec_;
  std::uint64_t seed_;
  std::vector<std::string> source_words_;
  std::vector<std::string> target_words_;
  std::vector<std::string> shared_words_;
};

std::vector<Document> strip_labels(std::vector<LabeledExample> data) {
  std::vector<Document> docs;
  docs.reserve(data.size());
  for (auto& ex : data) docs.push_back(std::move(ex.doc));
  return docs;
}

}  // namespace

SynthTask generate_synthetic_task(const SynthSpec& spec, std::uint64_t seed) {
  if (!(spec.signal_strength > 0.0 && spec.signal_strength <= 1.0)) {
    throw ConfigError("signal strength must lie in (0, 1]");
  }
  if (spec.num_classes < 2) throw ConfigError("synthetic task needs at least two classes");
  if (spec.n_labeled_source == 0 || spec.n_unlabeled_target == 0 || spec.n_test_target == 0 ||
      spec.n_btf_source == 0) {
    throw ConfigError("synthetic task counts must all be positive");
  }
  if (spec.signal_per_class == 0 ||
      static_cast<std::size_t>(spec.num_classes) * spec.signal_per_class >= spec.vocab_per_language) {
    throw ConfigError("vocabulary too small for the requested signal words");
  }
  if (spec.min_length == 0 || spec.max_length < spec.min_length) {
    throw ConfigError("invalid document length range");
  }
  if (!(spec.signal_rate > 0.0) || spec.signal_rate + spec.anchor_rate > 1.0) {
    throw ConfigError("signal and anchor rates must be positive and sum to at most 1");
  }

  Generator gen(spec, seed);
  SynthTask task;
  task.source_labeled = gen.batch(false, spec.n_labeled_source, "src-train");
  auto unlabeled = gen.batch(true, spec.n_unlabeled_target, "tgt-unlabeled");
  for (const auto& ex : unlabeled) task.target_unlabeled_labels.push_back(ex.label);
  task.target_unlabeled = strip_labels(std::move(unlabeled));
  task.target_test = gen.batch(true, spec.n_test_target, "tgt-test");
  task.btf_corpus = strip_labels(gen.batch(false, spec.n_btf_source, "src-btf"));
  task.btf_corpus.insert(task.btf_corpus.end(), task.target_unlabeled.begin(),
                         task.target_unlabeled.end());
  task.dictionary = gen.dictionary();
  return task;
}

void write_synthetic_task(const SynthTask& task, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_labeled(dir / "source_train.jsonl", task.source_labeled);
  write_unlabeled(dir / "target_unlabeled.jsonl", task.target_unlabeled);
  write_labeled(dir / "target_test.jsonl", task.target_test);
  write_unlabeled(dir / "btf_corpus.jsonl", task.btf_corpus);
  std::ofstream out(dir / "dictionary.tsv", std::ios::binary);
  if (!out) throw DataError("cannot write " + (dir / "dictionary.tsv").string());
  for (const auto& [src, tgt] : task.dictionary) out << src << '\t' << tgt << '\n';
}

}  // namespace xling
