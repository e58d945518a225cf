#include "xling/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "xling/digest.hpp"
#include "xling/error.hpp"

namespace xling {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

[[noreturn]] void type_error(const std::string& key, const std::string& text, const char* want) {
  throw ConfigError("config key '" + key + "': expected " + want + ", got '" + text + "'");
}

template <typename T>
T parse_number(const std::string& key, const std::string& text, const char* want) {
  T value{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) type_error(key, text, want);
  return value;
}

void parse_into(const std::string& key, const std::string& text, bool& out) {
  if (text == "true" || text == "1") out = true;
  else if (text == "false" || text == "0") out = false;
  else type_error(key, text, "a boolean");
}
void parse_into(const std::string& key, const std::string& text, int& out) {
  out = parse_number<int>(key, text, "an integer");
}
void parse_into(const std::string& key, const std::string& text, std::size_t& out) {
  out = parse_number<std::size_t>(key, text, "a non-negative integer");
}
void parse_into(const std::string& key, const std::string& text, double& out) {
  out = parse_number<double>(key, text, "a number");
}
void parse_into(const std::string&, const std::string& text, std::string& out) { out = text; }
void parse_into(const std::string& key, const std::string& text, std::vector<double>& out) {
  std::string body = text;
  if (!body.empty() && body.front() == '[') {
    if (body.back() != ']') type_error(key, text, "a list like [0.1, 0.2]");
    body = body.substr(1, body.size() - 2);
  }
  out.clear();
  std::stringstream ss(body);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) type_error(key, text, "a list of numbers");
    out.push_back(parse_number<double>(key, item, "a list of numbers"));
  }
}
void parse_into(const std::string& key, const std::string& text, ThresholdMode& out) {
  if (text == "auto") out = ThresholdMode::automatic;
  else if (text == "fixed") out = ThresholdMode::fixed;
  else type_error(key, text, "auto|fixed");
}
void parse_into(const std::string& key, const std::string& text, SourceFilter& out) {
  if (text == "thresholded") out = SourceFilter::thresholded;
  else if (text == "argmax") out = SourceFilter::argmax;
  else type_error(key, text, "thresholded|argmax");
}
void parse_into(const std::string& key, const std::string& text, TeacherTargets& out) {
  if (text == "paired") out = TeacherTargets::paired;
  else if (text == "mean") out = TeacherTargets::mean;
  else type_error(key, text, "paired|mean");
}

std::string format(bool v) { return v ? "true" : "false"; }
std::string format(const std::string& v) { return v; }
std::string format(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}
template <typename T>
  requires std::is_integral_v<T>
std::string format(T v) {
  return std::to_string(v);
}
std::string format(const std::vector<double>& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + format(v[i]);
  return out + "]";
}
std::string format(ThresholdMode m) { return m == ThresholdMode::automatic ? "auto" : "fixed"; }
std::string format(SourceFilter f) { return f == SourceFilter::thresholded ? "thresholded" : "argmax"; }
std::string format(TeacherTargets t) { return t == TeacherTargets::paired ? "paired" : "mean"; }

struct Field {
  std::function<void(PipelineConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

template <typename Access>
Field field(Access access) {
  return {[access](PipelineConfig& c, const std::string& key, const std::string& text) {
            parse_into(key, text, access(c));
          },
          [access](const PipelineConfig& c) { return format(access(c)); }};
}

#define XLING_FIELD(name, member) \
  {name, field([](auto& c) -> auto& { return c.member; })}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      XLING_FIELD("seed", seed),
      XLING_FIELD("rounds", rounds),
      XLING_FIELD("num_classes", num_classes),
      XLING_FIELD("source_lang", source_lang),
      XLING_FIELD("target_lang", target_lang),
      XLING_FIELD("model.dim", dim),
      XLING_FIELD("model.voters", voters),
      XLING_FIELD("model.base_hidden", base_hidden),
      XLING_FIELD("model.hidden_step", hidden_step),
      XLING_FIELD("data.source_train", source_train),
      XLING_FIELD("data.target_unlabeled", target_unlabeled),
      XLING_FIELD("data.target_test", target_test),
      XLING_FIELD("data.btf_corpus", btf_corpus),
      XLING_FIELD("data.base_checkpoint", base_checkpoint),
      XLING_FIELD("btf.enabled", btf_enabled),
      XLING_FIELD("btf.mask_rate", mask_rate),
      XLING_FIELD("btf.epochs", btf.epochs),
      XLING_FIELD("btf.lr", btf.lr),
      XLING_FIELD("btf.batch_size", btf.batch_size),
      XLING_FIELD("btf.freeze_embeddings", btf.freeze_embeddings),
      XLING_FIELD("finetune.epochs", finetune.epochs),
      XLING_FIELD("finetune.lr", finetune.lr),
      XLING_FIELD("finetune.batch_size", finetune.batch_size),
      XLING_FIELD("finetune.freeze_embeddings", finetune.freeze_embeddings),
      XLING_FIELD("soft.epochs", soft.epochs),
      XLING_FIELD("soft.lr", soft.lr),
      XLING_FIELD("soft.batch_size", soft.batch_size),
      XLING_FIELD("soft.freeze_embeddings", soft.freeze_embeddings),
      XLING_FIELD("hard.epochs", hard.epochs),
      XLING_FIELD("hard.lr", hard.lr),
      XLING_FIELD("hard.batch_size", hard.batch_size),
      XLING_FIELD("hard.freeze_embeddings", hard.freeze_embeddings),
      XLING_FIELD("optim.weight_decay", weight_decay),
      XLING_FIELD("optim.warmup_ratio", warmup_ratio),
      XLING_FIELD("threshold.mode", threshold_mode),
      XLING_FIELD("threshold.fixed_alpha", fixed_alpha),
      XLING_FIELD("threshold.grid", grid),
      XLING_FIELD("threshold.min_recalled", min_recalled),
      XLING_FIELD("selftrain.source_filter", source_filter),
      XLING_FIELD("selftrain.teacher_targets", teacher_targets),
      XLING_FIELD("synth.vocab_per_language", synth.vocab_per_language),
      XLING_FIELD("synth.signal_per_class", synth.signal_per_class),
      XLING_FIELD("synth.shared_tokens", synth.shared_tokens),
      XLING_FIELD("synth.n_labeled_source", synth.n_labeled_source),
      XLING_FIELD("synth.n_unlabeled_target", synth.n_unlabeled_target),
      XLING_FIELD("synth.n_test_target", synth.n_test_target),
      XLING_FIELD("synth.n_btf_source", synth.n_btf_source),
      XLING_FIELD("synth.signal_strength", synth.signal_strength),
      XLING_FIELD("synth.signal_rate", synth.signal_rate),
      XLING_FIELD("synth.anchor_rate", synth.anchor_rate),
      XLING_FIELD("synth.anchor_strength", synth.anchor_strength),
      XLING_FIELD("synth.min_length", synth.min_length),
      XLING_FIELD("synth.max_length", synth.max_length),
      XLING_FIELD("corpus.tagged_source", corpus_tagged_source),
      XLING_FIELD("corpus.translation_table", corpus_translation_table),
      XLING_FIELD("corpus.target", corpus_target),
      XLING_FIELD("corpus.cap", corpus_cap),
      XLING_FIELD("eval.checkpoint", eval_checkpoint),
      XLING_FIELD("eval.data", eval_data),
      XLING_FIELD("eval.predictions", eval_predictions),
  };
  return table;
}

#undef XLING_FIELD

void check_phase(const PhaseConfig& p, const std::string& name) {
  if (!(p.lr > 0.0)) throw ConfigError(name + ".lr must be > 0");
  if (p.batch_size == 0) throw ConfigError(name + ".batch_size must be > 0");
}

}  // namespace

void set_config_value(PipelineConfig& config, const std::string& key, const std::string& value) {
  const auto it = fields().find(key);
  if (it == fields().end()) throw ConfigError("unknown config key '" + key + "'");
  it->second.set(config, key, value);
}

void apply_overrides(PipelineConfig& config, const std::vector<std::string>& overrides) {
  for (const auto& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + item + "' is not key=value");
    set_config_value(config, trim(item.substr(0, eq)), trim(item.substr(eq + 1)));
  }
}

PipelineConfig parse_config(const std::filesystem::path& path,
                            const std::vector<std::string>& overrides) {
  PipelineConfig config;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
      }
      set_config_value(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
  }
  apply_overrides(config, overrides);
  validate(config);
  return config;
}

void validate(const PipelineConfig& c) {
  const double twice = 2.0 * c.rounds;
  if (!(c.rounds >= 0.5) || std::abs(twice - std::round(twice)) > 1e-9) {
    throw ConfigError("rounds must be a positive multiple of 0.5, got " + format(c.rounds));
  }
  if (c.num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (c.dim == 0 || c.voters == 0 || c.base_hidden == 0) {
    throw ConfigError("model.dim, model.voters and model.base_hidden must be positive");
  }
  if (c.source_lang.empty() || c.target_lang.empty() || c.source_lang == c.target_lang) {
    throw ConfigError("source_lang and target_lang must be distinct and non-empty");
  }
  check_phase(c.btf, "btf");
  check_phase(c.finetune, "finetune");
  check_phase(c.soft, "soft");
  check_phase(c.hard, "hard");
  if (!(c.mask_rate > 0.0 && c.mask_rate < 1.0)) throw ConfigError("btf.mask_rate must lie in (0, 1)");
  if (c.weight_decay < 0.0) throw ConfigError("optim.weight_decay must be >= 0");
  if (!(c.warmup_ratio >= 0.0 && c.warmup_ratio < 1.0)) {
    throw ConfigError("optim.warmup_ratio must lie in [0, 1)");
  }
  if (!(c.fixed_alpha >= 0.0 && c.fixed_alpha < 1.0)) {
    throw ConfigError("threshold.fixed_alpha must lie in [0, 1)");
  }
  if (c.grid.empty()) throw ConfigError("threshold.grid must not be empty");
  for (std::size_t i = 0; i < c.grid.size(); ++i) {
    if (!(c.grid[i] >= 0.0 && c.grid[i] < 1.0) || (i > 0 && !(c.grid[i] > c.grid[i - 1]))) {
      throw ConfigError("threshold.grid must be strictly increasing within [0, 1)");
    }
  }
}

std::string to_text(const PipelineConfig& config) {
  std::string out;
  for (const auto& [key, f] : fields()) out += key + " = " + f.get(config) + "\n";
  return out;
}

std::string config_hash(const PipelineConfig& config) { return sha256_hex(to_text(config)); }

}  // namespace xling
