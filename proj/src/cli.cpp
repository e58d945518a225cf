#include "xling/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "xling/checkpoint.hpp"
#include "xling/config.hpp"
#include "xling/error.hpp"
#include "xling/eval.hpp"
#include "xling/manifest.hpp"
#include "xling/report.hpp"
#include "xling/selftrain.hpp"
#include "xling/synthetic.hpp"
#include "xling/thresholding.hpp"

namespace xling {

namespace fs = std::filesystem;

namespace {

struct Invocation {
  std::string command;
  std::string config_path;
  fs::path run_dir;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  bool dry_run = false;
};

PipelineConfig resolve_config(const Invocation& inv) {
  auto overrides = inv.overrides;
  if (inv.seed) overrides.push_back("seed=" + std::to_string(*inv.seed));
  if (!inv.config_path.empty()) return parse_config(inv.config_path, overrides);
  PipelineConfig config;
  apply_overrides(config, overrides);
  validate(config);
  return config;
}

const std::string& require_path(const std::string& value, const char* key) {
  if (value.empty()) throw ConfigError(std::string(key) + " must be set for this command");
  return value;
}

void require_file(const std::string& path) {
  if (!fs::is_regular_file(path)) throw DataError("no such file: " + path);
}

struct DataNeeds {
  bool source = false;
  bool unlabeled = false;
  bool btf = false;
};

TaskData load_task_data(const PipelineConfig& config, DataNeeds needs) {
  TaskData data;
  if (needs.source) require_path(config.source_train, "data.source_train");
  if (needs.unlabeled) require_path(config.target_unlabeled, "data.target_unlabeled");
  if (needs.btf) require_path(config.btf_corpus, "data.btf_corpus");
  if (!config.source_train.empty()) data.source = load_labeled(config.source_train, config.num_classes);
  if (!config.target_unlabeled.empty()) data.target_unlabeled = load_unlabeled(config.target_unlabeled);
  if (!config.target_test.empty()) data.target_test = load_labeled(config.target_test, config.num_classes);
  if (!config.btf_corpus.empty()) split_btf_corpus(load_unlabeled(config.btf_corpus), config, data);
  return data;
}

std::map<std::string, std::size_t> set_sizes(const TaskData& data) {
  return {{"source_train", data.source.size()},
          {"target_unlabeled", data.target_unlabeled.size()},
          {"target_test", data.target_test.size()},
          {"btf_source", data.btf_source.size()},
          {"btf_target", data.btf_target.size()}};
}

/// Base model and vocabulary: from data.base_checkpoint, else the run
/// directory's own base checkpoint if `reuse_run_base`, else freshly built.
std::pair<Params, Vocab> obtain_base(const PipelineConfig& config, const TaskData& data,
                                     const fs::path& run_dir, bool reuse_run_base) {
  fs::path path = config.base_checkpoint;
  if (path.empty() && reuse_run_base && fs::exists(run_dir / "checkpoints" / "base.ckpt")) {
    path = run_dir / "checkpoints" / "base.ckpt";
  }
  if (!path.empty()) {
    Checkpoint ckpt = load_checkpoint(path);
    return {std::move(ckpt.params), std::move(ckpt.vocab)};
  }
  Vocab vocab = task_vocab(data);
  return {build_base(config, vocab, data), std::move(vocab)};
}

/// Writes checkpoints and the manifest under the run directory as phases finish.
class RunRecorder {
 public:
  RunRecorder(fs::path run_dir, const PipelineConfig& config, const Vocab& vocab,
              std::string command)
      : run_dir_(std::move(run_dir)), config_(config), vocab_(vocab) {
    fs::create_directories(run_dir_ / "checkpoints");
    std::ofstream(run_dir_ / "config.txt", std::ios::binary | std::ios::trunc) << to_text(config);
    manifest_.command = std::move(command);
    manifest_.config_hash = config_hash(config);
    manifest_.seed = config.seed;
    manifest_.timestamps["run.start"] = utc_timestamp();
    last_mark_ = manifest_.timestamps["run.start"];
  }

  void set_sizes(std::map<std::string, std::size_t> sizes) { manifest_.set_sizes = std::move(sizes); }

  void phase(const PhaseRecord& record, const Params& params) {
    const std::string rel = "checkpoints/" + record.name + ".ckpt";
    save_checkpoint(params, vocab_, {record.stage, record.round, config_.seed, manifest_.config_hash},
                    run_dir_ / rel);
    manifest_.phases.push_back({record.name, to_string(record.stage), record.round, rel,
                                record.params_sha256, record.metrics});
    const std::string now = utc_timestamp();
    manifest_.timestamps[record.name + ".start"] = last_mark_;
    manifest_.timestamps[record.name + ".end"] = now;
    last_mark_ = now;
    flush();
  }

  void round(const RoundSummary& summary) {
    manifest_.rounds.push_back(summary);
    manifest_.removed_ids.insert(manifest_.removed_ids.end(), summary.removed_ids.begin(),
                                 summary.removed_ids.end());
    flush();
  }

  PipelineObserver observer() {
    return {[this](const PhaseRecord& r, const Params& p) { phase(r, p); },
            [this](const RoundSummary& s) { round(s); }};
  }

  void finish() {
    manifest_.timestamps["run.end"] = utc_timestamp();
    flush();
  }

 private:
  void flush() { write_manifest(manifest_, run_dir_ / "manifest.json"); }

  fs::path run_dir_;
  const PipelineConfig& config_;
  const Vocab& vocab_;
  RunManifest manifest_;
  std::string last_mark_;
};

PhaseRecord evaluated_record(std::string name, Stage stage, const Params& params,
                             const Vocab& vocab, const TaskData& data) {
  PhaseRecord record{std::move(name), stage, 0, params_digest(params), {}};
  if (!data.target_test.empty()) {
    record.metrics.push_back({"target_test", "accuracy", evaluate_accuracy(params, vocab, data.target_test)});
  }
  return record;
}

void print_report(const fs::path& run_dir, std::ostream& out) {
  out << render_table(report(run_dir));
}

int cmd_synth(const Invocation& inv, const PipelineConfig& config, std::ostream& out) {
  SynthTask task = generate_synthetic_task(config.synth, config.seed);
  if (inv.dry_run) {
    out << "would write " << task.source_labeled.size() << " source, " << task.target_unlabeled.size()
        << " unlabeled, " << task.target_test.size() << " test and " << task.btf_corpus.size()
        << " pretraining documents\n";
    return 0;
  }
  RunDirLock lock(inv.run_dir);
  const fs::path dir = inv.run_dir / "data";
  write_synthetic_task(task, dir);
  const fs::path abs = fs::absolute(dir);
  std::ofstream conf(inv.run_dir / "data.conf", std::ios::binary | std::ios::trunc);
  conf << "data.source_train = " << (abs / "source_train.jsonl").string() << '\n'
       << "data.target_unlabeled = " << (abs / "target_unlabeled.jsonl").string() << '\n'
       << "data.target_test = " << (abs / "target_test.jsonl").string() << '\n'
       << "data.btf_corpus = " << (abs / "btf_corpus.jsonl").string() << '\n'
       << "source_lang = " << config.synth.source_lang << '\n'
       << "target_lang = " << config.synth.target_lang << '\n'
       << "num_classes = " << config.synth.num_classes << '\n';
  out << "wrote synthetic task to " << dir.string() << '\n';
  return 0;
}

int cmd_make_corpus(const Invocation& inv, const PipelineConfig& config, std::ostream& out) {
  const auto tagged = load_tagged(require_path(config.corpus_tagged_source, "corpus.tagged_source"));
  const auto table =
      load_translation_table(require_path(config.corpus_translation_table, "corpus.translation_table"));
  const auto target = load_unlabeled(require_path(config.corpus_target, "corpus.target"));
  const auto entities = extract_entity_surface_forms(tagged);
  const auto corpus = build_entity_corpus(entities, table, target, config.corpus_cap);
  out << entities.size() << " entities, " << corpus.size() << " matching target documents\n";
  if (inv.dry_run) return 0;
  RunDirLock lock(inv.run_dir);
  write_unlabeled(inv.run_dir / "entity_corpus.jsonl", corpus);
  return 0;
}

int cmd_btf(const Invocation& inv, const PipelineConfig& config, std::ostream& out) {
  const TaskData data = load_task_data(config, {.btf = true});
  if (data.btf_source.empty() || data.btf_target.empty()) {
    throw DataError("pretraining needs unlabeled documents in both languages");
  }
  if (inv.dry_run) {
    out << "config and data ok\n";
    return 0;
  }
  RunDirLock lock(inv.run_dir);
  const Vocab vocab = task_vocab(data);
  PipelineConfig btf_config = config;
  btf_config.btf_enabled = true;
  const Params base = build_base(btf_config, vocab, data);
  RunRecorder recorder(inv.run_dir, config, vocab, "btf");
  recorder.set_sizes(set_sizes(data));
  recorder.phase({"base", Stage::base, 0, params_digest(base), {}}, base);
  recorder.finish();
  out << "base model written to " << (inv.run_dir / "checkpoints" / "base.ckpt").string() << '\n';
  return 0;
}

int cmd_finetune(const Invocation& inv, const PipelineConfig& config, std::ostream& out) {
  const TaskData data = load_task_data(config, {.source = true});
  if (config.base_checkpoint.empty() && !fs::exists(inv.run_dir / "checkpoints" / "base.ckpt")) {
    throw ConfigError("finetune needs data.base_checkpoint or a run directory holding base.ckpt");
  }
  if (!config.base_checkpoint.empty()) require_file(config.base_checkpoint);
  if (inv.dry_run) {
    out << "config and data ok\n";
    return 0;
  }
  RunDirLock lock(inv.run_dir);
  auto [base, vocab] = obtain_base(config, data, inv.run_dir, true);
  if (!(base.dims == config.model_dims(vocab.size()))) {
    throw ConfigError("base checkpoint dimensions do not match the configuration");
  }
  const PhaseResult tuned = finetune_source(base, vocab, data.source, config.finetune,
                                            train_options(config), derive_seed(config.seed, "source"));
  RunRecorder recorder(inv.run_dir, config, vocab, "finetune");
  recorder.set_sizes(set_sizes(data));
  recorder.phase(evaluated_record("finetuned", Stage::finetuned, tuned.params, vocab, data), tuned.params);
  recorder.finish();
  print_report(inv.run_dir, out);
  return 0;
}

int cmd_selftrain(const Invocation& inv, const PipelineConfig& config, std::ostream& out) {
  const bool need_btf = config.base_checkpoint.empty() && config.btf_enabled;
  const TaskData data = load_task_data(config, {.source = true, .unlabeled = true, .btf = need_btf});
  if (!config.base_checkpoint.empty()) require_file(config.base_checkpoint);
  if (inv.dry_run) {
    out << "config and data ok\n";
    return 0;
  }
  RunDirLock lock(inv.run_dir);
  auto [base, vocab] = obtain_base(config, data, inv.run_dir, false);
  RunRecorder recorder(inv.run_dir, config, vocab, "selftrain");
  recorder.set_sizes(set_sizes(data));
  run_pipeline(config, vocab, data, std::move(base), recorder.observer());
  recorder.finish();
  print_report(inv.run_dir, out);
  return 0;
}

int cmd_eval(const Invocation& inv, const PipelineConfig& config, std::ostream& out) {
  const bool have_manifest = fs::exists(inv.run_dir / "manifest.json");
  const bool score_tags = !config.eval_predictions.empty();
  const bool score_model = !config.eval_checkpoint.empty();
  if (!have_manifest && !score_tags && !score_model) {
    throw DataError("nothing to evaluate: no manifest in " + inv.run_dir.string() +
                    " and neither eval.checkpoint nor eval.predictions set");
  }
  if (score_tags) {
    const auto gold = load_tagged(require_path(config.eval_data, "eval.data"));
    const auto pred = load_tagged(config.eval_predictions);
    if (gold.size() != pred.size()) throw DataError("eval.data and eval.predictions differ in length");
    std::vector<BioSequence> g, p;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      if (gold[i].doc.id != pred[i].doc.id) {
        throw DataError("document " + std::to_string(i) + ": id '" + pred[i].doc.id +
                        "' does not match '" + gold[i].doc.id + "'");
      }
      g.push_back(gold[i].tags);
      p.push_back(pred[i].tags);
    }
    const PrfScore s = entity_f1(g, p);
    char buf[128];
    std::snprintf(buf, sizeof buf, "entity P %.2f R %.2f F1 %.2f\n", 100 * s.precision,
                  100 * s.recall, 100 * s.f1);
    out << buf;
  }
  if (score_model) {
    const Checkpoint ckpt = load_checkpoint(config.eval_checkpoint);
    const auto data = load_labeled(require_path(config.eval_data, "eval.data"), config.num_classes);
    char buf[64];
    std::snprintf(buf, sizeof buf, "accuracy %.2f\n", 100 * evaluate_accuracy(ckpt.params, ckpt.vocab, data));
    out << buf;
  }
  if (have_manifest && !inv.dry_run) {
    RunDirLock lock(inv.run_dir);
    print_report(inv.run_dir, out);
  }
  return 0;
}

int cmd_threshold_curve(const Invocation& inv, const PipelineConfig& config, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(require_path(config.eval_checkpoint, "eval.checkpoint"));
  const auto data = load_labeled(require_path(config.eval_data, "eval.data"), config.num_classes);
  const auto records = predict_records(ckpt.params, ckpt.vocab, data);
  const ThresholdCurve curve = threshold_curve(records, config.grid);
  const std::size_t floor =
      config.min_recalled ? config.min_recalled : default_min_recalled(records.size());
  if (!inv.dry_run) {
    RunDirLock lock(inv.run_dir);
    std::ofstream csv(inv.run_dir / "threshold_curve.csv", std::ios::binary | std::ios::trunc);
    write_curve_csv(csv, curve);
  }
  write_curve_csv(out, curve);
  out << "selected alpha " << select_alpha(curve, floor) << '\n';
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cross-lingual self-training toolkit", "xling"};
  app.require_subcommand(1);
  app.fallthrough();

  Invocation inv;
  std::string run_dir = "run";
  std::uint64_t seed = 0;
  app.add_option("--config", inv.config_path, "key=value configuration file");
  app.add_option("--run-dir", run_dir, "output directory")->capture_default_str();
  app.add_option("--set", inv.overrides, "override a config key (key=value), repeatable");
  auto* seed_opt = app.add_option("--seed", seed, "master seed (overrides the config)");
  app.add_flag("--dry-run", inv.dry_run, "validate config and data without training");

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"synth", "generate a synthetic bilingual task"},
      {"make-corpus", "select target documents mentioning translated source entities"},
      {"btf", "masked-token pretraining on the bilingual corpus"},
      {"finetune", "train classifier heads on labeled source data"},
      {"selftrain", "full pipeline: pretraining, fine-tuning and self-training rounds"},
      {"eval", "score a checkpoint or predictions and render the run report"},
      {"threshold-curve", "accuracy/recall curve of a checkpoint over the threshold grid"}};
  for (const auto& [name, help] : commands) app.add_subcommand(name, help);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return static_cast<int>(ErrorKind::usage);
  }
  inv.command = app.get_subcommands().front()->get_name();
  inv.run_dir = run_dir;
  if (seed_opt->count() > 0) inv.seed = seed;

  try {
    const PipelineConfig config = resolve_config(inv);
    if (inv.command == "synth") return cmd_synth(inv, config, out);
    if (inv.command == "make-corpus") return cmd_make_corpus(inv, config, out);
    if (inv.command == "btf") return cmd_btf(inv, config, out);
    if (inv.command == "finetune") return cmd_finetune(inv, config, out);
    if (inv.command == "selftrain") return cmd_selftrain(inv, config, out);
    if (inv.command == "eval") return cmd_eval(inv, config, out);
    return cmd_threshold_curve(inv, config, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::data);
  }
}

}  // namespace xling
