#include "xling/selftrain.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "xling/error.hpp"
#include "xling/random.hpp"

namespace xling {

namespace {

std::vector<HardSample> to_hard_samples(const Vocab& vocab, std::span<const LabeledExample> data) {
  std::vector<HardSample> out;
  out.reserve(data.size());
  for (const auto& ex : data) out.push_back({vocab.encode(ex.doc), ex.label});
  return out;
}

/// Mini-batch loop shared by every phase. `gradient(epoch, batch_indices)`
/// returns the batch gradient; `epoch_size(epoch)` the number of items.
template <typename EpochSize, typename BatchGradient>
void run_epochs(Params& params, const PhaseConfig& phase, const TrainOptions& options,
                const Trainable& trainable, std::uint64_t seed, EpochSize epoch_size,
                BatchGradient gradient) {
  if (phase.epochs == 0) return;
  std::size_t total_steps = 0;
  for (std::size_t e = 0; e < phase.epochs; ++e) {
    total_steps += (epoch_size(e) + phase.batch_size - 1) / phase.batch_size;
  }
  const auto warmup_steps =
      static_cast<std::size_t>(std::ceil(options.warmup_ratio * static_cast<double>(total_steps)));

  AdamState<double> state(params.dims);
  const AdamConfig adam{phase.lr, 0.9, 0.999, 1e-8, options.weight_decay};
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < phase.epochs; ++epoch) {
    const std::size_t n = epoch_size(epoch);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng = make_rng(seed, "epoch-order", epoch);
    shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += phase.batch_size) {
      const std::size_t stop = std::min(n, start + phase.batch_size);
      const std::span<const std::size_t> batch(order.data() + start, stop - start);
      const Gradient<double> g = gradient(epoch, batch);
      double lr = phase.lr;
      if (warmup_steps > 0 && step < warmup_steps) {
        lr *= static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
      }
      optimizer_step(params, g.grad, state, adam, lr, trainable);
      ++step;
    }
  }
  if (!all_finite(params)) throw NumericError("parameters became non-finite during training");
}

Trainable task_trainable(const PhaseConfig& phase) {
  return Trainable{!phase.freeze_embeddings, false, true};
}

std::string round_name(int round, Stage stage) {
  return "round" + std::to_string(round) + "-" + to_string(stage);
}

PhaseRecord make_record(const std::string& name, Stage stage, int round, const Params& params,
                        const RoundContext& ctx) {
  PhaseRecord record{name, stage, round, params_digest(params), {}};
  if (!ctx.data.target_test.empty()) {
    record.metrics.push_back(
        {"target_test", "accuracy", evaluate_accuracy(params, ctx.vocab, ctx.data.target_test)});
  }
  return record;
}

void emit(RoundState& state, const RoundContext& ctx, PhaseRecord record, const Params& params) {
  if (ctx.observer.on_phase) ctx.observer.on_phase(record, params);
  state.phases.push_back(std::move(record));
}

/// Student restored from the base encoder with fresh, round-seeded voter heads.
Params restore_student(const Params& base, const PipelineConfig& config, int round) {
  Params student = base;
  reinit_voters(student, derive_seed(config.seed, "student-voters", static_cast<std::uint64_t>(round)));
  return student;
}

double choose_alpha(const Params& soft_student, const RoundState& state, const RoundContext& ctx) {
  if (ctx.config.threshold_mode == ThresholdMode::fixed) return ctx.config.fixed_alpha;
  if (state.source.empty()) return kFallbackAlpha;
  const auto records = predict_records(soft_student, ctx.vocab, state.source);
  const auto curve = threshold_curve(records, ctx.config.grid);
  const std::size_t floor = ctx.config.min_recalled ? ctx.config.min_recalled
                                                    : default_min_recalled(records.size());
  return select_alpha(curve, floor);
}

}  // namespace

TrainOptions train_options(const PipelineConfig& config) {
  return {config.weight_decay, config.warmup_ratio, config.teacher_targets};
}

std::optional<Vote> decide(std::span<const Distribution<double>> voter_outputs) {
  if (voter_outputs.empty()) return std::nullopt;
  Eigen::Index label;
  voter_outputs.front().maxCoeff(&label);
  double min_confidence = voter_outputs.front()(label);
  for (const auto& dist : voter_outputs.subspan(1)) {
    Eigen::Index other;
    dist.maxCoeff(&other);
    if (other != label) return std::nullopt;
    min_confidence = std::min(min_confidence, dist(label));
  }
  return Vote{static_cast<int>(label), min_confidence};
}

std::vector<PredictionRecord> predict_records(const Params& params, const Vocab& vocab,
                                              std::span<const Document> docs,
                                              std::span<const int> gold) {
  if (!gold.empty() && gold.size() != docs.size()) {
    throw DataError("predict_records: gold labels do not match documents");
  }
  std::vector<PredictionRecord> records;
  records.reserve(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const auto ids = vocab.encode(docs[i]);
    const auto outputs = voters_forward(params, encode(params, std::span<const TokenId>(ids)));
    PredictionRecord r{decide(outputs), std::nullopt};
    if (!gold.empty()) r.gold = gold[i];
    records.push_back(r);
  }
  return records;
}

std::vector<PredictionRecord> predict_records(const Params& params, const Vocab& vocab,
                                              std::span<const LabeledExample> data) {
  std::vector<Document> docs;
  std::vector<int> gold;
  docs.reserve(data.size());
  gold.reserve(data.size());
  for (const auto& ex : data) {
    docs.push_back(ex.doc);
    gold.push_back(ex.label);
  }
  return predict_records(params, vocab, docs, gold);
}

PseudoLabeledSet generate_pseudo_labels(const Params& params, const Vocab& vocab,
                                        std::span<const Document> unlabeled, double alpha) {
  const auto records = predict_records(params, vocab, unlabeled);
  PseudoLabeledSet set{{}, alpha};
  for (std::size_t i = 0; i < unlabeled.size(); ++i) {
    if (is_recalled(records[i], alpha)) set.examples.push_back({unlabeled[i], records[i].vote->label});
  }
  return set;
}

FilterResult filter_consistent_source(const Params& params, const Vocab& vocab,
                                      std::span<const LabeledExample> source, double alpha,
                                      SourceFilter mode) {
  FilterResult result;
  for (const auto& ex : source) {
    const auto ids = vocab.encode(ex.doc);
    bool keep;
    if (mode == SourceFilter::thresholded) {
      const auto vote = decide(voters_forward(params, encode(params, std::span<const TokenId>(ids))));
      const PredictionRecord record{vote, ex.label};
      keep = is_recalled(record, alpha) && vote->label == ex.label;
    } else {
      keep = predict_label(params, std::span<const TokenId>(ids)) == ex.label;
    }
    if (keep) {
      result.kept.push_back(ex);
    } else {
      result.removed_ids.push_back(ex.doc.id);
    }
  }
  return result;
}

PhaseResult run_btf(Params params, const Vocab& vocab, std::span<const Document> source_docs,
                    std::span<const Document> target_docs, const PhaseConfig& phase,
                    double mask_rate, const TrainOptions& options, std::uint64_t seed) {
  std::vector<MaskedBatch> eval_batch;
  {
    std::uint64_t k = 0;
    for (auto docs : {source_docs, target_docs}) {
      for (const auto& doc : docs) {
        eval_batch.push_back(mask_tokens(doc, vocab, mask_rate, derive_seed(seed, "mlm-eval", k++)));
      }
    }
  }
  PhaseResult result{std::move(params), 0.0, 0.0};
  result.initial_loss = batch_loss<double>(result.params, eval_batch);

  std::vector<Document> epoch_docs;
  std::size_t loaded_epoch = SIZE_MAX;
  auto load_epoch = [&](std::size_t epoch) {
    if (loaded_epoch != epoch) {
      epoch_docs = balanced_resample(source_docs, target_docs, seed, epoch);
      loaded_epoch = epoch;
    }
  };
  const std::size_t per_epoch = 2 * std::min(source_docs.size(), target_docs.size());
  const Trainable trainable{!phase.freeze_embeddings, true, false};
  run_epochs(
      result.params, phase, options, trainable, derive_seed(seed, "btf"),
      [&](std::size_t) { return per_epoch; },
      [&](std::size_t epoch, std::span<const std::size_t> idx) {
        load_epoch(epoch);
        std::vector<MaskedBatch> batch;
        batch.reserve(idx.size());
        for (std::size_t i : idx) {
          batch.push_back(mask_tokens(epoch_docs[i], vocab, mask_rate,
                                      derive_seed(seed, "mlm-mask", epoch * per_epoch + i)));
        }
        return backward<double>(result.params, batch, phase.freeze_embeddings);
      });
  result.final_loss = batch_loss<double>(result.params, eval_batch);
  return result;
}

PhaseResult distill_soft(const Params& teacher, Params student, const Vocab& vocab,
                         std::span<const Document> unlabeled, const PhaseConfig& phase,
                         const TrainOptions& options, std::uint64_t seed) {
  if (unlabeled.empty()) throw DataError("soft distillation needs unlabeled target documents");
  if (!(teacher.dims == student.dims)) throw DataError("teacher and student dimensions differ");

  std::vector<SoftSample<double>> samples;
  samples.reserve(unlabeled.size());
  for (const auto& doc : unlabeled) {
    auto ids = vocab.encode(doc);
    auto outputs = voters_forward(teacher, encode(teacher, std::span<const TokenId>(ids)));
    if (options.teacher_targets == TeacherTargets::mean) {
      const Distribution<double> mean = mean_distribution<double>(outputs);
      for (auto& o : outputs) o = mean;
    }
    samples.push_back({std::move(ids), std::move(outputs)});
  }

  PhaseResult result{std::move(student), 0.0, 0.0};
  result.initial_loss = batch_loss<double>(result.params, samples);
  run_epochs(
      result.params, phase, options, task_trainable(phase), derive_seed(seed, "soft"),
      [&](std::size_t) { return samples.size(); },
      [&](std::size_t, std::span<const std::size_t> idx) {
        std::vector<SoftSample<double>> batch;
        batch.reserve(idx.size());
        for (std::size_t i : idx) batch.push_back(samples[i]);
        return backward<double>(result.params, batch, phase.freeze_embeddings);
      });
  result.final_loss = batch_loss<double>(result.params, samples);
  return result;
}

PhaseResult finetune_hard(Params student, const Vocab& vocab, std::span<const LabeledExample> data,
                          const PhaseConfig& phase, const TrainOptions& options,
                          std::uint64_t seed) {
  if (data.empty()) {
    throw DataError(
        "hard fine-tuning has no data: no consistent source samples and no pseudo labels "
        "(the confidence threshold is likely too high)");
  }
  const auto samples = to_hard_samples(vocab, data);
  PhaseResult result{std::move(student), 0.0, 0.0};
  result.initial_loss = batch_loss<double>(result.params, samples);
  run_epochs(
      result.params, phase, options, task_trainable(phase), derive_seed(seed, "hard"),
      [&](std::size_t) { return samples.size(); },
      [&](std::size_t, std::span<const std::size_t> idx) {
        std::vector<HardSample> batch;
        batch.reserve(idx.size());
        for (std::size_t i : idx) batch.push_back(samples[i]);
        return backward<double>(result.params, batch, phase.freeze_embeddings);
      });
  result.final_loss = batch_loss<double>(result.params, samples);
  return result;
}

PhaseResult finetune_source(const Params& base, const Vocab& vocab,
                            std::span<const LabeledExample> source, const PhaseConfig& phase,
                            const TrainOptions& options, std::uint64_t seed) {
  Params student = base;
  reinit_voters(student, derive_seed(seed, "finetune-voters"));
  return finetune_hard(std::move(student), vocab, source, phase, options,
                       derive_seed(seed, "finetune"));
}

double evaluate_accuracy(const Params& params, const Vocab& vocab,
                         std::span<const LabeledExample> data) {
  std::vector<int> predicted, gold;
  predicted.reserve(data.size());
  gold.reserve(data.size());
  for (const auto& ex : data) {
    const auto ids = vocab.encode(ex.doc);
    predicted.push_back(predict_label(params, std::span<const TokenId>(ids)));
    gold.push_back(ex.label);
  }
  return accuracy(predicted, gold);
}

RoundState run_round(RoundState state, const RoundContext& ctx) {
  const PipelineConfig& config = ctx.config;
  const TrainOptions options = train_options(config);
  const int round = state.round + 1;
  const auto round_seed = derive_seed(config.seed, "round", static_cast<std::uint64_t>(round));

  // Soft step: the teacher is read-only from here on.
  PhaseResult soft = distill_soft(state.teacher, restore_student(state.base, config, round),
                                  ctx.vocab, ctx.data.target_unlabeled, config.soft, options,
                                  derive_seed(round_seed, "soft"));
  emit(state, ctx, make_record(round_name(round, Stage::soft), Stage::soft, round, soft.params, ctx),
       soft.params);

  RoundSummary summary;
  summary.round = round;
  summary.alpha = choose_alpha(soft.params, state, ctx);

  PseudoLabeledSet pseudo =
      generate_pseudo_labels(soft.params, ctx.vocab, ctx.data.target_unlabeled, summary.alpha);
  FilterResult filtered = filter_consistent_source(soft.params, ctx.vocab, state.source,
                                                   summary.alpha, config.source_filter);
  summary.pseudo_labeled = pseudo.examples.size();
  summary.source_kept = filtered.kept.size();
  summary.removed_ids = filtered.removed_ids;
  state.source = std::move(filtered.kept);
  state.removed_ids.insert(state.removed_ids.end(), filtered.removed_ids.begin(),
                           filtered.removed_ids.end());

  if (pseudo.examples.empty() && state.source.empty()) {
    throw DataError("round " + std::to_string(round) + ": alpha " + std::to_string(summary.alpha) +
                    " left neither pseudo labels nor consistent source samples");
  }
  if (pseudo.examples.empty()) {
    summary.warnings.push_back("no target pseudo labels at alpha " + std::to_string(summary.alpha) +
                               "; hard step uses source data only");
    std::cerr << "warning: round " << round << ": " << summary.warnings.back() << '\n';
  }

  std::vector<LabeledExample> mixed = state.source;
  mixed.insert(mixed.end(), pseudo.examples.begin(), pseudo.examples.end());
  PhaseResult hard = finetune_hard(std::move(soft.params), ctx.vocab, mixed, config.hard, options,
                                   derive_seed(round_seed, "hard"));
  emit(state, ctx, make_record(round_name(round, Stage::hard), Stage::hard, round, hard.params, ctx),
       hard.params);

  state.teacher = hard.params;
  state.student = std::move(hard.params);
  state.round = round;
  if (ctx.observer.on_round) ctx.observer.on_round(summary);
  state.rounds.push_back(std::move(summary));
  return state;
}

RoundState run_soft_only(RoundState state, const RoundContext& ctx) {
  const int round = state.round + 1;
  const auto round_seed = derive_seed(ctx.config.seed, "round", static_cast<std::uint64_t>(round));
  PhaseResult soft = distill_soft(state.teacher, restore_student(state.base, ctx.config, round),
                                  ctx.vocab, ctx.data.target_unlabeled, ctx.config.soft,
                                  train_options(ctx.config), derive_seed(round_seed, "soft"));
  emit(state, ctx, make_record(round_name(round, Stage::soft), Stage::soft, round, soft.params, ctx),
       soft.params);
  state.student = std::move(soft.params);
  return state;
}

Params build_base(const PipelineConfig& config, const Vocab& vocab, const TaskData& data) {
  Params init = init_params(config.model_dims(vocab.size()), derive_seed(config.seed, "init"));
  if (!config.btf_enabled) return init;
  if (data.btf_source.empty() || data.btf_target.empty()) {
    throw DataError("pretraining needs unlabeled documents in both languages");
  }
  return run_btf(std::move(init), vocab, data.btf_source, data.btf_target, config.btf,
                 config.mask_rate, train_options(config), derive_seed(config.seed, "btf"))
      .params;
}

PipelineResult run_pipeline(const PipelineConfig& config, const Vocab& vocab,
                            const TaskData& data, std::optional<Params> base,
                            const PipelineObserver& observer) {
  validate(config);
  if (data.source.empty()) throw DataError("no labeled source data");
  if (data.target_unlabeled.empty()) throw DataError("no unlabeled target data");
  if (base && !(base->dims == config.model_dims(vocab.size()))) {
    throw ConfigError("base checkpoint dimensions do not match the configuration");
  }

  const RoundContext ctx{config, vocab, data, observer};
  RoundState state;
  state.base = base ? std::move(*base) : build_base(config, vocab, data);
  emit(state, ctx, PhaseRecord{"base", Stage::base, 0, params_digest(state.base), {}}, state.base);

  PhaseResult tuned = finetune_source(state.base, vocab, data.source, config.finetune,
                                      train_options(config), derive_seed(config.seed, "source"));
  emit(state, ctx, make_record("finetuned", Stage::finetuned, 0, tuned.params, ctx), tuned.params);
  state.teacher = tuned.params;
  state.student = std::move(tuned.params);
  state.source = data.source;

  const auto full_rounds = static_cast<int>(std::floor(config.rounds));
  for (int r = 0; r < full_rounds; ++r) state = run_round(std::move(state), ctx);
  if (config.rounds - full_rounds > 0.25) state = run_soft_only(std::move(state), ctx);

  return {std::move(state.student), std::move(state.phases), std::move(state.rounds),
          std::move(state.removed_ids)};
}

Vocab task_vocab(const TaskData& data) {
  std::vector<std::vector<Document>> corpora(1);
  auto& all = corpora.front();
  for (const auto& ex : data.source) all.push_back(ex.doc);
  for (const auto& ex : data.target_test) all.push_back(ex.doc);
  all.insert(all.end(), data.target_unlabeled.begin(), data.target_unlabeled.end());
  all.insert(all.end(), data.btf_source.begin(), data.btf_source.end());
  all.insert(all.end(), data.btf_target.begin(), data.btf_target.end());
  return build_vocab(corpora);
}

void split_btf_corpus(std::span<const Document> corpus, const PipelineConfig& config,
                      TaskData& data) {
  for (const auto& doc : corpus) {
    if (doc.lang == config.source_lang) {
      data.btf_source.push_back(doc);
    } else if (doc.lang == config.target_lang) {
      data.btf_target.push_back(doc);
    } else {
      throw DataError("pretraining document '" + doc.id + "' has language '" + doc.lang +
                      "', expected '" + config.source_lang + "' or '" + config.target_lang + "'");
    }
  }
}

}  // namespace xling
