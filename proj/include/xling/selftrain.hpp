#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xling/checkpoint.hpp"
#include "xling/config.hpp"
#include "xling/corpus.hpp"
#include "xling/model.hpp"
#include "xling/thresholding.hpp"

namespace xling {

using Params = ModelParams<double>;

/// Datasets consumed by one pipeline run.
struct TaskData {
  std::vector<LabeledExample> source;
  std::vector<Document> target_unlabeled;
  std::vector<LabeledExample> target_test;  // may be empty
  std::vector<Document> btf_source;
  std::vector<Document> btf_target;
};

/// Settings shared by every gradient phase.
struct TrainOptions {
  double weight_decay = 0.0;
  double warmup_ratio = 0.0;
  TeacherTargets teacher_targets = TeacherTargets::paired;
};

TrainOptions train_options(const PipelineConfig& config);

/// Unanimous-argmax vote over voter outputs, or nothing on disagreement.
std::optional<Vote> decide(std::span<const Distribution<double>> voter_outputs);

std::vector<PredictionRecord> predict_records(const Params& params, const Vocab& vocab,
                                              std::span<const Document> docs,
                                              std::span<const int> gold = {});
std::vector<PredictionRecord> predict_records(const Params& params, const Vocab& vocab,
                                              std::span<const LabeledExample> data);

/// Target documents labeled by the decision policy at `alpha`; abstentions are dropped.
struct PseudoLabeledSet {
  std::vector<LabeledExample> examples;
  double alpha = 0.0;
};

PseudoLabeledSet generate_pseudo_labels(const Params& params, const Vocab& vocab,
                                        std::span<const Document> unlabeled, double alpha);

struct FilterResult {
  std::vector<LabeledExample> kept;
  std::vector<std::string> removed_ids;
};

/// Keeps source examples the model predicts correctly; under `thresholded`
/// the prediction must also pass the recall condition at `alpha`.
FilterResult filter_consistent_source(const Params& params, const Vocab& vocab,
                                      std::span<const LabeledExample> source, double alpha,
                                      SourceFilter mode = SourceFilter::thresholded);

/// Outcome of one gradient phase. Losses are full-dataset means before and after.
struct PhaseResult {
  Params params;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

/// Masked-token pretraining on balanced bilingual resamples (one fresh draw per epoch).
PhaseResult run_btf(Params params, const Vocab& vocab, std::span<const Document> source_docs,
                    std::span<const Document> target_docs, const PhaseConfig& phase,
                    double mask_rate, const TrainOptions& options, std::uint64_t seed);

/// Trains `student` toward the teacher's distributions on unlabeled documents.
PhaseResult distill_soft(const Params& teacher, Params student, const Vocab& vocab,
                         std::span<const Document> unlabeled, const PhaseConfig& phase,
                         const TrainOptions& options, std::uint64_t seed);

/// Cross-entropy training over the shuffled labeled set.
PhaseResult finetune_hard(Params student, const Vocab& vocab, std::span<const LabeledExample> data,
                          const PhaseConfig& phase, const TrainOptions& options,
                          std::uint64_t seed);

/// Fresh voter heads on the base encoder, trained on labeled source data.
PhaseResult finetune_source(const Params& base, const Vocab& vocab,
                            std::span<const LabeledExample> source, const PhaseConfig& phase,
                            const TrainOptions& options, std::uint64_t seed);

/// Fraction of `data` whose ensemble prediction matches the label.
double evaluate_accuracy(const Params& params, const Vocab& vocab,
                         std::span<const LabeledExample> data);

struct MetricValue {
  std::string dataset;
  std::string metric;
  double value = 0.0;
};

/// One completed training phase as recorded in the run manifest.
struct PhaseRecord {
  std::string name;  // base, finetuned, round<k>-soft, round<k>-hard
  Stage stage = Stage::base;
  int round = 0;
  std::string params_sha256;
  std::vector<MetricValue> metrics;
};

struct RoundSummary {
  int round = 0;
  double alpha = 0.0;
  std::size_t pseudo_labeled = 0;
  std::size_t source_kept = 0;
  std::vector<std::string> removed_ids;  // source ids dropped this round
  std::vector<std::string> warnings;
};

/// Progress callbacks, e.g. for writing checkpoints and the manifest as a run goes.
struct PipelineObserver {
  std::function<void(const PhaseRecord&, const Params&)> on_phase;
  std::function<void(const RoundSummary&)> on_round;
};

struct RoundState {
  Params base;
  Params teacher;
  Params student;
  int round = 0;  // completed full rounds
  std::vector<LabeledExample> source;  // shrinks as samples are removed for good
  std::vector<std::string> removed_ids;
  std::vector<RoundSummary> rounds;
  std::vector<PhaseRecord> phases;
};

/// Everything a round needs besides its state.
struct RoundContext {
  const PipelineConfig& config;
  const Vocab& vocab;
  const TaskData& data;
  PipelineObserver observer;
};

/// Soft distillation, threshold selection, pseudo-labeling with consistency
/// filtering, then hard fine-tuning; the hard-trained student becomes the next teacher.
RoundState run_round(RoundState state, const RoundContext& ctx);

/// Trailing soft-only half round.
RoundState run_soft_only(RoundState state, const RoundContext& ctx);

struct PipelineResult {
  Params final_params;
  std::vector<PhaseRecord> phases;
  std::vector<RoundSummary> rounds;
  std::vector<std::string> removed_ids;
};

/// Pretraining (or a supplied base), source fine-tuning, floor(N) full rounds
/// and a trailing soft phase when N has a half.
PipelineResult run_pipeline(const PipelineConfig& config, const Vocab& vocab,
                            const TaskData& data, std::optional<Params> base = std::nullopt,
                            const PipelineObserver& observer = {});

/// Builds the base model: pretrained when enabled, otherwise the seeded initialization.
Params build_base(const PipelineConfig& config, const Vocab& vocab, const TaskData& data);

/// Vocabulary over every document in the task.
Vocab task_vocab(const TaskData& data);

/// Splits a mixed corpus by language tag.
void split_btf_corpus(std::span<const Document> corpus, const PipelineConfig& config,
                      TaskData& data);

}  // namespace xling
