// Copyright 2026 The DPCCN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DPCCN_HARNESS_H_
#define DPCCN_HARNESS_H_

// Training, fine-tuning, evaluation, inference and the remix SNR sweep.

#include <optional>
#include <string>
#include <vector>

#include "dpccn/checkpoint.h"
#include "dpccn/config.h"
#include "dpccn/corpus.h"
#include "dpccn/metrics.h"
#include "dpccn/model.h"

namespace dpccn {

constexpr std::size_t kMaxFinetuneEpochs = 20;

struct TrainConfig {
  std::string task = "ss";    // ss or tse
  std::string model = "full";  // full or small
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t epochs = 100;
  std::size_t finetune_epochs = kMaxFinetuneEpochs;
  double segment_s = 4.0;
  std::size_t batch_size = 4;
  double grad_clip_norm = 5.0;  // 0 disables clipping
  std::size_t lr_patience = 3;  // stagnant dev epochs before the rate is halved
  double lr_decay = 0.5;
  std::size_t early_stop_patience = 6;
  std::uint64_t seed = 0;
  std::string checkpoint_dir = "exp";
  std::size_t max_steps = 0;  // 0: unlimited
  std::size_t log_every = 10;
  std::string resume;  // checkpoint to continue from
};

void validate_train_config(const TrainConfig& cfg);
// Reads the [train] section.
TrainConfig train_config_from(const KeyValueConfig& kv, TrainConfig base = {});
// Reads the [recipe] section.
RecipeConfig recipe_config_from(const KeyValueConfig& kv, RecipeConfig base = {});

struct Example {
  std::string id;
  Waveform mix;
  std::vector<Waveform> refs;  // all sources (ss) or the target alone (tse)
  std::optional<Waveform> enroll;
};

// Manifest-backed examples, loaded from disk on access.
class Dataset {
 public:
  // Throws DataError listing records that lack what the task needs.
  Dataset(const std::string& manifest_path, const std::string& task);
  static Dataset concat(const Dataset& a, const Dataset& b);

  std::size_t size() const { return records_.size(); }
  const MixtureRecord& record(std::size_t i) const { return records_[i]; }
  const std::string& task() const { return task_; }
  std::size_t num_sources() const;

  Example load(std::size_t i) const;
  // Random segment_s window of example i (one offset for mixture and
  // references), drawn from a stream keyed by (seed, epoch, i).
  Example segment(std::size_t i, double segment_s, std::uint64_t seed, std::size_t epoch) const;

 private:
  Dataset() = default;
  std::vector<MixtureRecord> records_;
  std::vector<std::string> bases_;  // directory each record's paths are relative to
  std::string task_;
};

MvnStats dataset_mvn(const Dataset& data, const StftConfig& stft);

// Network outputs for one example: S waveforms, or one for extraction.
std::vector<Waveform> run_model(const ModelParameters& params, const Example& ex);
UtteranceScore score_example(const ModelParameters& params, const Example& ex);
ScoreReport score_dataset(const ModelParameters& params, const Dataset& data);

struct StepResult {
  double loss = 0.0;
  double grad_norm = 0.0;
  std::size_t examples = 0;  // examples that contributed
};

// One parameter set and its Adam state; single writer.
class Trainer {
 public:
  Trainer(Checkpoint ckpt, TrainConfig cfg);

  // Mean loss over the batch, one Adam step. Throws DivergenceError before
  // touching parameters when the loss or gradient is non-finite.
  StepResult step(const std::vector<Example>& batch);
  double batch_loss(const std::vector<Example>& batch) const;

  const Checkpoint& checkpoint() const { return ckpt_; }
  Checkpoint& checkpoint() { return ckpt_; }
  const TrainConfig& config() const { return cfg_; }

 private:
  Checkpoint ckpt_;
  TrainConfig cfg_;
};

struct TrainResult {
  std::string best_checkpoint;
  std::string last_checkpoint;
  TrainState state;
  std::vector<double> step_losses;
};

// Model config for a task, sized by cfg.model.
DpccnConfig model_config_for(const TrainConfig& cfg, std::size_t num_sources);

TrainResult train(const TrainConfig& cfg, const std::string& train_manifest,
                  const std::string& dev_manifest);

// Continues a tse checkpoint on remix data, optionally joined with source
// domain data. The architecture and normalization statistics are kept.
TrainResult finetune(const TrainConfig& cfg, const std::string& checkpoint,
                     const std::string& remix_manifest,
                     const std::optional<std::string>& source_manifest,
                     const std::optional<std::string>& dev_manifest);

enum class CorpusRole { kNone, kSource, kTarget };

struct CorpusSpec {
  std::string name;
  std::string manifest;
  CorpusRole role = CorpusRole::kNone;
};

struct EvalReport {
  std::vector<std::pair<std::string, ScoreReport>> corpora;
  std::optional<double> st_gap;  // when one source and one target corpus are declared
};

EvalReport evaluate(const ModelParameters& params, const std::string& task,
                    const std::vector<CorpusSpec>& corpora);
EvalReport evaluate(const std::string& checkpoint, const std::vector<CorpusSpec>& corpora);
std::string eval_report_text(const EvalReport& report);
nlohmann::json to_json(const EvalReport& report);

struct InferResult {
  std::vector<std::string> outputs;
  std::string sidecar;
};

// Writes <stem>_s<k>.wav files and <stem>.json into out_dir. Throws
// InvalidArgument when a tse checkpoint gets no enrollment.
InferResult infer(const std::string& checkpoint, const std::string& mix_path,
                  const std::optional<std::string>& enroll_path, const std::string& out_dir,
                  const std::vector<std::string>& ref_paths = {});

struct SweepConfig {
  std::string base_checkpoint;
  std::string corpus_root;  // clean source-domain speakers
  std::string unsup;        // target-domain mixtures (directory or manifest)
  std::string dev_manifest;  // target-domain evaluation set
  std::optional<std::string> source_manifest;
  std::vector<Interval> ranges;
  RecipeConfig recipe;
  TrainConfig train;
  std::string out_dir;
};

struct SweepRow {
  Interval range;
  std::size_t records = 0;
  double sisnr = 0.0;
  double sisnri = 0.0;
};

// Per range: regenerate remix data, fine-tune from the base checkpoint and
// evaluate. Rows are appended to out_dir/sweep.tsv as they finish.
std::vector<SweepRow> snr_sweep(const SweepConfig& cfg);
std::string sweep_table(const std::vector<SweepRow>& rows);

}  // namespace dpccn

#endif  // DPCCN_HARNESS_H_
