// Copyright 2026 The DPCCN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dpccn/harness.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "dpccn/error.h"
#include "dpccn/objective.h"
#include "dpccn/speaker.h"
#include "dpccn/wav.h"

namespace dpccn {
namespace fs = std::filesystem;
namespace {

std::size_t get_count(const KeyValueConfig& kv, const std::string& key, std::size_t fallback) {
  const long long v = kv.get_int(key, static_cast<long long>(fallback));
  DPCCN_CHECK_ARG(v >= 0, "config key '" + key + "' must be non-negative");
  return static_cast<std::size_t>(v);
}

void check_task(const std::string& task) {
  DPCCN_CHECK_ARG(task == "ss" || task == "tse", "task must be ss or tse, got '" + task + "'");
}

bool has_reference_energy(const Waveform& w) {
  const double n = static_cast<double>(w.size());
  const double mean = std::accumulate(w.samples.begin(), w.samples.end(), 0.0) / n;
  double e = 0.0;
  for (double v : w.samples) e += (v - mean) * (v - mean);
  return e > 1e-10;
}

Waveform window(const Waveform& w, std::size_t offset, std::size_t length) {
  Waveform out{std::vector<double>(length, 0.0), w.sample_rate};
  if (offset < w.size())
    std::copy_n(w.samples.begin() + offset, std::min(length, w.size() - offset),
                out.samples.begin());
  return out;
}

std::string fail_list(const std::vector<std::string>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size() && i < 10; ++i) out += (i ? ", " : "") + ids[i];
  if (ids.size() > 10) out += fmt::format(" and {} more", ids.size() - 10);
  return out;
}

void append_line(const fs::path& path, const std::string& line) {
  std::ofstream out(path, std::ios::app);
  out << line << '\n';
}

TrainResult run_training(const TrainConfig& cfg, Checkpoint ckpt, const Dataset& data,
                         const Dataset* dev, std::size_t total_epochs) {
  const fs::path dir(cfg.checkpoint_dir);
  fs::create_directories(dir);
  Trainer trainer(std::move(ckpt), cfg);
  TrainState& state = trainer.checkpoint().state;
  TrainResult result;
  result.best_checkpoint = (dir / "best.ckpt").string();
  result.last_checkpoint = (dir / "last.ckpt").string();
  spdlog::info("training {} ({} parameters) on {} examples, epochs {}..{}", state.task,
               trainer.checkpoint().params.count(), data.size(), state.epoch + 1, total_epochs);

  bool stop = false;
  for (std::size_t epoch = state.epoch; epoch < total_epochs && !stop; ++epoch) {
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    auto rng = record_rng(cfg.seed, epoch, 2);
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      std::vector<Example> batch;
      for (std::size_t k = b; k < std::min(order.size(), b + cfg.batch_size); ++k)
        batch.push_back(data.segment(order[k], cfg.segment_s, cfg.seed, epoch));
      StepResult r;
      try {
        r = trainer.step(batch);
      } catch (const DivergenceError&) {
        save_checkpoint((dir / "diverged.ckpt").string(), trainer.checkpoint());
        throw;
      }
      if (r.examples == 0) continue;
      result.step_losses.push_back(r.loss);
      loss_sum += r.loss;
      ++batches;
      if (cfg.log_every && state.step % cfg.log_every == 0)
        spdlog::info("epoch {} step {} loss {:.4f} grad-norm {:.3f}", epoch + 1, state.step,
                     r.loss, r.grad_norm);
      if (cfg.max_steps && state.step >= cfg.max_steps) {
        stop = true;
        break;
      }
    }
    state.epoch = epoch + 1;
    const double train_loss = batches ? loss_sum / batches : NAN;
    // Without a dev set the (negated) training loss drives selection.
    const double score = dev ? score_dataset(trainer.checkpoint().params, *dev).mean_sisnr
                             : -train_loss;
    nlohmann::json entry{{"epoch", state.epoch},
                         {"step", state.step},
                         {"lr", state.lr},
                         {"train_loss", train_loss},
                         {"dev_sisnr", dev ? nlohmann::json(score) : nlohmann::json()}};
    state.history.push_back(entry);
    append_line(dir / "train_log.jsonl", entry.dump());
    spdlog::info("epoch {} train loss {:.4f} {} {:.3f}", state.epoch, train_loss,
                 dev ? "dev SISNR" : "selection score", score);

    if (score > state.best_dev) {
      state.best_dev = score;
      state.best_epoch = state.epoch;
      state.stagnant_epochs = 0;
      save_checkpoint(result.best_checkpoint, trainer.checkpoint());
    } else {
      ++state.stagnant_epochs;
      if (cfg.lr_patience && state.stagnant_epochs % cfg.lr_patience == 0) {
        state.lr *= cfg.lr_decay;
        spdlog::info("no improvement for {} epochs, learning rate now {:g}",
                     state.stagnant_epochs, state.lr);
      }
      if (cfg.early_stop_patience && state.stagnant_epochs >= cfg.early_stop_patience) {
        spdlog::info("stopping early after {} stagnant epochs", state.stagnant_epochs);
        stop = true;
      }
    }
    save_checkpoint(result.last_checkpoint, trainer.checkpoint());
  }
  result.state = state;
  return result;
}

}  // namespace

void validate_train_config(const TrainConfig& cfg) {
  check_task(cfg.task);
  DPCCN_CHECK_ARG(cfg.model == "full" || cfg.model == "small",
                  "model must be full or small, got '" + cfg.model + "'");
  DPCCN_CHECK_ARG(cfg.lr > 0.0, "lr must be positive");
  DPCCN_CHECK_ARG(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0 && cfg.beta2 >= 0.0 && cfg.beta2 < 1.0,
                  "Adam betas must lie in [0, 1)");
  DPCCN_CHECK_ARG(cfg.adam_eps > 0.0, "adam_eps must be positive");
  DPCCN_CHECK_ARG(cfg.epochs >= 1, "epochs must be at least 1");
  DPCCN_CHECK_ARG(cfg.finetune_epochs >= 1, "finetune_epochs must be at least 1");
  DPCCN_CHECK_ARG(cfg.segment_s > 0.0, "segment_s must be positive");
  DPCCN_CHECK_ARG(cfg.batch_size >= 1, "batch_size must be at least 1");
  DPCCN_CHECK_ARG(cfg.grad_clip_norm >= 0.0, "grad_clip_norm must be non-negative");
  DPCCN_CHECK_ARG(cfg.lr_decay > 0.0 && cfg.lr_decay <= 1.0, "lr_decay must lie in (0, 1]");
}

TrainConfig train_config_from(const KeyValueConfig& kv, TrainConfig c) {
  c.task = kv.get_string("train.task", c.task);
  c.model = kv.get_string("train.model", c.model);
  c.lr = kv.get_double("train.lr", c.lr);
  c.beta1 = kv.get_double("train.beta1", c.beta1);
  c.beta2 = kv.get_double("train.beta2", c.beta2);
  c.adam_eps = kv.get_double("train.adam_eps", c.adam_eps);
  c.epochs = get_count(kv, "train.epochs", c.epochs);
  c.finetune_epochs = get_count(kv, "train.finetune_epochs", c.finetune_epochs);
  c.segment_s = kv.get_double("train.segment_s", c.segment_s);
  c.batch_size = get_count(kv, "train.batch_size", c.batch_size);
  c.grad_clip_norm = kv.get_double("train.grad_clip_norm", c.grad_clip_norm);
  c.lr_patience = get_count(kv, "train.lr_patience", c.lr_patience);
  c.lr_decay = kv.get_double("train.lr_decay", c.lr_decay);
  c.early_stop_patience = get_count(kv, "train.early_stop_patience", c.early_stop_patience);
  c.seed = get_count(kv, "train.seed", c.seed);
  c.checkpoint_dir = kv.get_string("train.checkpoint_dir", c.checkpoint_dir);
  c.max_steps = get_count(kv, "train.max_steps", c.max_steps);
  c.log_every = get_count(kv, "train.log_every", c.log_every);
  c.resume = kv.get_string("train.resume", c.resume);
  validate_train_config(c);
  return c;
}

RecipeConfig recipe_config_from(const KeyValueConfig& kv, RecipeConfig r) {
  r.clamp_duration = kv.get_double("recipe.clamp_duration", r.clamp_duration);
  r.pair_snr = kv.get_interval("recipe.pair_snr", r.pair_snr);
  r.remix_snr = kv.get_interval("recipe.remix_snr", r.remix_snr);
  r.sample_rate = static_cast<int>(kv.get_int("recipe.sample_rate", r.sample_rate));
  r.seed = get_count(kv, "recipe.seed", r.seed);
  r.num_mixtures = get_count(kv, "recipe.num_mixtures", r.num_mixtures);
  r.remix_per_mixture = get_count(kv, "recipe.remix_per_mixture", r.remix_per_mixture);
  validate_recipe(r);
  return r;
}

Dataset::Dataset(const std::string& manifest_path, const std::string& task) : task_(task) {
  check_task(task);
  records_ = read_manifest(manifest_path);
  if (records_.empty()) throw DataError("manifest " + manifest_path + " is empty");
  const std::string base = fs::absolute(manifest_path).parent_path().string();
  bases_.assign(records_.size(), base);
  std::vector<std::string> bad;
  for (const auto& r : records_) {
    bool ok = !r.source_paths.empty() && fs::exists(fs::path(base) / r.mix_path) &&
              r.source_paths.size() == records_.front().source_paths.size();
    for (const auto& p : r.source_paths) ok = ok && fs::exists(fs::path(base) / p);
    if (task == "tse")
      ok = ok && !r.enroll_path.empty() && r.target_index < r.source_paths.size() &&
           fs::exists(fs::path(base) / r.enroll_path);
    if (!ok) bad.push_back(r.id);
  }
  if (!bad.empty())
    throw DataError(fmt::format("{}: {} record(s) lack audio or references needed for {}: {}",
                                manifest_path, bad.size(), task, fail_list(bad)));
}

Dataset Dataset::concat(const Dataset& a, const Dataset& b) {
  DPCCN_CHECK_ARG(a.task_ == b.task_, "cannot join datasets of different tasks");
  DPCCN_CHECK_ARG(a.num_sources() == b.num_sources(),
                  "cannot join datasets with different source counts");
  Dataset out;
  out.task_ = a.task_;
  out.records_ = a.records_;
  out.records_.insert(out.records_.end(), b.records_.begin(), b.records_.end());
  out.bases_ = a.bases_;
  out.bases_.insert(out.bases_.end(), b.bases_.begin(), b.bases_.end());
  return out;
}

std::size_t Dataset::num_sources() const {
  return task_ == "tse" ? 1 : records_.front().source_paths.size();
}

Example Dataset::load(std::size_t i) const {
  const auto& r = records_.at(i);
  const fs::path base(bases_[i]);
  Example ex;
  ex.id = r.id;
  ex.mix = read_wav((base / r.mix_path).string());
  if (task_ == "tse") {
    ex.refs.push_back(read_wav((base / r.source_paths[r.target_index]).string()));
    ex.enroll = read_wav((base / r.enroll_path).string());
  } else {
    for (const auto& p : r.source_paths) ex.refs.push_back(read_wav((base / p).string()));
  }
  for (const auto& ref : ex.refs)
    if (ref.size() != ex.mix.size() || ref.sample_rate != ex.mix.sample_rate)
      throw DataError("record " + r.id + ": reference and mixture disagree in length or rate");
  return ex;
}

Example Dataset::segment(std::size_t i, double segment_s, std::uint64_t seed,
                         std::size_t epoch) const {
  Example ex = load(i);
  const auto n = static_cast<std::size_t>(std::lround(segment_s * ex.mix.sample_rate));
  std::size_t offset = 0;
  if (ex.mix.size() > n) {
    auto rng = record_rng(seed ^ (0x5851F42D4C957F2DULL * (epoch + 1)), i, 3);
    offset = std::uniform_int_distribution<std::size_t>(0, ex.mix.size() - n)(rng);
  }
  ex.mix = window(ex.mix, offset, n);
  for (auto& r : ex.refs) r = window(r, offset, n);
  return ex;
}

MvnStats dataset_mvn(const Dataset& data, const StftConfig& stft_cfg) {
  MvnAccumulator acc(2, stft_cfg.num_bins());
  for (std::size_t i = 0; i < data.size(); ++i)
    acc.add(spectrogram_features(stft(data.load(i).mix, stft_cfg)));
  return acc.finalize();
}

std::vector<Waveform> run_model(const ModelParameters& params, const Example& ex) {
  if (params.config.speaker.enabled) {
    DPCCN_CHECK_ARG(ex.enroll.has_value(), "example " + ex.id + " has no enrollment");
    return {extract(ex.mix, *ex.enroll, params)};
  }
  return separate(ex.mix, params);
}

UtteranceScore score_example(const ModelParameters& params, const Example& ex) {
  return score_separation(run_model(params, ex), ex.refs, ex.mix, ex.id);
}

ScoreReport score_dataset(const ModelParameters& params, const Dataset& data) {
  std::vector<UtteranceScore> scores;
  for (std::size_t i = 0; i < data.size(); ++i) scores.push_back(score_example(params, data.load(i)));
  return summarize(std::move(scores));
}

Trainer::Trainer(Checkpoint ckpt, TrainConfig cfg) : ckpt_(std::move(ckpt)), cfg_(std::move(cfg)) {
  validate_train_config(cfg_);
  validate_config(ckpt_.params.config);
}

namespace {

ag::Var example_loss(const Example& ex, ParameterBinder& bind) {
  if (bind.params().config.speaker.enabled) {
    DPCCN_CHECK_ARG(ex.enroll.has_value(), "example " + ex.id + " has no enrollment");
    ag::Var e = graph::speaker_embedding(*ex.enroll, bind);
    return tse_loss(graph::forward(ex.mix, bind, e).front(), ex.refs.front()).loss;
  }
  return upit_loss(graph::forward(ex.mix, bind, std::nullopt), ex.refs).loss;
}

bool usable(const Example& ex) {
  for (const auto& r : ex.refs)
    if (!has_reference_energy(r)) {
      spdlog::warn("skipping {}: silent reference in segment", ex.id);
      return false;
    }
  return true;
}

}  // namespace

StepResult Trainer::step(const std::vector<Example>& batch) {
  std::vector<const Example*> used;
  for (const auto& ex : batch)
    if (usable(ex)) used.push_back(&ex);
  StepResult result;
  result.examples = used.size();
  if (used.empty()) return result;

  // One graph per example keeps peak memory at a single utterance; leaf
  // gradients accumulate across the backward passes.
  ParameterBinder bind(ckpt_.params, true);
  const Tensor seed({1}, 1.0 / static_cast<double>(used.size()));
  for (const auto* ex : used) {
    ag::Var loss = example_loss(*ex, bind);
    const double v = loss.value()[0];
    if (!std::isfinite(v)) throw DivergenceError("non-finite loss on " + ex->id);
    result.loss += v / static_cast<double>(used.size());
    ag::backward(loss, seed);
  }
  auto grads = bind.gradients();
  double sq = 0.0;
  for (const auto& [name, g] : grads)
    for (double v : g.values()) sq += v * v;
  result.grad_norm = std::sqrt(sq);
  if (!std::isfinite(result.grad_norm))
    throw DivergenceError(fmt::format("non-finite gradient norm at step {}", ckpt_.state.step + 1));
  const double clip = cfg_.grad_clip_norm > 0.0 && result.grad_norm > cfg_.grad_clip_norm
                          ? cfg_.grad_clip_norm / result.grad_norm
                          : 1.0;

  AdamState& adam = ckpt_.adam;
  const std::size_t t = ++adam.step;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t));
  const double lr = ckpt_.state.lr;
  for (auto& [name, g] : grads) {
    Tensor& p = ckpt_.params.tensors.at(name);
    auto [mi, fresh_m] = adam.m.try_emplace(name, p.shape());
    auto [vi, fresh_v] = adam.v.try_emplace(name, p.shape());
    Tensor& m = mi->second;
    Tensor& v = vi->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i] * clip;
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
      p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.adam_eps);
    }
  }
  ++ckpt_.state.step;
  return result;
}

double Trainer::batch_loss(const std::vector<Example>& batch) const {
  ParameterBinder bind(ckpt_.params, false);
  double total = 0.0;
  for (const auto& ex : batch) total += example_loss(ex, bind).value()[0];
  return total / static_cast<double>(batch.size());
}

DpccnConfig model_config_for(const TrainConfig& cfg, std::size_t num_sources) {
  const bool tse = cfg.task == "tse";
  DpccnConfig model;
  if (cfg.model == "small") {
    model = DpccnConfig::small(tse ? 1 : num_sources, tse);
  } else {
    model = tse ? DpccnConfig::extraction() : DpccnConfig::separation();
    if (!tse) model.num_sources = num_sources;
  }
  model.init_seed = cfg.seed;
  validate_config(model);
  return model;
}

TrainResult train(const TrainConfig& cfg, const std::string& train_manifest,
                  const std::string& dev_manifest) {
  validate_train_config(cfg);
  Dataset data(train_manifest, cfg.task);
  Dataset dev(dev_manifest, cfg.task);
  if (dev.num_sources() != data.num_sources())
    throw DataError("train and dev manifests have different source counts");
  Checkpoint ckpt;
  if (!cfg.resume.empty()) {
    ckpt = load_checkpoint(cfg.resume);
    DPCCN_CHECK_ARG(ckpt.state.task == cfg.task,
                    "cannot resume a " + ckpt.state.task + " checkpoint as " + cfg.task);
    spdlog::info("resuming from {} after epoch {}", cfg.resume, ckpt.state.epoch);
  } else {
    ckpt.params = init_parameters(model_config_for(cfg, data.num_sources()));
    ckpt.params.mvn = dataset_mvn(data, ckpt.params.config.stft);
    ckpt.state.task = cfg.task;
    ckpt.state.lr = cfg.lr;
  }
  return run_training(cfg, std::move(ckpt), data, &dev, cfg.epochs);
}

TrainResult finetune(const TrainConfig& cfg, const std::string& checkpoint,
                     const std::string& remix_manifest,
                     const std::optional<std::string>& source_manifest,
                     const std::optional<std::string>& dev_manifest) {
  Checkpoint ckpt = load_checkpoint(checkpoint);
  DPCCN_CHECK_ARG(ckpt.state.task == "tse",
                  "fine-tuning needs a tse checkpoint, " + checkpoint + " is " + ckpt.state.task);
  TrainConfig tcfg = cfg;
  tcfg.task = "tse";
  validate_train_config(tcfg);
  const std::string hash = config_hash(ckpt.params.config);

  Dataset data(remix_manifest, "tse");
  if (source_manifest) data = Dataset::concat(data, Dataset(*source_manifest, "tse"));
  std::optional<Dataset> dev;
  if (dev_manifest) dev.emplace(*dev_manifest, "tse");

  std::size_t epochs = tcfg.finetune_epochs;
  if (epochs > kMaxFinetuneEpochs) {
    spdlog::warn("fine-tuning capped at {} epochs (requested {})", kMaxFinetuneEpochs, epochs);
    epochs = kMaxFinetuneEpochs;
  }
  // Fresh optimizer and schedule; weights, config and statistics carry over.
  ckpt.adam = AdamState{};
  ckpt.state = TrainState{};
  ckpt.state.task = "tse";
  ckpt.state.lr = tcfg.lr;
  auto result = run_training(tcfg, std::move(ckpt), data, dev ? &*dev : nullptr, epochs);
  if (config_hash(load_checkpoint(result.last_checkpoint).params.config) != hash)
    throw std::logic_error("fine-tuning changed the model configuration");
  return result;
}

EvalReport evaluate(const ModelParameters& params, const std::string& task,
                    const std::vector<CorpusSpec>& corpora) {
  DPCCN_CHECK_ARG(!corpora.empty(), "nothing to evaluate");
  EvalReport report;
  const CorpusSpec* source = nullptr;
  const CorpusSpec* target = nullptr;
  std::size_t sources = 0, targets = 0;
  for (const auto& spec : corpora) {
    Dataset data(spec.manifest, task);
    report.corpora.emplace_back(spec.name, score_dataset(params, data));
    if (spec.role == CorpusRole::kSource) source = &spec, ++sources;
    if (spec.role == CorpusRole::kTarget) target = &spec, ++targets;
  }
  if (sources == 1 && targets == 1) {
    auto mean_of = [&](const CorpusSpec* s) {
      for (const auto& [name, r] : report.corpora)
        if (name == s->name) return r.mean_sisnr;
      return 0.0;
    };
    report.st_gap = st_gap(mean_of(source), mean_of(target));
  }
  return report;
}

EvalReport evaluate(const std::string& checkpoint, const std::vector<CorpusSpec>& corpora) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  return evaluate(ckpt.params, ckpt.state.task, corpora);
}

std::string eval_report_text(const EvalReport& report) {
  std::string out = report_table(report.corpora);
  if (report.st_gap) out += fmt::format("ST-Gap: {:.1f}%\n", 100.0 * *report.st_gap);
  return out;
}

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json corpora = nlohmann::json::array();
  for (const auto& [name, r] : report.corpora)
    corpora.push_back({{"name", name},
                       {"utterances", r.per_utterance.size()},
                       {"mean_sisnr", r.mean_sisnr},
                       {"mean_sisnri", r.mean_sisnri}});
  return {{"corpora", corpora},
          {"st_gap", report.st_gap ? nlohmann::json(*report.st_gap) : nlohmann::json()}};
}

InferResult infer(const std::string& checkpoint, const std::string& mix_path,
                  const std::optional<std::string>& enroll_path, const std::string& out_dir,
                  const std::vector<std::string>& ref_paths) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const bool tse = ckpt.params.config.speaker.enabled;
  DPCCN_CHECK_ARG(!tse || enroll_path, "a tse checkpoint needs an enrollment utterance");
  Example ex;
  ex.id = fs::path(mix_path).stem().string();
  ex.mix = read_wav(mix_path);
  if (enroll_path) ex.enroll = read_wav(*enroll_path);
  const auto ests = run_model(ckpt.params, ex);

  fs::create_directories(out_dir);
  InferResult result;
  nlohmann::json sidecar{{"mix", mix_path},
                         {"task", ckpt.state.task},
                         {"config_hash", config_hash(ckpt.params.config)}};
  if (enroll_path) sidecar["enroll"] = *enroll_path;
  nlohmann::json files = nlohmann::json::array();
  for (std::size_t k = 0; k < ests.size(); ++k) {
    const auto path = (fs::path(out_dir) / fmt::format("{}_s{}.wav", ex.id, k + 1)).string();
    write_wav(path, ests[k]);
    result.outputs.push_back(path);
    files.push_back({{"path", path}});
  }
  if (!ref_paths.empty()) {
    DPCCN_CHECK_ARG(ref_paths.size() == ests.size(),
                    fmt::format("expected {} reference(s), got {}", ests.size(), ref_paths.size()));
    for (const auto& p : ref_paths) ex.refs.push_back(read_wav(p));
    const auto score = score_separation(ests, ex.refs, ex.mix, ex.id);
    for (std::size_t k = 0; k < ests.size(); ++k) {
      files[k]["reference"] = ref_paths[score.permutation[k]];
      files[k]["sisnr"] = score.sisnr[k];
      files[k]["sisnri"] = score.sisnri[k];
    }
    sidecar["mean_sisnr"] = score.mean_sisnr;
    sidecar["mean_sisnri"] = score.mean_sisnri;
  }
  sidecar["outputs"] = files;
  result.sidecar = (fs::path(out_dir) / (ex.id + ".json")).string();
  std::ofstream(result.sidecar) << sidecar.dump(2) << '\n';
  return result;
}

std::vector<SweepRow> snr_sweep(const SweepConfig& cfg) {
  DPCCN_CHECK_ARG(cfg.ranges.size() >= 2, "a sweep needs at least two SNR ranges");
  const fs::path root(cfg.out_dir);
  fs::create_directories(root);
  const fs::path table = root / "sweep.tsv";
  std::ofstream(table) << "snr_lo\tsnr_hi\trecords\tsisnr\tsisnri\n";

  const auto corpus = CorpusIndex::scan(cfg.corpus_root);
  const auto unsup = scan_unsupervised(cfg.unsup);
  Dataset dev(cfg.dev_manifest, "tse");
  std::vector<SweepRow> rows;
  for (const auto& range : cfg.ranges) {
    const fs::path dir = root / fmt::format("snr_{:g}_{:g}", range.lo, range.hi);
    try {
      RecipeConfig recipe = cfg.recipe;
      recipe.remix_snr = range;
      const auto sim = simulate(corpus, recipe, MixMode::kRemix, (dir / "data").string(), unsup);
      TrainConfig tcfg = cfg.train;
      tcfg.checkpoint_dir = (dir / "ckpt").string();
      const auto tuned =
          finetune(tcfg, cfg.base_checkpoint, sim.manifest_path, cfg.source_manifest, std::nullopt);
      const auto report = score_dataset(load_checkpoint(tuned.last_checkpoint).params, dev);
      SweepRow row{range, sim.written, report.mean_sisnr, report.mean_sisnri};
      rows.push_back(row);
      append_line(table, fmt::format("{:g}\t{:g}\t{}\t{:.4f}\t{:.4f}", range.lo, range.hi,
                                     row.records, row.sisnr, row.sisnri));
      spdlog::info("sweep [{:g}, {:g}] dB: SISNR {:.2f}", range.lo, range.hi, row.sisnr);
    } catch (const std::exception& e) {
      spdlog::error("sweep aborted at [{:g}, {:g}] dB: {} ({} rows kept in {})", range.lo,
                    range.hi, e.what(), rows.size(), table.string());
      throw;
    }
  }
  return rows;
}

std::string sweep_table(const std::vector<SweepRow>& rows) {
  std::string out = fmt::format("{:>14}  {:>7}  {:>8}  {:>8}\n", "remix SNR (dB)", "records",
                                "SISNR", "SISNRi");
  for (const auto& r : rows)
    out += fmt::format("{:>14}  {:>7}  {:>8.2f}  {:>8.2f}\n",
                       fmt::format("[{:g}, {:g}]", r.range.lo, r.range.hi), r.records, r.sisnr,
                       r.sisnri);
  return out;
}

}  // namespace dpccn
