// Copyright 2026 The DPCCN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// dpccn: corpus simulation, training and evaluation front end.
//
// Exit status: 0 ok, 1 internal error, 2 usage, 3 data error, 4 divergence.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "dpccn/checkpoint.h"
#include "dpccn/config.h"
#include "dpccn/corpus.h"
#include "dpccn/error.h"
#include "dpccn/harness.h"
#include "dpccn/wav.h"

namespace fs = std::filesystem;
using namespace dpccn;

namespace {

enum ExitCode { kOk = 0, kInternal = 1, kUsage = 2, kData = 3, kDivergence = 4 };

struct Options {
  std::vector<std::string> config_files;
  std::vector<std::string> overrides;
  bool verbose = false;
  bool quiet = false;

  std::string corpus, unsup, mode = "ss", out, manifest, train, dev, checkpoint, remix,
      source, mix, enroll, source_name, target_name, task, model;
  std::vector<std::string> refs, corpora, ranges;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> num, epochs, max_steps;
  std::string resume;
};

KeyValueConfig load_config(const Options& o) {
  KeyValueConfig kv;
  for (const auto& f : o.config_files) kv.load_file(resolve_data_path(f));
  for (const auto& s : o.overrides) kv.set(s);
  return kv;
}

std::string data_path(const KeyValueConfig& kv, const std::string& flag, const std::string& key,
                      const std::string& what) {
  std::string v = flag.empty() ? kv.get_string(key, "") : flag;
  if (v.empty()) throw InvalidArgument("missing " + what + " (flag or config key '" + key + "')");
  return resolve_data_path(v);
}

std::optional<std::string> optional_path(const std::string& flag) {
  if (flag.empty()) return std::nullopt;
  return resolve_data_path(flag);
}

void warn_unused(const KeyValueConfig& kv) {
  for (const auto& k : kv.unused()) spdlog::warn("config key '{}' is not used by this command", k);
}

TrainConfig train_config(const Options& o, const KeyValueConfig& kv) {
  TrainConfig cfg = train_config_from(kv);
  if (!o.task.empty()) cfg.task = o.task;
  if (!o.model.empty()) cfg.model = o.model;
  if (!o.out.empty()) cfg.checkpoint_dir = o.out;
  if (o.seed) cfg.seed = *o.seed;
  if (o.epochs) cfg.epochs = cfg.finetune_epochs = *o.epochs;
  if (o.max_steps) cfg.max_steps = *o.max_steps;
  if (!o.resume.empty()) cfg.resume = resolve_data_path(o.resume);
  validate_train_config(cfg);
  return cfg;
}

int run_simulate(const Options& o) {
  auto kv = load_config(o);
  RecipeConfig recipe = recipe_config_from(kv);
  if (o.seed) recipe.seed = *o.seed;
  if (o.num) recipe.num_mixtures = *o.num;
  const MixMode mode = parse_mix_mode(o.mode);
  const auto corpus = CorpusIndex::scan(data_path(kv, o.corpus, "data.corpus", "--corpus"));
  std::vector<UnsupMixture> unsup;
  if (mode == MixMode::kRemix)
    unsup = scan_unsupervised(data_path(kv, o.unsup, "data.unsup", "--unsup"));
  const std::string out = o.out.empty() ? kv.get_string("data.out", "") : o.out;
  if (out.empty()) throw InvalidArgument("missing --out");
  warn_unused(kv);
  const auto summary = simulate(corpus, recipe, mode, out, unsup);
  std::cout << summary.written << " records written to " << summary.manifest_path << " ("
            << summary.skipped << " skipped)\n";
  return kOk;
}

int run_stats(const Options& o) {
  auto kv = load_config(o);
  const std::string path = data_path(kv, o.manifest, "data.train", "--manifest");
  const std::string task = o.task.empty() ? kv.get_string("train.task", "ss") : o.task;
  warn_unused(kv);
  Dataset data(path, task);
  double seconds = 0.0;
  std::set<std::string> speakers;
  for (std::size_t i = 0; i < data.size(); ++i) {
    seconds += data.record(i).duration_s;
    for (const auto& s : data.record(i).speaker_ids) speakers.insert(s);
  }
  const MvnStats stats = dataset_mvn(data, StftConfig{});
  std::cout << "records   " << data.size() << "\n"
            << "speakers  " << speakers.size() << "\n"
            << "hours     " << seconds / 3600.0 << "\n"
            << "sources   " << data.num_sources() << "\n";
  if (!o.out.empty()) {
    fs::path p(o.out);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream(p) << nlohmann::json(stats).dump() << '\n';
    std::cout << "normalization statistics written to " << o.out << "\n";
  }
  return kOk;
}

int run_train(const Options& o) {
  auto kv = load_config(o);
  const TrainConfig cfg = train_config(o, kv);
  const std::string tr = data_path(kv, o.train, "data.train", "--train");
  const std::string dev = data_path(kv, o.dev, "data.dev", "--dev");
  warn_unused(kv);
  const auto result = train(cfg, tr, dev);
  std::cout << "best dev SISNR " << result.state.best_dev << " dB at epoch "
            << result.state.best_epoch << ", checkpoint " << result.best_checkpoint << "\n";
  return kOk;
}

int run_finetune(const Options& o) {
  auto kv = load_config(o);
  TrainConfig cfg = train_config(o, kv);
  const std::string ckpt = data_path(kv, o.checkpoint, "data.checkpoint", "--checkpoint");
  const std::string remix = data_path(kv, o.remix, "data.remix", "--remix");
  std::optional<std::string> source = optional_path(o.source.empty() ? kv.get_string("data.source", "") : o.source);
  std::optional<std::string> dev = optional_path(o.dev.empty() ? kv.get_string("data.dev", "") : o.dev);
  warn_unused(kv);
  const auto result = finetune(cfg, ckpt, remix, source, dev);
  std::cout << "fine-tuned for " << result.state.epoch << " epochs, checkpoint "
            << result.last_checkpoint << "\n";
  return kOk;
}

int run_evaluate(const Options& o) {
  auto kv = load_config(o);
  const std::string ckpt = data_path(kv, o.checkpoint, "data.checkpoint", "--checkpoint");
  warn_unused(kv);
  if (o.corpora.empty()) throw InvalidArgument("give at least one --corpus name=manifest");
  std::vector<CorpusSpec> specs;
  for (const auto& c : o.corpora) {
    const auto eq = c.find('=');
    if (eq == std::string::npos || eq == 0)
      throw InvalidArgument("--corpus expects name=manifest, got '" + c + "'");
    CorpusSpec spec{c.substr(0, eq), resolve_data_path(c.substr(eq + 1))};
    if (spec.name == o.source_name) spec.role = CorpusRole::kSource;
    if (spec.name == o.target_name) spec.role = CorpusRole::kTarget;
    specs.push_back(spec);
  }
  const auto report = evaluate(ckpt, specs);
  std::cout << eval_report_text(report);
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    for (const auto& [name, r] : report.corpora)
      std::ofstream(fs::path(o.out) / (name + ".jsonl")) << report_jsonl(r);
    std::ofstream(fs::path(o.out) / "summary.json") << to_json(report).dump(2) << '\n';
  }
  return kOk;
}

int run_infer(const Options& o) {
  if (o.out.empty()) throw InvalidArgument("missing --out");
  std::vector<std::string> refs;
  for (const auto& r : o.refs) refs.push_back(resolve_data_path(r));
  const auto result = infer(resolve_data_path(o.checkpoint), resolve_data_path(o.mix),
                            optional_path(o.enroll), o.out, refs);
  for (const auto& f : result.outputs) std::cout << f << "\n";
  std::cout << result.sidecar << "\n";
  return kOk;
}

int run_sweep(const Options& o) {
  auto kv = load_config(o);
  SweepConfig cfg;
  cfg.train = train_config(o, kv);
  cfg.recipe = recipe_config_from(kv);
  if (o.seed) cfg.recipe.seed = *o.seed;
  cfg.base_checkpoint = data_path(kv, o.checkpoint, "data.checkpoint", "--checkpoint");
  cfg.corpus_root = data_path(kv, o.corpus, "data.corpus", "--corpus");
  cfg.unsup = data_path(kv, o.unsup, "data.unsup", "--unsup");
  cfg.dev_manifest = data_path(kv, o.dev, "data.dev", "--dev");
  cfg.source_manifest = optional_path(o.source.empty() ? kv.get_string("data.source", "") : o.source);
  cfg.out_dir = o.out.empty() ? "sweep" : o.out;
  for (const auto& r : o.ranges) cfg.ranges.push_back(parse_interval(r));
  warn_unused(kv);
  const auto rows = snr_sweep(cfg);
  std::cout << sweep_table(rows);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"DPCCN speech separation and target speech extraction toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("-c,--config", o.config_files, "Key-value config file (repeatable, later wins)");
  app.add_option("--set", o.overrides, "Override a config key: section.key=value");
  app.add_flag("-v,--verbose", o.verbose, "Debug logging");
  app.add_flag("-q,--quiet", o.quiet, "Warnings and errors only");

  auto* sim = app.add_subcommand("simulate", "Render a mixture corpus and its manifest");
  sim->add_option("--corpus", o.corpus, "Clean corpus root: <root>/<speaker>/*.wav");
  sim->add_option("--recipe", o.config_files, "Recipe config file");
  sim->add_option("--mode", o.mode, "ss, tse or remix")->check(CLI::IsMember({"ss", "tse", "remix"}));
  sim->add_option("--unsup", o.unsup, "Unsupervised mixtures (directory or manifest), remix mode");
  sim->add_option("--seed", o.seed, "Recipe seed");
  sim->add_option("--num", o.num, "Number of ss/tse mixtures");
  sim->add_option("--out", o.out, "Output directory");

  auto* stats = app.add_subcommand("stats", "Summarize a manifest and compute normalization stats");
  stats->add_option("--manifest", o.manifest, "Manifest to scan");
  stats->add_option("--task", o.task, "ss or tse");
  stats->add_option("--out", o.out, "Write statistics as JSON");

  auto* tr = app.add_subcommand("train", "Train a model from scratch or resume");
  tr->add_option("--train", o.train, "Training manifest");
  tr->add_option("--dev", o.dev, "Dev manifest");
  tr->add_option("--task", o.task, "ss or tse");
  tr->add_option("--model", o.model, "full or small");
  tr->add_option("--epochs", o.epochs, "Epoch count");
  tr->add_option("--max-steps", o.max_steps, "Stop after this many optimizer steps");
  tr->add_option("--seed", o.seed, "Seed for initialization and data order");
  tr->add_option("--resume", o.resume, "Checkpoint to continue from");
  tr->add_option("--out", o.out, "Checkpoint directory");

  auto* ft = app.add_subcommand("finetune", "Fine-tune a tse checkpoint on remixed data");
  ft->add_option("--checkpoint", o.checkpoint, "Source-domain tse checkpoint");
  ft->add_option("--remix", o.remix, "Remix manifest");
  ft->add_option("--source", o.source, "Optional source-domain manifest to join");
  ft->add_option("--dev", o.dev, "Optional dev manifest for checkpoint selection");
  ft->add_option("--epochs", o.epochs, "Epoch count (at most 20)");
  ft->add_option("--max-steps", o.max_steps, "Stop after this many optimizer steps");
  ft->add_option("--seed", o.seed, "Seed for data order");
  ft->add_option("--out", o.out, "Checkpoint directory");

  auto* ev = app.add_subcommand("evaluate", "Score a checkpoint on one or more corpora");
  ev->add_option("--checkpoint", o.checkpoint, "Checkpoint");
  ev->add_option("--corpus", o.corpora, "name=manifest (repeatable)");
  ev->add_option("--source", o.source_name, "Corpus name treated as the source domain");
  ev->add_option("--target", o.target_name, "Corpus name treated as the target domain");
  ev->add_option("--out", o.out, "Directory for per-utterance JSON lines and summary");

  auto* inf = app.add_subcommand("infer", "Separate or extract one mixture");
  inf->add_option("--checkpoint", o.checkpoint, "Checkpoint")->required();
  inf->add_option("--mix", o.mix, "Mixture WAV")->required();
  inf->add_option("--enroll", o.enroll, "Enrollment WAV (tse checkpoints)");
  inf->add_option("--ref", o.refs, "Reference WAV for scoring (repeatable)");
  inf->add_option("--out", o.out, "Output directory")->required();

  auto* sw = app.add_subcommand("sweep", "Fine-tune and evaluate across remix SNR ranges");
  sw->add_option("--checkpoint", o.checkpoint, "Base tse checkpoint");
  sw->add_option("--corpus", o.corpus, "Clean source-domain corpus root");
  sw->add_option("--unsup", o.unsup, "Target-domain unsupervised mixtures");
  sw->add_option("--dev", o.dev, "Target-domain evaluation manifest");
  sw->add_option("--source", o.source, "Optional source-domain manifest to join");
  sw->add_option("--range", o.ranges, "SNR range lo,hi (repeat at least twice)");
  sw->add_option("--epochs", o.epochs, "Fine-tuning epochs per range");
  sw->add_option("--max-steps", o.max_steps, "Optimizer steps per range");
  sw->add_option("--seed", o.seed, "Recipe seed");
  sw->add_option("--out", o.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  spdlog::set_level(o.verbose ? spdlog::level::debug
                              : o.quiet ? spdlog::level::warn : spdlog::level::info);
  try {
    if (sim->parsed()) return run_simulate(o);
    if (stats->parsed()) return run_stats(o);
    if (tr->parsed()) return run_train(o);
    if (ft->parsed()) return run_finetune(o);
    if (ev->parsed()) return run_evaluate(o);
    if (inf->parsed()) return run_infer(o);
    if (sw->parsed()) return run_sweep(o);
  } catch (const InvalidArgument& e) {
    spdlog::error("{}", e.what());
    return kUsage;
  } catch (const DataError& e) {
    spdlog::error("data error: {}", e.what());
    return kData;
  } catch (const UndefinedReference& e) {
    spdlog::error("data error: {}", e.what());
    return kData;
  } catch (const DivergenceError& e) {
    spdlog::error("training diverged: {}", e.what());
    return kDivergence;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kInternal;
  }
  return kUsage;
}
