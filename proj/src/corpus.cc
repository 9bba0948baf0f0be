// Copyright 2026 The DPCCN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dpccn/corpus.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "dpccn/error.h"
#include "dpccn/wav.h"

namespace dpccn {
namespace fs = std::filesystem;
namespace {

constexpr double kSilentEnergy = 1e-10;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

double draw(const Interval& range, std::mt19937_64& rng) {
  if (range.lo == range.hi) return range.lo;
  return std::uniform_real_distribution<double>(range.lo, range.hi)(rng);
}

std::size_t pick(std::size_t n, std::mt19937_64& rng) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

bool is_wav(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
  return ext == ".wav";
}

std::vector<fs::path> wav_files(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && is_wav(e.path())) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  return files;
}

void require_audible(const Waveform& w, const std::string& what) {
  if (signal_energy(w.samples) < kSilentEnergy) throw DataError(what + " is silent");
}

// Joint scale that keeps every output within the peak limit.
double joint_norm_factor(std::initializer_list<const Waveform*> waves) {
  double peak = 0.0;
  for (const auto* w : waves)
    for (double v : w->samples) peak = std::max(peak, std::abs(v));
  return peak > 1.0 ? kPeakLimit / peak : 1.0;
}

void scale_in_place(Waveform& w, double factor) {
  if (factor == 1.0) return;
  for (auto& v : w.samples) v *= factor;
}

std::vector<std::string> eligible_speakers(const CorpusIndex& corpus) {
  std::vector<std::string> out;
  for (const auto& s : corpus.speakers)
    if (corpus.utterances.at(s).size() >= 2) out.push_back(s);
  if (out.empty()) throw DataError("no speaker has the two utterances needed for enrollment");
  return out;
}

// Two distinct utterances of one speaker: (reference, enrollment).
std::pair<Utterance, Utterance> utterance_pair(const std::vector<Utterance>& utts,
                                               std::mt19937_64& rng) {
  std::size_t a = pick(utts.size(), rng);
  std::size_t b = pick(utts.size() - 1, rng);
  if (b >= a) ++b;
  return {utts[a], utts[b]};
}

std::string enroll_file(const MixturePlan& plan) {
  return fmt::format("enroll/{:05d}_{}.wav", plan.index, plan.enroll->id);
}

}  // namespace

MixMode parse_mix_mode(const std::string& name) {
  if (name == "ss") return MixMode::kSs;
  if (name == "tse") return MixMode::kTse;
  if (name == "remix") return MixMode::kRemix;
  throw InvalidArgument("unknown mode '" + name + "' (expected ss, tse or remix)");
}

std::string mix_mode_name(MixMode mode) {
  switch (mode) {
    case MixMode::kSs: return "ss";
    case MixMode::kTse: return "tse";
    case MixMode::kRemix: return "remix";
  }
  return "?";
}

void validate_recipe(const RecipeConfig& r) {
  DPCCN_CHECK_ARG(r.clamp_duration > 0.0, "clamp_duration must be positive");
  DPCCN_CHECK_ARG(r.pair_snr.lo <= r.pair_snr.hi, "pair_snr range is empty");
  DPCCN_CHECK_ARG(r.remix_snr.lo <= r.remix_snr.hi, "remix_snr range is empty");
  DPCCN_CHECK_ARG(r.sample_rate > 0, "sample_rate must be positive");
  DPCCN_CHECK_ARG(r.num_mixtures >= 1, "num_mixtures must be at least 1");
  DPCCN_CHECK_ARG(r.remix_per_mixture >= 1, "remix_per_mixture must be at least 1");
}

void to_json(nlohmann::json& j, const MixtureRecord& r) {
  j = nlohmann::json{{"id", r.id},
                     {"mix_path", r.mix_path},
                     {"source_paths", r.source_paths},
                     {"speaker_ids", r.speaker_ids},
                     {"enroll_path", r.enroll_path.empty() ? nlohmann::json(nullptr)
                                                           : nlohmann::json(r.enroll_path)},
                     {"target_index", r.target_index},
                     {"snr_db", r.snr_db},
                     {"duration_s", r.duration_s},
                     {"sample_rate", r.sample_rate}};
}

void from_json(const nlohmann::json& j, MixtureRecord& r) {
  r.id = j.at("id").get<std::string>();
  r.mix_path = j.at("mix_path").get<std::string>();
  r.source_paths = j.value("source_paths", std::vector<std::string>{});
  r.speaker_ids = j.value("speaker_ids", std::vector<std::string>{});
  const auto& e = j.contains("enroll_path") ? j.at("enroll_path") : nlohmann::json(nullptr);
  r.enroll_path = e.is_null() ? "" : e.get<std::string>();
  r.target_index = j.value("target_index", std::size_t{0});
  r.snr_db = j.value("snr_db", 0.0);
  r.duration_s = j.value("duration_s", 0.0);
  r.sample_rate = j.value("sample_rate", 8000);
}

std::vector<MixtureRecord> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path);
  std::vector<MixtureRecord> records;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      records.push_back(nlohmann::json::parse(line).get<MixtureRecord>());
    } catch (const nlohmann::json::exception& e) {
      throw DataError(fmt::format("{}:{}: {}", path, n, e.what()));
    }
  }
  return records;
}

std::string manifest_jsonl(const std::vector<MixtureRecord>& records) {
  std::string out;
  for (const auto& r : records) out += nlohmann::json(r).dump() + "\n";
  return out;
}

void write_manifest(const std::string& path, const std::vector<MixtureRecord>& records) {
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write manifest " + path);
  out << manifest_jsonl(records);
}

double signal_energy(std::span<const double> x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

double snr_scale_factor(double source_energy, double mixture_energy, double snr_db) {
  DPCCN_CHECK_ARG(source_energy > 0.0 && mixture_energy > 0.0,
                  "energies must be positive for the remix scale");
  return std::sqrt(source_energy / (std::pow(10.0, snr_db / 10.0) * mixture_energy));
}

RemixSpec make_remix_spec(double source_energy, double mixture_energy, double snr_db) {
  return RemixSpec{source_energy, mixture_energy, snr_db,
                   snr_scale_factor(source_energy, mixture_energy, snr_db)};
}

std::mt19937_64 record_rng(std::uint64_t seed, std::uint64_t index, std::uint64_t stream) {
  return std::mt19937_64(splitmix64(seed ^ splitmix64(index ^ splitmix64(stream))));
}

Waveform clamp_utterance(const Waveform& wave, double duration_s, std::mt19937_64& rng,
                         std::size_t* offset) {
  DPCCN_CHECK_ARG(!wave.samples.empty(), "cannot clamp an empty waveform");
  DPCCN_CHECK_ARG(duration_s > 0.0, "clamp duration must be positive");
  const auto n = static_cast<std::size_t>(std::lround(duration_s * wave.sample_rate));
  std::size_t start = 0;
  if (wave.size() > n) start = std::uniform_int_distribution<std::size_t>(0, wave.size() - n)(rng);
  Waveform out{std::vector<double>(n, 0.0), wave.sample_rate};
  const std::size_t copy = std::min(n, wave.size() - start);
  std::copy_n(wave.samples.begin() + start, copy, out.samples.begin());
  if (offset) *offset = start;
  return out;
}

Waveform resample_to(const Waveform& wave, int target_rate) {
  if (wave.sample_rate == target_rate) return wave;
  if (target_rate <= 0 || wave.sample_rate % target_rate != 0)
    throw DataError(fmt::format("cannot resample {} Hz to {} Hz by an integer factor",
                                wave.sample_rate, target_rate));
  const std::size_t k = wave.sample_rate / target_rate;
  const std::size_t half = 8 * k;
  const double fc = 0.95 * 0.5 / static_cast<double>(k);
  std::vector<double> h(2 * half + 1);
  double sum = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double t = static_cast<double>(i) - static_cast<double>(half);
    const double sinc = t == 0.0 ? 1.0 : std::sin(2 * std::numbers::pi * fc * t) /
                                             (std::numbers::pi * t) / (2 * fc);
    const double win = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * i / (h.size() - 1));
    h[i] = sinc * win;
    sum += h[i];
  }
  for (auto& v : h) v /= sum;
  const std::size_t len = wave.size();
  Waveform out{std::vector<double>((len + k - 1) / k), target_rate};
  for (std::size_t m = 0; m < out.size(); ++m) {
    double acc = 0.0;
    const long center = static_cast<long>(m * k);
    for (std::size_t i = 0; i < h.size(); ++i) {
      const long idx = center + static_cast<long>(half) - static_cast<long>(i);
      if (idx >= 0 && idx < static_cast<long>(len)) acc += h[i] * wave.samples[idx];
    }
    out.samples[m] = acc;
  }
  return out;
}

TwoSpeakerMix mix_two_speakers(const Waveform& s1, const Waveform& s2, double snr_db) {
  DPCCN_CHECK_ARG(s1.size() == s2.size(), "sources must have equal lengths after clamping");
  require_audible(s1, "first source");
  require_audible(s2, "second source");
  TwoSpeakerMix out;
  out.s2_scale = std::sqrt(signal_energy(s1.samples) /
                           (signal_energy(s2.samples) * std::pow(10.0, snr_db / 10.0)));
  out.s1 = s1;
  out.s2 = s2;
  scale_in_place(out.s2, out.s2_scale);
  out.mixture = Waveform{std::vector<double>(s1.size()), s1.sample_rate};
  for (std::size_t i = 0; i < s1.size(); ++i)
    out.mixture.samples[i] = out.s1.samples[i] + out.s2.samples[i];
  out.norm_factor = joint_norm_factor({&out.mixture, &out.s1, &out.s2});
  for (auto* w : {&out.mixture, &out.s1, &out.s2}) scale_in_place(*w, out.norm_factor);
  return out;
}

RemixResult mixture_remix(const Waveform& unsup_mix, const Waveform& source,
                          const std::string& source_utt, const std::string& enroll_utt,
                          double snr_db) {
  DPCCN_CHECK_ARG(source_utt != enroll_utt,
                  "enrollment must differ from the remixed utterance (" + source_utt + ")");
  DPCCN_CHECK_ARG(unsup_mix.size() == source.size(),
                  "remix inputs must be clamped to the same length");
  require_audible(source, "source utterance " + source_utt);
  require_audible(unsup_mix, "unsupervised mixture");
  RemixResult out;
  out.spec = make_remix_spec(signal_energy(source.samples), signal_energy(unsup_mix.samples),
                             snr_db);
  out.source = source;
  out.scaled_mixture = unsup_mix;
  scale_in_place(out.scaled_mixture, out.spec.alpha);
  out.mixture = Waveform{std::vector<double>(source.size()), source.sample_rate};
  for (std::size_t i = 0; i < source.size(); ++i)
    out.mixture.samples[i] = out.source.samples[i] + out.scaled_mixture.samples[i];
  out.norm_factor = joint_norm_factor({&out.mixture, &out.source, &out.scaled_mixture});
  for (auto* w : {&out.mixture, &out.source, &out.scaled_mixture})
    scale_in_place(*w, out.norm_factor);
  return out;
}

CorpusIndex CorpusIndex::scan(const std::string& root) {
  if (!fs::is_directory(root)) throw DataError("corpus root is not a directory: " + root);
  CorpusIndex index;
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  for (const auto& dir : dirs) {
    std::vector<Utterance> utts;
    const std::string speaker = dir.filename().string();
    for (const auto& f : wav_files(dir))
      utts.push_back({speaker, f.stem().string(), fs::absolute(f).string()});
    if (utts.empty()) continue;
    index.speakers.push_back(speaker);
    index.utterances.emplace(speaker, std::move(utts));
  }
  if (index.speakers.empty()) throw DataError("corpus is empty: " + root);
  return index;
}

std::size_t CorpusIndex::size() const {
  std::size_t n = 0;
  for (const auto& [s, u] : utterances) n += u.size();
  return n;
}

std::vector<UnsupMixture> scan_unsupervised(const std::string& path) {
  std::vector<UnsupMixture> out;
  if (fs::is_directory(path)) {
    for (const auto& f : wav_files(path)) {
      std::string rel = fs::relative(f, path).replace_extension().string();
      std::replace(rel.begin(), rel.end(), '/', '-');
      out.push_back({rel, fs::absolute(f).string()});
    }
  } else {
    const fs::path base = fs::absolute(path).parent_path();
    for (const auto& r : read_manifest(path)) out.push_back({r.id, (base / r.mix_path).string()});
  }
  if (out.empty()) throw DataError("no unsupervised mixtures found in " + path);
  return out;
}

std::vector<MixturePlan> plan_mixtures(const CorpusIndex& corpus, const RecipeConfig& recipe,
                                       MixMode mode, const std::vector<UnsupMixture>& unsup) {
  validate_recipe(recipe);
  std::vector<MixturePlan> plans;
  if (mode == MixMode::kRemix) {
    if (unsup.empty()) throw DataError("remix mode needs unsupervised mixtures");
    const auto eligible = eligible_speakers(corpus);
    for (std::size_t j = 0; j < unsup.size(); ++j)
      for (std::size_t r = 0; r < recipe.remix_per_mixture; ++r) {
        MixturePlan p;
        p.index = j * recipe.remix_per_mixture + r;
        p.mode = mode;
        auto rng = record_rng(recipe.seed, p.index);
        const auto& speaker = eligible[pick(eligible.size(), rng)];
        auto [src, enroll] = utterance_pair(corpus.utterances.at(speaker), rng);
        p.sources = {src};
        p.enroll = enroll;
        p.unsup = unsup[j];
        p.snr_db = draw(recipe.remix_snr, rng);
        p.id = fmt::format("{:05d}_{}_{}", p.index, src.id, unsup[j].id);
        plans.push_back(std::move(p));
      }
    return plans;
  }

  if (corpus.speakers.size() < 2) throw DataError("mixing needs at least two speakers");
  std::vector<std::string> eligible;
  if (mode == MixMode::kTse) eligible = eligible_speakers(corpus);
  for (std::size_t i = 0; i < recipe.num_mixtures; ++i) {
    MixturePlan p;
    p.index = i;
    p.mode = mode;
    auto rng = record_rng(recipe.seed, i);
    const std::size_t n = corpus.speakers.size();
    std::size_t a = pick(n, rng);
    // The target speaker needs a second utterance for enrollment; redraw
    // otherwise, falling back to the eligible list after a bounded number of tries.
    for (int tries = 0; mode == MixMode::kTse && corpus.utterances.at(corpus.speakers[a]).size() < 2;
         ++tries) {
      if (tries == 64) {
        const auto& s = eligible[pick(eligible.size(), rng)];
        a = std::find(corpus.speakers.begin(), corpus.speakers.end(), s) - corpus.speakers.begin();
        break;
      }
      a = pick(n, rng);
    }
    std::size_t b = pick(n - 1, rng);
    if (b >= a) ++b;
    const auto& ua = corpus.utterances.at(corpus.speakers[a]);
    const auto& ub = corpus.utterances.at(corpus.speakers[b]);
    Utterance target, other = ub[pick(ub.size(), rng)];
    if (mode == MixMode::kTse) {
      auto [ref, enroll] = utterance_pair(ua, rng);
      target = ref;
      p.enroll = enroll;
      p.target_index = pick(2, rng);
    } else {
      target = ua[pick(ua.size(), rng)];
    }
    p.sources = p.target_index == 0 ? std::vector<Utterance>{target, other}
                                    : std::vector<Utterance>{other, target};
    p.snr_db = draw(recipe.pair_snr, rng);
    p.id = fmt::format("{:05d}_{}_{}", i, p.sources[0].id, p.sources[1].id);
    plans.push_back(std::move(p));
  }
  return plans;
}

const Waveform& AudioCache::load(const std::string& path) {
  auto it = cache_.find(path);
  if (it == cache_.end()) it = cache_.emplace(path, resample_to(read_wav(path), rate_)).first;
  return it->second;
}

RenderedMixture render_mixture(const MixturePlan& plan, const RecipeConfig& recipe,
                               AudioCache& audio) {
  auto rng = record_rng(recipe.seed, plan.index, 1);
  const double dur = recipe.clamp_duration;
  RenderedMixture out;
  MixtureRecord& rec = out.record;
  rec.id = plan.id;
  rec.mix_path = "mix/" + plan.id + ".wav";
  rec.source_paths = {"s1/" + plan.id + ".wav", "s2/" + plan.id + ".wav"};
  rec.target_index = plan.target_index;
  rec.snr_db = plan.snr_db;
  rec.sample_rate = recipe.sample_rate;

  if (plan.mode == MixMode::kRemix) {
    Waveform src = clamp_utterance(audio.load(plan.sources[0].path), dur, rng);
    Waveform mix = clamp_utterance(audio.load(plan.unsup->path), dur, rng);
    auto remix = mixture_remix(mix, src, plan.sources[0].id, plan.enroll->id, plan.snr_db);
    rec.speaker_ids = {plan.sources[0].speaker, "unsup:" + plan.unsup->id};
    out.mix = std::move(remix.mixture);
    out.sources = {std::move(remix.source), std::move(remix.scaled_mixture)};
    out.norm_factor = remix.norm_factor;
    out.remix = remix.spec;
  } else {
    Waveform s1 = clamp_utterance(audio.load(plan.sources[0].path), dur, rng);
    Waveform s2 = clamp_utterance(audio.load(plan.sources[1].path), dur, rng);
    auto mixed = mix_two_speakers(s1, s2, plan.snr_db);
    rec.speaker_ids = {plan.sources[0].speaker, plan.sources[1].speaker};
    out.mix = std::move(mixed.mixture);
    out.sources = {std::move(mixed.s1), std::move(mixed.s2)};
    out.norm_factor = mixed.norm_factor;
  }
  if (plan.enroll) {
    out.enroll = clamp_utterance(audio.load(plan.enroll->path), dur, rng);
    require_audible(*out.enroll, "enrollment " + plan.enroll->id);
    rec.enroll_path = enroll_file(plan);
  }
  rec.duration_s = static_cast<double>(out.mix.size()) / recipe.sample_rate;
  return out;
}

SimulateSummary simulate(const CorpusIndex& corpus, const RecipeConfig& recipe, MixMode mode,
                         const std::string& out_dir, const std::vector<UnsupMixture>& unsup) {
  const auto plans = plan_mixtures(corpus, recipe, mode, unsup);
  AudioCache audio(recipe.sample_rate);
  const fs::path root(out_dir);
  fs::create_directories(root);
  std::vector<MixtureRecord> records;
  SimulateSummary summary;
  for (const auto& plan : plans) {
    RenderedMixture r;
    try {
      r = render_mixture(plan, recipe, audio);
    } catch (const DataError& e) {
      spdlog::warn("skipping {}: {}", plan.id, e.what());
      ++summary.skipped;
      continue;
    }
    write_wav((root / r.record.mix_path).string(), r.mix);
    for (std::size_t s = 0; s < r.sources.size(); ++s)
      write_wav((root / r.record.source_paths[s]).string(), r.sources[s]);
    if (r.enroll) write_wav((root / r.record.enroll_path).string(), *r.enroll);
    records.push_back(std::move(r.record));
  }
  summary.written = records.size();
  summary.manifest_path = (root / "manifest.jsonl").string();
  write_manifest(summary.manifest_path, records);
  spdlog::info("simulated {} {} mixtures into {} ({} skipped)", summary.written,
               mix_mode_name(mode), out_dir, summary.skipped);
  return summary;
}

}  // namespace dpccn
