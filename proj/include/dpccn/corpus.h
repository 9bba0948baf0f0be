// Copyright 2026 The DPCCN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DPCCN_CORPUS_H_
#define DPCCN_CORPUS_H_

// Mixture simulation: two-speaker mixing, enrollment assignment and
// remixing of unsupervised target-domain mixtures with clean source speech.

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dpccn/signal.h"
#include "json.hpp"

namespace dpccn {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool operator==(const Interval&) const = default;
};

enum class MixMode { kSs, kTse, kRemix };
MixMode parse_mix_mode(const std::string& name);
std::string mix_mode_name(MixMode mode);

struct RecipeConfig {
  double clamp_duration = 4.0;  // seconds
  Interval pair_snr{0.0, 5.0};
  Interval remix_snr{15.0, 20.0};
  int sample_rate = 8000;
  std::uint64_t seed = 0;
  std::size_t num_mixtures = 100;     // ss / tse records
  std::size_t remix_per_mixture = 1;  // remix records per unsupervised mixture
};

void validate_recipe(const RecipeConfig& recipe);

// One manifest line. Paths are relative to the manifest's directory.
struct MixtureRecord {
  std::string id;
  std::string mix_path;
  std::vector<std::string> source_paths;
  std::vector<std::string> speaker_ids;
  std::string enroll_path;  // empty unless the record is for extraction
  std::size_t target_index = 0;
  double snr_db = 0.0;
  double duration_s = 0.0;
  int sample_rate = 8000;
};

void to_json(nlohmann::json& j, const MixtureRecord& r);
void from_json(const nlohmann::json& j, MixtureRecord& r);

// Throws DataError on unreadable or malformed manifests.
std::vector<MixtureRecord> read_manifest(const std::string& path);
std::string manifest_jsonl(const std::vector<MixtureRecord>& records);
void write_manifest(const std::string& path, const std::vector<MixtureRecord>& records);

struct RemixSpec {
  double source_energy = 0.0;   // E_s, sum of squares
  double mixture_energy = 0.0;  // E_m
  double snr_db = 0.0;
  double alpha = 0.0;
};

double signal_energy(std::span<const double> x);
// alpha = sqrt(E_s / (10^(snr/10) E_m)).
double snr_scale_factor(double source_energy, double mixture_energy, double snr_db);
RemixSpec make_remix_spec(double source_energy, double mixture_energy, double snr_db);

// Independent stream for (seed, index); generation order does not matter.
std::mt19937_64 record_rng(std::uint64_t seed, std::uint64_t index, std::uint64_t stream = 0);

// Random contiguous segment of duration_s seconds, or the whole input
// zero-padded at the end when it is shorter.
Waveform clamp_utterance(const Waveform& wave, double duration_s, std::mt19937_64& rng,
                         std::size_t* offset = nullptr);

// Integer-factor decimation with an anti-alias FIR. Throws DataError when
// the rates are not integer multiples.
Waveform resample_to(const Waveform& wave, int target_rate);

// Mixtures are scaled down jointly when their peak would exceed this.
constexpr double kPeakLimit = 0.9;

struct TwoSpeakerMix {
  Waveform mixture, s1, s2;
  double s2_scale = 1.0;     // applied to s2 to reach the requested SNR
  double norm_factor = 1.0;  // joint peak normalization applied to all outputs
};

// Scales s2 so that 10 log10(E_s1 / E_s2') = snr_db. Throws DataError on a
// silent source.
TwoSpeakerMix mix_two_speakers(const Waveform& s1, const Waveform& s2, double snr_db);

struct RemixResult {
  Waveform mixture;         // source + alpha * unsup, normalized
  Waveform source;          // reference
  Waveform scaled_mixture;  // alpha * unsup, normalized
  RemixSpec spec;
  double norm_factor = 1.0;
};

// Throws InvalidArgument when source and enrollment are the same utterance
// and DataError when either signal is silent.
RemixResult mixture_remix(const Waveform& unsup_mix, const Waveform& source,
                          const std::string& source_utt, const std::string& enroll_utt,
                          double snr_db);

struct Utterance {
  std::string speaker;
  std::string id;    // file stem, unique within its speaker
  std::string path;  // absolute
};

// <root>/<speaker>/**/*.wav, in sorted order.
struct CorpusIndex {
  std::vector<std::string> speakers;
  std::map<std::string, std::vector<Utterance>> utterances;

  static CorpusIndex scan(const std::string& root);
  std::size_t size() const;
};

struct UnsupMixture {
  std::string id;
  std::string path;
};

// A directory of WAV files or a manifest whose mix_path entries are used.
std::vector<UnsupMixture> scan_unsupervised(const std::string& path);

struct MixturePlan {
  std::size_t index = 0;
  std::string id;
  MixMode mode = MixMode::kSs;
  std::vector<Utterance> sources;  // two speakers (ss, tse) or the clean source (remix)
  std::optional<Utterance> enroll;
  std::optional<UnsupMixture> unsup;
  std::size_t target_index = 0;
  double snr_db = 0.0;
};

// Deterministic selection of utterances, enrollments and SNRs.
std::vector<MixturePlan> plan_mixtures(const CorpusIndex& corpus, const RecipeConfig& recipe,
                                       MixMode mode,
                                       const std::vector<UnsupMixture>& unsup = {});

// Loads and resamples audio once per path.
class AudioCache {
 public:
  explicit AudioCache(int sample_rate) : rate_(sample_rate) {}
  const Waveform& load(const std::string& path);

 private:
  int rate_;
  std::map<std::string, Waveform> cache_;
};

struct RenderedMixture {
  MixtureRecord record;
  Waveform mix;
  std::vector<Waveform> sources;
  std::optional<Waveform> enroll;
  double norm_factor = 1.0;
  std::optional<RemixSpec> remix;
};

RenderedMixture render_mixture(const MixturePlan& plan, const RecipeConfig& recipe,
                               AudioCache& audio);

struct SimulateSummary {
  std::size_t written = 0;
  std::size_t skipped = 0;
  std::string manifest_path;
};

// Renders every plan into out_dir as float32 WAV plus manifest.jsonl.
// Records with silent sources are logged and skipped.
SimulateSummary simulate(const CorpusIndex& corpus, const RecipeConfig& recipe, MixMode mode,
                         const std::string& out_dir,
                         const std::vector<UnsupMixture>& unsup = {});

}  // namespace dpccn

#endif  // DPCCN_CORPUS_H_
