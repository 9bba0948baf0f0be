// Copyright 2026 The DPCCN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DPCCN_METRICS_H_
#define DPCCN_METRICS_H_

#include <span>
#include <string>
#include <vector>

#include "dpccn/signal.h"
#include "json.hpp"

namespace dpccn {

constexpr double kSisnrEps = 1e-8;

// Scale-invariant SNR in dB. Throws UndefinedReference when the reference is
// zero after mean removal.
double sisnr(std::span<const double> est, std::span<const double> ref);
double sisnr(const Waveform& est, const Waveform& ref);
double sisnri(const Waveform& est, const Waveform& ref, const Waveform& mix);

// Relative degradation from the source-domain score to the target-domain one.
double st_gap(double source_sisnr, double target_sisnr);

// All permutations of {0, ..., n-1} in lexicographic order.
std::vector<std::vector<std::size_t>> permutations(std::size_t n);

struct UtteranceScore {
  std::string id;
  std::vector<double> sisnr;   // per estimate, under the chosen pairing
  std::vector<double> sisnri;
  std::vector<std::size_t> permutation;  // estimate i pairs with ref permutation[i]
  double mean_sisnr = 0.0;
  double mean_sisnri = 0.0;
};

// Picks the estimate-to-reference pairing with the highest mean SISNR.
UtteranceScore score_separation(const std::vector<Waveform>& ests,
                                const std::vector<Waveform>& refs, const Waveform& mix,
                                const std::string& id = "");

struct ScoreReport {
  std::vector<UtteranceScore> per_utterance;
  double mean_sisnr = 0.0;
  double mean_sisnri = 0.0;
};

// Sorts by id and takes unweighted means.
ScoreReport summarize(std::vector<UtteranceScore> scores);

// One JSON object per utterance, then a summary object.
std::string report_jsonl(const ScoreReport& report);
// name | SISNR | SISNRi rows.
std::string report_table(const std::vector<std::pair<std::string, ScoreReport>>& corpora);

nlohmann::json to_json(const UtteranceScore& score);

}  // namespace dpccn

#endif  // DPCCN_METRICS_H_
