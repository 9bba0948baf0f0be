// Copyright 2026 The DPCCN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dpccn/metrics.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <spdlog/fmt/fmt.h>

#include "dpccn/error.h"

namespace dpccn {

double sisnr(std::span<const double> est, std::span<const double> ref) {
  DPCCN_CHECK_ARG(est.size() == ref.size(), "sisnr length mismatch: " +
                                                std::to_string(est.size()) + " vs " +
                                                std::to_string(ref.size()));
  DPCCN_CHECK_ARG(!ref.empty(), "sisnr of empty signals");
  const double n = static_cast<double>(ref.size());
  const double me = std::accumulate(est.begin(), est.end(), 0.0) / n;
  const double mr = std::accumulate(ref.begin(), ref.end(), 0.0) / n;
  double dot = 0.0, energy = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    dot += (est[i] - me) * (ref[i] - mr);
    energy += (ref[i] - mr) * (ref[i] - mr);
  }
  if (!(energy > 0.0)) throw UndefinedReference("sisnr reference is zero after mean removal");
  const double a = dot / energy;
  double target = 0.0, noise = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double s = a * (ref[i] - mr);
    const double e = (est[i] - me) - s;
    target += s * s;
    noise += e * e;
  }
  return 10.0 * std::log10(target / (noise + kSisnrEps) + kSisnrEps);
}

double sisnr(const Waveform& est, const Waveform& ref) { return sisnr(est.samples, ref.samples); }

double sisnri(const Waveform& est, const Waveform& ref, const Waveform& mix) {
  return sisnr(est, ref) - sisnr(mix, ref);
}

double st_gap(double source_sisnr, double target_sisnr) {
  DPCCN_CHECK_ARG(source_sisnr != 0.0, "st_gap needs a nonzero source score");
  return (source_sisnr - target_sisnr) / source_sisnr;
}

std::vector<std::vector<std::size_t>> permutations(std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  std::vector<std::vector<std::size_t>> all;
  do all.push_back(p);
  while (std::next_permutation(p.begin(), p.end()));
  return all;
}

UtteranceScore score_separation(const std::vector<Waveform>& ests,
                                const std::vector<Waveform>& refs, const Waveform& mix,
                                const std::string& id) {
  const std::size_t s = refs.size();
  DPCCN_CHECK_ARG(ests.size() == s && s >= 1,
                  "score_separation needs matching counts, got " +
                      std::to_string(ests.size()) + " estimates and " + std::to_string(s) +
                      " references");
  std::vector<double> table(s * s);
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = 0; j < s; ++j) table[i * s + j] = sisnr(ests[i], refs[j]);

  UtteranceScore best;
  best.id = id;
  double best_mean = -INFINITY;
  for (const auto& p : permutations(s)) {
    double mean = 0.0;
    for (std::size_t i = 0; i < s; ++i) mean += table[i * s + p[i]];
    mean /= static_cast<double>(s);
    if (best.permutation.empty() || mean > best_mean) {
      best_mean = mean;
      best.permutation = p;
    }
  }
  for (std::size_t i = 0; i < s; ++i) {
    const auto& ref = refs[best.permutation[i]];
    const double v = table[i * s + best.permutation[i]];
    best.sisnr.push_back(v);
    best.sisnri.push_back(v - sisnr(mix, ref));
  }
  best.mean_sisnr = std::accumulate(best.sisnr.begin(), best.sisnr.end(), 0.0) / s;
  best.mean_sisnri = std::accumulate(best.sisnri.begin(), best.sisnri.end(), 0.0) / s;
  return best;
}

ScoreReport summarize(std::vector<UtteranceScore> scores) {
  std::stable_sort(scores.begin(), scores.end(),
                   [](const auto& a, const auto& b) { return a.id < b.id; });
  ScoreReport report;
  for (const auto& s : scores) {
    report.mean_sisnr += s.mean_sisnr;
    report.mean_sisnri += s.mean_sisnri;
  }
  if (!scores.empty()) {
    report.mean_sisnr /= static_cast<double>(scores.size());
    report.mean_sisnri /= static_cast<double>(scores.size());
  }
  report.per_utterance = std::move(scores);
  return report;
}

nlohmann::json to_json(const UtteranceScore& score) {
  return {{"id", score.id},
          {"sisnr", score.sisnr},
          {"sisnri", score.sisnri},
          {"permutation", score.permutation},
          {"mean_sisnr", score.mean_sisnr},
          {"mean_sisnri", score.mean_sisnri}};
}

std::string report_jsonl(const ScoreReport& report) {
  std::ostringstream os;
  for (const auto& s : report.per_utterance) os << to_json(s).dump() << '\n';
  nlohmann::json summary{{"summary", true},
                         {"utterances", report.per_utterance.size()},
                         {"mean_sisnr", report.mean_sisnr},
                         {"mean_sisnri", report.mean_sisnri}};
  os << summary.dump() << '\n';
  return os.str();
}

std::string report_table(const std::vector<std::pair<std::string, ScoreReport>>& corpora) {
  std::size_t width = 6;
  for (const auto& [name, r] : corpora) width = std::max(width, name.size());
  std::string out = fmt::format("{:<{}}  {:>8}  {:>8}  {:>6}\n", "corpus", width, "SISNR",
                                "SISNRi", "utts");
  for (const auto& [name, r] : corpora)
    out += fmt::format("{:<{}}  {:>8.2f}  {:>8.2f}  {:>6}\n", name, width, r.mean_sisnr,
                       r.mean_sisnri, r.per_utterance.size());
  return out;
}

}  // namespace dpccn
