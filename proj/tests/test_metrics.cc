// Copyright 2026 The DPCCN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "dpccn/error.h"
#include "dpccn/metrics.h"
#include "test_util.h"

using namespace dpccn;
using dpccn::testing::gaussian;

namespace {

std::vector<double> zero_mean(std::vector<double> x) {
  double m = 0.0;
  for (double v : x) m += v;
  m /= static_cast<double>(x.size());
  for (auto& v : x) v -= m;
  return x;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// ref + n, n zero-mean, orthogonal to ref and scaled to |ref|^2 / 10^(db/10).
std::vector<double> with_orthogonal_noise(const std::vector<double>& ref, double db,
                                          std::mt19937_64& rng) {
  auto n = zero_mean(gaussian(ref.size(), rng));
  const auto r = zero_mean(ref);
  const double k = dot(n, r) / dot(r, r);
  for (std::size_t i = 0; i < n.size(); ++i) n[i] -= k * r[i];
  const double scale = std::sqrt(dot(r, r) / std::pow(10.0, db / 10.0) / dot(n, n));
  std::vector<double> est = ref;
  for (std::size_t i = 0; i < n.size(); ++i) est[i] += scale * n[i];
  return est;
}

Waveform wave(std::vector<double> x) { return Waveform{std::move(x), 8000}; }

}  // namespace

TEST_CASE("identical signals reach the epsilon ceiling") {
  std::mt19937_64 rng(3);
  const auto x = gaussian(16000, rng);
  CHECK(sisnr(x, x) >= 80.0);
}

TEST_CASE("orthogonal noise oracle") {
  std::mt19937_64 rng(4);
  for (double db : {20.0, 0.0, -5.0, 35.0}) {
    const auto ref = gaussian(32000, rng);
    CHECK(std::abs(sisnr(with_orthogonal_noise(ref, db, rng), ref) - db) < 1e-3);
  }
}

TEST_CASE("scale invariance and offset invariance") {
  std::mt19937_64 rng(5);
  for (int k = 0; k < 20; ++k) {
    const auto ref = gaussian(4000, rng);
    auto est = ref;
    const auto noise = gaussian(4000, rng, 0.5);
    for (std::size_t i = 0; i < est.size(); ++i) est[i] += noise[i];
    const double base = sisnr(est, ref);
    for (double a : {0.1, 3.0, -1.0}) {
      auto scaled = est;
      for (auto& v : scaled) v *= a;
      CHECK(std::abs(sisnr(scaled, ref) - base) < 1e-6);
    }
    auto shifted = est;
    for (auto& v : shifted) v += 0.7;
    CHECK(std::abs(sisnr(shifted, ref) - base) < 1e-6);
  }
}

TEST_CASE("sisnr error cases") {
  const std::vector<double> zero(100, 0.0), constant(100, 2.0), x(100, 1.0), y(99, 1.0);
  std::mt19937_64 rng(6);
  const auto r = gaussian(100, rng);
  CHECK_THROWS_AS(sisnr(r, zero), UndefinedReference);
  CHECK_THROWS_AS(sisnr(r, constant), UndefinedReference);
  CHECK_THROWS_AS(sisnr(x, y), InvalidArgument);
  CHECK_THROWS_AS(sisnr(std::vector<double>{}, std::vector<double>{}), InvalidArgument);
}

TEST_CASE("sisnri of the mixture itself is zero") {
  std::mt19937_64 rng(7);
  const auto s1 = wave(gaussian(8000, rng)), s2 = wave(gaussian(8000, rng));
  const auto mix = testing::add(s1, s2);
  CHECK(sisnri(mix, s1, mix) == 0.0);
  CHECK(sisnri(s1, s1, mix) == doctest::Approx(sisnr(s1, s1) - sisnr(mix, s1)));
}

TEST_CASE("published score pairs imply the mixture baseline") {
  // SISNR 5.78 with SISNRi 3.28 leaves 2.50 dB for the unprocessed mixture;
  // 11.98 / 11.98 leaves 0.
  CHECK(5.78 - 3.28 == doctest::Approx(2.50).epsilon(1e-12));
  CHECK(11.98 - 11.98 == 0.0);
}

TEST_CASE("st_gap reproduces published degradations") {
  CHECK(std::round(st_gap(11.98, 2.08) * 1000.0) / 1000.0 == 0.826);
  CHECK(std::round(st_gap(11.57, 5.78) * 1000.0) / 1000.0 == 0.500);
  CHECK(st_gap(7.0, 7.0) == 0.0);
  CHECK(st_gap(10.0, 12.0) == doctest::Approx(-0.2));
  CHECK_THROWS_AS(st_gap(0.0, 1.0), InvalidArgument);
}

TEST_CASE("permutations enumerate n! orderings") {
  CHECK(permutations(1).size() == 1);
  CHECK(permutations(3).size() == 6);
  CHECK(permutations(4).size() == 24);
  CHECK(permutations(2)[1] == std::vector<std::size_t>{1, 0});
}

TEST_CASE("score_separation recovers a swap") {
  std::mt19937_64 rng(8);
  const auto s1 = wave(gaussian(8000, rng)), s2 = wave(gaussian(8000, rng));
  const auto mix = testing::add(s1, s2);
  const auto score = score_separation({s2, s1}, {s1, s2}, mix, "u");
  CHECK(score.permutation == std::vector<std::size_t>{1, 0});
  CHECK(score.mean_sisnr >= 80.0);
  CHECK(score.sisnri[0] == doctest::Approx(score.sisnr[0] - sisnr(mix, s2)));
  CHECK(score.mean_sisnri == doctest::Approx((score.sisnri[0] + score.sisnri[1]) / 2));
}

TEST_CASE("score_separation matches brute force for three sources") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Waveform> refs, ests;
    for (int k = 0; k < 3; ++k) refs.push_back(wave(gaussian(2000, rng)));
    for (int k = 0; k < 3; ++k) {
      auto e = wave(gaussian(2000, rng, 0.8));
      for (int j = 0; j < 3; ++j) {
        const double w = std::uniform_real_distribution<double>(0, 1)(rng);
        for (std::size_t i = 0; i < 2000; ++i) e.samples[i] += w * refs[j].samples[i];
      }
      ests.push_back(e);
    }
    const auto mix = testing::add(testing::add(refs[0], refs[1]), refs[2]);
    double best = -1e300;
    std::vector<std::size_t> best_p;
    std::vector<std::size_t> p{0, 1, 2};
    do {
      double m = 0.0;
      for (int i = 0; i < 3; ++i) m += sisnr(ests[i], refs[p[i]]) / 3.0;
      if (m > best) best = m, best_p = p;
    } while (std::next_permutation(p.begin(), p.end()));
    const auto score = score_separation(ests, refs, mix);
    CHECK(score.permutation == best_p);
    CHECK(score.mean_sisnr == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("single-source scoring is plain sisnr") {
  std::mt19937_64 rng(10);
  const auto r = wave(gaussian(1000, rng)), e = wave(gaussian(1000, rng)),
             m = wave(gaussian(1000, rng));
  const auto score = score_separation({e}, {r}, m);
  CHECK(score.permutation == std::vector<std::size_t>{0});
  CHECK(score.mean_sisnr == sisnr(e, r));
  CHECK_THROWS_AS(score_separation({e, e}, {r}, m), InvalidArgument);
}

TEST_CASE("summaries sort by id and average per utterance") {
  std::vector<UtteranceScore> s(3);
  s[0].id = "c", s[0].mean_sisnr = 3, s[0].mean_sisnri = 1;
  s[1].id = "a", s[1].mean_sisnr = 6, s[1].mean_sisnri = 2;
  s[2].id = "b", s[2].mean_sisnr = 0, s[2].mean_sisnri = 0;
  const auto r = summarize(s);
  CHECK(r.per_utterance[0].id == "a");
  CHECK(r.per_utterance[2].id == "c");
  CHECK(r.mean_sisnr == doctest::Approx(3.0));
  CHECK(r.mean_sisnri == doctest::Approx(1.0));
  CHECK(summarize({}).mean_sisnr == 0.0);

  const std::string jsonl = report_jsonl(r);
  CHECK(std::count(jsonl.begin(), jsonl.end(), '\n') == 4);
  const auto last = nlohmann::json::parse(jsonl.substr(jsonl.rfind('\n', jsonl.size() - 2) + 1));
  CHECK(last["summary"] == true);
  CHECK(last["utterances"] == 3);

  const std::string table = report_table({{"libri", r}});
  CHECK(table.find("libri") != std::string::npos);
  CHECK(table.find("3.00") != std::string::npos);
}
