// Copyright 2026 The DPCCN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "dpccn/corpus.h"
#include "dpccn/error.h"
#include "dpccn/wav.h"
#include "test_util.h"

using namespace dpccn;
using testing::TempDir;

namespace {

double snr_db(const Waveform& a, const Waveform& b) {
  return 10.0 * std::log10(signal_energy(a.samples) / signal_energy(b.samples));
}

Waveform noise(std::size_t n, std::uint64_t seed, double scale = 0.1) {
  std::mt19937_64 rng(seed);
  return Waveform{testing::gaussian(n, rng, scale), 8000};
}

// Stem of the utterance encoded in an enrollment path enroll/<index>_<stem>.wav.
std::string enroll_stem(const std::string& path) {
  const auto file = std::filesystem::path(path).stem().string();
  return file.substr(file.find('_') + 1);
}

}  // namespace

TEST_CASE("clamping to four seconds") {
  auto rng = record_rng(1, 2);
  std::size_t offset = 99;
  const auto six = noise(48000, 1);
  const auto c = clamp_utterance(six, 4.0, rng, &offset);
  CHECK(c.size() == 32000);
  CHECK(offset <= 16000);
  CHECK(c.samples[0] == six.samples[offset]);
  CHECK(c.samples[31999] == six.samples[offset + 31999]);

  const auto three = noise(24000, 2);
  const auto p = clamp_utterance(three, 4.0, rng, &offset);
  CHECK(offset == 0);
  CHECK(p.size() == 32000);
  CHECK(std::equal(three.samples.begin(), three.samples.end(), p.samples.begin()));
  for (std::size_t i = 24000; i < 32000; ++i) CHECK(p.samples[i] == 0.0);

  auto r1 = record_rng(7, 3), r2 = record_rng(7, 3);
  CHECK(clamp_utterance(six, 4.0, r1).samples == clamp_utterance(six, 4.0, r2).samples);
  CHECK_THROWS_AS(clamp_utterance(Waveform{}, 4.0, rng), InvalidArgument);
}

TEST_CASE("record streams are independent of generation order") {
  auto a = record_rng(5, 10), b = record_rng(5, 10), c = record_rng(5, 11), d = record_rng(5, 10, 1);
  const auto x = a();
  CHECK(x == b());
  CHECK(x != c());
  CHECK(x != d());
}

TEST_CASE("remix scale factor") {
  CHECK(snr_scale_factor(1.0, 1.0, 0.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(snr_scale_factor(1.0, 1.0, 20.0) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(snr_scale_factor(4.0, 1.0, 10.0) == doctest::Approx(std::sqrt(0.4)).epsilon(1e-15));
  CHECK(snr_scale_factor(4.0, 1.0, 10.0) == doctest::Approx(0.6325).epsilon(1e-4));
  const auto spec = make_remix_spec(3.0, 7.0, 17.5);
  CHECK(spec.alpha * spec.alpha * 7.0 * std::pow(10.0, 1.75) / 3.0 ==
        doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("two-speaker mixing") {
  const auto s1 = noise(8000, 3), s2 = noise(8000, 4, 0.3);
  for (double snr : {0.0, 2.5, 5.0}) {
    const auto m = mix_two_speakers(s1, s2, snr);
    CHECK(std::abs(snr_db(m.s1, m.s2) - snr) < 0.01);
    for (std::size_t i = 0; i < 8000; ++i)
      CHECK(m.mixture.samples[i] - m.s1.samples[i] - m.s2.samples[i] == doctest::Approx(0.0));
  }
  auto equal = s1;
  const auto m = mix_two_speakers(s1, equal, 0.0);
  CHECK(m.s2_scale == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(m.norm_factor == 1.0);
  // Before normalization the residual is exactly zero.
  for (std::size_t i = 0; i < 8000; ++i)
    CHECK(m.mixture.samples[i] == m.s1.samples[i] + m.s2.samples[i]);

  const auto loud = noise(8000, 5, 2.0);
  const auto n = mix_two_speakers(loud, loud, 0.0);
  double peak = 0.0;
  for (double v : n.mixture.samples) peak = std::max(peak, std::abs(v));
  CHECK(peak == doctest::Approx(kPeakLimit));
  CHECK(std::abs(snr_db(n.s1, n.s2)) < 0.01);

  CHECK_THROWS_AS(mix_two_speakers(s1, Waveform{std::vector<double>(8000, 0.0)}, 0.0), DataError);
  CHECK_THROWS_AS(mix_two_speakers(s1, noise(100, 6), 0.0), InvalidArgument);
}

TEST_CASE("mixture remix") {
  const auto unsup = noise(8000, 7, 0.2), src = noise(8000, 8);
  const auto r = mixture_remix(unsup, src, "a", "b", 17.0);
  CHECK(r.norm_factor == 1.0);
  for (std::size_t i = 0; i < 8000; ++i)
    CHECK(r.mixture.samples[i] == src.samples[i] + r.spec.alpha * unsup.samples[i]);
  CHECK(std::abs(snr_db(r.source, r.scaled_mixture) - 17.0) < 0.01);
  CHECK(r.spec.alpha * r.spec.alpha * r.spec.mixture_energy * std::pow(10.0, 1.7) /
            r.spec.source_energy ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(mixture_remix(unsup, src, "a", "a", 17.0), InvalidArgument);
  CHECK_THROWS_AS(mixture_remix(Waveform{std::vector<double>(8000, 0.0)}, src, "a", "b", 17.0),
                  DataError);
}

TEST_CASE("remix SNR draws are uniform over the default range") {
  CorpusIndex corpus;
  corpus.speakers = {"a", "b"};
  corpus.utterances["a"] = {{"a", "a1", "/x/a1.wav"}, {"a", "a2", "/x/a2.wav"}};
  corpus.utterances["b"] = {{"b", "b1", "/x/b1.wav"}, {"b", "b2", "/x/b2.wav"}};
  std::vector<UnsupMixture> unsup;
  for (int i = 0; i < 10000; ++i) unsup.push_back({"m" + std::to_string(i), "/y/m.wav"});
  RecipeConfig recipe;
  recipe.seed = 11;
  const auto plans = plan_mixtures(corpus, recipe, MixMode::kRemix, unsup);
  CHECK(plans.size() == 10000);
  double mean = 0.0;
  for (const auto& p : plans) {
    CHECK(p.snr_db >= 15.0);
    CHECK(p.snr_db <= 20.0);
    mean += p.snr_db / 10000.0;
    CHECK(p.sources[0].id != p.enroll->id);
    CHECK(p.sources[0].speaker == p.enroll->speaker);
  }
  CHECK(mean >= 17.3);
  CHECK(mean <= 17.7);
  std::set<std::string> ids;
  for (const auto& p : plans) ids.insert(p.id);
  CHECK(ids.size() == 10000);
}

TEST_CASE("plans are deterministic and satisfy the enrollment constraint") {
  TempDir dir("plan");
  testing::write_speaker_corpus(dir.str(), 4, 3, 1.0, 5);
  // A speaker with one utterance can be an interferer but never a target.
  testing::write_speaker_corpus(dir / "solo", 1, 1, 1.0, 6);
  std::filesystem::rename(dir / "solo/spk00", dir / "zzz");
  std::filesystem::remove_all(dir / "solo");
  const auto corpus = CorpusIndex::scan(dir.str());
  CHECK(corpus.speakers.size() == 5);
  RecipeConfig recipe;
  recipe.num_mixtures = 300;
  const auto a = plan_mixtures(corpus, recipe, MixMode::kTse);
  const auto b = plan_mixtures(corpus, recipe, MixMode::kTse);
  std::size_t second = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].id == b[i].id);
    CHECK(a[i].snr_db == b[i].snr_db);
    const auto& target = a[i].sources[a[i].target_index];
    CHECK(target.speaker == a[i].enroll->speaker);
    CHECK(target.id != a[i].enroll->id);
    CHECK(target.speaker != "zzz");
    CHECK(a[i].sources[0].speaker != a[i].sources[1].speaker);
    CHECK(a[i].snr_db >= 0.0);
    CHECK(a[i].snr_db <= 5.0);
    second += a[i].target_index;
  }
  CHECK(second > 50);
  CHECK(second < 250);
  recipe.seed = 1;
  CHECK(plan_mixtures(corpus, recipe, MixMode::kTse)[0].id != a[0].id);
}

TEST_CASE("simulate writes a byte-stable corpus") {
  TempDir dir("sim");
  testing::write_speaker_corpus(dir / "corpus", 4, 3, 5.0, 9);
  const auto corpus = CorpusIndex::scan(dir / "corpus");
  RecipeConfig recipe;
  recipe.num_mixtures = 6;
  recipe.seed = 3;
  const auto s1 = simulate(corpus, recipe, MixMode::kTse, dir / "a");
  const auto s2 = simulate(corpus, recipe, MixMode::kTse, dir / "b");
  CHECK(s1.written == 6);
  CHECK(s1.skipped == 0);
  CHECK(testing::read_tree(dir / "a") == testing::read_tree(dir / "b"));

  const auto records = read_manifest(s1.manifest_path);
  REQUIRE(records.size() == 6);
  for (const auto& r : records) {
    CHECK(r.duration_s == 4.0);
    CHECK(!r.enroll_path.empty());
    const auto mix = read_wav((dir / "a/") + r.mix_path);
    const auto a = read_wav((dir / "a/") + r.source_paths[0]);
    const auto b = read_wav((dir / "a/") + r.source_paths[1]);
    CHECK(mix.size() == 32000);
    CHECK(std::abs(snr_db(a, b) - r.snr_db) < 0.01);
    const auto target_stem = r.id.substr(6);
    CHECK(target_stem.find(enroll_stem(r.enroll_path)) == std::string::npos);
    CHECK(read_wav((dir / "a/") + r.enroll_path).size() == 32000);
  }
  CHECK(manifest_jsonl(records) == testing::read_file(s1.manifest_path));
}

TEST_CASE("remix simulation over a directory of unsupervised mixtures") {
  TempDir dir("remix");
  testing::write_speaker_corpus(dir / "corpus", 2, 3, 4.5, 12);
  testing::write_unsup_mixtures(dir / "unsup", 5, 3.0, 13);
  const auto corpus = CorpusIndex::scan(dir / "corpus");
  const auto unsup = scan_unsupervised(dir / "unsup");
  REQUIRE(unsup.size() == 5);
  RecipeConfig recipe;
  recipe.remix_per_mixture = 2;
  const auto s = simulate(corpus, recipe, MixMode::kRemix, dir / "out", unsup);
  CHECK(s.written == 10);
  const auto records = read_manifest(s.manifest_path);
  for (const auto& r : records) {
    CHECK(r.speaker_ids[1].rfind("unsup:", 0) == 0);
    CHECK(r.snr_db >= 15.0);
    CHECK(r.snr_db <= 20.0);
    const auto a = read_wav((dir / "out/") + r.source_paths[0]);
    const auto b = read_wav((dir / "out/") + r.source_paths[1]);
    const auto m = read_wav((dir / "out/") + r.mix_path);
    CHECK(std::abs(snr_db(a, b) - r.snr_db) < 0.01);
    // Files are float32, so the sum holds to single precision.
    for (std::size_t i = 0; i < m.size(); i += 101)
      CHECK(std::abs(m.samples[i] - a.samples[i] - b.samples[i]) < 1e-7);
    CHECK(r.id.find(enroll_stem(r.enroll_path)) == std::string::npos);
  }
  // A manifest works as the unsupervised source as well.
  CHECK(scan_unsupervised(s.manifest_path).size() == 10);
}

TEST_CASE("silent utterances are skipped, not fatal") {
  TempDir dir("silent");
  testing::write_speaker_corpus(dir / "corpus", 2, 2, 1.0, 14);
  write_wav(dir / "corpus/spk00/spk00_u00.wav", Waveform{std::vector<double>(8000, 0.0)});
  write_wav(dir / "corpus/spk00/spk00_u01.wav", Waveform{std::vector<double>(8000, 0.0)});
  RecipeConfig recipe;
  recipe.num_mixtures = 4;
  const auto s = simulate(CorpusIndex::scan(dir / "corpus"), recipe, MixMode::kSs, dir / "out");
  CHECK(s.written + s.skipped == 4);
  CHECK(s.skipped == 4);
}

TEST_CASE("resampling") {
  // 1 kHz at 16 kHz survives decimation to 8 kHz.
  Waveform w{std::vector<double>(16000), 16000};
  for (std::size_t i = 0; i < w.size(); ++i)
    w.samples[i] = std::sin(2.0 * std::numbers::pi * 1000.0 * i / 16000.0);
  const auto d = resample_to(w, 8000);
  CHECK(d.sample_rate == 8000);
  CHECK(d.size() == 8000);
  for (std::size_t i = 100; i < 7900; i += 37)
    CHECK(d.samples[i] == doctest::Approx(std::sin(2.0 * std::numbers::pi * 1000.0 * i / 8000.0))
                              .epsilon(0.01)
                              .scale(1.0));
  // 6 kHz is above the new Nyquist rate and is removed.
  for (std::size_t i = 0; i < w.size(); ++i)
    w.samples[i] = std::sin(2.0 * std::numbers::pi * 6000.0 * i / 16000.0);
  const auto a = resample_to(w, 8000);
  CHECK(std::sqrt(signal_energy(std::span<const double>(a.samples).subspan(100, 7800)) / 7800) <
        0.01);
  CHECK(resample_to(d, 8000).samples == d.samples);
  CHECK_THROWS_AS(resample_to(Waveform{std::vector<double>(100), 11025}, 8000), DataError);
}

TEST_CASE("manifest round trip and errors") {
  TempDir dir("manifest");
  MixtureRecord r;
  r.id = "00000_a_b";
  r.mix_path = "mix/00000_a_b.wav";
  r.source_paths = {"s1/x.wav", "s2/x.wav"};
  r.speaker_ids = {"a", "b"};
  r.snr_db = 2.5;
  r.duration_s = 4.0;
  MixtureRecord t = r;
  t.enroll_path = "enroll/00000_a2.wav";
  t.target_index = 1;
  write_manifest(dir / "m.jsonl", {r, t});
  const auto back = read_manifest(dir / "m.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(nlohmann::json(back[0]) == nlohmann::json(r));
  CHECK(nlohmann::json(back[1]) == nlohmann::json(t));
  CHECK(nlohmann::json(r)["enroll_path"].is_null());

  std::ofstream(dir / "bad.jsonl") << nlohmann::json(r).dump() << "\n{not json\n";
  try {
    read_manifest(dir / "bad.jsonl");
    FAIL("expected a data error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
  CHECK_THROWS_AS(read_manifest(dir / "missing.jsonl"), DataError);
  CHECK_THROWS_AS(CorpusIndex::scan(dir / "nowhere"), DataError);
  std::filesystem::create_directories(dir / "empty/spk");
  CHECK_THROWS_AS(CorpusIndex::scan(dir / "empty"), DataError);
  CHECK_THROWS_AS(parse_mix_mode("pit"), InvalidArgument);
  CHECK(parse_mix_mode(mix_mode_name(MixMode::kRemix)) == MixMode::kRemix);
  RecipeConfig bad;
  bad.pair_snr = {5.0, 0.0};
  CHECK_THROWS_AS(validate_recipe(bad), InvalidArgument);
}
