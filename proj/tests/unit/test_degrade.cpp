#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "lvr/csv.hpp"
#include "lvr/degrade.hpp"
#include "lvr/kernels.hpp"
#include "scenes.hpp"

using namespace lvr;
using lvr::testing::make_scene;

namespace {

double mean_of(const std::vector<float>& v) {
  double s = 0;
  for (float x : v) s += x;
  return s / static_cast<double>(v.size());
}

ImageBuffer fogged(const ImageBuffer& img, const DegradeRecord& rec) {
  return add_fog(img, FogParams{rec.fog_severity, Rng(rec.seed).derive(1).seed(), rec.airlight});
}

bool finite_unit(const ImageBuffer& img) {
  for (float v : img.pixels)
    if (!(v >= 0.f && v <= 1.f)) return false;
  return true;
}

}  // namespace

TEST_CASE("fog blend extremes") {
  const auto img = make_scene(16, 20, 1);
  const std::size_t n = img.height * img.width;
  CHECK(blend_fog(img, std::vector<float>(n, 1.f), 0.9f) == img);
  const auto flat = blend_fog(img, std::vector<float>(n, 0.f), 0.9f);
  for (float v : flat.pixels) CHECK(v == 0.9f);
  CHECK_THROWS(fog_profile(2));
  CHECK_THROWS(fog_profile(6));
  CHECK_THROWS(add_fog(img, FogParams{7, 1, 0.9f}));
}

TEST_CASE("fog transmission is smooth, bounded and thickens with severity") {
  for (std::uint64_t seed : {1, 2, 3, 4}) {
    double prev = 2;
    for (int sev : {3, 4, 5}) {
      const auto t = transmission_map(48, 64, FogParams{sev, seed, 0.9f});
      for (float v : t) CHECK((v > 0.f && v <= 1.f));
      const double m = mean_of(t);
      CHECK(m < prev);
      prev = m;
      double step = 0;
      for (std::size_t y = 0; y < 48; ++y)
        for (std::size_t x = 1; x < 64; ++x) step = std::max(step, std::abs(double(t[y * 64 + x]) - t[y * 64 + x - 1]));
      CHECK(step < 0.1);
    }
  }
}

TEST_CASE("fog brightens dark inputs") {
  ImageBuffer dark(32, 32, 0.1f);
  const auto out = add_fog(dark, FogParams{5, 9, 0.9f});
  CHECK(mean_of(out.pixels) > mean_of(dark.pixels));
  CHECK(finite_unit(out));
}

TEST_CASE("tone curve and its inverse") {
  CHECK(tone_curve(0.f) == 0.f);
  CHECK(tone_curve(1.f) == 1.f);
  CHECK(std::abs(inverse_tone_curve(0.f)) < 1e-6f);
  CHECK(std::abs(inverse_tone_curve(1.f) - 1.f) < 1e-6f);
  for (float x = 0; x <= 1.f; x += 0.01f) {
    CHECK(std::abs(tone_curve(inverse_tone_curve(x)) - x) < 1e-5f);
    CHECK(std::abs(tone_curve(x) - (3 * x * x - 2 * x * x * x)) < 1e-6f);
  }
}

TEST_CASE("color matrices are inverse and white preserving") {
  const auto& m = srgb_to_crgb();
  const auto& inv = crgb_to_srgb();
  for (int r = 0; r < 3; ++r) {
    CHECK(m[r][0] + m[r][1] + m[r][2] == doctest::Approx(1).epsilon(1e-12));
    for (int c = 0; c < 3; ++c) {
      double acc = 0;
      for (int k = 0; k < 3; ++k) acc += m[r][k] * inv[k][c];
      CHECK(acc == doctest::Approx(r == c ? 1.0 : 0.0).epsilon(1e-12).scale(1));
    }
  }
}

TEST_CASE("unprocess then isp is the identity without corruption or quantization") {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto img = make_scene(24, 24, seed);
    const auto rec = sample_record(seed, 0);
    LowLightParams p = rec.lowlight;
    p.quant_bits = 0;
    const auto back = isp(unprocess(img, p), p);
    double worst = 0;
    for (std::size_t i = 0; i < img.size(); ++i) worst = std::max(worst, double(std::abs(back.pixels[i] - img.pixels[i])));
    CHECK(worst < 1e-3);
  }

  LowLightParams plain;
  plain.identity_color = true;
  const auto img = make_scene(8, 8, 5);
  const auto raw = unprocess(img, plain);
  for (std::size_t i = 0; i < img.size(); ++i)
    CHECK(raw.pixels[i] == doctest::Approx(std::pow(inverse_tone_curve(img.pixels[i]), 2.2f)).epsilon(1e-5));
  ImageBuffer bw(1, 2);
  for (int c = 0; c < 3; ++c) bw.at(0, 1, c) = 1.f;
  const auto rbw = unprocess(bw, plain);
  for (int c = 0; c < 3; ++c) {
    CHECK(std::abs(rbw.pixels[c]) < 1e-6f);
    CHECK(std::abs(rbw.pixels[3 + c] - 1.f) < 1e-5f);
  }
}

TEST_CASE("corruption") {
  RawBuffer raw{4, 5, std::vector<float>(60, 0.3f)};
  LowLightParams id;
  CHECK(corrupt(raw, id, Rng(1)) == raw);

  const std::size_t h = 1000, w = 334;
  RawBuffer gray{h, w, std::vector<float>(h * w * 3, 0.5f)};
  LowLightParams p;
  p.exposure_scale = 0.8f;
  p.lambda_read = 1e-4f;
  const auto noisy = corrupt(gray, p, Rng(7));
  double m = 0, v = 0;
  for (float x : noisy.pixels) m += x - 0.4;
  m /= static_cast<double>(noisy.pixels.size());
  for (float x : noisy.pixels) v += (x - 0.4 - m) * (x - 0.4 - m);
  v /= static_cast<double>(noisy.pixels.size() - 1);
  CHECK(noisy.pixels.size() >= 1000000);
  CHECK(std::abs(v - 1e-4) < 0.05 * 1e-4);
  CHECK(std::abs(m) < 1e-4);

  LowLightParams shot;
  shot.exposure_scale = 0.2f;
  shot.lambda_shot = 1e-2f;
  const auto s = corrupt(gray, shot, Rng(8));
  double sv = 0;
  for (float x : s.pixels) sv += (x - 0.1) * (x - 0.1);
  sv /= static_cast<double>(s.pixels.size());
  CHECK(std::abs(sv - 1e-2 * 0.2 * 0.5) < 0.05 * 1e-3);
  CHECK(std::all_of(s.pixels.begin(), s.pixels.end(), [](float x) { return x >= 0.f; }));
}

TEST_CASE("quantization") {
  for (int k = 0; k <= 1024; k += 37) {
    const float x = static_cast<float>(k) / 1024.f;
    CHECK(quantize(x, 10) == x);
  }
  Rng r(3);
  for (int i = 0; i < 1000; ++i) {
    const float x = static_cast<float>(r.uniform());
    CHECK(std::abs(quantize(x, 10) - x) <= 1.f / 2048.f + 1e-7f);
  }
  CHECK(quantize(0.123f, 0) == 0.123f);
}

TEST_CASE("low light darkens") {
  ImageBuffer gray(32, 32, 0.5f);
  LowLightParams p;
  p.exposure_scale = 0.1f;
  p.gain_r = 2.f;
  p.gain_b = 1.8f;
  p.lambda_shot = 1e-3f;
  p.lambda_read = 1e-5f;
  const auto out = degrade_lowlight(gray, p, Rng(4));
  CHECK(mean_luminance(out) < mean_luminance(gray));
  CHECK(finite_unit(out));
}

TEST_CASE("sampled parameters respect their ranges") {
  for (std::size_t i = 0; i < 200; ++i) {
    const auto rec = sample_record(11, i);
    const auto& p = rec.lowlight;
    CHECK((rec.fog_severity >= 3 && rec.fog_severity <= 5));
    CHECK((p.exposure_scale >= 0.05f && p.exposure_scale <= 0.3f));
    CHECK((p.gain_r >= 1.5f && p.gain_r <= 2.5f));
    CHECK((p.gain_b >= 1.5f && p.gain_b <= 2.5f));
    CHECK((p.lambda_shot >= 1e-4f && p.lambda_shot <= 1e-2f));
    CHECK((p.lambda_read >= 1e-6f && p.lambda_read <= 1e-4f));
    CHECK(p.quant_bits == 10);
    CHECK(p.problems().empty());
  }
  SynthOptions five;
  five.severity = 5;
  CHECK(sample_record(11, 3, five).fog_severity == 5);
  LowLightParams bad;
  bad.exposure_scale = 0;
  bad.lambda_read = -1;
  CHECK(bad.problems().size() == 2);
}

TEST_CASE("synthesized pairs are deterministic, darkened and replayable") {
  for (std::size_t i = 0; i < 12; ++i) {
    const auto img = make_scene(32, 40, 100 + i);
    const auto a = synth_pair(img, 77, i);
    const auto b = synth_pair(img, 77, i);
    CHECK(a.degraded == b.degraded);
    CHECK(finite_unit(a.degraded));
    CHECK(mean_luminance(a.degraded) < mean_luminance(fogged(img, a.record)));

    const auto parsed = parse_manifest_row(manifest_row(a.record), a.record.airlight);
    CHECK(parsed.seed == a.record.seed);
    CHECK(apply_record(img, parsed) == a.degraded);
  }
  const auto img = make_scene(16, 16, 1);
  CHECK_FALSE(synth_pair(img, 77, 0).degraded == synth_pair(img, 77, 1).degraded);
  CHECK_FALSE(synth_pair(img, 77, 0).degraded == synth_pair(img, 78, 0).degraded);
  CHECK_THROWS(parse_manifest_row({"1", "2"}));
}

TEST_CASE("corpus synthesis is independent of thread count and run") {
  const auto dir = testing::scratch_dir("degrade_corpus");
  const auto inputs = testing::write_scenes(dir / "clean", 8, 24, 32, 5);
  std::vector<std::string> runs;
  for (int threads : {1, 3, 1}) {
    kernels::set_num_threads(threads);
    const auto out = dir / ("out" + std::to_string(runs.size()));
    const auto rep = synth_corpus(inputs, out, 42, SynthOptions{});
    CHECK(rep.errors.empty());
    CHECK(rep.records.size() == 8);
    runs.push_back(testing::corpus_bytes(out));
  }
  kernels::set_num_threads(0);
  CHECK(runs[0].size() > 1000);
  CHECK(runs[0] == runs[1]);
  CHECK(runs[0] == runs[2]);

  const auto table = csv::read(dir / "out0" / "manifest.csv");
  CHECK(csv::format_row(table.header) == kManifestHeader);
  REQUIRE(table.rows.size() == 8);
  for (const auto& row : table.rows) {
    const auto rec = parse_manifest_row(row);
    const auto replay = quantize8(apply_record(read_image(rec.source), rec));
    CHECK(replay == read_image(dir / "out0" / rec.degraded));
  }

  auto with_bad = inputs;
  with_bad.push_back(dir / "clean" / "missing.png");
  const auto rep = synth_corpus(with_bad, dir / "bad", 42, SynthOptions{});
  CHECK(rep.errors.size() == 1);
  CHECK(rep.errors[0].find("missing.png") != std::string::npos);
  CHECK(list_images(dir / "clean").size() == 8);
}
