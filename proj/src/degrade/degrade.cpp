#include "lvr/degrade.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <cstdio>
#include <stdexcept>

#include "lvr/csv.hpp"
#include "lvr/kernels.hpp"

namespace lvr {

namespace {

Matrix3 multiply(const Matrix3& a, const Matrix3& b) {
  Matrix3 c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) c[i][j] += a[i][k] * b[k][j];
  return c;
}

Matrix3 build_srgb_to_crgb() {
  // Linear sRGB (D65) to CIE XYZ.
  const Matrix3 rgb_to_xyz{{{0.4124564, 0.3575761, 0.1804375},
                            {0.2126729, 0.7151522, 0.0721750},
                            {0.0193339, 0.1191920, 0.9503041}}};
  // XYZ to camera space of a Canon 5D Mark II class sensor, as used by the
  // common unprocessing recipe.
  const Matrix3 xyz_to_cam{{{1.0234, -0.2969, -0.2266}, {-0.5625, 1.6328, -0.0469}, {-0.0703, 0.2188, 0.6406}}};
  Matrix3 m = multiply(xyz_to_cam, rgb_to_xyz);
  for (auto& row : m) {
    const double s = row[0] + row[1] + row[2];
    for (auto& v : row) v /= s;
  }
  return m;
}

void apply_matrix(const Matrix3& m, float* px) {
  const double r = px[0], g = px[1], b = px[2];
  px[0] = static_cast<float>(m[0][0] * r + m[0][1] * g + m[0][2] * b);
  px[1] = static_cast<float>(m[1][0] * r + m[1][1] * g + m[1][2] * b);
  px[2] = static_cast<float>(m[2][0] * r + m[2][1] * g + m[2][2] * b);
}

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

// Value noise on a lattice with `cells` cells across the longer side.
double value_noise(const Rng& rng, int octave, double fy, double fx) {
  const double y0f = std::floor(fy), x0f = std::floor(fx);
  const auto y0 = static_cast<std::uint64_t>(y0f), x0 = static_cast<std::uint64_t>(x0f);
  auto lattice = [&](std::uint64_t iy, std::uint64_t ix) {
    const std::uint64_t key = (static_cast<std::uint64_t>(octave) << 48) ^ (iy << 24) ^ ix;
    return rng.uniform_at(key);
  };
  const double ty = smooth(fy - y0f), tx = smooth(fx - x0f);
  const double top = lattice(y0, x0) * (1 - tx) + lattice(y0, x0 + 1) * tx;
  const double bot = lattice(y0 + 1, x0) * (1 - tx) + lattice(y0 + 1, x0 + 1) * tx;
  return top * (1 - ty) + bot * ty;
}

float log_uniform(Rng& rng, double lo, double hi) {
  return static_cast<float>(std::exp(rng.uniform(std::log(lo), std::log(hi))));
}

}  // namespace

const Matrix3& srgb_to_crgb() {
  static const Matrix3 m = build_srgb_to_crgb();
  return m;
}

const Matrix3& crgb_to_srgb() {
  static const Matrix3 m = invert(srgb_to_crgb());
  return m;
}

Matrix3 invert(const Matrix3& m) {
  const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                     m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                     m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  if (std::abs(det) < 1e-12) throw std::invalid_argument("invert: singular 3x3 matrix");
  Matrix3 r;
  r[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
  r[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
  r[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
  r[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
  r[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
  r[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
  r[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
  r[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
  r[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
  return r;
}

FogProfile fog_profile(int severity) {
  switch (severity) {
    case 3: return {4, 0.5, 0.5};
    case 4: return {5, 0.8, 0.55};
    case 5: return {6, 1.2, 0.6};
    default:
      throw std::invalid_argument("fog severity must be 3, 4 or 5 (got " + std::to_string(severity) + ")");
  }
}

std::vector<float> transmission_map(std::size_t height, std::size_t width, const FogParams& p) {
  const FogProfile prof = fog_profile(p.severity);
  const Rng rng(p.seed);
  const double extent = static_cast<double>(std::max(height, width));
  double norm = 0;
  for (int o = 0; o < prof.octaves; ++o) norm += std::pow(prof.decay, o);
  std::vector<float> t(height * width);
  const int threads = kernels::num_threads();

#pragma omp parallel for schedule(static) num_threads(threads)
  for (std::ptrdiff_t y = 0; y < static_cast<std::ptrdiff_t>(height); ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      double n = 0;
      for (int o = 0; o < prof.octaves; ++o) {
        const double cells = 2.0 * std::pow(2.0, o);
        const double fy = (static_cast<double>(y) + 0.5) / extent * cells;
        const double fx = (static_cast<double>(x) + 0.5) / extent * cells;
        n += std::pow(prof.decay, o) * value_noise(rng, o, fy, fx);
      }
      n /= norm;  // in [0, 1]
      t[y * width + x] = static_cast<float>(std::exp(-prof.density * (0.5 + n)));
    }
  }
  return t;
}

ImageBuffer blend_fog(const ImageBuffer& img, const std::vector<float>& transmission, float airlight) {
  if (transmission.size() != img.height * img.width) {
    throw std::invalid_argument("blend_fog: transmission map size does not match image");
  }
  ImageBuffer out = img;
  for (std::size_t i = 0; i < transmission.size(); ++i) {
    const float t = transmission[i];
    for (std::size_t c = 0; c < 3; ++c) {
      float& v = out.pixels[i * 3 + c];
      v = std::clamp(t * v + (1.0f - t) * airlight, 0.0f, 1.0f);
    }
  }
  return out;
}

ImageBuffer add_fog(const ImageBuffer& img, const FogParams& p) {
  return blend_fog(img, transmission_map(img.height, img.width, p), p.airlight);
}

std::vector<std::string> LowLightParams::problems() const {
  std::vector<std::string> out;
  if (!(exposure_scale > 0.0f && exposure_scale <= 1.0f)) out.push_back("exposure_scale must be in (0, 1]");
  if (!(gain_r > 0.0f) || !(gain_b > 0.0f)) out.push_back("white-balance gains must be positive");
  if (!(lambda_shot >= 0.0f) || !(lambda_read >= 0.0f)) out.push_back("noise coefficients must be non-negative");
  if (quant_bits < 0 || quant_bits > 24) out.push_back("quant_bits must be in [0, 24]");
  if (!(gamma > 0.0f)) out.push_back("gamma must be positive");
  return out;
}

float tone_curve(float x) {
  const float c = std::clamp(x, 0.0f, 1.0f);
  return 3.0f * c * c - 2.0f * c * c * c;
}

float inverse_tone_curve(float y) {
  const double c = std::clamp(static_cast<double>(y), 0.0, 1.0);
  return static_cast<float>(0.5 - std::sin(std::asin(1.0 - 2.0 * c) / 3.0));
}

RawBuffer unprocess(const ImageBuffer& img, const LowLightParams& p) {
  RawBuffer raw{img.height, img.width, std::vector<float>(img.pixels.size())};
  const double expo = p.gamma;
  const std::size_t n = img.height * img.width;
  for (std::size_t i = 0; i < n; ++i) {
    float* px = raw.pixels.data() + i * 3;
    for (std::size_t c = 0; c < 3; ++c) {
      const double lin = inverse_tone_curve(img.pixels[i * 3 + c]);
      px[c] = static_cast<float>(std::pow(std::max(lin, 0.0), expo));
    }
    if (!p.identity_color) apply_matrix(srgb_to_crgb(), px);
    px[0] /= p.gain_r;
    px[2] /= p.gain_b;
  }
  return raw;
}

RawBuffer corrupt(const RawBuffer& raw, const LowLightParams& p, const Rng& rng) {
  RawBuffer out = raw;
  const std::size_t n = raw.pixels.size();
  const double s = p.exposure_scale;
  const int threads = kernels::num_threads();

#pragma omp parallel for schedule(static) num_threads(threads)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    const double signal = s * raw.pixels[i];
    const double var = p.lambda_shot * std::max(signal, 0.0) + p.lambda_read;
    double v = signal;
    if (var > 0) v += std::sqrt(var) * rng.normal_at(static_cast<std::uint64_t>(i));
    out.pixels[i] = static_cast<float>(std::max(v, 0.0));
  }
  return out;
}

float quantize(float x, int bits) {
  if (bits <= 0) return x;
  const double levels = std::ldexp(1.0, bits);
  return static_cast<float>(std::round(static_cast<double>(x) * levels) / levels);
}

ImageBuffer isp(const RawBuffer& raw, const LowLightParams& p) {
  ImageBuffer img(raw.height, raw.width);
  const double inv_gamma = 1.0 / p.gamma;
  const std::size_t n = raw.height * raw.width;
  for (std::size_t i = 0; i < n; ++i) {
    float px[3];
    for (std::size_t c = 0; c < 3; ++c) px[c] = quantize(raw.pixels[i * 3 + c], p.quant_bits);
    px[0] *= p.gain_r;
    px[2] *= p.gain_b;
    if (!p.identity_color) apply_matrix(crgb_to_srgb(), px);
    for (std::size_t c = 0; c < 3; ++c) {
      const double lin = std::clamp(static_cast<double>(px[c]), 0.0, 1.0);
      img.pixels[i * 3 + c] = tone_curve(static_cast<float>(std::pow(lin, inv_gamma)));
    }
  }
  return img;
}

ImageBuffer degrade_lowlight(const ImageBuffer& img, const LowLightParams& p, const Rng& rng) {
  return isp(corrupt(unprocess(img, p), p, rng), p);
}

DegradeRecord sample_record(std::uint64_t master_seed, std::size_t index, const SynthOptions& opts) {
  DegradeRecord rec;
  rec.index = index;
  rec.master_seed = master_seed;
  rec.seed = Rng(master_seed).derive(index).seed();
  Rng rng = Rng(rec.seed).derive(0);
  rec.fog_severity = opts.severity ? *opts.severity : 3 + static_cast<int>(rng.below(3));
  fog_profile(rec.fog_severity);
  rec.airlight = opts.airlight;
  LowLightParams& p = rec.lowlight;
  p.exposure_scale = static_cast<float>(rng.uniform(opts.exposure_min, opts.exposure_max));
  p.gain_r = static_cast<float>(rng.uniform(opts.gain_min, opts.gain_max));
  p.gain_b = static_cast<float>(rng.uniform(opts.gain_min, opts.gain_max));
  p.lambda_shot = log_uniform(rng, opts.shot_min, opts.shot_max);
  p.lambda_read = log_uniform(rng, opts.read_min, opts.read_max);
  p.quant_bits = opts.quant_bits;
  return rec;
}

ImageBuffer apply_record(const ImageBuffer& img, const DegradeRecord& rec) {
  const Rng base(rec.seed);
  const FogParams fog{rec.fog_severity, base.derive(1).seed(), rec.airlight};
  const ImageBuffer foggy = add_fog(img, fog);
  return degrade_lowlight(foggy, rec.lowlight, base.derive(2));
}

SynthPair synth_pair(const ImageBuffer& img, std::uint64_t master_seed, std::size_t index, const SynthOptions& opts) {
  DegradeRecord rec = sample_record(master_seed, index, opts);
  return {apply_record(img, rec), std::move(rec)};
}

std::vector<std::string> manifest_row(const DegradeRecord& r) {
  const auto& p = r.lowlight;
  return {std::to_string(r.index),
          r.source,
          r.degraded,
          std::to_string(r.fog_severity),
          csv::format_number(p.exposure_scale),
          csv::format_number(p.gain_r),
          csv::format_number(p.gain_b),
          csv::format_number(p.lambda_shot),
          csv::format_number(p.lambda_read),
          std::to_string(p.quant_bits),
          std::to_string(r.seed)};
}

namespace {

const char* const kManifestColumns[] = {"index",       "source",     "degraded",   "fog_severity",
                                        "exposure_scale", "g_r",   "g_b",        "lambda_shot",
                                        "lambda_read", "quant_bits", "seed"};

[[noreturn]] void bad_field(std::size_t i, const std::string& v) {
  throw std::runtime_error(std::string("field ") + kManifestColumns[i] + ": cannot parse '" + v + "'");
}

template <typename I>
I parse_integer(const std::vector<std::string>& row, std::size_t i) {
  I out{};
  const std::string& v = row[i];
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size() || v.empty()) bad_field(i, v);
  return out;
}

float parse_float(const std::vector<std::string>& row, std::size_t i) {
  const std::string& v = row[i];
  char* end = nullptr;
  errno = 0;
  const float out = std::strtof(v.c_str(), &end);
  if (v.empty() || errno != 0 || end != v.c_str() + v.size() || !std::isfinite(out)) bad_field(i, v);
  return out;
}

}  // namespace

DegradeRecord parse_manifest_row(const std::vector<std::string>& row, float airlight) {
  if (row.size() != 11) {
    throw std::runtime_error("manifest row has " + std::to_string(row.size()) + " fields, expected 11");
  }
  DegradeRecord r;
  r.index = parse_integer<std::size_t>(row, 0);
  r.source = row[1];
  r.degraded = row[2];
  r.fog_severity = parse_integer<int>(row, 3);
  r.airlight = airlight;
  r.lowlight.exposure_scale = parse_float(row, 4);
  r.lowlight.gain_r = parse_float(row, 5);
  r.lowlight.gain_b = parse_float(row, 6);
  r.lowlight.lambda_shot = parse_float(row, 7);
  r.lowlight.lambda_read = parse_float(row, 8);
  r.lowlight.quant_bits = parse_integer<int>(row, 9);
  r.seed = parse_integer<std::uint64_t>(row, 10);
  return r;
}

std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error(dir.string() + ": not a directory");
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

SynthReport synth_corpus(const std::vector<std::filesystem::path>& inputs, const std::filesystem::path& out_dir,
                         std::uint64_t master_seed, const SynthOptions& opts,
                         std::optional<std::pair<std::size_t, std::size_t>> resize) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "degraded");
  const std::size_t n = inputs.size();
  std::vector<std::optional<DegradeRecord>> records(n);
  std::vector<std::string> errors(n);
  const int threads = kernels::num_threads();

  // Per-image work is independent; the manifest is written once afterwards.
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    try {
      ImageBuffer img = read_image(inputs[i]);
      if (resize) img = resize_bilinear(img, resize->first, resize->second);
      SynthPair pair = synth_pair(img, master_seed, static_cast<std::size_t>(i), opts);
      char name[32];
      std::snprintf(name, sizeof name, "%05zu.png", static_cast<std::size_t>(i));
      pair.record.source = fs::absolute(inputs[i]).lexically_normal().string();
      pair.record.degraded = (fs::path("degraded") / name).string();
      write_png(pair.degraded, out_dir / pair.record.degraded);
      records[i] = std::move(pair.record);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }

  SynthReport report;
  csv::Table manifest;
  manifest.header = csv::parse_row(kManifestHeader);
  for (std::size_t i = 0; i < n; ++i) {
    if (records[i]) {
      manifest.rows.push_back(manifest_row(*records[i]));
      report.records.push_back(std::move(*records[i]));
    } else {
      report.errors.push_back(inputs[i].string() + ": " + errors[i]);
    }
  }
  csv::write(out_dir / "manifest.csv", manifest);
  return report;
}

}  // namespace lvr
