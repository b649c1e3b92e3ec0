#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lvr/image.hpp"
#include "lvr/rng.hpp"

namespace lvr {

using Matrix3 = std::array<std::array<double, 3>, 3>;

// Linear sRGB -> camera RGB, rows normalized to sum to 1 so white maps to white.
const Matrix3& srgb_to_crgb();
const Matrix3& crgb_to_srgb();
Matrix3 invert(const Matrix3& m);

// Fog shape for one severity level.
struct FogProfile {
  int octaves;
  double density;  // optical depth scale; larger is thicker fog
  double decay;    // amplitude falloff per octave
};

// Throws std::invalid_argument unless severity is 3, 4 or 5.
FogProfile fog_profile(int severity);

struct FogParams {
  int severity = 3;
  std::uint64_t seed = 0;
  float airlight = 0.9f;
};

// Smooth multi-octave value-noise transmission in (0, 1], H*W row-major.
std::vector<float> transmission_map(std::size_t height, std::size_t width, const FogParams& p);

// out = t * img + (1 - t) * airlight.
ImageBuffer blend_fog(const ImageBuffer& img, const std::vector<float>& transmission, float airlight);
ImageBuffer add_fog(const ImageBuffer& img, const FogParams& p);

// Linear camera-space image; may leave [0, 1] before corruption clips it.
struct RawBuffer {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;

  bool operator==(const RawBuffer&) const = default;
};

struct LowLightParams {
  float exposure_scale = 1.0f;
  float gain_r = 1.0f;
  float gain_b = 1.0f;
  float lambda_shot = 0.0f;
  float lambda_read = 0.0f;
  int quant_bits = 10;  // 0 disables quantization
  float gamma = 2.2f;
  bool identity_color = false;  // skip the color matrix (testing)

  std::vector<std::string> problems() const;
};

float tone_curve(float x);
float inverse_tone_curve(float y);

RawBuffer unprocess(const ImageBuffer& img, const LowLightParams& p);
// x' = s*x + n,  n ~ N(0, lambda_shot*s*x + lambda_read); clipped to >= 0.
// Pixel i uses counter i of `rng`, so the result is schedule independent.
RawBuffer corrupt(const RawBuffer& raw, const LowLightParams& p, const Rng& rng);
float quantize(float x, int bits);
ImageBuffer isp(const RawBuffer& raw, const LowLightParams& p);
ImageBuffer degrade_lowlight(const ImageBuffer& img, const LowLightParams& p, const Rng& rng);

// Sampling ranges for per-image parameters.
struct SynthOptions {
  std::optional<int> severity;  // unset draws uniformly from {3, 4, 5}
  float airlight = 0.9f;
  double exposure_min = 0.05, exposure_max = 0.3;
  double gain_min = 1.5, gain_max = 2.5;
  double shot_min = 1e-4, shot_max = 1e-2;
  double read_min = 1e-6, read_max = 1e-4;
  int quant_bits = 10;
};

// Everything needed to reproduce one degraded image from its source.
struct DegradeRecord {
  std::size_t index = 0;
  std::string source;
  std::string degraded;
  int fog_severity = 3;
  float airlight = 0.9f;
  LowLightParams lowlight;
  std::uint64_t master_seed = 0;
  std::uint64_t seed = 0;
};

// Draws the per-image parameters from the stream derived for `index`.
DegradeRecord sample_record(std::uint64_t master_seed, std::size_t index, const SynthOptions& opts = {});
// Applies fog then low light exactly as described by the record.
ImageBuffer apply_record(const ImageBuffer& img, const DegradeRecord& rec);

struct SynthPair {
  ImageBuffer degraded;
  DegradeRecord record;
};
SynthPair synth_pair(const ImageBuffer& img, std::uint64_t master_seed, std::size_t index,
                     const SynthOptions& opts = {});

// manifest.csv schema.
inline constexpr const char* kManifestHeader =
    "index,source,degraded,fog_severity,exposure_scale,g_r,g_b,lambda_shot,lambda_read,quant_bits,seed";
std::vector<std::string> manifest_row(const DegradeRecord& rec);
// Parses a manifest row; fog airlight and master seed are not part of the row
// and are taken from the arguments.
DegradeRecord parse_manifest_row(const std::vector<std::string>& row, float airlight = 0.9f);

struct SynthReport {
  std::vector<DegradeRecord> records;
  std::vector<std::string> errors;  // one line per failed input
};

// Degrades every image of `inputs` (index = position) into out_dir/degraded
// and writes out_dir/manifest.csv. `resize` (height, width) is applied to the
// source before degradation when set.
SynthReport synth_corpus(const std::vector<std::filesystem::path>& inputs, const std::filesystem::path& out_dir,
                         std::uint64_t master_seed, const SynthOptions& opts,
                         std::optional<std::pair<std::size_t, std::size_t>> resize = std::nullopt);

// Image files (png/jpg/jpeg) in a directory, sorted by name.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

}  // namespace lvr
