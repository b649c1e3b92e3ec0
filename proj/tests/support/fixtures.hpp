#pragma once

#include <filesystem>

#include "lvr/config.hpp"
#include "lvr/degrade.hpp"
#include "scenes.hpp"

namespace lvr::testing {

// Clean scenes under dir/clean and their degraded pairs under dir/synth.
// Returns the manifest path.
inline std::filesystem::path make_corpus(const std::filesystem::path& dir, std::size_t count, std::size_t height,
                                         std::size_t width, std::uint64_t seed) {
  const auto inputs = write_scenes(dir / "clean", count, height, width, seed);
  synth_corpus(inputs, dir / "synth", seed, SynthOptions{});
  return dir / "synth" / "manifest.csv";
}

// Tiny model on small crops: fast enough for unit tests.
inline TrainConfig small_config(const std::filesystem::path& manifest, const std::filesystem::path& out) {
  TrainConfig c;
  c.manifest = manifest;
  c.output_dir = out;
  c.seed = 3;
  c.model = ModelConfig::tiny();
  c.batch_size = 2;
  c.epochs = 2;
  c.image_height = 16;
  c.image_width = 16;
  return c;
}

}  // namespace lvr::testing
