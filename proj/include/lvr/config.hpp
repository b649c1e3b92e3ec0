#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lvr/losses.hpp"
#include "lvr/model.hpp"

namespace lvr {

// Invalid configuration; carries every problem found.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  std::vector<std::string> problems_;
};

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;

  bool operator==(const SplitFractions&) const = default;
};

struct TrainConfig {
  // [run]
  std::filesystem::path manifest;
  std::filesystem::path output_dir = "run";
  std::uint64_t seed = 0;
  int threads = 0;  // 0 keeps the OpenMP default

  // [model]
  ModelConfig model = ModelConfig::reference();

  // [train]
  std::size_t batch_size = 2;
  int epochs = 10;
  long long max_steps = -1;  // -1: no cap; 0 writes the initial checkpoint only
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double grad_clip = 0;  // global-norm clip; 0 is off
  std::size_t image_height = 64;
  std::size_t image_width = 64;
  SplitFractions split;

  // [loss]
  LossWeights loss;
  std::uint64_t extractor_seed = 7;

  // Every violated constraint. With `check_files`, also the manifest path.
  std::vector<std::string> problems(bool check_files = false) const;

  // True when two configs would produce the same optimization trajectory
  // (everything except run length, output location and threading).
  bool same_trajectory(const TrainConfig& other) const;

  bool operator==(const TrainConfig&) const = default;
};

using ConfigOverride = std::pair<std::string, std::string>;  // "section.key", value

// Parses the sectioned key=value text. Unknown sections or keys and
// malformed values are all reported in one ConfigError. Relative paths are
// resolved against `base_dir`.
TrainConfig parse_config(const std::string& text, const std::vector<ConfigOverride>& overrides = {},
                         const std::filesystem::path& base_dir = std::filesystem::current_path());
TrainConfig load_config(const std::filesystem::path& path, const std::vector<ConfigOverride>& overrides = {});

// Fully resolved text form; parse_config(to_ini(c)) == c when c holds
// absolute paths.
std::string to_ini(const TrainConfig& config);

}  // namespace lvr
