#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lvr/config.hpp"
#include "lvr/degrade.hpp"

namespace lvr {

struct ManifestEntry {
  DegradeRecord record;
  std::filesystem::path source;    // clean image
  std::filesystem::path degraded;  // resolved against the manifest directory
  std::size_t line = 0;            // 1-based line in manifest.csv
};

struct Manifest {
  std::filesystem::path path;
  std::vector<ManifestEntry> entries;
  std::vector<std::string> warnings;  // rows skipped, with line numbers
};

// Malformed rows are skipped with a warning; a missing file or header
// column throws.
Manifest load_manifest(const std::filesystem::path& path, float airlight = 0.9f);

struct ManifestSplits {
  std::vector<ManifestEntry> train;
  std::vector<ManifestEntry> val;
  std::vector<ManifestEntry> test;
};

// Seeded shuffle, then consecutive slices of round(n * train) and
// round(n * val) rows; test takes the rest. A split with a positive
// fraction that ends up empty is rejected.
ManifestSplits split_manifest(const std::vector<ManifestEntry>& entries, const SplitFractions& fractions,
                              std::uint64_t seed);

// Throws std::logic_error when an image path appears in two splits.
void check_disjoint(const ManifestSplits& splits);

// "train", "val", "test" or "all".
std::vector<ManifestEntry> select_split(const ManifestSplits& splits, const std::string& name);

}  // namespace lvr
