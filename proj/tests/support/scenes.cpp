#include "scenes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "lvr/csv.hpp"

#include "lvr/rng.hpp"

namespace lvr::testing {

ImageBuffer make_scene(std::size_t height, std::size_t width, std::uint64_t seed) {
  Rng rng(seed);
  ImageBuffer img(height, width);
  float top[3], bottom[3];
  for (int c = 0; c < 3; ++c) {
    top[c] = static_cast<float>(rng.uniform(0.3, 0.9));
    bottom[c] = static_cast<float>(rng.uniform(0.1, 0.7));
  }
  for (std::size_t y = 0; y < height; ++y) {
    const float t = static_cast<float>(y) / static_cast<float>(std::max<std::size_t>(height - 1, 1));
    for (std::size_t x = 0; x < width; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = top[c] * (1 - t) + bottom[c] * t;
  }
  const int shapes = 3 + static_cast<int>(rng.below(4));
  for (int s = 0; s < shapes; ++s) {
    const double cy = rng.uniform(0, static_cast<double>(height));
    const double cx = rng.uniform(0, static_cast<double>(width));
    const double r = rng.uniform(0.08, 0.3) * static_cast<double>(std::min(height, width));
    const bool disc = rng.uniform() < 0.5;
    float color[3];
    for (auto& v : color) v = static_cast<float>(rng.uniform(0.05, 0.95));
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x) {
        const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
        const bool inside = disc ? dy * dy + dx * dx < r * r : std::abs(dy) < r && std::abs(dx) < 0.6 * r;
        if (inside)
          for (int c = 0; c < 3; ++c) img.at(y, x, c) = color[c];
      }
  }
  const double fy = rng.uniform(0.1, 0.6), fx = rng.uniform(0.1, 0.6), amp = rng.uniform(0.01, 0.05);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      const double tex = amp * std::sin(fy * static_cast<double>(y)) * std::sin(fx * static_cast<double>(x));
      for (int c = 0; c < 3; ++c) {
        float& v = img.at(y, x, c);
        v = std::clamp(static_cast<float>(v + tex), 0.05f, 0.95f);
      }
    }
  return img;
}

std::vector<std::filesystem::path> write_scenes(const std::filesystem::path& dir, std::size_t count,
                                                std::size_t height, std::size_t width, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  const Rng root(seed);
  std::vector<std::filesystem::path> paths;
  for (std::size_t i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "scene_%03zu.png", i);
    paths.push_back(dir / name);
    write_png(make_scene(height, width, root.derive(i).seed()), paths.back());
  }
  return paths;
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("lvr_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string corpus_bytes(const std::filesystem::path& out_dir) {
  const auto manifest = out_dir / "manifest.csv";
  std::string all = read_bytes(manifest);
  const auto table = csv::read(manifest);
  const std::size_t col = table.column("degraded");
  for (const auto& row : table.rows) all += read_bytes(out_dir / row.at(col));
  return all;
}

}  // namespace lvr::testing
