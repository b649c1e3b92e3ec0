#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "lvr/ops.hpp"

namespace lvr {

struct LossWeights {
  double perceptual = 0.04;  // lambda1
  double edge = 1.0;         // lambda2
  double fft = 0.01;         // lambda3
  double epsilon_edge = 1e-3;

  std::vector<std::string> problems() const;

  // Letters L, P, E, F select terms; unselected weights become 0. The
  // reconstruction term cannot be disabled, so L is mandatory.
  static LossWeights from_mask(const std::string& mask, const LossWeights& base);
  static LossWeights from_mask(const std::string& mask);
  std::string mask() const;

  bool operator==(const LossWeights&) const = default;
};

// Frozen feature extractor for the perceptual term. Returns one tensor per
// level; the loss normalizes each level by its own w*h*c.
template <typename T>
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::vector<Var<T>> features(Var<T> image) const = 0;
};

// Passes the image through unchanged as a single level.
template <typename T>
class IdentityExtractor final : public FeatureExtractor<T> {
 public:
  std::vector<Var<T>> features(Var<T> image) const override { return {image}; }
};

// Three-stage random convolution pyramid, 3 -> 16 -> 32 -> 64 channels with
// stride 2 between stages and tanh in between. Weights are drawn once from
// the seed and never trained.
template <typename T>
class RandomConvExtractor final : public FeatureExtractor<T> {
 public:
  explicit RandomConvExtractor(std::uint64_t seed, std::vector<std::size_t> levels = {0, 1, 2});
  std::vector<Var<T>> features(Var<T> image) const override;

  const std::vector<std::size_t>& levels() const noexcept { return levels_; }

 private:
  struct Stage {
    Tensor<T> weight;
    Tensor<T> bias;
    std::size_t stride;
  };
  std::vector<Stage> stages_;
  std::vector<std::size_t> levels_;
};

template <typename T>
Var<T> recon_l1(Var<T> out, Var<T> gt);

template <typename T>
Var<T> perceptual_loss(Var<T> out, Var<T> gt, const FeatureExtractor<T>& fx);

// Discrete Laplacian [[0,1,0],[1,-4,1],[0,1,0]] per channel, replicate borders.
template <typename T>
Var<T> laplacian(Var<T> x);

template <typename T>
Var<T> edge_loss(Var<T> out, Var<T> gt, T epsilon);

template <typename T>
Var<T> fft_loss(Var<T> out, Var<T> gt);

template <typename T>
struct LossTerms {
  Var<T> total;
  Var<T> recon;
  Var<T> perceptual;
  Var<T> edge;
  Var<T> fft;
};

// Terms with zero weight are skipped and reported as exact zeros.
template <typename T>
LossTerms<T> total_loss(Var<T> out, Var<T> gt, const LossWeights& w, const FeatureExtractor<T>& fx);

}  // namespace lvr
