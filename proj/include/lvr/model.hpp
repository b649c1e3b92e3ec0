#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lvr/ops.hpp"
#include "lvr/tensor.hpp"

namespace lvr {

// Architecture hyperparameters.
struct ModelConfig {
  int num_groups = 3;
  int blocks_per_group = 16;
  // Smallest even width whose parameter count lands within 10% of 0.43M for
  // the 3 x 16 configuration (436,611 parameters).
  int base_width = 32;
  int in_channels = 3;
  int dw_expand = 2;
  int ffn_expand = 2;

  // Every violated constraint, not just the first.
  std::vector<std::string> problems() const;
  void validate() const;

  static ModelConfig reference() { return {}; }
  // Small configuration used for gradient checks and smoke training.
  static ModelConfig tiny() { return {1, 2, 8, 3, 2, 2}; }

  bool operator==(const ModelConfig&) const = default;
};

// Closed-form count of learnable scalars.
std::size_t param_count(const ModelConfig& config);

enum class ParamRole { conv_weight, conv_bias, norm_gain, norm_offset, residual_scale };

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  ParamRole role = ParamRole::conv_weight;
  std::size_t fan_in = 1;
  // Zeroed by the standard init so the network starts as the identity.
  bool zero_init = false;
};

template <typename T>
struct ConvVars {
  Var<T> weight;
  Var<T> bias;
};

template <typename T>
struct NafBlockVars {
  Var<T> ln1_gain, ln1_offset;
  ConvVars<T> expand1;    // 1x1, C -> dw_expand*C
  ConvVars<T> depthwise;  // 3x3, groups = dw_expand*C
  ConvVars<T> sca;        // 1x1 on pooled features, dw_expand*C/2 -> same
  ConvVars<T> project1;   // 1x1, dw_expand*C/2 -> C
  Var<T> ln2_gain, ln2_offset;
  ConvVars<T> expand2;   // 1x1, C -> ffn_expand*C
  ConvVars<T> project2;  // 1x1, ffn_expand*C/2 -> C
  Var<T> beta, gamma;    // 1 x C x 1 x 1 residual scales
};

template <typename T>
struct NafGroupVars {
  std::vector<NafBlockVars<T>> blocks;
  ConvVars<T> tail;  // 3x3, C -> C
};

template <typename T>
struct LamVars {
  ConvVars<T> fuse;  // 1x1, K*C -> C
};

template <typename T>
struct LvrnetVars {
  ConvVars<T> pre;  // 3x3, 3 -> C
  std::vector<NafGroupVars<T>> groups;
  LamVars<T> lam;
  ConvVars<T> post1;  // 3x3, C -> C
  ConvVars<T> post2;  // 3x3, C -> 3
  // Leaves in parameter order.
  std::vector<Var<T>> leaves;
};

// Splits channels in half and multiplies the halves.
template <typename T>
Var<T> simple_gate(Var<T> x);

// x * W(pool(x)), channel-wise.
template <typename T>
Var<T> simplified_channel_attention(Var<T> x, const ConvVars<T>& w);

// x * sigmoid(W2 relu(W1 pool(x))). Reference only; the model uses the
// simplified form.
template <typename T>
Var<T> channel_attention(Var<T> x, Var<T> w1, Var<T> w2);

template <typename T>
Var<T> naf_block_forward(Var<T> x, const NafBlockVars<T>& p);

template <typename T>
Var<T> naf_group_forward(Var<T> x, const NafGroupVars<T>& g);

// Level attention over K same-shaped feature maps. When `row_sums` is given
// it receives the row sums of every correlation matrix (for checking).
template <typename T>
Var<T> lam_forward(const std::vector<Var<T>>& features, const LamVars<T>& p,
                   std::vector<double>* row_sums = nullptr);

enum class InitScheme {
  // Fan-in uniform convs; zero residual scales, group tails and output conv.
  // The network is the identity map at this initialization.
  standard,
  // Every parameter random, including residual scales. For gradient checks.
  random,
};

template <typename T>
class Lvrnet {
 public:
  explicit Lvrnet(ModelConfig config);

  const ModelConfig& config() const noexcept { return config_; }
  std::vector<Parameter<T>>& parameters() noexcept { return params_; }
  const std::vector<Parameter<T>>& parameters() const noexcept { return params_; }
  // Sum of registered tensor sizes.
  std::size_t parameter_count() const;

  void init(std::uint64_t seed, InitScheme scheme = InitScheme::standard);

  // Registers every parameter as a leaf of `tape`.
  LvrnetVars<T> bind(Tape<T>& tape) const;
  Var<T> forward(Var<T> image, const LvrnetVars<T>& vars) const;

  // Forward pass with no gradient bookkeeping kept.
  Tensor<T> infer(const Tensor<T>& image) const;

  // Smallest image side the network accepts.
  static constexpr std::size_t min_image_side() { return 3; }

 private:
  ModelConfig config_;
  std::vector<Parameter<T>> params_;
};

// Same architecture and weights at another precision.
template <typename U, typename T>
Lvrnet<U> convert(const Lvrnet<T>& net) {
  Lvrnet<U> out(net.config());
  for (std::size_t i = 0; i < net.parameters().size(); ++i) {
    out.parameters()[i].value = net.parameters()[i].value.template cast<U>();
  }
  return out;
}

extern template class Lvrnet<float>;
extern template class Lvrnet<double>;

}  // namespace lvr
