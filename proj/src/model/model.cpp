#include "lvr/model.hpp"

#include <cmath>
#include <stdexcept>

#include "lvr/rng.hpp"

namespace lvr {

std::vector<std::string> ModelConfig::problems() const {
  std::vector<std::string> out;
  if (num_groups < 1) out.push_back("num_groups must be >= 1 (got " + std::to_string(num_groups) + ")");
  if (blocks_per_group < 1) {
    out.push_back("blocks_per_group must be >= 1 (got " + std::to_string(blocks_per_group) + ")");
  }
  if (base_width < 2 || base_width % 2) {
    out.push_back("base_width must be a positive even number (got " + std::to_string(base_width) + ")");
  }
  if (in_channels != 3) out.push_back("in_channels must be 3 (got " + std::to_string(in_channels) + ")");
  if (dw_expand < 1) out.push_back("dw_expand must be >= 1 (got " + std::to_string(dw_expand) + ")");
  if (ffn_expand < 1) out.push_back("ffn_expand must be >= 1 (got " + std::to_string(ffn_expand) + ")");
  if (base_width > 0 && dw_expand > 0 && (dw_expand * base_width) % 2) {
    out.push_back("dw_expand * base_width must be even for SimpleGate");
  }
  if (base_width > 0 && ffn_expand > 0 && (ffn_expand * base_width) % 2) {
    out.push_back("ffn_expand * base_width must be even for SimpleGate");
  }
  return out;
}

void ModelConfig::validate() const {
  const auto p = problems();
  if (p.empty()) return;
  std::string msg = "invalid model config:";
  for (const auto& s : p) msg += "\n  " + s;
  throw std::invalid_argument(msg);
}

std::size_t param_count(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t c = cfg.base_width;
  const std::size_t k = cfg.num_groups;
  const std::size_t dw = cfg.dw_expand * c;
  const std::size_t ffn = cfg.ffn_expand * c;
  auto conv = [](std::size_t in, std::size_t out, std::size_t ks) { return in * out * ks * ks + out; };
  const std::size_t block = 4 * c                           // two layer norms
                            + conv(c, dw, 1)                // expand
                            + dw * 9 + dw                   // depthwise 3x3
                            + conv(dw / 2, dw / 2, 1)       // channel attention
                            + conv(dw / 2, c, 1)            // project
                            + conv(c, ffn, 1) + conv(ffn / 2, c, 1) + 2 * c;  // ffn and residual scales
  const std::size_t group = cfg.blocks_per_group * block + conv(c, c, 3);
  return conv(3, c, 3) + k * group + conv(k * c, c, 1) + conv(c, c, 3) + conv(c, 3, 3);
}

template <typename T>
Var<T> simple_gate(Var<T> x) {
  auto [a, b] = ops::split_channels_in_two(x);
  return ops::mul(a, b);
}

template <typename T>
Var<T> simplified_channel_attention(Var<T> x, const ConvVars<T>& w) {
  Var<T> s = ops::conv2d(ops::global_avg_pool(x), w.weight, std::optional<Var<T>>(w.bias));
  return ops::channel_scale(x, s);
}

template <typename T>
Var<T> channel_attention(Var<T> x, Var<T> w1, Var<T> w2) {
  Var<T> hidden = ops::relu(ops::conv2d<T>(ops::global_avg_pool(x), w1, std::nullopt));
  Var<T> s = ops::sigmoid(ops::conv2d<T>(hidden, w2, std::nullopt));
  return ops::channel_scale(x, s);
}

namespace {

template <typename T>
Var<T> conv(Var<T> x, const ConvVars<T>& c, std::size_t padding = 0, std::size_t groups = 1) {
  return ops::conv2d(x, c.weight, std::optional<Var<T>>(c.bias), 1, padding, groups);
}

}  // namespace

template <typename T>
Var<T> naf_block_forward(Var<T> x, const NafBlockVars<T>& p) {
  const std::size_t c = x.shape().at(1);
  if (p.beta.value().size() != c) {
    throw std::invalid_argument("naf_block_forward: input has " + std::to_string(c) +
                                " channels but block expects " + std::to_string(p.beta.value().size()));
  }
  Var<T> h = ops::layer_norm(x, p.ln1_gain, p.ln1_offset);
  h = conv(h, p.expand1);
  h = conv(h, p.depthwise, 1, h.shape()[1]);
  h = simple_gate(h);
  h = simplified_channel_attention(h, p.sca);
  h = conv(h, p.project1);
  Var<T> y = ops::add(x, ops::channel_scale(h, p.beta));

  Var<T> f = ops::layer_norm(y, p.ln2_gain, p.ln2_offset);
  f = conv(f, p.expand2);
  f = simple_gate(f);
  f = conv(f, p.project2);
  return ops::add(y, ops::channel_scale(f, p.gamma));
}

template <typename T>
Var<T> naf_group_forward(Var<T> x, const NafGroupVars<T>& g) {
  if (g.blocks.empty()) throw std::invalid_argument("naf_group_forward: group has no blocks");
  Var<T> h = x;
  for (const auto& b : g.blocks) h = naf_block_forward(h, b);
  return ops::add(x, conv(h, g.tail, 1));
}

template <typename T>
Var<T> lam_forward(const std::vector<Var<T>>& features, const LamVars<T>& p, std::vector<double>* row_sums) {
  if (features.empty()) throw std::invalid_argument("lam_forward: no feature maps");
  const Shape& s = features[0].shape();
  require_rank(s, 4, "lam_forward");
  for (std::size_t k = 1; k < features.size(); ++k) {
    if (features[k].shape() != s) {
      throw std::invalid_argument("lam_forward: feature " + std::to_string(k) + " has shape " +
                                  shape_str(features[k].shape()) + ", expected " + shape_str(s));
    }
  }
  const std::size_t n = s[0], c = s[1], h = s[2], w = s[3], levels = features.size();
  Var<T> stacked = ops::concat_channels(features);                      // N x KC x H x W
  Var<T> rows = ops::reshape(stacked, {n, levels, c * h * w});           // N x K x CHW
  Var<T> corr = ops::matmul(rows, ops::transpose(rows));                 // N x K x K
  Var<T> weights = ops::softmax_rows(corr);
  if (row_sums) {
    const Tensor<T>& m = weights.value();
    for (std::size_t r = 0; r < n * levels; ++r) {
      double acc = 0;
      for (std::size_t j = 0; j < levels; ++j) acc += m[r * levels + j];
      row_sums->push_back(acc);
    }
  }
  Var<T> attended = ops::matmul(weights, rows);                          // N x K x CHW
  Var<T> fused_in = ops::reshape(ops::add(rows, attended), {n, levels * c, h, w});
  return conv(fused_in, p.fuse);
}

namespace {

// One traversal defines both parameter registration and binding, so names,
// shapes and order cannot drift apart.
template <typename T, typename Take>
LvrnetVars<T> assemble(const ModelConfig& cfg, Take&& take) {
  const std::size_t c = cfg.base_width;
  const std::size_t dw = cfg.dw_expand * c;
  const std::size_t ffn = cfg.ffn_expand * c;
  auto conv_params = [&](const std::string& name, std::size_t out, std::size_t in, std::size_t k, bool zero) {
    const std::size_t fan_in = in * k * k;
    ConvVars<T> cv;
    cv.weight = take(name + ".weight", Shape{out, in, k, k}, ParamRole::conv_weight, fan_in, zero);
    cv.bias = take(name + ".bias", Shape{out}, ParamRole::conv_bias, fan_in, zero);
    return cv;
  };
  auto norm = [&](const std::string& name, Var<T>& gain, Var<T>& offset) {
    gain = take(name + ".gain", Shape{c}, ParamRole::norm_gain, c, false);
    offset = take(name + ".offset", Shape{c}, ParamRole::norm_offset, c, false);
  };

  LvrnetVars<T> v;
  v.pre = conv_params("pre", c, 3, 3, false);
  for (int g = 0; g < cfg.num_groups; ++g) {
    const std::string gname = "groups." + std::to_string(g);
    NafGroupVars<T> group;
    for (int b = 0; b < cfg.blocks_per_group; ++b) {
      const std::string bname = gname + ".blocks." + std::to_string(b);
      NafBlockVars<T> blk;
      norm(bname + ".norm1", blk.ln1_gain, blk.ln1_offset);
      blk.expand1 = conv_params(bname + ".expand1", dw, c, 1, false);
      blk.depthwise = conv_params(bname + ".depthwise", dw, 1, 3, false);
      blk.sca = conv_params(bname + ".sca", dw / 2, dw / 2, 1, false);
      blk.project1 = conv_params(bname + ".project1", c, dw / 2, 1, false);
      norm(bname + ".norm2", blk.ln2_gain, blk.ln2_offset);
      blk.expand2 = conv_params(bname + ".expand2", ffn, c, 1, false);
      blk.project2 = conv_params(bname + ".project2", c, ffn / 2, 1, false);
      blk.beta = take(bname + ".beta", Shape{1, c, 1, 1}, ParamRole::residual_scale, c, true);
      blk.gamma = take(bname + ".gamma", Shape{1, c, 1, 1}, ParamRole::residual_scale, c, true);
      group.blocks.push_back(std::move(blk));
    }
    group.tail = conv_params(gname + ".tail", c, c, 3, true);
    v.groups.push_back(std::move(group));
  }
  v.lam.fuse = conv_params("lam.fuse", c, cfg.num_groups * c, 1, false);
  v.post1 = conv_params("post.0", c, c, 3, false);
  v.post2 = conv_params("post.1", 3, c, 3, true);
  return v;
}

}  // namespace

template <typename T>
Lvrnet<T>::Lvrnet(ModelConfig config) : config_(config) {
  config_.validate();
  assemble<T>(config_, [this](const std::string& name, Shape shape, ParamRole role, std::size_t fan_in, bool zero) {
    const T fill = role == ParamRole::norm_gain ? T(1) : T(0);
    params_.push_back(Parameter<T>{name, Tensor<T>(std::move(shape), fill), role, fan_in, zero});
    return Var<T>{};
  });
}

template <typename T>
std::size_t Lvrnet<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <typename T>
void Lvrnet<T>::init(std::uint64_t seed, InitScheme scheme) {
  const Rng root(seed);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    Rng rng = root.derive(i);
    const double bound = 1.0 / std::sqrt(static_cast<double>(p.fan_in));
    auto uniform_fill = [&](double lo, double hi) {
      for (auto& v : p.value.data()) v = static_cast<T>(rng.uniform(lo, hi));
    };
    if (scheme == InitScheme::random) {
      switch (p.role) {
        case ParamRole::norm_gain: uniform_fill(0.5, 1.5); break;
        case ParamRole::norm_offset: uniform_fill(-0.2, 0.2); break;
        case ParamRole::residual_scale: uniform_fill(-0.5, 0.5); break;
        default: uniform_fill(-bound, bound); break;
      }
      continue;
    }
    switch (p.role) {
      case ParamRole::norm_gain: p.value.fill(T(1)); break;
      case ParamRole::norm_offset:
      case ParamRole::residual_scale: p.value.fill(T(0)); break;
      default:
        if (p.zero_init) {
          p.value.fill(T(0));
        } else {
          uniform_fill(-bound, bound);
        }
    }
  }
}

template <typename T>
LvrnetVars<T> Lvrnet<T>::bind(Tape<T>& tape) const {
  std::vector<Var<T>> leaves;
  leaves.reserve(params_.size());
  for (const auto& p : params_) leaves.push_back(tape.leaf(p.value));
  std::size_t cursor = 0;
  LvrnetVars<T> v = assemble<T>(config_, [&](const std::string&, const Shape&, ParamRole, std::size_t, bool) {
    return leaves.at(cursor++);
  });
  v.leaves = std::move(leaves);
  return v;
}

template <typename T>
Var<T> Lvrnet<T>::forward(Var<T> image, const LvrnetVars<T>& v) const {
  const Shape& s = image.shape();
  require_rank(s, 4, "lvrnet_forward");
  if (s[1] != 3) throw std::invalid_argument("lvrnet_forward: image channel dimension 1 must be 3, got " + shape_str(s));
  if (s[2] < min_image_side() || s[3] < min_image_side()) {
    throw std::invalid_argument("lvrnet_forward: image is " + std::to_string(s[2]) + "x" + std::to_string(s[3]) +
                                ", minimum side is " + std::to_string(min_image_side()));
  }
  Var<T> h = conv(image, v.pre, 1);
  std::vector<Var<T>> levels;
  for (const auto& g : v.groups) {
    h = naf_group_forward(h, g);
    levels.push_back(h);
  }
  Var<T> f = lam_forward(levels, v.lam);
  f = conv(f, v.post1, 1);
  f = conv(f, v.post2, 1);
  return ops::add(f, image);
}

template <typename T>
Tensor<T> Lvrnet<T>::infer(const Tensor<T>& image) const {
  Tape<T> tape;
  std::vector<Var<T>> leaves;
  std::size_t cursor = 0;
  for (const auto& p : params_) leaves.push_back(tape.constant(p.value));
  LvrnetVars<T> v = assemble<T>(config_, [&](const std::string&, const Shape&, ParamRole, std::size_t, bool) {
    return leaves.at(cursor++);
  });
  return forward(tape.constant(image), v).value();
}

#define LVR_INSTANTIATE_MODEL(T)                                                                        \
  template Var<T> simple_gate<T>(Var<T>);                                                               \
  template Var<T> simplified_channel_attention<T>(Var<T>, const ConvVars<T>&);                          \
  template Var<T> channel_attention<T>(Var<T>, Var<T>, Var<T>);                                         \
  template Var<T> naf_block_forward<T>(Var<T>, const NafBlockVars<T>&);                                 \
  template Var<T> naf_group_forward<T>(Var<T>, const NafGroupVars<T>&);                                 \
  template Var<T> lam_forward<T>(const std::vector<Var<T>>&, const LamVars<T>&, std::vector<double>*); \
  template class Lvrnet<T>;

LVR_INSTANTIATE_MODEL(float)
LVR_INSTANTIATE_MODEL(double)

}  // namespace lvr
