#include "lvr/losses.hpp"

#include <cctype>
#include <cmath>
#include <set>
#include <stdexcept>

#include "lvr/rng.hpp"

namespace lvr {

std::vector<std::string> LossWeights::problems() const {
  std::vector<std::string> out;
  if (!(perceptual >= 0)) out.push_back("loss.perceptual weight must be >= 0");
  if (!(edge >= 0)) out.push_back("loss.edge weight must be >= 0");
  if (!(fft >= 0)) out.push_back("loss.fft weight must be >= 0");
  if (!(epsilon_edge > 0)) out.push_back("loss.epsilon_edge must be > 0");
  return out;
}

LossWeights LossWeights::from_mask(const std::string& mask, const LossWeights& base) {
  std::set<char> letters;
  for (char ch : mask) {
    const char up = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    if (up != 'L' && up != 'P' && up != 'E' && up != 'F') {
      throw std::invalid_argument(std::string("loss mask: unknown letter '") + ch + "' (expected a subset of LPEF)");
    }
    letters.insert(up);
  }
  if (!letters.count('L')) throw std::invalid_argument("loss mask: reconstruction term L is mandatory");
  LossWeights w = base;
  if (!letters.count('P')) w.perceptual = 0;
  if (!letters.count('E')) w.edge = 0;
  if (!letters.count('F')) w.fft = 0;
  return w;
}

LossWeights LossWeights::from_mask(const std::string& mask) { return from_mask(mask, LossWeights{}); }

std::string LossWeights::mask() const {
  std::string m = "L";
  if (perceptual > 0) m += 'P';
  if (edge > 0) m += 'E';
  if (fft > 0) m += 'F';
  return m;
}

template <typename T>
RandomConvExtractor<T>::RandomConvExtractor(std::uint64_t seed, std::vector<std::size_t> levels)
    : levels_(std::move(levels)) {
  const std::size_t widths[] = {3, 16, 32, 64};
  const Rng root(seed);
  for (std::size_t s = 0; s < 3; ++s) {
    const std::size_t in = widths[s], out = widths[s + 1];
    Rng rng = root.derive(s);
    const double bound = std::sqrt(6.0 / static_cast<double>(in * 9));
    Tensor<T> w({out, in, 3, 3});
    for (auto& v : w.data()) v = static_cast<T>(rng.uniform(-bound, bound));
    Tensor<T> b({out});
    for (auto& v : b.data()) v = static_cast<T>(rng.uniform(-0.1, 0.1));
    stages_.push_back(Stage{std::move(w), std::move(b), s == 0 ? std::size_t{1} : std::size_t{2}});
  }
  for (auto l : levels_) {
    if (l >= stages_.size()) throw std::invalid_argument("RandomConvExtractor: level " + std::to_string(l) + " out of range");
  }
}

template <typename T>
std::vector<Var<T>> RandomConvExtractor<T>::features(Var<T> image) const {
  std::vector<Var<T>> all;
  Var<T> h = image;
  Tape<T>& tape = *image.tape;
  for (const auto& st : stages_) {
    h = ops::tanh(ops::conv2d(h, tape.constant(st.weight), std::optional<Var<T>>(tape.constant(st.bias)), st.stride, 1));
    all.push_back(h);
  }
  std::vector<Var<T>> out;
  for (auto l : levels_) out.push_back(all[l]);
  return out;
}

template <typename T>
Var<T> recon_l1(Var<T> out, Var<T> gt) {
  return ops::mean(ops::abs(ops::sub(gt, out)));
}

template <typename T>
Var<T> perceptual_loss(Var<T> out, Var<T> gt, const FeatureExtractor<T>& fx) {
  if (out.shape() != gt.shape()) {
    throw std::invalid_argument("perceptual_loss: shapes differ " + shape_str(out.shape()) + " vs " + shape_str(gt.shape()));
  }
  const auto fo = fx.features(out);
  const auto fg = fx.features(gt);
  if (fo.empty()) throw std::invalid_argument("perceptual_loss: extractor produced no features");
  Var<T> total = ops::mean(ops::abs(ops::sub(fg[0], fo[0])));
  for (std::size_t i = 1; i < fo.size(); ++i) total = ops::add(total, ops::mean(ops::abs(ops::sub(fg[i], fo[i]))));
  return total;
}

template <typename T>
Var<T> laplacian(Var<T> x) {
  require_rank(x.shape(), 4, "laplacian");
  const std::size_t c = x.shape()[1];
  Tensor<T> k({c, 1, 3, 3});
  for (std::size_t ch = 0; ch < c; ++ch) {
    T* kk = k.raw() + ch * 9;
    kk[1] = kk[3] = kk[5] = kk[7] = T(1);
    kk[4] = T(-4);
  }
  return ops::conv2d<T>(ops::pad_replicate(x, 1), x.tape->constant(std::move(k)), std::nullopt, 1, 0, c);
}

template <typename T>
Var<T> edge_loss(Var<T> out, Var<T> gt, T epsilon) {
  if (out.shape() != gt.shape()) {
    throw std::invalid_argument("edge_loss: shapes differ " + shape_str(out.shape()) + " vs " + shape_str(gt.shape()));
  }
  Var<T> d = ops::sub(laplacian(gt), laplacian(out));
  Var<T> charb = ops::sqrt(ops::add_scalar(ops::square(d), epsilon * epsilon));
  // eps + mean(charb - eps): same value, but exactly eps when d == 0.
  return ops::add_scalar(ops::mean(ops::add_scalar(charb, -epsilon)), epsilon);
}

template <typename T>
Var<T> fft_loss(Var<T> out, Var<T> gt) {
  if (out.shape() != gt.shape()) {
    throw std::invalid_argument("fft_loss: shapes differ " + shape_str(out.shape()) + " vs " + shape_str(gt.shape()));
  }
  const auto zo = ops::fft2(out);
  const auto zg = ops::fft2(gt);
  Var<T> ao = ops::amplitude(zo);
  Var<T> ag = ops::amplitude(zg);
  Var<T> amp = ops::mean(ops::abs(ops::sub(ag, ao)));

  // Phase is undefined at vanishing magnitude; those bins contribute nothing.
  Tensor<T> mask(ao.shape(), T(1));
  const T floor = static_cast<T>(ops::kSpectralFloor);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (ao.value()[i] < floor || ag.value()[i] < floor) mask[i] = T(0);
  }
  Var<T> dphase = ops::abs(ops::sub(ops::phase(zg), ops::phase(zo)));
  Var<T> ph = ops::mean(ops::mul(dphase, out.tape->constant(std::move(mask))));
  return ops::add(amp, ph);
}

template <typename T>
LossTerms<T> total_loss(Var<T> out, Var<T> gt, const LossWeights& w, const FeatureExtractor<T>& fx) {
  if (out.shape() != gt.shape()) {
    throw std::invalid_argument("total_loss: shapes differ " + shape_str(out.shape()) + " vs " + shape_str(gt.shape()));
  }
  Tape<T>& tape = *out.tape;
  auto zero = [&] { return tape.constant(Tensor<T>({1}, T(0))); };
  LossTerms<T> t;
  t.recon = recon_l1(out, gt);
  t.perceptual = w.perceptual > 0 ? perceptual_loss(out, gt, fx) : zero();
  t.edge = w.edge > 0 ? edge_loss(out, gt, static_cast<T>(w.epsilon_edge)) : zero();
  t.fft = w.fft > 0 ? fft_loss(out, gt) : zero();
  Var<T> total = t.recon;
  if (w.perceptual > 0) total = ops::add(total, ops::scale(t.perceptual, static_cast<T>(w.perceptual)));
  if (w.edge > 0) total = ops::add(total, ops::scale(t.edge, static_cast<T>(w.edge)));
  if (w.fft > 0) total = ops::add(total, ops::scale(t.fft, static_cast<T>(w.fft)));
  t.total = total;
  return t;
}

#define LVR_INSTANTIATE_LOSSES(T)                                                                     \
  template class RandomConvExtractor<T>;                                                             \
  template Var<T> recon_l1<T>(Var<T>, Var<T>);                                                       \
  template Var<T> perceptual_loss<T>(Var<T>, Var<T>, const FeatureExtractor<T>&);                    \
  template Var<T> laplacian<T>(Var<T>);                                                              \
  template Var<T> edge_loss<T>(Var<T>, Var<T>, T);                                                   \
  template Var<T> fft_loss<T>(Var<T>, Var<T>);                                                       \
  template LossTerms<T> total_loss<T>(Var<T>, Var<T>, const LossWeights&, const FeatureExtractor<T>&);

LVR_INSTANTIATE_LOSSES(float)
LVR_INSTANTIATE_LOSSES(double)

}  // namespace lvr
