#include <doctest.h>

#include <cmath>

#include "lvr/losses.hpp"
#include "oracles.hpp"

using namespace lvr;
using lvr::testing::random_tensor;

namespace {

double value(Var<double> v) { return v.value()[0]; }

Tensor<double> circular_shift(const Tensor<double>& x, std::size_t dy, std::size_t dx) {
  Tensor<double> y(x.shape());
  const std::size_t h = x.dim(2), w = x.dim(3);
  for (std::size_t n = 0; n < x.dim(0); ++n)
    for (std::size_t c = 0; c < x.dim(1); ++c)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) y.at(n, c, (i + dy) % h, (j + dx) % w) = x.at(n, c, i, j);
  return y;
}

}  // namespace

TEST_CASE("reconstruction loss") {
  Tape<double> t;
  auto a = random_tensor<double>({2, 3, 5, 6}, 1);
  Tensor<double> b(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) b[i] = a[i] + 0.5;
  CHECK(value(recon_l1(t.constant(a), t.constant(a))) == 0);
  CHECK(value(recon_l1(t.constant(a), t.constant(b))) == doctest::Approx(0.5).epsilon(1e-12));
  for (std::uint64_t s = 0; s < 10; ++s) {
    auto x = random_tensor<double>({2, 3, 7, 5}, 10 + s), y = random_tensor<double>({2, 3, 7, 5}, 30 + s);
    CHECK(std::abs(value(recon_l1(t.constant(x), t.constant(y))) - testing::loop_l1(x, y)) < 1e-7);
  }
  CHECK_THROWS(recon_l1(t.constant(a), t.constant(Tensor<double>({1, 3, 5, 6}))));
}

TEST_CASE("perceptual loss") {
  Tape<double> t;
  IdentityExtractor<double> id;
  RandomConvExtractor<double> fx(7);
  auto a = random_tensor<double>({1, 3, 16, 16}, 2, 0, 1);
  auto b = random_tensor<double>({1, 3, 16, 16}, 3, 0, 1);
  CHECK(value(perceptual_loss(t.constant(a), t.constant(a), fx)) == 0);
  CHECK(value(perceptual_loss(t.constant(a), t.constant(a), id)) == 0);
  CHECK(value(perceptual_loss(t.constant(a), t.constant(b), id)) == value(recon_l1(t.constant(a), t.constant(b))));
  CHECK(value(perceptual_loss(t.constant(a), t.constant(b), fx)) > 0);

  auto features = fx.features(t.constant(a));
  REQUIRE(features.size() == 3);
  CHECK(features[0].shape() == Shape{1, 16, 16, 16});
  CHECK(features[1].shape() == Shape{1, 32, 8, 8});
  CHECK(features[2].shape() == Shape{1, 64, 4, 4});
}

TEST_CASE("perceptual loss gradient through the default extractor") {
  RandomConvExtractor<double> fx(7);
  auto gt = random_tensor<double>({1, 3, 8, 8}, 4, 0, 1);
  auto out = random_tensor<double>({1, 3, 8, 8}, 5, 0, 1);
  auto r = testing::gradcheck({out}, [&](Tape<double>& t, const std::vector<Var<double>>& v) {
    return perceptual_loss(v[0], t.constant(gt), fx);
  });
  INFO(r.worst);
  CHECK(r.max_rel < 1e-4);
}

TEST_CASE("edge loss") {
  Tape<double> t;
  const double eps = 1e-3;
  auto a = random_tensor<double>({2, 3, 9, 7}, 6);
  Tensor<double> shifted(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) shifted[i] = a[i] - 0.3;
  CHECK(value(edge_loss(t.constant(a), t.constant(a), eps)) == eps);
  CHECK(value(edge_loss(t.constant(a), t.constant(shifted), eps)) == doctest::Approx(eps).epsilon(1e-9));
  Tape<float> tf;
  auto af = a.cast<float>();
  CHECK(edge_loss(tf.constant(af), tf.constant(af), 1e-3f).value()[0] == 1e-3f);

  CHECK(testing::max_abs_diff(laplacian(t.constant(a)).value(), testing::stencil_laplacian(a)) < 1e-12);
  for (std::uint64_t s = 0; s < 10; ++s) {
    auto x = random_tensor<double>({1, 3, 8, 11}, 40 + s), y = random_tensor<double>({1, 3, 8, 11}, 60 + s);
    CHECK(std::abs(value(edge_loss(t.constant(x), t.constant(y), eps)) - testing::stencil_edge_loss(x, y, eps)) < 1e-6);
  }
}

TEST_CASE("frequency loss") {
  Tape<double> t;
  auto a = random_tensor<double>({1, 3, 8, 10}, 7, 0, 1);
  CHECK(value(fft_loss(t.constant(a), t.constant(a))) == 0);

  for (std::uint64_t s = 0; s < 10; ++s) {
    auto x = random_tensor<double>({1, 3, 8, 9}, 80 + s, 0, 1), y = random_tensor<double>({1, 3, 8, 9}, 90 + s, 0, 1);
    CHECK(std::abs(value(fft_loss(t.constant(x), t.constant(y))) - testing::naive_fft_loss(x, y)) < 1e-5);
  }

  // The amplitude spectrum ignores circular shifts.
  auto b = circular_shift(a, 3, 4);
  auto za = ops::fft2(t.constant(a)), zb = ops::fft2(t.constant(b));
  auto amp = ops::mean(ops::abs(ops::sub(ops::amplitude(za), ops::amplitude(zb))));
  CHECK(value(amp) < 1e-12);
  CHECK(value(fft_loss(t.constant(a), t.constant(b))) > 0);
}

TEST_CASE("total loss composition") {
  Tape<double> t;
  RandomConvExtractor<double> fx(7);
  auto a = random_tensor<double>({1, 3, 12, 12}, 8, 0, 1);
  auto b = random_tensor<double>({1, 3, 12, 12}, 9, 0, 1);
  const LossWeights w;

  auto same = total_loss(t.constant(a), t.constant(a), w, fx);
  CHECK(value(same.recon) == 0);
  CHECK(value(same.perceptual) == 0);
  CHECK(value(same.edge) == w.epsilon_edge);
  CHECK(value(same.fft) == 0);
  CHECK(value(same.total) == w.edge * w.epsilon_edge);

  auto terms = total_loss(t.constant(a), t.constant(b), w, fx);
  const double recomposed = value(terms.recon) + w.perceptual * value(terms.perceptual) + w.edge * value(terms.edge) +
                            w.fft * value(terms.fft);
  CHECK(value(terms.total) == recomposed);

  LossWeights none{0, 0, 0, 0};
  auto only = total_loss(t.constant(a), t.constant(b), none, fx);
  CHECK(value(only.total) == value(recon_l1(t.constant(a), t.constant(b))));
  CHECK(value(only.perceptual) == 0);
  CHECK(value(only.edge) == 0);
  CHECK(value(only.fft) == 0);

  Tape<float> tf;
  RandomConvExtractor<float> fxf(7);
  auto tfl = total_loss(tf.constant(a.cast<float>()), tf.constant(b.cast<float>()), w, fxf);
  auto v = [](Var<float> x) { return x.value()[0]; };
  const float rf = v(tfl.recon) + static_cast<float>(w.perceptual) * v(tfl.perceptual) +
                   static_cast<float>(w.edge) * v(tfl.edge) + static_cast<float>(w.fft) * v(tfl.fft);
  CHECK(v(tfl.total) == rf);
}

TEST_CASE("total loss gradient with respect to the output") {
  RandomConvExtractor<double> fx(7);
  auto gt = random_tensor<double>({1, 3, 8, 8}, 10, 0, 1);
  auto out = random_tensor<double>({1, 3, 8, 8}, 11, 0, 1);
  auto r = testing::gradcheck({out}, [&](Tape<double>& t, const std::vector<Var<double>>& v) {
    return total_loss(v[0], t.constant(gt), LossWeights{}, fx).total;
  });
  INFO(r.worst);
  CHECK(r.max_rel < 1e-4);
}

TEST_CASE("loss masks") {
  CHECK(LossWeights::from_mask("LPEF") == LossWeights{});
  auto lp = LossWeights::from_mask("LP");
  CHECK(lp.perceptual > 0);
  CHECK(lp.edge == 0);
  CHECK(lp.fft == 0);
  CHECK(lp.mask() == "LP");
  CHECK(LossWeights::from_mask("lef").mask() == "LEF");
  CHECK(LossWeights::from_mask("FPL").mask() == "LPF");
  CHECK_THROWS(LossWeights::from_mask("PEF"));
  CHECK_THROWS(LossWeights::from_mask("LX"));
  CHECK(LossWeights{-1, 1, 1, 0}.problems().size() == 2);
}
