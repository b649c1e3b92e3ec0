#include <doctest.h>

#include <cmath>
#include <set>

#include "lvr/model.hpp"
#include "oracles.hpp"

using namespace lvr;
using lvr::testing::random_tensor;

namespace {

// Hand tally of every weight and bias, written from the block diagram.
std::size_t tallied_params(std::size_t k, std::size_t blocks, std::size_t c) {
  const std::size_t per_block = 2 * c                  // norm1
                                + c * 2 * c + 2 * c    // expand1
                                + 2 * c * 9 + 2 * c    // depthwise
                                + c * c + c            // channel attention
                                + c * c + c            // project1
                                + 2 * c                // norm2
                                + c * 2 * c + 2 * c    // expand2
                                + c * c + c            // project2
                                + 2 * c;               // beta, gamma
  const std::size_t tail = 9 * c * c + c;
  const std::size_t pre = 3 * 9 * c + c;
  const std::size_t fuse = k * c * c + c;
  const std::size_t post = 9 * c * c + c + 9 * c * 3 + 3;
  return k * (blocks * per_block + tail) + pre + fuse + post;
}

Tensor<double> identity_kernel(std::size_t c, std::size_t k) {
  Tensor<double> w({c, c, k, k});
  for (std::size_t i = 0; i < c; ++i) w.at(i, i, k / 2, k / 2) = 1;
  return w;
}

}  // namespace

TEST_CASE("parameter count matches the hand tally and the registered tensors") {
  for (auto cfg : {ModelConfig::reference(), ModelConfig::tiny(), ModelConfig{2, 3, 12, 3, 2, 2}}) {
    const std::size_t expect = tallied_params(cfg.num_groups, cfg.blocks_per_group, cfg.base_width);
    CHECK(param_count(cfg) == expect);
    CHECK(Lvrnet<float>(cfg).parameter_count() == expect);
  }
  CHECK(param_count(ModelConfig::reference()) == 436611);
}

TEST_CASE("parameter counts of the reference configuration and its shallower variants") {
  ModelConfig cfg = ModelConfig::reference();
  const double full = static_cast<double>(param_count(cfg));
  CHECK(std::abs(full - 430000.0) <= 43000.0);
  std::size_t prev = param_count(cfg);
  for (int blocks : {14, 12, 10}) {
    cfg.blocks_per_group = blocks;
    const std::size_t n = param_count(cfg);
    CHECK(n < prev);
    prev = n;
  }
}

TEST_CASE("parameter names are unique and initialization is deterministic") {
  Lvrnet<float> a(ModelConfig::tiny()), b(ModelConfig::tiny()), c(ModelConfig::tiny());
  a.init(5);
  b.init(5);
  c.init(6);
  std::set<std::string> names;
  bool differs = false;
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    names.insert(a.parameters()[i].name);
    CHECK(a.parameters()[i].value == b.parameters()[i].value);
    differs = differs || !(a.parameters()[i].value == c.parameters()[i].value);
  }
  CHECK(names.size() == a.parameters().size());
  CHECK(differs);
  auto x = random_tensor<float>({1, 3, 9, 9}, 1, 0, 1);
  a.init(5, InitScheme::random);
  b.init(5, InitScheme::random);
  CHECK(a.infer(x) == b.infer(x));
}

TEST_CASE("invalid configurations are rejected with every problem listed") {
  ModelConfig bad{0, 0, 7, 3, 3, 1};
  const auto problems = bad.problems();
  CHECK(problems.size() >= 4);
  CHECK_THROWS(Lvrnet<float>(bad));
}

TEST_CASE("network is the identity at standard initialization") {
  for (auto cfg : {ModelConfig::tiny(), ModelConfig{2, 2, 16, 3, 2, 2}}) {
    Lvrnet<float> net(cfg);
    net.init(11);
    for (auto [h, w] : {std::pair<std::size_t, std::size_t>{16, 16}, {13, 21}, {3, 3}}) {
      auto x = random_tensor<float>({2, 3, h, w}, 100 + h, 0, 1);
      CHECK(net.infer(x) == x);
    }
  }
  Lvrnet<float> net(ModelConfig::tiny());
  net.init(11);
  CHECK_THROWS(net.infer(Tensor<float>({1, 3, 2, 5})));
  CHECK_THROWS(net.infer(Tensor<float>({1, 4, 8, 8})));
}

TEST_CASE("randomly initialized network preserves shape and is not the identity") {
  Lvrnet<float> net(ModelConfig::tiny());
  net.init(3, InitScheme::random);
  auto x = random_tensor<float>({2, 3, 10, 14}, 4, 0, 1);
  auto y = net.infer(x);
  CHECK(y.shape() == x.shape());
  CHECK_FALSE(y == x);
}

TEST_CASE("simple gate") {
  Tape<double> t;
  CHECK(simple_gate(t.constant(Tensor<double>({1, 4, 2, 2}, 1.0))).value() == Tensor<double>({1, 2, 2, 2}, 1.0));
  Tensor<double> x({1, 4, 2, 2});
  for (std::size_t i = 0; i < 8; ++i) x[i] = 2, x[8 + i] = 3;
  CHECK(simple_gate(t.constant(x)).value() == Tensor<double>({1, 2, 2, 2}, 6.0));

  auto r = random_tensor<double>({2, 6, 3, 3}, 7);
  auto y = simple_gate(t.constant(r)).value();
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) CHECK(y.at(n, c, i, j) == r.at(n, c, i, j) * r.at(n, c + 3, i, j));
  CHECK_THROWS(simple_gate(t.constant(Tensor<double>({1, 3, 2, 2}))));
}

TEST_CASE("simplified channel attention") {
  Tape<double> t;
  Tensor<double> x({1, 2, 3, 3});
  for (std::size_t i = 0; i < 9; ++i) x[i] = 0.5, x[9 + i] = -2;
  ConvVars<double> id{t.constant(identity_kernel(2, 1)), t.constant(Tensor<double>({2}))};
  auto y = simplified_channel_attention(t.constant(x), id).value();
  for (std::size_t i = 0; i < 9; ++i) {
    CHECK(y[i] == 0.25);
    CHECK(y[9 + i] == 4);
  }
  ConvVars<double> zero{t.constant(Tensor<double>({2, 2, 1, 1})), t.constant(Tensor<double>({2}))};
  CHECK(simplified_channel_attention(t.constant(random_tensor<double>({1, 2, 3, 3}, 1)), zero).value() ==
        Tensor<double>({1, 2, 3, 3}));

  // The reference attention with the sigmoid and ReLU removed and W2 W1 folded
  // into one matrix is the simplified form.
  auto r = random_tensor<double>({2, 3, 4, 4}, 2);
  auto w = random_tensor<double>({3, 3, 1, 1}, 3);
  auto ys = simplified_channel_attention(t.constant(r), {t.constant(w), t.constant(Tensor<double>({3}))}).value();
  Tensor<double> manual(r.shape());
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t o = 0; o < 3; ++o) {
      double s = 0;
      for (std::size_t c = 0; c < 3; ++c) {
        double pooled = 0;
        for (std::size_t i = 0; i < 16; ++i) pooled += r.at(n, c, i / 4, i % 4);
        s += w[o * 3 + c] * (pooled / 16);
      }
      for (std::size_t i = 0; i < 16; ++i) manual.at(n, o, i / 4, i % 4) = r.at(n, o, i / 4, i % 4) * s;
    }
  CHECK(testing::max_abs_diff(ys, manual) < 1e-12);
}

TEST_CASE("reference channel attention") {
  Tape<double> t;
  auto x = random_tensor<double>({1, 4, 3, 3}, 9);
  auto z = t.constant(Tensor<double>({2, 4, 1, 1}));
  auto z2 = t.constant(Tensor<double>({4, 2, 1, 1}));
  auto half = channel_attention(t.constant(x), z, z2).value();
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(half[i] == 0.5 * x[i]);
  CHECK(channel_attention(t.constant(Tensor<double>({1, 4, 3, 3})), t.constant(random_tensor<double>({2, 4, 1, 1}, 1)),
                          t.constant(random_tensor<double>({4, 2, 1, 1}, 2)))
            .value() == Tensor<double>({1, 4, 3, 3}));

  auto w1 = random_tensor<double>({2, 4, 1, 1}, 10);
  auto w2 = random_tensor<double>({4, 2, 1, 1}, 11);
  auto y = channel_attention(t.constant(x), t.constant(w1), t.constant(w2)).value();
  double pooled[4];
  for (std::size_t c = 0; c < 4; ++c) {
    pooled[c] = 0;
    for (std::size_t i = 0; i < 9; ++i) pooled[c] += x.at(0, c, i / 3, i % 3);
    pooled[c] /= 9;
  }
  double hidden[2];
  for (std::size_t j = 0; j < 2; ++j) {
    hidden[j] = 0;
    for (std::size_t c = 0; c < 4; ++c) hidden[j] += w1[j * 4 + c] * pooled[c];
    hidden[j] = std::max(0.0, hidden[j]);
  }
  for (std::size_t c = 0; c < 4; ++c) {
    double s = 0;
    for (std::size_t j = 0; j < 2; ++j) s += w2[c * 2 + j] * hidden[j];
    s = 1 / (1 + std::exp(-s));
    for (std::size_t i = 0; i < 9; ++i) CHECK(y.at(0, c, i / 3, i % 3) == doctest::Approx(x.at(0, c, i / 3, i % 3) * s).epsilon(1e-12));
  }
}

TEST_CASE("block and group residual structure") {
  Lvrnet<double> net({1, 1, 4, 3, 2, 2});
  net.init(2, InitScheme::random);
  Tape<double> t;
  auto v = net.bind(t);
  auto x = t.constant(random_tensor<double>({1, 4, 6, 5}, 3));
  auto block_out = naf_block_forward(x, v.groups[0].blocks[0]);
  CHECK(block_out.shape() == x.shape());

  NafGroupVars<double> g = v.groups[0];
  g.tail = {t.constant(identity_kernel(4, 3)), t.constant(Tensor<double>({4}))};
  auto group_out = naf_group_forward(x, g).value();
  for (std::size_t i = 0; i < group_out.size(); ++i) CHECK(group_out[i] == block_out.value()[i] + x.value()[i]);

  NafBlockVars<double> zeroed = v.groups[0].blocks[0];
  zeroed.beta = t.constant(Tensor<double>({1, 4, 1, 1}));
  zeroed.gamma = t.constant(Tensor<double>({1, 4, 1, 1}));
  CHECK(naf_block_forward(x, zeroed).value() == x.value());
  CHECK_THROWS(naf_block_forward(t.constant(Tensor<double>({1, 5, 4, 4})), v.groups[0].blocks[0]));
}

TEST_CASE("level attention special cases") {
  Tape<double> t;
  const std::size_t c = 3;
  auto f = random_tensor<double>({2, c, 4, 5}, 20);
  for (std::size_t k : {1, 3}) {
    LamVars<double> p{{t.constant(random_tensor<double>({c, k * c, 1, 1}, 21)), t.constant(random_tensor<double>({c}, 22))}};
    std::vector<Var<double>> feats(k, t.constant(f));
    std::vector<double> sums;
    auto y = lam_forward(feats, p, &sums).value();
    CHECK(sums.size() == 2 * k);
    for (double s : sums) CHECK(std::abs(s - 1) < 1e-6);

    std::vector<Var<double>> doubled(k, ops::scale(t.constant(f), 2.0));
    auto ref = ops::conv2d(ops::concat_channels(doubled), p.fuse.weight, std::optional<Var<double>>(p.fuse.bias)).value();
    CHECK(testing::max_abs_diff(y, ref) < 1e-12);
  }

  LamVars<double> p{{t.constant(random_tensor<double>({c, 2 * c, 1, 1}, 23)), t.constant(random_tensor<double>({c}, 24)) }};
  std::vector<double> sums;
  lam_forward<double>({t.constant(random_tensor<double>({1, c, 4, 4}, 25)), t.constant(random_tensor<double>({1, c, 4, 4}, 26))}, p, &sums);
  for (double s : sums) CHECK(std::abs(s - 1) < 1e-6);
  CHECK_THROWS(lam_forward<double>({t.constant(f), t.constant(Tensor<double>({2, c, 4, 4}))}, p));
}

TEST_CASE("block gradients match finite differences") {
  Lvrnet<double> net({1, 1, 4, 3, 2, 2});
  net.init(8, InitScheme::random);
  auto x = random_tensor<double>({1, 4, 5, 5}, 9);
  std::set<std::size_t> block_params;
  for (std::size_t i = 0; i < net.parameters().size(); ++i)
    if (net.parameters()[i].name.find(".blocks.") != std::string::npos) block_params.insert(i);
  auto r = testing::model_gradcheck(
      net, [&](Tape<double>& t, const LvrnetVars<double>& v) { return ops::mean(naf_block_forward(t.constant(x), v.groups[0].blocks[0])); },
      1e-4, [&](std::size_t p, std::size_t) { return block_params.count(p) > 0; });
  INFO(r.worst);
  CHECK(r.checked > 100);
  CHECK(r.max_rel < 1e-4);
}

TEST_CASE("level attention gradients match finite differences") {
  auto a = random_tensor<double>({1, 2, 3, 3}, 30, -0.5, 0.5);
  auto b = random_tensor<double>({1, 2, 3, 3}, 31, -0.5, 0.5);
  auto w = random_tensor<double>({2, 4, 1, 1}, 32);
  auto bias = random_tensor<double>({2}, 33);
  auto probe = random_tensor<double>({1, 2, 3, 3}, 34);
  const auto r = testing::gradcheck({a, b, w, bias}, [&](Tape<double>& t, const std::vector<Var<double>>& v) {
    LamVars<double> p{{v[2], v[3]}};
    return ops::sum(ops::mul(lam_forward<double>({v[0], v[1]}, p), t.constant(probe)));
  });
  INFO(r.worst);
  CHECK(r.max_rel < 1e-4);
}

TEST_CASE("full network gradients match finite differences") {
  Lvrnet<double> net(ModelConfig::tiny());
  net.init(12, InitScheme::random);
  auto x = random_tensor<double>({1, 3, 8, 8}, 13, 0, 1);
  auto probe = random_tensor<double>({1, 3, 8, 8}, 14);
  Rng pick(15);
  auto r = testing::model_gradcheck(
      net,
      [&](Tape<double>& t, const LvrnetVars<double>& v) { return ops::sum(ops::mul(net.forward(t.constant(x), v), t.constant(probe))); },
      1e-4, [&](std::size_t, std::size_t) { return pick.uniform() < 0.05; });
  INFO(r.worst);
  CHECK(r.checked > 50);
  CHECK(r.max_rel < 1e-4);
}

TEST_CASE("precision conversion keeps weights") {
  Lvrnet<float> net(ModelConfig::tiny());
  net.init(1, InitScheme::random);
  auto d = convert<double>(net);
  auto x = random_tensor<float>({1, 3, 8, 8}, 2, 0, 1);
  auto yf = net.infer(x);
  auto yd = d.infer(x.cast<double>());
  CHECK(testing::max_abs_diff(yf.cast<double>(), yd) < 1e-4);
}
