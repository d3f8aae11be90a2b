#include <doctest.h>

#include <cmath>

#include "monofuse/checkpoint.hpp"
#include "monofuse/cnn.hpp"
#include "monofuse/synthetic.hpp"
#include "test_support.hpp"

using namespace monofuse;
using namespace monofuse::cnn;

namespace {

std::vector<Tensor> toy_batch(std::size_t per_class, std::uint64_t seed, std::vector<std::size_t>& labels) {
  const auto ds = synthetic::make_toy_dataset(per_class, 12, seed);
  std::vector<Tensor> out;
  labels.clear();
  for (const auto& s : ds.samples) {
    out.push_back(Tensor::from_image(s.image));
    labels.push_back(s.label);
  }
  return out;
}

Tensor random_tensor(Shape s, std::uint64_t seed, double lo = -1, double hi = 1) {
  const auto img = testing::random_image(1, s.size(), seed, lo, hi);
  return Tensor(s, Values(img.pixels().begin(), img.pixels().end()));
}

// Single-layer-then-softmax model on a flat input.
CnnModel dense_model(std::size_t in, std::size_t out, double w, double b) {
  Dense d{in, out, Values(in * out, w), Values(out, b)};
  return CnnModel(Shape{in, 1, 1}, {d, Softmax{}});
}

}  // namespace

TEST_CASE("1x1 identity convolution then ReLU reproduces the input") {
  Conv c{1, 1, 1, 1, {1.0}, {0.0}};
  const CnnModel m(Shape{1, 4, 4}, {c, Relu{}, Flatten{}, Dense{16, 2, Values(32), {0, 0}}, Softmax{}});
  const auto x = random_tensor({1, 4, 4}, 3, 0.0, 1.0);
  const auto fwd = forward(m, std::span(&x, 1));
  CHECK(fwd.cache.layer_inputs[2][0].values == x.values);
}

TEST_CASE("max pool of a 2x2 block is its maximum") {
  const CnnModel m(Shape{1, 2, 2}, {MaxPool{}, Flatten{}, Dense{1, 2, {0, 0}, {0, 0}}, Softmax{}});
  const Tensor x(Shape{1, 2, 2}, {1, 2, 3, 4});
  const auto fwd = forward(m, std::span(&x, 1));
  REQUIRE(fwd.cache.layer_inputs[1][0].values.size() == 1);
  CHECK(fwd.cache.layer_inputs[1][0].values[0] == 4.0);
}

TEST_CASE("zero dense layer gives a uniform softmax") {
  const auto m = dense_model(5, 3, 0.0, 0.0);
  const auto x = random_tensor({5, 1, 1}, 1);
  const auto fwd = forward(m, std::span(&x, 1));
  for (double p : fwd.probs[0].values) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("softmax sums to one and is positive") {
  const auto m = testing::toy_model(4);
  std::vector<std::size_t> labels;
  const auto batch = toy_batch(2, 9, labels);
  const auto fwd = forward(m, batch);
  for (const auto& p : fwd.probs) {
    double s = 0.0;
    for (double v : p.values) {
      CHECK(v > 0.0);
      CHECK(std::isfinite(v));
      s += v;
    }
    CHECK(std::abs(s - 1.0) < 1e-9);
  }
}

TEST_CASE("cross-entropy values") {
  CHECK(loss(Tensor({3, 1, 1}, {1, 0, 0}), 0) == 0.0);
  CHECK(loss(Tensor({3, 1, 1}, {1.0 / 3, 1.0 / 3, 1.0 / 3}), 2) == doctest::Approx(std::log(3.0)));
  CHECK(loss(Tensor({3, 1, 1}, {0.5, 0.25, 0.25}), 1) == doctest::Approx(std::log(4.0)));
  CHECK(loss(Tensor({2, 1, 1}, {1, 0}), 1) == doctest::Approx(-std::log(1e-12)));
  CHECK_THROWS_AS(loss(Tensor({2, 1, 1}, {1, 0}), 2), Error);
}

TEST_CASE("forward rejects bad input") {
  const auto m = testing::toy_model(1);
  const Tensor wrong(Shape{1, 10, 12});
  try {
    forward(m, std::span(&wrong, 1));
    FAIL("expected ShapeMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ShapeMismatch);
  }
  CHECK_THROWS_AS(forward(m, {}), Error);
  CHECK_THROWS_AS(Tensor(Shape{2, 2, 2}, Values(7)), Error);
}

TEST_CASE("model validation") {
  CHECK_THROWS_AS(CnnModel(Shape{4, 1, 1}, {Dense{4, 2, Values(8), {0, 0}}}), Error);
  CHECK_THROWS_AS(CnnModel(Shape{4, 1, 1}, {Softmax{}, Dense{4, 2, Values(8), {0, 0}}, Softmax{}}),
                  Error);
  CHECK_THROWS_AS(CnnModel(Shape{4, 1, 1}, {Dense{5, 2, Values(10), {0, 0}}, Softmax{}}), Error);
  CHECK_THROWS_AS(CnnModel(Shape{4, 1, 1}, {Dense{4, 2, Values(7), {0, 0}}, Softmax{}}), Error);
  try {
    CnnModel(Shape{1, 1, 1}, {Dense{1, 1, {NAN}, {0}}, Softmax{}});
    FAIL("expected NonFinite");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NonFinite);
  }
}

TEST_CASE("gradients match central differences on the toy model") {
  for (std::uint64_t seed = 1; seed <= 2; ++seed) {
    std::vector<std::size_t> labels;
    const auto batch = toy_batch(1, 100 + seed, labels);
    const auto r = testing::finite_difference_check(testing::toy_model(seed), batch, labels);
    INFO("seed " << seed);
    CHECK(r.checked > 100);
    CHECK(r.max_relative_error < 1e-4);
  }
}

TEST_CASE("gradients with LRN in an unusual regime") {
  // Large activations make the LRN denominator matter.
  auto m = testing::toy_model(3);
  std::get<Lrn>(m.layers()[2]) = Lrn{1, 0.5, 0.75, 1.0};
  std::vector<std::size_t> labels;
  auto batch = toy_batch(1, 8, labels);
  for (auto& t : batch)
    for (auto& v : t.values) v *= 4.0;
  CHECK(testing::finite_difference_check(m, batch, labels).max_relative_error < 1e-4);
}

TEST_CASE("sample weights scale gradients linearly") {
  const auto m = testing::toy_model(5);
  std::vector<std::size_t> labels;
  const auto batch = toy_batch(1, 3, labels);
  const auto fwd = forward(m, batch);
  const auto g1 = backward(m, fwd, labels);
  const std::vector<double> twos(batch.size(), 2.0);
  const auto g2 = backward(m, fwd, labels, twos);
  for (std::size_t p = 0; p < g1.grads.size(); ++p)
    for (std::size_t j = 0; j < g1.grads[p].size(); ++j) CHECK(g2.grads[p][j] == 2.0 * g1.grads[p][j]);
  const std::vector<double> short_weights(1, 1.0);
  CHECK_THROWS_AS(backward(m, fwd, labels, short_weights), Error);
}

TEST_CASE("a confident correct prediction has vanishing gradient") {
  auto m = dense_model(2, 3, 0.0, 0.0);
  std::get<Dense>(m.layers()[0]).biases = {60.0, 0.0, 0.0};
  const Tensor x({2, 1, 1}, {0.3, -0.2});
  const auto fwd = forward(m, std::span(&x, 1));
  const std::size_t label = 0;
  const auto g = backward(m, fwd, std::span(&label, 1));
  for (const auto& arr : g.grads)
    for (double v : arr) CHECK(std::abs(v) < 1e-9);
}

TEST_CASE("backward rejects a stale cache") {
  auto m = testing::toy_model(2);
  std::vector<std::size_t> labels;
  const auto batch = toy_batch(1, 2, labels);
  const auto fwd = forward(m, batch);
  const auto other = testing::toy_model(2);
  CHECK_THROWS_AS(backward(other, fwd, labels), Error);
  m.params()[0].values[0] += 1.0;
  CHECK_THROWS_AS(backward(m, fwd, labels), Error);
  std::vector<std::size_t> fewer(labels.begin(), labels.end() - 1);
  m.params()[0].values[0] -= 1.0;
  CHECK_THROWS_AS(backward(m, forward(m, batch), fewer), Error);
}

TEST_CASE("ReLU passes no gradient where its input was negative") {
  // Conv -> ReLU -> Flatten -> Dense: for a conv output < 0 the conv bias
  // gradient gets no contribution from that pixel.
  Conv c{1, 1, 1, 1, {1.0}, {0.0}};
  const CnnModel m(Shape{1, 1, 2}, {c, Relu{}, Flatten{}, Dense{2, 2, {1, 2, 3, 4}, {0, 0}}, Softmax{}});
  const Tensor x({1, 1, 2}, {-1.0, 0.5});
  const auto fwd = forward(m, std::span(&x, 1));
  const std::size_t label = 1;
  const auto g = backward(m, fwd, std::span(&label, 1));
  // d loss / d conv weight = sum over pixels of x * upstream; the negative pixel contributes 0.
  const double p0 = fwd.probs[0].values[0], p1 = fwd.probs[0].values[1];
  const double upstream_pixel1 = 2.0 * p0 + 4.0 * (p1 - 1.0);
  CHECK(g.grads[0][0] == doctest::Approx(0.5 * upstream_pixel1));
  CHECK(g.grads[1][0] == doctest::Approx(upstream_pixel1));
}

TEST_CASE("sgd momentum arithmetic") {
  auto m = dense_model(1, 2, 1.0, 0.0);
  GradientSet g{{{0.5, -0.25}, {0.0, 0.0}}};

  auto s = OptimizerState::for_model(m, 0.1, 0.9, 0.0);
  sgd_momentum_step(s, m, g);
  auto& w = std::get<Dense>(m.layers()[0]).weights;
  CHECK(w[0] == doctest::Approx(1.0 - 0.1 * 0.5));
  CHECK(w[1] == doctest::Approx(1.0 + 0.1 * 0.25));

  sgd_momentum_step(s, m, g);
  CHECK(w[0] == doctest::Approx(1.0 - 0.1 * 0.5 * (2 + 0.9)));
  CHECK(w[1] == doctest::Approx(1.0 + 0.1 * 0.25 * (2 + 0.9)));

  // L2 decays weights, not biases.
  auto m2 = dense_model(1, 2, 2.0, 3.0);
  auto s2 = OptimizerState::for_model(m2, 0.1, 0.0, 0.5);
  GradientSet zero{{{0, 0}, {0, 0}}};
  sgd_momentum_step(s2, m2, zero);
  CHECK(std::get<Dense>(m2.layers()[0]).weights[0] == doctest::Approx(2.0 - 0.1 * 0.5 * 2.0));
  CHECK(std::get<Dense>(m2.layers()[0]).biases[0] == 3.0);
}

TEST_CASE("zero learning rate leaves the model bit-identical") {
  auto m = testing::toy_model(6);
  const auto before = m;
  std::vector<std::size_t> labels;
  const auto batch = toy_batch(1, 6, labels);
  auto s = OptimizerState::for_model(m, 0.0, 0.9, 5e-4);
  sgd_momentum_step(s, m, backward(m, forward(m, batch), labels));
  CHECK(m == before);
}

TEST_CASE("non-finite gradient aborts without touching the model") {
  auto m = dense_model(1, 2, 1.0, 0.0);
  const auto before = m;
  auto s = OptimizerState::for_model(m, 0.1, 0.9, 0.0);
  GradientSet g{{{0.5, NAN}, {0.0, 0.0}}};
  try {
    sgd_momentum_step(s, m, g);
    FAIL("expected NonFinite");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NonFinite);
  }
  CHECK(m == before);
  CHECK(s.velocity[0][0] == 0.0);
  GradientSet wrong{{{0.5}, {0.0, 0.0}}};
  CHECK_THROWS_AS(sgd_momentum_step(s, m, wrong), Error);
}

TEST_CASE("LRN matches a per-pixel reference loop") {
  const Lrn p;
  const auto x = random_tensor({4, 2, 2}, 12, -3, 3);
  const auto y = lrn_forward(x, p);
  for (long c = 0; c < 4; ++c)
    for (std::size_t i = 0; i < 4; ++i) {
      double sum = 0.0;
      for (long j = c - 2; j <= c + 2; ++j)
        if (j >= 0 && j < 4) sum += x.values[j * 4 + i] * x.values[j * 4 + i];
      const double want = x.values[c * 4 + i] / std::pow(p.k + p.alpha * sum, p.beta);
      CHECK(std::abs(y.values[c * 4 + i] - want) < 1e-15);
    }

  const auto one = random_tensor({1, 3, 3}, 2);
  CHECK(lrn_forward(one, Lrn{2, 0.0, 0.6, 1.0}).values == one.values);
  const Tensor zero({3, 2, 2});
  CHECK(lrn_forward(zero, p).values == zero.values);
}

TEST_CASE("paper model shapes and seeding") {
  const auto m = build_paper_model(192, 168, 34, 1);
  const auto shapes = m.output_shapes();
  REQUIRE(shapes.size() == 10);
  CHECK(shapes[0] == Shape{50, 188, 164});
  CHECK(shapes[3] == Shape{50, 94, 82});
  CHECK(shapes[4] == Shape{50, 90, 78});
  CHECK(shapes[6] == Shape{50, 45, 39});
  CHECK(shapes[7] == Shape{87750, 1, 1});
  CHECK(shapes[8] == Shape{34, 1, 1});
  CHECK(m.num_classes() == 34);
  CHECK(m.parameterized_layers() == std::vector<std::size_t>{0, 4, 8});

  CHECK(build_paper_model(64, 64, 4, 9) == build_paper_model(64, 64, 4, 9));
  CHECK_FALSE(build_paper_model(64, 64, 4, 9) == build_paper_model(64, 64, 4, 10));
  CHECK(parameter_checksum(build_paper_model(64, 64, 4, 9)) == parameter_checksum(build_paper_model(64, 64, 4, 9)));

  for (const auto& p : m.params())
    if (p.is_bias)
      for (double v : p.values) CHECK(v == 0.0);

  // He scaling: first-layer weights have std close to sqrt(2/25).
  const auto big = build_paper_model(64, 64, 4, 3, {5, 400, 2});
  const auto w = big.params()[0].values;
  double ss = 0.0;
  for (double v : w) ss += v * v;
  CHECK(std::sqrt(ss / double(w.size())) == doctest::Approx(std::sqrt(2.0 / 25.0)).epsilon(0.05));

  CHECK_NOTHROW(build_paper_model(16, 16, 2, 1));
  CHECK_THROWS_AS(build_paper_model(15, 16, 2, 1), Error);
  CHECK_THROWS_AS(build_paper_model(11, 11, 3, 1), Error);
}

TEST_CASE("paper model forward is finite") {
  const auto m = build_paper_model(20, 24, 3, 2);
  const auto x = random_tensor({1, 20, 24}, 5);
  const auto fwd = forward(m, std::span(&x, 1));
  double s = 0.0;
  for (double v : fwd.logits[0].values) CHECK(std::isfinite(v));
  for (double v : fwd.probs[0].values) s += v;
  CHECK(std::abs(s - 1.0) < 1e-9);
}

TEST_CASE("full-batch loss falls over the first ten steps") {
  auto m = testing::toy_model(7);
  std::vector<std::size_t> labels;
  const auto batch = toy_batch(10, 7, labels);
  auto s = OptimizerState::for_model(m, 1e-3, 0.9, 5e-4);
  double previous = INFINITY;
  for (int step = 0; step < 10; ++step) {
    const auto fwd = forward(m, batch);
    double l = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) l += loss(fwd.probs[i], labels[i]);
    l /= double(batch.size());
    CHECK(l < previous);
    previous = l;
    sgd_momentum_step(s, m, backward(m, fwd, labels));
  }
}

TEST_CASE("checkpoint round trip") {
  testing::TempDir dir("ckpt");
  const auto m = testing::toy_model(11);
  const nlohmann::json meta{{"feature", "fusion"}, {"seed", 11}};
  save_checkpoint(m, meta, dir / "m.ckpt");
  const auto back = load_checkpoint(dir / "m.ckpt");
  CHECK(back.model == m);
  CHECK(back.metadata == meta);
  save_checkpoint(m, meta, dir / "n.ckpt");
  CHECK(testing::read_bytes(dir / "m.ckpt") == testing::read_bytes(dir / "n.ckpt"));

  auto bytes = testing::read_bytes(dir / "m.ckpt");
  bytes[0] = 'X';
  testing::write_bytes(dir / "bad.ckpt", std::string(bytes.begin(), bytes.end()));
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), Error);
  bytes = testing::read_bytes(dir / "m.ckpt");
  testing::write_bytes(dir / "short.ckpt", std::string(bytes.begin(), bytes.end() - 5));
  CHECK_THROWS_AS(load_checkpoint(dir / "short.ckpt"), Error);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), Error);
}

TEST_CASE("layer names and shape strings") {
  const auto m = testing::toy_model(1);
  CHECK(layer_name(m.layers()[0]) == "conv");
  CHECK(layer_name(m.layers()[2]) == "lrn");
  CHECK(to_string(Shape{4, 5, 6}) == "(4,5,6)");
}

TEST_CASE("results do not depend on heap layout") {
  const auto m = testing::toy_model(1);
  std::vector<std::size_t> labels;
  const auto batch = toy_batch(2, 1, labels);
  std::vector<double> reference;
  for (int trial = 0; trial < 12; ++trial) {
    std::vector<std::vector<char>> junk;
    for (int i = 0; i <= trial; ++i) junk.emplace_back(8 * (i + 1));
    const auto copy = m;
    std::vector<Tensor> inputs;
    for (const auto& t : batch) {
      inputs.push_back(t);
      junk.emplace_back(8 * trial + 8);
    }
    const auto fwd = forward(copy, inputs);
    const auto g = backward(copy, fwd, labels);
    std::vector<double> all;
    for (const auto& t : fwd.logits) all.insert(all.end(), t.values.begin(), t.values.end());
    for (const auto& a : g.grads) all.insert(all.end(), a.begin(), a.end());
    if (trial == 0) reference = all;
    CHECK(all == reference);
  }
}
