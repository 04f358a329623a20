#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "inamp/nn.hpp"
#include "oracles.hpp"

using inamp::ConvKernel;
using inamp::Padding;
using inamp::Tensor;

namespace {

template <typename T>
Tensor<T> random_tensor(inamp::Shape shape, std::mt19937& rng, T lo = T(-1), T hi = T(1)) {
  std::uniform_real_distribution<T> d(lo, hi);
  std::vector<T> v(inamp::shape_size(shape));
  for (T& x : v) x = d(rng);
  return Tensor<T>::from_values(std::move(shape), std::move(v));
}

template <typename T>
std::vector<T> vec(const Tensor<T>& t) {
  return std::vector<T>(t.values().begin(), t.values().end());
}

// Same-padding geometry, restated independently of the library.
struct SamePad {
  std::size_t oh, ow;
  std::ptrdiff_t top, left;
};
SamePad same_pad(std::size_t h, std::size_t w, std::size_t kh, std::size_t kw, std::size_t s) {
  SamePad p;
  p.oh = (h + s - 1) / s;
  p.ow = (w + s - 1) / s;
  const std::size_t need_h = (p.oh - 1) * s + kh;
  const std::size_t need_w = (p.ow - 1) * s + kw;
  p.top = need_h > h ? static_cast<std::ptrdiff_t>((need_h - h) / 2) : 0;
  p.left = need_w > w ? static_cast<std::ptrdiff_t>((need_w - w) / 2) : 0;
  return p;
}

}  // namespace

TEST_CASE("conv2d: 1x1 kernel is the per-pixel linear map") {
  // single pixel [0.5, 0.25] through F = [1, 2] with zero bias
  auto x = Tensor<float>::from_values({1, 1, 1, 2}, {0.5f, 0.25f});
  ConvKernel<float> k{Tensor<float>::from_values({1, 1, 2, 1}, {1.0f, 2.0f}), Tensor<float>::zeros({1})};
  auto y = inamp::conv2d(x, k);
  REQUIRE(y.values()[0] == Catch::Approx(1.0));

  std::mt19937 rng(31);
  auto img = random_tensor<float>({2, 4, 5, 3}, rng);
  ConvKernel<float> k1{random_tensor<float>({1, 1, 3, 6}, rng), random_tensor<float>({6}, rng)};
  auto out = inamp::conv2d(img, k1);
  auto ref = oracle::per_pixel_linear_map(vec(img), 2, 4, 5, 3, vec(k1.weights), 6, vec(k1.bias));
  REQUIRE(out.shape() == inamp::Shape{2, 4, 5, 6});
  for (std::size_t i = 0; i < ref.size(); ++i) REQUIRE(std::abs(out.values()[i] - ref[i]) < 1e-6f);
}

TEST_CASE("conv2d: center-delta identity kernel reproduces the input") {
  std::mt19937 rng(37);
  auto x = random_tensor<float>({1, 5, 5, 2}, rng);
  auto w = Tensor<float>::zeros({3, 3, 2, 2});
  {
    auto wv = w.values_mut();
    for (std::size_t c = 0; c < 2; ++c) wv[((1 * 3 + 1) * 2 + c) * 2 + c] = 1.0f;
  }
  ConvKernel<float> k{w, Tensor<float>::zeros({2})};
  auto y = inamp::conv2d(x, k, 1, Padding::Same);
  REQUIRE(y.shape() == x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) REQUIRE(y.values()[i] == Catch::Approx(x.values()[i]));
}

TEST_CASE("conv2d: matches the direct-summation oracle across padding and stride") {
  std::mt19937 rng(41);
  auto x = random_tensor<float>({1, 6, 6, 3}, rng);
  ConvKernel<float> k{random_tensor<float>({3, 3, 3, 4}, rng), random_tensor<float>({4}, rng)};

  for (std::size_t stride : {std::size_t{1}, std::size_t{2}}) {
    auto same = inamp::conv2d(x, k, stride, Padding::Same);
    auto p = same_pad(6, 6, 3, 3, stride);
    auto ref = oracle::conv2d(vec(x), 1, 6, 6, 3, vec(k.weights), 3, 3, 4, vec(k.bias), stride, p.oh, p.ow,
                              p.top, p.left);
    REQUIRE(same.shape() == inamp::Shape{1, p.oh, p.ow, 4});
    for (std::size_t i = 0; i < ref.size(); ++i) REQUIRE(std::abs(same.values()[i] - ref[i]) < 1e-5f);

    auto valid = inamp::conv2d(x, k, stride, Padding::Valid);
    const std::size_t vh = (6 - 3) / stride + 1;
    auto vref = oracle::conv2d(vec(x), 1, 6, 6, 3, vec(k.weights), 3, 3, 4, vec(k.bias), stride, vh, vh, 0, 0);
    REQUIRE(valid.shape() == inamp::Shape{1, vh, vh, 4});
    for (std::size_t i = 0; i < vref.size(); ++i) REQUIRE(std::abs(valid.values()[i] - vref[i]) < 1e-5f);
  }
}

TEST_CASE("conv2d: channel and spatial preconditions") {
  std::mt19937 rng(43);
  auto x = random_tensor<float>({1, 4, 4, 3}, rng);
  ConvKernel<float> wrong{random_tensor<float>({3, 3, 2, 4}, rng), Tensor<float>::zeros({4})};
  REQUIRE_THROWS_AS(inamp::conv2d(x, wrong), inamp::ChannelMismatch);

  auto tiny = random_tensor<float>({1, 2, 2, 3}, rng);
  ConvKernel<float> k{random_tensor<float>({3, 3, 3, 1}, rng), Tensor<float>::zeros({1})};
  REQUIRE_THROWS_AS(inamp::conv2d(tiny, k, 1, Padding::Valid), inamp::SpatialUnderflow);
  REQUIRE(inamp::conv2d(tiny, k, 1, Padding::Same).shape() == inamp::Shape{1, 2, 2, 1});
}

TEST_CASE("activations: fixed points and positivity") {
  REQUIRE(inamp::relu(Tensor<float>::scalar(-1.0f)).item() == 0.0f);
  REQUIRE(inamp::sigmoid(Tensor<float>::scalar(0.0f)).item() == Catch::Approx(0.5));

  std::mt19937 rng(47);
  auto x = random_tensor<float>({2, 3, 3, 2}, rng, -5.0f, 5.0f);
  auto r = inamp::activation(x, inamp::Activation::Relu);
  auto s = inamp::activation(x, inamp::Activation::Sigmoid);
  for (std::size_t i = 0; i < x.size(); ++i) {
    REQUIRE(r.values()[i] >= 0.0f);
    REQUIRE(s.values()[i] > 0.0f);
    REQUIRE(s.values()[i] < 1.0f);
  }
}

TEST_CASE("pool: constants, window maxima, oracle, odd-dim rejection") {
  auto c7 = Tensor<float>::filled({2, 3, 3, 4}, 7.0f);
  auto gap = inamp::pool(c7, inamp::PoolKind::GlobalAvg);
  REQUIRE(gap.shape() == inamp::Shape{2, 4});
  for (float v : gap.values()) REQUIRE(v == Catch::Approx(7.0));

  auto quad = Tensor<float>::from_values({1, 2, 2, 1}, {1, 2, 3, 4});
  auto mp = inamp::pool(quad, inamp::PoolKind::Max2x2);
  REQUIRE(mp.shape() == inamp::Shape{1, 1, 1, 1});
  REQUIRE(mp.values()[0] == 4.0f);

  std::mt19937 rng(53);
  auto x = random_tensor<float>({2, 5, 4, 3}, rng);
  auto gm = inamp::pool(x, inamp::PoolKind::GlobalMax);
  auto ref = oracle::global_max(vec(x), 2, 5, 4, 3);
  for (std::size_t i = 0; i < ref.size(); ++i) REQUIRE(gm.values()[i] == ref[i]);

  REQUIRE_THROWS_AS(inamp::max_pool_2x2(x), inamp::OddSpatialDim);
}

TEST_CASE("dense: identity, broadcast bias, oracle, shape guard") {
  std::mt19937 rng(59);
  auto x = random_tensor<float>({3, 4}, rng);
  auto eye = Tensor<float>::zeros({4, 4});
  for (std::size_t i = 0; i < 4; ++i) eye.values_mut()[i * 4 + i] = 1.0f;
  auto same = inamp::dense(x, eye, Tensor<float>::zeros({4}));
  for (std::size_t i = 0; i < x.size(); ++i) REQUIRE(same.values()[i] == Catch::Approx(x.values()[i]));

  auto b = Tensor<float>::from_values({2}, {0.5f, -1.5f});
  auto rows = inamp::dense(x, Tensor<float>::zeros({4, 2}), b);
  for (std::size_t n = 0; n < 3; ++n) {
    REQUIRE(rows.values()[n * 2 + 0] == 0.5f);
    REQUIRE(rows.values()[n * 2 + 1] == -1.5f);
  }

  auto w = random_tensor<float>({4, 5}, rng);
  auto bias = random_tensor<float>({5}, rng);
  auto y = inamp::dense(x, w, bias);
  auto prod = oracle::matmul(vec(x), vec(w), 3, 4, 5);
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t u = 0; u < 5; ++u)
      REQUIRE(std::abs(y.values()[n * 5 + u] - (prod[n * 5 + u] + bias.values()[u])) < 1e-6f);

  REQUIRE_THROWS_AS(inamp::dense(x, Tensor<float>::zeros({5, 2}), b), inamp::ShapeMismatch);
}

TEST_CASE("softmax_xent: uniform logits, saturation, probability rows") {
  auto uniform = Tensor<float>::zeros({2, 3});
  auto res = inamp::softmax_xent(uniform, {0, 2});
  REQUIRE(res.loss.item() == Catch::Approx(std::log(3.0)).epsilon(1e-5));
  for (std::size_t i = 0; i < 6; ++i) REQUIRE(res.probs.values()[i] == Catch::Approx(1.0 / 3.0));

  auto margin = Tensor<float>::from_values({1, 2}, {50.0f, 0.0f});
  REQUIRE(inamp::softmax_xent(margin, {0}).loss.item() < 1e-6f);

  std::mt19937 rng(61);
  auto logits = random_tensor<float>({4, 5}, rng, -3.0f, 3.0f);
  auto r = inamp::softmax_xent(logits, {0, 1, 2, 3});
  for (std::size_t n = 0; n < 4; ++n) {
    float sum = 0.0f;
    for (std::size_t k = 0; k < 5; ++k) {
      const float p = r.probs.values()[n * 5 + k];
      REQUIRE(p > 0.0f);
      REQUIRE(p < 1.0f);
      sum += p;
    }
    REQUIRE(std::abs(sum - 1.0f) < 1e-6f);
  }

  REQUIRE_THROWS_AS(inamp::softmax_xent(logits, {0, 1, 2, 5}), inamp::LabelOutOfRange);
  REQUIRE_THROWS_AS(inamp::softmax_xent(logits, {0, 1}), inamp::ShapeMismatch);
}

TEST_CASE("softmax_xent: analytic gradient is (probs - onehot)/N and matches finite differences") {
  std::mt19937 rng(67);
  auto logits = random_tensor<double>({3, 4}, rng, -2.0, 2.0).set_requires_grad(true);
  const std::vector<std::size_t> labels{1, 3, 0};

  auto res = inamp::softmax_xent(logits, labels);
  inamp::backward(res.loss);
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t k = 0; k < 4; ++k) {
      const double onehot = (k == labels[n]) ? 1.0 : 0.0;
      const double expect = (res.probs.values()[n * 4 + k] - onehot) / 3.0;
      REQUIRE(logits.grad()[n * 4 + k] == Catch::Approx(expect).margin(1e-9));
    }

  auto f = [&] { return inamp::softmax_xent(logits, labels).loss; };
  REQUIRE(inamp::grad_check<double>(f, {logits}, 1e-6).max_rel_error < 1e-4);
}

TEST_CASE("adam: fixed point, first-step closed form, determinism, guards") {
  std::mt19937 rng(71);
  std::vector<Tensor<float>> params{random_tensor<float>({3}, rng)};
  const auto before = vec(params[0]);
  auto state = inamp::AdamState<float>::for_params(params);
  const std::vector<float> zero(3, 0.0f);
  inamp::adam_step(params, {std::span<const float>(zero)}, state, 0.01);
  REQUIRE(vec(params[0]) == before);

  std::vector<Tensor<float>> scalar{Tensor<float>::zeros({1})};
  auto s2 = inamp::AdamState<float>::for_params(scalar);
  const std::vector<float> g{1.0f};
  inamp::adam_step(scalar, {std::span<const float>(g)}, s2, 0.01);
  REQUIRE(scalar[0].values()[0] == Catch::Approx(-0.01).epsilon(1e-5));

  // two runs from identical state and grads are bitwise identical
  auto run = [&rng]() {
    std::mt19937 local(97);
    std::vector<Tensor<float>> p{random_tensor<float>({4}, local)};
    auto st = inamp::AdamState<float>::for_params(p);
    std::vector<float> gr{0.3f, -0.2f, 0.9f, -1.4f};
    for (int i = 0; i < 5; ++i) inamp::adam_step(p, {std::span<const float>(gr)}, st, 0.005);
    return vec(p[0]);
  };
  REQUIRE(run() == run());

  REQUIRE_THROWS_AS(inamp::adam_step(params, {std::span<const float>(zero)}, state, 0.0), inamp::InvalidLr);
  const std::vector<float> short_grad(2, 0.0f);
  REQUIRE_THROWS_AS(inamp::adam_step(params, {std::span<const float>(short_grad)}, state, 0.01),
                    inamp::ShapeMismatch);
}

TEST_CASE("init: degenerate uniform, stream determinism, he spread") {
  inamp::RngStream a(123, "init");
  auto zeros = inamp::uniform_init<float>({4, 4}, 0.0, 0.0, a);
  for (float v : zeros.values()) REQUIRE(v == 0.0f);

  inamp::RngStream s1(9, "init"), s2(9, "init");
  auto t1 = inamp::he_init<float>({3, 3, 2, 4}, s1);
  auto t2 = inamp::he_init<float>({3, 3, 2, 4}, s2);
  REQUIRE(vec(t1) == vec(t2));

  inamp::RngStream s3(9, "init");
  auto big = inamp::he_init<double>({100, 1000}, s3);  // fan_in 100, 1e5 draws
  double mean = 0.0;
  for (double v : big.values()) mean += v;
  mean /= static_cast<double>(big.size());
  double var = 0.0;
  for (double v : big.values()) var += (v - mean) * (v - mean);
  var /= static_cast<double>(big.size());
  const double want = std::sqrt(0.02);
  REQUIRE(std::abs(std::sqrt(var) - want) < 0.05 * want);
}

TEST_CASE("gradients: every layer passes finite-difference checks") {
  std::mt19937 rng(79);

  SECTION("conv2d, same padding") {
    auto x = random_tensor<double>({1, 4, 4, 2}, rng).set_requires_grad(true);
    auto w = random_tensor<double>({3, 3, 2, 3}, rng).set_requires_grad(true);
    auto b = random_tensor<double>({3}, rng).set_requires_grad(true);
    auto f = [&] { return inamp::mean_all(inamp::conv2d(x, ConvKernel<double>{w, b})); };
    REQUIRE(inamp::grad_check<double>(f, {x, w, b}, 1e-6).max_rel_error < 1e-4);
  }
  SECTION("conv2d, valid padding with stride 2") {
    auto x = random_tensor<double>({2, 5, 5, 2}, rng).set_requires_grad(true);
    auto w = random_tensor<double>({3, 3, 2, 2}, rng).set_requires_grad(true);
    auto b = random_tensor<double>({2}, rng).set_requires_grad(true);
    auto f = [&] {
      auto y = inamp::conv2d(x, ConvKernel<double>{w, b}, 2, Padding::Valid);
      return inamp::mean_all(inamp::mul(y, y));
    };
    REQUIRE(inamp::grad_check<double>(f, {x, w, b}, 1e-6).max_rel_error < 1e-4);
  }
  SECTION("max pooling") {
    auto x = random_tensor<double>({2, 4, 4, 3}, rng).set_requires_grad(true);
    auto f = [&] { return inamp::mean_all(inamp::max_pool_2x2(x)); };
    REQUIRE(inamp::grad_check<double>(f, {x}, 1e-6).max_rel_error < 1e-4);
  }
  SECTION("global pools") {
    auto x = random_tensor<double>({2, 3, 3, 2}, rng).set_requires_grad(true);
    auto f = [&] {
      auto a = inamp::global_avg_pool(x);
      auto m = inamp::global_max_pool(x);
      return inamp::mean_all(inamp::mul(a, m));
    };
    REQUIRE(inamp::grad_check<double>(f, {x}, 1e-6).max_rel_error < 1e-4);
  }
  SECTION("dense + activations") {
    auto x = random_tensor<double>({3, 4}, rng).set_requires_grad(true);
    auto w = random_tensor<double>({4, 3}, rng).set_requires_grad(true);
    auto b = random_tensor<double>({3}, rng).set_requires_grad(true);
    auto f = [&] {
      auto h = inamp::sigmoid(inamp::dense(x, w, b));
      return inamp::mean_all(inamp::mul(h, h));
    };
    REQUIRE(inamp::grad_check<double>(f, {x, w, b}, 1e-6).max_rel_error < 1e-4);
  }
  SECTION("relu chain, away from the kink") {
    auto x = random_tensor<double>({2, 6}, rng, 0.25, 1.5).set_requires_grad(true);
    auto w = random_tensor<double>({6, 4}, rng, 0.1, 0.9).set_requires_grad(true);
    auto f = [&] {
      auto h = inamp::relu(inamp::matmul(x, w));
      return inamp::mean_all(h);
    };
    REQUIRE(inamp::grad_check<double>(f, {x, w}, 1e-6).max_rel_error < 1e-4);
  }
}
