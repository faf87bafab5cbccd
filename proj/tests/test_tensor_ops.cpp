#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "seqseg/ops.hpp"

using namespace seqseg;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = false, double scale = 1.0) {
  std::vector<double> data(shape_numel(shape));
  for (double& v : data) v = rng.uniform(-scale, scale);
  return Tensor::from_data(std::move(shape), std::move(data), requires_grad);
}

// Scalar loss <out, cotangent> with a fixed cotangent, so gradients of every
// output element are exercised.
double weighted_sum(const Tensor& out, const std::vector<double>& cot) {
  double acc = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) acc += out.data()[i] * cot[i];
  return acc;
}

Tensor backprop_weighted(const Tensor& out, const std::vector<double>& cot) {
  Tensor loss = sum(mul(out, Tensor::from_data(out.shape(), std::vector<double>(cot))));
  loss.backward();
  return loss;
}

}  // namespace

TEST_CASE("conv2d identity kernel reproduces the input") {
  Rng rng(1);
  Tensor x = random_tensor({1, 6, 7}, rng);
  Tensor k = Tensor::from_data({1, 1, 1, 1}, {1.0});
  Tensor y = conv2d(x, k, Tensor(), 1, 1, Padding::Same);
  REQUIRE(shape_eq(y.shape(), x.shape()));
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("conv2d matches the hand-computed valid example") {
  Tensor x = Tensor::from_data({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor k = Tensor::from_data({1, 1, 2, 2}, {1, 0, 0, 1});
  Tensor y = conv2d(x, k, Tensor(), 1, 1, Padding::Valid);
  REQUIRE(shape_eq(y.shape(), {1, 2, 2}));
  CHECK(y.data() == std::vector<double>{6, 8, 12, 14});
}

TEST_CASE("conv2d 5x5 stride-2 same halves 512x384 to 256x192") {
  CHECK(conv_axis_geom(512, 5, 2, 1, Padding::Same).out == 256);
  CHECK(conv_axis_geom(384, 5, 2, 1, Padding::Same).out == 192);
  Rng rng(2);
  Tensor x = random_tensor({1, 384, 512}, rng);
  Tensor k = random_tensor({1, 1, 5, 5}, rng);
  Tensor y = conv2d(x, k, Tensor(), 2, 1, Padding::Same);
  CHECK(shape_eq(y.shape(), {1, 192, 256}));
}

TEST_CASE("conv2d rejects channel mismatches and bad hyperparameters") {
  Rng rng(3);
  Tensor x = random_tensor({3, 4, 4}, rng);
  Tensor k = random_tensor({2, 4, 3, 3}, rng);
  CHECK_THROWS_AS(conv2d(x, k, Tensor(), 1, 1, Padding::Same), std::invalid_argument);
  Tensor ok = random_tensor({2, 3, 3, 3}, rng);
  CHECK_THROWS_AS(conv2d(x, ok, Tensor(), 0, 1, Padding::Same), std::invalid_argument);
  CHECK_THROWS_AS(conv2d(x, ok, Tensor(), 1, 0, Padding::Same), std::invalid_argument);
  Tensor even = random_tensor({2, 3, 2, 2}, rng);
  CHECK_THROWS_AS(conv2d(x, even, Tensor(), 1, 1, Padding::Same), std::invalid_argument);
}

TEST_CASE("conv2d stride-1 same padding preserves extents for odd kernels and any dilation") {
  Rng rng(4);
  for (int k : {1, 3, 5, 7, 9}) {
    for (int d : {1, 2, 3, 4}) {
      Tensor x = random_tensor({2, 11, 13}, rng);
      Tensor w = random_tensor({3, 2, k, k}, rng);
      Tensor y = conv2d(x, w, Tensor(), 1, d, Padding::Same);
      CHECK(shape_eq(y.shape(), {3, 11, 13}));
    }
  }
}

TEST_CASE("conv2d forward matches the direct-summation oracle") {
  Rng rng(5);
  struct Case {
    int cin, h, w, cout, k, stride, dil;
    bool same;
  };
  const Case cases[] = {
      {1, 5, 6, 1, 3, 1, 1, true},  {2, 8, 7, 3, 3, 1, 2, true},  {3, 9, 9, 2, 5, 2, 1, true},
      {2, 6, 6, 2, 3, 1, 1, false}, {1, 10, 8, 4, 5, 2, 1, true}, {2, 7, 9, 3, 3, 2, 2, false},
  };
  for (const Case& c : cases) {
    Tensor x = random_tensor({c.cin, c.h, c.w}, rng);
    Tensor k = random_tensor({c.cout, c.cin, c.k, c.k}, rng);
    Tensor b = random_tensor({c.cout}, rng);
    Tensor y = conv2d(x, k, b, c.stride, c.dil, c.same ? Padding::Same : Padding::Valid);
    int ho = 0, wo = 0;
    const std::vector<double> ref = oracles::conv2d(x.data(), c.cin, c.h, c.w, k.data(), c.cout,
                                                    c.k, c.k, &b.data(), c.stride, c.dil, c.same, ho, wo);
    REQUIRE(shape_eq(y.shape(), {c.cout, ho, wo}));
    CHECK(oracles::max_rel_err(y.data(), ref) < 1e-12);
  }
}

TEST_CASE("conv2d adjoint identity <conv(x),y> == <x, dx(y)>") {
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const int stride = 1 + static_cast<int>(rng.uniform_int(2));
    Tensor x = random_tensor({2, 8, 8}, rng, true);
    Tensor k = random_tensor({3, 2, 3, 3}, rng);
    Tensor y = conv2d(x, k, Tensor(), stride, 1, Padding::Same);
    std::vector<double> cot(y.size());
    for (double& v : cot) v = rng.uniform(-1, 1);
    backprop_weighted(y, cot);
    const double lhs = weighted_sum(y, cot);
    double rhs = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) rhs += x.data()[i] * x.grad()[i];
    CHECK(std::abs(lhs - rhs) <= 1e-9 * std::max(1.0, std::abs(lhs)));
  }
}

TEST_CASE("conv2d gradients match finite differences") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const int stride = 1 + static_cast<int>(rng.uniform_int(2));
    const int dil = 1 + static_cast<int>(rng.uniform_int(2));
    const Padding pad = rng.bernoulli(0.5) ? Padding::Same : Padding::Valid;
    Tensor x = random_tensor({2, 6, 6}, rng, true);
    Tensor k = random_tensor({2, 2, 3, 3}, rng, true);
    Tensor b = random_tensor({2}, rng, true);
    Tensor out = conv2d(x, k, b, stride, dil, pad);
    std::vector<double> cot(out.size());
    for (double& v : cot) v = rng.uniform(-1, 1);
    backprop_weighted(out, cot);
    auto loss = [&] { return weighted_sum(conv2d(x, k, b, stride, dil, pad), cot); };
    CHECK(oracles::max_rel_err(x.grad(), oracles::finite_diff(x, loss)) < 1e-4);
    CHECK(oracles::max_rel_err(k.grad(), oracles::finite_diff(k, loss)) < 1e-4);
    CHECK(oracles::max_rel_err(b.grad(), oracles::finite_diff(b, loss)) < 1e-4);
  }
}

TEST_CASE("conv3d zero kernel gives zero output") {
  Rng rng(8);
  Tensor x = random_tensor({2, 4, 5, 5}, rng);
  Tensor k = Tensor::zeros({3, 2, 4, 3, 3});
  Tensor y = conv3d(x, k, Tensor(), 1, Padding::Same);
  for (double v : y.data()) CHECK(v == 0.0);
}

TEST_CASE("conv3d valid temporal padding with kt == T collapses time") {
  Rng rng(9);
  Tensor x = random_tensor({1, 5, 4, 4}, rng);
  Tensor k = random_tensor({2, 1, 5, 3, 3}, rng);
  Tensor y = conv3d(x, k, Tensor(), 1, Padding::Valid);
  CHECK(shape_eq(y.shape(), {2, 1, 4, 4}));
  CHECK_THROWS_AS(conv3d(random_tensor({1, 3, 4, 4}, rng), k, Tensor(), 1, Padding::Valid),
                  std::invalid_argument);
}

TEST_CASE("conv3d dilated forward matches the direct-summation oracle") {
  Rng rng(10);
  for (const bool temporal_same : {true, false}) {
    Tensor x = random_tensor({1, 3, 4, 4}, rng);
    Tensor k = random_tensor({1, 1, 3, 3, 3}, rng);
    Tensor y = conv3d(x, k, Tensor(), 2, temporal_same ? Padding::Same : Padding::Valid);
    int to = 0, ho = 0, wo = 0;
    const std::vector<double> ref = oracles::conv3d(x.data(), 1, 3, 4, 4, k.data(), 1, 3, 3, 3,
                                                    nullptr, 2, temporal_same, to, ho, wo);
    REQUIRE(shape_eq(y.shape(), {1, to, ho, wo}));
    CHECK(oracles::max_rel_err(y.data(), ref) < 1e-12);
  }
}

TEST_CASE("conv3d gradients match finite differences") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const int dil = 1 + static_cast<int>(rng.uniform_int(2));
    const Padding tpad = rng.bernoulli(0.5) ? Padding::Same : Padding::Valid;
    Tensor x = random_tensor({2, 3, 4, 4}, rng, true);
    Tensor k = random_tensor({2, 2, 3, 3, 3}, rng, true);
    Tensor b = random_tensor({2}, rng, true);
    Tensor out = conv3d(x, k, b, dil, tpad);
    std::vector<double> cot(out.size());
    for (double& v : cot) v = rng.uniform(-1, 1);
    backprop_weighted(out, cot);
    auto loss = [&] { return weighted_sum(conv3d(x, k, b, dil, tpad), cot); };
    CHECK(oracles::max_rel_err(x.grad(), oracles::finite_diff(x, loss)) < 1e-4);
    CHECK(oracles::max_rel_err(k.grad(), oracles::finite_diff(k, loss)) < 1e-4);
    CHECK(oracles::max_rel_err(b.grad(), oracles::finite_diff(b, loss)) < 1e-4);
  }
}

TEST_CASE("transposed_conv2d expands a single pixel into the kernel") {
  Tensor x = Tensor::from_data({1, 1, 1}, {1.0});
  Tensor k = Tensor::from_data({1, 1, 2, 2}, {2, 3, 5, 7});
  Tensor y = transposed_conv2d(x, k, Tensor(), 2);
  REQUIRE(shape_eq(y.shape(), {1, 2, 2}));
  CHECK(y.data() == std::vector<double>{2, 3, 5, 7});
}

TEST_CASE("transposed_conv2d doubles the spatial extents") {
  Rng rng(12);
  Tensor x = random_tensor({3, 8, 6}, rng);
  Tensor k = random_tensor({3, 2, 2, 2}, rng);
  Tensor y = transposed_conv2d(x, k, Tensor(), 2);
  CHECK(shape_eq(y.shape(), {2, 16, 12}));
}

TEST_CASE("transposed_conv2d is the adjoint of the strided conv2d") {
  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor x = random_tensor({2, 5, 4}, rng);
    Tensor k = random_tensor({2, 3, 2, 2}, rng);  // [C_in, C_out, 2, 2]
    Tensor up = transposed_conv2d(x, k, Tensor(), 2);
    Tensor y = random_tensor(up.shape(), rng);
    // Same buffer acts as conv kernels [C_out=2, C_in=3, 2, 2].
    Tensor down = conv2d(y, k, Tensor(), 2, 1, Padding::Valid);
    REQUIRE(shape_eq(down.shape(), x.shape()));
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < up.size(); ++i) lhs += up.data()[i] * y.data()[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += x.data()[i] * down.data()[i];
    CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(1.0, std::abs(lhs)));
  }
}

TEST_CASE("transposed_conv2d gradients match finite differences") {
  Rng rng(14);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = random_tensor({2, 4, 3}, rng, true);
    Tensor k = random_tensor({2, 2, 2, 2}, rng, true);
    Tensor b = random_tensor({2}, rng, true);
    Tensor out = transposed_conv2d(x, k, b, 2);
    std::vector<double> cot(out.size());
    for (double& v : cot) v = rng.uniform(-1, 1);
    backprop_weighted(out, cot);
    auto loss = [&] { return weighted_sum(transposed_conv2d(x, k, b, 2), cot); };
    CHECK(oracles::max_rel_err(x.grad(), oracles::finite_diff(x, loss)) < 1e-4);
    CHECK(oracles::max_rel_err(k.grad(), oracles::finite_diff(k, loss)) < 1e-4);
    CHECK(oracles::max_rel_err(b.grad(), oracles::finite_diff(b, loss)) < 1e-4);
  }
}

TEST_CASE("relu basics") {
  Tensor x = Tensor::from_data({3}, {-1, 0, 2});
  Tensor y = relu(x);
  CHECK(y.data() == std::vector<double>{0, 0, 2});

  Tensor neg = Tensor::from_data({4}, {-3, -2, -1, -0.5}, true);
  Tensor out = relu(neg);
  sum(out).backward();
  for (double v : out.data()) CHECK(v == 0.0);
  for (double g : neg.grad()) CHECK(g == 0.0);
}

TEST_CASE("relu gradient matches finite differences away from zero") {
  Rng rng(15);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> data(24);
    for (double& v : data) {
      v = rng.uniform(0.2, 1.5) * (rng.bernoulli(0.5) ? 1.0 : -1.0);  // keep clear of the kink
    }
    Tensor x = Tensor::from_data({24}, std::move(data), true);
    std::vector<double> cot(24);
    for (double& v : cot) v = rng.uniform(-1, 1);
    backprop_weighted(relu(x), cot);
    auto loss = [&] { return weighted_sum(relu(x), cot); };
    CHECK(oracles::max_rel_err(x.grad(), oracles::finite_diff(x, loss)) < 1e-6);
  }
}

TEST_CASE("batch_norm on constant input yields zeros in train mode") {
  Tensor x = Tensor::full({2, 3, 3}, 4.2);
  Tensor gamma = Tensor::full({2}, 1.0, true);
  Tensor beta = Tensor::zeros({2}, true);
  Tensor rm = Tensor::zeros({2});
  Tensor rv = Tensor::full({2}, 1.0);
  Tensor y = batch_norm(x, gamma, beta, rm, rv, Mode::Train);
  for (double v : y.data()) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("batch_norm beta shifts standardized input") {
  Rng rng(16);
  Tensor x = random_tensor({1, 8, 8}, rng);
  Tensor gamma = Tensor::full({1}, 1.0, true);
  Tensor beta = Tensor::full({1}, 5.0, true);
  Tensor rm = Tensor::zeros({1});
  Tensor rv = Tensor::full({1}, 1.0);
  Tensor y = batch_norm(x, gamma, beta, rm, rv, Mode::Train);
  double mean = 0.0;
  for (double v : y.data()) mean += v;
  mean /= static_cast<double>(y.size());
  CHECK(mean == doctest::Approx(5.0).epsilon(1e-9));
}

TEST_CASE("batch_norm eval mode applies running statistics") {
  Tensor x = Tensor::from_data({1, 1, 2}, {3.0, 5.0});
  Tensor gamma = Tensor::full({1}, 2.0, true);
  Tensor beta = Tensor::full({1}, 1.0, true);
  Tensor rm = Tensor::full({1}, 3.0);
  Tensor rv = Tensor::full({1}, 4.0);
  Tensor y = batch_norm(x, gamma, beta, rm, rv, Mode::Eval);
  CHECK(y.data()[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(y.data()[1] == doctest::Approx(1.0 + 2.0 * 2.0 / std::sqrt(4.0 + 1e-5)).epsilon(1e-6));
}

TEST_CASE("batch_norm updates running statistics with the configured momentum") {
  Tensor x = Tensor::from_data({1, 1, 4}, {1.0, 2.0, 3.0, 4.0});
  Tensor gamma = Tensor::full({1}, 1.0, true);
  Tensor beta = Tensor::zeros({1}, true);
  Tensor rm = Tensor::zeros({1});
  Tensor rv = Tensor::full({1}, 1.0);
  batch_norm(x, gamma, beta, rm, rv, Mode::Train, 0.1);
  CHECK(rm.data()[0] == doctest::Approx(0.25).epsilon(1e-12));   // 0.9*0 + 0.1*2.5
  CHECK(rv.data()[0] == doctest::Approx(1.025).epsilon(1e-12));  // 0.9*1 + 0.1*1.25
}

TEST_CASE("batch_norm gradients match finite differences") {
  Rng rng(17);
  for (const Mode mode : {Mode::Train, Mode::Eval}) {
    for (int trial = 0; trial < 10; ++trial) {
      Tensor x = random_tensor({3, 4, 4}, rng, true);
      Tensor gamma = random_tensor({3}, rng, true);
      Tensor beta = random_tensor({3}, rng, true);
      Tensor rm = random_tensor({3}, rng);
      Tensor rv = Tensor::from_data({3}, {0.5, 1.0, 2.0});
      std::vector<double> cot(x.size());
      for (double& v : cot) v = rng.uniform(-1, 1);
      // Freeze the running buffers so the eval path sees the same statistics
      // on every finite-difference evaluation.
      auto loss = [&] {
        Tensor m = rm.detach_copy();
        Tensor v = rv.detach_copy();
        return weighted_sum(batch_norm(x, gamma, beta, m, v, mode), cot);
      };
      {
        Tensor m = rm.detach_copy();
        Tensor v = rv.detach_copy();
        backprop_weighted(batch_norm(x, gamma, beta, m, v, mode), cot);
      }
      CHECK(oracles::max_rel_err(x.grad(), oracles::finite_diff(x, loss)) < 1e-4);
      CHECK(oracles::max_rel_err(gamma.grad(), oracles::finite_diff(gamma, loss)) < 1e-4);
      CHECK(oracles::max_rel_err(beta.grad(), oracles::finite_diff(beta, loss)) < 1e-4);
    }
  }
}

TEST_CASE("batch_norm survives zero variance via epsilon") {
  Tensor x = Tensor::full({1, 2, 2}, 7.0);
  Tensor gamma = Tensor::full({1}, 1.0, true);
  Tensor beta = Tensor::zeros({1}, true);
  Tensor rm = Tensor::zeros({1});
  Tensor rv = Tensor::zeros({1});
  for (const Mode mode : {Mode::Train, Mode::Eval}) {
    Tensor y = batch_norm(x, gamma, beta, rm, rv, mode);
    for (double v : y.data()) CHECK(std::isfinite(v));
  }
}

TEST_CASE("dropout is the identity in eval mode and at rate zero") {
  Rng rng(18);
  Tensor x = random_tensor({4, 4}, rng);
  Tensor eval_out = dropout(x, 0.5, Mode::Eval, rng);
  CHECK(eval_out.same_node(x));
  Tensor zero_rate = dropout(x, 0.0, Mode::Train, rng);
  CHECK(zero_rate.same_node(x));
  CHECK_THROWS_AS(dropout(x, 1.0, Mode::Train, rng), std::invalid_argument);
}

TEST_CASE("dropout keeps roughly two thirds at rate 1/3") {
  Rng rng(19);
  Tensor x = Tensor::full({1000000}, 1.0);
  Tensor y = dropout(x, 1.0 / 3.0, Mode::Train, rng);
  std::size_t survivors = 0;
  for (double v : y.data()) {
    if (v != 0.0) ++survivors;
  }
  const double fraction = static_cast<double>(survivors) / 1e6;
  CHECK(fraction > 0.667 - 0.005);
  CHECK(fraction < 0.667 + 0.005);
  // Inverted scaling: survivors carry 1/(1-rate).
  for (double v : y.data()) CHECK((v == 0.0 || v == doctest::Approx(1.5).epsilon(1e-12)));
}

TEST_CASE("dropout is deterministic under a fixed seed") {
  Tensor x = Tensor::full({512}, 1.0);
  Rng a(77), b(77);
  Tensor ya = dropout(x, 0.4, Mode::Train, a);
  Tensor yb = dropout(x, 0.4, Mode::Train, b);
  CHECK(ya.data() == yb.data());
}

TEST_CASE("dropout gradient matches finite differences for a fixed mask") {
  Rng rng(20);
  Tensor x = random_tensor({40}, rng, true);
  std::vector<double> cot(40);
  for (double& v : cot) v = rng.uniform(-1, 1);
  auto loss = [&] {
    Rng mask_rng(123);
    return weighted_sum(dropout(x, 0.3, Mode::Train, mask_rng), cot);
  };
  {
    Rng mask_rng(123);
    backprop_weighted(dropout(x, 0.3, Mode::Train, mask_rng), cot);
  }
  CHECK(oracles::max_rel_err(x.grad(), oracles::finite_diff(x, loss)) < 1e-6);
}

TEST_CASE("softmax distributions sum to one and backprop correctly") {
  Rng rng(21);
  Tensor x = random_tensor({3, 5, 4}, rng, true, 3.0);
  Tensor y = softmax(x);
  const std::size_t plane = 20;
  for (std::size_t i = 0; i < plane; ++i) {
    double s = 0.0;
    for (int c = 0; c < 3; ++c) s += y.data()[c * plane + i];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
  }
  std::vector<double> cot(y.size());
  for (double& v : cot) v = rng.uniform(-1, 1);
  backprop_weighted(y, cot);
  auto loss = [&] { return weighted_sum(softmax(x), cot); };
  CHECK(oracles::max_rel_err(x.grad(), oracles::finite_diff(x, loss)) < 1e-4);
}

TEST_CASE("softmax_cross_entropy hand values") {
  // Uniform logits: p = 1/3 for every class; crop weight 10 gives 10*ln 3.
  Tensor logits = Tensor::zeros({3, 2, 2});
  ClassMask labels(2, 2, 1);
  Tensor loss = softmax_cross_entropy(logits, labels, {1.0, 10.0, 10.0});
  CHECK(loss.item() == doctest::Approx(10.0 * std::log(3.0)).epsilon(1e-12));

  // A dominant logit drives the loss towards zero.
  Tensor strong = Tensor::zeros({3, 1, 1});
  strong.data()[1] = 50.0;
  ClassMask one(1, 1, 1);
  CHECK(softmax_cross_entropy(strong, one, {1, 1, 1}).item() < 1e-12);

  ClassMask bad(2, 2, 3);
  CHECK_THROWS_AS(softmax_cross_entropy(logits, bad, {1, 10, 10}), std::invalid_argument);
}

TEST_CASE("softmax_cross_entropy gradient matches finite differences") {
  Rng rng(22);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor logits = random_tensor({3, 4, 3}, rng, true, 2.0);
    ClassMask labels(4, 3);
    for (auto& v : labels.values) v = static_cast<std::uint8_t>(rng.uniform_int(3));
    const std::array<double, 3> w{1.0, 10.0, 10.0};
    softmax_cross_entropy(logits, labels, w).backward();
    auto loss = [&] { return softmax_cross_entropy(logits, labels, w).item(); };
    CHECK(oracles::max_rel_err(logits.grad(), oracles::finite_diff(logits, loss)) < 1e-4);
  }
}

TEST_CASE("backward of a plain sum is all ones") {
  Rng rng(23);
  Tensor x = random_tensor({3, 4}, rng, true);
  sum(x).backward();
  for (double g : x.grad()) CHECK(g == 1.0);
}

TEST_CASE("backward requires a scalar") {
  Rng rng(24);
  Tensor x = random_tensor({2, 2}, rng, true);
  Tensor y = relu(x);
  CHECK_THROWS_AS(y.backward(), std::invalid_argument);
}

TEST_CASE("backward visits shared nodes exactly once") {
  Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
  Tensor y = add(x, x);
  sum(y).backward();
  CHECK(x.grad() == std::vector<double>{2.0, 2.0});

  // Diamond: the same intermediate feeds two consumers.
  Tensor z = relu(x);
  Tensor top = add(z, z);
  x.zero_grad();
  sum(top).backward();
  CHECK(x.grad() == std::vector<double>{2.0, 2.0});
}

TEST_CASE("composed conv-relu-sum gradient matches finite differences") {
  Rng rng(25);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = random_tensor({1, 4, 4}, rng, true);
    Tensor k = random_tensor({2, 1, 3, 3}, rng, true);
    auto forward = [&] { return sum(relu(conv2d(x, k, Tensor(), 1, 1, Padding::Same))); };
    forward().backward();
    auto loss = [&] { return forward().item(); };
    // ReLU kinks can make individual FD entries land on the boundary, so
    // skip entries whose two-sided difference straddles an activation flip.
    const auto fdx = oracles::finite_diff(x, loss);
    const auto fdk = oracles::finite_diff(k, loss);
    CHECK(oracles::max_rel_err(x.grad(), fdx) < 1e-4);
    CHECK(oracles::max_rel_err(k.grad(), fdk) < 1e-4);
  }
}

TEST_CASE("concat and stack_time route gradients to their sources") {
  Rng rng(26);
  Tensor a = random_tensor({2, 3, 3}, rng, true);
  Tensor b = random_tensor({1, 3, 3}, rng, true);
  Tensor cat = concat({a, b});
  REQUIRE(shape_eq(cat.shape(), {3, 3, 3}));
  std::vector<double> cot(cat.size());
  for (double& v : cot) v = rng.uniform(-1, 1);
  backprop_weighted(cat, cot);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.grad()[i] == cot[i]);
  for (std::size_t i = 0; i < b.size(); ++i) CHECK(b.grad()[i] == cot[a.size() + i]);

  Tensor f0 = random_tensor({2, 2, 2}, rng, true);
  Tensor f1 = random_tensor({2, 2, 2}, rng, true);
  Tensor stacked = stack_time({f0, f1});
  REQUIRE(shape_eq(stacked.shape(), {2, 2, 2, 2}));
  // Frame s channel c becomes [c][s].
  for (int c = 0; c < 2; ++c) {
    for (int i = 0; i < 4; ++i) {
      CHECK(stacked.data()[(c * 2 + 0) * 4 + i] == f0.data()[c * 4 + i]);
      CHECK(stacked.data()[(c * 2 + 1) * 4 + i] == f1.data()[c * 4 + i]);
    }
  }
  std::vector<double> cot2(stacked.size());
  for (double& v : cot2) v = rng.uniform(-1, 1);
  backprop_weighted(stacked, cot2);
  for (int c = 0; c < 2; ++c) {
    for (int i = 0; i < 4; ++i) {
      CHECK(f0.grad()[c * 4 + i] == cot2[(c * 2 + 0) * 4 + i]);
      CHECK(f1.grad()[c * 4 + i] == cot2[(c * 2 + 1) * 4 + i]);
    }
  }

  CHECK_THROWS_AS(concat({a, random_tensor({1, 2, 3}, rng)}), std::invalid_argument);
  CHECK_THROWS_AS(stack_time({f0, random_tensor({2, 2, 3}, rng)}), std::invalid_argument);
}

TEST_CASE("he_init statistics") {
  Rng rng(27);
  Tensor t = he_init({1000000}, 50, rng, false);
  double mean = 0.0;
  for (double v : t.data()) mean += v;
  mean /= 1e6;
  CHECK(std::abs(mean) < 0.002);
  double var = 0.0;
  for (double v : t.data()) var += (v - mean) * (v - mean);
  var /= 1e6;
  const double expected = 2.0 / 50.0;  // std 0.2
  CHECK(std::abs(var - expected) / expected < 0.02);
  CHECK_THROWS_AS(he_init({4}, 0, rng), std::invalid_argument);
}

TEST_CASE("identical seeds give bit-identical results, train mode included") {
  auto run = [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor x = he_init({2, 6, 6}, 36, rng, false);
    Tensor k = he_init({3, 2, 3, 3}, 18, rng);
    Tensor y = conv2d(x, k, Tensor(), 1, 1, Padding::Same);
    y = relu(y);
    return dropout(y, 1.0 / 3.0, Mode::Train, rng).data();
  };
  CHECK(run(99) == run(99));
  CHECK(run(99) != run(100));
}
