#include <doctest.h>

#include <cmath>

#include "seqseg/optim.hpp"
#include "seqseg/rng.hpp"

using namespace seqseg;

TEST_CASE("rmsprop leaves the parameter alone on zero gradient and decays v") {
  Tensor p = Tensor::from_data({2}, {1.0, -2.0}, true);
  p.grad();  // allocate zeros
  RmsPropState state;
  state.v = {0.5, 0.25};
  rmsprop_step(p, state);
  CHECK(p.data() == std::vector<double>{1.0, -2.0});
  CHECK(state.v[0] == doctest::Approx(0.45).epsilon(1e-12));
  CHECK(state.v[1] == doctest::Approx(0.225).epsilon(1e-12));
}

TEST_CASE("rmsprop first step with unit gradient") {
  // v = 0.1, delta = -0.01 / sqrt(0.1 + 1e-8) ~ -0.0316228
  Tensor p = Tensor::scalar(0.0, true);
  p.grad()[0] = 1.0;
  RmsPropState state;
  state.learning_rate = 0.01;
  rmsprop_step(p, state);
  CHECK(state.v[0] == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(p.data()[0] == doctest::Approx(-0.0316228).epsilon(1e-5));
  CHECK(state.v[0] >= 0.0);
}

TEST_CASE("rmsprop accumulator stays nonnegative over many random steps") {
  Rng rng(5);
  Tensor p = Tensor::from_data({8}, std::vector<double>(8, 0.0), true);
  RmsProp opt({p});
  for (int step = 0; step < 200; ++step) {
    p.zero_grad();
    auto& g = p.grad();
    for (double& v : g) v = rng.uniform(-3.0, 3.0);
    opt.step(0.01);
    for (double v : opt.accumulators()[0]) CHECK(v >= 0.0);
  }
}

TEST_CASE("rmsprop rejects mismatched accumulator sizes") {
  Tensor p = Tensor::from_data({3}, {1, 2, 3}, true);
  p.grad();
  RmsPropState state;
  state.v = {1.0};
  CHECK_THROWS_AS(rmsprop_step(p, state), std::invalid_argument);
}
