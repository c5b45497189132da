#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "diffcon/numkit/adam.hpp"
#include "diffcon/numkit/checkpoint.hpp"
#include "diffcon/numkit/embedding.hpp"
#include "diffcon/numkit/grad_check.hpp"
#include "diffcon/numkit/matrix.hpp"
#include "diffcon/numkit/mlp.hpp"
#include "diffcon/rng.hpp"

using namespace diffcon;

namespace {

Mlp random_mlp(std::vector<std::size_t> dims, Activation act, std::uint64_t seed) {
  Rng rng(seed);
  Mlp m = Mlp::make(dims, act, rng);
  Vec p = m.params();
  for (auto& v : p) v = rng.normal();  // non-zero biases too
  m.set_params(p);
  return m;
}

// Default initialization plus a small perturbation so biases are non-zero.
// Unlike random_mlp this keeps tanh out of deep saturation, where gradient
// entries near 1e-7 fall below the finite-difference roundoff floor.
Mlp initialized_mlp(std::vector<std::size_t> dims, Activation act, std::uint64_t seed) {
  Rng rng(seed);
  Mlp m = Mlp::make(dims, act, rng);
  Vec p = m.params();
  for (auto& v : p) v += 0.3 * rng.normal();
  m.set_params(p);
  return m;
}

// Central differences of <u, f(params)> written independently of grad_check.
Vec fd_param_grad(Mlp m, const Vec& x, const Vec& u, double h) {
  Vec p = m.params();
  Vec g(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double s = p[i];
    p[i] = s + h;
    m.set_params(p);
    const double up = dot(mlp_forward(m, x), u);
    p[i] = s - h;
    m.set_params(p);
    const double down = dot(mlp_forward(m, x), u);
    p[i] = s;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

}  // namespace

TEST(Mlp, IdentityLayerPassesInputThrough) {
  DenseLayer l{Matrix::identity(2), {0.0, 0.0}, Activation::identity};
  const Mlp m({l});
  const Vec y = mlp_forward(m, Vec{1.0, 2.0});
  EXPECT_EQ(y, (Vec{1.0, 2.0}));
}

TEST(Mlp, ZeroLastLayerGivesZeroOutput) {
  Rng rng(1);
  const std::vector<std::size_t> dims{3, 5, 2};
  const Mlp m = Mlp::make(dims, Activation::tanh, rng, true);
  for (int k = 0; k < 10; ++k) {
    const Vec y = mlp_forward(m, rng.normal_vector(3));
    EXPECT_EQ(y, (Vec{0.0, 0.0}));
  }
}

TEST(Mlp, HandSetTanhNetworkMatchesManualComposition) {
  // 1-2-1: h = tanh(W1 x + b1), y = W2 h + b2
  DenseLayer l1{Matrix(2, 1, Vec{0.5, -1.5}), {0.1, 0.2}, Activation::tanh};
  DenseLayer l2{Matrix(1, 2, Vec{2.0, 3.0}), {-0.3}, Activation::identity};
  const Mlp m({l1, l2});
  const double x = 0.7;
  const double expected = 2.0 * std::tanh(0.5 * x + 0.1) + 3.0 * std::tanh(-1.5 * x + 0.2) - 0.3;
  EXPECT_NEAR(mlp_forward(m, Vec{x})[0], expected, 1e-15);
}

TEST(Mlp, ForwardIsBitwiseDeterministic) {
  const Mlp m = random_mlp({4, 8, 8, 3}, Activation::tanh, 2);
  const Vec x{0.1, -0.2, 0.3, 0.4};
  EXPECT_EQ(mlp_forward(m, x), mlp_forward(m, x));
}

TEST(Mlp, InputDimensionMismatchThrows) {
  const Mlp m = random_mlp({3, 2}, Activation::tanh, 3);
  EXPECT_THROW(mlp_forward(m, Vec{1.0}), ShapeError);
  EXPECT_THROW(mlp_backward(m, Vec{1.0, 2.0, 3.0}, Vec{1.0}), ShapeError);
}

TEST(Mlp, FinalLayerMustBeIdentity) {
  DenseLayer l{Matrix::identity(2), {0.0, 0.0}, Activation::tanh};
  EXPECT_THROW(Mlp({l}), ShapeError);
}

TEST(MlpBackward, IdentityLayerWeightGradientIsOuterProduct) {
  DenseLayer l{Matrix(2, 3, Vec{1, 2, 3, 4, 5, 6}), {0.0, 0.0}, Activation::identity};
  const Mlp m({l});
  const Vec x{0.5, -1.0, 2.0};
  const Vec g{3.0, -2.0};
  const MlpGradient grad = mlp_backward(m, x, g);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(grad.params[i * 3 + j], g[i] * x[j]);
  EXPECT_DOUBLE_EQ(grad.params[6], g[0]);
  EXPECT_DOUBLE_EQ(grad.params[7], g[1]);
  // input gradient W^T g
  EXPECT_DOUBLE_EQ(grad.input[0], 1 * 3.0 + 4 * -2.0);
}

TEST(MlpBackward, ZeroUpstreamGivesZeroGradients) {
  const Mlp m = random_mlp({2, 4, 1}, Activation::relu, 4);
  const MlpGradient g = mlp_backward(m, Vec{0.3, -0.4}, Vec{0.0});
  for (double v : g.params) EXPECT_EQ(v, 0.0);
  for (double v : g.input) EXPECT_EQ(v, 0.0);
}

TEST(MlpBackward, Random231MatchesFiniteDifferences) {
  const Mlp m = random_mlp({2, 3, 1}, Activation::tanh, 5);
  const Vec x{0.4, -0.9};
  const Vec u{1.3};
  const MlpGradient g = mlp_backward(m, x, u);
  const Vec fd = fd_param_grad(m, x, u, 1e-5);
  for (std::size_t i = 0; i < fd.size(); ++i) EXPECT_LT(std::abs(g.params[i] - fd[i]) / (std::abs(fd[i]) + 1e-8), 1e-6);
}

TEST(MlpBackward, AllActivationsMatchFiniteDifferencesOn100Instances) {
  Rng rng(6);
  for (int inst = 0; inst < 100; ++inst) {
    const Activation act = inst % 3 == 0 ? Activation::tanh : (inst % 3 == 1 ? Activation::relu : Activation::identity);
    const Mlp m = initialized_mlp({3, 5, 4, 2}, act, 100 + inst);
    const Vec x = rng.normal_vector(3);
    const Vec u = rng.normal_vector(2);
    const MlpGradient g = mlp_backward(m, x, u);
    const Vec fd = fd_param_grad(m, x, u, 1e-5);
    for (std::size_t i = 0; i < fd.size(); ++i)
      ASSERT_LT(std::abs(g.params[i] - fd[i]) / (std::abs(g.params[i]) + 1e-8), 1e-4) << "instance " << inst;
  }
}

TEST(TimeEmbed, ZeroPhaseIsAlternatingZeroOne) {
  // base frequency 0 puts every phase at 0.
  const Vec e = time_embed(3, 6, 10, 0.0);
  EXPECT_EQ(e, (Vec{0, 1, 0, 1, 0, 1}));
}

TEST(TimeEmbed, DeterministicAndOddDimRejected) {
  EXPECT_EQ(time_embed(7, 8, 50), time_embed(7, 8, 50));
  EXPECT_THROW(time_embed(1, 3, 10), ConfigError);
  EXPECT_THROW(time_embed(0, 4, 10), RangeError);
}

TEST(TimeEmbed, Dim4AtFullPhaseByHand) {
  const Vec e = time_embed(10, 4, 10, 1.0);
  EXPECT_DOUBLE_EQ(e[0], std::sin(1.0));
  EXPECT_DOUBLE_EQ(e[1], std::cos(1.0));
  EXPECT_DOUBLE_EQ(e[2], std::sin(2.0));
  EXPECT_DOUBLE_EQ(e[3], std::cos(2.0));
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
  AdamState s = AdamState::for_size(2, 1e-2);
  Vec p{1.0, -2.0};
  for (int k = 0; k < 5; ++k) adam_step(s, p, Vec{0.0, 0.0});
  EXPECT_EQ(p, (Vec{1.0, -2.0}));
  EXPECT_EQ(s.step, 5u);
}

TEST(Adam, ZeroGradientDecaysMoments) {
  AdamState s = AdamState::for_size(2, 1e-2);
  Vec p{1.0, -2.0};
  adam_step(s, p, Vec{0.5, -0.5});
  const Vec m = s.m;
  const Vec v = s.v;
  adam_step(s, p, Vec{0.0, 0.0});
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_DOUBLE_EQ(s.m[i], 0.9 * m[i]);
    EXPECT_DOUBLE_EQ(s.v[i], 0.999 * v[i]);
  }
}

TEST(Adam, FirstStepBiasCorrectionCancels) {
  AdamState s = AdamState::for_size(3, 1e-3);
  Vec p{0.0, 0.0, 0.0};
  const Vec g{2.0, -0.5, 1e-9};
  adam_step(s, p, g);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(std::abs(p[i]), 1e-3 * std::abs(g[i]) / (std::abs(g[i]) + 1e-8), 1e-18);
}

TEST(Adam, TwoStepsMatchDirectRecurrence) {
  AdamState s = AdamState::for_size(1, 1e-3);
  Vec p{0.5};
  const double g = 0.3;
  adam_step(s, p, Vec{g});
  adam_step(s, p, Vec{g});
  double x = 0.5, m = 0, v = 0;
  for (int k = 1; k <= 2; ++k) {
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, k));
    const double vh = v / (1 - std::pow(0.999, k));
    x -= 1e-3 * mh / (std::sqrt(vh) + 1e-8);
  }
  EXPECT_NEAR(p[0], x, 1e-15);
}

TEST(Adam, ShapeMismatchThrows) {
  AdamState s = AdamState::for_size(2, 1e-3);
  Vec p{0.0, 0.0};
  EXPECT_THROW(adam_step(s, p, Vec{1.0}), ShapeError);
}

TEST(GradCheck, QuadraticIsExact) {
  const DifferentiableLoss f = [](std::span<const double> p) {
    return LossAndGrad{0.5 * squared_norm(p), Vec(p.begin(), p.end())};
  };
  EXPECT_LT(grad_check(f, Vec{0.3, -1.2, 2.5}), 1e-9);
}

TEST(GradCheck, ConstantLossIsZero) {
  const DifferentiableLoss f = [](std::span<const double> p) { return LossAndGrad{4.0, Vec(p.size(), 0.0)}; };
  EXPECT_EQ(grad_check(f, Vec{1.0, 2.0}), 0.0);
}

TEST(GradCheck, DetectsWrongGradientAndNonFiniteLoss) {
  const DifferentiableLoss wrong = [](std::span<const double> p) {
    return LossAndGrad{0.5 * squared_norm(p), Vec(p.size(), 0.0)};
  };
  EXPECT_GT(grad_check(wrong, Vec{1.0}), 0.5);
  const DifferentiableLoss bad = [](std::span<const double> p) {
    return LossAndGrad{std::log(p[0]), Vec{1.0 / p[0]}};
  };
  EXPECT_THROW(grad_check(bad, Vec{-1.0}), NumericError);
}

TEST(GradCheck, MlpScoreMatchingLossOnOneSample) {
  const Mlp base = random_mlp({3, 6, 1}, Activation::tanh, 8);
  const Vec x{0.2, -0.1, 0.5};
  const double target = 0.7;
  const DifferentiableLoss f = [&](std::span<const double> p) {
    Mlp m = base;
    m.set_params(p);
    const double e = mlp_forward(m, x)[0] - target;
    const MlpGradient g = mlp_backward(m, x, Vec{e});
    return LossAndGrad{0.5 * e * e, g.params};
  };
  EXPECT_LT(grad_check(f, base.params()), 1e-4);
}

TEST(Checkpoint, MlpRoundTripsAndHeaderLayout) {
  const Mlp m = random_mlp({2, 3, 1}, Activation::relu, 9);
  const auto bytes = serialize_mlp(m);
  ASSERT_GE(bytes.size(), 9u);
  EXPECT_EQ(bytes[0], 'D');
  EXPECT_EQ(bytes[3], 'P');
  EXPECT_EQ(bytes[4], kMlpFormatVersion);
  EXPECT_EQ(bytes[5], 2);  // layer count, little endian
  // 4 magic + 1 version + 4 count + 2 * 12 layer headers + 13 params * 8
  EXPECT_EQ(bytes.size(), 4u + 1 + 4 + 2 * 12 + 13 * 8);
  const Mlp back = deserialize_mlp(bytes);
  EXPECT_EQ(back.params(), m.params());
  EXPECT_EQ(serialize_mlp(back), bytes);
}

TEST(Checkpoint, TruncatedAndCorruptInputsRejected) {
  const Mlp m = random_mlp({2, 1}, Activation::identity, 10);
  auto bytes = serialize_mlp(m);
  auto cut = bytes;
  cut.pop_back();
  EXPECT_THROW(deserialize_mlp(cut), ParseError);
  bytes[0] = 'X';
  EXPECT_THROW(deserialize_mlp(bytes), ParseError);
}
