#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "diffcon/controller/composed.hpp"
#include "diffcon/controller/fourier.hpp"
#include "diffcon/controller/lora.hpp"
#include "diffcon/controller/side_net.hpp"
#include "diffcon/diffusion/ops.hpp"
#include "diffcon/errors.hpp"
#include "diffcon/numkit/grad_check.hpp"
#include "diffcon/schedule.hpp"

using namespace diffcon;

namespace {

ScoreModel core_model(std::size_t dim, std::size_t conditions, int horizon, std::uint64_t seed) {
  ScoreModelDims d;
  d.data_dim = dim;
  d.time_dim = 4;
  d.num_conditions = conditions;
  d.cond_dim = 2;
  d.hidden = 5;
  d.depth = 2;
  Rng rng(seed);
  return ScoreModel(d, horizon, rng);
}

ControllerSpec small_spec() { return {2, 0.7, 4, 2, Activation::tanh}; }

// Sets every trainable parameter to a random value so no head is zero.
void randomize(ComposedModel& m, Rng& rng, double scale) {
  Vec p = m.trainable_params();
  for (auto& v : p) v = scale * rng.normal();
  m.set_trainable_params(p);
}

}  // namespace

TEST(SideCorrection, ZeroGateAndZeroHeadGiveZero) {
  const NoiseSchedule s = build_constant(3, 0.1);
  const Vec s0 = side_correction(s, Vec{0.3, -0.2}, Vec{1.0, 2.0}, 0.0, Vec{0.0, 0.0}, 1);
  EXPECT_EQ(s0, (Vec{0.0, 0.0}));
}

TEST(SideCorrection, ClosedGateLeavesOnlyHeadTerm) {
  const NoiseSchedule s = build_linear(5, 0.05, 0.3);
  const int t = 2;
  const Vec h{0.4, -1.1};
  const Vec out = side_correction(s, Vec{0.3, 0.9}, Vec{1.0, 2.0}, 0.0, h, t);
  const double k = std::sqrt(1.0 - s.alpha_bar(t)) / s.beta(t);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(out[i], -k * std::sqrt(s.alpha(t)) * h[i], 1e-14);
}

TEST(SideCorrection, HandEvaluatedValue) {
  // -z eps0 - sqrt(1 - abar_1)/beta (z x + sqrt(alpha)(1 - z) h), abar_1 = 0.81
  const NoiseSchedule s = build_constant(3, 0.1);
  const Vec out = side_correction(s, Vec{0.3}, Vec{1.0}, 0.5, Vec{0.2}, 1);
  EXPECT_NEAR(out[0], -2.7429709343330435, 1e-13);
}

TEST(ComposedModel, ZeroInitMatchesPretrainedBitwiseForAllModes) {
  const NoiseSchedule s = build_linear(6, 0.02, 0.3);
  const ScoreModel core = core_model(2, 2, 6, 1);
  Rng rng(2);
  for (Mode mode : kAllModes) {
    const ComposedModel m = ComposedModel::make(core, s, mode, small_spec(), 1.7, rng);
    for (int k = 0; k < 50; ++k) {
      const Vec x = rng.normal_vector(2);
      const int c = rng.uniform_int(-1, 1);
      const int t = rng.uniform_int(1, 5);
      ASSERT_EQ(m.predict(x, c, t), core.predict(x, c, t)) << mode_name(mode);
    }
  }
}

TEST(ComposedModel, ZeroLambdaIgnoresSideNet) {
  const NoiseSchedule s = build_linear(6, 0.02, 0.3);
  const ScoreModel core = core_model(2, 0, 6, 3);
  Rng rng(4);
  for (Mode mode : {Mode::graybox_gated, Mode::graybox_ungated}) {
    ComposedModel m = ComposedModel::make(core, s, mode, small_spec(), 0.0, rng);
    randomize(m, rng, 1.0);
    for (int k = 0; k < 20; ++k) {
      const Vec x = rng.normal_vector(2);
      EXPECT_EQ(m.predict(x, kNullCondition, 3), core.predict(x, kNullCondition, 3));
    }
  }
}

TEST(ComposedModel, GatedMatchesHandComposition) {
  const NoiseSchedule s = build_linear(5, 0.05, 0.3);
  const ScoreModel core = core_model(1, 2, 5, 5);
  Rng rng(6);
  ComposedModel m = ComposedModel::make(core, s, Mode::graybox_gated, small_spec(), 1.3, rng);
  randomize(m, rng, 0.5);
  for (int t = 1; t < 5; ++t) {
    const Vec x{rng.normal()};
    const int c = 1;
    const double e0 = core.predict(x, c, t)[0];
    const double mu0 = (x[0] - s.beta(t) / std::sqrt(1.0 - s.alpha_bar(t)) * e0) / std::sqrt(s.alpha(t));
    const Vec zh = m.side()->forward(Vec{mu0}, c, t);
    const double z = zh[0], h = zh[1];
    const double e0_mu = core.predict(Vec{mu0}, c, t)[0];
    const double k = std::sqrt(1.0 - s.alpha_bar(t)) / s.beta(t);
    const double side = -z * e0_mu - k * (z * mu0 + std::sqrt(s.alpha(t)) * (1.0 - z) * h);
    EXPECT_NEAR(m.predict(x, c, t)[0], e0 + 1.3 * side, 1e-12);
  }
}

TEST(ComposedModel, UngatedAddsScaledNetOutput) {
  const NoiseSchedule s = build_linear(5, 0.05, 0.3);
  const ScoreModel core = core_model(2, 0, 5, 7);
  Rng rng(8);
  ComposedModel m = ComposedModel::make(core, s, Mode::graybox_ungated, small_spec(), 2.0, rng);
  randomize(m, rng, 0.5);
  const Vec x{0.3, -0.4};
  const Vec e0 = core.predict(x, kNullCondition, 2);
  const Vec net = m.side()->forward(x, kNullCondition, 2);
  const Vec out = m.predict(x, kNullCondition, 2);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(out[i], e0[i] + 2.0 * net[i], 1e-14);
}

TEST(ComposedModel, BackwardMatchesFiniteDifferencesForAllModes) {
  const NoiseSchedule s = build_linear(6, 0.05, 0.3);
  const ScoreModel core = core_model(2, 2, 6, 9);
  Rng rng(10);
  for (Mode mode : kAllModes) {
    ComposedModel m = ComposedModel::make(core, s, mode, small_spec(), 1.1, rng);
    randomize(m, rng, 0.3);
    const Vec x = rng.normal_vector(2);
    const Vec u = rng.normal_vector(2);
    const int c = 0, t = 2;
    auto fn = [&](std::span<const double> p) {
      ComposedModel copy = m;
      copy.set_trainable_params(p);
      LossAndGrad out{dot(copy.predict(x, c, t), u), Vec(copy.num_trainable(), 0.0)};
      copy.backward(x, c, t, u, out.grad);
      return out;
    };
    EXPECT_LT(grad_check(fn, m.trainable_params()), 1e-4) << mode_name(mode);
  }
}

TEST(ComposedModel, InconsistentPartsRejected) {
  const NoiseSchedule s = build_linear(6, 0.05, 0.3);
  const ScoreModel core = core_model(1, 0, 6, 11);
  EXPECT_THROW(ComposedModel(core, s, Mode::lora_only, std::nullopt, std::nullopt, 1.0), ConfigError);
  Rng rng(1);
  ComposedModel m = ComposedModel::make(core, s, Mode::graybox_gated, small_spec(), 1.0, rng);
  EXPECT_THROW(ComposedModel(core, s, Mode::graybox_ungated, std::nullopt, m.side(), 1.0), ConfigError);
  EXPECT_THROW(ComposedModel(core, build_constant(4, 0.1), Mode::graybox_gated, std::nullopt, m.side(), 1.0),
               ShapeError);
  EXPECT_THROW(m.set_lambda_model(-1.0), ConfigError);
  EXPECT_THROW(parse_mode("whitebox"), ConfigError);
  for (Mode mode : kAllModes) EXPECT_EQ(parse_mode(mode_name(mode)), mode);
}

TEST(ComposedModel, CheckpointRoundTripPreservesOutputs) {
  const NoiseSchedule s = build_linear(6, 0.05, 0.3);
  const ScoreModel core = core_model(2, 2, 6, 12);
  Rng rng(13);
  for (Mode mode : kAllModes) {
    ComposedModel m = ComposedModel::make(core, s, mode, small_spec(), 0.8, rng);
    randomize(m, rng, 0.2);
    const auto bytes = serialize_composed(m);
    const ComposedModel back = deserialize_composed(bytes, s);
    EXPECT_EQ(back.mode(), mode);
    EXPECT_EQ(back.lambda_model(), 0.8);
    EXPECT_EQ(serialize_composed(back), bytes);
    const Vec x{0.1, 0.7};
    EXPECT_EQ(back.predict(x, 1, 4), m.predict(x, 1, 4));
    const CheckpointContents parts = parse_checkpoint(bytes);
    EXPECT_EQ(serialize_pretrained(parts.core), serialize_pretrained(core));
  }
}

TEST(ComposedModel, PretrainedCheckpointHasNoMode) {
  const ScoreModel core = core_model(1, 0, 4, 14);
  const auto bytes = serialize_pretrained(core);
  EXPECT_FALSE(parse_checkpoint(bytes).mode.has_value());
  EXPECT_EQ(serialize_pretrained(deserialize_pretrained(bytes)), bytes);
  auto cut = bytes;
  cut.resize(cut.size() - 3);
  EXPECT_THROW(parse_checkpoint(cut), ParseError);
}

TEST(Lora, ZeroBIsBaseLayer) {
  Rng rng(15);
  const DenseLayer base{Matrix::identity(3), {0.1, 0.2, 0.3}, Activation::identity};
  DenseLayer w = base;
  for (auto& v : w.weight.data) v = rng.normal();
  const LoraLayer l = LoraLayer::make(3, 3, 2, 1.0, rng);
  const Vec x{0.5, -1.0, 2.0};
  const Vec y = lora_forward(w, l, x);
  const Vec ref = matvec(w.weight, x);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(y[i], ref[i] + w.bias[i]);
}

TEST(Lora, FullRankCancellationGivesZeroMap) {
  // B A = -W / scale with A = I, B = -W / scale
  const double scale = 0.5;
  DenseLayer w{Matrix(2, 2), {0.0, 0.0}, Activation::identity};
  w.weight.data = {1.0, -2.0, 0.5, 3.0};
  LoraLayer l{Matrix::identity(2), Matrix(2, 2), scale};
  for (std::size_t i = 0; i < 4; ++i) l.b.data[i] = -w.weight.data[i] / scale;
  const Vec y = lora_forward(w, l, Vec{0.7, -0.3});
  EXPECT_NEAR(y[0], 0.0, 1e-15);
  EXPECT_NEAR(y[1], 0.0, 1e-15);
}

TEST(Lora, RankOneMatchesDenseReconstruction) {
  Rng rng(16);
  DenseLayer w{Matrix(3, 3), rng.normal_vector(3), Activation::identity};
  for (auto& v : w.weight.data) v = rng.normal();
  LoraLayer l{Matrix(1, 3), Matrix(3, 1), 0.9};
  for (auto& v : l.a.data) v = rng.normal();
  for (auto& v : l.b.data) v = rng.normal();
  const Vec x = rng.normal_vector(3);
  for (std::size_t i = 0; i < 3; ++i) {
    double yi = w.bias[i];
    for (std::size_t j = 0; j < 3; ++j) yi += (w.weight(i, j) + 0.9 * l.b(i, 0) * l.a(0, j)) * x[j];
    EXPECT_NEAR(lora_forward(w, l, x)[i], yi, 1e-13);
  }
}

TEST(Lora, MergedNetworkMatchesPerLayerForward) {
  Rng rng(17);
  const std::vector<std::size_t> dims{3, 4, 2};
  const Mlp base = Mlp::make(dims, Activation::identity, rng);
  LoraSet set = LoraSet::make(base, 2, 1.5, rng);
  Vec p = set.params();
  for (auto& v : p) v = rng.normal();
  set.set_params(p);
  const Vec x = rng.normal_vector(3);
  const Vec h = lora_forward(base.layers()[0], set.layers[0], x);
  const Vec y = lora_forward(base.layers()[1], set.layers[1], h);
  const Vec merged = mlp_forward(merge_lora(base, set), x);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(merged[i], y[i], 1e-12);
}

TEST(Lora, RankZeroRejected) {
  Rng rng(1);
  EXPECT_THROW(LoraLayer::make(3, 3, 0, 1.0, rng), ConfigError);
}

TEST(Fourier, PhiAndRhoSpecialValues) {
  const auto p0 = phi(Vec{0.0}, Vec{3.7}, 0.4);
  EXPECT_EQ(p0[0], 1.0);
  EXPECT_EQ(p0[1], 0.0);
  // omega mu0 / sqrt(beta_tilde) = pi
  const auto ppi = phi(Vec{1.0}, Vec{std::numbers::pi * 0.5}, 0.25);
  EXPECT_NEAR(ppi[0], -1.0, 1e-15);
  EXPECT_NEAR(ppi[1], 0.0, 1e-15);
  const auto r = rho(Vec{0.0}, Vec{0.0}, 1.0, 1);
  EXPECT_NEAR(r[0], 1.0 / std::sqrt(2.0 * std::numbers::pi), 1e-15);
  EXPECT_EQ(r[1], 0.0);
}

TEST(Fourier, ZeroFrequencyEstimateIsPeakDensity) {
  FourierBasis b;
  b.beta_tilde = 0.3;
  b.omegas = {Vec{0.0, 0.0}};
  for (double shift : {0.0, 1.0, 5.0})
    EXPECT_NEAR(kernel_mc_estimate(b, Vec{0.2, 0.1}, Vec{shift, -shift}), 1.0 / (2.0 * std::numbers::pi * 0.3), 1e-14);
}

TEST(Fourier, EstimateIsUnbiasedAtMean) {
  Rng rng(18);
  const std::size_t m = 100000;
  const FourierBasis b = FourierBasis::sample(1, m, 1.0, rng);
  const Vec mu{0.4};
  // Per-frequency terms are cos(.)/sqrt(2 pi); their spread gives the SE.
  double sum = 0, sq = 0;
  for (const auto& w : b.omegas) {
    const auto p = phi(w, mu, 1.0);
    const auto r = rho(w, mu, 1.0, 1);
    const double v = p[0] * r[0] + p[1] * r[1];
    sum += v;
    sq += v * v;
  }
  const double se = std::sqrt((sq / m - (sum / m) * (sum / m)) / m);
  EXPECT_NEAR(kernel_mc_estimate(b, mu, mu), 1.0 / std::sqrt(2.0 * std::numbers::pi), 3.0 * se + 1e-12);
  EXPECT_NEAR(kernel_mc_estimate(b, mu, mu), 0.39894, 3.0 * se + 1e-5);
}

TEST(Fourier, OffMeanEstimateMatchesDensity) {
  Rng rng(19);
  const FourierBasis b = FourierBasis::sample(2, 200000, 0.5, rng);
  const Vec mu{0.1, -0.3}, x{0.6, 0.2};
  const double exact = gaussian_density(x, mu, 0.5);
  // |phi^T rho| <= (2 pi beta)^{-d/2}
  const double bound = 1.0 / (2.0 * std::numbers::pi * 0.5);
  EXPECT_NEAR(kernel_mc_estimate(b, mu, x), exact, 4.0 * bound / std::sqrt(200000.0));
}

TEST(Fourier, BadInputsRejected) {
  Rng rng(1);
  EXPECT_THROW(FourierBasis::sample(1, 0, 1.0, rng), ConfigError);
  EXPECT_THROW(FourierBasis::sample(1, 5, 0.0, rng), DomainError);
  const FourierBasis b = FourierBasis::sample(2, 5, 1.0, rng);
  EXPECT_THROW(kernel_mc_estimate(b, Vec{0.0}, Vec{0.0}), ShapeError);
}
