#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "dualls/errors.hpp"
#include "dualls/heatmap.hpp"
#include "dualls/param_vector.hpp"
#include "dualls/predictor.hpp"
#include "support.hpp"

using namespace dualls;
using dualls::testing::random_params;
using dualls::testing::random_sample;
using dualls::testing::tiny_config;

namespace {

GridSpec grid2x2() {
  GridSpec g;
  g.rows = 2;
  g.cols = 2;
  g.origin = {0.0, 0.0};
  g.cell_size = 1.0;
  return g;
}

// Central differences of the full objective, one coordinate at a time.
double max_fd_error(const Predictor& model, const ParamVector& params, std::span<const LossTerm> terms) {
  const ParamVector g = model.loss_and_grad(params, terms).grad;
  const double h = 1e-5;
  double worst = 0.0;
  ParamVector p = params;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double x = p[i];
    p[i] = x + h;
    const double up = model.loss(p, terms);
    p[i] = x - h;
    const double down = model.loss(p, terms);
    p[i] = x;
    const double fd = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(fd), std::abs(g[i]), 1e-6});
    worst = std::max(worst, std::abs(fd - g[i]) / denom);
  }
  return worst;
}

}  // namespace

TEST(Forward, ZeroParamsGiveUniformHeatmap) {
  const Predictor model(tiny_config());
  Rng rng(3);
  const Heatmap h = model.forward(ParamVector(model.param_count()), random_sample(model.config(), rng));
  for (std::size_t c = 0; c < h.size(); ++c) EXPECT_DOUBLE_EQ(h[c], 1.0 / 16.0);
}

TEST(Forward, SoftmaxClosedForm) {
  const std::vector<double> logits{0.0, 0.0, 0.0, std::log(3.0)};
  const Heatmap h = Heatmap::from_logits(grid2x2(), logits);
  EXPECT_NEAR(h[0], 1.0 / 6.0, 1e-15);
  EXPECT_NEAR(h[1], 1.0 / 6.0, 1e-15);
  EXPECT_NEAR(h[2], 1.0 / 6.0, 1e-15);
  EXPECT_NEAR(h[3], 0.5, 1e-15);
}

TEST(Forward, DeterministicAndNormalized) {
  const Predictor model(tiny_config());
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const ParamVector p = random_params(model, rng, 2.0);
    const Sample s = random_sample(model.config(), rng);
    const Heatmap a = model.forward(p, s);
    const Heatmap b = model.forward(p, s);
    EXPECT_EQ(a, b);
    EXPECT_NEAR(a.mass(), 1.0, 1e-6);
  }
}

TEST(Forward, DimensionMismatchIsConfigError) {
  const Predictor model(tiny_config());
  Rng rng(1);
  Sample s = random_sample(model.config(), rng);
  EXPECT_THROW(model.forward(ParamVector(model.param_count() + 1), s), ConfigError);
  s.static_features.push_back(0.0);
  EXPECT_THROW(model.forward(ParamVector(model.param_count()), s), ConfigError);
}

TEST(FocalLoss, GammaTwoAtHalfProbability) {
  // Target cell 3 holds 0.5; sigma far below a cell makes the splat a point.
  const Heatmap h(grid2x2(), {1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0, 0.5});
  const double loss = focal_loss(h, {1.5, 1.5}, 2.0, 1e-3);
  EXPECT_NEAR(loss, 0.25 * std::log(2.0), 1e-12);
  EXPECT_NEAR(loss, 0.1733, 5e-5);
}

TEST(FocalLoss, UniformSixteenBySixteen) {
  const GridSpec grid;  // 16 x 16
  const Heatmap h = Heatmap::uniform(grid);
  EXPECT_NEAR(focal_loss(h, grid.cell_center(37), 0.0, 1e-3), std::log(256.0), 1e-12);
  EXPECT_NEAR(std::log(256.0), 5.545, 5e-4);
}

TEST(FocalLoss, GammaZeroPointTargetIsCrossEntropy) {
  const Predictor model(tiny_config());
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const Heatmap h = model.forward(random_params(model, rng, 1.5), random_sample(model.config(), rng));
    const std::size_t cell = rng.index(h.size());
    const double loss = focal_loss(h, h.grid().cell_center(cell), 0.0, 1e-3);
    EXPECT_NEAR(loss, -std::log(h[cell]), 1e-10);
  }
}

TEST(FocalLoss, NonNegativeAndRejectsOffGridGoal) {
  const Predictor model(tiny_config());
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const Sample s = random_sample(model.config(), rng);
    EXPECT_GE(focal_loss(model.forward(random_params(model, rng), s), s.goal, 2.0, 1.0), 0.0);
  }
  const Heatmap h = Heatmap::uniform(model.config().grid);
  EXPECT_THROW(focal_loss(h, {10.0, 0.0}, 2.0, 1.0), InputError);
}

TEST(SplatTarget, NormalizedAndPeakedAtGoalCell) {
  const GridSpec grid;
  const std::vector<double> t = splat_target(grid, grid.cell_center(100), 1.0);
  double sum = 0.0;
  for (double v : t) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-12);
  EXPECT_EQ(std::max_element(t.begin(), t.end()) - t.begin(), 100);
}

TEST(KlDivergence, HandEvaluatedSum) {
  const Heatmap t(grid2x2(), {0.5, 0.5, 0.0, 0.0});
  const Heatmap s(grid2x2(), {0.25, 0.75, 0.0, 0.0});
  const double expected = 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0);
  EXPECT_NEAR(kl_divergence(t, s), expected, 1e-12);
  EXPECT_NEAR(expected, 0.14384, 1e-5);
}

TEST(KlDivergence, IdenticalAndUniformAreZero) {
  const Predictor model(tiny_config());
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const Heatmap a = model.forward(random_params(model, rng, 3.0), random_sample(model.config(), rng));
    const Heatmap b = model.forward(random_params(model, rng, 3.0), random_sample(model.config(), rng));
    EXPECT_NEAR(kl_divergence(a, a), 0.0, 1e-9);
    EXPECT_GE(kl_divergence(a, b), -1e-9);
  }
  const GridSpec grid;
  EXPECT_NEAR(kl_divergence(Heatmap::uniform(grid), Heatmap::uniform(grid)), 0.0, 1e-12);
}

TEST(KlDivergence, ShapeMismatchIsInputError) {
  EXPECT_THROW(kl_divergence(Heatmap::uniform(grid2x2()), Heatmap::uniform(GridSpec{})), InputError);
}

TEST(Gradient, MatchesCentralDifferencesOnFocalLoss) {
  const Predictor model(tiny_config());
  Rng rng(42);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const ParamVector p = random_params(model, rng, 1.0);
    const Sample s = random_sample(model.config(), rng);
    const LossTerm term{&s, nullptr, 1.0, 0.0};
    worst = std::max(worst, max_fd_error(model, p, std::span(&term, 1)));
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Gradient, MatchesCentralDifferencesWithKlTerms) {
  const Predictor model(tiny_config());
  Rng rng(43);
  for (int trial = 0; trial < 30; ++trial) {
    const ParamVector p = random_params(model, rng, 1.0);
    const Sample a = random_sample(model.config(), rng);
    const Sample b = random_sample(model.config(), rng);
    const Heatmap teacher = model.forward(random_params(model, rng, 1.0), b);
    const std::vector<LossTerm> terms{{&a, nullptr, 1.0, 0.0}, {&b, &teacher, 0.3, 0.7}};
    EXPECT_LT(max_fd_error(model, p, terms), 1e-4);
  }
}

TEST(Gradient, OutputBiasClosedFormAtZeroWeights) {
  const Predictor model(tiny_config());
  Rng rng(4);
  const Sample s = random_sample(model.config(), rng);
  const ParamVector g = model.grad(ParamVector(model.param_count()), std::span(&s, 1));
  // Cross-entropy case: dL/dz = softmax - target.
  PredictorConfig ce = tiny_config();
  ce.focal_gamma = 0.0;
  const Predictor ce_model(ce);
  const ParamVector g0 = ce_model.grad(ParamVector(ce_model.param_count()), std::span(&s, 1));
  const std::vector<double> target = splat_target(ce.grid, s.goal, ce.target_sigma);
  const std::size_t off = ce_model.output_bias_offset();
  for (std::size_t c = 0; c < target.size(); ++c) EXPECT_NEAR(g0[off + c], 1.0 / 16.0 - target[c], 1e-15);
  // Focal case with uniform p: dL/dz_j = sum_c y_c w(p) (delta_cj - p), w(p) = (1-p)^2 - 2 p (1-p) log p.
  const double p = 1.0 / 16.0;
  const double w = (1.0 - p) * (1.0 - p) - 2.0 * p * (1.0 - p) * std::log(p);
  for (std::size_t c = 0; c < target.size(); ++c) EXPECT_NEAR(g[off + c], w * (p - target[c]), 1e-14);
}

TEST(Gradient, RepeatedBatchEqualsSingleSample) {
  const Predictor model(tiny_config());
  Rng rng(6);
  const ParamVector p = random_params(model, rng);
  const Sample s = random_sample(model.config(), rng);
  const ParamVector one = model.grad(p, std::span(&s, 1));
  const std::vector<Sample> batch(7, s);
  const ParamVector many = model.grad(p, batch);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(one[i], many[i], 1e-12);
}

TEST(Gradient, PureFunctionOfInputs) {
  const Predictor model(tiny_config());
  Rng rng(7);
  const ParamVector p = random_params(model, rng);
  const std::vector<Sample> batch{random_sample(model.config(), rng), random_sample(model.config(), rng)};
  EXPECT_TRUE(model.grad(p, batch).bitwise_equal(model.grad(p, batch)));
}

TEST(FactoredGradient, ExpandsToFullGradient) {
  const Predictor model(tiny_config());
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const ParamVector p = random_params(model, rng);
    const Sample a = random_sample(model.config(), rng);
    const Sample b = random_sample(model.config(), rng);
    const ParamVector ga = model.grad(p, std::span(&a, 1));
    const ParamVector gb = model.grad(p, std::span(&b, 1));
    const FactoredGradient fa = model.factored_grad(p, a);
    const FactoredGradient fb = model.factored_grad(p, b);
    const ParamVector ea = model.expand(fa);
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(ea[i], ga[i], 1e-12);
    EXPECT_NEAR(dot(fa, fb), dot(ga, gb), 1e-12 * std::max(1.0, std::abs(dot(ga, gb))));
    EXPECT_NEAR(dot(fa, fa), dot(ga, ga), 1e-12 * std::max(1.0, dot(ga, ga)));
  }
}

TEST(SgdStep, Examples) {
  const ParamVector p{1.0, 1.0};
  EXPECT_EQ(sgd_step(p, ParamVector(2), 0.5), p);
  EXPECT_EQ(sgd_step(p, ParamVector{2.0, -2.0}, 0.5), (ParamVector{0.0, 2.0}));
  const ParamVector g{0.25, -0.75};
  const ParamVector twice = sgd_step(sgd_step(p, g, 0.5), g, 0.5);
  EXPECT_DOUBLE_EQ(twice[0], 1.0 - 2.0 * 0.5 * 0.25);
  EXPECT_DOUBLE_EQ(twice[1], 1.0 + 2.0 * 0.5 * 0.75);
  EXPECT_THROW(sgd_step(p, ParamVector(3), 0.1), InternalError);
}

TEST(PredictorConfig, RejectsBadValues) {
  PredictorConfig c = tiny_config();
  c.focal_gamma = -1.0;
  EXPECT_THROW(Predictor{c}, ConfigError);
  c = tiny_config();
  c.target_sigma = 0.0;
  EXPECT_THROW(Predictor{c}, ConfigError);
}
