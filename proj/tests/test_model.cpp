#include <gtest/gtest.h>

#include <cmath>

#include "a2cf/model.hpp"
#include "oracles.hpp"

using namespace a2cf;

TEST(TanhRescaled, ValuesAndSaturation) {
  EXPECT_NEAR(tanh_rescaled(1.0, 5), 4.523188, 5e-7);
  EXPECT_EQ(tanh_rescaled(0.0, 5), 3.0);
  EXPECT_NEAR(tanh_rescaled(40.0, 5), 5.0, 1e-15);
  EXPECT_NEAR(tanh_rescaled(-40.0, 5), 1.0, 1e-15);
  EXPECT_TRUE(std::isfinite(tanh_rescaled(1e4, 5)));
  EXPECT_TRUE(std::isfinite(tanh_rescaled(-1e4, 5)));
  for (double r = -6; r <= 6; r += 0.37) {
    EXPECT_NEAR(tanh_rescaled(r, 5), static_cast<double>(oracle::tanh_rescaled(r, 5)), 1e-13);
  }
}

TEST(TanhRescaled, DerivativeMatchesDifferences) {
  for (double r = -3; r <= 3; r += 0.25) {
    const double h = 1e-6;
    const double numeric = (tanh_rescaled(r + h, 5) - tanh_rescaled(r - h, 5)) / (2 * h);
    EXPECT_NEAR(tanh_rescaled_derivative(r, 5), numeric, 1e-7);
  }
}

TEST(ResidualTower, ZeroWeightsAreIdentity) {
  const ModelDims dims{2, 2, 2, 3, 3};
  auto p = ModelParams::zeros(dims);
  const std::vector<double> h0{0.5, -1.0, 2.0, 0.0, 3.0, -0.25};
  const auto cache = residual_forward(h0, p.tower_ua);
  EXPECT_EQ(cache.output(), h0);
  EXPECT_EQ(predict_user_attribute(1, 1, p, 5), 3.0);
  EXPECT_EQ(predict_item_attribute(0, 1, p, 5), 3.0);
}

TEST(ResidualTower, RejectsShapeMismatch) {
  const ModelDims dims{2, 2, 2, 3, 1};
  auto p = ModelParams::zeros(dims);
  const std::vector<double> wrong(4, 0.0);
  EXPECT_THROW(residual_forward(wrong, p.tower_ua), std::invalid_argument);
  EXPECT_THROW(predict_user_attribute(2, 0, p, 5), std::out_of_range);
}

TEST(Dropout, ZeroFractionAndScale) {
  Rng rng(11);
  const auto mask = dropout_mask(200000, 0.4, rng);
  std::size_t zeros = 0;
  for (double m : mask) {
    if (m == 0.0) {
      ++zeros;
    } else {
      EXPECT_DOUBLE_EQ(m, 1.0 / 0.6);
    }
  }
  EXPECT_NEAR(static_cast<double>(zeros) / mask.size(), 0.4, 0.01);
  EXPECT_THROW(dropout_mask(3, 1.0, rng), std::invalid_argument);
}

TEST(Gradients, PhaseOneMatchesFiniteDifferences) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto t = oracle::tiny_instance(seed);
    const auto r = oracle::check_gradient(t.params, [&](const ModelParams& p, GradientBuffer* g) {
      return phase1_loss(t.phase1, p, t.rating_max, g);
    });
    EXPECT_LT(r.max_relative_error, 1e-4) << "seed " << seed << " worst " << r.worst;
    EXPECT_GT(r.checked, 100u);
  }
}

TEST(Gradients, PhaseOneWithFixedDropoutMask) {
  const auto t = oracle::tiny_instance(7, {3, 5, 6, 4, 2});
  const auto r = oracle::check_gradient(t.params, [&](const ModelParams& p, GradientBuffer* g) {
    Rng rng(99);  // same mask on every evaluation
    return phase1_loss(t.phase1, p, t.rating_max, g, 0.4, &rng);
  });
  EXPECT_LT(r.max_relative_error, 1e-4) << r.worst;
}

TEST(Gradients, PhaseOneNeverTouchesScoringProjections) {
  const auto t = oracle::tiny_instance(4);
  auto g = make_gradient_buffer(t.params.dims);
  phase1_loss(t.phase1, t.params, t.rating_max, &g);
  for (double v : g.score_s) EXPECT_EQ(v, 0.0);
  for (double v : g.score_p) EXPECT_EQ(v, 0.0);
}

TEST(Gradients, RejectsEntriesOutsideRange) {
  const auto t = oracle::tiny_instance(4);
  Phase1Batch b;
  b.user_entries.push_back({0, 0, 0.5});
  EXPECT_THROW(phase1_loss(b, t.params, 5), std::invalid_argument);
}

TEST(Init, DeterministicBoundedWithZeroBiases) {
  const ModelDims dims{4, 6, 5, 8, 2};
  const auto a = init_params(dims, 17);
  const auto b = init_params(dims, 17);
  const auto c = init_params(dims, 18);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  for (const auto& t : a.tensors()) {
    for (double v : t.values) {
      if (t.name.ends_with(".bias")) {
        EXPECT_EQ(v, 0.0);
      } else {
        EXPECT_LE(std::abs(v), 0.05);
      }
    }
  }
}

TEST(Init, AblationShrinksProjection) {
  ModelDims dims{2, 2, 2, 4, 1};
  EXPECT_EQ(ModelParams::zeros(dims).score_s.size(), 8u);
  dims.item_aggregation = false;
  EXPECT_EQ(ModelParams::zeros(dims).score_s.size(), 4u);
  EXPECT_EQ(ModelParams::zeros(dims).score_p.size(), 8u);
  EXPECT_THROW(ModelParams::zeros({0, 2, 2, 4, 1}), Error);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  std::vector<double> p{1.0, -2.0}, g{0.0, 0.0}, m(2, 0.0), v(2, 0.0);
  adam_update(p, g, m, v, 1, {});
  EXPECT_EQ(p, (std::vector<double>{1.0, -2.0}));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  std::vector<double> p{1.0, -2.0}, g{0.3, -50.0}, m(2, 0.0), v(2, 0.0);
  adam_update(p, g, m, v, 1, {0.01});
  EXPECT_NEAR(p[0], 0.99, 1e-9);
  EXPECT_NEAR(p[1], -1.99, 1e-9);
}

TEST(Adam, ConvergesOnQuadratic) {
  std::vector<double> p{3.0, -4.0}, m(2, 0.0), v(2, 0.0);
  const std::vector<double> target{0.5, 1.5};
  for (std::uint64_t step = 1; step <= 2000; ++step) {
    std::vector<double> g{2 * (p[0] - target[0]), 2 * (p[1] - target[1])};
    adam_update(p, g, m, v, step, {0.05});
  }
  EXPECT_NEAR(p[0], target[0], 1e-3);
  EXPECT_NEAR(p[1], target[1], 1e-3);
}

TEST(Adam, SkipsNonFiniteGradient) {
  const ModelDims dims{2, 2, 2, 2, 1};
  auto p = init_params(dims, 1);
  const auto before = p;
  auto g = make_gradient_buffer(dims);
  g.head_x[0] = std::nan("");
  auto state = AdamState::for_dims(dims);
  ScopedLogSink quiet([](LogLevel, std::string_view) {});
  EXPECT_FALSE(adam_step(p, g, state, {}));
  EXPECT_EQ(p, before);
  EXPECT_EQ(state.step, 0u);
  g.head_x[0] = 1.0;
  EXPECT_TRUE(adam_step(p, g, state, {}));
  EXPECT_EQ(state.step, 1u);
  EXPECT_NEAR(p.head_x[0], before.head_x[0] - 1e-3, 1e-9);
}

TEST(TrainConfigTest, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.gamma = 1.5;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.dropout = 1.0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.beta = 0.0;
  EXPECT_THROW(c.validate(), Error);
}
