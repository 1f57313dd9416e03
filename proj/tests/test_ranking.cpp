#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "a2cf/attributes.hpp"
#include "a2cf/ranking.hpp"
#include "oracles.hpp"

using namespace a2cf;

namespace {

// d = 2, |A| = 2; values chosen so every term is easy to check by hand
struct HandInstance {
  ModelParams p;
  EstimatedMatrices m;

  HandInstance() {
    p = ModelParams::zeros({1, 2, 2, 2, 1});
    p.item_emb.row(0)[0] = 1, p.item_emb.row(0)[1] = 2;   // query
    p.item_emb.row(1)[0] = 3, p.item_emb.row(1)[1] = -1;  // candidate
    p.user_emb.row(0)[0] = 0.5, p.user_emb.row(0)[1] = 1;
    p.attr_emb.row(0)[0] = 1, p.attr_emb.row(1)[1] = 2;
    p.score_s = {1, 1, 2, 3};
    p.score_p = {2, 1, 1, 1};
    m.user_attr = Matrix(1, 2);
    m.item_attr = Matrix(2, 2);
    std::fill(m.user_attr.data.begin(), m.user_attr.data.end(), 1.0);
    std::fill(m.item_attr.data.begin(), m.item_attr.data.end(), 2.0);
  }
};

double entropy(const std::vector<double>& w) {
  double h = 0;
  for (double v : w) h -= v > 0 ? v * std::log(v) : 0;
  return h;
}

}  // namespace

TEST(Attention, SoftmaxMatchesOracle) {
  const std::vector<double> a{1, 1.5, 2}, b{0.5, 0.75, 1};
  const auto w = attention(a, b, 1.0);
  const auto ref = oracle::softmax_product(a, b, 1.0);
  const double z = std::exp(0.5) + std::exp(1.125) + std::exp(2.0);
  for (std::size_t n = 0; n < 3; ++n) {
    EXPECT_NEAR(w[n], static_cast<double>(ref[n]), 1e-15);
  }
  EXPECT_NEAR(w[2], std::exp(2.0) / z, 1e-15);
  EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-15);
}

TEST(Attention, ConstantInputIsUniformAndLargeInputStable) {
  const std::vector<double> c(5, 3.0);
  for (double v : attention(c, c, 8.0)) EXPECT_NEAR(v, 0.2, 1e-15);
  const std::vector<double> big{1e6, 1e6 + 1, 0}, one(3, 1.0);
  const auto w = attention(big, one, 1.0);
  EXPECT_TRUE(all_finite(w));
  EXPECT_NEAR(w[1], 1 / (1 + std::exp(-1.0)), 1e-12);
  EXPECT_THROW(attention(c, big, 1.0), std::invalid_argument);
  EXPECT_THROW(attention(c, c, 0.0), std::invalid_argument);
}

TEST(Attention, HigherTemperatureFlattens) {
  const std::vector<double> q{4.5, 1.2, 3.3, 2.0}, j{4.0, 1.5, 2.5, 4.8};
  double prev = -1;
  for (double t : {0.5, 1.0, 2.0, 8.0, 32.0}) {
    const double h = entropy(substitution_attention(q, j, t));
    EXPECT_GT(h, prev);
    prev = h;
  }
  EXPECT_LT(prev, std::log(4.0));
}

TEST(Aggregation, OneHotAndMean) {
  Matrix a(3, 2);
  a.data = {1, 2, 3, 4, 5, 6};
  EXPECT_EQ(aggregate_attributes(std::vector<double>{0, 1, 0}, a), (std::vector<double>{3, 4}));
  const auto mean = aggregate_attributes(std::vector<double>(3, 1.0 / 3), a);
  EXPECT_NEAR(mean[0], 3.0, 1e-15);
  EXPECT_NEAR(mean[1], 4.0, 1e-15);
}

TEST(Scores, HandComputedValues) {
  const HandInstance h;
  ScoringOptions opt;
  EXPECT_NEAR(score_substitution(0, 1, h.p, h.m, opt), 5.0, 1e-15);
  EXPECT_NEAR(score_personalization(0, 1, h.p, h.m, opt), 3.5, 1e-15);
  EXPECT_NEAR(triplet_score(0, 0, 1, h.p, h.m, opt), 0.7 * 5.0 + 0.3 * 3.5, 1e-14);
  opt.gamma = 1.0;
  EXPECT_NEAR(triplet_score(0, 0, 1, h.p, h.m, opt), 5.0, 1e-15);
  opt.gamma = 0.0;
  EXPECT_NEAR(triplet_score(0, 0, 1, h.p, h.m, opt), 3.5, 1e-15);
}

TEST(Scores, AblatedAggregationUsesLatentHalfOnly) {
  HandInstance h;
  ScoringOptions opt;
  opt.item_aggregation = false;
  EXPECT_NEAR(score_substitution(0, 1, h.p, h.m, opt), 1.0, 1e-15);
  opt.user_aggregation = false;
  EXPECT_NEAR(score_personalization(0, 1, h.p, h.m, opt), 2.0, 1e-15);

  // a projection shrunk to d cannot serve an aggregating scorer
  h.p.score_s.resize(2);
  EXPECT_NO_THROW(score_substitution(0, 1, h.p, h.m, opt));
  EXPECT_THROW(score_substitution(0, 1, h.p, h.m, ScoringOptions{}), std::invalid_argument);
}

TEST(Scores, ZeroProjectionGivesZero) {
  HandInstance h;
  std::fill(h.p.score_s.begin(), h.p.score_s.end(), 0.0);
  std::fill(h.p.score_p.begin(), h.p.score_p.end(), 0.0);
  EXPECT_EQ(triplet_score(0, 0, 1, h.p, h.m, {}), 0.0);
  EXPECT_THROW(triplet_score(1, 0, 1, h.p, h.m, {}), std::out_of_range);
}

TEST(Gradients, BprMatchesFiniteDifferencesAcrossVariants) {
  std::vector<std::pair<ScoringOptions, ModelDims>> variants;
  ScoringOptions full;
  variants.push_back({full, {3, 5, 6, 4, 2}});
  for (double g : {0.0, 1.0}) {
    ScoringOptions o = full;
    o.gamma = g;
    variants.push_back({o, {3, 5, 6, 4, 2}});
  }
  {
    ScoringOptions o = full;
    o.item_aggregation = false;
    variants.push_back({o, {3, 5, 6, 4, 2, false, true}});
    o.user_aggregation = false;
    variants.push_back({o, {3, 5, 6, 4, 2, false, false}});
  }
  for (const auto& [opt, dims] : variants) {
    for (std::uint64_t seed : {1u, 2u}) {
      const auto t = oracle::tiny_instance(seed, dims);
      const auto r = oracle::check_gradient(t.params, [&](const ModelParams& p, GradientBuffer* g) {
        return bpr_s_loss(t.ranking, p, t.estimated, opt, g);
      });
      EXPECT_LT(r.max_relative_error, 1e-5) << "gamma " << opt.gamma << " seed " << seed << " " << r.worst;
    }
  }
}

TEST(Bpr, ZeroScoresGiveLogTwoPerTerm) {
  const auto t = oracle::tiny_instance(5);
  auto p = t.params;
  p.fill(0.0);
  std::size_t terms = 0;
  for (const auto& tr : t.ranking) terms += tr.negatives.size();
  EXPECT_NEAR(bpr_s_loss(t.ranking, p, t.estimated, {}), terms * std::log(2.0), 1e-12);
  EXPECT_THROW(bpr_s_loss({}, p, t.estimated, {}), std::invalid_argument);
}

TEST(Bpr, LogSigmoidIsStable) {
  EXPECT_NEAR(-log_sigmoid(-10.0), 10.0000453989, 1e-9);
  EXPECT_NEAR(-log_sigmoid(-10.0), static_cast<double>(oracle::neg_log_sigmoid(-10.0L)), 1e-14);
  EXPECT_NEAR(log_sigmoid(-1000.0), -1000.0, 1e-9);
  EXPECT_EQ(log_sigmoid(1000.0), 0.0);
  EXPECT_NEAR(sigmoid(2.0) + sigmoid(-2.0), 1.0, 1e-15);
  for (double x : {-30.0, -3.0, 0.0, 0.5, 7.0}) {
    EXPECT_NEAR(-log_sigmoid(x), static_cast<double>(oracle::neg_log_sigmoid(x)), 1e-13);
  }
}

TEST(Bpr, NegativeOrderDoesNotMatter) {
  auto t = oracle::tiny_instance(6);
  const double base = bpr_s_loss(t.ranking, t.params, t.estimated, {});
  for (auto& tr : t.ranking) std::reverse(tr.negatives.begin(), tr.negatives.end());
  EXPECT_NEAR(bpr_s_loss(t.ranking, t.params, t.estimated, {}), base, 1e-12);
}

TEST(Negatives, EligibilityRule) {
  // u bought q-substitute s and unrelated o; s must never be drawn as a
  // negative for query q, o may be, q and the positive never are.
  std::vector<ReviewRecord> reviews{{"u", "s", 5, {}}, {"u", "o", 5, {}}, {"u", "p", 5, {}},
                                    {"v", "q", 5, {}}, {"v", "x", 5, {}}, {"v", "y", 5, {}}};
  const auto c = filter_corpus(reviews, {{"u", "s", "a", 1}}, {{"q", "s"}, {"q", "p"}},
                               FilterOptions{1, 1, 1});
  const Index u = *c.find_user("u"), q = *c.find_item("q"), p = *c.find_item("p");
  const Index s = *c.find_item("s"), o = *c.find_item("o");
  Rng rng(3);
  const auto neg = sample_negatives(u, q, p, c, 5000, rng);
  std::set<Index> seen(neg.begin(), neg.end());
  EXPECT_FALSE(seen.count(s));
  EXPECT_FALSE(seen.count(q));
  EXPECT_FALSE(seen.count(p));
  EXPECT_TRUE(seen.count(o));
  EXPECT_EQ(seen.size(), c.num_items() - 3);
}

TEST(Negatives, ExhaustionThrows) {
  std::vector<ReviewRecord> reviews{{"u", "q", 5, {}}, {"u", "p", 5, {}}};
  const auto c = filter_corpus(reviews, {{"u", "q", "a", 1}}, {{"q", "p"}}, FilterOptions{1, 1, 1});
  Rng rng(1);
  EXPECT_THROW(sample_negatives(0, *c.find_item("q"), *c.find_item("p"), c, 1, rng), Error);
}

TEST(TopK, MatchesBruteForceWithTies) {
  Rng rng(8);
  std::vector<Index> cands(200);
  std::iota(cands.begin(), cands.end(), 0);
  rng.shuffle(cands);
  std::vector<double> score(200);
  for (double& s : score) s = std::round(rng.uniform() * 20) / 4;  // many ties
  for (std::size_t k : {1u, 10u, 50u, 200u, 500u}) {
    const auto list = rank_candidates(0, 0, cands, k, [&](Index j) { return score[j]; });
    std::vector<ScoredItem> brute;
    for (Index j = 0; j < 200; ++j) brute.push_back({j, score[j]});
    std::stable_sort(brute.begin(), brute.end(),
                     [](const ScoredItem& a, const ScoredItem& b) { return a.score > b.score; });
    brute.resize(std::min<std::size_t>(k, 200));
    EXPECT_EQ(list.items, brute) << "k = " << k;
  }
}

TEST(TopK, DuplicatesAndContract) {
  const std::vector<Index> cands{3, 1, 3, 2};
  const auto list = rank_candidates(0, 0, cands, 10, [](Index) { return 1.0; });
  ASSERT_EQ(list.items.size(), 3u);
  EXPECT_EQ(list.items[0].item, 1u);
  EXPECT_EQ(list.items[2].item, 3u);
  EXPECT_THROW(rank_candidates(0, 0, std::vector<Index>{}, 1, [](Index) { return 0.0; }),
               std::invalid_argument);
  EXPECT_THROW(rank_candidates(0, 0, cands, 0, [](Index) { return 0.0; }), std::invalid_argument);
}

TEST(Estimation, ObservedCopiedMissingPredicted) {
  SparseAttributeMatrix x(2, 3, 5), y(3, 3, 5);
  x.push(0, 1, 4.5);
  y.push(2, 0, 1.25);
  const auto p = init_params({2, 3, 3, 4, 1}, 5);
  const auto m = estimate_matrices(x, y, p, 5);
  EXPECT_EQ(m.user_attr(0, 1), 4.5);
  EXPECT_EQ(m.item_attr(2, 0), 1.25);
  EXPECT_EQ(m.user_attr(1, 2), predict_user_attribute(1, 2, p, 5));
  EXPECT_EQ(m.item_attr(0, 0), predict_item_attribute(0, 0, p, 5));
  for (double v : m.item_attr.data) {
    EXPECT_GT(v, 1.0);
    EXPECT_LT(v, 5.0);
  }
  EXPECT_EQ(estimate_matrices(x, y, p, 5), m);
}
