#include <gtest/gtest.h>

#include <map>
#include <sstream>

#include "a2cf/attributes.hpp"
#include "oracles.hpp"

using namespace a2cf;

TEST(AttributeValues, MatchHighPrecisionClosedForms) {
  EXPECT_NEAR(user_attr_value(1, 5), 2.848469, 5e-7);
  EXPECT_NEAR(user_attr_value(2, 5), 4.046377, 5e-7);
  EXPECT_NEAR(item_attr_value(1, 1, 5), 3.924234, 5e-7);
  EXPECT_NEAR(item_attr_value(1, -1, 5), 2.075766, 5e-7);
  for (int t = 1; t <= 30; ++t) {
    for (double s : {-1.0, -0.5, 0.0, 0.25, 1.0}) {
      EXPECT_NEAR(user_attr_value(t, 5), static_cast<double>(oracle::user_attr(t, 5)), 1e-12);
      EXPECT_NEAR(item_attr_value(t, s, 5), static_cast<double>(oracle::item_attr(t, s, 5)), 1e-12);
    }
  }
}

TEST(AttributeValues, RangeMonotonicityAndSymmetry) {
  double prev = 1.0;
  for (int t = 1; t <= 40; ++t) {
    const double v = user_attr_value(t, 5);
    EXPECT_GE(v, prev);
    EXPECT_GT(v, 1.0);
    EXPECT_LE(v, 5.0);
    prev = v;
  }
  EXPECT_NEAR(user_attr_value(60, 5), 5.0, 1e-12);
  EXPECT_EQ(item_attr_value(7, 0.0, 5), 3.0);
  for (int t = 1; t <= 10; ++t) {
    for (double s : {0.1, 0.5, 1.0}) {
      EXPECT_NEAR(item_attr_value(t, s, 5) + item_attr_value(t, -s, 5), 6.0, 1e-12);
      EXPECT_LT(item_attr_value(t, s - 0.1, 5), item_attr_value(t, s, 5));
    }
  }
}

TEST(AttributeValues, ContractViolations) {
  EXPECT_THROW(user_attr_value(0, 5), std::invalid_argument);
  EXPECT_THROW(user_attr_value(-1, 5), std::invalid_argument);
  EXPECT_THROW(item_attr_value(0, 0.5, 5), std::invalid_argument);
  EXPECT_THROW(item_attr_value(1, 1.5, 5), std::invalid_argument);
}

TEST(SparseMatrix, EnforcesRangeAndColumnOrder) {
  SparseAttributeMatrix m(2, 3, 5.0);
  m.push(0, 0, 2.0);
  m.push(0, 2, 5.0);
  EXPECT_THROW(m.push(0, 1, 3.0), std::invalid_argument);
  EXPECT_THROW(m.push(1, 0, 0.5), std::invalid_argument);
  EXPECT_THROW(m.push(1, 3, 2.0), std::invalid_argument);
  EXPECT_EQ(m.value(0, 1), 0.0);
  EXPECT_EQ(m.find(0, 2), 5.0);
  EXPECT_EQ(m.nonzeros(), 2u);
}

namespace {

Corpus toy_corpus() {
  // two users, two items, two attributes (battery, screen)
  std::vector<ReviewRecord> reviews{{"alice", "phone", 5, {}}, {"alice", "tablet", 4, {}},
                                    {"bob", "phone", 2, {}}, {"bob", "tablet", 3, {}}};
  std::vector<LexiconEntry> lex{
      {"alice", "phone", "battery", +1}, {"alice", "phone", "battery", +1},
      {"bob", "phone", "battery", -1},   {"bob", "phone", "screen", +1},
      {"alice", "tablet", "screen", -1}, {"bob", "tablet", "screen", -1},
  };
  return filter_corpus(reviews, lex, {{"phone", "tablet"}}, FilterOptions{1, 1, 1});
}

}  // namespace

TEST(BuildMatrices, ToyTableMatchesHandComputation) {
  const auto c = toy_corpus();
  const auto m = build_matrices(c, 5.0);
  const Index alice = *c.find_user("alice"), bob = *c.find_user("bob");
  const Index phone = *c.find_item("phone"), tablet = *c.find_item("tablet");
  const Index battery = *c.find_attribute("battery"), screen = *c.find_attribute("screen");

  // raw counts recomputed by hand from the six lines above
  EXPECT_DOUBLE_EQ(*m.user_attr.find(alice, battery), user_attr_value(2, 5));
  EXPECT_DOUBLE_EQ(*m.user_attr.find(alice, screen), user_attr_value(1, 5));
  EXPECT_DOUBLE_EQ(*m.user_attr.find(bob, battery), user_attr_value(1, 5));
  EXPECT_DOUBLE_EQ(*m.user_attr.find(bob, screen), user_attr_value(2, 5));
  // phone battery: three mentions, (+1 +1 -1) / 3
  EXPECT_NEAR(*m.item_attr.find(phone, battery),
              static_cast<double>(oracle::item_attr(3, 1.0L / 3, 5)), 1e-12);
  EXPECT_DOUBLE_EQ(*m.item_attr.find(phone, screen), item_attr_value(1, 1, 5));
  EXPECT_DOUBLE_EQ(*m.item_attr.find(tablet, screen), item_attr_value(2, -1, 5));
  EXPECT_FALSE(m.item_attr.find(tablet, battery));
  EXPECT_EQ(m.stats.item_attr_counts.at({phone, battery}), 3u);
  EXPECT_NEAR(m.stats.item_attr_mean_sentiment.at({phone, battery}), 1.0 / 3, 1e-15);
}

TEST(BuildMatrices, StoredEntriesExactlyWhereMentioned) {
  const auto c = toy_corpus();
  const auto m = build_matrices(c, 5.0);
  std::set<std::pair<Index, Index>> ua, ia;
  for (const auto& e : c.lexicon) {
    ua.emplace(e.user, e.attribute);
    ia.emplace(e.item, e.attribute);
  }
  EXPECT_EQ(m.user_attr.nonzeros(), ua.size());
  EXPECT_EQ(m.item_attr.nonzeros(), ia.size());
  for (const auto& [u, a] : ua) EXPECT_TRUE(m.user_attr.find(u, a));
  for (const auto& [i, a] : ia) EXPECT_TRUE(m.item_attr.find(i, a));
}

TEST(BuildMatrices, CancellingSentimentGivesMidpoint) {
  std::vector<ReviewRecord> reviews{{"u", "i", 5, {}}, {"v", "i", 5, {}}};
  const auto c = filter_corpus(reviews, {{"u", "i", "a", +1}, {"v", "i", "a", -1}}, {},
                               FilterOptions{1, 1, 1});
  EXPECT_EQ(*build_matrices(c, 5.0).item_attr.find(0, 0), 3.0);
}

TEST(BuildMatrices, DumpUsesNineSignificantDigits) {
  const auto m = build_matrices(toy_corpus(), 5.0);
  std::ostringstream out;
  write_matrix(out, m.user_attr);
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "0\t0\t4.04637662");
}
