#pragma once

#include <algorithm>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "a2cf/common.hpp"

namespace a2cf {

/// Per-attribute advantage of a recommended item over the query item,
/// weighted by the user's demand: x̃_i ⊙ (ỹ_j - ỹ_q).
struct AttributeAdvantage {
  Index user = 0;
  Index query = 0;
  Index item = 0;
  std::vector<double> deltas;
  std::vector<Index> ranking;  // descending delta, ties by ascending index
};

inline std::vector<Index> rank_descending(std::span<const double> values) {
  std::vector<Index> order(values.size());
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return values[a] > values[b]; });
  return order;
}

inline AttributeAdvantage attribute_advantage(std::span<const double> user_row,
                                              std::span<const double> query_row,
                                              std::span<const double> item_row) {
  if (user_row.size() != query_row.size() || user_row.size() != item_row.size()) {
    throw std::invalid_argument("attribute_advantage: length mismatch");
  }
  AttributeAdvantage out;
  out.deltas.resize(user_row.size());
  for (std::size_t n = 0; n < user_row.size(); ++n) {
    out.deltas[n] = user_row[n] * (item_row[n] - query_row[n]);
  }
  out.ranking = rank_descending(out.deltas);
  return out;
}

struct ExplainedAttribute {
  std::string attribute;
  double delta;
  std::string adjective;  // "better" or "comparable"
};

struct InterpretationReport {
  Index user = 0;
  Index query = 0;
  Index item = 0;
  std::vector<ExplainedAttribute> top_attributes;
  std::string text;
};

inline std::string_view advantage_adjective(double delta) {
  return delta > 0.0 ? "better" : "comparable";
}

/// Fills the sentence template with the `z` highest-advantage attributes.
/// z larger than the attribute count is clamped with a warning.
inline InterpretationReport render_interpretation(const AttributeAdvantage& adv, std::size_t z,
                                                  std::span<const std::string> attribute_tokens,
                                                  std::string_view query_token,
                                                  std::string_view item_token) {
  if (z == 0) throw std::invalid_argument("render_interpretation: Z must be at least 1");
  if (attribute_tokens.size() != adv.deltas.size()) {
    throw std::invalid_argument("render_interpretation: attribute token count mismatch");
  }
  if (z > adv.ranking.size()) {
    log_warning("interpretation size " + std::to_string(z) + " clamped to " +
                std::to_string(adv.ranking.size()) + " attributes");
    z = adv.ranking.size();
  }
  InterpretationReport report{adv.user, adv.query, adv.item, {}, {}};
  std::vector<std::string> phrases;
  for (std::size_t k = 0; k < z; ++k) {
    const Index n = adv.ranking[k];
    const std::string adjective(advantage_adjective(adv.deltas[n]));
    report.top_attributes.push_back({attribute_tokens[n], adv.deltas[n], adjective});
    phrases.push_back(adjective + " " + attribute_tokens[n]);
  }

  std::string listing;
  for (std::size_t k = 0; k < phrases.size(); ++k) {
    if (k > 0) {
      if (phrases.size() > 2) listing += ",";
      listing += k + 1 == phrases.size() ? " and " : " ";
    }
    listing += phrases[k];
  }
  report.text = "Based on the item " + std::string(query_token) +
                " you are currently browsing, we recommend you to try " + std::string(item_token) +
                " instead because it comes with: " + listing + ".";
  return report;
}

}  // namespace a2cf
