#pragma once

// Ranking metrics and the held-out evaluation protocol: each test triplet's
// positive is ranked against J random negatives; interpretations are scored
// by the average precision of review-mentioned attributes in the advantage
// ranking, traded off against NDCG through a per-case harmonic mean (ATC).

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <vector>

#include "a2cf/common.hpp"
#include "a2cf/data.hpp"
#include "a2cf/interpretation.hpp"
#include "a2cf/ranking.hpp"

namespace a2cf {

/// 1-based position of `item` in the list.
inline std::size_t rank_of(const RankedList& list, Index item) {
  for (std::size_t k = 0; k < list.items.size(); ++k) {
    if (list.items[k].item == item) return k + 1;
  }
  throw std::invalid_argument("ground truth item is not in the ranked list");
}

inline int hr_at_k(const RankedList& list, Index truth, std::size_t k) {
  return rank_of(list, truth) <= k ? 1 : 0;
}

/// Single relevant item, so the ideal DCG is 1.
inline double ndcg_from_rank(std::size_t rank, std::size_t k) {
  return rank <= k ? 1.0 / std::log2(static_cast<double>(rank) + 1.0) : 0.0;
}

inline double ndcg_at_k(const RankedList& list, Index truth, std::size_t k) {
  return ndcg_from_rank(rank_of(list, truth), k);
}

inline constexpr std::size_t kAttributeTruncation = 500;

/// Average precision of `relevant` within the first `truncation` entries of
/// `ranking`. Defined as 0 when nothing is relevant.
inline double map_attributes(std::span<const Index> ranking, std::span<const Index> relevant,
                             std::size_t truncation = kAttributeTruncation) {
  const std::set<Index> wanted(relevant.begin(), relevant.end());
  if (wanted.empty()) return 0.0;
  const std::size_t depth = std::min(truncation, ranking.size());
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t k = 0; k < depth; ++k) {
    if (wanted.count(ranking[k])) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
  }
  return sum / static_cast<double>(std::min(wanted.size(), truncation));
}

inline double harmonic_mean(double a, double b) {
  return a + b > 0.0 ? 2.0 * a * b / (a + b) : 0.0;
}

struct CaseQuality {
  double map = 0.0;
  double ndcg = 0.0;
};

/// Attribute trade-off coverage: mean per-case harmonic mean of MAP and NDCG.
inline double atc(std::span<const CaseQuality> cases) {
  if (cases.empty()) throw std::invalid_argument("atc: no cases");
  double sum = 0.0;
  for (const auto& c : cases) sum += harmonic_mean(c.map, c.ndcg);
  return sum / static_cast<double>(cases.size());
}

// ---------------------------------------------------------------------------
// Protocol

struct EvalCase {
  Triplet truth;
  std::vector<Index> pool;                 // negatives, excludes positive and query
  std::vector<Index> relevant_attributes;  // mentioned in the user's review of the positive
};

struct EvalOptions {
  std::size_t negatives = 1000;  // J
  std::vector<std::size_t> cutoffs{5, 10, 20, 50};
  std::uint64_t seed = 0;
};

/// Negative pools are drawn without replacement with a per-case seed
/// derive_seed(seed, case index).
inline std::vector<EvalCase> build_eval_cases(std::span<const Triplet> triplets,
                                              const Corpus& corpus, std::size_t negatives,
                                              std::uint64_t seed) {
  std::map<std::pair<Index, Index>, std::set<Index>> review_attrs;
  for (const auto& e : corpus.lexicon) review_attrs[{e.user, e.item}].insert(e.attribute);

  bool warned = false;
  std::vector<EvalCase> cases;
  cases.reserve(triplets.size());
  for (std::size_t c = 0; c < triplets.size(); ++c) {
    const auto& t = triplets[c];
    EvalCase ec{t, {}, {}};
    std::vector<Index> eligible;
    eligible.reserve(corpus.num_items());
    for (std::size_t j = 0; j < corpus.num_items(); ++j) {
      if (j != t.positive && j != t.query) eligible.push_back(static_cast<Index>(j));
    }
    if (eligible.size() <= negatives) {
      if (!warned) {
        log_warning("only " + std::to_string(eligible.size()) + " negatives available, " +
                    std::to_string(negatives) + " requested; using all");
        warned = true;
      }
      ec.pool = std::move(eligible);
    } else {
      Rng rng(derive_seed(seed, c));
      for (std::size_t k = 0; k < negatives; ++k) {
        std::swap(eligible[k], eligible[k + rng.below(eligible.size() - k)]);
      }
      ec.pool.assign(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(negatives));
    }
    if (auto it = review_attrs.find({t.user, t.positive}); it != review_attrs.end()) {
      ec.relevant_attributes.assign(it->second.begin(), it->second.end());
    }
    cases.push_back(std::move(ec));
  }
  return cases;
}

struct MetricsReport {
  std::vector<std::size_t> cutoffs;
  std::vector<double> hr;
  std::vector<double> ndcg;
  double map = 0.0;
  double atc = 0.0;
  std::size_t cases = 0;

  double hr_at(std::size_t k) const { return hr.at(index_of(k)); }
  double ndcg_at(std::size_t k) const { return ndcg.at(index_of(k)); }

 private:
  std::size_t index_of(std::size_t k) const {
    const auto it = std::find(cutoffs.begin(), cutoffs.end(), k);
    if (it == cutoffs.end()) throw std::out_of_range("cutoff not evaluated: " + std::to_string(k));
    return static_cast<std::size_t>(it - cutoffs.begin());
  }
};

/// `score(user, query, item)` ranks the pool; `explain(user, query, item)`
/// returns the attribute ranking behind the positive. The NDCG used inside
/// ATC is uncut (rank over the whole pool).
template <typename ScoreFn, typename ExplainFn>
MetricsReport evaluate_cases(std::span<const EvalCase> cases, const std::vector<std::size_t>& cutoffs,
                             ScoreFn&& score, ExplainFn&& explain) {
  if (cases.empty()) throw std::invalid_argument("evaluate: no test cases");
  MetricsReport report;
  report.cutoffs = cutoffs;
  report.hr.assign(cutoffs.size(), 0.0);
  report.ndcg.assign(cutoffs.size(), 0.0);
  std::vector<CaseQuality> quality;
  quality.reserve(cases.size());
  double map_sum = 0.0;
  for (const auto& c : cases) {
    const auto& t = c.truth;
    std::vector<Index> candidates(c.pool);
    candidates.push_back(t.positive);
    const auto list = rank_candidates(t.user, t.query, candidates, candidates.size(),
                                      [&](Index j) { return score(t.user, t.query, j); });
    const std::size_t rank = rank_of(list, t.positive);
    for (std::size_t k = 0; k < cutoffs.size(); ++k) {
      report.hr[k] += rank <= cutoffs[k] ? 1.0 : 0.0;
      report.ndcg[k] += ndcg_from_rank(rank, cutoffs[k]);
    }
    const std::vector<Index> attr_rank = explain(t.user, t.query, t.positive);
    const double ap = map_attributes(attr_rank, c.relevant_attributes);
    map_sum += ap;
    quality.push_back({ap, ndcg_from_rank(rank, candidates.size())});
  }
  const double n = static_cast<double>(cases.size());
  for (auto& v : report.hr) v /= n;
  for (auto& v : report.ndcg) v /= n;
  report.map = map_sum / n;
  report.atc = atc(quality);
  report.cases = cases.size();
  return report;
}

inline MetricsReport evaluate_protocol(std::span<const Triplet> test, const Corpus& corpus,
                                       const ModelParams& p, const EstimatedMatrices& m,
                                       const ScoringOptions& opt, const EvalOptions& eval) {
  const auto cases = build_eval_cases(test, corpus, eval.negatives, eval.seed);
  return evaluate_cases(
      cases, eval.cutoffs,
      [&](Index i, Index q, Index j) { return triplet_score(i, q, j, p, m, opt); },
      [&](Index i, Index q, Index j) {
        return attribute_advantage(m.user_attr.row(i), m.item_attr.row(q), m.item_attr.row(j))
            .ranking;
      });
}

/// "KEY=value" lines, four decimals.
inline void write_metrics(std::ostream& out, const MetricsReport& r) {
  char buf[32];
  const auto line = [&](const std::string& key, double v) {
    std::snprintf(buf, sizeof buf, "%.4f", v);
    out << key << '=' << buf << '\n';
  };
  for (std::size_t k = 0; k < r.cutoffs.size(); ++k) line("HR@" + std::to_string(r.cutoffs[k]), r.hr[k]);
  for (std::size_t k = 0; k < r.cutoffs.size(); ++k) {
    line("NDCG@" + std::to_string(r.cutoffs[k]), r.ndcg[k]);
  }
  line("MAP", r.map);
  line("ATC", r.atc);
  out << "cases=" << r.cases << '\n';
}

}  // namespace a2cf
