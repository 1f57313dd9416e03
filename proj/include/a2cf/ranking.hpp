#pragma once

// Dense estimates of X and Y, the substitution and personalization scores,
// the BPR-S ranking loss and top-K recommendation.
//
// During the ranking phase the estimated matrices are constants: gradients
// reach embeddings and projection weights only.

#include <algorithm>
#include <cmath>
#include <span>
#include <unordered_set>
#include <vector>

#include "a2cf/attributes.hpp"
#include "a2cf/common.hpp"
#include "a2cf/data.hpp"
#include "a2cf/model.hpp"

namespace a2cf {

/// Observed entries copied verbatim; the rest filled by the attribute towers.
struct EstimatedMatrices {
  Matrix user_attr;  // users x attributes
  Matrix item_attr;  // items x attributes

  bool operator==(const EstimatedMatrices&) const = default;
};

inline EstimatedMatrices estimate_matrices(const SparseAttributeMatrix& x,
                                           const SparseAttributeMatrix& y, const ModelParams& p,
                                           double rating_max) {
  const auto fill = [&](const SparseAttributeMatrix& observed, AttributeTower which) {
    Matrix out(observed.rows(), observed.cols());
    for (std::size_t r = 0; r < observed.rows(); ++r) {
      const auto& entries = observed.row_entries(static_cast<Index>(r));
      auto it = entries.begin();
      for (std::size_t c = 0; c < observed.cols(); ++c) {
        if (it != entries.end() && it->col == c) {
          out(r, c) = (it++)->value;
        } else {
          out(r, c) = attribute_forward(which, static_cast<Index>(r), static_cast<Index>(c), p,
                                        rating_max)
                          .value;
        }
      }
    }
    return out;
  };
  return {fill(x, AttributeTower::User), fill(y, AttributeTower::Item)};
}

// ---------------------------------------------------------------------------
// Attention and aggregation

/// softmax(a ⊙ b / temperature).
inline std::vector<double> attention(std::span<const double> a, std::span<const double> b,
                                     double temperature) {
  if (a.size() != b.size()) throw std::invalid_argument("attention: length mismatch");
  if (!(temperature > 0.0)) throw std::invalid_argument("attention: temperature must be positive");
  std::vector<double> w(a.size());
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t n = 0; n < a.size(); ++n) {
    w[n] = a[n] * b[n] / temperature;
    top = std::max(top, w[n]);
  }
  double total = 0.0;
  for (double& v : w) {
    v = std::exp(v - top);
    total += v;
  }
  for (double& v : w) v /= total;
  return w;
}

/// Weights over attributes comparing two items' estimated quality rows.
inline std::vector<double> substitution_attention(std::span<const double> query_row,
                                                  std::span<const double> item_row, double beta) {
  return attention(query_row, item_row, beta);
}

/// Weights over attributes comparing a user's demand with an item's quality.
inline std::vector<double> personalization_attention(std::span<const double> user_row,
                                                     std::span<const double> item_row,
                                                     double epsilon) {
  return attention(user_row, item_row, epsilon);
}

/// Σ_n weight_n · a_n.
inline std::vector<double> aggregate_attributes(std::span<const double> weights,
                                                const Matrix& attr_emb) {
  if (weights.size() != attr_emb.rows) throw std::invalid_argument("aggregate: length mismatch");
  std::vector<double> out(attr_emb.cols, 0.0);
  for (std::size_t n = 0; n < weights.size(); ++n) {
    const auto a = attr_emb.row(n);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += weights[n] * a[k];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scores

struct ScoringOptions {
  double gamma = 0.7;
  double beta = 8.0;
  double epsilon = 8.0;
  bool item_aggregation = true;
  bool user_aggregation = true;

  static ScoringOptions from(const TrainConfig& c) {
    return {c.gamma, c.beta, c.epsilon, c.item_aggregation, c.user_aggregation};
  }
};

namespace detail {

inline void check_index(Index idx, std::size_t size, const char* what) {
  if (idx >= size) throw std::out_of_range(std::string(what) + " index out of range");
}

/// w^T [left ⊙ right ; aggregate(weights)]. The attribute half is dropped
/// when `weights` is empty.
inline double pair_score(std::span<const double> w, std::span<const double> left,
                         std::span<const double> right, const std::vector<double>& weights,
                         const Matrix& attr_emb) {
  const std::size_t d = left.size();
  double score = 0.0;
  for (std::size_t k = 0; k < d; ++k) score += w[k] * left[k] * right[k];
  if (!weights.empty()) {
    if (w.size() < 2 * d) throw std::invalid_argument("projection has no attribute half");
    const auto agg = aggregate_attributes(weights, attr_emb);
    for (std::size_t k = 0; k < d; ++k) score += w[d + k] * agg[k];
  }
  return score;
}

inline void pair_score_grad(std::span<const double> w, std::span<const double> left,
                            std::span<const double> right, const std::vector<double>& weights,
                            const Matrix& attr_emb, double upstream, std::span<double> grad_w,
                            std::span<double> grad_left, std::span<double> grad_right,
                            Matrix& grad_attr) {
  const std::size_t d = left.size();
  for (std::size_t k = 0; k < d; ++k) {
    grad_w[k] += upstream * left[k] * right[k];
    grad_left[k] += upstream * w[k] * right[k];
    grad_right[k] += upstream * w[k] * left[k];
  }
  if (weights.empty()) return;
  if (w.size() < 2 * d) throw std::invalid_argument("projection has no attribute half");
  const auto agg = aggregate_attributes(weights, attr_emb);
  for (std::size_t k = 0; k < d; ++k) grad_w[d + k] += upstream * agg[k];
  for (std::size_t n = 0; n < weights.size(); ++n) {
    auto ga = grad_attr.row(n);
    const double scale = upstream * weights[n];
    for (std::size_t k = 0; k < d; ++k) ga[k] += scale * w[d + k];
  }
}

}  // namespace detail

/// f_S(q, j) = w_s^T [v_q ⊙ v_j ; Σ φ_n a_n], φ = softmax(ỹ_q ⊙ ỹ_j / β).
inline double score_substitution(Index query, Index item, const ModelParams& p,
                                 const EstimatedMatrices& m, const ScoringOptions& opt) {
  detail::check_index(query, p.dims.items, "query");
  detail::check_index(item, p.dims.items, "item");
  const auto weights = opt.item_aggregation
                           ? substitution_attention(m.item_attr.row(query), m.item_attr.row(item), opt.beta)
                           : std::vector<double>{};
  return detail::pair_score(p.score_s, p.item_emb.row(query), p.item_emb.row(item), weights,
                            p.attr_emb);
}

/// f_P(i, j) = w_p^T [u_i ⊙ v_j ; Σ λ_n a_n], λ = softmax(x̃_i ⊙ ỹ_j / ε).
inline double score_personalization(Index user, Index item, const ModelParams& p,
                                    const EstimatedMatrices& m, const ScoringOptions& opt) {
  detail::check_index(user, p.dims.users, "user");
  detail::check_index(item, p.dims.items, "item");
  const auto weights = opt.user_aggregation
                           ? personalization_attention(m.user_attr.row(user), m.item_attr.row(item),
                                                       opt.epsilon)
                           : std::vector<double>{};
  return detail::pair_score(p.score_p, p.user_emb.row(user), p.item_emb.row(item), weights,
                            p.attr_emb);
}

/// γ f_S(q, j) + (1 - γ) f_P(i, j). The unused half is skipped at γ = 0 or 1.
inline double triplet_score(Index user, Index query, Index item, const ModelParams& p,
                            const EstimatedMatrices& m, const ScoringOptions& opt) {
  double score = 0.0;
  if (opt.gamma > 0.0) score += opt.gamma * score_substitution(query, item, p, m, opt);
  if (opt.gamma < 1.0) score += (1.0 - opt.gamma) * score_personalization(user, item, p, m, opt);
  return score;
}

/// Accumulates upstream * d f(i, q, j) / d params.
inline void triplet_score_grad(Index user, Index query, Index item, const ModelParams& p,
                               const EstimatedMatrices& m, const ScoringOptions& opt,
                               double upstream, GradientBuffer& g) {
  if (opt.gamma > 0.0) {
    const auto weights = opt.item_aggregation
                             ? substitution_attention(m.item_attr.row(query), m.item_attr.row(item), opt.beta)
                             : std::vector<double>{};
    detail::pair_score_grad(p.score_s, p.item_emb.row(query), p.item_emb.row(item), weights,
                            p.attr_emb, upstream * opt.gamma, g.score_s, g.item_emb.row(query),
                            g.item_emb.row(item), g.attr_emb);
  }
  if (opt.gamma < 1.0) {
    const auto weights = opt.user_aggregation
                             ? personalization_attention(m.user_attr.row(user), m.item_attr.row(item),
                                                         opt.epsilon)
                             : std::vector<double>{};
    detail::pair_score_grad(p.score_p, p.user_emb.row(user), p.item_emb.row(item), weights,
                            p.attr_emb, upstream * (1.0 - opt.gamma), g.score_p,
                            g.user_emb.row(user), g.item_emb.row(item), g.attr_emb);
  }
}

// ---------------------------------------------------------------------------
// BPR-S

/// log σ(x) = -softplus(-x), stable for large |x|.
inline double log_sigmoid(double x) {
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

struct TrainTriplet {
  Index user = 0;
  Index query = 0;
  Index positive = 0;
  std::vector<Index> negatives;
};

/// Uniform rejection sampling. An item is an acceptable negative unless the
/// user interacted with it and it is a substitute of the query. The positive
/// and the query itself are never returned. Draws may repeat.
inline std::vector<Index> sample_negatives(Index user, Index query, Index positive,
                                           const Corpus& corpus, std::size_t count, Rng& rng) {
  std::vector<Index> out;
  out.reserve(count);
  const std::size_t max_attempts = 1000 * count;
  std::size_t attempts = 0;
  while (out.size() < count) {
    if (++attempts > max_attempts) {
      throw Error("negative sampling exhausted " + std::to_string(max_attempts) +
                  " attempts; corpus too small or too dense");
    }
    const auto j = static_cast<Index>(rng.below(corpus.num_items()));
    if (j == positive || j == query) continue;
    if (corpus.interacted(user, j) && corpus.substitutable(query, j)) continue;
    out.push_back(j);
  }
  return out;
}

/// -Σ log σ(f(i,q,j+) - f(i,q,j-)) over every (triplet, negative) term.
/// Accumulates the gradient when `grads` is non-null.
inline double bpr_s_loss(std::span<const TrainTriplet> batch, const ModelParams& p,
                         const EstimatedMatrices& m, const ScoringOptions& opt,
                         GradientBuffer* grads = nullptr) {
  if (batch.empty()) throw std::invalid_argument("bpr_s_loss: empty batch");
  double loss = 0.0;
  for (const auto& t : batch) {
    const double pos = triplet_score(t.user, t.query, t.positive, p, m, opt);
    double pos_upstream = 0.0;
    for (Index neg : t.negatives) {
      const double margin = pos - triplet_score(t.user, t.query, neg, p, m, opt);
      loss -= log_sigmoid(margin);
      if (grads != nullptr) {
        const double g = -sigmoid(-margin);  // d(-log σ(x))/dx
        pos_upstream += g;
        triplet_score_grad(t.user, t.query, neg, p, m, opt, -g, *grads);
      }
    }
    if (grads != nullptr && pos_upstream != 0.0) {
      triplet_score_grad(t.user, t.query, t.positive, p, m, opt, pos_upstream, *grads);
    }
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Top-K

struct ScoredItem {
  Index item;
  double score;

  bool operator==(const ScoredItem&) const = default;
};

/// Sorted by score descending, ties by ascending item index.
struct RankedList {
  Index user = 0;
  Index query = 0;
  std::vector<ScoredItem> items;
};

inline bool ranks_before(const ScoredItem& a, const ScoredItem& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.item < b.item;
}

/// Scores each distinct candidate with `score(item)` and keeps the best k.
template <typename ScoreFn>
RankedList rank_candidates(Index user, Index query, std::span<const Index> candidates,
                           std::size_t k, ScoreFn&& score) {
  if (candidates.empty()) throw std::invalid_argument("rank_candidates: no candidates");
  if (k == 0) throw std::invalid_argument("rank_candidates: K must be at least 1");
  RankedList out{user, query, {}};
  out.items.reserve(candidates.size());
  std::unordered_set<Index> seen;
  for (Index j : candidates) {
    if (seen.insert(j).second) out.items.push_back({j, score(j)});
  }
  const std::size_t keep = std::min(k, out.items.size());
  std::partial_sort(out.items.begin(), out.items.begin() + static_cast<std::ptrdiff_t>(keep),
                    out.items.end(), ranks_before);
  out.items.resize(keep);
  return out;
}

inline RankedList recommend_top_k(Index user, Index query, std::span<const Index> candidates,
                                  std::size_t k, const ModelParams& p, const EstimatedMatrices& m,
                                  const ScoringOptions& opt) {
  return rank_candidates(user, query, candidates, k,
                         [&](Index j) { return triplet_score(user, query, j, p, m, opt); });
}

}  // namespace a2cf
