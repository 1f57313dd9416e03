#pragma once

// Independent reference implementations used by the unit suites and the
// acceptance runner. Closed forms are evaluated in long double through
// different identities than the library uses; set-based procedures are
// recomputed by brute force.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "a2cf/data.hpp"
#include "a2cf/model.hpp"
#include "a2cf/ranking.hpp"

namespace a2cf::oracle {

using Real = long double;

// (1 - e^{-t}) / (1 + e^{-t}) = tanh(t / 2)
inline Real user_attr(Real t, Real n) { return 1 + (n - 1) * std::tanh(t / 2); }

// 1 / (1 + e^{-x}) = (1 + tanh(x / 2)) / 2
inline Real item_attr(Real t, Real s, Real n) { return 1 + (n - 1) * (1 + std::tanh(t * s / 2)) / 2; }

// (N e^{2r} + 1) / (e^{2r} + 1) = 1 + (N - 1)(1 + tanh r) / 2
inline Real tanh_rescaled(Real r, Real n) { return 1 + (n - 1) * (1 + std::tanh(r)) / 2; }

inline std::vector<Real> softmax_product(const std::vector<double>& a, const std::vector<double>& b,
                                         Real temperature) {
  std::vector<Real> w(a.size());
  Real total = 0;
  for (std::size_t n = 0; n < a.size(); ++n) {
    w[n] = std::exp(static_cast<Real>(a[n]) * b[n] / temperature);
    total += w[n];
  }
  for (auto& v : w) v /= total;
  return w;
}

inline std::vector<Real> advantage(const std::vector<double>& x, const std::vector<double>& yq,
                                   const std::vector<double>& yj) {
  std::vector<Real> d(x.size());
  for (std::size_t n = 0; n < x.size(); ++n) {
    d[n] = static_cast<Real>(x[n]) * (static_cast<Real>(yj[n]) - static_cast<Real>(yq[n]));
  }
  return d;
}

/// For every relevant attribute found inside the cut, precision at its
/// position counted from scratch.
inline Real average_precision(const std::vector<Index>& ranking, const std::set<Index>& relevant,
                              std::size_t cut) {
  if (relevant.empty()) return 0;
  Real sum = 0;
  for (Index r : relevant) {
    const auto it = std::find(ranking.begin(), ranking.end(), r);
    if (it == ranking.end()) continue;
    const auto pos = static_cast<std::size_t>(it - ranking.begin());
    if (pos >= cut) continue;
    std::size_t above = 0;
    for (std::size_t k = 0; k <= pos; ++k) above += relevant.count(ranking[k]);
    sum += static_cast<Real>(above) / static_cast<Real>(pos + 1);
  }
  return sum / static_cast<Real>(std::min(relevant.size(), cut));
}

inline Real ndcg(std::size_t rank, std::size_t k) {
  return rank <= k ? std::log(Real(2)) / std::log(static_cast<Real>(rank) + 1) : 0;
}

inline Real atc(const std::vector<std::pair<Real, Real>>& cases) {
  Real sum = 0;
  for (const auto& [map, ndcg] : cases) sum += map + ndcg == 0 ? 0 : 1 / ((1 / map + 1 / ndcg) / 2);
  return sum / static_cast<Real>(cases.size());
}

inline Real neg_log_sigmoid(Real x) { return std::log1p(std::exp(-x)); }

// ---------------------------------------------------------------------------
// Filtering

struct FilterResult {
  std::set<std::string> users;
  std::set<std::string> items;
  std::set<std::string> attributes;
};

/// Repeatedly deletes every under-threshold user and item from the raw
/// interaction list until a full pass deletes nothing.
inline FilterResult brute_filter(const std::vector<ReviewRecord>& reviews,
                                 const std::vector<LexiconEntry>& lexicon, const FilterOptions& opt) {
  std::set<std::pair<std::string, std::string>> live;
  for (const auto& r : reviews) live.insert({r.user_id, r.item_id});
  while (true) {
    std::map<std::string, std::size_t> uc, ic;
    for (const auto& [u, i] : live) {
      ++uc[u];
      ++ic[i];
    }
    std::set<std::pair<std::string, std::string>> next;
    for (const auto& p : live) {
      if (uc[p.first] >= opt.min_user_items && ic[p.second] >= opt.min_item_users) next.insert(p);
    }
    if (next == live) break;
    live = std::move(next);
  }
  FilterResult out;
  for (const auto& [u, i] : live) {
    out.users.insert(u);
    out.items.insert(i);
  }
  std::map<std::string, std::size_t> mentions;
  for (const auto& e : lexicon) {
    if (live.count({e.user_id, e.item_id})) ++mentions[e.attribute];
  }
  for (const auto& [a, c] : mentions) {
    if (c >= opt.min_attr_mentions) out.attributes.insert(a);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gradients

struct GradientCheck {
  double max_relative_error = 0.0;
  std::string worst;
  std::size_t checked = 0;
};

using LossFn = std::function<double(const ModelParams&, GradientBuffer*)>;

/// Compares the analytic gradient of `loss` with central differences on every
/// parameter. Relative error is |a - n| / max(|a|, |n|, floor).
inline GradientCheck check_gradient(const ModelParams& params, const LossFn& loss, double step = 1e-5,
                                    double floor = 1e-6) {
  GradientBuffer analytic = make_gradient_buffer(params.dims);
  loss(params, &analytic);
  ModelParams probe = params;
  auto pt = probe.tensors();
  const auto gt = analytic.tensors();
  GradientCheck out;
  for (std::size_t t = 0; t < pt.size(); ++t) {
    for (std::size_t k = 0; k < pt[t].values.size(); ++k) {
      const double saved = pt[t].values[k];
      pt[t].values[k] = saved + step;
      const double up = loss(probe, nullptr);
      pt[t].values[k] = saved - step;
      const double down = loss(probe, nullptr);
      pt[t].values[k] = saved;
      const double numeric = (up - down) / (2 * step);
      const double a = gt[t].values[k];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      if (err > out.max_relative_error) {
        out.max_relative_error = err;
        out.worst = pt[t].name + "[" + std::to_string(k) + "]";
      }
      ++out.checked;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Small random instances

struct TinyInstance {
  ModelParams params;
  EstimatedMatrices estimated;
  Phase1Batch phase1;
  std::vector<TrainTriplet> ranking;
  double rating_max = 5.0;
};

/// Weights drawn at a scale where ReLU kinks sit far from the probe step.
inline TinyInstance tiny_instance(std::uint64_t seed, ModelDims dims = {3, 5, 6, 4, 2}) {
  Rng rng(seed);
  TinyInstance t;
  t.params = ModelParams::zeros(dims);
  for (auto& tensor : t.params.tensors()) {
    for (double& v : tensor.values) v = rng.uniform(-0.6, 0.6);
  }
  t.estimated.user_attr = Matrix(dims.users, dims.attributes);
  t.estimated.item_attr = Matrix(dims.items, dims.attributes);
  for (double& v : t.estimated.user_attr.data) v = rng.uniform(1.0, t.rating_max);
  for (double& v : t.estimated.item_attr.data) v = rng.uniform(1.0, t.rating_max);
  for (std::size_t k = 0; k < 6; ++k) {
    t.phase1.user_entries.push_back({static_cast<Index>(rng.below(dims.users)),
                                     static_cast<Index>(rng.below(dims.attributes)),
                                     rng.uniform(1.0, t.rating_max)});
    t.phase1.item_entries.push_back({static_cast<Index>(rng.below(dims.items)),
                                     static_cast<Index>(rng.below(dims.attributes)),
                                     rng.uniform(1.0, t.rating_max)});
  }
  for (std::size_t k = 0; k < 4; ++k) {
    TrainTriplet tr;
    tr.user = static_cast<Index>(rng.below(dims.users));
    tr.query = static_cast<Index>(rng.below(dims.items));
    do {
      tr.positive = static_cast<Index>(rng.below(dims.items));
    } while (tr.positive == tr.query);
    for (std::size_t n = 0; n < 3; ++n) {
      Index j;
      do {
        j = static_cast<Index>(rng.below(dims.items));
      } while (j == tr.positive || j == tr.query);
      tr.negatives.push_back(j);
    }
    t.ranking.push_back(std::move(tr));
  }
  return t;
}

}  // namespace a2cf::oracle
