#pragma once

// Planted-structure corpus generator for desk-scale verification.
//
// Items are grouped into substitute clusters. Each cluster owns a few
// category-specific attributes on which its items have a planted quality;
// a handful of generic attributes are mentioned for every item with
// uninformative sentiment. Users are interested in a few clusters and carry
// a planted preference over the specific attributes of those clusters.
// Within a cluster a user picks items with probability increasing in
// preference · quality, and reviews mention attributes in proportion to the
// user's preference with sentiment following the item's quality.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "a2cf/common.hpp"
#include "a2cf/data.hpp"

namespace a2cf {

struct SyntheticSpec {
  std::size_t users = 200;
  std::size_t items = 300;
  std::size_t attributes = 30;
  std::size_t clusters = 20;
  std::size_t generic_attributes = 6;
  std::size_t cluster_attributes = 4;
  std::size_t clusters_per_user = 3;
  std::size_t min_user_items = 5;
  std::size_t min_item_users = 5;
  std::size_t items_per_cluster = 2;  // choices per interest cluster, before jitter
  double substitute_density = 0.8;  // share of within-cluster pairs listed as substitutes
  double choice_sharpness = 3.0;    // weight of preference · quality in item choice
  double noise = 0.1;               // sentiment flip rate and off-profile mention rate
  double item_bias = 0.2;           // spread of preference-independent item appeal
  double generic_mention_rate = 0.8;
  std::size_t max_mentions = 5;     // specific-attribute mentions per review, uniform in [1, max]
  int max_rating = 5;

  void validate() const {
    const auto fail = [](const std::string& what) { throw Error("infeasible synthetic spec: " + what); };
    if (users == 0 || items == 0 || attributes == 0 || clusters == 0) fail("all counts must be positive");
    if (clusters > items / 2) fail("every cluster needs at least two items");
    if (generic_attributes + cluster_attributes > attributes) {
      fail("not enough specific attributes for a cluster profile");
    }
    if (clusters_per_user == 0 || clusters_per_user > clusters) fail("clusters_per_user out of range");
    if (users < min_item_users) fail("fewer users than the per-item activity threshold");
    if (clusters_per_user * (items / clusters) < min_user_items) {
      fail("users cannot reach the per-user activity threshold within their clusters");
    }
    if (!(substitute_density > 0.0 && substitute_density <= 1.0)) fail("substitute_density out of range");
    if (!(noise >= 0.0 && noise < 0.5)) fail("noise must lie in [0, 0.5)");
    if (max_mentions == 0) fail("max_mentions must be positive");
    if (!(item_bias >= 0.0)) fail("item_bias must be non-negative");
    if (!(generic_mention_rate >= 0.0 && generic_mention_rate <= 1.0)) fail("generic_mention_rate out of range");
    if (max_rating < 2) fail("max_rating must be at least 2");
  }
};

struct SyntheticData {
  std::vector<ReviewRecord> reviews;
  std::vector<LexiconEntry> lexicon;
  std::vector<SubstitutePair> substitutes;
  std::vector<std::string> user_ids;
  std::vector<std::string> item_ids;
  std::vector<std::string> attribute_ids;
  Matrix preference;  // users x attributes, planted
  Matrix quality;     // items x attributes, planted
  std::vector<std::size_t> item_cluster;
};

namespace detail {

inline std::string padded(char prefix, std::size_t k, std::size_t total) {
  const int width = static_cast<int>(std::to_string(total).size());
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%0*zu", prefix, width, k);
  return buf;
}

}  // namespace detail

inline SyntheticData generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  SyntheticData out;
  const std::size_t U = spec.users, V = spec.items, A = spec.attributes, C = spec.clusters;
  for (std::size_t u = 0; u < U; ++u) out.user_ids.push_back(detail::padded('u', u, U));
  for (std::size_t v = 0; v < V; ++v) out.item_ids.push_back(detail::padded('i', v, V));
  for (std::size_t a = 0; a < A; ++a) out.attribute_ids.push_back(detail::padded('a', a, A));

  // contiguous cluster blocks
  std::vector<std::vector<std::size_t>> members(C);
  out.item_cluster.resize(V);
  for (std::size_t v = 0; v < V; ++v) {
    out.item_cluster[v] = v * C / V;
    members[out.item_cluster[v]].push_back(v);
  }

  std::vector<std::size_t> specific(A - spec.generic_attributes);
  std::iota(specific.begin(), specific.end(), spec.generic_attributes);
  std::vector<std::vector<std::size_t>> profile(C);
  for (auto& p : profile) {
    rng.shuffle(specific);
    p.assign(specific.begin(), specific.begin() + static_cast<std::ptrdiff_t>(spec.cluster_attributes));
    std::sort(p.begin(), p.end());
  }

  // every item excels on one signature attribute of its cluster profile
  out.quality = Matrix(V, A);
  std::vector<double> item_bias(V);
  for (std::size_t v = 0; v < V; ++v) {
    const auto& prof = profile[out.item_cluster[v]];
    for (std::size_t n : prof) out.quality(v, n) = -0.5 + 0.5 * rng.normal();
    out.quality(v, prof[rng.below(prof.size())]) = 1.5 + 0.25 * rng.normal();
    item_bias[v] = spec.item_bias * rng.normal();
  }

  // users: interest clusters, the first being primary, one favourite per cluster
  std::vector<std::vector<std::size_t>> user_clusters(U);
  out.preference = Matrix(U, A);
  for (std::size_t u = 0; u < U; ++u) {
    std::vector<std::size_t> all(C);
    std::iota(all.begin(), all.end(), std::size_t{0});
    rng.shuffle(all);
    user_clusters[u].assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(spec.clusters_per_user));
    for (std::size_t c : user_clusters[u]) {
      for (std::size_t n : profile[c]) out.preference(u, n) = std::max(out.preference(u, n), 0.1 * rng.uniform());
    }
    for (std::size_t c : user_clusters[u]) {
      out.preference(u, profile[c][rng.below(profile[c].size())]) = 1.0 + 0.2 * rng.uniform();
    }
  }

  const auto affinity = [&](std::size_t u, std::size_t v) {
    return dot(out.preference.row(u), out.quality.row(v));
  };

  std::vector<std::set<std::size_t>> chosen(U);
  for (std::size_t u = 0; u < U; ++u) {
    const std::size_t per_cluster = std::max(
        spec.items_per_cluster, (spec.min_user_items + spec.clusters_per_user - 1) / spec.clusters_per_user);
    for (std::size_t k = 0; k < user_clusters[u].size(); ++k) {
      const auto& cand = members[user_clusters[u][k]];
      std::size_t take = per_cluster + rng.below(2) + (k == 0 ? 1 : 0);
      take = std::min(take, cand.size());
      std::vector<double> weight(cand.size());
      for (std::size_t t = 0; t < take; ++t) {
        for (std::size_t c = 0; c < cand.size(); ++c) {
          weight[c] = chosen[u].count(cand[c])
                          ? 0.0
                          : std::exp(spec.choice_sharpness * affinity(u, cand[c]) + item_bias[cand[c]]);
        }
        chosen[u].insert(cand[rng.weighted(weight)]);
      }
    }
  }

  // top up items below the activity threshold with their best-matching users
  std::vector<std::size_t> item_count(V, 0);
  for (const auto& s : chosen) {
    for (std::size_t v : s) ++item_count[v];
  }
  for (std::size_t v = 0; v < V; ++v) {
    if (item_count[v] >= spec.min_item_users) continue;
    std::vector<std::pair<double, std::size_t>> ranked;
    for (std::size_t u = 0; u < U; ++u) {
      if (chosen[u].count(v)) continue;
      const bool interested = std::find(user_clusters[u].begin(), user_clusters[u].end(),
                                        out.item_cluster[v]) != user_clusters[u].end();
      ranked.push_back({(interested ? 100.0 : 0.0) + affinity(u, v), u});
    }
    std::sort(ranked.begin(), ranked.end(), std::greater<>());
    for (std::size_t k = 0; k < ranked.size() && item_count[v] < spec.min_item_users; ++k) {
      chosen[ranked[k].second].insert(v);
      ++item_count[v];
    }
  }

  // reviews and lexicon
  std::int64_t clock = 1'500'000'000;
  for (std::size_t u = 0; u < U; ++u) {
    for (std::size_t v : chosen[u]) {
      const double a = affinity(u, v);
      const double mid = 0.5 * (1 + spec.max_rating);
      const int rating = std::clamp(static_cast<int>(std::lround(mid + (mid - 1) * std::tanh(a))), 1,
                                    spec.max_rating);
      out.reviews.push_back({out.user_ids[u], out.item_ids[v], rating, clock += 60});

      const auto& prof = profile[out.item_cluster[v]];
      std::vector<double> w(prof.size());
      for (std::size_t k = 0; k < prof.size(); ++k) w[k] = out.preference(u, prof[k]) + 0.05;
      const std::size_t mentions = 1 + rng.below(spec.max_mentions);
      for (std::size_t m = 0; m < mentions; ++m) {
        std::size_t n = prof[rng.weighted(w)];
        if (rng.bernoulli(spec.noise)) n = spec.generic_attributes + rng.below(A - spec.generic_attributes);
        const double q = out.quality(v, n);
        int s = rng.bernoulli(1.0 / (1.0 + std::exp(-3.0 * q))) ? 1 : -1;
        if (rng.bernoulli(spec.noise)) s = -s;
        out.lexicon.push_back({out.user_ids[u], out.item_ids[v], out.attribute_ids[n], s});
      }
      if (spec.generic_attributes > 0 && rng.bernoulli(spec.generic_mention_rate)) {
        const std::size_t n = rng.below(spec.generic_attributes);
        out.lexicon.push_back({out.user_ids[u], out.item_ids[v], out.attribute_ids[n],
                               rng.bernoulli(0.5) ? 1 : -1});
      }
    }
  }

  for (const auto& m : members) {
    for (std::size_t x = 0; x < m.size(); ++x) {
      for (std::size_t y = x + 1; y < m.size(); ++y) {
        if (rng.bernoulli(spec.substitute_density)) {
          out.substitutes.push_back({out.item_ids[m[x]], out.item_ids[m[y]]});
        }
      }
    }
  }
  return out;
}

inline void write_synthetic(const std::filesystem::path& dir, const SyntheticData& data) {
  std::filesystem::create_directories(dir);
  const auto open = [&](const char* name) {
    std::ofstream out(dir / name);
    if (!out) throw Error("cannot write " + (dir / name).string());
    return out;
  };
  {
    auto out = open("reviews.tsv");
    out << "# user\titem\trating\ttimestamp\n";
    for (const auto& r : data.reviews) {
      out << r.user_id << '\t' << r.item_id << '\t' << r.rating;
      if (r.timestamp) out << '\t' << *r.timestamp;
      out << '\n';
    }
  }
  {
    auto out = open("lexicon.tsv");
    for (const auto& e : data.lexicon) {
      out << e.user_id << '\t' << e.item_id << '\t' << e.attribute << '\t'
          << (e.sentiment > 0 ? "+1" : "-1") << '\n';
    }
  }
  {
    auto out = open("substitutes.tsv");
    for (const auto& p : data.substitutes) out << p.item_a << '\t' << p.item_b << '\n';
  }
  char buf[32];
  const auto write_rows = [&](const char* name, const std::vector<std::string>& ids, const Matrix& m,
                              const std::vector<std::size_t>* tag) {
    auto out = open(name);
    for (std::size_t r = 0; r < m.rows; ++r) {
      out << ids[r];
      if (tag) out << '\t' << (*tag)[r];
      for (double v : m.row(r)) {
        std::snprintf(buf, sizeof buf, "%.6f", v);
        out << '\t' << buf;
      }
      out << '\n';
    }
  };
  write_rows("planted_preferences.tsv", data.user_ids, data.preference, nullptr);
  write_rows("planted_qualities.tsv", data.item_ids, data.quality, &data.item_cluster);
}

}  // namespace a2cf
