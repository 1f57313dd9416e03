#pragma once

// Review, lexicon and substitute ingestion; k-core filtering; ground-truth
// triplet construction with popularity-biased query sampling; 80/10/10 split.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "a2cf/common.hpp"

namespace a2cf {

struct ReviewRecord {
  std::string user_id;
  std::string item_id;
  int rating = 0;
  std::optional<std::int64_t> timestamp;

  bool operator==(const ReviewRecord&) const = default;
};

struct LexiconEntry {
  std::string user_id;
  std::string item_id;
  std::string attribute;
  int sentiment = 0;  // +1 or -1

  bool operator==(const LexiconEntry&) const = default;
};

/// Unordered pair of substitutable items.
struct SubstitutePair {
  std::string item_a;
  std::string item_b;

  bool operator==(const SubstitutePair&) const = default;
};

namespace detail {

inline std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

template <typename T>
bool parse_integer(std::string_view text, T& out) {
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc{} && ptr == text.data() + text.size() && !text.empty();
}

/// Calls fn(fields, line_number) for every non-blank, non-comment line.
template <typename Fn>
void for_each_record(std::istream& in, Fn&& fn) {
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    fn(split_tabs(line), line_number);
  }
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return in;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Loaders. Format: tab-separated, one record per line, '#' starts a comment.

inline std::vector<ReviewRecord> parse_reviews(std::istream& in, const std::string& source,
                                               int max_rating = 5) {
  std::vector<ReviewRecord> records;
  detail::for_each_record(in, [&](const std::vector<std::string_view>& f, std::size_t line) {
    if (f.size() != 3 && f.size() != 4) {
      throw ParseError(source, line, "expected user, item, rating[, timestamp]");
    }
    if (f[0].empty() || f[1].empty()) throw ParseError(source, line, "empty id");
    ReviewRecord rec{std::string(f[0]), std::string(f[1]), 0, std::nullopt};
    if (!detail::parse_integer(f[2], rec.rating)) {
      throw ParseError(source, line, "rating is not an integer: '" + std::string(f[2]) + "'");
    }
    if (rec.rating < 1 || rec.rating > max_rating) {
      throw ParseError(source, line,
                       "rating " + std::to_string(rec.rating) + " outside [1, " +
                           std::to_string(max_rating) + "]");
    }
    if (f.size() == 4 && !f[3].empty()) {
      std::int64_t ts = 0;
      if (!detail::parse_integer(f[3], ts)) throw ParseError(source, line, "bad timestamp");
      rec.timestamp = ts;
    }
    records.push_back(std::move(rec));
  });
  return records;
}

inline std::vector<ReviewRecord> load_reviews(const std::filesystem::path& path, int max_rating = 5) {
  auto in = detail::open_input(path);
  return parse_reviews(in, path.string(), max_rating);
}

inline std::vector<LexiconEntry> parse_lexicon(std::istream& in, const std::string& source) {
  std::vector<LexiconEntry> entries;
  detail::for_each_record(in, [&](const std::vector<std::string_view>& f, std::size_t line) {
    if (f.size() != 4) throw ParseError(source, line, "expected user, item, attribute, sentiment");
    if (f[0].empty() || f[1].empty() || f[2].empty()) throw ParseError(source, line, "empty field");
    int sentiment = 0;
    if (f[3] == "+1") {
      sentiment = 1;
    } else if (f[3] == "-1") {
      sentiment = -1;
    } else {
      throw ParseError(source, line, "sentiment must be +1 or -1, got '" + std::string(f[3]) + "'");
    }
    entries.push_back({std::string(f[0]), std::string(f[1]), std::string(f[2]), sentiment});
  });
  return entries;
}

inline std::vector<LexiconEntry> load_lexicon(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  return parse_lexicon(in, path.string());
}

/// Duplicate unordered pairs are dropped; the first occurrence keeps its order.
inline std::vector<SubstitutePair> parse_substitutes(std::istream& in, const std::string& source) {
  std::vector<SubstitutePair> pairs;
  std::set<std::pair<std::string, std::string>> seen;
  detail::for_each_record(in, [&](const std::vector<std::string_view>& f, std::size_t line) {
    if (f.size() != 2 || f[0].empty() || f[1].empty()) {
      throw ParseError(source, line, "expected two item ids");
    }
    if (f[0] == f[1]) throw ParseError(source, line, "item paired with itself");
    std::pair<std::string, std::string> key{f[0], f[1]};
    if (key.second < key.first) std::swap(key.first, key.second);
    if (seen.insert(std::move(key)).second) pairs.push_back({std::string(f[0]), std::string(f[1])});
  });
  return pairs;
}

inline std::vector<SubstitutePair> load_substitutes(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  return parse_substitutes(in, path.string());
}

// ---------------------------------------------------------------------------
// Corpus

struct IndexedLexiconEntry {
  Index user;
  Index item;
  Index attribute;
  int sentiment;

  bool operator==(const IndexedLexiconEntry&) const = default;
};

/// Filtered, densely indexed view of the raw inputs. Tokens are indexed in
/// lexicographic order so re-indexing the same data is stable. Immutable
/// after construction.
struct Corpus {
  std::vector<std::string> users;
  std::vector<std::string> items;
  std::vector<std::string> attributes;
  std::vector<std::vector<Index>> user_items;   // sorted, distinct
  std::vector<std::vector<Index>> item_users;   // sorted, distinct
  std::vector<IndexedLexiconEntry> lexicon;
  std::vector<std::vector<Index>> substitutes;  // symmetric adjacency, sorted
  std::vector<std::size_t> popularity;          // distinct users per item

  std::unordered_map<std::string, Index> user_lookup;
  std::unordered_map<std::string, Index> item_lookup;
  std::unordered_map<std::string, Index> attribute_lookup;

  std::size_t num_users() const { return users.size(); }
  std::size_t num_items() const { return items.size(); }
  std::size_t num_attributes() const { return attributes.size(); }

  std::size_t num_interactions() const {
    std::size_t total = 0;
    for (const auto& row : user_items) total += row.size();
    return total;
  }

  std::size_t num_substitute_pairs() const {
    std::size_t total = 0;
    for (const auto& row : substitutes) total += row.size();
    return total / 2;
  }

  bool interacted(Index user, Index item) const {
    const auto& row = user_items[user];
    return std::binary_search(row.begin(), row.end(), item);
  }

  bool substitutable(Index a, Index b) const {
    const auto& row = substitutes[a];
    return std::binary_search(row.begin(), row.end(), b);
  }

  std::optional<Index> find_user(const std::string& id) const { return find(user_lookup, id); }
  std::optional<Index> find_item(const std::string& id) const { return find(item_lookup, id); }
  std::optional<Index> find_attribute(const std::string& id) const {
    return find(attribute_lookup, id);
  }

 private:
  static std::optional<Index> find(const std::unordered_map<std::string, Index>& map,
                                    const std::string& id) {
    const auto it = map.find(id);
    if (it == map.end()) return std::nullopt;
    return it->second;
  }
};

struct FilterOptions {
  std::size_t min_user_items = 5;
  std::size_t min_item_users = 5;
  std::size_t min_attr_mentions = 2;
};

namespace detail {

inline std::unordered_map<std::string, Index> index_tokens(std::vector<std::string>& tokens) {
  std::sort(tokens.begin(), tokens.end());
  tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
  std::unordered_map<std::string, Index> lookup;
  lookup.reserve(tokens.size());
  for (std::size_t k = 0; k < tokens.size(); ++k) lookup.emplace(tokens[k], static_cast<Index>(k));
  return lookup;
}

}  // namespace detail

/// Drops users with fewer than min_user_items distinct items and items with
/// fewer than min_item_users distinct users, repeating until both thresholds
/// hold at once, then drops attributes with fewer than min_attr_mentions
/// surviving lexicon mentions.
inline Corpus filter_corpus(const std::vector<ReviewRecord>& reviews,
                            const std::vector<LexiconEntry>& lexicon,
                            const std::vector<SubstitutePair>& substitutes,
                            const FilterOptions& options = {}) {
  std::set<std::pair<std::string, std::string>> interactions;
  for (const auto& r : reviews) interactions.emplace(r.user_id, r.item_id);

  while (true) {
    std::map<std::string, std::size_t> user_count, item_count;
    for (const auto& [u, v] : interactions) {
      ++user_count[u];
      ++item_count[v];
    }
    const std::size_t before = interactions.size();
    std::erase_if(interactions, [&](const auto& pair) {
      return user_count[pair.first] < options.min_user_items ||
             item_count[pair.second] < options.min_item_users;
    });
    if (interactions.size() == before) break;
  }

  Corpus corpus;
  for (const auto& [u, v] : interactions) {
    corpus.users.push_back(u);
    corpus.items.push_back(v);
  }
  corpus.user_lookup = detail::index_tokens(corpus.users);
  corpus.item_lookup = detail::index_tokens(corpus.items);

  std::map<std::string, std::size_t> mentions;
  for (const auto& e : lexicon) {
    if (corpus.user_lookup.count(e.user_id) && corpus.item_lookup.count(e.item_id)) {
      ++mentions[e.attribute];
    }
  }
  for (const auto& [attr, count] : mentions) {
    if (count >= options.min_attr_mentions) corpus.attributes.push_back(attr);
  }
  corpus.attribute_lookup = detail::index_tokens(corpus.attributes);

  if (corpus.users.empty() || corpus.items.empty() || corpus.attributes.empty()) {
    throw Error("corpus is empty after filtering (users=" + std::to_string(corpus.users.size()) +
                ", items=" + std::to_string(corpus.items.size()) +
                ", attributes=" + std::to_string(corpus.attributes.size()) + ")");
  }

  corpus.user_items.resize(corpus.users.size());
  corpus.item_users.resize(corpus.items.size());
  for (const auto& [u, v] : interactions) {
    const Index ui = corpus.user_lookup.at(u);
    const Index vi = corpus.item_lookup.at(v);
    corpus.user_items[ui].push_back(vi);
    corpus.item_users[vi].push_back(ui);
  }
  for (auto& row : corpus.user_items) std::sort(row.begin(), row.end());
  for (auto& row : corpus.item_users) std::sort(row.begin(), row.end());
  corpus.popularity.resize(corpus.items.size());
  for (std::size_t v = 0; v < corpus.items.size(); ++v) {
    corpus.popularity[v] = corpus.item_users[v].size();
  }

  for (const auto& e : lexicon) {
    const auto u = corpus.find_user(e.user_id);
    const auto v = corpus.find_item(e.item_id);
    const auto a = corpus.find_attribute(e.attribute);
    if (u && v && a) corpus.lexicon.push_back({*u, *v, *a, e.sentiment});
  }

  corpus.substitutes.resize(corpus.items.size());
  for (const auto& p : substitutes) {
    const auto a = corpus.find_item(p.item_a);
    const auto b = corpus.find_item(p.item_b);
    if (!a || !b || *a == *b) continue;
    corpus.substitutes[*a].push_back(*b);
    corpus.substitutes[*b].push_back(*a);
  }
  for (auto& row : corpus.substitutes) {
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
  }
  return corpus;
}

/// Re-expands a corpus into raw records (rating fixed at 1). Used to check
/// the filter fixed point and to persist a prepared corpus.
inline std::vector<ReviewRecord> corpus_reviews(const Corpus& corpus) {
  std::vector<ReviewRecord> out;
  for (std::size_t u = 0; u < corpus.num_users(); ++u) {
    for (Index v : corpus.user_items[u]) out.push_back({corpus.users[u], corpus.items[v], 1, {}});
  }
  return out;
}

inline std::vector<LexiconEntry> corpus_lexicon(const Corpus& corpus) {
  std::vector<LexiconEntry> out;
  out.reserve(corpus.lexicon.size());
  for (const auto& e : corpus.lexicon) {
    out.push_back({corpus.users[e.user], corpus.items[e.item], corpus.attributes[e.attribute],
                   e.sentiment});
  }
  return out;
}

inline std::vector<SubstitutePair> corpus_substitutes(const Corpus& corpus) {
  std::vector<SubstitutePair> out;
  for (std::size_t a = 0; a < corpus.num_items(); ++a) {
    for (Index b : corpus.substitutes[a]) {
      if (a < b) out.push_back({corpus.items[a], corpus.items[b]});
    }
  }
  return out;
}

inline void write_manifest(std::ostream& out, const Corpus& corpus) {
  out << "users=" << corpus.num_users() << '\n'
      << "items=" << corpus.num_items() << '\n'
      << "attributes=" << corpus.num_attributes() << '\n'
      << "interactions=" << corpus.num_interactions() << '\n'
      << "lexicon_entries=" << corpus.lexicon.size() << '\n'
      << "substitute_pairs=" << corpus.num_substitute_pairs() << '\n';
}

// ---------------------------------------------------------------------------
// Ground-truth triplets

enum class Split { Train, Valid, Test };

inline std::string_view split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Valid: return "valid";
    case Split::Test: return "test";
  }
  return "?";
}

/// (user, query, positive): the user browsed `query` and chose `positive`.
struct Triplet {
  Index user = 0;
  Index query = 0;
  Index positive = 0;
  Split split = Split::Train;

  bool operator==(const Triplet&) const = default;
};

/// Smoothing exponent applied to item popularity when drawing query items.
inline constexpr double kQueryPopularityExponent = 0.75;

/// Candidate query items for (user, positive): substitutes of the positive
/// the user never interacted with.
inline std::vector<Index> query_candidates(Index user, Index positive, const Corpus& corpus) {
  std::vector<Index> out;
  for (Index q : corpus.substitutes[positive]) {
    if (!corpus.interacted(user, q)) out.push_back(q);
  }
  return out;
}

/// Draws one query item with probability proportional to pop_q^0.75, or
/// nothing when the candidate set is empty.
inline std::optional<Index> sample_query_item(Index user, Index positive, const Corpus& corpus,
                                              Rng& rng) {
  const auto candidates = query_candidates(user, positive, corpus);
  if (candidates.empty()) return std::nullopt;
  std::vector<double> weights;
  weights.reserve(candidates.size());
  for (Index q : candidates) {
    weights.push_back(std::pow(static_cast<double>(corpus.popularity[q]), kQueryPopularityExponent));
  }
  return candidates[rng.weighted(weights)];
}

struct TripletBuild {
  std::vector<Triplet> triplets;
  std::size_t skipped = 0;  // interactions with no eligible query item
};

/// One triplet per interaction, visited in (user, item) index order.
inline TripletBuild build_triplets(const Corpus& corpus, std::uint64_t seed) {
  Rng rng(seed);
  TripletBuild out;
  for (std::size_t u = 0; u < corpus.num_users(); ++u) {
    for (Index positive : corpus.user_items[u]) {
      const auto q = sample_query_item(static_cast<Index>(u), positive, corpus, rng);
      if (!q) {
        ++out.skipped;
        continue;
      }
      out.triplets.push_back({static_cast<Index>(u), *q, positive, Split::Train});
    }
  }
  if (out.skipped > 0) {
    log_info("skipped " + std::to_string(out.skipped) +
             " interactions without an eligible query item");
  }
  return out;
}

struct TripletSplit {
  std::vector<Triplet> train;
  std::vector<Triplet> valid;
  std::vector<Triplet> test;
  std::size_t discarded_test = 0;  // test candidates that overlapped training pairs

  const std::vector<Triplet>& part(Split s) const {
    return s == Split::Train ? train : s == Split::Valid ? valid : test;
  }
};

/// Random split by triplet. Valid and test sizes are floored, the remainder
/// goes to training. Test triplets whose (user, positive) or (query,
/// positive) pair occurs in training are discarded.
inline TripletSplit split_triplets(const std::vector<Triplet>& triplets,
                                   const std::array<double, 3>& ratios, std::uint64_t seed) {
  const double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(sum - 1.0) > 1e-9 || ratios[0] < 0 || ratios[1] < 0 || ratios[2] < 0) {
    throw Error("split ratios must be non-negative and sum to 1");
  }
  const std::size_t n = triplets.size();
  const auto count = [n](double r) {
    return static_cast<std::size_t>(std::floor(r * static_cast<double>(n) + 1e-9));
  };
  const std::size_t n_valid = count(ratios[1]);
  const std::size_t n_test = count(ratios[2]);
  const std::size_t n_train = n - n_valid - n_test;

  std::vector<std::size_t> order(n);
  for (std::size_t k = 0; k < n; ++k) order[k] = k;
  Rng rng(seed);
  rng.shuffle(order);

  TripletSplit out;
  std::set<std::pair<Index, Index>> user_positive, query_positive;
  for (std::size_t k = 0; k < n; ++k) {
    Triplet t = triplets[order[k]];
    if (k < n_train) {
      t.split = Split::Train;
      out.train.push_back(t);
      user_positive.emplace(t.user, t.positive);
      query_positive.emplace(t.query, t.positive);
    } else if (k < n_train + n_valid) {
      t.split = Split::Valid;
      out.valid.push_back(t);
    } else {
      t.split = Split::Test;
      out.test.push_back(t);
    }
  }
  std::erase_if(out.test, [&](const Triplet& t) {
    const bool overlaps = user_positive.count({t.user, t.positive}) > 0 ||
                          query_positive.count({t.query, t.positive}) > 0;
    out.discarded_test += overlaps ? 1 : 0;
    return overlaps;
  });
  return out;
}

inline void write_triplets(std::ostream& out, const Corpus& corpus, const TripletSplit& split) {
  for (Split s : {Split::Train, Split::Valid, Split::Test}) {
    for (const auto& t : split.part(s)) {
      out << corpus.users[t.user] << '\t' << corpus.items[t.query] << '\t'
          << corpus.items[t.positive] << '\t' << split_name(s) << '\n';
    }
  }
}

}  // namespace a2cf
