#pragma once

// Sparse user-attribute (X) and item-attribute (Y) matrices built from the
// sentiment lexicon. Stored values lie in [1, N]; absent entries mean zero.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <vector>

#include "a2cf/common.hpp"
#include "a2cf/data.hpp"

namespace a2cf {

/// Attention a user pays to an attribute mentioned t times:
/// 1 + (N-1) * (1 - e^-t) / (1 + e^-t).
inline double user_attr_value(double mentions, double rating_max) {
  if (!(mentions > 0)) throw std::invalid_argument("user_attr_value: mention count must be >= 1");
  const double e = std::exp(-mentions);
  return 1.0 + (rating_max - 1.0) * (1.0 - e) / (1.0 + e);
}

/// Crowd quality of an item attribute mentioned t times with mean sentiment s:
/// 1 + (N-1) / (1 + e^(-t*s)).
inline double item_attr_value(double mentions, double mean_sentiment, double rating_max) {
  if (!(mentions > 0)) throw std::invalid_argument("item_attr_value: mention count must be >= 1");
  if (!(mean_sentiment >= -1.0 && mean_sentiment <= 1.0)) {
    throw std::invalid_argument("item_attr_value: mean sentiment outside [-1, 1]");
  }
  return 1.0 + (rating_max - 1.0) / (1.0 + std::exp(-mentions * mean_sentiment));
}

class SparseAttributeMatrix {
 public:
  struct Entry {
    Index col;
    double value;
    bool operator==(const Entry&) const = default;
  };

  SparseAttributeMatrix() = default;
  SparseAttributeMatrix(std::size_t rows, std::size_t cols, double scale_cap)
      : cols_(cols), scale_cap_(scale_cap), rows_(rows) {}

  std::size_t rows() const { return rows_.size(); }
  std::size_t cols() const { return cols_; }
  double scale_cap() const { return scale_cap_; }

  /// Entries must be inserted with strictly increasing column per row.
  void push(Index row, Index col, double value) {
    if (!(value >= 1.0 && value <= scale_cap_)) {
      throw std::invalid_argument("attribute matrix value outside [1, N]");
    }
    auto& r = rows_.at(row);
    if (col >= cols_ || (!r.empty() && r.back().col >= col)) {
      throw std::invalid_argument("attribute matrix entries must be pushed in column order");
    }
    r.push_back({col, value});
  }

  std::optional<double> find(Index row, Index col) const {
    const auto& r = rows_.at(row);
    const auto it = std::lower_bound(r.begin(), r.end(), col,
                                     [](const Entry& e, Index c) { return e.col < c; });
    if (it == r.end() || it->col != col) return std::nullopt;
    return it->value;
  }

  /// Semantic value: zero where absent.
  double value(Index row, Index col) const { return find(row, col).value_or(0.0); }

  const std::vector<Entry>& row_entries(Index row) const { return rows_.at(row); }

  std::size_t nonzeros() const {
    std::size_t n = 0;
    for (const auto& r : rows_) n += r.size();
    return n;
  }

  bool operator==(const SparseAttributeMatrix&) const = default;

 private:
  std::size_t cols_ = 0;
  double scale_cap_ = 5.0;
  std::vector<std::vector<Entry>> rows_;
};

struct MentionStats {
  std::map<std::pair<Index, Index>, std::size_t> user_attr_counts;  // t_in
  std::map<std::pair<Index, Index>, std::size_t> item_attr_counts;  // t_jn
  std::map<std::pair<Index, Index>, double> item_attr_mean_sentiment;
};

struct AttributeMatrices {
  SparseAttributeMatrix user_attr;  // X
  SparseAttributeMatrix item_attr;  // Y
  MentionStats stats;
};

/// Repeated identical lexicon lines count as separate mentions.
inline AttributeMatrices build_matrices(const Corpus& corpus, double rating_max = 5.0) {
  AttributeMatrices out;
  auto& stats = out.stats;
  std::map<std::pair<Index, Index>, long> sentiment_sum;
  for (const auto& e : corpus.lexicon) {
    ++stats.user_attr_counts[{e.user, e.attribute}];
    ++stats.item_attr_counts[{e.item, e.attribute}];
    sentiment_sum[{e.item, e.attribute}] += e.sentiment;
  }

  out.user_attr = SparseAttributeMatrix(corpus.num_users(), corpus.num_attributes(), rating_max);
  for (const auto& [key, count] : stats.user_attr_counts) {
    out.user_attr.push(key.first, key.second,
                       user_attr_value(static_cast<double>(count), rating_max));
  }

  out.item_attr = SparseAttributeMatrix(corpus.num_items(), corpus.num_attributes(), rating_max);
  for (const auto& [key, count] : stats.item_attr_counts) {
    const double mean = static_cast<double>(sentiment_sum[key]) / static_cast<double>(count);
    stats.item_attr_mean_sentiment[key] = mean;
    out.item_attr.push(key.first, key.second,
                       item_attr_value(static_cast<double>(count), mean, rating_max));
  }
  return out;
}

/// "row<TAB>col<TAB>value" with 9 significant digits.
inline void write_matrix(std::ostream& out, const SparseAttributeMatrix& m) {
  char buf[64];
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (const auto& e : m.row_entries(static_cast<Index>(r))) {
      std::snprintf(buf, sizeof buf, "%.9g", e.value);
      out << r << '\t' << e.col << '\t' << buf << '\n';
    }
  }
}

}  // namespace a2cf
