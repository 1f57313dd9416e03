#pragma once

// Run configuration: flat "key = value" files with '#' comments. Every key is
// also a command-line flag of the same name (see cli.hpp).

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "a2cf/common.hpp"
#include "a2cf/metrics.hpp"
#include "a2cf/model.hpp"
#include "a2cf/trainer.hpp"

namespace a2cf {

struct RunConfig {
  std::filesystem::path reviews;
  std::filesystem::path lexicon;
  std::filesystem::path substitutes;
  std::filesystem::path out_dir = ".";
  TrainConfig train;
  DataOptions data;
  std::size_t max_rounds = 10;
  double convergence_tol = 1e-3;
  std::size_t eval_negatives = 1000;
  std::vector<std::size_t> cutoffs{5, 10, 20, 50};
  std::optional<std::uint64_t> seed;  // unset: A2CF_SEED, then 0

  std::uint64_t resolved_seed() const {
    if (seed) return *seed;
    if (const char* env = std::getenv("A2CF_SEED"); env && *env) {
      std::uint64_t v = 0;
      const std::string_view s(env);
      const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw Error("A2CF_SEED is not an unsigned integer: " + std::string(s));
      }
      return v;
    }
    return 0;
  }

  /// Copies of the sub-configs with the run seed filled in.
  TrainConfig train_config() const {
    TrainConfig c = train;
    c.seed = resolved_seed();
    return c;
  }
  DataOptions data_options() const {
    DataOptions d = data;
    d.seed = resolved_seed();
    return d;
  }
  TrainOptions train_options() const {
    TrainOptions t;
    t.config = train_config();
    t.max_rounds = max_rounds;
    t.convergence_tol = convergence_tol;
    return t;
  }
  EvalOptions eval_options() const {
    return {eval_negatives, cutoffs, derive_seed(resolved_seed(), kStreamEval)};
  }

  void validate() const {
    train.validate();
    if (data.filter.min_user_items == 0 || data.filter.min_item_users == 0 ||
        data.filter.min_attr_mentions == 0) {
      throw Error("filter thresholds must be positive");
    }
    if (max_rounds == 0) throw Error("max_rounds must be positive");
    if (!(convergence_tol >= 0.0)) throw Error("convergence_tol must be non-negative");
    if (eval_negatives == 0) throw Error("eval_negatives must be positive");
    if (cutoffs.empty()) throw Error("cutoffs must not be empty");
    for (std::size_t k : cutoffs) {
      if (k == 0) throw Error("cutoffs must be positive");
    }
  }
};

namespace detail {

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T v{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error("bad value for " + std::string(key) + ": '" + std::string(text) + "'");
  }
  return v;
}

inline bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw Error("bad value for " + std::string(key) + ": '" + std::string(text) + "'");
}

inline std::vector<std::string_view> split_commas(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = text.find(',', start);
    out.push_back(trim(text.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::string format_double(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

}  // namespace detail

struct ConfigKey {
  std::string name;
  std::string help;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

/// The complete key table, in the order written by write_run_config.
inline const std::vector<ConfigKey>& config_keys() {
  using detail::parse_bool;
  using detail::parse_number;
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    const auto path = [&](std::string name, std::string help, std::filesystem::path RunConfig::*field) {
      k.push_back({name, help, [field](RunConfig& c, std::string_view v) { c.*field = std::string(v); },
                   [field](const RunConfig& c) { return (c.*field).string(); }});
    };
    const auto size = [&](std::string name, std::string help, auto access) {
      k.push_back({name, help,
                   [name, access](RunConfig& c, std::string_view v) {
                     access(c) = parse_number<std::size_t>(name, v);
                   },
                   [access](const RunConfig& c) {
                     return std::to_string(access(const_cast<RunConfig&>(c)));
                   }});
    };
    const auto real = [&](std::string name, std::string help, auto access) {
      k.push_back({name, help,
                   [name, access](RunConfig& c, std::string_view v) {
                     access(c) = parse_number<double>(name, v);
                   },
                   [access](const RunConfig& c) {
                     return detail::format_double(access(const_cast<RunConfig&>(c)));
                   }});
    };
    const auto flag = [&](std::string name, std::string help, auto access) {
      k.push_back({name, help,
                   [name, access](RunConfig& c, std::string_view v) { access(c) = parse_bool(name, v); },
                   [access](const RunConfig& c) {
                     return std::string(access(const_cast<RunConfig&>(c)) ? "true" : "false");
                   }});
    };

    path("reviews", "reviews file (user, item, rating[, timestamp])", &RunConfig::reviews);
    path("lexicon", "sentiment lexicon file (user, item, attribute, +1/-1)", &RunConfig::lexicon);
    path("substitutes", "substitute pairs file", &RunConfig::substitutes);
    path("out_dir", "output directory", &RunConfig::out_dir);

    size("min_user_items", "k-core threshold on users", [](RunConfig& c) -> auto& { return c.data.filter.min_user_items; });
    size("min_item_users", "k-core threshold on items", [](RunConfig& c) -> auto& { return c.data.filter.min_item_users; });
    size("min_attribute_mentions", "minimum lexicon mentions per attribute",
         [](RunConfig& c) -> auto& { return c.data.filter.min_attr_mentions; });
    real("train_ratio", "share of triplets for training", [](RunConfig& c) -> auto& { return c.data.split_ratios[0]; });
    real("valid_ratio", "share of triplets for validation", [](RunConfig& c) -> auto& { return c.data.split_ratios[1]; });
    real("test_ratio", "share of triplets for testing", [](RunConfig& c) -> auto& { return c.data.split_ratios[2]; });

    size("dim", "embedding size d", [](RunConfig& c) -> auto& { return c.train.dim; });
    size("layers", "residual layers per tower", [](RunConfig& c) -> auto& { return c.train.layers; });
    real("gamma", "substitution weight in [0, 1]", [](RunConfig& c) -> auto& { return c.train.gamma; });
    real("beta", "substitution attention temperature", [](RunConfig& c) -> auto& { return c.train.beta; });
    real("epsilon", "personalization attention temperature", [](RunConfig& c) -> auto& { return c.train.epsilon; });
    real("rating_max", "rating scale maximum N", [](RunConfig& c) -> auto& { return c.train.rating_max; });
    real("learning_rate", "Adam step size", [](RunConfig& c) -> auto& { return c.train.learning_rate; });
    size("batch_size", "minibatch size", [](RunConfig& c) -> auto& { return c.train.batch_size; });
    real("dropout", "dropout rate in the towers", [](RunConfig& c) -> auto& { return c.train.dropout; });
    size("negatives", "negatives per training triplet", [](RunConfig& c) -> auto& { return c.train.negatives; });
    size("phase1_steps", "attribute-regression steps per round (T1)",
         [](RunConfig& c) -> auto& { return c.train.phase1_steps; });
    size("phase2_steps", "ranking steps per round (T2)", [](RunConfig& c) -> auto& { return c.train.phase2_steps; });
    size("max_rounds", "upper bound on training rounds", [](RunConfig& c) -> auto& { return c.max_rounds; });
    real("convergence_tol", "relative ranking-loss improvement that ends training",
         [](RunConfig& c) -> auto& { return c.convergence_tol; });
    flag("item_aggregation", "attribute half of the substitution score",
         [](RunConfig& c) -> auto& { return c.train.item_aggregation; });
    flag("user_aggregation", "attribute half of the personalization score",
         [](RunConfig& c) -> auto& { return c.train.user_aggregation; });
    size("explain_size", "attributes per interpretation (Z)", [](RunConfig& c) -> auto& { return c.train.explain_size; });
    size("eval_negatives", "negatives per evaluation case (J)", [](RunConfig& c) -> auto& { return c.eval_negatives; });

    k.push_back({"cutoffs", "comma-separated K list",
                 [](RunConfig& c, std::string_view v) {
                   c.cutoffs.clear();
                   for (auto part : detail::split_commas(v)) {
                     c.cutoffs.push_back(parse_number<std::size_t>("cutoffs", part));
                   }
                 },
                 [](const RunConfig& c) {
                   std::string out;
                   for (std::size_t k = 0; k < c.cutoffs.size(); ++k) {
                     out += (k ? "," : "") + std::to_string(c.cutoffs[k]);
                   }
                   return out;
                 }});
    k.push_back({"seed", "run seed (falls back to A2CF_SEED, then 0)",
                 [](RunConfig& c, std::string_view v) { c.seed = parse_number<std::uint64_t>("seed", v); },
                 [](const RunConfig& c) { return std::to_string(c.resolved_seed()); }});
    return k;
  }();
  return keys;
}

inline const ConfigKey* find_config_key(std::string_view name) {
  for (const auto& k : config_keys()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

inline void set_config_value(RunConfig& config, std::string_view key, std::string_view value) {
  const ConfigKey* k = find_config_key(key);
  if (!k) throw Error("unknown config key: " + std::string(key));
  k->set(config, value);
}

/// Applies "key = value" lines from `in` on top of `config`.
inline void parse_run_config(std::istream& in, const std::string& source, RunConfig& config) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view view = line;
    if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) throw ParseError(source, lineno, "expected key = value");
    const auto key = trim(view.substr(0, eq));
    const auto value = trim(view.substr(eq + 1));
    try {
      set_config_value(config, key, value);
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(source, lineno, e.what());
    }
  }
}

inline void load_run_config(const std::filesystem::path& path, RunConfig& config) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  parse_run_config(in, path.string(), config);
  const auto base = path.parent_path();
  for (auto* p : {&config.reviews, &config.lexicon, &config.substitutes}) {
    if (!p->empty() && p->is_relative()) *p = base / *p;
  }
}

inline void write_run_config(std::ostream& out, const RunConfig& config) {
  for (const auto& k : config_keys()) out << k.name << " = " << k.get(config) << '\n';
}

}  // namespace a2cf
