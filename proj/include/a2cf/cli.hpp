#pragma once

// Command-line front end: prepare | train | recommend | explain | evaluate | synth.
// Outputs go to --out-dir under fixed names.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "a2cf/attributes.hpp"
#include "a2cf/checkpoint.hpp"
#include "a2cf/config.hpp"
#include "a2cf/data.hpp"
#include "a2cf/interpretation.hpp"
#include "a2cf/metrics.hpp"
#include "a2cf/ranking.hpp"
#include "a2cf/synthetic.hpp"
#include "a2cf/trainer.hpp"

namespace a2cf {

inline constexpr const char* kManifestFile = "corpus.manifest";
inline constexpr const char* kCheckpointFile = "model.ckpt";
inline constexpr const char* kMetricsFile = "metrics.txt";
inline constexpr const char* kRecsFile = "recs.tsv";
inline constexpr const char* kExplanationsFile = "explanations.txt";
inline constexpr const char* kTrainLogFile = "train.log";
inline constexpr const char* kTripletsFile = "triplets.tsv";
inline constexpr const char* kSynthConfigFile = "a2cf.conf";

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

inline PreparedData load_prepared(const RunConfig& config) {
  for (const auto* p : {&config.reviews, &config.lexicon, &config.substitutes}) {
    if (p->empty()) throw Error("reviews, lexicon and substitutes paths are required");
  }
  const auto reviews = load_reviews(config.reviews, static_cast<int>(config.train.rating_max));
  const auto lexicon = load_lexicon(config.lexicon);
  const auto substitutes = load_substitutes(config.substitutes);
  return prepare_data(reviews, lexicon, substitutes, config.data_options());
}

inline void write_prepared(const RunConfig& config, const PreparedData& data) {
  auto manifest = open_output(config.out_dir / kManifestFile);
  write_manifest(manifest, data.corpus);
  manifest << "train_triplets=" << data.split.train.size() << '\n'
           << "valid_triplets=" << data.split.valid.size() << '\n'
           << "test_triplets=" << data.split.test.size() << '\n'
           << "discarded_test_triplets=" << data.split.discarded_test << '\n'
           << "skipped_interactions=" << data.skipped_interactions << '\n'
           << "seed=" << config.resolved_seed() << '\n';
}

struct LoadedModel {
  PreparedData data;
  Checkpoint checkpoint;
  EstimatedMatrices estimated;
  ScoringOptions scoring;
};

inline LoadedModel load_model(const RunConfig& config, std::filesystem::path checkpoint) {
  if (checkpoint.empty()) checkpoint = config.out_dir / kCheckpointFile;
  LoadedModel m{load_prepared(config), load_checkpoint(checkpoint), {}, {}};
  check_dims(m.checkpoint.params, m.data.corpus);
  m.estimated = estimate_matrices(m.data.matrices.user_attr, m.data.matrices.item_attr,
                                  m.checkpoint.params, m.checkpoint.config.rating_max);
  m.scoring = ScoringOptions::from(m.checkpoint.config);
  return m;
}

inline Index lookup(const std::optional<Index>& idx, const char* what, const std::string& id) {
  if (!idx) throw Error(std::string("unknown ") + what + " '" + id + "' (not in the filtered corpus)");
  return *idx;
}

inline RankedList recommend_for(const LoadedModel& m, Index user, Index query, std::size_t k) {
  std::vector<Index> candidates;
  candidates.reserve(m.data.corpus.num_items());
  for (std::size_t j = 0; j < m.data.corpus.num_items(); ++j) {
    if (j != query) candidates.push_back(static_cast<Index>(j));
  }
  return recommend_top_k(user, query, candidates, k, m.checkpoint.params, m.estimated, m.scoring);
}

// ---------------------------------------------------------------------------
// Subcommands

inline void run_prepare(const RunConfig& config) {
  const auto data = load_prepared(config);
  write_prepared(config, data);
  auto out = open_output(config.out_dir / kTripletsFile);
  write_triplets(out, data.corpus, data.split);
  log_info("prepared " + std::to_string(data.corpus.num_users()) + " users, " +
           std::to_string(data.corpus.num_items()) + " items, " +
           std::to_string(data.corpus.num_attributes()) + " attributes");
}

inline void run_train(const RunConfig& config) {
  const auto data = load_prepared(config);
  write_prepared(config, data);
  auto log = open_output(config.out_dir / kTrainLogFile);
  log << "# a2cf train\n";
  for (const auto& k : config_keys()) log << "# " << k.name << " = " << k.get(config) << '\n';

  TrainOptions opt = config.train_options();
  opt.log = &log;
  opt.diagnostic_checkpoint = config.out_dir / "diagnostic.ckpt";
  const auto start = std::chrono::steady_clock::now();
  opt.on_round = [&](std::size_t round, const ModelParams&, const EstimatedMatrices&) {
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    char buf[96];
    std::snprintf(buf, sizeof buf, "round %zu done after %.1fs", round, secs);
    log_info(buf);
  };
  const auto result = train_pipeline(data, opt);
  log << "# rounds=" << result.rounds << " phase1_steps=" << result.phase1_steps
      << " phase2_steps=" << result.phase2_steps << " converged=" << (result.converged ? 1 : 0)
      << '\n';
  save_checkpoint(config.out_dir / kCheckpointFile, result.params, opt.config);
}

inline void run_evaluate(const RunConfig& config, const std::filesystem::path& checkpoint,
                         const std::string& split) {
  const auto m = load_model(config, checkpoint);
  const auto& triplets = split == "valid" ? m.data.split.valid : m.data.split.test;
  if (triplets.empty()) throw Error("no " + split + " triplets to evaluate");
  const auto report =
      evaluate_protocol(triplets, m.data.corpus, m.checkpoint.params, m.estimated, m.scoring,
                        config.eval_options());
  auto out = open_output(config.out_dir / kMetricsFile);
  write_metrics(out, report);
}

inline void run_recommend(const RunConfig& config, const std::filesystem::path& checkpoint,
                          const std::string& user_id, const std::string& query_id, std::size_t k) {
  const auto m = load_model(config, checkpoint);
  const Index user = lookup(m.data.corpus.find_user(user_id), "user", user_id);
  const Index query = lookup(m.data.corpus.find_item(query_id), "item", query_id);
  const auto list = recommend_for(m, user, query, k);
  auto out = open_output(config.out_dir / kRecsFile);
  char score[32];
  for (std::size_t r = 0; r < list.items.size(); ++r) {
    std::snprintf(score, sizeof score, "%.6f", list.items[r].score);
    out << user_id << '\t' << query_id << '\t' << r + 1 << '\t'
        << m.data.corpus.items[list.items[r].item] << '\t' << score << '\n';
  }
}

inline void run_explain(const RunConfig& config, const std::filesystem::path& checkpoint,
                        const std::string& user_id, const std::string& query_id, std::size_t k,
                        std::size_t z) {
  const auto m = load_model(config, checkpoint);
  const auto& corpus = m.data.corpus;
  const Index user = lookup(corpus.find_user(user_id), "user", user_id);
  const Index query = lookup(corpus.find_item(query_id), "item", query_id);
  const auto list = recommend_for(m, user, query, k);
  auto out = open_output(config.out_dir / kExplanationsFile);
  for (const auto& rec : list.items) {
    auto adv = attribute_advantage(m.estimated.user_attr.row(user), m.estimated.item_attr.row(query),
                                   m.estimated.item_attr.row(rec.item));
    adv.user = user;
    adv.query = query;
    adv.item = rec.item;
    const auto report =
        render_interpretation(adv, z, corpus.attributes, corpus.items[query], corpus.items[rec.item]);
    out << user_id << '\t' << query_id << '\t' << corpus.items[rec.item] << '\t' << report.text
        << '\n';
  }
}

inline void run_synth(const std::filesystem::path& out_dir, const SyntheticSpec& spec,
                      std::uint64_t seed) {
  const auto data = generate_synthetic(spec, seed);
  write_synthetic(out_dir, data);
  auto conf = open_output(out_dir / kSynthConfigFile);
  conf << "# synthetic corpus, seed " << seed << "\n"
       << "reviews = reviews.tsv\n"
       << "lexicon = lexicon.tsv\n"
       << "substitutes = substitutes.tsv\n"
       << "rating_max = " << spec.max_rating << '\n';
  log_info("wrote " + std::to_string(data.reviews.size()) + " reviews and " +
           std::to_string(data.lexicon.size()) + " lexicon entries to " + out_dir.string());
}

inline std::string flag_names(const std::string& key) {
  std::string hyphen = key;
  std::replace(hyphen.begin(), hyphen.end(), '_', '-');
  return hyphen == key ? "--" + key : "--" + hyphen + ",--" + key;
}

}  // namespace detail

/// Runs one subcommand. Returns 0 on success, 1 on runtime failure and 2 on
/// usage errors.
inline int cli_dispatch(int argc, const char* const* argv, std::ostream& out = std::cout,
                        std::ostream& err = std::cerr) {
  CLI::App app{"Attribute-aware collaborative filtering for personalized substitute recommendation",
               "a2cf"};
  app.require_subcommand(1);

  std::filesystem::path config_path;
  std::map<std::string, std::string> overrides;
  const auto add_config_flags = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key = value configuration file");
    for (const auto& k : config_keys()) {
      sub->add_option(detail::flag_names(k.name), overrides[k.name], k.help);
    }
  };

  auto* prepare = app.add_subcommand("prepare", "filter the corpus and build triplets");
  add_config_flags(prepare);
  auto* train = app.add_subcommand("train", "run two-phase training and write a checkpoint");
  add_config_flags(train);

  std::filesystem::path checkpoint;
  std::string split = "test";
  auto* evaluate = app.add_subcommand("evaluate", "score held-out triplets and write metrics");
  add_config_flags(evaluate);
  evaluate->add_option("--checkpoint", checkpoint, "model checkpoint (default: out_dir/model.ckpt)");
  evaluate->add_option("--split", split, "held-out split")->check(CLI::IsMember({"valid", "test"}));

  std::string user_id, query_id;
  std::size_t top_k = 10;
  std::size_t z = 0;
  auto* recommend = app.add_subcommand("recommend", "top-K substitutes for one user and query");
  add_config_flags(recommend);
  recommend->add_option("--checkpoint", checkpoint, "model checkpoint (default: out_dir/model.ckpt)");
  recommend->add_option("--user", user_id, "user id")->required();
  recommend->add_option("--query", query_id, "query item id")->required();
  recommend->add_option("--top-k", top_k, "list length")->check(CLI::PositiveNumber);

  auto* explain = app.add_subcommand("explain", "interpretations for the top-K substitutes");
  add_config_flags(explain);
  explain->add_option("--checkpoint", checkpoint, "model checkpoint (default: out_dir/model.ckpt)");
  explain->add_option("--user", user_id, "user id")->required();
  explain->add_option("--query", query_id, "query item id")->required();
  explain->add_option("--top-k", top_k, "list length")->check(CLI::PositiveNumber);
  explain->add_option("--z", z, "attributes per sentence (default: explain_size)")
      ->check(CLI::PositiveNumber);

  SyntheticSpec spec;
  std::filesystem::path synth_dir = ".";
  std::string synth_seed;
  auto* synth = app.add_subcommand("synth", "write a planted-structure corpus");
  synth->add_option("--out-dir,--out_dir", synth_dir, "output directory");
  synth->add_option("--seed", synth_seed, "generator seed (falls back to A2CF_SEED, then 0)");
  synth->add_option("--users", spec.users, "user count");
  synth->add_option("--items", spec.items, "item count");
  synth->add_option("--attributes", spec.attributes, "attribute count");
  synth->add_option("--clusters", spec.clusters, "substitute clusters");
  synth->add_option("--noise", spec.noise, "sentiment flip and off-profile mention rate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto* failed = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << failed->help();
    return 2;
  }

  try {
    if (synth->parsed()) {
      RunConfig seed_only;
      if (!synth_seed.empty()) set_config_value(seed_only, "seed", synth_seed);
      detail::run_synth(synth_dir, spec, seed_only.resolved_seed());
      return 0;
    }

    RunConfig config;
    if (!config_path.empty()) load_run_config(config_path, config);
    CLI::App* active = app.get_subcommands().front();
    for (const auto& k : config_keys()) {
      const std::string names = detail::flag_names(k.name);
      if (active->get_option(names.substr(0, names.find(',')))->count() > 0) set_config_value(config, k.name, overrides[k.name]);
    }
    if (z > 0) config.train.explain_size = z;
    config.validate();

    if (prepare->parsed()) detail::run_prepare(config);
    if (train->parsed()) detail::run_train(config);
    if (evaluate->parsed()) detail::run_evaluate(config, checkpoint, split);
    if (recommend->parsed()) detail::run_recommend(config, checkpoint, user_id, query_id, top_k);
    if (explain->parsed()) {
      detail::run_explain(config, checkpoint, user_id, query_id, top_k,
                          z > 0 ? z : config.train.explain_size);
    }
    return 0;
  } catch (const std::exception& e) {
    err << "a2cf: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace a2cf
