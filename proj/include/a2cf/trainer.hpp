#pragma once

// Alternating two-phase training:
//   repeat { T1 steps on L_UA + L_IA;  estimate X̃, Ỹ;  T2 steps on L_BPR-S }
// until the round-mean ranking loss stops improving by more than
// convergence_tol (relative) or max_rounds is reached. All parameters are
// shared by both phases; each phase keeps its own Adam moments.

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <ostream>
#include <vector>

#include "a2cf/attributes.hpp"
#include "a2cf/checkpoint.hpp"
#include "a2cf/data.hpp"
#include "a2cf/model.hpp"
#include "a2cf/ranking.hpp"

namespace a2cf {

struct DataOptions {
  FilterOptions filter;
  double rating_max = 5.0;
  std::array<double, 3> split_ratios{0.8, 0.1, 0.1};
  std::uint64_t seed = 0;
};

/// Everything derived deterministically from the raw inputs and a seed.
struct PreparedData {
  Corpus corpus;
  AttributeMatrices matrices;
  TripletSplit split;
  std::size_t skipped_interactions = 0;
};

// Seed streams derived from the run seed.
enum SeedStream : std::uint64_t {
  kStreamTriplets = 1,
  kStreamSplit = 2,
  kStreamInit = 3,
  kStreamPhase1 = 4,
  kStreamPhase2 = 5,
  kStreamEval = 6,
};

inline PreparedData prepare_data(const std::vector<ReviewRecord>& reviews,
                                 const std::vector<LexiconEntry>& lexicon,
                                 const std::vector<SubstitutePair>& substitutes,
                                 const DataOptions& opt) {
  PreparedData out;
  out.corpus = filter_corpus(reviews, lexicon, substitutes, opt.filter);
  out.matrices = build_matrices(out.corpus, opt.rating_max);
  auto built = build_triplets(out.corpus, derive_seed(opt.seed, kStreamTriplets));
  out.skipped_interactions = built.skipped;
  out.split = split_triplets(built.triplets, opt.split_ratios, derive_seed(opt.seed, kStreamSplit));
  if (out.split.train.empty()) throw Error("no training triplets after splitting");
  return out;
}

struct TrainOptions {
  TrainConfig config;
  std::size_t max_rounds = 10;
  double convergence_tol = 1e-3;
  std::ostream* log = nullptr;                      // per-step loss lines
  std::filesystem::path diagnostic_checkpoint;      // written before aborting on NaN
  /// Called after every round with the parameters and the X̃, Ỹ of that round.
  std::function<void(std::size_t, const ModelParams&, const EstimatedMatrices&)> on_round;
};

struct TrainResult {
  ModelParams params;
  EstimatedMatrices estimated;  // X̃, Ỹ used by the final ranking phase
  std::size_t rounds = 0;
  std::size_t phase1_steps = 0;
  std::size_t phase2_steps = 0;
  bool converged = false;
  std::vector<double> phase1_losses;  // mean squared error per entry, per step
  std::vector<double> phase2_losses;  // mean -log σ per term, per step
  std::vector<double> round_losses;   // mean phase-2 loss per round
};

/// Cycles through a shuffled permutation of [0, n), reshuffling each epoch
/// with a seed derived from the epoch number.
class EpochSampler {
 public:
  EpochSampler(std::size_t n, std::uint64_t seed) : n_(n), seed_(seed) { reshuffle(); }

  std::size_t next() {
    if (pos_ == order_.size()) {
      ++epoch_;
      reshuffle();
    }
    return order_[pos_++];
  }

 private:
  void reshuffle() {
    order_.resize(n_);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    Rng rng(derive_seed(seed_, epoch_));
    rng.shuffle(order_);
    pos_ = 0;
  }

  std::size_t n_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
  std::size_t pos_ = 0;
  std::vector<std::size_t> order_;
};

namespace detail {

inline std::vector<ObservedEntry> observed_entries(const SparseAttributeMatrix& m) {
  std::vector<ObservedEntry> out;
  out.reserve(m.nonzeros());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (const auto& e : m.row_entries(static_cast<Index>(r))) {
      out.push_back({static_cast<Index>(r), e.col, e.value});
    }
  }
  return out;
}

[[noreturn]] inline void abort_training(const TrainOptions& opt, const ModelParams& params,
                                        const std::string& what) {
  if (!opt.diagnostic_checkpoint.empty()) {
    save_checkpoint(opt.diagnostic_checkpoint, params, opt.config);
  }
  throw Error("training aborted: " + what);
}

}  // namespace detail

inline TrainResult train_pipeline(const PreparedData& data, const TrainOptions& opt) {
  const TrainConfig& cfg = opt.config;
  cfg.validate();
  if (opt.max_rounds == 0) throw Error("max_rounds must be positive");
  const Corpus& corpus = data.corpus;
  const ModelDims dims{corpus.num_users(), corpus.num_items(), corpus.num_attributes(), cfg.dim,
                       cfg.layers, cfg.item_aggregation, cfg.user_aggregation};

  TrainResult result;
  result.params = init_params(dims, derive_seed(cfg.seed, kStreamInit));
  ModelParams& params = result.params;
  const ScoringOptions scoring = ScoringOptions::from(cfg);
  const AdamOptions adam{cfg.learning_rate};
  AdamState adam_attr = AdamState::for_dims(dims);
  AdamState adam_rank = AdamState::for_dims(dims);

  const auto user_entries = detail::observed_entries(data.matrices.user_attr);
  const auto item_entries = detail::observed_entries(data.matrices.item_attr);
  if (user_entries.empty() || item_entries.empty()) throw Error("attribute matrices have no entries");
  const auto& train = data.split.train;

  const std::uint64_t phase1_seed = derive_seed(cfg.seed, kStreamPhase1);
  const std::uint64_t phase2_seed = derive_seed(cfg.seed, kStreamPhase2);
  EpochSampler user_sampler(user_entries.size(), derive_seed(phase1_seed, 0));
  EpochSampler item_sampler(item_entries.size(), derive_seed(phase1_seed, 1));
  EpochSampler triplet_sampler(train.size(), derive_seed(phase2_seed, 0));

  GradientBuffer grads = make_gradient_buffer(dims);
  char line[160];

  for (std::size_t round = 0; round < opt.max_rounds; ++round) {
    // attribute regression
    for (std::size_t step = 0; step < cfg.phase1_steps; ++step) {
      Rng rng(derive_seed(phase1_seed, 2, result.phase1_steps));
      Phase1Batch batch;
      for (std::size_t k = 0; k < cfg.batch_size; ++k) {
        batch.user_entries.push_back(user_entries[user_sampler.next()]);
        batch.item_entries.push_back(item_entries[item_sampler.next()]);
      }
      grads.fill(0.0);
      const double loss = phase1_loss(batch, params, cfg.rating_max, &grads, cfg.dropout, &rng);
      if (!std::isfinite(loss)) detail::abort_training(opt, params, "non-finite attribute loss");
      adam_step(params, grads, adam_attr, adam);
      const double mean = loss / static_cast<double>(2 * cfg.batch_size);
      result.phase1_losses.push_back(mean);
      ++result.phase1_steps;
      if (opt.log) {
        std::snprintf(line, sizeof line, "round %zu phase1 step %zu loss %.6f\n", round, step, mean);
        *opt.log << line;
      }
    }

    // frozen for the whole ranking phase
    result.estimated = estimate_matrices(data.matrices.user_attr, data.matrices.item_attr, params,
                                         cfg.rating_max);

    double round_sum = 0.0;
    for (std::size_t step = 0; step < cfg.phase2_steps; ++step) {
      Rng rng(derive_seed(phase2_seed, 1, result.phase2_steps));
      std::vector<TrainTriplet> batch;
      batch.reserve(cfg.batch_size);
      for (std::size_t k = 0; k < cfg.batch_size; ++k) {
        const Triplet& t = train[triplet_sampler.next()];
        batch.push_back({t.user, t.query, t.positive,
                         sample_negatives(t.user, t.query, t.positive, corpus, cfg.negatives, rng)});
      }
      grads.fill(0.0);
      const double loss = bpr_s_loss(batch, params, result.estimated, scoring, &grads);
      if (!std::isfinite(loss)) detail::abort_training(opt, params, "non-finite ranking loss");
      adam_step(params, grads, adam_rank, adam);
      const double mean = loss / static_cast<double>(cfg.batch_size * cfg.negatives);
      result.phase2_losses.push_back(mean);
      round_sum += mean;
      ++result.phase2_steps;
      if (opt.log) {
        std::snprintf(line, sizeof line, "round %zu phase2 step %zu loss %.6f\n", round, step, mean);
        *opt.log << line;
      }
    }
    ++result.rounds;
    if (opt.on_round) opt.on_round(round, params, result.estimated);
    if (cfg.phase2_steps == 0) continue;
    const double round_loss = round_sum / static_cast<double>(cfg.phase2_steps);
    result.round_losses.push_back(round_loss);
    if (result.round_losses.size() >= 2) {
      const double prev = result.round_losses[result.round_losses.size() - 2];
      if (prev > 0.0 && (prev - round_loss) / prev < opt.convergence_tol) {
        result.converged = true;
        break;
      }
    }
  }
  if (cfg.phase2_steps == 0) {
    result.estimated = estimate_matrices(data.matrices.user_attr, data.matrices.item_attr, params,
                                         cfg.rating_max);
  }
  return result;
}

}  // namespace a2cf
