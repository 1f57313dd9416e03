#pragma once

// Parameters and the attribute regression towers.
//
// Both towers are residual feed-forward stacks of constant width 2d fed with
// [entity embedding; attribute embedding]. The attribute table is shared by
// the user-attribute and item-attribute towers. Heads map the final hidden
// state through a tanh rescaled onto (1, N).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "a2cf/common.hpp"

namespace a2cf {

struct ModelDims {
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t attributes = 0;
  std::size_t dim = 64;
  std::size_t layers = 1;
  bool item_aggregation = true;  // score_s carries an attribute half
  bool user_aggregation = true;  // score_p carries an attribute half

  std::size_t hidden() const { return 2 * dim; }
  bool operator==(const ModelDims&) const = default;
};

/// Hyperparameters of one training run.
struct TrainConfig {
  std::size_t dim = 64;
  std::size_t layers = 1;
  double gamma = 0.7;    // weight of the substitution score
  double beta = 8.0;     // substitution attention temperature
  double epsilon = 8.0;  // personalization attention temperature
  double rating_max = 5.0;
  double learning_rate = 1e-3;
  std::size_t batch_size = 256;
  double dropout = 0.4;
  std::size_t negatives = 5;
  std::size_t phase1_steps = 2000;
  std::size_t phase2_steps = 2000;
  std::size_t explain_size = 3;  // attributes per interpretation
  bool item_aggregation = true;  // attribute half of the substitution score
  bool user_aggregation = true;  // attribute half of the personalization score
  std::uint64_t seed = 0;

  void validate() const {
    if (dim == 0 || layers == 0) throw Error("dim and layers must be positive");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw Error("gamma must lie in [0, 1]");
    if (!(beta > 0.0) || !(epsilon > 0.0)) throw Error("beta and epsilon must be positive");
    if (!(rating_max > 1.0)) throw Error("rating_max must exceed 1");
    if (!(learning_rate > 0.0)) throw Error("learning_rate must be positive");
    if (batch_size == 0 || negatives == 0) throw Error("batch_size and negatives must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw Error("dropout must lie in [0, 1)");
    if (explain_size == 0) throw Error("explain_size must be positive");
  }

  bool operator==(const TrainConfig&) const = default;
};

struct DenseLayer {
  Matrix weight;             // hidden x hidden
  std::vector<double> bias;  // hidden

  bool operator==(const DenseLayer&) const = default;
};

struct NamedTensor {
  std::string name;
  std::span<double> values;
};

struct ConstNamedTensor {
  std::string name;
  std::span<const double> values;
};

struct ModelParams {
  ModelDims dims;
  Matrix user_emb;  // users x d
  Matrix item_emb;  // items x d
  Matrix attr_emb;  // attributes x d, shared by both towers
  std::vector<DenseLayer> tower_ua;
  std::vector<DenseLayer> tower_ia;
  std::vector<double> head_x;   // 2d
  std::vector<double> head_y;   // 2d
  std::vector<double> score_s;  // 2d: [latent half; attribute half], d when ablated
  std::vector<double> score_p;  // likewise

  static ModelParams zeros(const ModelDims& dims) {
    if (dims.users == 0 || dims.items == 0 || dims.attributes == 0) {
      throw Error("model needs at least one user, item and attribute");
    }
    if (dims.dim == 0 || dims.layers == 0) throw Error("dim and layers must be positive");
    ModelParams p;
    p.dims = dims;
    const std::size_t d = dims.dim, h = dims.hidden();
    p.user_emb = Matrix(dims.users, d);
    p.item_emb = Matrix(dims.items, d);
    p.attr_emb = Matrix(dims.attributes, d);
    for (auto* tower : {&p.tower_ua, &p.tower_ia}) {
      tower->assign(dims.layers, DenseLayer{Matrix(h, h), std::vector<double>(h, 0.0)});
    }
    p.head_x.assign(h, 0.0);
    p.head_y.assign(h, 0.0);
    p.score_s.assign((dims.item_aggregation ? 2 : 1) * d, 0.0);
    p.score_p.assign((dims.user_aggregation ? 2 : 1) * d, 0.0);
    return p;
  }

  /// Every tensor in a fixed order. Gradient buffers and optimizer moments
  /// share this layout.
  std::vector<NamedTensor> tensors() {
    std::vector<NamedTensor> out{{"user_emb", user_emb.data},
                                 {"item_emb", item_emb.data},
                                 {"attr_emb", attr_emb.data}};
    for (std::size_t l = 0; l < tower_ua.size(); ++l) {
      out.push_back({"tower_ua." + std::to_string(l) + ".weight", tower_ua[l].weight.data});
      out.push_back({"tower_ua." + std::to_string(l) + ".bias", tower_ua[l].bias});
    }
    for (std::size_t l = 0; l < tower_ia.size(); ++l) {
      out.push_back({"tower_ia." + std::to_string(l) + ".weight", tower_ia[l].weight.data});
      out.push_back({"tower_ia." + std::to_string(l) + ".bias", tower_ia[l].bias});
    }
    out.push_back({"head_x", head_x});
    out.push_back({"head_y", head_y});
    out.push_back({"score_s", score_s});
    out.push_back({"score_p", score_p});
    return out;
  }

  std::vector<ConstNamedTensor> tensors() const {
    std::vector<ConstNamedTensor> out;
    for (auto& t : const_cast<ModelParams*>(this)->tensors()) out.push_back({t.name, t.values});
    return out;
  }

  void fill(double value) {
    for (auto& t : tensors()) std::fill(t.values.begin(), t.values.end(), value);
  }

  bool operator==(const ModelParams&) const = default;
};

/// Same layout as ModelParams; holds d(loss)/d(param).
using GradientBuffer = ModelParams;

inline GradientBuffer make_gradient_buffer(const ModelDims& dims) { return ModelParams::zeros(dims); }

/// Uniform [-0.05, 0.05] weights and embeddings, zero biases.
inline ModelParams init_params(const ModelDims& dims, std::uint64_t seed) {
  ModelParams p = ModelParams::zeros(dims);
  Rng rng(seed);
  for (auto& t : p.tensors()) {
    if (t.name.ends_with(".bias")) continue;
    for (double& v : t.values) v = rng.uniform(-0.05, 0.05);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Activations

/// (N e^{2r} + 1) / (e^{2r} + 1), evaluated without overflow. Range (1, N).
inline double tanh_rescaled(double r, double rating_max) {
  if (r > 0) {
    const double e = std::exp(-2.0 * r);
    return (rating_max + e) / (1.0 + e);
  }
  const double e = std::exp(2.0 * r);
  return (rating_max * e + 1.0) / (e + 1.0);
}

inline double tanh_rescaled_derivative(double r, double rating_max) {
  const double t = std::tanh(r);
  return 0.5 * (rating_max - 1.0) * (1.0 - t * t);
}

/// Inverted dropout: each coordinate is 0 with probability `rate`, else
/// 1 / (1 - rate).
inline std::vector<double> dropout_mask(std::size_t size, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout rate must lie in [0, 1)");
  std::vector<double> mask(size, 1.0);
  if (rate == 0.0) return mask;
  const double keep = 1.0 / (1.0 - rate);
  for (double& m : mask) m = rng.uniform() < rate ? 0.0 : keep;
  return mask;
}

// ---------------------------------------------------------------------------
// Residual tower

/// Activations kept from a forward pass. hidden[0] is the input, hidden[l]
/// the output; pre[l] holds W h + b of layer l; mask is empty at inference.
struct TowerCache {
  std::vector<std::vector<double>> hidden;
  std::vector<std::vector<double>> pre;
  std::vector<std::vector<double>> mask;

  const std::vector<double>& output() const { return hidden.back(); }
};

/// h_k = h_{k-1} + mask_k * ReLU(W_k h_{k-1} + b_k). Dropout acts on the
/// ReLU branch only; the skip path is never dropped.
inline TowerCache residual_forward(std::span<const double> h0, const std::vector<DenseLayer>& tower,
                                   double dropout_rate = 0.0, Rng* rng = nullptr) {
  const std::size_t width = h0.size();
  TowerCache cache;
  cache.hidden.reserve(tower.size() + 1);
  cache.hidden.emplace_back(h0.begin(), h0.end());
  for (std::size_t l = 0; l < tower.size(); ++l) {
    const auto& layer = tower[l];
    if (layer.weight.rows != width || layer.weight.cols != width || layer.bias.size() != width) {
      throw std::invalid_argument("tower layer shape does not match input width");
    }
    const auto& prev = cache.hidden.back();
    std::vector<double> z(layer.bias);
    for (std::size_t r = 0; r < width; ++r) z[r] += dot(layer.weight.row(r), prev);
    std::vector<double> next(prev);
    if (rng != nullptr && dropout_rate > 0.0) {
      cache.mask.push_back(dropout_mask(width, dropout_rate, *rng));
      const auto& m = cache.mask.back();
      for (std::size_t r = 0; r < width; ++r) next[r] += m[r] * std::max(z[r], 0.0);
    } else {
      for (std::size_t r = 0; r < width; ++r) next[r] += std::max(z[r], 0.0);
    }
    if (!all_finite(next)) {
      throw Error("non-finite activation in residual layer " + std::to_string(l));
    }
    cache.pre.push_back(std::move(z));
    cache.hidden.push_back(std::move(next));
  }
  return cache;
}

/// Accumulates weight/bias gradients into `grads` and returns d(loss)/d(h0).
inline std::vector<double> residual_backward(const TowerCache& cache,
                                             const std::vector<DenseLayer>& tower,
                                             std::span<const double> grad_out,
                                             std::vector<DenseLayer>& grads) {
  if (cache.hidden.size() != tower.size() + 1 || cache.pre.size() != tower.size()) {
    throw Error("residual_backward: missing or mismatched forward cache");
  }
  const bool dropped = !cache.mask.empty();
  const std::size_t width = grad_out.size();
  std::vector<double> g(grad_out.begin(), grad_out.end());
  std::vector<double> gz(width);
  for (std::size_t l = tower.size(); l-- > 0;) {
    const auto& z = cache.pre[l];
    const auto& input = cache.hidden[l];
    for (std::size_t r = 0; r < width; ++r) {
      const double active = z[r] > 0.0 ? 1.0 : 0.0;
      gz[r] = g[r] * active * (dropped ? cache.mask[l][r] : 1.0);
    }
    auto& gl = grads[l];
    for (std::size_t r = 0; r < width; ++r) {
      if (gz[r] == 0.0) continue;
      gl.bias[r] += gz[r];
      auto wrow = gl.weight.row(r);
      for (std::size_t c = 0; c < width; ++c) wrow[c] += gz[r] * input[c];
    }
    // skip path passes g through unchanged
    for (std::size_t r = 0; r < width; ++r) {
      if (gz[r] == 0.0) continue;
      const auto wrow = tower[l].weight.row(r);
      for (std::size_t c = 0; c < width; ++c) g[c] += gz[r] * wrow[c];
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Attribute heads

enum class AttributeTower { User, Item };

/// One forward pass of an attribute regressor, kept for backward.
struct AttributeForward {
  AttributeTower tower;
  Index row;
  Index attribute;
  double logit;
  double value;
  TowerCache cache;
};

inline AttributeForward attribute_forward(AttributeTower which, Index row, Index attribute,
                                          const ModelParams& p, double rating_max,
                                          double dropout_rate = 0.0, Rng* rng = nullptr) {
  const bool user = which == AttributeTower::User;
  const Matrix& table = user ? p.user_emb : p.item_emb;
  if (row >= table.rows || attribute >= p.attr_emb.rows) {
    throw std::out_of_range("attribute prediction index out of range");
  }
  const std::size_t d = p.dims.dim;
  std::vector<double> h0(2 * d);
  std::copy_n(table.row(row).begin(), d, h0.begin());
  std::copy_n(p.attr_emb.row(attribute).begin(), d, h0.begin() + static_cast<std::ptrdiff_t>(d));
  AttributeForward f{which, row, attribute, 0.0, 0.0,
                     residual_forward(h0, user ? p.tower_ua : p.tower_ia, dropout_rate, rng)};
  f.logit = dot(user ? p.head_x : p.head_y, f.cache.output());
  f.value = tanh_rescaled(f.logit, rating_max);
  return f;
}

/// Estimated user attention to an attribute, in (1, N).
inline double predict_user_attribute(Index user, Index attribute, const ModelParams& p,
                                     double rating_max) {
  return attribute_forward(AttributeTower::User, user, attribute, p, rating_max).value;
}

/// Estimated item quality on an attribute, in (1, N).
inline double predict_item_attribute(Index item, Index attribute, const ModelParams& p,
                                     double rating_max) {
  return attribute_forward(AttributeTower::Item, item, attribute, p, rating_max).value;
}

/// Back-propagates d(loss)/d(value) through head, tower and both embeddings.
inline void attribute_backward(const AttributeForward& f, double grad_value, const ModelParams& p,
                               double rating_max, GradientBuffer& g) {
  const bool user = f.tower == AttributeTower::User;
  const double grad_logit = grad_value * tanh_rescaled_derivative(f.logit, rating_max);
  const auto& head = user ? p.head_x : p.head_y;
  auto& head_grad = user ? g.head_x : g.head_y;
  const auto& out = f.cache.output();
  std::vector<double> grad_h(out.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    head_grad[k] += grad_logit * out[k];
    grad_h[k] = grad_logit * head[k];
  }
  const auto grad_h0 =
      residual_backward(f.cache, user ? p.tower_ua : p.tower_ia, grad_h, user ? g.tower_ua : g.tower_ia);
  const std::size_t d = p.dims.dim;
  auto entity = (user ? g.user_emb : g.item_emb).row(f.row);
  auto attr = g.attr_emb.row(f.attribute);
  for (std::size_t k = 0; k < d; ++k) {
    entity[k] += grad_h0[k];
    attr[k] += grad_h0[d + k];
  }
}

// ---------------------------------------------------------------------------
// Attribute regression loss

struct ObservedEntry {
  Index row;
  Index attribute;
  double value;
};

struct Phase1Batch {
  std::vector<ObservedEntry> user_entries;  // from X
  std::vector<ObservedEntry> item_entries;  // from Y
};

/// Sum of squared errors over both entry lists. When `grads` is non-null the
/// exact gradient is accumulated into it. Dropout is active only when `rng`
/// is supplied.
inline double phase1_loss(const Phase1Batch& batch, const ModelParams& p, double rating_max,
                          GradientBuffer* grads = nullptr, double dropout_rate = 0.0,
                          Rng* rng = nullptr) {
  double loss = 0.0;
  const auto run = [&](AttributeTower which, const std::vector<ObservedEntry>& entries) {
    for (const auto& e : entries) {
      if (!(e.value >= 1.0 && e.value <= rating_max)) {
        throw std::invalid_argument("phase1_loss: entry is not an observed matrix value");
      }
      const auto f = attribute_forward(which, e.row, e.attribute, p, rating_max, dropout_rate, rng);
      const double residual = e.value - f.value;
      loss += residual * residual;
      if (grads != nullptr) attribute_backward(f, -2.0 * residual, p, rating_max, *grads);
    }
  };
  run(AttributeTower::User, batch.user_entries);
  run(AttributeTower::Item, batch.item_entries);
  return loss;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam on one tensor. `step` is the 1-based step count.
inline void adam_update(std::span<double> param, std::span<const double> grad,
                        std::span<double> first, std::span<double> second, std::uint64_t step,
                        const AdamOptions& opt) {
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(step));
  for (std::size_t k = 0; k < param.size(); ++k) {
    first[k] = opt.beta1 * first[k] + (1.0 - opt.beta1) * grad[k];
    second[k] = opt.beta2 * second[k] + (1.0 - opt.beta2) * grad[k] * grad[k];
    const double m_hat = first[k] / c1;
    const double v_hat = second[k] / c2;
    param[k] -= opt.learning_rate * m_hat / (std::sqrt(v_hat) + opt.eps);
  }
}

struct AdamState {
  ModelParams first;
  ModelParams second;
  std::uint64_t step = 0;

  static AdamState for_dims(const ModelDims& dims) {
    return {ModelParams::zeros(dims), ModelParams::zeros(dims), 0};
  }
};

/// Returns false, leaving params and state untouched, when any gradient is
/// non-finite.
inline bool adam_step(ModelParams& params, const GradientBuffer& grads, AdamState& state,
                      const AdamOptions& opt) {
  auto pt = params.tensors();
  const auto gt = grads.tensors();
  if (gt.size() != pt.size()) throw std::invalid_argument("adam_step: gradient layout mismatch");
  for (std::size_t k = 0; k < pt.size(); ++k) {
    if (gt[k].values.size() != pt[k].values.size()) {
      throw std::invalid_argument("adam_step: shape mismatch in " + pt[k].name);
    }
    if (!all_finite(gt[k].values)) {
      log_warning("non-finite gradient in " + pt[k].name + "; batch skipped");
      return false;
    }
  }
  ++state.step;
  auto mt = state.first.tensors();
  auto vt = state.second.tensors();
  for (std::size_t k = 0; k < pt.size(); ++k) {
    adam_update(pt[k].values, gt[k].values, mt[k].values, vt[k].values, state.step, opt);
  }
  return true;
}

}  // namespace a2cf
