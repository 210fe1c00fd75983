#pragma once

// Proxy reward model: a linear scorer over query/response pair features,
// trained with a pairwise logistic ranking loss on worst/median/best pairs,
// and the best-of-n selection rule built on it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bestroute/core.hpp"
#include "bestroute/detail/linear.hpp"
#include "bestroute/detail/parallel.hpp"
#include "bestroute/detail/rng.hpp"
#include "bestroute/features.hpp"

namespace bestroute {

struct SgdConfig {
  int epochs = 5;
  double learning_rate = 0.1;
  double l2 = 1e-6;
  std::uint64_t seed = 0;
  bool shuffle = true;

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(l2 >= 0.0)) throw ConfigError("l2 must be nonnegative");
  }
};

struct ProxyTrainingInfo {
  std::uint64_t seed = 0;
  int epochs = 0;
  std::size_t pair_count = 0;
  std::size_t skipped = 0;
  double initial_loss = 0.0;
  std::vector<double> loss_trace;  // full-set loss after each epoch
};

struct ProxyRewardModel {
  FeatureConfig feature_config;
  std::vector<double> weights;  // length pair_dim(feature_config)
  double bias = 0.0;
  ProxyTrainingInfo training;

  static ProxyRewardModel zeros(const FeatureConfig& cfg) {
    cfg.validate();
    ProxyRewardModel m;
    m.feature_config = cfg;
    m.weights.assign(pair_dim(cfg), 0.0);
    return m;
  }

  void check() const {
    if (weights.size() != pair_dim(feature_config))
      throw ValidationError("proxy weights do not match the pair feature dimension");
    for (double w : weights)
      if (!std::isfinite(w)) throw ValidationError("proxy weights must be finite");
    if (!std::isfinite(bias)) throw ValidationError("proxy bias must be finite");
  }

  double score_features(const SparseVector& x) const { return x.dot(weights) + bias; }

  double score(std::string_view query, std::string_view response) const {
    return score_features(encode_pair_sparse(query, response, feature_config));
  }

  /// Proxy scores of every stored sample, in stored order.
  std::vector<double> score_all(std::string_view query, std::span<const ResponseSample> samples) const {
    std::vector<double> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(score(query, s.text));
    return out;
  }
};

inline double score(const ProxyRewardModel& model, std::string_view query, std::string_view response) {
  return model.score(query, response);
}

// ---------------------------------------------------------------------------
// Pair construction

struct TrainingPair {
  const QueryRecord* record = nullptr;
  std::string model;
  const ResponseSample* better = nullptr;
  const ResponseSample* worse = nullptr;

  const std::string& query_id() const { return record->id; }
};

struct PairSet {
  std::vector<TrainingPair> pairs;
  std::size_t skipped = 0;  // (record, model) cells with fewer than 3 samples
};

/// Per (record, model): sort ascending by gt_score, take worst, lower median
/// (index floor((m-1)/2)) and best, emit (worst, median) and (median, best),
/// dropping tied pairs. `models` empty means every dataset model. The
/// returned pairs point into `train`.
inline PairSet build_training_pairs(const Dataset& train, const std::vector<std::string>& models = {}) {
  const auto& subset = models.empty() ? train.model_names : models;
  PairSet out;
  std::vector<const ResponseSample*> sorted;
  for (const auto& rec : train.records) {
    for (const auto& model : subset) {
      auto it = rec.samples.find(model);
      if (it == rec.samples.end() || it->second.size() < 3) {
        ++out.skipped;
        continue;
      }
      sorted.clear();
      for (const auto& s : it->second) sorted.push_back(&s);
      std::stable_sort(sorted.begin(), sorted.end(),
                       [](const ResponseSample* a, const ResponseSample* b) { return a->gt_score < b->gt_score; });
      const auto* worst = sorted.front();
      const auto* median = sorted[(sorted.size() - 1) / 2];
      const auto* best = sorted.back();
      if (worst->gt_score < median->gt_score) out.pairs.push_back({&rec, model, median, worst});
      if (median->gt_score < best->gt_score) out.pairs.push_back({&rec, model, best, median});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ranking loss

/// Feature difference x(better) - x(worse); the query block cancels exactly.
inline SparseVector pair_difference(const TrainingPair& p, const FeatureConfig& cfg) {
  return sparse_difference(encode_pair_sparse(p.record->query_text, p.better->text, cfg),
                           encode_pair_sparse(p.record->query_text, p.worse->text, cfg));
}

inline std::vector<SparseVector> pair_differences(std::span<const TrainingPair> pairs, const FeatureConfig& cfg) {
  std::vector<SparseVector> out(pairs.size());
  detail::parallel_for(pairs.size(), [&](std::size_t i) { out[i] = pair_difference(pairs[i], cfg); });
  return out;
}

/// Mean of softplus(-delta) over precomputed differences.
inline double ranking_loss_from_differences(std::span<const double> weights, std::span<const SparseVector> diffs) {
  if (diffs.empty()) throw ValidationError("ranking loss needs at least one pair");
  double total = 0.0;
  for (const auto& d : diffs) total += detail::softplus(-d.dot(weights));
  return total / static_cast<double>(diffs.size());
}

/// -(1/|P|) sum ln sigma(R(better) - R(worse)).
inline double ranking_loss(const ProxyRewardModel& model, std::span<const TrainingPair> pairs) {
  if (pairs.empty()) throw ValidationError("ranking loss needs at least one pair");
  return ranking_loss_from_differences(model.weights, pair_differences(pairs, model.feature_config));
}

/// Gradient of ranking_loss with respect to the weights. The bias cancels in
/// every difference so its gradient is identically zero.
inline std::vector<double> ranking_loss_gradient(std::span<const double> weights, std::span<const SparseVector> diffs) {
  if (diffs.empty()) throw ValidationError("ranking loss needs at least one pair");
  std::vector<double> g(weights.size(), 0.0);
  const double inv = 1.0 / static_cast<double>(diffs.size());
  for (const auto& d : diffs) {
    const double coef = -detail::sigmoid(-d.dot(weights)) * inv;
    for (std::size_t i = 0; i < d.nnz(); ++i) g[d.index[i]] += coef * d.value[i];
  }
  return g;
}

inline std::vector<double> ranking_loss_gradient(const ProxyRewardModel& model, std::span<const TrainingPair> pairs) {
  return ranking_loss_gradient(model.weights, pair_differences(pairs, model.feature_config));
}

// ---------------------------------------------------------------------------
// Training

/// SGD on softplus(-delta) + (l2/2)|w|^2 over precomputed pair differences.
inline ProxyRewardModel train_proxy_on_pairs(const PairSet& pairs, const SgdConfig& cfg, const FeatureConfig& fcfg) {
  cfg.validate();
  fcfg.validate();
  if (pairs.pairs.empty()) throw ValidationError("train_proxy: no training pairs");

  const auto diffs = pair_differences(pairs.pairs, fcfg);
  auto model = ProxyRewardModel::zeros(fcfg);
  model.training.seed = cfg.seed;
  model.training.epochs = cfg.epochs;
  model.training.pair_count = diffs.size();
  model.training.skipped = pairs.skipped;
  model.training.initial_loss = ranking_loss_from_differences(model.weights, diffs);

  detail::ScaledWeights w(pair_dim(fcfg));
  std::vector<std::size_t> order(diffs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  detail::Rng rng(detail::derive_seed(cfg.seed, std::string_view("proxy")));
  const double decay = 1.0 - cfg.learning_rate * cfg.l2;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle) rng.shuffle(order);
    for (std::size_t idx : order) {
      const auto& d = diffs[idx];
      const double g = -detail::sigmoid(-w.dot(d));
      if (decay != 1.0) w.decay(decay);
      w.add(d, -cfg.learning_rate * g);
    }
    model.weights = w.materialize();
    model.training.loss_trace.push_back(ranking_loss_from_differences(model.weights, diffs));
  }
  return model;
}

inline ProxyRewardModel train_proxy(const Dataset& train, const SgdConfig& cfg, const FeatureConfig& fcfg,
                                    const std::vector<std::string>& models = {}) {
  return train_proxy_on_pairs(build_training_pairs(train, models), cfg, fcfg);
}

/// Fraction of pairs the model orders strictly correctly.
inline double pairwise_accuracy(const ProxyRewardModel& model, std::span<const TrainingPair> pairs) {
  if (pairs.empty()) return 0.0;
  std::size_t ok = 0;
  for (const auto& p : pairs)
    if (model.score(p.record->query_text, p.better->text) > model.score(p.record->query_text, p.worse->text)) ++ok;
  return static_cast<double>(ok) / static_cast<double>(pairs.size());
}

// ---------------------------------------------------------------------------
// Best-of-n selection

/// Index (into `scores`) of the maximum among `candidates`, ties to the
/// lowest stored index. `candidates` must be nonempty.
inline std::size_t argmax_among(std::span<const double> scores, std::span<const std::size_t> candidates) {
  std::size_t best = candidates.front();
  for (std::size_t c : candidates)
    if (scores[c] > scores[best] || (scores[c] == scores[best] && c < best)) best = c;
  return best;
}

/// Argmax over the first n scores; ties to the lowest index.
inline std::size_t argmax_prefix(std::span<const double> scores, std::size_t n) {
  if (n < 1 || n > scores.size())
    throw ValidationError("best-of-n: n=" + std::to_string(n) + " outside [1, " + std::to_string(scores.size()) + "]");
  std::size_t best = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

/// Best-of-n over the first n stored samples using any scorer
/// `double(const ResponseSample&)`.
template <class Scorer>
std::size_t select_best_of_n_by(Scorer&& scorer, std::span<const ResponseSample> samples, std::size_t n) {
  if (n < 1 || n > samples.size())
    throw ValidationError("best-of-n: n=" + std::to_string(n) + " outside [1, " + std::to_string(samples.size()) + "]");
  std::vector<double> s;
  s.reserve(n);
  for (std::size_t i = 0; i < n; ++i) s.push_back(scorer(samples[i]));
  return argmax_prefix(s, n);
}

inline std::size_t select_best_of_n(const ProxyRewardModel& model, std::string_view query,
                                    std::span<const ResponseSample> samples, std::size_t n) {
  return select_best_of_n_by([&](const ResponseSample& s) { return model.score(query, s.text); }, samples, n);
}

}  // namespace bestroute
