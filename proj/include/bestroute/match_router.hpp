#pragma once

// Match-probability labels and the multi-head router.
//
// A label y(q, k, n) is the probability that the proxy's pick among n samples
// of model k scores at least as well (ground truth) as the designated
// reference response. The router shares one frozen query encoding h_q across
// K x N independent logistic heads, p[k][n] = sigmoid(w_kn . h_q + b_kn).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bestroute/core.hpp"
#include "bestroute/detail/linear.hpp"
#include "bestroute/detail/parallel.hpp"
#include "bestroute/detail/rng.hpp"
#include "bestroute/features.hpp"
#include "bestroute/proxy_reward.hpp"

namespace bestroute {

struct RouterTrainConfig {
  int epochs = 5;
  double learning_rate = 0.2;
  double l2 = 1e-6;
  std::uint64_t seed = 0;
  int label_mc_samples = 200;
  std::uint64_t label_exact_cutoff = 1000;  // max C(m, n) enumerated exactly

  void validate() const {
    if (epochs < 1) throw ConfigError("router epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("router learning_rate must be positive");
    if (!(l2 >= 0.0)) throw ConfigError("router l2 must be nonnegative");
    if (label_mc_samples < 1) throw ConfigError("label_mc_samples must be >= 1");
  }
};

enum class LabelEstimator { automatic, exact, monte_carlo };

struct MatchLabel {
  std::string query_id;
  std::size_t record_index = 0;  // into the dataset the labels were built from
  std::size_t model_index = 0;   // k, over candidate (non-reference) models
  int n = 1;
  double y = 0.0;
};

struct LabelSet {
  std::vector<std::string> model_names;
  int n_max = 0;
  std::vector<MatchLabel> labels;
  std::size_t skipped_cells = 0;  // (record, k, n) with fewer than n samples
};

struct RouterHead {
  std::vector<double> weights;
  double bias = 0.0;

  bool operator==(const RouterHead&) const = default;
};

struct HeadTrainingInfo {
  std::size_t label_count = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

struct MultiHeadRouter {
  FeatureConfig feature_config;
  std::vector<std::string> model_names;  // k, reference excluded
  int n_max = 0;
  std::vector<RouterHead> heads;  // row-major: k * n_max + (n - 1)
  std::uint64_t seed = 0;
  int epochs = 0;
  std::vector<HeadTrainingInfo> head_info;

  std::size_t num_models() const { return model_names.size(); }

  std::size_t head_slot(std::size_t k, int n) const {
    if (k >= model_names.size() || n < 1 || n > n_max)
      throw ValidationError("router head (" + std::to_string(k) + ", " + std::to_string(n) + ") out of range");
    return k * static_cast<std::size_t>(n_max) + static_cast<std::size_t>(n - 1);
  }

  const RouterHead& head(std::size_t k, int n) const { return heads[head_slot(k, n)]; }
  RouterHead& head(std::size_t k, int n) { return heads[head_slot(k, n)]; }

  void check() const {
    if (heads.size() != model_names.size() * static_cast<std::size_t>(n_max))
      throw ValidationError("router head grid is not fully populated");
    for (const auto& h : heads) {
      if (h.weights.size() != feature_config.dim) throw ValidationError("router head dimension mismatch");
      for (double w : h.weights)
        if (!std::isfinite(w)) throw ValidationError("router weights must be finite");
      if (!std::isfinite(h.bias)) throw ValidationError("router bias must be finite");
    }
  }
};

using MatchMatrix = std::vector<std::vector<double>>;  // [k][n - 1]

// ---------------------------------------------------------------------------
// Labels

/// The single reference response anchoring every label: the first stored
/// reference-model sample.
inline const ResponseSample& reference_response(const QueryRecord& record, const std::string& reference_model) {
  auto it = record.samples.find(reference_model);
  if (it == record.samples.end() || it->second.empty())
    throw ValidationError("record '" + record.id + "' has no samples for reference model '" + reference_model + "'");
  return it->second.front();
}

/// C(m, n) as a double (exact for the sizes used here).
inline double binomial(std::size_t m, std::size_t n) {
  if (n > m) return 0.0;
  n = std::min(n, m - n);
  double r = 1.0;
  for (std::size_t i = 1; i <= n; ++i) r = r * static_cast<double>(m - n + i) / static_cast<double>(i);
  return std::round(r);
}

/// Exact label over all C(m, n) subsets. Ordering samples by (proxy score
/// desc, index asc), the sample at rank r is a subset's pick exactly when the
/// subset contains it and otherwise only lower-ranked samples, which happens
/// in C(m-1-r, n-1) subsets.
inline double match_label_exact(std::span<const double> proxy_scores, std::span<const double> gt_scores,
                                double reference_gt, std::size_t n) {
  const std::size_t m = proxy_scores.size();
  if (n < 1 || n > m)
    throw ValidationError("match label: n=" + std::to_string(n) + " with " + std::to_string(m) + " samples");
  std::vector<std::size_t> rank(m);
  std::iota(rank.begin(), rank.end(), 0);
  std::sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) {
    return proxy_scores[a] != proxy_scores[b] ? proxy_scores[a] > proxy_scores[b] : a < b;
  });
  double hits = 0.0;
  for (std::size_t r = 0; r + n <= m; ++r)
    if (gt_scores[rank[r]] >= reference_gt) hits += binomial(m - 1 - r, n - 1);
  return hits / binomial(m, n);
}

/// Monte-Carlo label from `draws` uniform size-n subsets.
inline double match_label_monte_carlo(std::span<const double> proxy_scores, std::span<const double> gt_scores,
                                      double reference_gt, std::size_t n, int draws, std::uint64_t seed) {
  const std::size_t m = proxy_scores.size();
  if (n < 1 || n > m)
    throw ValidationError("match label: n=" + std::to_string(n) + " with " + std::to_string(m) + " samples");
  detail::Rng rng(seed);
  int hits = 0;
  for (int d = 0; d < draws; ++d) {
    const auto subset = rng.sample_indices(m, n);
    if (gt_scores[argmax_among(proxy_scores, subset)] >= reference_gt) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(draws);
}

inline std::uint64_t label_seed(const RouterTrainConfig& cfg, std::string_view query_id, std::string_view model, int n) {
  return detail::derive_seed(cfg.seed, std::string_view("label"), query_id, model, static_cast<std::uint64_t>(n));
}

inline double estimate_match_label_scored(std::span<const double> proxy_scores, std::span<const double> gt_scores,
                                          double reference_gt, int n, std::uint64_t seed,
                                          const RouterTrainConfig& cfg,
                                          LabelEstimator estimator = LabelEstimator::automatic) {
  const auto nn = static_cast<std::size_t>(n);
  const bool exact = estimator == LabelEstimator::exact ||
                     (estimator == LabelEstimator::automatic &&
                      binomial(proxy_scores.size(), nn) <= static_cast<double>(cfg.label_exact_cutoff));
  return exact ? match_label_exact(proxy_scores, gt_scores, reference_gt, nn)
               : match_label_monte_carlo(proxy_scores, gt_scores, reference_gt, nn, cfg.label_mc_samples, seed);
}

inline double estimate_match_label(const QueryRecord& record, const std::string& model, int n,
                                   const ProxyRewardModel& proxy, const std::string& reference_model,
                                   const RouterTrainConfig& cfg,
                                   LabelEstimator estimator = LabelEstimator::automatic) {
  const auto& samples = record.samples_for(model);
  if (n < 1 || static_cast<std::size_t>(n) > samples.size())
    throw ValidationError("record '" + record.id + "': n=" + std::to_string(n) + " exceeds the " +
                          std::to_string(samples.size()) + " stored samples of '" + model + "'");
  const double ref = reference_response(record, reference_model).gt_score;
  const auto scores = proxy.score_all(record.query_text, samples);
  std::vector<double> gt;
  for (const auto& s : samples) gt.push_back(s.gt_score);
  return estimate_match_label_scored(scores, gt, ref, n, label_seed(cfg, record.id, model, n), cfg, estimator);
}

/// One label per (record, k, n) over candidate models and n = 1..n_max. Cells
/// where the record holds fewer than n samples are skipped and counted.
inline LabelSet build_router_training_set(const Dataset& train, const ProxyRewardModel& proxy, int n_max,
                                          const RouterTrainConfig& cfg) {
  cfg.validate();
  if (n_max < 1) throw ConfigError("n_max must be >= 1");
  LabelSet out;
  out.model_names = train.candidate_models();
  out.n_max = n_max;
  const std::size_t K = out.model_names.size();

  std::vector<std::vector<MatchLabel>> per_record(train.records.size());
  std::vector<std::size_t> skipped(train.records.size(), 0);
  detail::parallel_for(train.records.size(), [&](std::size_t ri) {
    const auto& rec = train.records[ri];
    const double ref = reference_response(rec, train.reference_model).gt_score;
    for (std::size_t k = 0; k < K; ++k) {
      const auto& model = out.model_names[k];
      auto it = rec.samples.find(model);
      if (it == rec.samples.end()) {
        skipped[ri] += static_cast<std::size_t>(n_max);
        continue;
      }
      const auto scores = proxy.score_all(rec.query_text, it->second);
      std::vector<double> gt;
      for (const auto& s : it->second) gt.push_back(s.gt_score);
      for (int n = 1; n <= n_max; ++n) {
        if (static_cast<std::size_t>(n) > scores.size()) {
          ++skipped[ri];
          continue;
        }
        const double y = estimate_match_label_scored(scores, gt, ref, n, label_seed(cfg, rec.id, model, n), cfg);
        per_record[ri].push_back(MatchLabel{rec.id, ri, k, n, y});
      }
    }
  });
  for (std::size_t ri = 0; ri < per_record.size(); ++ri) {
    out.skipped_cells += skipped[ri];
    for (auto& l : per_record[ri]) out.labels.push_back(std::move(l));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Head training

/// Mean soft-label cross entropy of one head over (x, y) examples.
inline double head_cross_entropy(std::span<const double> weights, double bias, std::span<const SparseVector> xs,
                                 std::span<const double> ys) {
  if (xs.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double z = xs[i].dot(weights) + bias;
    // -[y ln s(z) + (1-y) ln(1-s(z))] = y softplus(-z) + (1-y) softplus(z)
    total += ys[i] * detail::softplus(-z) + (1.0 - ys[i]) * detail::softplus(z);
  }
  return total / static_cast<double>(xs.size());
}

struct HeadGradient {
  std::vector<double> weights;
  double bias = 0.0;
};

inline HeadGradient head_cross_entropy_gradient(std::span<const double> weights, double bias,
                                                std::span<const SparseVector> xs, std::span<const double> ys) {
  HeadGradient g{std::vector<double>(weights.size(), 0.0), 0.0};
  if (xs.empty()) return g;
  const double inv = 1.0 / static_cast<double>(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double err = (detail::sigmoid(xs[i].dot(weights) + bias) - ys[i]) * inv;
    for (std::size_t j = 0; j < xs[i].nnz(); ++j) g.weights[xs[i].index[j]] += err * xs[i].value[j];
    g.bias += err;
  }
  return g;
}

namespace detail {

inline double clamped_logit(double p) {
  p = std::clamp(p, 1e-6, 1.0 - 1e-6);
  return std::log(p / (1.0 - p));
}

inline std::vector<SparseVector> encode_queries(const Dataset& d, const FeatureConfig& cfg) {
  std::vector<SparseVector> out(d.records.size());
  parallel_for(d.records.size(), [&](std::size_t i) { out[i] = encode_query_sparse(d.records[i].query_text, cfg); });
  return out;
}

/// Trains one head by seeded SGD on its own labels. `fallback_bias` is used
/// when the head has no labels.
inline std::pair<RouterHead, HeadTrainingInfo> train_head(std::span<const MatchLabel* const> labels,
                                                          std::span<const SparseVector> encodings,
                                                          const RouterTrainConfig& cfg, const FeatureConfig& fcfg,
                                                          std::string_view model, int n, double fallback_bias) {
  RouterHead head{std::vector<double>(fcfg.dim, 0.0), 0.0};
  HeadTrainingInfo info;
  info.label_count = labels.size();
  if (labels.empty()) {
    head.bias = fallback_bias;
    return {head, info};
  }
  std::vector<SparseVector> xs;
  std::vector<double> ys;
  for (const auto* l : labels) {
    xs.push_back(encodings[l->record_index]);
    ys.push_back(l->y);
  }
  info.initial_loss = head_cross_entropy(head.weights, head.bias, xs, ys);

  auto fit = fit_logistic(xs, ys, fcfg.dim, cfg.epochs, cfg.learning_rate, cfg.l2,
                          derive_seed(cfg.seed, std::string_view("head"), model, static_cast<std::uint64_t>(n)));
  head.weights = std::move(fit.weights);
  head.bias = fit.bias;
  info.final_loss = head_cross_entropy(head.weights, head.bias, xs, ys);
  return {head, info};
}

inline double global_fallback_bias(const LabelSet& labels) {
  if (labels.labels.empty()) return 0.0;
  double mean = 0.0;
  for (const auto& l : labels.labels) mean += l.y;
  return clamped_logit(mean / static_cast<double>(labels.labels.size()));
}

}  // namespace detail

/// Trains every (k, n) head independently on the frozen shared encoding of
/// the training queries. `train` must be the dataset the labels index into.
inline MultiHeadRouter train_router(const LabelSet& labels, const Dataset& train, const RouterTrainConfig& cfg,
                                    const FeatureConfig& fcfg) {
  cfg.validate();
  fcfg.validate();
  if (labels.n_max < 1) throw ConfigError("label set has n_max < 1");
  MultiHeadRouter router;
  router.feature_config = fcfg;
  router.model_names = labels.model_names;
  router.n_max = labels.n_max;
  router.seed = cfg.seed;
  router.epochs = cfg.epochs;
  const std::size_t K = router.model_names.size();
  const std::size_t cells = K * static_cast<std::size_t>(router.n_max);
  router.heads.resize(cells);
  router.head_info.resize(cells);

  std::vector<std::vector<const MatchLabel*>> by_head(cells);
  for (const auto& l : labels.labels) {
    if (l.record_index >= train.records.size() || train.records[l.record_index].id != l.query_id)
      throw ValidationError("label for '" + l.query_id + "' does not index into the training dataset");
    by_head[router.head_slot(l.model_index, l.n)].push_back(&l);
  }
  const auto encodings = detail::encode_queries(train, fcfg);
  const double fallback = detail::global_fallback_bias(labels);
  detail::parallel_for(cells, [&](std::size_t slot) {
    const std::size_t k = slot / static_cast<std::size_t>(router.n_max);
    const int n = static_cast<int>(slot % static_cast<std::size_t>(router.n_max)) + 1;
    auto [head, info] = detail::train_head(by_head[slot], encodings, cfg, fcfg, router.model_names[k], n, fallback);
    router.heads[slot] = std::move(head);
    router.head_info[slot] = info;
  });
  return router;
}

/// Retrains head (k, n) only; every other head is left untouched.
inline void retrain_head(MultiHeadRouter& router, std::size_t k, int n, const LabelSet& labels, const Dataset& train,
                         const RouterTrainConfig& cfg) {
  const std::size_t slot = router.head_slot(k, n);
  std::vector<const MatchLabel*> mine;
  for (const auto& l : labels.labels)
    if (l.model_index == k && l.n == n) mine.push_back(&l);
  const auto encodings = detail::encode_queries(train, router.feature_config);
  auto [head, info] = detail::train_head(mine, encodings, cfg, router.feature_config, router.model_names[k], n,
                                         detail::global_fallback_bias(labels));
  router.heads[slot] = std::move(head);
  if (router.head_info.size() == router.heads.size()) router.head_info[slot] = info;
}

// ---------------------------------------------------------------------------
// Prediction

inline double predict_match_prob_encoded(const MultiHeadRouter& router, const SparseVector& hq, std::size_t k, int n) {
  const auto& h = router.head(k, n);
  return detail::sigmoid(hq.dot(h.weights) + h.bias);
}

inline double predict_match_prob(const MultiHeadRouter& router, std::string_view query, std::size_t k, int n) {
  const auto& h = router.head(k, n);  // range check before encoding
  return detail::sigmoid(encode_query_sparse(query, router.feature_config).dot(h.weights) + h.bias);
}

/// Encodes once and applies every head.
inline MatchMatrix predict_all(const MultiHeadRouter& router, std::string_view query) {
  const auto hq = encode_query_sparse(query, router.feature_config);
  MatchMatrix p(router.num_models(), std::vector<double>(static_cast<std::size_t>(router.n_max)));
  for (std::size_t k = 0; k < router.num_models(); ++k)
    for (int n = 1; n <= router.n_max; ++n) p[k][static_cast<std::size_t>(n - 1)] = predict_match_prob_encoded(router, hq, k, n);
  return p;
}

}  // namespace bestroute
