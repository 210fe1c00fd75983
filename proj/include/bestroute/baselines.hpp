#pragma once

// Comparison routers: N-class, N-label, TF-IDF clustering, and self-consistency
// model cascades with their text agreement metrics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "bestroute/core.hpp"
#include "bestroute/detail/linear.hpp"
#include "bestroute/detail/rng.hpp"
#include "bestroute/detail/text.hpp"
#include "bestroute/engine.hpp"
#include "bestroute/features.hpp"
#include "bestroute/match_router.hpp"

namespace bestroute {

struct ClassifierTrainConfig {
  int epochs = 5;
  double learning_rate = 0.2;
  double l2 = 1e-6;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 1) throw ConfigError("classifier epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("classifier learning_rate must be positive");
    if (!(l2 >= 0.0)) throw ConfigError("classifier l2 must be nonnegative");
  }
};

/// Answer with `model`'s first stored sample (single call), or the reference
/// response when `model` is the reference.
inline RoutingDecision single_call_decision(const QueryRecord& record, const std::string& model,
                                            const std::vector<ModelSpec>& specs) {
  const auto& spec = find_spec(specs, model);
  if (spec.is_reference) return reference_decision(record, spec);
  const double first[] = {0.0};
  return execute_best_of_n(record, spec, 1, first, SubsetMode::prefix, 0);
}

namespace detail {

/// Index of the best model among `candidates` by value, ties to the cheaper
/// single call, then to candidate order.
inline std::size_t pick_best(std::span<const double> values, std::span<const double> costs) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best] || (values[i] == values[best] && costs[i] < costs[best])) best = i;
  }
  return best;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// N-class

struct NClassRouter {
  FeatureConfig feature_config;
  std::vector<std::string> classes;  // every dataset model, reference included
  std::vector<RouterHead> params;    // one (weights, bias) per class
};

/// The model whose first sample scores highest; ties to the cheaper estimated
/// single call, then to class order.
inline std::size_t nclass_label(const QueryRecord& r, const std::vector<std::string>& classes,
                                const std::vector<ModelSpec>& specs) {
  std::vector<double> values, costs;
  for (const auto& m : classes) {
    values.push_back(r.has_model(m) ? r.samples_for(m).front().gt_score : -std::numeric_limits<double>::infinity());
    costs.push_back(estimate_cost(find_spec(specs, m), 1, r.input_tokens));
  }
  return detail::pick_best(values, costs);
}

inline std::vector<double> nclass_probabilities_encoded(const NClassRouter& router, const SparseVector& x) {
  std::vector<double> z;
  for (const auto& p : router.params) z.push_back(x.dot(p.weights) + p.bias);
  const double mx = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& v : z) sum += (v = std::exp(v - mx));
  for (double& v : z) v /= sum;
  return z;
}

inline std::vector<double> nclass_probabilities(const NClassRouter& router, std::string_view query) {
  return nclass_probabilities_encoded(router, encode_query_sparse(query, router.feature_config));
}

/// Multinomial logistic regression by seeded SGD.
inline NClassRouter train_nclass(const Dataset& train, const std::vector<ModelSpec>& specs, const FeatureConfig& fcfg,
                                 const ClassifierTrainConfig& cfg = {}) {
  cfg.validate();
  fcfg.validate();
  if (train.records.empty()) throw ValidationError("train_nclass needs a nonempty training set");
  NClassRouter router;
  router.feature_config = fcfg;
  router.classes = train.model_names;
  const std::size_t C = router.classes.size();

  const auto xs = detail::encode_queries(train, fcfg);
  std::vector<std::size_t> ys;
  for (const auto& r : train.records) ys.push_back(nclass_label(r, router.classes, specs));

  std::vector<detail::ScaledWeights> w(C, detail::ScaledWeights(fcfg.dim));
  std::vector<double> b(C, 0.0);
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  detail::Rng rng(detail::derive_seed(cfg.seed, std::string_view("nclass")));
  const double decay = 1.0 - cfg.learning_rate * cfg.l2;
  std::vector<double> z(C);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t i : order) {
      for (std::size_t c = 0; c < C; ++c) z[c] = w[c].dot(xs[i]) + b[c];
      const double mx = *std::max_element(z.begin(), z.end());
      double sum = 0.0;
      for (double& v : z) sum += (v = std::exp(v - mx));
      for (std::size_t c = 0; c < C; ++c) {
        const double err = z[c] / sum - (c == ys[i] ? 1.0 : 0.0);
        if (decay != 1.0) w[c].decay(decay);
        w[c].add(xs[i], -cfg.learning_rate * err);
        b[c] -= cfg.learning_rate * err;
      }
    }
  }
  for (std::size_t c = 0; c < C; ++c) router.params.push_back(RouterHead{w[c].materialize(), b[c]});
  return router;
}

/// Highest-probability class; ties to class order.
inline std::string route_nclass(const NClassRouter& router, const QueryRecord& record) {
  const auto p = nclass_probabilities(router, record.query_text);
  return router.classes[static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin())];
}

inline Policy nclass_policy(const NClassRouter& router, const std::vector<ModelSpec>& specs) {
  return [&router, specs](const QueryRecord& r) { return single_call_decision(r, route_nclass(router, r), specs); };
}

// ---------------------------------------------------------------------------
// N-label

struct NLabelRouter {
  FeatureConfig feature_config;
  std::vector<std::string> model_names;  // non-reference models
  std::string reference_model;
  std::vector<RouterHead> heads;
  double delta = 0.0;
};

/// Capable: first-sample gt_score >= reference first-sample gt_score - delta.
inline NLabelRouter train_nlabel(const Dataset& train, const FeatureConfig& fcfg, const ClassifierTrainConfig& cfg = {},
                                 double delta = 0.0) {
  cfg.validate();
  fcfg.validate();
  NLabelRouter router;
  router.feature_config = fcfg;
  router.model_names = train.candidate_models();
  router.reference_model = train.reference_model;
  router.delta = delta;
  const auto enc = detail::encode_queries(train, fcfg);
  for (const auto& model : router.model_names) {
    std::vector<SparseVector> xs;
    std::vector<double> ys;
    for (std::size_t i = 0; i < train.records.size(); ++i) {
      const auto& r = train.records[i];
      if (!r.has_model(model)) continue;
      const double ref = reference_response(r, train.reference_model).gt_score;
      xs.push_back(enc[i]);
      ys.push_back(r.samples_for(model).front().gt_score >= ref - delta ? 1.0 : 0.0);
    }
    auto fit = detail::fit_logistic(xs, ys, fcfg.dim, cfg.epochs, cfg.learning_rate, cfg.l2,
                                    detail::derive_seed(cfg.seed, std::string_view("nlabel"), model));
    router.heads.push_back(RouterHead{std::move(fit.weights), fit.bias});
  }
  return router;
}

inline std::vector<double> nlabel_probabilities(const NLabelRouter& router, std::string_view query) {
  const auto x = encode_query_sparse(query, router.feature_config);
  std::vector<double> p;
  for (const auto& h : router.heads) p.push_back(detail::sigmoid(x.dot(h.weights) + h.bias));
  return p;
}

/// Cheapest model whose head clears `prob_threshold`; reference if none does.
inline std::string route_nlabel(const NLabelRouter& router, const QueryRecord& record, double prob_threshold,
                                const std::vector<ModelSpec>& specs) {
  const auto p = nlabel_probabilities(router, record.query_text);
  const std::string* best = nullptr;
  double best_cost = 0.0;
  for (std::size_t k = 0; k < router.model_names.size(); ++k) {
    if (!(p[k] >= prob_threshold) || !record.has_model(router.model_names[k])) continue;
    const double c = estimate_cost(find_spec(specs, router.model_names[k]), 1, record.input_tokens);
    if (!best || c < best_cost) {
      best = &router.model_names[k];
      best_cost = c;
    }
  }
  return best ? *best : router.reference_model;
}

inline Policy nlabel_policy(const NLabelRouter& router, double prob_threshold, const std::vector<ModelSpec>& specs) {
  return [&router, prob_threshold, specs](const QueryRecord& r) {
    return single_call_decision(r, route_nlabel(router, r, prob_threshold, specs), specs);
  };
}

// ---------------------------------------------------------------------------
// Clustering

struct ClusterRouter {
  TfidfVocabulary vocabulary;
  std::vector<std::vector<double>> centroids;
  std::vector<std::string> cluster_model;
  std::vector<double> objective_trace;  // after each assignment step
  int iterations = 0;
  bool k_lowered = false;
};

namespace detail {

inline double squared_distance(const SparseVector& x, double x_norm2, std::span<const double> c, double c_norm2) {
  return std::max(0.0, x_norm2 + c_norm2 - 2.0 * x.dot(c));
}

inline double squared_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

inline std::size_t nearest_centroid(const SparseVector& x, double x_norm2, const std::vector<std::vector<double>>& cents,
                                    const std::vector<double>& cent_norm2, double* dist = nullptr) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < cents.size(); ++c) {
    const double d = squared_distance(x, x_norm2, cents[c], cent_norm2[c]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  if (dist) *dist = best_d;
  return best;
}

/// Best model by mean first-sample gt_score over `members`; ties to the
/// cheaper single call at the members' mean input length.
inline std::string best_mean_model(const Dataset& train, std::span<const std::size_t> members,
                                   const std::vector<ModelSpec>& specs) {
  std::vector<double> means, costs;
  double mean_input = 0.0;
  for (std::size_t i : members) mean_input += static_cast<double>(train.records[i].input_tokens);
  mean_input /= static_cast<double>(std::max<std::size_t>(1, members.size()));
  for (const auto& m : train.model_names) {
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t i : members) {
      const auto& r = train.records[i];
      if (!r.has_model(m)) continue;
      s += r.samples_for(m).front().gt_score;
      ++n;
    }
    means.push_back(n == 0 ? -std::numeric_limits<double>::infinity() : s / static_cast<double>(n));
    const auto& spec = find_spec(specs, m);
    costs.push_back(estimated_cost_micro(spec, 1, 0) + mean_input * spec.input_price_per_mtok);
  }
  return train.model_names[pick_best(means, costs)];
}

}  // namespace detail

/// TF-IDF features, k-means++ seeding, Lloyd iterations (at most 100, stop
/// when assignments are fixed). A cluster that empties is re-seeded at the
/// point farthest from its own centroid.
inline ClusterRouter fit_clustering(const Dataset& train, const std::vector<ModelSpec>& specs, std::size_t k = 50,
                                    std::uint64_t seed = 0) {
  if (train.records.empty()) throw ValidationError("fit_clustering needs a nonempty training set");
  ClusterRouter router;
  if (k > train.records.size()) {
    k = train.records.size();
    router.k_lowered = true;
  }
  k = std::max<std::size_t>(k, 1);

  std::vector<std::string> docs;
  for (const auto& r : train.records) docs.push_back(r.query_text);
  router.vocabulary = tfidf_fit(docs);
  const std::size_t dim = router.vocabulary.size();
  const std::size_t N = docs.size();
  std::vector<SparseVector> xs;
  std::vector<double> xn;
  for (const auto& d : docs) {
    xs.push_back(tfidf_transform(router.vocabulary, d));
    xn.push_back(xs.back().squared_norm());
  }

  detail::Rng rng(detail::derive_seed(seed, std::string_view("kmeans")));
  auto& cents = router.centroids;
  std::vector<double> cn;
  auto add_center = [&](std::size_t i) {
    cents.push_back(xs[i].to_dense(dim));
    cn.push_back(xn[i]);
  };
  add_center(static_cast<std::size_t>(rng.below(N)));
  std::vector<double> d2(N);
  while (cents.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      detail::nearest_centroid(xs[i], xn[i], cents, cn, &d2[i]);
      total += d2[i];
    }
    std::size_t pick = N - 1;
    if (total > 0.0) {
      const double u = rng.uniform() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < N; ++i) {
        acc += d2[i];
        if (u < acc) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<std::size_t>(rng.below(N));
    }
    add_center(pick);
  }

  std::vector<std::size_t> assign(N, k);
  std::vector<double> dist(N);
  for (int it = 0; it < 100; ++it) {
    bool changed = false;
    double objective = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      const auto c = detail::nearest_centroid(xs[i], xn[i], cents, cn, &dist[i]);
      if (c != assign[i]) changed = true;
      assign[i] = c;
      objective += dist[i];
    }
    router.objective_trace.push_back(objective);
    router.iterations = it + 1;
    if (!changed) break;

    std::vector<std::size_t> count(k, 0);
    for (auto& c : cents) std::fill(c.begin(), c.end(), 0.0);
    for (std::size_t i = 0; i < N; ++i) {
      ++count[assign[i]];
      for (std::size_t j = 0; j < xs[i].nnz(); ++j) cents[assign[i]][xs[i].index[j]] += xs[i].value[j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (count[c] == 0) {
        const auto far = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
        cents[c] = xs[far].to_dense(dim);
        dist[far] = 0.0;
      } else {
        for (double& v : cents[c]) v /= static_cast<double>(count[c]);
      }
      cn[c] = detail::squared_norm(cents[c]);
    }
  }

  std::vector<std::vector<std::size_t>> members(k);
  for (std::size_t i = 0; i < N; ++i) members[assign[i]].push_back(i);
  std::vector<std::size_t> everyone(N);
  std::iota(everyone.begin(), everyone.end(), 0);
  const auto global_best = detail::best_mean_model(train, everyone, specs);
  for (std::size_t c = 0; c < k; ++c)
    router.cluster_model.push_back(members[c].empty() ? global_best : detail::best_mean_model(train, members[c], specs));
  return router;
}

inline std::size_t assign_cluster(const ClusterRouter& router, std::string_view query) {
  const auto x = tfidf_transform(router.vocabulary, query);
  std::vector<double> cn;
  for (const auto& c : router.centroids) cn.push_back(detail::squared_norm(c));
  return detail::nearest_centroid(x, x.squared_norm(), router.centroids, cn);
}

inline std::string route_clustering(const ClusterRouter& router, const QueryRecord& record) {
  return router.cluster_model[assign_cluster(router, record.query_text)];
}

inline Policy clustering_policy(const ClusterRouter& router, const std::vector<ModelSpec>& specs) {
  return [&router, specs](const QueryRecord& r) { return single_call_decision(r, route_clustering(router, r), specs); };
}

// ---------------------------------------------------------------------------
// Agreement metrics

enum class Agreement { exact_match, bleu, rouge };

inline std::string_view to_string(Agreement a) {
  switch (a) {
    case Agreement::exact_match: return "exact";
    case Agreement::bleu: return "bleu";
    case Agreement::rouge: return "rouge";
  }
  return "exact";
}

inline Agreement parse_agreement(std::string_view s) {
  if (s == "exact" || s == "exact_match") return Agreement::exact_match;
  if (s == "bleu") return Agreement::bleu;
  if (s == "rouge") return Agreement::rouge;
  throw ConfigError("unknown agreement '" + std::string(s) + "' (expected exact, bleu or rouge)");
}

namespace detail {

inline std::unordered_map<std::string, int> ngram_counts(std::span<const std::string_view> toks, std::size_t n) {
  std::unordered_map<std::string, int> out;
  std::string key;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    key.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j) key.push_back('\x1f');
      key.append(toks[i + j]);
    }
    ++out[key];
  }
  return out;
}

/// BLEU-4 of `hyp` against `ref`. Zero-match precisions are smoothed to
/// 1 / (total + 1); brevity penalty min(1, exp(1 - |ref| / |hyp|)).
inline double bleu_one_way(std::span<const std::string_view> ref, std::span<const std::string_view> hyp) {
  if (hyp.empty()) return ref.empty() ? 1.0 : 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto hc = ngram_counts(hyp, n);
    const auto rc = ngram_counts(ref, n);
    int matches = 0;
    for (const auto& [g, c] : hc) {
      auto it = rc.find(g);
      if (it != rc.end()) matches += std::min(c, it->second);
    }
    const int total = hyp.size() >= n ? static_cast<int>(hyp.size() - n + 1) : 0;
    const double p = matches == 0 ? 1.0 / static_cast<double>(total + 1)
                                  : static_cast<double>(matches) / static_cast<double>(total);
    log_sum += std::log(p);
  }
  const double bp = std::min(1.0, std::exp(1.0 - static_cast<double>(ref.size()) / static_cast<double>(hyp.size())));
  return bp * std::exp(log_sum / 4.0);
}

inline std::size_t lcs_length(std::span<const std::string_view> a, std::span<const std::string_view> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace detail

/// Agreement in [0, 1] on whitespace tokens. exact_match compares
/// whitespace-normalized strings; bleu is BLEU-4 averaged over both
/// directions; rouge is ROUGE-L F1.
inline double agreement(std::string_view a, std::string_view b, Agreement kind) {
  switch (kind) {
    case Agreement::exact_match:
      return detail::normalize_ws(a) == detail::normalize_ws(b) ? 1.0 : 0.0;
    case Agreement::bleu: {
      const auto ta = detail::split_ws(a);
      const auto tb = detail::split_ws(b);
      return 0.5 * (detail::bleu_one_way(ta, tb) + detail::bleu_one_way(tb, ta));
    }
    case Agreement::rouge: {
      const auto ta = detail::split_ws(a);
      const auto tb = detail::split_ws(b);
      if (ta.empty() && tb.empty()) return 1.0;
      const auto lcs = detail::lcs_length(ta, tb);
      if (lcs == 0) return 0.0;
      // 2PR / (P + R) with P = lcs/|b|, R = lcs/|a| reduces to 2 lcs / (|a| + |b|).
      return 2.0 * static_cast<double>(lcs) / static_cast<double>(ta.size() + tb.size());
    }
  }
  return 0.0;
}

/// Mean agreement of responses[i] with every response, itself included.
inline double consistency(std::span<const std::string> responses, std::size_t i, Agreement kind) {
  if (i >= responses.size())
    throw ValidationError("consistency index " + std::to_string(i) + " out of range for " +
                          std::to_string(responses.size()) + " responses");
  double s = 0.0;
  for (const auto& r : responses) s += agreement(responses[i], r, kind);
  return s / static_cast<double>(responses.size());
}

// ---------------------------------------------------------------------------
// Cascades

struct CascadeConfig {
  int samples_per_model = 5;
  double consistency_threshold = 0.5;
  Agreement agreement = Agreement::exact_match;

  void validate() const {
    if (samples_per_model < 1) throw ConfigError("cascade samples_per_model must be >= 1");
  }
};

struct CascadeStep {
  std::string model;
  std::size_t best_index = 0;
  double consistency = 0.0;
  bool accepted = false;
};

struct CascadeResult {
  RoutingDecision decision;
  std::vector<CascadeStep> trace;
};

/// Models ordered by training-average call cost: mean prompt cost plus
/// average response cost. Ties keep spec order.
inline std::vector<std::string> cascade_order(const Dataset& train, const std::vector<ModelSpec>& specs) {
  double mean_input = 0.0;
  for (const auto& r : train.records) mean_input += static_cast<double>(r.input_tokens);
  mean_input /= static_cast<double>(std::max<std::size_t>(1, train.records.size()));
  std::vector<std::pair<double, std::string>> keyed;
  for (const auto& s : specs) {
    if (!s.avg_output_length) throw ValidationError("model '" + s.name + "' has no avg_output_length");
    keyed.emplace_back(mean_input * s.input_price_per_mtok + *s.avg_output_length * s.output_price_per_mtok, s.name);
  }
  std::stable_sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::string> out;
  for (auto& [c, n] : keyed) out.push_back(std::move(n));
  return out;
}

/// Invokes models cheapest-first, K samples each, and stops at the first model
/// whose most self-consistent response has consistency strictly above the
/// threshold; otherwise answers with the last model's most consistent response.
/// Every invoked model is charged (input once plus its K samples' outputs).
inline CascadeResult run_cascade(const QueryRecord& record, const std::vector<std::string>& order,
                                 const std::vector<ModelSpec>& specs, const CascadeConfig& cfg) {
  cfg.validate();
  if (order.empty()) throw ConfigError("cascade order is empty");
  const auto K = static_cast<std::size_t>(cfg.samples_per_model);
  CascadeResult out;
  double realized_micro = 0.0;
  double estimated_micro = 0.0;
  for (std::size_t step = 0; step < order.size(); ++step) {
    const auto& spec = find_spec(specs, order[step]);
    const auto& samples = record.samples_for(spec.name);
    if (samples.size() < K)
      throw ValidationError("record '" + record.id + "': cascade needs " + std::to_string(K) + " samples of '" +
                            spec.name + "', found " + std::to_string(samples.size()));
    std::vector<std::string> texts;
    double out_tokens = 0.0;
    for (std::size_t i = 0; i < K; ++i) {
      texts.push_back(samples[i].text);
      out_tokens += static_cast<double>(samples[i].output_tokens);
    }
    realized_micro += call_cost_micro(spec, out_tokens, record.input_tokens);
    estimated_micro += estimated_cost_micro(spec, cfg.samples_per_model, record.input_tokens);

    // Pairwise agreement matrix; every metric here is symmetric.
    std::vector<std::vector<double>> agree(K, std::vector<double>(K, 0.0));
    for (std::size_t i = 0; i < K; ++i)
      for (std::size_t j = i; j < K; ++j) agree[i][j] = agree[j][i] = agreement(texts[i], texts[j], cfg.agreement);
    std::size_t best = 0;
    double best_c = -1.0;
    for (std::size_t i = 0; i < K; ++i) {
      double c = 0.0;
      for (std::size_t j = 0; j < K; ++j) c += agree[i][j];
      c /= static_cast<double>(K);
      if (c > best_c) {
        best_c = c;
        best = i;
      }
    }
    const bool accept = best_c > cfg.consistency_threshold;
    out.trace.push_back(CascadeStep{spec.name, best, best_c, accept});
    if (accept || step + 1 == order.size()) {
      auto& d = out.decision;
      d.query_id = record.id;
      d.chosen_model = spec.name;
      d.sample_count = cfg.samples_per_model;
      d.estimated_cost = estimated_micro / 1e6;
      d.realized_cost = realized_micro / 1e6;
      d.selected_response_index = best;
      d.realized_gt_score = samples[best].gt_score;
      break;
    }
  }
  return out;
}

inline Policy cascade_policy(std::vector<std::string> order, const std::vector<ModelSpec>& specs,
                             const CascadeConfig& cfg) {
  return [order = std::move(order), specs, cfg](const QueryRecord& r) {
    return run_cascade(r, order, specs, cfg).decision;
  };
}

}  // namespace bestroute
