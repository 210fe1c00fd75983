#pragma once

// Cost-aware routing: estimate every (model, n) combination's cost, keep the
// ones whose match probability clears the threshold, take the cheapest, fall
// back to a single reference call when none qualifies, then run best-of-n
// against the stored samples. Also policy evaluation and threshold sweeps.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bestroute/core.hpp"
#include "bestroute/detail/parallel.hpp"
#include "bestroute/detail/rng.hpp"
#include "bestroute/match_router.hpp"
#include "bestroute/proxy_reward.hpp"

namespace bestroute {

enum class SubsetMode { prefix, seeded_random };

struct EngineConfig {
  double threshold = 0.5;
  int n_max = 5;
  SubsetMode subset_mode = SubsetMode::prefix;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("threshold must lie in [0, 1]");
    if (n_max < 1) throw ConfigError("n_max must be >= 1");
  }
};

struct RoutingDecision {
  std::string query_id;
  std::string chosen_model;
  int sample_count = 1;
  double estimated_cost = 0.0;  // USD
  double realized_cost = 0.0;   // USD
  std::size_t selected_response_index = 0;
  double realized_gt_score = 0.0;
  bool fallback_used = false;
  std::size_t excluded_cells = 0;  // cells dropped for lack of stored samples

  bool operator==(const RoutingDecision&) const = default;
};

struct TradeoffPoint {
  std::optional<double> threshold;  // absent for parameter-free policies
  double total_cost = 0.0;          // USD
  double mean_quality = 0.0;
  std::optional<double> cost_reduction_pct;  // absent when the reference cost is 0
  std::optional<double> quality_drop_pct;    // absent when the reference quality is 0

  bool operator==(const TradeoffPoint&) const = default;
};

/// n * avg_output_length * output price + input_tokens * input price, in USD.
/// Input is charged once however many samples are drawn.
inline double estimate_cost(const ModelSpec& spec, int n, std::int64_t input_tokens) {
  return estimated_cost_micro(spec, n, input_tokens) / 1e6;
}

inline const ModelSpec& reference_spec(const std::vector<ModelSpec>& specs) {
  for (const auto& s : specs)
    if (s.is_reference) return s;
  throw ConfigError("no reference model among the model specs");
}

// ---------------------------------------------------------------------------
// Combination selection

struct CellChoice {
  bool fallback = true;
  std::size_t k = 0;
  int n = 1;
  double estimated_cost = 0.0;  // USD; unset (0) on fallback
};

/// `probs[k][n-1]` and `costs[k][n-1]`; a NaN cost marks an unavailable cell.
/// Cheapest qualifying cell wins; ties go to smaller n, then lower k.
inline CellChoice choose_cell(const MatchMatrix& probs, const std::vector<std::vector<double>>& costs, double threshold) {
  CellChoice best;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    for (std::size_t j = 0; j < probs[k].size(); ++j) {
      const double c = costs[k][j];
      if (std::isnan(c) || !(probs[k][j] >= threshold)) continue;
      const int n = static_cast<int>(j) + 1;
      const bool better = best.fallback || c < best.estimated_cost ||
                          (c == best.estimated_cost && (n < best.n || (n == best.n && k < best.k)));
      if (better) best = CellChoice{false, k, n, c};
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Execution against stored samples

namespace detail {

inline double realized_cost_usd(const ModelSpec& spec, std::span<const ResponseSample> samples,
                                std::span<const std::size_t> drawn, std::int64_t input_tokens) {
  double out_tokens = 0.0;
  for (std::size_t i : drawn) out_tokens += static_cast<double>(samples[i].output_tokens);
  return call_cost_micro(spec, out_tokens, input_tokens) / 1e6;
}

inline std::vector<std::size_t> drawn_indices(const QueryRecord& record, const std::string& model, int n,
                                              std::size_t available, SubsetMode mode, std::uint64_t seed) {
  if (mode == SubsetMode::prefix) {
    std::vector<std::size_t> idx(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return idx;
  }
  Rng rng(derive_seed(seed, std::string_view("draw"), record.id, model, static_cast<std::uint64_t>(n)));
  return rng.sample_indices(available, static_cast<std::size_t>(n));
}

}  // namespace detail

/// A single reference call answered by the designated reference response.
inline RoutingDecision reference_decision(const QueryRecord& record, const ModelSpec& ref) {
  const auto& sample = reference_response(record, ref.name);
  RoutingDecision d;
  d.query_id = record.id;
  d.chosen_model = ref.name;
  d.sample_count = 1;
  d.estimated_cost = estimate_cost(ref, 1, record.input_tokens);
  d.realized_cost = call_cost_micro(ref, static_cast<double>(sample.output_tokens), record.input_tokens) / 1e6;
  d.selected_response_index = 0;
  d.realized_gt_score = sample.gt_score;
  return d;
}

/// Draws n samples of `spec.name` (prefix or seeded subset), returns the one
/// with the highest score in `scores` (ties to the lowest stored index), and
/// charges input once plus every drawn sample's actual output tokens.
inline RoutingDecision execute_best_of_n(const QueryRecord& record, const ModelSpec& spec, int n,
                                         std::span<const double> scores, SubsetMode mode, std::uint64_t seed) {
  const auto& samples = record.samples_for(spec.name);
  if (n < 1 || static_cast<std::size_t>(n) > samples.size())
    throw ValidationError("record '" + record.id + "': cannot draw " + std::to_string(n) + " samples of '" +
                          spec.name + "' (" + std::to_string(samples.size()) + " stored)");
  const auto drawn = detail::drawn_indices(record, spec.name, n, samples.size(), mode, seed);
  const std::size_t pick = argmax_among(scores, drawn);
  RoutingDecision d;
  d.query_id = record.id;
  d.chosen_model = spec.name;
  d.sample_count = n;
  d.estimated_cost = estimate_cost(spec, n, record.input_tokens);
  d.realized_cost = detail::realized_cost_usd(spec, samples, drawn, record.input_tokens);
  d.selected_response_index = pick;
  d.realized_gt_score = samples[pick].gt_score;
  return d;
}

// ---------------------------------------------------------------------------
// Prepared queries: everything threshold-independent, computed once

struct PreparedQuery {
  const QueryRecord* record = nullptr;
  MatchMatrix probs;                            // [k][n-1]
  std::vector<std::vector<double>> costs;       // USD, NaN when unavailable
  std::vector<std::vector<double>> proxy_scores;  // [k][sample], empty when model absent
  std::size_t excluded_cells = 0;
};

inline PreparedQuery prepare_query(const QueryRecord& record, const MultiHeadRouter& router,
                                   const ProxyRewardModel& proxy, const std::vector<ModelSpec>& specs, int n_max) {
  PreparedQuery q;
  q.record = &record;
  const int N = std::min(n_max, router.n_max);
  const auto hq = encode_query_sparse(record.query_text, router.feature_config);
  const std::size_t K = router.num_models();
  q.probs.assign(K, std::vector<double>(static_cast<std::size_t>(N)));
  q.costs.assign(K, std::vector<double>(static_cast<std::size_t>(N), std::numeric_limits<double>::quiet_NaN()));
  q.proxy_scores.resize(K);
  for (std::size_t k = 0; k < K; ++k) {
    const auto& model = router.model_names[k];
    const auto& spec = find_spec(specs, model);
    auto it = record.samples.find(model);
    const std::size_t available = it == record.samples.end() ? 0 : it->second.size();
    if (available > 0) q.proxy_scores[k] = proxy.score_all(record.query_text, it->second);
    for (int n = 1; n <= N; ++n) {
      const auto j = static_cast<std::size_t>(n - 1);
      q.probs[k][j] = predict_match_prob_encoded(router, hq, k, n);
      if (static_cast<std::size_t>(n) <= available) {
        q.costs[k][j] = estimate_cost(spec, n, record.input_tokens);
      } else {
        ++q.excluded_cells;
      }
    }
  }
  return q;
}

inline RoutingDecision route_prepared(const PreparedQuery& q, const MultiHeadRouter& router,
                                      const std::vector<ModelSpec>& specs, const EngineConfig& cfg) {
  const auto choice = choose_cell(q.probs, q.costs, cfg.threshold);
  RoutingDecision d;
  if (choice.fallback) {
    d = reference_decision(*q.record, reference_spec(specs));
    d.fallback_used = true;
  } else {
    d = execute_best_of_n(*q.record, find_spec(specs, router.model_names[choice.k]), choice.n,
                          q.proxy_scores[choice.k], cfg.subset_mode, cfg.seed);
  }
  d.excluded_cells = q.excluded_cells;
  return d;
}

/// Full routing of one query with the trained router and proxy.
inline RoutingDecision route(const QueryRecord& record, const MultiHeadRouter& router, const ProxyRewardModel& proxy,
                             const std::vector<ModelSpec>& specs, const EngineConfig& cfg) {
  cfg.validate();
  return route_prepared(prepare_query(record, router, proxy, specs, cfg.n_max), router, specs, cfg);
}

// ---------------------------------------------------------------------------
// Policy evaluation

using Policy = std::function<RoutingDecision(const QueryRecord&)>;

inline Policy always_reference_policy(const std::vector<ModelSpec>& specs) {
  const ModelSpec ref = reference_spec(specs);
  return [ref](const QueryRecord& r) { return reference_decision(r, ref); };
}

/// Always answers with the first stored sample of `model`.
inline Policy always_model_policy(const std::vector<ModelSpec>& specs, const std::string& model) {
  const ModelSpec spec = find_spec(specs, model);
  if (spec.is_reference) return always_reference_policy(specs);
  return [spec](const QueryRecord& r) {
    const std::vector<double> first{0.0};
    return execute_best_of_n(r, spec, 1, first, SubsetMode::prefix, 0);
  };
}

struct Totals {
  double total_cost = 0.0;
  double mean_quality = 0.0;
};

/// Sums accumulated in record order for bit-reproducibility.
inline Totals totals_of(std::span<const RoutingDecision> decisions) {
  Totals t;
  for (const auto& d : decisions) {
    t.total_cost += d.realized_cost;
    t.mean_quality += d.realized_gt_score;
  }
  if (!decisions.empty()) t.mean_quality /= static_cast<double>(decisions.size());
  return t;
}

inline TradeoffPoint make_point(const Totals& policy, const Totals& reference, std::optional<double> threshold) {
  TradeoffPoint p;
  p.threshold = threshold;
  p.total_cost = policy.total_cost;
  p.mean_quality = policy.mean_quality;
  if (reference.total_cost != 0.0)
    p.cost_reduction_pct = 100.0 * (reference.total_cost - policy.total_cost) / reference.total_cost;
  if (reference.mean_quality != 0.0)
    p.quality_drop_pct = 100.0 * (reference.mean_quality - policy.mean_quality) / reference.mean_quality;
  return p;
}

inline Totals reference_totals(const Dataset& test, const std::vector<ModelSpec>& specs) {
  const auto ref = always_reference_policy(specs);
  std::vector<RoutingDecision> d;
  d.reserve(test.records.size());
  for (const auto& r : test.records) d.push_back(ref(r));
  return totals_of(d);
}

struct PolicyRun {
  std::vector<RoutingDecision> decisions;
  TradeoffPoint point;
};

/// Applies `policy` to every record and compares against always-reference on
/// the same records.
inline PolicyRun run_policy(const Dataset& test, const Policy& policy, const std::vector<ModelSpec>& specs,
                            std::optional<double> threshold = std::nullopt) {
  if (test.records.empty()) throw ValidationError("run_policy needs a nonempty test set");
  PolicyRun run;
  run.decisions.resize(test.records.size());
  detail::parallel_for(test.records.size(), [&](std::size_t i) { run.decisions[i] = policy(test.records[i]); });
  run.point = make_point(totals_of(run.decisions), reference_totals(test, specs), threshold);
  return run;
}

// ---------------------------------------------------------------------------
// Threshold sweeps

/// Prepares every test query once so many thresholds can be evaluated cheaply.
class BestRouteEvaluator {
 public:
  BestRouteEvaluator(const Dataset& test, const MultiHeadRouter& router, const ProxyRewardModel& proxy,
                     std::vector<ModelSpec> specs, EngineConfig cfg)
      : router_(&router), specs_(std::move(specs)), cfg_(cfg) {
    cfg_.validate();
    if (test.records.empty()) throw ValidationError("threshold evaluation needs a nonempty test set");
    prepared_.resize(test.records.size());
    detail::parallel_for(test.records.size(), [&](std::size_t i) {
      prepared_[i] = prepare_query(test.records[i], router, proxy, specs_, cfg_.n_max);
    });
    reference_ = reference_totals(test, specs_);
  }

  std::vector<RoutingDecision> decisions(double threshold) const {
    EngineConfig c = cfg_;
    c.threshold = threshold;
    c.validate();
    std::vector<RoutingDecision> out(prepared_.size());
    for (std::size_t i = 0; i < prepared_.size(); ++i) out[i] = route_prepared(prepared_[i], *router_, specs_, c);
    return out;
  }

  TradeoffPoint point(double threshold) const {
    return make_point(totals_of(decisions(threshold)), reference_, threshold);
  }

  const Totals& reference() const { return reference_; }
  const std::vector<ModelSpec>& specs() const { return specs_; }

 private:
  const MultiHeadRouter* router_;
  std::vector<ModelSpec> specs_;
  EngineConfig cfg_;
  std::vector<PreparedQuery> prepared_;
  Totals reference_;
};

/// One point per threshold, sorted by threshold.
inline std::vector<TradeoffPoint> sweep_thresholds(const BestRouteEvaluator& eval, std::vector<double> grid) {
  if (grid.empty()) throw ConfigError("threshold grid is empty");
  for (double t : grid)
    if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("threshold grid values must lie in [0, 1]");
  std::sort(grid.begin(), grid.end());
  std::vector<TradeoffPoint> out;
  for (double t : grid) out.push_back(eval.point(t));
  return out;
}

inline std::vector<TradeoffPoint> sweep_thresholds(const Dataset& test, const MultiHeadRouter& router,
                                                   const ProxyRewardModel& proxy, const std::vector<ModelSpec>& specs,
                                                   const std::vector<double>& grid, const EngineConfig& cfg = {}) {
  return sweep_thresholds(BestRouteEvaluator(test, router, proxy, specs, cfg), grid);
}

class UnachievableTarget : public Error {
 public:
  UnachievableTarget(double target, double lo, double hi)
      : Error("unachievable", "cost reduction target " + std::to_string(target) + "% outside achievable interval [" +
                                  std::to_string(lo) + ", " + std::to_string(hi) + "]%"),
        low(lo), high(hi) {}
  double low;
  double high;
};

struct ThresholdSearch {
  double parameter = 0.0;
  TradeoffPoint point;
  int iterations = 0;
  bool converged = false;
  bool non_monotone = false;  // an evaluated reduction fell outside its bracket
};

/// Bisection on a parameter whose cost reduction is (expected to be)
/// non-increasing from `lo` to `hi`. Stops when |reduction - target| <= tol
/// or after 40 iterations; without convergence the closest point is returned.
inline ThresholdSearch find_parameter_for_reduction(const std::function<TradeoffPoint(double)>& eval, double target,
                                                    double tol, double lo, double hi) {
  auto reduction = [](const TradeoffPoint& p) {
    if (!p.cost_reduction_pct) throw Error("undefined", "cost reduction undefined (reference cost is 0)");
    return *p.cost_reduction_pct;
  };
  const TradeoffPoint p_lo = eval(lo);
  const TradeoffPoint p_hi = eval(hi);
  const double r_lo = reduction(p_lo);
  const double r_hi = reduction(p_hi);
  ThresholdSearch best;
  bool have_best = false;
  auto consider = [&](double param, const TradeoffPoint& p) {
    if (!have_best || std::abs(reduction(p) - target) < std::abs(reduction(best.point) - target)) {
      best.parameter = param;
      best.point = p;
      have_best = true;
    }
  };
  consider(lo, p_lo);
  consider(hi, p_hi);
  if (std::abs(r_lo - target) <= tol) return ThresholdSearch{lo, p_lo, 0, true, false};
  if (std::abs(r_hi - target) <= tol) return ThresholdSearch{hi, p_hi, 0, true, false};
  if (target > r_lo || target < r_hi) throw UnachievableTarget(target, std::min(r_lo, r_hi), std::max(r_lo, r_hi));

  double a = lo, b = hi, ra = r_lo, rb = r_hi;
  bool non_monotone = r_lo < r_hi;
  for (int it = 1; it <= 40; ++it) {
    const double mid = 0.5 * (a + b);
    const TradeoffPoint p = eval(mid);
    const double r = reduction(p);
    if (r > ra || r < rb) non_monotone = true;
    consider(mid, p);
    if (std::abs(r - target) <= tol) return ThresholdSearch{mid, p, it, true, non_monotone};
    if (r > target) {
      a = mid;
      ra = r;
    } else {
      b = mid;
      rb = r;
    }
    best.iterations = it;
  }
  best.converged = false;
  best.non_monotone = non_monotone;
  return best;
}

inline ThresholdSearch find_threshold_for_reduction(const BestRouteEvaluator& eval, double target_pct, double tol) {
  return find_parameter_for_reduction([&](double t) { return eval.point(t); }, target_pct, tol, 0.0, 1.0);
}

}  // namespace bestroute
