#pragma once

// Fast runtime invariant checks behind `bestroute selfcheck`. Each check
// compares the library against a small independent computation.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "bestroute/artifact.hpp"
#include "bestroute/baselines.hpp"
#include "bestroute/engine.hpp"
#include "bestroute/match_router.hpp"
#include "bestroute/proxy_reward.hpp"
#include "bestroute/synth.hpp"

namespace bestroute {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

namespace detail {

inline CheckResult check_routing(std::uint64_t seed) {
  Rng rng(derive_seed(seed, std::string_view("selfcheck-routing")));
  for (int f = 0; f < 200; ++f) {
    const std::size_t K = 2 + rng.below(4);
    const std::size_t N = 1 + rng.below(5);
    MatchMatrix probs(K, std::vector<double>(N));
    std::vector<std::vector<double>> costs(K, std::vector<double>(N));
    for (auto& row : probs)
      for (auto& p : row) p = static_cast<double>(rng.below(11)) / 10.0;
    for (auto& row : costs)
      for (auto& c : row) c = static_cast<double>(1 + rng.below(6));
    const double t = static_cast<double>(rng.below(11)) / 10.0;
    const auto got = choose_cell(probs, costs, t);
    // every qualifying cell, sorted by (cost, n, k)
    std::vector<std::tuple<double, std::size_t, std::size_t>> cells;
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t j = 0; j < N; ++j)
        if (probs[k][j] >= t) cells.emplace_back(costs[k][j], j + 1, k);
    std::sort(cells.begin(), cells.end());
    const bool ok = cells.empty() ? got.fallback
                                  : !got.fallback && got.estimated_cost == std::get<0>(cells[0]) &&
                                        static_cast<std::size_t>(got.n) == std::get<1>(cells[0]) &&
                                        got.k == std::get<2>(cells[0]);
    if (!ok) return {"routing_enumeration", false, "fixture " + std::to_string(f) + " disagrees"};
  }
  return {"routing_enumeration", true, "200 fixtures"};
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1e-8, std::abs(a) + std::abs(b)); }

inline CheckResult check_gradients(std::uint64_t seed) {
  Rng rng(derive_seed(seed, std::string_view("selfcheck-grad")));
  const double eps = 1e-5;
  double worst = 0.0;
  for (int inst = 0; inst < 10; ++inst) {
    const std::size_t dim = 6;
    std::vector<SparseVector> xs;
    std::vector<double> ys;
    for (int i = 0; i < 5; ++i) {
      std::vector<std::pair<std::uint32_t, double>> e;
      for (std::uint32_t j = 0; j < dim; ++j) e.emplace_back(j, rng.normal());
      xs.push_back(SparseVector::from_entries(std::move(e)));
      ys.push_back(rng.uniform());
    }
    std::vector<double> w(dim);
    for (auto& v : w) v = rng.normal(0.0, 0.5);
    const auto g = ranking_loss_gradient(w, xs);
    const auto h = head_cross_entropy_gradient(w, 0.3, xs, ys);
    for (std::size_t j = 0; j < dim; ++j) {
      auto wp = w, wm = w;
      wp[j] += eps;
      wm[j] -= eps;
      const double fd = (ranking_loss_from_differences(wp, xs) - ranking_loss_from_differences(wm, xs)) / (2 * eps);
      const double fd2 = (head_cross_entropy(wp, 0.3, xs, ys) - head_cross_entropy(wm, 0.3, xs, ys)) / (2 * eps);
      worst = std::max({worst, rel_err(fd, g[j]), rel_err(fd2, h.weights[j])});
    }
  }
  return {"loss_gradients", worst <= 1e-4, "max relative error " + std::to_string(worst)};
}

inline CheckResult check_labels(std::uint64_t seed) {
  Rng rng(derive_seed(seed, std::string_view("selfcheck-labels")));
  for (int f = 0; f < 50; ++f) {
    const std::size_t m = 3 + rng.below(5);
    std::vector<double> proxy(m), gt(m);
    for (std::size_t i = 0; i < m; ++i) {
      proxy[i] = static_cast<double>(rng.below(4));
      gt[i] = rng.uniform();
    }
    const double ref = rng.uniform();
    for (std::size_t n = 1; n <= m; ++n) {
      int hits = 0, total = 0;
      for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
        if (static_cast<std::size_t>(std::popcount(mask)) != n) continue;
        std::size_t pick = m;
        for (std::size_t i = 0; i < m; ++i)
          if ((mask >> i) & 1u)
            if (pick == m || proxy[i] > proxy[pick]) pick = i;
        hits += gt[pick] >= ref;
        ++total;
      }
      if (std::abs(match_label_exact(proxy, gt, ref, n) - static_cast<double>(hits) / total) > 1e-12)
        return {"label_enumeration", false, "fixture " + std::to_string(f) + " n=" + std::to_string(n)};
    }
  }
  return {"label_enumeration", true, "50 fixtures"};
}

inline CheckResult check_prefix_monotone(std::uint64_t seed) {
  SynthConfig sc;
  sc.seed = seed;
  sc.num_queries = 200;
  const auto d = generate_synthetic(sc);
  for (const auto& r : d.records) {
    for (const auto& [model, samples] : r.samples) {
      std::vector<double> gt;
      for (const auto& s : samples) gt.push_back(s.gt_score);
      double prev = -2.0;
      for (std::size_t n = 1; n <= samples.size(); ++n) {
        const double v = gt[argmax_prefix(gt, n)];
        if (v < prev) return {"oracle_best_of_n_monotone", false, "query " + r.id + " model " + model};
        prev = v;
      }
    }
  }
  return {"oracle_best_of_n_monotone", true, "200 queries"};
}

inline CheckResult check_costs() {
  ModelSpec phi{"phi-3-mini", 0.3, 0.9, 150.0, false};
  ModelSpec gpt{"gpt-4o", 5.0, 15.0, 200.0, true};
  const bool ok = estimate_cost(phi, 3, 100) == 4.35e-4 && estimate_cost(gpt, 1, 100) == 3.5e-3;
  return {"cost_examples", ok, "phi-3-mini x3 and gpt-4o x1"};
}

inline CheckResult check_metrics(std::uint64_t seed) {
  if (agreement("the cat sat", "the dog sat", Agreement::rouge) != 2.0 / 3.0)
    return {"text_metrics", false, "rouge-l example"};
  Rng rng(derive_seed(seed, std::string_view("selfcheck-metrics")));
  const char* words[] = {"a", "b", "c", "d", "e"};
  for (int i = 0; i < 300; ++i) {
    std::string a, b;
    for (std::uint64_t w = rng.below(6); w > 0; --w) a += std::string(words[rng.below(5)]) + " ";
    for (std::uint64_t w = rng.below(6); w > 0; --w) b += std::string(words[rng.below(5)]) + " ";
    for (auto kind : {Agreement::exact_match, Agreement::bleu, Agreement::rouge}) {
      const double v = agreement(a, b, kind);
      if (!(v >= 0.0 && v <= 1.0)) return {"text_metrics", false, "out of range"};
      if (agreement(a, a, kind) != 1.0) return {"text_metrics", false, "identity below 1"};
    }
  }
  return {"text_metrics", true, "300 random pairs"};
}

inline CheckResult check_round_trip(std::uint64_t seed) {
  SynthConfig sc;
  sc.seed = seed;
  sc.num_queries = 60;
  const auto d = generate_synthetic(sc);
  FeatureConfig fc;
  fc.dim = 256;
  SgdConfig cfg;
  cfg.epochs = 1;
  const auto proxy = train_proxy(d, cfg, fc);
  const auto back = deserialize_artifact<ProxyRewardModel>(serialize_artifact(proxy));
  for (const auto& r : d.records)
    for (const auto& s : r.samples.begin()->second)
      if (proxy.score(r.query_text, s.text) != back.score(r.query_text, s.text))
        return {"artifact_round_trip", false, "score differs on " + r.id};
  return {"artifact_round_trip", serialize_artifact(back) == serialize_artifact(proxy), "proxy artifact"};
}

}  // namespace detail

inline std::vector<CheckResult> run_selfcheck(std::uint64_t seed = 0) {
  std::vector<CheckResult> out;
  const std::vector<std::function<CheckResult()>> checks = {
      [&] { return detail::check_routing(seed); },       [&] { return detail::check_gradients(seed); },
      [&] { return detail::check_labels(seed); },        [&] { return detail::check_prefix_monotone(seed); },
      [] { return detail::check_costs(); },              [&] { return detail::check_metrics(seed); },
      [&] { return detail::check_round_trip(seed); },
  };
  for (const auto& c : checks) {
    try {
      out.push_back(c());
    } catch (const std::exception& e) {
      out.push_back({"exception", false, e.what()});
    }
  }
  return out;
}

}  // namespace bestroute
