#pragma once

// Fixture builders and brute-force oracles shared by the unit tests and the
// acceptance binary. Oracles here avoid the library routines they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include <unistd.h>

#include "bestroute/core.hpp"
#include "bestroute/engine.hpp"
#include "bestroute/features.hpp"
#include "bestroute/match_router.hpp"
#include "bestroute/proxy_reward.hpp"

namespace testing_support {

using namespace bestroute;

inline ResponseSample sample(std::string text, std::int64_t tokens, double gt) {
  return ResponseSample{std::move(text), tokens, gt};
}

/// Record with `per_model` samples per model; gt scores from `gt(model, i)`.
inline QueryRecord make_record(const std::string& id, const std::string& query, const std::vector<std::string>& models,
                               std::size_t per_model, const std::function<double(std::size_t, std::size_t)>& gt,
                               std::int64_t tokens = 100, std::int64_t input = 50) {
  QueryRecord r;
  r.id = id;
  r.query_text = query;
  r.input_tokens = input;
  for (std::size_t k = 0; k < models.size(); ++k)
    for (std::size_t i = 0; i < per_model; ++i)
      r.samples[models[k]].push_back(
          sample("resp " + models[k] + " " + std::to_string(i), tokens, gt(k, i)));
  return r;
}

inline Dataset make_dataset(std::vector<QueryRecord> recs, std::vector<std::string> models, std::string ref) {
  return Dataset{std::move(recs), std::move(models), std::move(ref)};
}

/// Unique temporary directory removed on destruction.
struct TempDir {
  std::filesystem::path path;
  TempDir() {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("bestroute_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

// ---------------------------------------------------------------------------
// Oracles

/// Success fraction over every size-n subset by bitmask enumeration; the pick
/// in each subset is the first strictly-largest proxy score.
inline double enumerate_label(const std::vector<double>& proxy, const std::vector<double>& gt, double ref, std::size_t n) {
  const std::size_t m = proxy.size();
  long hits = 0, total = 0;
  for (std::uint64_t mask = 0; mask < (1ull << m); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcountll(mask)) != n) continue;
    std::size_t pick = m;
    for (std::size_t i = 0; i < m; ++i)
      if ((mask >> i) & 1ull)
        if (pick == m || proxy[i] > proxy[pick]) pick = i;
    hits += gt[pick] >= ref ? 1 : 0;
    ++total;
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

struct OracleDecision {
  std::string model;
  int n = 1;
  std::size_t index = 0;
  double estimated_cost = 0.0;
  bool fallback = false;
};

/// Brute-force routing: score every (model, n) cell from raw head parameters
/// and dense encodings, keep p >= t cells with enough stored samples, take the
/// lexicographic minimum of (cost, n, model position). Best-of-n over the
/// first n samples by dense proxy scores.
inline OracleDecision oracle_route(const QueryRecord& rec, const MultiHeadRouter& router, const ProxyRewardModel& proxy,
                                   const std::vector<ModelSpec>& specs, double t, int n_max) {
  const auto hq = encode_query(rec.query_text, router.feature_config);
  std::vector<std::tuple<double, int, std::size_t>> cells;
  const int N = std::min(n_max, router.n_max);
  for (std::size_t k = 0; k < router.model_names.size(); ++k) {
    const auto& name = router.model_names[k];
    const ModelSpec* spec = nullptr;
    for (const auto& s : specs)
      if (s.name == name) spec = &s;
    auto it = rec.samples.find(name);
    const std::size_t available = it == rec.samples.end() ? 0 : it->second.size();
    for (int n = 1; n <= N; ++n) {
      const auto& h = router.heads[k * static_cast<std::size_t>(router.n_max) + static_cast<std::size_t>(n - 1)];
      double dot = 0.0;
      for (std::size_t j = 0; j < hq.size(); ++j) dot += hq[j] * h.weights[j];
      const double p = 1.0 / (1.0 + std::exp(-(dot + h.bias)));
      if (!(p >= t) || static_cast<std::size_t>(n) > available) continue;
      const double cost = (n * *spec->avg_output_length * spec->output_price_per_mtok +
                           static_cast<double>(rec.input_tokens) * spec->input_price_per_mtok) /
                          1e6;
      cells.emplace_back(cost, n, k);
    }
  }
  OracleDecision d;
  if (cells.empty()) {
    for (const auto& s : specs)
      if (s.is_reference) {
        d.model = s.name;
        d.estimated_cost = (1 * *s.avg_output_length * s.output_price_per_mtok +
                            static_cast<double>(rec.input_tokens) * s.input_price_per_mtok) /
                           1e6;
      }
    d.fallback = true;
    return d;
  }
  const auto best = *std::min_element(cells.begin(), cells.end());
  d.estimated_cost = std::get<0>(best);
  d.n = std::get<1>(best);
  d.model = router.model_names[std::get<2>(best)];
  const auto& samples = rec.samples.at(d.model);
  double best_score = 0.0;
  for (int i = 0; i < d.n; ++i) {
    const auto x = encode_pair(rec.query_text, samples[static_cast<std::size_t>(i)].text, proxy.feature_config);
    double dot = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) dot += x[j] * proxy.weights[j];
    const double s = dot + proxy.bias;
    if (i == 0 || s > best_score) {
      best_score = s;
      d.index = static_cast<std::size_t>(i);
    }
  }
  return d;
}

/// One random routing problem: 2 to 5 models (first is the reference),
/// random prices from a small set so cost ties occur, random heads, and
/// per-model sample counts that sometimes fall below n.
struct RoutingFixture {
  QueryRecord record;
  std::vector<ModelSpec> specs;
  MultiHeadRouter router;
  ProxyRewardModel proxy;
  double threshold = 0.5;
  int n_max = 1;
};

inline RoutingFixture make_routing_fixture(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto pick = [&](int n) { return static_cast<int>(std::uniform_int_distribution<int>(0, n - 1)(rng)); };
  std::normal_distribution<double> nd;
  const double prices[] = {0.25, 0.5, 1.0, 2.0, 5.0};
  const double lengths[] = {50.0, 100.0, 150.0, 200.0};
  const int models = 2 + pick(4);
  RoutingFixture f;
  f.n_max = 1 + pick(5);
  f.router.feature_config.dim = 32;
  f.router.n_max = f.n_max;
  f.proxy = ProxyRewardModel::zeros(f.router.feature_config);
  for (auto& w : f.proxy.weights) w = nd(rng);
  f.record.id = "fx" + std::to_string(seed);
  f.record.query_text = "w" + std::to_string(pick(9)) + " w" + std::to_string(pick(9)) + " z" + std::to_string(pick(5));
  f.record.input_tokens = 10 + pick(200);
  for (int m = 0; m < models; ++m) {
    ModelSpec s;
    s.name = "m" + std::to_string(m);
    s.is_reference = m == 0;
    s.input_price_per_mtok = m == 0 ? 5.0 : prices[pick(5)];
    s.output_price_per_mtok = m == 0 ? 15.0 : prices[pick(5)];
    s.avg_output_length = lengths[pick(4)];
    f.specs.push_back(s);
    const int stored = m == 0 ? 1 + pick(3) : 1 + pick(6);
    for (int i = 0; i < stored; ++i)
      f.record.samples[s.name].push_back(
          sample("r" + std::to_string(pick(6)) + " t" + std::to_string(pick(6)), 20 + pick(300), std::tanh(nd(rng))));
    if (m > 0) {
      f.router.model_names.push_back(s.name);
      for (int n = 1; n <= f.n_max; ++n) {
        RouterHead h{std::vector<double>(32), 2.0 * nd(rng)};
        for (auto& w : h.weights) w = nd(rng);
        f.router.heads.push_back(h);
      }
    }
  }
  f.threshold = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  return f;
}

inline double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-7});
  return std::abs(analytic - numeric) / scale;
}

}  // namespace testing_support
