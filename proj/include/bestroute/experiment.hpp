#pragma once

// Experiment configuration and the steps behind each CLI command. Every step
// reads inputs from and writes outputs into one output directory, so a
// pipeline is a sequence of commands over the same config.

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bestroute/artifact.hpp"
#include "bestroute/baselines.hpp"
#include "bestroute/core.hpp"
#include "bestroute/detail/io.hpp"
#include "bestroute/engine.hpp"
#include "bestroute/features.hpp"
#include "bestroute/match_router.hpp"
#include "bestroute/proxy_reward.hpp"
#include "bestroute/report.hpp"
#include "bestroute/synth.hpp"

namespace bestroute {

namespace fs = std::filesystem;

inline std::vector<double> even_grid(int steps) {
  std::vector<double> g;
  for (int i = 0; i <= steps; ++i) g.push_back(static_cast<double>(i) / steps);
  return g;
}

struct BaselineSettings {
  bool nclass = true;
  bool nlabel = true;
  bool clustering = true;
  bool cascade = true;
  std::size_t clusters = 50;
  double nlabel_delta = 0.0;
  ClassifierTrainConfig classifier;
  CascadeConfig cascade_config;
  std::vector<double> nlabel_grid = even_grid(20);
  std::vector<double> cascade_grid = even_grid(10);
};

struct ExperimentConfig {
  std::optional<fs::path> dataset;  // absent: synthetic data from gen-data
  std::optional<std::string> reference;
  SynthConfig synthetic;
  std::optional<fs::path> price_sheet;
  SplitSpec split;
  FeatureConfig features;
  SgdConfig proxy;
  RouterTrainConfig router;
  EngineConfig engine;
  BaselineSettings baselines;
  std::vector<double> sweep_grid = even_grid(20);
  std::vector<double> targets{10.0, 20.0, 40.0, 60.0};
  double target_tol = 1.0;
  fs::path out_dir = "out";

  void validate() const {
    split.validate();
    features.validate();
    proxy.validate();
    router.validate();
    engine.validate();
    baselines.classifier.validate();
    baselines.cascade_config.validate();
    if (!dataset) synthetic.validate();
    if (baselines.clusters < 1) throw ConfigError("baselines.clusters must be >= 1");
    if (sweep_grid.empty()) throw ConfigError("sweep_grid is empty");
    for (double t : sweep_grid)
      if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("sweep_grid values must lie in [0, 1]");
    if (!(target_tol > 0.0)) throw ConfigError("target_tol must be positive");
  }

  /// Overrides every seed in the config.
  void set_seed(std::uint64_t s) {
    synthetic.seed = s;
    split.seed = s;
    proxy.seed = s;
    router.seed = s;
    engine.seed = s;
    baselines.classifier.seed = s;
  }
};

namespace detail {

inline void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* key : keys) ok = ok || k == key;
    if (!ok) throw ConfigError(where + ": unknown key '" + k + "'");
  }
}

template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline SynthConfig synth_from_json(const json& j) {
  reject_unknown(j,
                 {"seed", "num_queries", "num_models", "samples_per_model", "models", "difficulty_mean",
                  "difficulty_sd", "difficulty_levels", "noise_scale", "marker_noise", "mean_input_tokens",
                  "filler_vocabulary"},
                 "synthetic");
  SynthConfig c;
  read_opt(j, "seed", c.seed);
  read_opt(j, "num_queries", c.num_queries);
  read_opt(j, "num_models", c.num_models);
  read_opt(j, "samples_per_model", c.samples_per_model);
  read_opt(j, "difficulty_mean", c.difficulty_mean);
  read_opt(j, "difficulty_sd", c.difficulty_sd);
  read_opt(j, "difficulty_levels", c.difficulty_levels);
  read_opt(j, "noise_scale", c.noise_scale);
  read_opt(j, "marker_noise", c.marker_noise);
  read_opt(j, "mean_input_tokens", c.mean_input_tokens);
  read_opt(j, "filler_vocabulary", c.filler_vocabulary);
  if (j.contains("models")) {
    for (const auto& m : j.at("models")) {
      reject_unknown(m, {"name", "skill", "gap", "input", "output", "mean_output_tokens", "output_tokens_sigma"},
                     "synthetic.models");
      SynthModel s;
      s.name = m.at("name").get<std::string>();
      read_opt(m, "skill", s.skill);
      read_opt(m, "gap", s.gap);
      read_opt(m, "input", s.input_price_per_mtok);
      read_opt(m, "output", s.output_price_per_mtok);
      read_opt(m, "mean_output_tokens", s.mean_output_tokens);
      read_opt(m, "output_tokens_sigma", s.output_tokens_sigma);
      c.models.push_back(std::move(s));
    }
    if (!j.contains("num_models")) c.num_models = c.models.size();
  }
  return c;
}

}  // namespace detail

/// Relative paths inside the config resolve against `base_dir`.
inline ExperimentConfig experiment_config_from_json(const json& j, const fs::path& base_dir = {}) {
  using detail::read_opt;
  ExperimentConfig c;
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base_dir / p; };
  try {
    detail::reject_unknown(j,
                           {"dataset", "reference", "synthetic", "price_sheet", "split", "features", "proxy", "router",
                            "engine", "baselines", "sweep_grid", "targets", "target_tol", "out_dir"},
                           "config");
    if (j.contains("dataset") && !j.at("dataset").is_null()) c.dataset = resolve(j.at("dataset").get<std::string>());
    if (j.contains("reference") && !j.at("reference").is_null()) c.reference = j.at("reference").get<std::string>();
    if (j.contains("synthetic")) c.synthetic = detail::synth_from_json(j.at("synthetic"));
    if (j.contains("price_sheet") && !j.at("price_sheet").is_null())
      c.price_sheet = resolve(j.at("price_sheet").get<std::string>());
    if (j.contains("split")) {
      const auto& s = j.at("split");
      detail::reject_unknown(s, {"train", "valid", "test", "seed"}, "split");
      read_opt(s, "train", c.split.train_fraction);
      read_opt(s, "valid", c.split.valid_fraction);
      read_opt(s, "test", c.split.test_fraction);
      read_opt(s, "seed", c.split.seed);
    }
    if (j.contains("features")) c.features = feature_config_from_json(j.at("features"));
    if (j.contains("proxy")) {
      const auto& s = j.at("proxy");
      detail::reject_unknown(s, {"epochs", "learning_rate", "l2", "seed", "shuffle"}, "proxy");
      read_opt(s, "epochs", c.proxy.epochs);
      read_opt(s, "learning_rate", c.proxy.learning_rate);
      read_opt(s, "l2", c.proxy.l2);
      read_opt(s, "seed", c.proxy.seed);
      read_opt(s, "shuffle", c.proxy.shuffle);
    }
    if (j.contains("router")) {
      const auto& s = j.at("router");
      detail::reject_unknown(s, {"epochs", "learning_rate", "l2", "seed", "label_mc_samples", "label_exact_cutoff"},
                             "router");
      read_opt(s, "epochs", c.router.epochs);
      read_opt(s, "learning_rate", c.router.learning_rate);
      read_opt(s, "l2", c.router.l2);
      read_opt(s, "seed", c.router.seed);
      read_opt(s, "label_mc_samples", c.router.label_mc_samples);
      read_opt(s, "label_exact_cutoff", c.router.label_exact_cutoff);
    }
    if (j.contains("engine")) {
      const auto& s = j.at("engine");
      detail::reject_unknown(s, {"threshold", "n_max", "subset_mode", "seed"}, "engine");
      read_opt(s, "threshold", c.engine.threshold);
      read_opt(s, "n_max", c.engine.n_max);
      read_opt(s, "seed", c.engine.seed);
      if (s.contains("subset_mode")) {
        const auto m = s.at("subset_mode").get<std::string>();
        if (m == "prefix") c.engine.subset_mode = SubsetMode::prefix;
        else if (m == "seeded_random") c.engine.subset_mode = SubsetMode::seeded_random;
        else throw ConfigError("engine.subset_mode must be 'prefix' or 'seeded_random'");
      }
    }
    if (j.contains("baselines")) {
      const auto& s = j.at("baselines");
      detail::reject_unknown(s,
                             {"nclass", "nlabel", "clustering", "cascade", "clusters", "nlabel_delta", "classifier",
                              "cascade_samples", "cascade_threshold", "agreement", "nlabel_grid", "cascade_grid"},
                             "baselines");
      auto& b = c.baselines;
      read_opt(s, "nclass", b.nclass);
      read_opt(s, "nlabel", b.nlabel);
      read_opt(s, "clustering", b.clustering);
      read_opt(s, "cascade", b.cascade);
      read_opt(s, "clusters", b.clusters);
      read_opt(s, "nlabel_delta", b.nlabel_delta);
      read_opt(s, "cascade_samples", b.cascade_config.samples_per_model);
      read_opt(s, "cascade_threshold", b.cascade_config.consistency_threshold);
      if (s.contains("agreement")) b.cascade_config.agreement = parse_agreement(s.at("agreement").get<std::string>());
      read_opt(s, "nlabel_grid", b.nlabel_grid);
      read_opt(s, "cascade_grid", b.cascade_grid);
      if (s.contains("classifier")) {
        const auto& k = s.at("classifier");
        detail::reject_unknown(k, {"epochs", "learning_rate", "l2", "seed"}, "baselines.classifier");
        read_opt(k, "epochs", b.classifier.epochs);
        read_opt(k, "learning_rate", b.classifier.learning_rate);
        read_opt(k, "l2", b.classifier.l2);
        read_opt(k, "seed", b.classifier.seed);
      }
    }
    read_opt(j, "sweep_grid", c.sweep_grid);
    read_opt(j, "targets", c.targets);
    read_opt(j, "target_tol", c.target_tol);
    if (j.contains("out_dir")) c.out_dir = resolve(j.at("out_dir").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

inline ExperimentConfig load_experiment_config(const fs::path& path) {
  const auto text = detail::read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": parse error at byte " + std::to_string(e.byte));
  }
  return experiment_config_from_json(j, path.parent_path());
}

// ---------------------------------------------------------------------------

/// Lazily loaded inputs of one experiment, shared by the command steps.
class Experiment {
 public:
  explicit Experiment(ExperimentConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  const ExperimentConfig& config() const { return cfg_; }
  fs::path out(const std::string& name) const { return cfg_.out_dir / name; }

  fs::path dataset_path() const { return cfg_.dataset ? *cfg_.dataset : out("dataset.jsonl"); }

  const Dataset& dataset() {
    if (!dataset_) {
      require(dataset_path(), "gen-data");
      dataset_ = load_dataset(dataset_path(), cfg_.reference);
    }
    return *dataset_;
  }

  const DatasetSplits& splits() {
    if (!splits_) splits_ = split_dataset(dataset(), cfg_.split);
    return *splits_;
  }

  const PriceSheet& prices() {
    if (!prices_) {
      if (cfg_.price_sheet) {
        prices_ = load_price_sheet(*cfg_.price_sheet);
      } else if (cfg_.dataset) {
        prices_ = default_price_sheet();
      } else {
        require(out("prices.json"), "gen-data");
        prices_ = load_price_sheet(out("prices.json"));
      }
    }
    return *prices_;
  }

  const std::vector<ModelSpec>& specs() {
    if (!specs_) specs_ = bind_specs(prices(), splits().train);
    return *specs_;
  }

  template <class T>
  T artifact(const std::string& name, const char* producer) const {
    require(out(name), producer);
    return load_artifact<T>(out(name));
  }

  static void require(const fs::path& p, const char* producer) {
    if (!fs::exists(p))
      throw ValidationError("missing input '" + p.string() + "' (run " + std::string(producer) + " first)");
  }

 private:
  ExperimentConfig cfg_;
  std::optional<Dataset> dataset_;
  std::optional<DatasetSplits> splits_;
  std::optional<PriceSheet> prices_;
  std::optional<std::vector<ModelSpec>> specs_;
};

// ---------------------------------------------------------------------------
// Steps. Each logs key=value lines to `log`.

inline void gen_data(Experiment& ex, std::ostream& log) {
  const auto& cfg = ex.config();
  if (cfg.dataset) throw ConfigError("gen-data: config names an external dataset; nothing to generate");
  const auto d = generate_synthetic(cfg.synthetic);
  detail::write_file_atomic(ex.out("dataset.jsonl"), dataset_to_jsonl(d));
  detail::write_file_atomic(ex.out("prices.json"), price_sheet_to_json(synthetic_price_sheet(cfg.synthetic)).dump(1) + "\n");
  log << "queries=" << d.size() << " models=" << d.model_names.size() << " reference=" << d.reference_model << "\n";
}

/// Mean selected gt_score per model and n under `proxy`.
inline std::string best_of_n_csv(const Dataset& test, const ProxyRewardModel& proxy, std::span<const int> ns) {
  std::string out = "model,n,mean_selected_gt_score\n";
  for (const auto& m : test.model_names) {
    for (int n : ns) {
      double s = 0.0;
      std::size_t count = 0;
      for (const auto& r : test.records) {
        if (!r.has_model(m)) continue;
        const auto& samples = r.samples_for(m);
        if (samples.size() < static_cast<std::size_t>(n)) continue;
        s += samples[select_best_of_n(proxy, r.query_text, samples, n)].gt_score;
        ++count;
      }
      out += m + "," + std::to_string(n) + "," + format_number(count ? s / count : std::nan("")) + "\n";
    }
  }
  return out;
}

inline void train_proxy_step(Experiment& ex, std::ostream& log) {
  const auto& sp = ex.splits();
  const auto proxy = train_proxy(sp.train, ex.config().proxy, ex.config().features);
  save_artifact(proxy, ex.out("proxy.json"));
  const auto held = build_training_pairs(sp.test);
  const int ns[] = {1, 3, 5, 10, 20};
  detail::write_file_atomic(ex.out("best_of_n.csv"), best_of_n_csv(sp.test, proxy, ns));
  log << "pairs=" << proxy.training.pair_count << " skipped=" << proxy.training.skipped
      << " initial_loss=" << format_number(proxy.training.initial_loss)
      << " final_loss=" << format_number(proxy.training.loss_trace.back())
      << " heldout_accuracy=" << format_number(held.pairs.empty() ? std::nan("") : pairwise_accuracy(proxy, held.pairs))
      << "\n";
}

inline void train_router_step(Experiment& ex, std::ostream& log) {
  const auto& sp = ex.splits();
  const auto proxy = ex.artifact<ProxyRewardModel>("proxy.json", "train-proxy");
  const auto& cfg = ex.config();
  const auto labels = build_router_training_set(sp.train, proxy, cfg.engine.n_max, cfg.router);
  const auto router = train_router(labels, sp.train, cfg.router, cfg.features);
  save_artifact(router, ex.out("router.json"));
  log << "labels=" << labels.labels.size() << " skipped_cells=" << labels.skipped_cells
      << " heads=" << router.heads.size() << " n_max=" << router.n_max << "\n";
}

inline void train_baselines_step(Experiment& ex, std::ostream& log) {
  const auto& sp = ex.splits();
  const auto& b = ex.config().baselines;
  const auto& fc = ex.config().features;
  if (b.nclass) {
    save_artifact(train_nclass(sp.train, ex.specs(), fc, b.classifier), ex.out("nclass.json"));
    log << "nclass=" << ex.out("nclass.json").string() << "\n";
  }
  if (b.nlabel) {
    save_artifact(train_nlabel(sp.train, fc, b.classifier, b.nlabel_delta), ex.out("nlabel.json"));
    log << "nlabel=" << ex.out("nlabel.json").string() << "\n";
  }
  if (b.clustering) {
    const auto c = fit_clustering(sp.train, ex.specs(), b.clusters, b.classifier.seed);
    save_artifact(c, ex.out("cluster.json"));
    log << "clustering=" << ex.out("cluster.json").string() << " clusters=" << c.centroids.size()
        << " k_lowered=" << (c.k_lowered ? "true" : "false") << "\n";
  }
}

/// Router and proxy artifacts checked against the engine config.
struct LoadedBestRoute {
  ProxyRewardModel proxy;
  MultiHeadRouter router;
};

inline LoadedBestRoute load_best_route(Experiment& ex) {
  LoadedBestRoute m{ex.artifact<ProxyRewardModel>("proxy.json", "train-proxy"),
                    ex.artifact<MultiHeadRouter>("router.json", "train-router")};
  if (m.router.n_max < ex.config().engine.n_max)
    throw ConfigError("router was trained with n_max " + std::to_string(m.router.n_max) + ", engine asks for " +
                      std::to_string(ex.config().engine.n_max));
  return m;
}

inline void route_step(Experiment& ex, std::ostream& log) {
  const auto m = load_best_route(ex);
  const auto& test = ex.splits().test;
  const BestRouteEvaluator eval(test, m.router, m.proxy, ex.specs(), ex.config().engine);
  const double t = ex.config().engine.threshold;
  const auto decisions = eval.decisions(t);
  const auto point = make_point(totals_of(decisions), eval.reference(), t);
  detail::write_file_atomic(ex.out("route_decisions.jsonl"), decisions_jsonl(decisions));
  const TradeoffPoint pts[] = {point};
  detail::write_file_atomic(ex.out("route.csv"), tradeoff_csv(pts));
  log << tradeoff_row(point) << "\n";
}

inline void sweep_step(Experiment& ex, std::ostream& log) {
  const auto m = load_best_route(ex);
  const BestRouteEvaluator eval(ex.splits().test, m.router, m.proxy, ex.specs(), ex.config().engine);
  const auto points = sweep_thresholds(eval, ex.config().sweep_grid);
  detail::write_file_atomic(ex.out("sweep.csv"), tradeoff_csv(points));
  log << "points=" << points.size() << "\n";
}

struct TargetRow {
  double target = 0.0;
  std::optional<ThresholdSearch> search;
  std::optional<std::pair<double, double>> unachievable;  // achievable interval
};

inline std::string target_csv(std::span<const TargetRow> rows) {
  std::string out =
      "target_pct,status,threshold,iterations,non_monotone,total_cost_usd,mean_quality,cost_reduction_pct,"
      "quality_drop_pct,achievable_low_pct,achievable_high_pct\n";
  for (const auto& r : rows) {
    out += format_number(r.target) + ",";
    if (r.search) {
      const auto& s = *r.search;
      out += std::string(s.converged ? "converged" : "closest") + "," + format_number(s.parameter) + "," +
             std::to_string(s.iterations) + "," + (s.non_monotone ? "true" : "false") + "," +
             format_number(s.point.total_cost) + "," + format_number(s.point.mean_quality) + "," +
             format_number(s.point.cost_reduction_pct) + "," + format_number(s.point.quality_drop_pct) +
             ",undefined,undefined\n";
    } else {
      out += "unachievable,undefined,0,false,undefined,undefined,undefined,undefined," +
             format_number(r.unachievable->first) + "," + format_number(r.unachievable->second) + "\n";
    }
  }
  return out;
}

inline std::vector<TargetRow> search_targets(const std::function<TradeoffPoint(double)>& eval,
                                             std::span<const double> targets, double tol, double lo, double hi) {
  std::vector<TargetRow> rows;
  for (double target : targets) {
    TargetRow row;
    row.target = target;
    try {
      row.search = find_parameter_for_reduction(eval, target, tol, lo, hi);
    } catch (const UnachievableTarget& e) {
      row.unachievable = std::make_pair(e.low, e.high);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void target_step(Experiment& ex, std::ostream& log) {
  const auto m = load_best_route(ex);
  const BestRouteEvaluator eval(ex.splits().test, m.router, m.proxy, ex.specs(), ex.config().engine);
  const auto rows = search_targets([&](double t) { return eval.point(t); }, ex.config().targets,
                                   ex.config().target_tol, 0.0, 1.0);
  detail::write_file_atomic(ex.out("target.csv"), target_csv(rows));
  for (const auto& r : rows) {
    log << "target=" << format_number(r.target);
    if (r.search)
      log << " threshold=" << format_number(r.search->parameter)
          << " cost_reduction_pct=" << format_number(r.search->point.cost_reduction_pct)
          << " quality_drop_pct=" << format_number(r.search->point.quality_drop_pct);
    else
      log << " unachievable";
    log << "\n";
  }
}

inline void cascade_step(Experiment& ex, std::ostream& log) {
  const auto& sp = ex.splits();
  const auto& specs = ex.specs();
  const auto order = cascade_order(sp.train, specs);
  auto cfg = ex.config().baselines.cascade_config;
  std::vector<TradeoffPoint> points;
  for (double t : ex.config().baselines.cascade_grid) {
    auto c = cfg;
    c.consistency_threshold = t;
    points.push_back(run_policy(sp.test, cascade_policy(order, specs, c), specs, t).point);
  }
  detail::write_file_atomic(ex.out("cascade.csv"), tradeoff_csv(points));
  std::vector<CascadeResult> results(sp.test.records.size());
  detail::parallel_for(results.size(), [&](std::size_t i) { results[i] = run_cascade(sp.test.records[i], order, specs, cfg); });
  detail::write_file_atomic(ex.out("cascade_decisions.jsonl"), cascade_jsonl(results));
  log << "agreement=" << to_string(cfg.agreement) << " points=" << points.size() << " order=";
  for (std::size_t i = 0; i < order.size(); ++i) log << (i ? ">" : "") << order[i];
  log << "\n";
}

inline std::string cost_estimation_csv(const Dataset& test, const std::vector<ModelSpec>& specs) {
  std::string out = "model,avg_output_length,mean_abs_error_usd\n";
  const auto err = cost_estimation_error(test, specs);
  for (const auto& s : specs) out += s.name + "," + format_number(s.avg_output_length) + "," + format_number(err.at(s.name)) + "\n";
  return out;
}

inline void report_step(Experiment& ex, std::ostream& log) {
  const auto& cfg = ex.config();
  const auto& sp = ex.splits();
  const auto& test = sp.test;
  const auto& specs = ex.specs();
  std::vector<ReportRow> rows;
  auto add = [&](std::string policy, std::optional<double> param, TradeoffPoint p) {
    rows.push_back(ReportRow{std::move(policy), param, std::move(p)});
  };

  for (const auto& s : specs)
    add(s.is_reference ? "reference" : "always:" + s.name, std::nullopt,
        run_policy(test, always_model_policy(specs, s.name), specs).point);

  const auto m = load_best_route(ex);
  const BestRouteEvaluator eval(test, m.router, m.proxy, specs, cfg.engine);
  for (const auto& p : sweep_thresholds(eval, cfg.sweep_grid)) add("best_route", p.threshold, p);
  for (const auto& r : search_targets([&](double t) { return eval.point(t); }, cfg.targets, cfg.target_tol, 0.0, 1.0))
    if (r.search) add("best_route_target_" + format_number(r.target), r.search->parameter, r.search->point);

  if (cfg.baselines.nlabel) {
    const auto nl = ex.artifact<NLabelRouter>("nlabel.json", "train-baselines");
    auto eval_nl = [&](double th) { return run_policy(test, nlabel_policy(nl, th, specs), specs, th).point; };
    for (double th : cfg.baselines.nlabel_grid) add("nlabel", th, eval_nl(th));
    for (const auto& r : search_targets(eval_nl, cfg.targets, cfg.target_tol, 0.0, 1.0))
      if (r.search) add("nlabel_target_" + format_number(r.target), r.search->parameter, r.search->point);
  }
  if (cfg.baselines.nclass) {
    const auto nc = ex.artifact<NClassRouter>("nclass.json", "train-baselines");
    add("nclass", std::nullopt, run_policy(test, nclass_policy(nc, specs), specs).point);
  }
  if (cfg.baselines.clustering) {
    const auto cl = ex.artifact<ClusterRouter>("cluster.json", "train-baselines");
    add("clustering", std::nullopt, run_policy(test, clustering_policy(cl, specs), specs).point);
  }
  if (cfg.baselines.cascade) {
    const auto order = cascade_order(sp.train, specs);
    for (double t : cfg.baselines.cascade_grid) {
      auto c = cfg.baselines.cascade_config;
      c.consistency_threshold = t;
      add(std::string("cascade_") + std::string(to_string(c.agreement)), t,
          run_policy(test, cascade_policy(order, specs, c), specs, t).point);
    }
  }
  detail::write_file_atomic(ex.out("report.csv"), report_csv(rows));
  detail::write_file_atomic(ex.out("plot_data.csv"), plot_data_csv(rows));
  detail::write_file_atomic(ex.out("cost_estimation.csv"), cost_estimation_csv(test, specs));
  log << "rows=" << rows.size() << " test_queries=" << test.size() << "\n";
}

}  // namespace bestroute
