// bestroute command-line driver.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bestroute/experiment.hpp"
#include "bestroute/selfcheck.hpp"

namespace {

using namespace bestroute;

struct Overrides {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<double> threshold;
  std::vector<double> grid;
  std::string agreement;
  std::optional<int> n_max;
  std::optional<double> tol;
  std::vector<double> targets;
};

ExperimentConfig resolve_config(const Overrides& o) {
  ExperimentConfig c = o.config.empty() ? ExperimentConfig{} : load_experiment_config(o.config);
  if (!o.out.empty()) c.out_dir = o.out;
  if (o.seed) c.set_seed(*o.seed);
  if (o.threshold) c.engine.threshold = *o.threshold;
  if (!o.grid.empty()) c.sweep_grid = o.grid;
  if (!o.agreement.empty()) c.baselines.cascade_config.agreement = parse_agreement(o.agreement);
  if (o.n_max) c.engine.n_max = *o.n_max;
  if (o.tol) c.target_tol = *o.tol;
  if (!o.targets.empty()) c.targets = o.targets;
  return c;
}

void print_error(const std::string& kind, const std::string& message) {
  std::cerr << nlohmann::json{{"error", kind}, {"message", message}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cost-aware routing with best-of-n sampling"};
  app.fallthrough();
  app.require_subcommand(1, 1);
  Overrides o;
  app.add_option("--config", o.config, "experiment config (JSON)")->check(CLI::ExistingFile);
  app.add_option("--out", o.out, "output directory");
  app.add_option("--seed", o.seed, "override every seed in the config");
  app.add_option("--threshold", o.threshold, "routing threshold in [0,1]");
  app.add_option("--grid", o.grid, "threshold grid, comma separated")->delimiter(',');
  app.add_option("--agreement", o.agreement, "cascade agreement: exact, bleu or rouge");
  app.add_option("--n-max", o.n_max, "largest sample count per model");

  struct Command {
    const char* name;
    const char* help;
    void (*run)(Experiment&, std::ostream&);
  };
  const Command commands[] = {
      {"gen-data", "generate the synthetic dataset and price sheet", gen_data},
      {"train-proxy", "train the proxy reward model", train_proxy_step},
      {"train-router", "build match labels and train the multi-head router", train_router_step},
      {"train-baselines", "train the N-class, N-label and clustering routers", train_baselines_step},
      {"route", "route the test split at one threshold", route_step},
      {"sweep", "sweep routing thresholds", sweep_step},
      {"target", "find thresholds for target cost reductions", target_step},
      {"cascade", "run the LLM cascade baseline", cascade_step},
      {"report", "aggregate report and plot data", report_step},
  };
  std::vector<std::pair<CLI::App*, const Command*>> subs;
  for (const auto& c : commands) subs.emplace_back(app.add_subcommand(c.name, c.help), &c);
  auto* target = subs[6].first;
  target->add_option("targets", o.targets, "target cost reductions in percent");
  target->add_option("--tol", o.tol, "tolerance in percentage points");
  auto* selfcheck = app.add_subcommand("selfcheck", "run the invariant checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    if (selfcheck->parsed()) {
      bool ok = true;
      for (const auto& r : run_selfcheck(o.seed.value_or(0))) {
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << "\n";
        ok = ok && r.passed;
      }
      return ok ? 0 : 1;
    }
    Experiment ex(resolve_config(o));
    for (const auto& [sub, cmd] : subs) {
      if (!sub->parsed()) continue;
      cmd->run(ex, std::cout);
    }
    return 0;
  } catch (const Error& e) {
    print_error(e.kind(), e.what());
  } catch (const std::exception& e) {
    print_error("internal", e.what());
  }
  return 1;
}
