#include <gtest/gtest.h>

#include "bestroute/baselines.hpp"
#include "support.hpp"

using namespace bestroute;
using namespace testing_support;

namespace {

const PriceSheet kPrices{"ref",
                         {{"ref", 5.0, 15.0, {}, true}, {"mid", 1.0, 1.0, {}, false}, {"cheap", 0.1, 0.1, {}, false}}};

/// Query words pick the group; group 0 is answered best by "cheap", group 1 by "mid".
Dataset grouped(std::size_t n) {
  std::vector<QueryRecord> recs;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t g = i % 2;
    const std::string q = g == 0 ? "alpha beta alpha" : "gamma delta gamma";
    recs.push_back(make_record("q" + std::to_string(i), q, {"ref", "mid", "cheap"}, 1,
                               [g](std::size_t k, std::size_t) {
                                 if (k == 0) return 0.5;
                                 return (g == 0) == (k == 2) ? 0.75 : 0.25;
                               }));
  }
  return make_dataset(std::move(recs), {"ref", "mid", "cheap"}, "ref");
}

QueryRecord cascade_record() {
  QueryRecord r;
  r.id = "c";
  r.query_text = "question";
  r.input_tokens = 10;
  for (int i = 0; i < 5; ++i) r.samples["cheap"].push_back(sample("a" + std::to_string(i), 10, 0.1 * i));
  for (const char* t : {"x", "x", "y", "x", "z"}) r.samples["mid"].push_back(sample(t, 10, t[0] == 'x' ? 0.7 : 0.0));
  for (int i = 0; i < 5; ++i) r.samples["ref"].push_back(sample("same answer", 10, 0.9));
  return r;
}

struct CascadeFixture {
  QueryRecord record = cascade_record();
  Dataset train = make_dataset({cascade_record()}, {"ref", "mid", "cheap"}, "ref");
  std::vector<ModelSpec> specs = bind_specs(kPrices, train);
  std::vector<std::string> order = cascade_order(train, specs);
};

}  // namespace

TEST(NClass, LabelRuleAndTies) {
  const auto d = grouped(4);
  const auto specs = bind_specs(kPrices, d);
  EXPECT_EQ(d.model_names[nclass_label(d.records[0], d.model_names, specs)], "cheap");
  EXPECT_EQ(d.model_names[nclass_label(d.records[1], d.model_names, specs)], "mid");
  const auto tie = make_record("t", "x", {"ref", "mid", "cheap"}, 1, [](std::size_t, std::size_t) { return 0.3; });
  EXPECT_EQ(d.model_names[nclass_label(tie, d.model_names, specs)], "cheap");
}

TEST(NClass, ConstantLabelLearnedEverywhere) {
  std::vector<QueryRecord> recs;
  for (int i = 0; i < 60; ++i)
    recs.push_back(make_record("q" + std::to_string(i), "word" + std::to_string(i % 7), {"ref", "mid", "cheap"}, 1,
                               [](std::size_t k, std::size_t) { return k == 1 ? 1.0 : 0.0; }));
  const auto d = make_dataset(recs, {"ref", "mid", "cheap"}, "ref");
  const auto specs = bind_specs(kPrices, d);
  FeatureConfig c;
  c.dim = 64;
  const auto router = train_nclass(d, specs, c);
  EXPECT_EQ(router.classes, d.model_names);
  for (const auto& r : d.records) EXPECT_EQ(route_nclass(router, r), "mid");
}

TEST(NClass, ZeroParametersPickFirstClass) {
  NClassRouter router;
  router.feature_config.dim = 16;
  router.classes = {"ref", "mid"};
  router.params = {RouterHead{std::vector<double>(16, 0.0), 0.0}, RouterHead{std::vector<double>(16, 0.0), 0.0}};
  EXPECT_EQ(route_nclass(router, make_record("q", "anything", {"ref"}, 1, [](std::size_t, std::size_t) { return 0.0; })),
            "ref");
}

TEST(NLabel, ThresholdEndpoints) {
  const auto d = grouped(40);
  const auto specs = bind_specs(kPrices, d);
  FeatureConfig c;
  c.dim = 64;
  const auto router = train_nlabel(d, c);
  EXPECT_EQ(router.model_names, (std::vector<std::string>{"mid", "cheap"}));
  for (const auto& r : d.records) {
    EXPECT_EQ(route_nlabel(router, r, 0.0, specs), "cheap");
    EXPECT_EQ(route_nlabel(router, r, 1.5, specs), "ref");
  }
  // group 0 queries are capable on "cheap", group 1 only on "mid"
  EXPECT_EQ(route_nlabel(router, d.records[0], 0.5, specs), "cheap");
  EXPECT_EQ(route_nlabel(router, d.records[1], 0.5, specs), "mid");
}

TEST(Clustering, SingleClusterPicksBestMeanModel) {
  const auto d = grouped(10);
  const auto specs = bind_specs(kPrices, d);
  const auto router = fit_clustering(d, specs, 1, 0);
  // "mid" and "cheap" tie on mean 0.5 with "ref"; the cheapest wins
  EXPECT_EQ(router.cluster_model, (std::vector<std::string>{"cheap"}));
}

TEST(Clustering, SeparatedGroupsGetTheirOwnModel) {
  const auto d = grouped(20);
  const auto specs = bind_specs(kPrices, d);
  const auto router = fit_clustering(d, specs, 2, 3);
  for (const auto& r : d.records) {
    const bool g0 = r.query_text.starts_with("alpha");
    EXPECT_EQ(route_clustering(router, r), g0 ? "cheap" : "mid") << r.id;
  }
}

TEST(Clustering, DeterministicObjectiveNonIncreasingAndKLowered) {
  std::vector<QueryRecord> recs;
  for (int i = 0; i < 40; ++i)
    recs.push_back(make_record("q" + std::to_string(i),
                               "w" + std::to_string(i % 5) + " v" + std::to_string(i % 3) + " u" + std::to_string(i % 11),
                               {"ref", "cheap"}, 1, [i](std::size_t k, std::size_t) { return 0.1 * ((i + k) % 4); }));
  const auto d = make_dataset(recs, {"ref", "cheap"}, "ref");
  const auto specs = bind_specs(kPrices, d);
  const auto a = fit_clustering(d, specs, 6, 9);
  const auto b = fit_clustering(d, specs, 6, 9);
  EXPECT_EQ(a.centroids, b.centroids);
  EXPECT_EQ(a.cluster_model, b.cluster_model);
  for (std::size_t i = 1; i < a.objective_trace.size(); ++i)
    EXPECT_LE(a.objective_trace[i], a.objective_trace[i - 1] + 1e-12);
  EXPECT_TRUE(fit_clustering(d, specs, 100, 0).k_lowered);
}

TEST(Agreement, HandValuesAndProperties) {
  EXPECT_DOUBLE_EQ(agreement("the cat sat", "the cat ran", Agreement::rouge), 2.0 / 3.0);
  EXPECT_EQ(agreement(" a  b ", "a b", Agreement::exact_match), 1.0);
  EXPECT_EQ(agreement("a b", "a c", Agreement::exact_match), 0.0);
  const char* texts[] = {"the quick brown fox jumps", "the quick red fox", "jumps over", ""};
  for (auto kind : {Agreement::exact_match, Agreement::bleu, Agreement::rouge}) {
    EXPECT_NEAR(agreement(texts[0], texts[0], kind), 1.0, 1e-12);
    for (const char* a : texts)
      for (const char* b : texts) {
        const double v = agreement(a, b, kind);
        EXPECT_EQ(v, agreement(b, a, kind));
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
      }
  }
  EXPECT_EQ(parse_agreement("rouge"), Agreement::rouge);
  EXPECT_THROW(parse_agreement("meteor"), ConfigError);
}

TEST(Consistency, HandValues) {
  const std::vector<std::string> same(5, "ok"), distinct{"a", "b", "c", "d", "e"}, three{"x", "x", "y", "x", "z"};
  EXPECT_EQ(consistency(same, 2, Agreement::exact_match), 1.0);
  EXPECT_DOUBLE_EQ(consistency(distinct, 0, Agreement::exact_match), 0.2);
  EXPECT_DOUBLE_EQ(consistency(three, 0, Agreement::exact_match), 0.6);
  EXPECT_THROW(consistency(three, 5, Agreement::exact_match), ValidationError);
}

TEST(Cascade, OrderIsCheapestFirst) {
  const CascadeFixture f;
  EXPECT_EQ(f.order, (std::vector<std::string>{"cheap", "mid", "ref"}));
}

TEST(Cascade, ThresholdEndpointsAndStrictness) {
  const CascadeFixture f;
  CascadeConfig c;
  c.consistency_threshold = 0.0;
  auto r = run_cascade(f.record, f.order, f.specs, c);
  EXPECT_EQ(r.decision.chosen_model, "cheap");
  EXPECT_EQ(r.trace.size(), 1u);

  c.consistency_threshold = 0.5;
  r = run_cascade(f.record, f.order, f.specs, c);
  EXPECT_EQ(r.decision.chosen_model, "mid");
  EXPECT_EQ(r.trace.size(), 2u);
  EXPECT_DOUBLE_EQ(r.trace[1].consistency, 0.6);
  EXPECT_EQ(r.decision.realized_gt_score, 0.7);

  c.consistency_threshold = 0.6;  // not strictly above
  EXPECT_EQ(run_cascade(f.record, f.order, f.specs, c).decision.chosen_model, "ref");

  c.consistency_threshold = 1.0;
  r = run_cascade(f.record, f.order, f.specs, c);
  EXPECT_EQ(r.trace.size(), 3u);
  EXPECT_EQ(r.decision.chosen_model, "ref");
  for (const auto& s : r.trace) EXPECT_FALSE(s.accepted);
}

TEST(Cascade, ChargesEveryInvokedModel) {
  const CascadeFixture f;
  CascadeConfig c;
  c.consistency_threshold = 0.5;
  const auto r = run_cascade(f.record, f.order, f.specs, c);
  double micro = 0.0;
  for (const char* m : {"cheap", "mid"}) {
    const auto& s = find_spec(f.specs, m);
    micro += 50.0 * s.output_price_per_mtok + 10.0 * s.input_price_per_mtok;
  }
  EXPECT_DOUBLE_EQ(r.decision.realized_cost, micro / 1e6);
  EXPECT_EQ(r.decision.sample_count, 5);
}

TEST(Cascade, CostNonDecreasingInThreshold) {
  const CascadeFixture f;
  double prev = 0.0;
  for (int i = 0; i <= 10; ++i) {
    CascadeConfig c;
    c.consistency_threshold = i / 10.0;
    const double cost = run_cascade(f.record, f.order, f.specs, c).decision.realized_cost;
    EXPECT_GE(cost, prev);
    prev = cost;
  }
}

TEST(Cascade, TooFewSamplesIsAnError) {
  CascadeFixture f;
  f.record.samples["cheap"].pop_back();
  EXPECT_THROW(run_cascade(f.record, f.order, f.specs, CascadeConfig{}), ValidationError);
}
