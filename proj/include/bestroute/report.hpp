#pragma once

// CSV and line-delimited outputs. Numbers are printed in shortest round-trip
// form; missing values (degenerate denominators) print as "undefined".

#include <charconv>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "bestroute/baselines.hpp"
#include "bestroute/engine.hpp"

namespace bestroute {

inline std::string format_number(double v) {
  if (std::isnan(v)) return "undefined";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string format_number(const std::optional<double>& v) {
  return v ? format_number(*v) : std::string("undefined");
}

inline const char* kTradeoffHeader = "threshold,total_cost_usd,mean_quality,cost_reduction_pct,quality_drop_pct";

inline std::string tradeoff_row(const TradeoffPoint& p) {
  return format_number(p.threshold) + "," + format_number(p.total_cost) + "," + format_number(p.mean_quality) + "," +
         format_number(p.cost_reduction_pct) + "," + format_number(p.quality_drop_pct);
}

inline std::string tradeoff_csv(std::span<const TradeoffPoint> points) {
  std::string out = std::string(kTradeoffHeader) + "\n";
  for (const auto& p : points) out += tradeoff_row(p) + "\n";
  return out;
}

inline nlohmann::ordered_json decision_json(const RoutingDecision& d) {
  return nlohmann::ordered_json{{"query_id", d.query_id},
                                {"chosen_model", d.chosen_model},
                                {"sample_count", d.sample_count},
                                {"estimated_cost", d.estimated_cost},
                                {"realized_cost", d.realized_cost},
                                {"selected_response_index", d.selected_response_index},
                                {"realized_gt_score", d.realized_gt_score},
                                {"fallback_used", d.fallback_used}};
}

inline std::string decisions_jsonl(std::span<const RoutingDecision> decisions) {
  std::string out;
  for (const auto& d : decisions) out += decision_json(d).dump() + "\n";
  return out;
}

inline std::string cascade_jsonl(std::span<const CascadeResult> results) {
  std::string out;
  for (const auto& r : results) {
    auto j = decision_json(r.decision);
    nlohmann::ordered_json trace = nlohmann::ordered_json::array();
    for (const auto& s : r.trace)
      trace.push_back(nlohmann::ordered_json{
          {"model", s.model}, {"best_index", s.best_index}, {"consistency", s.consistency}, {"accepted", s.accepted}});
    j["trace"] = std::move(trace);
    out += j.dump() + "\n";
  }
  return out;
}

/// One row of the aggregate report: a policy at one parameter value.
struct ReportRow {
  std::string policy;
  std::optional<double> parameter;
  TradeoffPoint point;
};

inline std::string report_csv(std::span<const ReportRow> rows) {
  std::string out = "policy,parameter,total_cost_usd,mean_quality,cost_reduction_pct,quality_drop_pct\n";
  for (const auto& r : rows)
    out += r.policy + "," + format_number(r.parameter) + "," + format_number(r.point.total_cost) + "," +
           format_number(r.point.mean_quality) + "," + format_number(r.point.cost_reduction_pct) + "," +
           format_number(r.point.quality_drop_pct) + "\n";
  return out;
}

/// Cost-vs-quality series for plotting: x = total cost, y = mean quality.
inline std::string plot_data_csv(std::span<const ReportRow> rows) {
  std::string out = "series,parameter,x_total_cost_usd,y_mean_quality,x_cost_reduction_pct,y_quality_drop_pct\n";
  for (const auto& r : rows)
    out += r.policy + "," + format_number(r.parameter) + "," + format_number(r.point.total_cost) + "," +
           format_number(r.point.mean_quality) + "," + format_number(r.point.cost_reduction_pct) + "," +
           format_number(r.point.quality_drop_pct) + "\n";
  return out;
}

}  // namespace bestroute
