#pragma once

// Domain types, dataset ingestion and validation, splits, price sheets and
// per-model output-length statistics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "bestroute/detail/io.hpp"
#include "bestroute/detail/rng.hpp"
#include "bestroute/detail/text.hpp"
#include "bestroute/error.hpp"

namespace bestroute {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

enum class TaskTag { qa, coding, safety, other };

inline std::string_view to_string(TaskTag t) {
  switch (t) {
    case TaskTag::qa: return "qa";
    case TaskTag::coding: return "coding";
    case TaskTag::safety: return "safety";
    case TaskTag::other: return "other";
  }
  return "other";
}

inline std::optional<TaskTag> parse_task_tag(std::string_view s) {
  if (s == "qa") return TaskTag::qa;
  if (s == "coding") return TaskTag::coding;
  if (s == "safety") return TaskTag::safety;
  if (s == "other") return TaskTag::other;
  return std::nullopt;
}

struct ResponseSample {
  std::string text;
  std::int64_t output_tokens = 0;
  double gt_score = 0.0;  // ground-truth quality in [-1, 1]

  bool operator==(const ResponseSample&) const = default;
};

struct QueryRecord {
  std::string id;
  std::string query_text;
  TaskTag task = TaskTag::other;
  std::int64_t input_tokens = 1;
  std::map<std::string, std::vector<ResponseSample>> samples;

  bool has_model(const std::string& model) const {
    auto it = samples.find(model);
    return it != samples.end() && !it->second.empty();
  }

  const std::vector<ResponseSample>& samples_for(const std::string& model) const {
    auto it = samples.find(model);
    if (it == samples.end())
      throw ValidationError("record '" + id + "' has no samples for model '" + model + "'");
    return it->second;
  }

  bool operator==(const QueryRecord&) const = default;
};

/// Prices are held in USD per 1M tokens, the unit price sheets are written
/// in. Cost formulas multiply tokens by these and divide by 1e6 once at the
/// end, which keeps the hand-computed examples exact in binary floating point.
struct ModelSpec {
  std::string name;
  double input_price_per_mtok = 0.0;
  double output_price_per_mtok = 0.0;
  std::optional<double> avg_output_length;
  bool is_reference = false;

  double input_token_price() const { return input_price_per_mtok / 1e6; }
  double output_token_price() const { return output_price_per_mtok / 1e6; }
};

struct Dataset {
  std::vector<QueryRecord> records;
  std::vector<std::string> model_names;  // index k
  std::string reference_model;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }

  std::optional<std::size_t> model_index(std::string_view name) const {
    for (std::size_t i = 0; i < model_names.size(); ++i)
      if (model_names[i] == name) return i;
    return std::nullopt;
  }

  /// Models other than the reference, in dataset order.
  std::vector<std::string> candidate_models() const {
    std::vector<std::string> out;
    for (const auto& m : model_names)
      if (m != reference_model) out.push_back(m);
    return out;
  }

  /// Same models and reference, different record subset.
  Dataset with_records(std::vector<QueryRecord> recs) const {
    return Dataset{std::move(recs), model_names, reference_model};
  }

  bool operator==(const Dataset&) const = default;
};

struct SplitSpec {
  double train_fraction = 0.8;
  double valid_fraction = 0.1;
  double test_fraction = 0.1;
  std::uint64_t seed = 7;

  void validate() const {
    for (double f : {train_fraction, valid_fraction, test_fraction})
      if (!(f > 0.0 && f < 1.0)) throw ConfigError("split fractions must lie in (0,1)");
    if (std::abs(train_fraction + valid_fraction + test_fraction - 1.0) > 1e-9)
      throw ConfigError("split fractions must sum to 1");
  }
};

struct DatasetSplits {
  Dataset train;
  Dataset valid;
  Dataset test;
};

// ---------------------------------------------------------------------------
// Validation

namespace detail {

inline std::string record_ctx(std::size_t line, const std::string& id) {
  std::string s;
  if (line > 0) s += "line " + std::to_string(line) + ": ";
  s += "record '" + id + "'";
  return s;
}

inline void validate_sample(const ResponseSample& s, const std::string& ctx, const std::string& model,
                            std::size_t idx) {
  const std::string where = ctx + ": field 'responses." + model + "[" + std::to_string(idx) + "]";
  if (s.output_tokens < 0) throw ValidationError(where + ".output_tokens' is negative");
  if (!std::isfinite(s.gt_score)) throw ValidationError(where + ".gt_score' is not finite");
  if (s.gt_score < -1.0 || s.gt_score > 1.0)
    throw ValidationError(where + ".gt_score' outside [-1, 1]");
  if (s.text.empty() && s.output_tokens != 0)
    throw ValidationError(where + ".text' is empty but output_tokens > 0");
}

inline void validate_record(const QueryRecord& r, const Dataset& d, std::size_t line) {
  const auto ctx = record_ctx(line, r.id);
  if (r.id.empty()) throw ValidationError(ctx + ": field 'id' is empty");
  if (r.query_text.empty()) throw ValidationError(ctx + ": field 'query' is empty");
  if (r.input_tokens < 1) throw ValidationError(ctx + ": field 'input_tokens' must be >= 1");
  if (r.samples.empty()) throw ValidationError(ctx + ": field 'responses' is empty");
  for (const auto& [model, list] : r.samples) {
    if (!d.model_index(model))
      throw ValidationError(ctx + ": field 'responses' names unknown model '" + model + "'");
    if (list.empty())
      throw ValidationError(ctx + ": field 'responses." + model + "' has no samples");
    for (std::size_t i = 0; i < list.size(); ++i) validate_sample(list[i], ctx, model, i);
  }
  if (!r.has_model(d.reference_model))
    throw ValidationError(ctx + ": field 'responses' lacks reference model '" + d.reference_model + "'");
}

}  // namespace detail

/// Throws ValidationError naming the first offending record and field.
/// `lines`, when given, maps record index to its source line for messages.
inline void validate_dataset(const Dataset& d, const std::vector<std::size_t>& lines = {}) {
  if (d.model_names.empty()) throw ValidationError("dataset lists no models");
  if (!d.model_index(d.reference_model))
    throw ValidationError("reference model '" + d.reference_model + "' is not among the dataset models");
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    const auto& r = d.records[i];
    const std::size_t line = i < lines.size() ? lines[i] : 0;
    if (!seen.insert(r.id).second)
      throw ValidationError(detail::record_ctx(line, r.id) + ": field 'id' duplicates an earlier record");
    detail::validate_record(r, d, line);
  }
}

// ---------------------------------------------------------------------------
// Line-delimited dataset format

inline ordered_json record_to_json(const QueryRecord& r, const std::vector<std::string>& model_order) {
  ordered_json j;
  j["id"] = r.id;
  j["query"] = r.query_text;
  j["task"] = std::string(to_string(r.task));
  j["input_tokens"] = r.input_tokens;
  ordered_json responses = ordered_json::object();
  for (const auto& m : model_order) {
    auto it = r.samples.find(m);
    if (it == r.samples.end()) continue;
    ordered_json arr = ordered_json::array();
    for (const auto& s : it->second)
      arr.push_back(ordered_json{{"text", s.text}, {"output_tokens", s.output_tokens}, {"gt_score", s.gt_score}});
    responses[m] = std::move(arr);
  }
  j["responses"] = std::move(responses);
  return j;
}

/// Header line followed by one record per line.
inline std::string dataset_to_jsonl(const Dataset& d) {
  std::string out;
  ordered_json header;
  header["header"] = ordered_json{{"models", d.model_names}, {"reference", d.reference_model}};
  out += header.dump();
  out += '\n';
  for (const auto& r : d.records) {
    out += record_to_json(r, d.model_names).dump();
    out += '\n';
  }
  return out;
}

inline void save_dataset(const Dataset& d, const std::filesystem::path& path) {
  bestroute::detail::write_file_atomic(path, dataset_to_jsonl(d));
}

namespace detail {

template <class T>
T require_field(const ordered_json& j, const char* key, const std::string& ctx) {
  auto it = j.find(key);
  if (it == j.end()) throw ValidationError(ctx + ": field '" + key + "' is missing");
  try {
    return it->template get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError(ctx + ": field '" + key + "' has the wrong type");
  }
}

inline QueryRecord parse_record(const ordered_json& j, std::size_t line, std::vector<std::string>& first_seen) {
  const std::string lctx = "line " + std::to_string(line);
  if (!j.is_object()) throw ParseError(lctx + ": record is not an object");
  QueryRecord r;
  r.id = require_field<std::string>(j, "id", lctx);
  const auto ctx = record_ctx(line, r.id);
  r.query_text = require_field<std::string>(j, "query", ctx);
  const auto task = require_field<std::string>(j, "task", ctx);
  auto tag = parse_task_tag(task);
  if (!tag) throw ValidationError(ctx + ": field 'task' has unknown value '" + task + "'");
  r.task = *tag;
  if (j.contains("input_tokens")) {
    r.input_tokens = require_field<std::int64_t>(j, "input_tokens", ctx);
  } else {
    r.input_tokens = static_cast<std::int64_t>(count_ws_tokens(r.query_text));
  }
  auto resp = j.find("responses");
  if (resp == j.end() || !resp->is_object())
    throw ValidationError(ctx + ": field 'responses' is missing or not an object");
  for (const auto& [model, arr] : resp->items()) {
    if (!arr.is_array()) throw ValidationError(ctx + ": field 'responses." + model + "' is not a list");
    auto& list = r.samples[model];
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const auto sctx = ctx + ": field 'responses." + model + "[" + std::to_string(i) + "]'";
      const auto& sj = arr[i];
      if (!sj.is_object()) throw ValidationError(sctx + " is not an object");
      ResponseSample s;
      s.text = require_field<std::string>(sj, "text", sctx);
      s.output_tokens = require_field<std::int64_t>(sj, "output_tokens", sctx);
      s.gt_score = require_field<double>(sj, "gt_score", sctx);
      list.push_back(std::move(s));
    }
    if (std::find(first_seen.begin(), first_seen.end(), model) == first_seen.end()) first_seen.push_back(model);
  }
  return r;
}

}  // namespace detail

/// Parses line-delimited records. An optional first-line header
/// {"header": {"models": [...], "reference": "..."}} fixes model order and the
/// reference; otherwise models are ordered by first appearance and the
/// reference is `reference` or, failing that, the first model seen.
inline Dataset parse_dataset(std::istream& in, const std::optional<std::string>& reference = std::nullopt) {
  Dataset d;
  std::vector<std::string> first_seen;
  std::vector<std::size_t> lines;
  bool have_header = false;
  std::string text;
  std::size_t line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (bestroute::detail::normalize_ws(text).empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError("line " + std::to_string(line_no) + ": byte " + std::to_string(e.byte) + ": " + e.what());
    }
    if (j.is_object() && j.contains("header")) {
      if (have_header || !d.records.empty())
        throw ParseError("line " + std::to_string(line_no) + ": header must be the first record");
      have_header = true;
      const auto& h = j["header"];
      const auto ctx = std::string("line ") + std::to_string(line_no) + ": header";
      d.model_names = detail::require_field<std::vector<std::string>>(h, "models", ctx);
      if (h.contains("reference")) d.reference_model = detail::require_field<std::string>(h, "reference", ctx);
      continue;
    }
    d.records.push_back(detail::parse_record(j, line_no, first_seen));
    lines.push_back(line_no);
  }
  if (!have_header) d.model_names = first_seen;
  if (reference && d.reference_model.empty()) d.reference_model = *reference;
  if (d.reference_model.empty() && !d.model_names.empty()) d.reference_model = d.model_names.front();
  validate_dataset(d, lines);
  return d;
}

inline Dataset load_dataset(const std::filesystem::path& path,
                            const std::optional<std::string>& reference = std::nullopt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io", "cannot open dataset '" + path.string() + "'");
  return parse_dataset(in, reference);
}

// ---------------------------------------------------------------------------
// Splits

/// Seeded shuffle then cut. Sizes are round(fraction * N) for valid and test;
/// train takes the remainder.
inline DatasetSplits split_dataset(const Dataset& d, const SplitSpec& s) {
  s.validate();
  const std::size_t n = d.records.size();
  if (n < 3) throw ValidationError("split_dataset needs at least 3 records, got " + std::to_string(n));
  std::size_t n_valid = static_cast<std::size_t>(std::llround(s.valid_fraction * static_cast<double>(n)));
  std::size_t n_test = static_cast<std::size_t>(std::llround(s.test_fraction * static_cast<double>(n)));
  n_valid = std::max<std::size_t>(n_valid, 1);
  n_test = std::max<std::size_t>(n_test, 1);
  while (n_valid + n_test > n - 1) {
    if (n_valid >= n_test) --n_valid; else --n_test;
  }
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  bestroute::detail::Rng rng(bestroute::detail::derive_seed(s.seed, std::string_view("split")));
  rng.shuffle(perm);

  std::vector<QueryRecord> train, valid, test;
  const std::size_t n_train = n - n_valid - n_test;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& rec = d.records[perm[i]];
    if (i < n_train) train.push_back(rec);
    else if (i < n_train + n_valid) valid.push_back(rec);
    else test.push_back(rec);
  }
  return {d.with_records(std::move(train)), d.with_records(std::move(valid)), d.with_records(std::move(test))};
}

// ---------------------------------------------------------------------------
// Output lengths and cost arithmetic

/// Mean output_tokens over every stored sample of `model` in `train`.
inline double compute_avg_output_length(const Dataset& train, const std::string& model) {
  if (!train.model_index(model)) throw ValidationError("unknown model '" + model + "'");
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& r : train.records) {
    auto it = r.samples.find(model);
    if (it == r.samples.end() || it->second.empty())
      throw ValidationError("record '" + r.id + "' has no samples for model '" + model + "'");
    for (const auto& s : it->second) {
      total += static_cast<double>(s.output_tokens);
      ++count;
    }
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

/// Cost of one call in micro-USD: output_tokens * out price + input_tokens * in price.
inline double call_cost_micro(const ModelSpec& spec, double output_tokens, std::int64_t input_tokens) {
  return output_tokens * spec.output_price_per_mtok +
         static_cast<double>(input_tokens) * spec.input_price_per_mtok;
}

inline double estimated_cost_micro(const ModelSpec& spec, int n, std::int64_t input_tokens) {
  if (n < 1) throw ValidationError("sample count must be >= 1, got " + std::to_string(n));
  if (!spec.avg_output_length)
    throw ValidationError("model '" + spec.name + "' has no avg_output_length");
  return static_cast<double>(n) * *spec.avg_output_length * spec.output_price_per_mtok +
         static_cast<double>(input_tokens) * spec.input_price_per_mtok;
}

/// Per model: mean over queries of |estimated - actual| single-call cost in
/// USD, where "actual" uses the first stored sample.
inline std::map<std::string, double> cost_estimation_error(const Dataset& test, const std::vector<ModelSpec>& specs) {
  std::map<std::string, double> out;
  for (const auto& spec : specs) {
    if (!spec.avg_output_length)
      throw ValidationError("model '" + spec.name + "' has no avg_output_length");
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& r : test.records) {
      auto it = r.samples.find(spec.name);
      if (it == r.samples.end() || it->second.empty()) continue;
      const double est = estimated_cost_micro(spec, 1, r.input_tokens);
      const double act = call_cost_micro(spec, static_cast<double>(it->second.front().output_tokens), r.input_tokens);
      total += std::abs(est - act);
      ++count;
    }
    out[spec.name] = count == 0 ? 0.0 : total / static_cast<double>(count) / 1e6;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Price sheets

struct PriceSheet {
  std::string reference;
  std::vector<ModelSpec> models;

  const ModelSpec* find(std::string_view name) const {
    for (const auto& m : models)
      if (m.name == name) return &m;
    return nullptr;
  }

  const ModelSpec& at(std::string_view name) const {
    if (auto* m = find(name)) return *m;
    throw ConfigError("price sheet has no model '" + std::string(name) + "'");
  }
};

/// The 8-model price table used in the original evaluation (USD per 1M tokens).
inline PriceSheet default_price_sheet() {
  PriceSheet p;
  p.reference = "gpt-4o";
  auto add = [&](const char* name, double in, double out) {
    p.models.push_back(ModelSpec{name, in, out, std::nullopt, false});
  };
  add("gpt-4o", 5, 15);
  add("gpt-3.5-turbo", 3, 6);
  add("llama-3.1-8b", 0.3, 0.61);
  add("mistral-7b", 0.25, 0.25);
  add("mistral-8x7b", 0.7, 0.7);
  add("phi-3-mini", 0.3, 0.9);
  add("phi-3-medium", 0.5, 1.5);
  add("codestral-22b", 1, 3);
  p.models.front().is_reference = true;
  return p;
}

inline ordered_json price_sheet_to_json(const PriceSheet& p) {
  ordered_json j;
  j["reference"] = p.reference;
  j["unit"] = "usd_per_1m_tokens";
  ordered_json arr = ordered_json::array();
  for (const auto& m : p.models)
    arr.push_back(ordered_json{{"name", m.name}, {"input", m.input_price_per_mtok}, {"output", m.output_price_per_mtok}});
  j["models"] = std::move(arr);
  return j;
}

inline PriceSheet price_sheet_from_json(const json& j) {
  PriceSheet p;
  try {
    p.reference = j.at("reference").get<std::string>();
    for (const auto& m : j.at("models")) {
      ModelSpec s;
      s.name = m.at("name").get<std::string>();
      s.input_price_per_mtok = m.at("input").get<double>();
      s.output_price_per_mtok = m.at("output").get<double>();
      if (s.input_price_per_mtok < 0 || s.output_price_per_mtok < 0)
        throw ConfigError("price sheet: negative price for '" + s.name + "'");
      s.is_reference = s.name == p.reference;
      p.models.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("price sheet: ") + e.what());
  }
  const auto refs = std::count_if(p.models.begin(), p.models.end(), [](const ModelSpec& m) { return m.is_reference; });
  if (refs != 1) throw ConfigError("price sheet must contain the reference model '" + p.reference + "' exactly once");
  return p;
}

inline PriceSheet load_price_sheet(const std::filesystem::path& path) {
  const auto text = bestroute::detail::read_file(path);
  try {
    return price_sheet_from_json(json::parse(text));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("price sheet '" + path.string() + "': byte " + std::to_string(e.byte) + ": " + e.what());
  }
}

/// ModelSpecs for every dataset model, in dataset order, with the reference
/// flag taken from the dataset and avg_output_length computed on `train`.
inline std::vector<ModelSpec> bind_specs(const PriceSheet& prices, const Dataset& train) {
  std::vector<ModelSpec> specs;
  for (const auto& name : train.model_names) {
    ModelSpec s = prices.at(name);
    s.is_reference = name == train.reference_model;
    s.avg_output_length = compute_avg_output_length(train, name);
    specs.push_back(std::move(s));
  }
  return specs;
}

inline const ModelSpec& find_spec(const std::vector<ModelSpec>& specs, std::string_view name) {
  for (const auto& s : specs)
    if (s.name == name) return s;
  throw ConfigError("no ModelSpec for model '" + std::string(name) + "'");
}

}  // namespace bestroute
