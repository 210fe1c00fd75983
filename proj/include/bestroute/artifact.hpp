#pragma once

// Self-describing, versioned JSON containers for trained models.
// Doubles are written in shortest round-trip form, so a loaded model
// reproduces the saved model's predictions bit for bit.

#include <filesystem>
#include <string>

#include <json.hpp>

#include "bestroute/baselines.hpp"
#include "bestroute/core.hpp"
#include "bestroute/detail/io.hpp"
#include "bestroute/features.hpp"
#include "bestroute/match_router.hpp"
#include "bestroute/proxy_reward.hpp"

namespace bestroute {

inline constexpr int kArtifactVersion = 1;
inline constexpr const char* kArtifactFormat = "bestroute-artifact";

template <class T>
struct ArtifactKind;
template <>
struct ArtifactKind<ProxyRewardModel> {
  static constexpr const char* name = "proxy_reward";
};
template <>
struct ArtifactKind<MultiHeadRouter> {
  static constexpr const char* name = "multi_head_router";
};
template <>
struct ArtifactKind<NClassRouter> {
  static constexpr const char* name = "nclass_router";
};
template <>
struct ArtifactKind<NLabelRouter> {
  static constexpr const char* name = "nlabel_router";
};
template <>
struct ArtifactKind<ClusterRouter> {
  static constexpr const char* name = "cluster_router";
};

namespace detail {

inline ordered_json header(const char* kind) {
  ordered_json j;
  j["format"] = kArtifactFormat;
  j["version"] = kArtifactVersion;
  j["kind"] = kind;
  return j;
}

inline ordered_json heads_json(const std::vector<RouterHead>& heads) {
  ordered_json arr = ordered_json::array();
  for (const auto& h : heads) arr.push_back(ordered_json{{"bias", h.bias}, {"weights", h.weights}});
  return arr;
}

inline std::vector<RouterHead> heads_from(const json& arr) {
  std::vector<RouterHead> out;
  for (const auto& h : arr) out.push_back(RouterHead{h.at("weights").get<std::vector<double>>(), h.at("bias").get<double>()});
  return out;
}

}  // namespace detail

inline ordered_json artifact_json(const ProxyRewardModel& m) {
  auto j = detail::header(ArtifactKind<ProxyRewardModel>::name);
  j["feature_config"] = to_json(m.feature_config);
  j["bias"] = m.bias;
  j["weights"] = m.weights;
  j["training"] = ordered_json{{"seed", m.training.seed},
                               {"epochs", m.training.epochs},
                               {"pair_count", m.training.pair_count},
                               {"skipped", m.training.skipped},
                               {"initial_loss", m.training.initial_loss},
                               {"loss_trace", m.training.loss_trace}};
  return j;
}

inline ordered_json artifact_json(const MultiHeadRouter& r) {
  auto j = detail::header(ArtifactKind<MultiHeadRouter>::name);
  j["feature_config"] = to_json(r.feature_config);
  j["model_names"] = r.model_names;
  j["n_max"] = r.n_max;
  j["heads"] = detail::heads_json(r.heads);
  ordered_json info = ordered_json::array();
  for (const auto& h : r.head_info)
    info.push_back(ordered_json{{"labels", h.label_count}, {"initial_loss", h.initial_loss}, {"final_loss", h.final_loss}});
  j["training"] = ordered_json{{"seed", r.seed}, {"epochs", r.epochs}, {"heads", std::move(info)}};
  return j;
}

inline ordered_json artifact_json(const NClassRouter& r) {
  auto j = detail::header(ArtifactKind<NClassRouter>::name);
  j["feature_config"] = to_json(r.feature_config);
  j["classes"] = r.classes;
  j["params"] = detail::heads_json(r.params);
  return j;
}

inline ordered_json artifact_json(const NLabelRouter& r) {
  auto j = detail::header(ArtifactKind<NLabelRouter>::name);
  j["feature_config"] = to_json(r.feature_config);
  j["model_names"] = r.model_names;
  j["reference_model"] = r.reference_model;
  j["delta"] = r.delta;
  j["heads"] = detail::heads_json(r.heads);
  return j;
}

inline ordered_json artifact_json(const ClusterRouter& r) {
  auto j = detail::header(ArtifactKind<ClusterRouter>::name);
  ordered_json vocab = ordered_json::array();
  for (const auto& [term, e] : r.vocabulary.terms) vocab.push_back(ordered_json{{"term", term}, {"index", e.index}, {"idf", e.idf}});
  j["vocabulary"] = ordered_json{{"documents", r.vocabulary.document_count}, {"terms", std::move(vocab)}};
  j["centroids"] = r.centroids;
  j["cluster_model"] = r.cluster_model;
  j["training"] = ordered_json{{"iterations", r.iterations}, {"k_lowered", r.k_lowered}, {"objective_trace", r.objective_trace}};
  return j;
}

namespace detail {

inline void from_json_into(const json& j, ProxyRewardModel& m) {
  m.feature_config = feature_config_from_json(j.at("feature_config"));
  m.bias = j.at("bias").get<double>();
  m.weights = j.at("weights").get<std::vector<double>>();
  const auto& t = j.at("training");
  m.training.seed = t.at("seed").get<std::uint64_t>();
  m.training.epochs = t.at("epochs").get<int>();
  m.training.pair_count = t.at("pair_count").get<std::size_t>();
  m.training.skipped = t.at("skipped").get<std::size_t>();
  m.training.initial_loss = t.at("initial_loss").get<double>();
  m.training.loss_trace = t.at("loss_trace").get<std::vector<double>>();
  m.check();
}

inline void from_json_into(const json& j, MultiHeadRouter& r) {
  r.feature_config = feature_config_from_json(j.at("feature_config"));
  r.model_names = j.at("model_names").get<std::vector<std::string>>();
  r.n_max = j.at("n_max").get<int>();
  r.heads = heads_from(j.at("heads"));
  const auto& t = j.at("training");
  r.seed = t.at("seed").get<std::uint64_t>();
  r.epochs = t.at("epochs").get<int>();
  for (const auto& h : t.at("heads"))
    r.head_info.push_back(HeadTrainingInfo{h.at("labels").get<std::size_t>(), h.at("initial_loss").get<double>(),
                                           h.at("final_loss").get<double>()});
  r.check();
}

inline void from_json_into(const json& j, NClassRouter& r) {
  r.feature_config = feature_config_from_json(j.at("feature_config"));
  r.classes = j.at("classes").get<std::vector<std::string>>();
  r.params = heads_from(j.at("params"));
  if (r.params.size() != r.classes.size()) throw ValidationError("nclass artifact: class/parameter count mismatch");
}

inline void from_json_into(const json& j, NLabelRouter& r) {
  r.feature_config = feature_config_from_json(j.at("feature_config"));
  r.model_names = j.at("model_names").get<std::vector<std::string>>();
  r.reference_model = j.at("reference_model").get<std::string>();
  r.delta = j.at("delta").get<double>();
  r.heads = heads_from(j.at("heads"));
  if (r.heads.size() != r.model_names.size()) throw ValidationError("nlabel artifact: head/model count mismatch");
}

inline void from_json_into(const json& j, ClusterRouter& r) {
  const auto& v = j.at("vocabulary");
  r.vocabulary.document_count = v.at("documents").get<std::size_t>();
  for (const auto& t : v.at("terms"))
    r.vocabulary.terms.emplace(t.at("term").get<std::string>(),
                               TfidfVocabulary::Entry{t.at("index").get<std::uint32_t>(), t.at("idf").get<double>()});
  r.centroids = j.at("centroids").get<std::vector<std::vector<double>>>();
  r.cluster_model = j.at("cluster_model").get<std::vector<std::string>>();
  const auto& t = j.at("training");
  r.iterations = t.at("iterations").get<int>();
  r.k_lowered = t.at("k_lowered").get<bool>();
  r.objective_trace = t.at("objective_trace").get<std::vector<double>>();
  if (r.cluster_model.size() != r.centroids.size()) throw ValidationError("cluster artifact: centroid/model count mismatch");
}

}  // namespace detail

template <class T>
std::string serialize_artifact(const T& model) {
  return artifact_json(model).dump(1) + "\n";
}

/// Parses and checks format, version and kind. `source` names the input in
/// error messages.
template <class T>
T deserialize_artifact(const std::string& text, const std::string& source = "artifact") {
  json j;
  try {
    j = json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(source + ": parse error at byte " + std::to_string(e.byte));
  }
  if (!j.is_object() || j.value("format", std::string()) != kArtifactFormat)
    throw ParseError(source + ": not a " + std::string(kArtifactFormat) + " file");
  const int version = j.value("version", -1);
  if (version != kArtifactVersion)
    throw Error("version", source + ": artifact version " + std::to_string(version) + " is not supported (expected " +
                               std::to_string(kArtifactVersion) + ")");
  const auto kind = j.value("kind", std::string());
  if (kind != ArtifactKind<T>::name)
    throw Error("artifact", source + ": artifact kind '" + kind + "', expected '" + ArtifactKind<T>::name + "'");
  T out;
  try {
    detail::from_json_into(j, out);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(source + ": malformed " + kind + " artifact: " + e.what());
  }
  return out;
}

template <class T>
void save_artifact(const T& model, const std::filesystem::path& path) {
  detail::write_file_atomic(path, serialize_artifact(model));
}

template <class T>
T load_artifact(const std::filesystem::path& path) {
  return deserialize_artifact<T>(detail::read_file(path), path.string());
}

}  // namespace bestroute
