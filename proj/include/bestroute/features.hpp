#pragma once

// Deterministic text encoders: signed feature hashing for queries and
// query/response pairs, and a TF-IDF vectorizer for the clustering baseline.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "bestroute/detail/rng.hpp"
#include "bestroute/detail/text.hpp"
#include "bestroute/error.hpp"

namespace bestroute {

/// Sorted (index, value) pairs with unique indices.
struct SparseVector {
  std::vector<std::uint32_t> index;
  std::vector<double> value;

  std::size_t nnz() const { return index.size(); }

  double dot(std::span<const double> dense) const {
    double s = 0.0;
    for (std::size_t i = 0; i < index.size(); ++i) s += value[i] * dense[index[i]];
    return s;
  }

  double squared_norm() const {
    double s = 0.0;
    for (double v : value) s += v * v;
    return s;
  }

  std::vector<double> to_dense(std::size_t dim) const {
    std::vector<double> out(dim, 0.0);
    for (std::size_t i = 0; i < index.size(); ++i) out[index[i]] = value[i];
    return out;
  }

  /// Builds from unsorted entries, summing duplicates and dropping exact zeros.
  static SparseVector from_entries(std::vector<std::pair<std::uint32_t, double>> entries) {
    std::sort(entries.begin(), entries.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    SparseVector v;
    for (std::size_t i = 0; i < entries.size();) {
      const auto idx = entries[i].first;
      double sum = 0.0;
      while (i < entries.size() && entries[i].first == idx) sum += entries[i++].second;
      if (sum != 0.0) {
        v.index.push_back(idx);
        v.value.push_back(sum);
      }
    }
    return v;
  }
};

/// a - b, merging on index.
inline SparseVector sparse_difference(const SparseVector& a, const SparseVector& b) {
  std::vector<std::pair<std::uint32_t, double>> e;
  e.reserve(a.nnz() + b.nnz());
  for (std::size_t i = 0; i < a.nnz(); ++i) e.emplace_back(a.index[i], a.value[i]);
  for (std::size_t i = 0; i < b.nnz(); ++i) e.emplace_back(b.index[i], -b.value[i]);
  return SparseVector::from_entries(std::move(e));
}

struct FeatureConfig {
  std::size_t dim = 4096;
  std::set<int> word_ngrams{1, 2};
  std::set<int> char_ngrams{3, 4};
  std::uint64_t hash_seed = 0;
  bool normalize = true;

  void validate() const {
    if (dim < 16) throw ConfigError("feature dim must be >= 16");
    for (int n : word_ngrams)
      if (n < 1) throw ConfigError("word n-gram orders must be >= 1");
    for (int n : char_ngrams)
      if (n < 1) throw ConfigError("char n-gram orders must be >= 1");
  }

  bool operator==(const FeatureConfig&) const = default;
};

inline nlohmann::ordered_json to_json(const FeatureConfig& c) {
  return nlohmann::ordered_json{{"dim", c.dim},
                                {"word_ngrams", std::vector<int>(c.word_ngrams.begin(), c.word_ngrams.end())},
                                {"char_ngrams", std::vector<int>(c.char_ngrams.begin(), c.char_ngrams.end())},
                                {"hash_seed", c.hash_seed},
                                {"normalize", c.normalize}};
}

inline FeatureConfig feature_config_from_json(const nlohmann::json& j) {
  FeatureConfig c;
  try {
    if (j.contains("dim")) c.dim = j.at("dim").get<std::size_t>();
    if (j.contains("word_ngrams")) {
      auto v = j.at("word_ngrams").get<std::vector<int>>();
      c.word_ngrams = {v.begin(), v.end()};
    }
    if (j.contains("char_ngrams")) {
      auto v = j.at("char_ngrams").get<std::vector<int>>();
      c.char_ngrams = {v.begin(), v.end()};
    }
    if (j.contains("hash_seed")) c.hash_seed = j.at("hash_seed").get<std::uint64_t>();
    if (j.contains("normalize")) c.normalize = j.at("normalize").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("feature config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace detail {

inline void add_hashed(std::vector<std::pair<std::uint32_t, double>>& out, std::string_view gram,
                       std::uint64_t salt, const FeatureConfig& cfg) {
  const std::uint64_t h = splitmix64(fnv1a64(gram, 0xcbf29ce484222325ULL ^ salt) ^ splitmix64(cfg.hash_seed));
  const auto idx = static_cast<std::uint32_t>((h >> 1) % cfg.dim);
  out.emplace_back(idx, (h & 1U) ? -1.0 : 1.0);
}

inline void normalize_l2(SparseVector& v) {
  const double n2 = v.squared_norm();
  if (n2 <= 0.0) return;
  const double inv = 1.0 / std::sqrt(n2);
  for (double& x : v.value) x *= inv;
}

}  // namespace detail

/// Hashed word n-grams and per-word character n-grams (words padded with
/// '<' and '>'), signed by one hash bit. Empty text gives the zero vector.
inline SparseVector encode_query_sparse(std::string_view text, const FeatureConfig& cfg) {
  const auto tokens = detail::split_ws(text);
  std::vector<std::pair<std::uint32_t, double>> entries;
  std::string gram;
  for (int order : cfg.word_ngrams) {
    const auto n = static_cast<std::size_t>(order);
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
      gram.clear();
      for (std::size_t j = 0; j < n; ++j) {
        if (j) gram.push_back(' ');
        gram.append(tokens[i + j]);
      }
      detail::add_hashed(entries, gram, 0x1000U + n, cfg);
    }
  }
  std::string padded;
  for (auto tok : tokens) {
    padded.assign("<");
    padded.append(tok);
    padded.push_back('>');
    for (int order : cfg.char_ngrams) {
      const auto n = static_cast<std::size_t>(order);
      for (std::size_t i = 0; i + n <= padded.size(); ++i)
        detail::add_hashed(entries, std::string_view(padded).substr(i, n), 0x2000U + n, cfg);
    }
  }
  auto v = SparseVector::from_entries(std::move(entries));
  if (cfg.normalize) detail::normalize_l2(v);
  return v;
}

inline std::vector<double> encode_query(std::string_view text, const FeatureConfig& cfg) {
  cfg.validate();
  return encode_query_sparse(text, cfg).to_dense(cfg.dim);
}

inline constexpr std::size_t kPairScalarFeatures = 4;

inline std::size_t pair_dim(const FeatureConfig& cfg) { return 2 * cfg.dim + kPairScalarFeatures; }

struct OverlapFeatures {
  double jaccard = 0.0;
  double length_ratio = 0.0;
  double response_length = 0.0;   // tokens / 512, clipped to [0, 1]
  double response_in_query = 0.0;  // share of distinct response unigrams found in the query
};

inline OverlapFeatures overlap_features(std::string_view query, std::string_view response) {
  const auto qt = detail::split_ws(query);
  const auto rt = detail::split_ws(response);
  const std::unordered_set<std::string_view> qs(qt.begin(), qt.end());
  const std::unordered_set<std::string_view> rs(rt.begin(), rt.end());
  OverlapFeatures f;
  std::size_t inter = 0;
  for (auto t : rs)
    if (qs.count(t)) ++inter;
  const std::size_t uni = qs.size() + rs.size() - inter;
  f.jaccard = uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
  if (!qt.empty() && !rt.empty()) {
    const auto lo = std::min(qt.size(), rt.size());
    const auto hi = std::max(qt.size(), rt.size());
    f.length_ratio = static_cast<double>(lo) / static_cast<double>(hi);
  }
  f.response_length = std::min(1.0, static_cast<double>(rt.size()) / 512.0);
  f.response_in_query = rs.empty() ? 0.0 : static_cast<double>(inter) / static_cast<double>(rs.size());
  return f;
}

/// [encode_query(query) | encode_query(response) | 4 overlap scalars].
inline SparseVector encode_pair_sparse(std::string_view query, std::string_view response, const FeatureConfig& cfg) {
  const auto q = encode_query_sparse(query, cfg);
  const auto r = encode_query_sparse(response, cfg);
  const auto o = overlap_features(query, response);
  SparseVector out;
  out.index.reserve(q.nnz() + r.nnz() + kPairScalarFeatures);
  out.value.reserve(out.index.capacity());
  const auto dim = static_cast<std::uint32_t>(cfg.dim);
  for (std::size_t i = 0; i < q.nnz(); ++i) {
    out.index.push_back(q.index[i]);
    out.value.push_back(q.value[i]);
  }
  for (std::size_t i = 0; i < r.nnz(); ++i) {
    out.index.push_back(dim + r.index[i]);
    out.value.push_back(r.value[i]);
  }
  const double scalars[kPairScalarFeatures] = {o.jaccard, o.length_ratio, o.response_length, o.response_in_query};
  for (std::size_t i = 0; i < kPairScalarFeatures; ++i) {
    if (scalars[i] == 0.0) continue;
    out.index.push_back(2 * dim + static_cast<std::uint32_t>(i));
    out.value.push_back(scalars[i]);
  }
  return out;
}

inline std::vector<double> encode_pair(std::string_view query, std::string_view response, const FeatureConfig& cfg) {
  cfg.validate();
  return encode_pair_sparse(query, response, cfg).to_dense(pair_dim(cfg));
}

// ---------------------------------------------------------------------------
// TF-IDF

struct TfidfVocabulary {
  struct Entry {
    std::uint32_t index = 0;
    double idf = 0.0;
  };
  std::map<std::string, Entry, std::less<>> terms;
  std::size_t document_count = 0;

  std::size_t size() const { return terms.size(); }
};

/// idf = ln((1 + D) / (1 + df)) + 1. Term indices follow lexicographic order.
inline TfidfVocabulary tfidf_fit(std::span<const std::string> documents) {
  if (documents.empty()) throw ValidationError("tfidf_fit needs at least one document");
  std::map<std::string, std::size_t, std::less<>> df;
  for (const auto& doc : documents) {
    std::set<std::string_view> uniq;
    for (auto t : detail::split_ws(doc)) uniq.insert(t);
    for (auto t : uniq) ++df[std::string(t)];
  }
  TfidfVocabulary v;
  v.document_count = documents.size();
  const double d = static_cast<double>(documents.size());
  std::uint32_t next = 0;
  for (const auto& [term, count] : df)
    v.terms.emplace(term, TfidfVocabulary::Entry{next++, std::log((1.0 + d) / (1.0 + static_cast<double>(count))) + 1.0});
  return v;
}

/// Raw term counts times idf, L2-normalized. Unseen terms are ignored.
inline SparseVector tfidf_transform(const TfidfVocabulary& v, std::string_view text) {
  std::vector<std::pair<std::uint32_t, double>> entries;
  for (auto t : detail::split_ws(text)) {
    auto it = v.terms.find(t);
    if (it != v.terms.end()) entries.emplace_back(it->second.index, it->second.idf);
  }
  auto out = SparseVector::from_entries(std::move(entries));
  detail::normalize_l2(out);
  return out;
}

}  // namespace bestroute
