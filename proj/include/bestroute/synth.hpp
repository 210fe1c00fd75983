#pragma once

// Seeded synthetic datasets for desk-scale experiments.
//
// Every query carries a latent difficulty d in [0, 1] that is visible in the
// query text as a repeated level marker. A sample of model m scores
//   clamp(skill_m - d * gap_m + N(0, noise), -1, 1)
// and its text carries quality marker tokens derived from a slightly noisy
// copy of that score, so hashed linear models can learn both the router and
// the proxy reward.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "bestroute/core.hpp"
#include "bestroute/detail/rng.hpp"

namespace bestroute {

struct SynthModel {
  std::string name;
  double skill = 0.7;
  double gap = 0.5;  // quality lost from d = 0 to d = 1
  double input_price_per_mtok = 1.0;
  double output_price_per_mtok = 1.0;
  double mean_output_tokens = 250.0;
  double output_tokens_sigma = 0.35;  // lognormal shape
};

/// Stand-ins for the 8 priced models; first entry is the strongest.
inline std::vector<SynthModel> default_synth_roster() {
  return {
      {"gpt-4o", 0.85, 0.30, 5.0, 15.0, 250.0, 0.35},
      {"llama-3.1-8b", 0.75, 0.60, 0.3, 0.61, 300.0, 0.35},
      {"mistral-8x7b", 0.70, 0.50, 0.7, 0.7, 280.0, 0.35},
      {"phi-3-mini", 0.65, 0.70, 0.3, 0.9, 320.0, 0.35},
      {"gpt-3.5-turbo", 0.80, 0.40, 3.0, 6.0, 220.0, 0.35},
      {"phi-3-medium", 0.72, 0.55, 0.5, 1.5, 300.0, 0.35},
      {"codestral-22b", 0.74, 0.50, 1.0, 3.0, 280.0, 0.35},
      {"mistral-7b", 0.60, 0.80, 0.25, 0.25, 260.0, 0.35},
  };
}

struct SynthConfig {
  std::uint64_t seed = 42;
  std::size_t num_queries = 2000;
  std::size_t num_models = 4;
  std::size_t samples_per_model = 20;
  std::vector<SynthModel> models;  // empty: first num_models of the default roster
  double difficulty_mean = 0.5;
  double difficulty_sd = 0.25;
  int difficulty_levels = 10;
  double noise_scale = 0.1;
  double marker_noise = 0.02;  // noise on the quality read off response text
  double mean_input_tokens = 120.0;
  int filler_vocabulary = 300;

  std::vector<SynthModel> roster() const {
    if (!models.empty()) return models;
    auto all = default_synth_roster();
    std::vector<SynthModel> out;
    for (std::size_t i = 0; i < num_models; ++i) {
      if (i < all.size()) {
        out.push_back(all[i]);
      } else {
        out.push_back(SynthModel{"model-" + std::to_string(i), 0.6 - 0.01 * static_cast<double>(i), 0.6, 0.5, 1.0,
                                 250.0, 0.35});
      }
    }
    return out;
  }

  void validate() const {
    const auto r = roster();
    if (r.size() < 2) throw ConfigError("synthetic data needs at least 2 models");
    if (!models.empty() && models.size() != num_models)
      throw ConfigError("num_models does not match the number of configured models");
    if (samples_per_model < 3) throw ConfigError("samples_per_model must be >= 3");
    if (num_queries < 1) throw ConfigError("num_queries must be >= 1");
    if (difficulty_levels < 1) throw ConfigError("difficulty_levels must be >= 1");
    if (!(noise_scale >= 0.0) || !(marker_noise >= 0.0)) throw ConfigError("noise scales must be nonnegative");
    const auto top = std::max_element(r.begin(), r.end(), [](const auto& a, const auto& b) { return a.skill < b.skill; });
    for (const auto& m : r)
      if (&m != &*top && m.skill == top->skill && !all_equal_skill(r))
        throw ConfigError("the reference model's skill must be strictly highest");
  }

  /// Highest-skill model; the first one when every skill is equal.
  std::string reference_name() const {
    const auto r = roster();
    return std::max_element(r.begin(), r.end(), [](const auto& a, const auto& b) { return a.skill < b.skill; })->name;
  }

 private:
  static bool all_equal_skill(const std::vector<SynthModel>& r) {
    return std::all_of(r.begin(), r.end(), [&](const auto& m) { return m.skill == r.front().skill; });
  }
};

inline PriceSheet synthetic_price_sheet(const SynthConfig& cfg) {
  PriceSheet p;
  p.reference = cfg.reference_name();
  for (const auto& m : cfg.roster())
    p.models.push_back(ModelSpec{m.name, m.input_price_per_mtok, m.output_price_per_mtok, std::nullopt, m.name == p.reference});
  return p;
}

namespace detail {

inline std::string quality_markers(double observed) {
  const int fine = std::clamp(static_cast<int>(std::floor((observed + 1.0) / 0.05)), 0, 39);
  const int coarse = std::clamp(static_cast<int>(std::floor((observed + 1.0) / 0.25)), 0, 7);
  return "qf" + std::to_string(fine) + " qc" + std::to_string(coarse);
}

inline std::int64_t lognormal_count(Rng& rng, double mean, double sigma) {
  const double mu = std::log(std::max(mean, 1.0)) - 0.5 * sigma * sigma;
  return std::max<std::int64_t>(1, std::llround(std::exp(rng.normal(mu, sigma))));
}

}  // namespace detail

inline Dataset generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  const auto roster = cfg.roster();
  static constexpr TaskTag kTasks[] = {TaskTag::qa, TaskTag::coding, TaskTag::safety, TaskTag::other};

  Dataset d;
  for (const auto& m : roster) d.model_names.push_back(m.name);
  d.reference_model = cfg.reference_name();

  detail::Rng rng(detail::derive_seed(cfg.seed, std::string_view("synthetic")));
  const auto vocab = static_cast<std::uint64_t>(std::max(1, cfg.filler_vocabulary));
  for (std::size_t qi = 0; qi < cfg.num_queries; ++qi) {
    QueryRecord r;
    char id[32];
    std::snprintf(id, sizeof id, "q%05zu", qi);
    r.id = id;
    r.task = kTasks[rng.below(4)];
    const double difficulty = std::clamp(rng.normal(cfg.difficulty_mean, cfg.difficulty_sd), 0.0, 1.0);
    const int level = std::min(cfg.difficulty_levels - 1, static_cast<int>(difficulty * cfg.difficulty_levels));
    const std::string marker = "lvl" + std::to_string(level);
    r.query_text = std::string(to_string(r.task)) + " " + marker + " " + marker;
    const auto fillers = 3 + rng.below(4);
    for (std::uint64_t f = 0; f < fillers; ++f) r.query_text += " w" + std::to_string(rng.below(vocab));
    r.input_tokens = detail::lognormal_count(rng, cfg.mean_input_tokens, 0.4);

    for (const auto& m : roster) {
      auto& list = r.samples[m.name];
      for (std::size_t s = 0; s < cfg.samples_per_model; ++s) {
        const double gt = std::clamp(m.skill - difficulty * m.gap + rng.normal(0.0, cfg.noise_scale), -1.0, 1.0);
        const double observed = gt + rng.normal(0.0, cfg.marker_noise);
        ResponseSample sample;
        sample.gt_score = gt;
        sample.output_tokens = detail::lognormal_count(rng, m.mean_output_tokens, m.output_tokens_sigma);
        sample.text = "ans " + detail::quality_markers(observed);
        for (int f = 0; f < 3; ++f) sample.text += " r" + std::to_string(rng.below(vocab));
        list.push_back(std::move(sample));
      }
    }
    d.records.push_back(std::move(r));
  }
  validate_dataset(d);
  return d;
}

}  // namespace bestroute
