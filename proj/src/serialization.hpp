#pragma once

// JSON encodings shared by pool headers and experiment configs.

#include "json.hpp"
#include "ttsnap/error.hpp"
#include "ttsnap/pool.hpp"

namespace ttsnap {

inline nlohmann::json to_json(const MixtureModel& m) {
  return {{"weights", m.weights}, {"means", m.means}, {"comp_std", m.comp_std}};
}

inline MixtureModel mixture_from_json(const nlohmann::json& j) {
  MixtureModel m;
  m.weights = j.at("weights").get<std::vector<double>>();
  m.means = j.at("means").get<std::vector<Point>>();
  m.comp_std = j.at("comp_std").get<std::vector<double>>();
  return m;
}

inline std::string to_string(RewardKind k) {
  return k == RewardKind::ModePreference ? "mode_preference" : "high_frequency_composite";
}

inline RewardKind reward_kind_from_string(const std::string& s) {
  if (s == "mode_preference") return RewardKind::ModePreference;
  if (s == "high_frequency_composite") return RewardKind::HighFrequencyComposite;
  fail(ErrorKind::Config, "unknown reward kind '" + s + "'");
}

inline nlohmann::json to_json(const RewardSpec& r) {
  return {{"name", r.name},
          {"kind", to_string(r.kind)},
          {"target_mode", r.target_mode},
          {"smooth_weight", r.smooth_weight},
          {"rough_weight", r.rough_weight},
          {"frequency", r.frequency}};
}

inline RewardSpec reward_from_json(const nlohmann::json& j) {
  RewardSpec r;
  r.name = j.value("name", r.name);
  r.kind = reward_kind_from_string(j.value("kind", to_string(r.kind)));
  r.target_mode = j.value("target_mode", r.target_mode);
  r.smooth_weight = j.value("smooth_weight", r.smooth_weight);
  r.rough_weight = j.value("rough_weight", r.rough_weight);
  r.frequency = j.value("frequency", r.frequency);
  return r;
}

inline nlohmann::json to_json(const ProblemInstance& p) {
  nlohmann::json extras = nlohmann::json::array();
  for (const auto& r : p.extra_rewards) extras.push_back(to_json(r));
  return {{"id", p.id},
          {"mixture", to_json(p.mixture)},
          {"reward", to_json(p.reward)},
          {"extra_rewards", extras}};
}

inline ProblemInstance instance_from_json(const nlohmann::json& j) {
  ProblemInstance p;
  p.id = j.at("id").get<std::string>();
  p.mixture = mixture_from_json(j.at("mixture"));
  p.reward = reward_from_json(j.at("reward"));
  for (const auto& r : j.value("extra_rewards", nlohmann::json::array()))
    p.extra_rewards.push_back(reward_from_json(r));
  return p;
}

inline nlohmann::json to_json(const DiversityConfig& d) {
  return {{"enabled", d.enabled}, {"alpha", d.alpha}, {"threshold", d.threshold}};
}

inline DiversityConfig diversity_from_json(const nlohmann::json& j) {
  DiversityConfig d;
  d.enabled = j.value("enabled", d.enabled);
  d.alpha = j.value("alpha", d.alpha);
  d.threshold = j.value("threshold", d.threshold);
  return d;
}

}  // namespace ttsnap
