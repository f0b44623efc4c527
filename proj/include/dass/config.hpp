#ifndef DASS_CONFIG_HPP_
#define DASS_CONFIG_HPP_

#include <fstream>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "dass/common.hpp"
#include "dass/envs.hpp"

namespace dass {

using json = nlohmann::json;

namespace detail {

// Rejects keys outside `allowed`, naming the closest allowed key.
inline void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw InvalidArgument(str_cat("'", where, "' must be an object"));
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (allowed.count(it.key())) continue;
    std::string best;
    std::size_t best_d = 1000;
    for (const auto& a : allowed) {
      // common prefix length as a cheap similarity
      std::size_t p = 0;
      while (p < a.size() && p < it.key().size() && a[p] == it.key()[p]) ++p;
      const std::size_t d = std::max(a.size(), it.key().size()) - p;
      if (d < best_d) {
        best_d = d;
        best = a;
      }
    }
    throw InvalidArgument(str_cat("unknown key '", it.key(), "' in ", where,
                                  best.empty() ? "" : str_cat(" (did you mean '", best, "'?)")));
  }
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const json::exception& e) {
      throw InvalidArgument(str_cat("bad value for '", key, "': ", e.what()));
    }
  }
}

}  // namespace detail

// Environment selection plus parameter overrides.
struct EnvConfig {
  std::string id = "cycler";
  // overrides of the physical/limit-cycle constants (see params_keys)
  json params = json::object();
  StyleReward style;
  double reward_threshold = 0.3;

  static const std::set<std::string>& common_keys() {
    static const std::set<std::string> k = {"dt",          "kp",          "kd",           "mass",
                                            "u_max",       "init_noise_std", "command_min", "command_max",
                                            "command_step", "episode_cap", "error_bound"};
    return k;
  }
};

inline json style_to_json(const StyleReward& s) {
  return {{"kind", style_name(s.kind)},       {"stable_weight", s.stable_weight},
          {"track_weight", s.track_weight},   {"sigma_dv", s.sigma_dv},
          {"sigma_da", s.sigma_da},           {"lambda", s.lambda},
          {"target_amplitude", s.target_amplitude}};
}

inline StyleReward style_from_json(const json& j) {
  detail::check_keys(j, {"kind", "stable_weight", "track_weight", "sigma_dv", "sigma_da", "lambda",
                         "target_amplitude"},
                     "env.style");
  StyleReward s;
  if (j.contains("kind")) s.kind = parse_style(j.at("kind").get<std::string>());
  detail::read_opt(j, "stable_weight", s.stable_weight);
  detail::read_opt(j, "track_weight", s.track_weight);
  detail::read_opt(j, "sigma_dv", s.sigma_dv);
  detail::read_opt(j, "sigma_da", s.sigma_da);
  detail::read_opt(j, "lambda", s.lambda);
  detail::read_opt(j, "target_amplitude", s.target_amplitude);
  s.validate();
  return s;
}

inline json env_config_to_json(const EnvConfig& c) {
  return {{"id", c.id}, {"params", c.params}, {"style", style_to_json(c.style)},
          {"reward_threshold", c.reward_threshold}};
}

inline EnvConfig env_config_from_json(const json& j) {
  detail::check_keys(j, {"id", "params", "style", "reward_threshold"}, "env");
  EnvConfig c;
  detail::read_opt(j, "id", c.id);
  if (j.contains("params")) c.params = j.at("params");
  if (j.contains("style")) c.style = style_from_json(j.at("style"));
  detail::read_opt(j, "reward_threshold", c.reward_threshold);
  return c;
}

namespace detail {

inline void apply_common(const json& p, CommonParams& c, double& error_bound) {
  read_opt(p, "dt", c.dt);
  read_opt(p, "kp", c.kp);
  read_opt(p, "kd", c.kd);
  read_opt(p, "mass", c.mass);
  read_opt(p, "u_max", c.u_max);
  read_opt(p, "init_noise_std", c.init_noise_std);
  read_opt(p, "command_min", c.command_min);
  read_opt(p, "command_max", c.command_max);
  read_opt(p, "command_step", c.command_step);
  read_opt(p, "episode_cap", c.episode_cap);
  read_opt(p, "error_bound", error_bound);
}

}  // namespace detail

inline std::unique_ptr<LimitCycleEnv> make_env(const EnvConfig& c) {
  std::set<std::string> keys = EnvConfig::common_keys();
  std::unique_ptr<LimitCycleEnv> env;
  double error_bound = 0;
  if (c.id == "cycler") {
    keys.insert("radius");
    detail::check_keys(c.params, keys, "env.params");
    CyclerParams p;
    detail::apply_common(c.params, p, error_bound);
    detail::read_opt(c.params, "radius", p.radius);
    env = std::make_unique<Cycler>(p);
  } else if (c.id == "pendulum-track") {
    keys.insert({"amplitude", "gravity", "length", "damping"});
    detail::check_keys(c.params, keys, "env.params");
    PendulumParams p;
    detail::apply_common(c.params, p, error_bound);
    detail::read_opt(c.params, "amplitude", p.amplitude);
    detail::read_opt(c.params, "gravity", p.gravity);
    detail::read_opt(c.params, "length", p.length);
    detail::read_opt(c.params, "damping", p.damping);
    env = std::make_unique<PendulumTrack>(p);
  } else {
    throw InvalidArgument(str_cat("unknown environment id '", c.id, "' (expected cycler or pendulum-track)"));
  }
  TerminationRule t = env->termination();
  t.reward_threshold = c.reward_threshold;
  if (error_bound > 0) t.error_bound = error_bound;
  env->set_termination(t);
  env->set_style(c.style);
  return env;
}

inline json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(str_cat("cannot open '", path, "'"));
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(str_cat(path, ": ", e.what()));
  }
}

}  // namespace dass

#endif  // DASS_CONFIG_HPP_
