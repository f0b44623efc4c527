#ifndef DASS_RUN_CONFIG_HPP_
#define DASS_RUN_CONFIG_HPP_

#include <string>
#include <vector>

#include "dass/config.hpp"
#include "dass/distill.hpp"
#include "dass/eval.hpp"
#include "dass/ppo.hpp"
#include "dass/refine.hpp"

// Complete experiment configuration as read from a JSON file. Every section is
// optional; unknown keys are rejected.

namespace dass {

struct CollectSettings {
  int n = 600;
  bool cloning = false;
};

struct RunConfig {
  EnvConfig env;
  PpoConfig ppo;
  CollectSettings collect;
  DistillConfig distill;
  RefineConfig refine;
  EvalProtocol eval;
  std::uint64_t seed = 0;
};

inline json ppo_to_json(const PpoConfig& c) {
  return {{"hidden", c.hidden},
          {"value_hidden", c.value_hidden},
          {"gamma", c.gamma},
          {"gae_lambda", c.gae_lambda},
          {"clip_ratio", c.clip_ratio},
          {"actor_lr", c.actor_lr},
          {"critic_lr", c.critic_lr},
          {"epochs", c.epochs},
          {"minibatch_size", c.minibatch_size},
          {"steps_per_iteration", c.steps_per_iteration},
          {"max_iterations", c.max_iterations},
          {"symmetry_augmentation", c.symmetry_augmentation},
          {"log_std", c.log_std},
          {"normalization_steps", c.normalization_steps}};
}

inline void ppo_from_json(const json& j, PpoConfig& c) {
  detail::check_keys(j, {"hidden", "value_hidden", "gamma", "gae_lambda", "clip_ratio", "actor_lr",
                         "critic_lr", "epochs", "minibatch_size", "steps_per_iteration", "max_iterations",
                         "symmetry_augmentation", "log_std", "normalization_steps"},
                     "ppo");
  detail::read_opt(j, "hidden", c.hidden);
  detail::read_opt(j, "value_hidden", c.value_hidden);
  detail::read_opt(j, "gamma", c.gamma);
  detail::read_opt(j, "gae_lambda", c.gae_lambda);
  detail::read_opt(j, "clip_ratio", c.clip_ratio);
  detail::read_opt(j, "actor_lr", c.actor_lr);
  detail::read_opt(j, "critic_lr", c.critic_lr);
  detail::read_opt(j, "epochs", c.epochs);
  detail::read_opt(j, "minibatch_size", c.minibatch_size);
  detail::read_opt(j, "steps_per_iteration", c.steps_per_iteration);
  detail::read_opt(j, "max_iterations", c.max_iterations);
  detail::read_opt(j, "symmetry_augmentation", c.symmetry_augmentation);
  detail::read_opt(j, "log_std", c.log_std);
  detail::read_opt(j, "normalization_steps", c.normalization_steps);
}

inline json distill_to_json(const DistillConfig& c) {
  return {{"hidden", c.hidden},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"min_improvement", c.min_improvement},
          {"window", c.window},
          {"eval_interval", c.eval_interval},
          {"max_iterations", c.max_iterations}};
}

inline void distill_from_json(const json& j, DistillConfig& c) {
  detail::check_keys(j, {"hidden", "batch_size", "learning_rate", "min_improvement", "window",
                         "eval_interval", "max_iterations"},
                     "distill");
  detail::read_opt(j, "hidden", c.hidden);
  detail::read_opt(j, "batch_size", c.batch_size);
  detail::read_opt(j, "learning_rate", c.learning_rate);
  detail::read_opt(j, "min_improvement", c.min_improvement);
  detail::read_opt(j, "window", c.window);
  detail::read_opt(j, "eval_interval", c.eval_interval);
  detail::read_opt(j, "max_iterations", c.max_iterations);
}

inline json eval_to_json(const EvalProtocol& p) {
  return {{"protocol", variant_name(p.variant)},
          {"action_noise_std", p.action_noise_std},
          {"mass_scale", p.mass_scale},
          {"push_force", p.push_force},
          {"push_seconds", p.push_seconds},
          {"push_period_seconds", p.push_period_seconds},
          {"horizon", p.horizon},
          {"phases", p.phases},
          {"seeds", p.seeds},
          {"commands", p.commands}};
}

inline void eval_from_json(const json& j, EvalProtocol& p) {
  detail::check_keys(j, {"protocol", "action_noise_std", "mass_scale", "push_force", "push_seconds",
                         "push_period_seconds", "horizon", "phases", "seeds", "commands"},
                     "eval");
  if (j.contains("protocol")) p.variant = parse_variant(j.at("protocol").get<std::string>());
  detail::read_opt(j, "action_noise_std", p.action_noise_std);
  detail::read_opt(j, "mass_scale", p.mass_scale);
  detail::read_opt(j, "push_force", p.push_force);
  detail::read_opt(j, "push_seconds", p.push_seconds);
  detail::read_opt(j, "push_period_seconds", p.push_period_seconds);
  detail::read_opt(j, "horizon", p.horizon);
  detail::read_opt(j, "phases", p.phases);
  detail::read_opt(j, "seeds", p.seeds);
  detail::read_opt(j, "commands", p.commands);
}

inline json run_config_to_json(const RunConfig& c) {
  return {{"env", env_config_to_json(c.env)},
          {"ppo", ppo_to_json(c.ppo)},
          {"collect", {{"n", c.collect.n}, {"cloning", c.collect.cloning}}},
          {"distill", distill_to_json(c.distill)},
          {"refine", {{"w", c.refine.w}, {"n_sp", c.refine.n_sp}, {"from_scratch", c.refine.from_scratch}}},
          {"eval", eval_to_json(c.eval)},
          {"seed", c.seed}};
}

// Propagates the top-level seed into every sub-configuration.
inline void apply_seed(RunConfig& c, std::uint64_t seed) {
  c.seed = seed;
  c.ppo.seed = seed;
  c.distill.seed = seed;
  c.eval.seed = seed;
  c.refine.ppo = c.ppo;
}

inline RunConfig run_config_from_json(const json& j) {
  detail::check_keys(j, {"env", "ppo", "collect", "distill", "refine", "eval", "seed"}, "config");
  RunConfig c;
  if (j.contains("env")) c.env = env_config_from_json(j.at("env"));
  if (j.contains("ppo")) ppo_from_json(j.at("ppo"), c.ppo);
  if (j.contains("collect")) {
    const json& cj = j.at("collect");
    detail::check_keys(cj, {"n", "cloning"}, "collect");
    detail::read_opt(cj, "n", c.collect.n);
    detail::read_opt(cj, "cloning", c.collect.cloning);
  }
  if (j.contains("distill")) distill_from_json(j.at("distill"), c.distill);
  if (j.contains("refine")) {
    const json& rj = j.at("refine");
    detail::check_keys(rj, {"w", "n_sp", "from_scratch"}, "refine");
    detail::read_opt(rj, "w", c.refine.w);
    detail::read_opt(rj, "n_sp", c.refine.n_sp);
    detail::read_opt(rj, "from_scratch", c.refine.from_scratch);
  }
  if (j.contains("eval")) eval_from_json(j.at("eval"), c.eval);
  std::uint64_t seed = 0;
  detail::read_opt(j, "seed", seed);
  apply_seed(c, seed);
  c.ppo.validate();
  c.distill.validate();
  c.eval.validate();
  make_env(c.env);  // validates parameter keys
  return c;
}

inline RunConfig load_run_config(const std::string& path) { return run_config_from_json(load_json_file(path)); }

}  // namespace dass

#endif  // DASS_RUN_CONFIG_HPP_
