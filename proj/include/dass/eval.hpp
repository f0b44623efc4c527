#ifndef DASS_EVAL_HPP_
#define DASS_EVAL_HPP_

#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dass/common.hpp"
#include "dass/config.hpp"
#include "dass/envs.hpp"
#include "dass/policy.hpp"

namespace dass {

enum class ProtocolVariant { NoNoise, ActionNoise, MassPerturb, Pushes };

inline std::string variant_name(ProtocolVariant v) {
  switch (v) {
    case ProtocolVariant::NoNoise: return "no-noise";
    case ProtocolVariant::ActionNoise: return "action-noise";
    case ProtocolVariant::MassPerturb: return "mass";
    case ProtocolVariant::Pushes: return "pushes";
  }
  return "no-noise";
}

inline ProtocolVariant parse_variant(const std::string& s) {
  if (s == "no-noise") return ProtocolVariant::NoNoise;
  if (s == "action-noise") return ProtocolVariant::ActionNoise;
  if (s == "mass") return ProtocolVariant::MassPerturb;
  if (s == "pushes") return ProtocolVariant::Pushes;
  throw InvalidArgument(str_cat("unknown protocol '", s, "' (expected no-noise, action-noise, mass, pushes)"));
}

// Robustness protocol. The deterministic mean policy is run from an evenly spaced
// grid of initial phases, once per seed.
struct EvalProtocol {
  ProtocolVariant variant = ProtocolVariant::NoNoise;
  double action_noise_std = 0.1;
  double mass_scale = 1.2;
  // push magnitude is scaled from 50 N on a 31 kg body to a 1 kg point mass
  double push_force = 5.0;
  double push_seconds = 0.2;
  double push_period_seconds = 3.0;
  int horizon = 400;
  int phases = 8;
  int seeds = 5;
  // commands to evaluate at; empty means the midpoint of the environment's range
  std::vector<double> commands;
  std::uint64_t seed = 0;

  void validate() const {
    if (horizon < 1) throw InvalidArgument("horizon must be >= 1");
    if (phases < 1) throw InvalidArgument("phase grid must be nonempty");
    if (seeds < 1) throw InvalidArgument("seeds must be >= 1");
  }

  static EvalProtocol of(ProtocolVariant v) {
    EvalProtocol p;
    p.variant = v;
    return p;
  }

  PerturbationConfig perturbation(const Env& env, std::uint64_t episode_seed) const {
    PerturbationConfig pc;
    pc.seed = episode_seed;
    switch (variant) {
      case ProtocolVariant::NoNoise: break;
      case ProtocolVariant::ActionNoise: pc.action_noise_std = action_noise_std; break;
      case ProtocolVariant::MassPerturb: pc.mass_scale = mass_scale; break;
      case ProtocolVariant::Pushes: {
        Vec f = Vec::Zero(env.act_dim());
        f[0] = push_force;
        pc.push = Push::from_seconds(f, push_seconds, push_period_seconds, env.dt());
        break;
      }
    }
    return pc;
  }
};

struct EpisodeStats {
  double command = 0;
  double initial_phase = 0;
  int seed = 0;
  int length = 0;
  double cumulative_reward = 0;
  double tracking_return = 0;
  double mean_dv_sq = 0;
  double mean_da_sq = 0;
  double mean_amplitude = 0;
};

struct EvalReport {
  std::string label;
  std::string policy_hash;
  std::string env_id;
  std::string protocol;
  EvalProtocol config;
  int push_duration_steps = 0;
  int push_period_steps = 0;
  std::vector<EpisodeStats> episodes;
  double mean = 0;
  double std = 0;
  double mean_tracking_return = 0;
  double mean_dv_sq = 0;
  double mean_da_sq = 0;
  double min_amplitude = 0;

  void recompute() {
    const double n = static_cast<double>(episodes.size());
    mean = std = mean_tracking_return = mean_dv_sq = mean_da_sq = 0;
    min_amplitude = std::numeric_limits<double>::infinity();
    if (episodes.empty()) return;
    for (const auto& e : episodes) {
      mean += e.cumulative_reward;
      mean_tracking_return += e.tracking_return;
      mean_dv_sq += e.mean_dv_sq;
      mean_da_sq += e.mean_da_sq;
      min_amplitude = std::min(min_amplitude, e.mean_amplitude);
    }
    mean /= n;
    mean_tracking_return /= n;
    mean_dv_sq /= n;
    mean_da_sq /= n;
    for (const auto& e : episodes) std += (e.cumulative_reward - mean) * (e.cumulative_reward - mean);
    std = std::sqrt(std / n);
  }
};

// Runs one protocol. Episodes stopping early keep their truncated return.
// Episodes are seeded individually, so `workers` > 1 gives the same report as 1.
inline EvalReport evaluate(const GaussianPolicy& policy, const EnvConfig& env_cfg,
                           const EvalProtocol& proto, int workers = 1) {
  proto.validate();
  if (workers < 1) throw InvalidArgument("workers must be >= 1");
  EvalReport rep;
  rep.policy_hash = policy_hash(policy);
  rep.env_id = env_cfg.id;
  rep.protocol = variant_name(proto.variant);
  rep.config = proto;
  std::vector<double> commands = proto.commands;
  {
    auto probe = make_env(env_cfg);
    if (probe->obs_dim() != policy.obs_dim() || probe->act_dim() != policy.act_dim()) {
      throw InvalidArgument("policy and environment dimensions differ");
    }
    if (commands.empty()) {
      auto [lo, hi] = probe->command_range();
      commands.push_back(0.5 * (lo + hi));
    }
    PerturbationConfig pc = proto.perturbation(*probe, 0);
    if (pc.push) {
      rep.push_duration_steps = pc.push->duration_steps;
      rep.push_period_steps = pc.push->period_steps;
    }
  }
  std::vector<int> phase_index;
  for (double command : commands) {
    for (int s = 0; s < proto.seeds; ++s) {
      for (int k = 0; k < proto.phases; ++k) {
        phase_index.push_back(k);
        EpisodeStats ep;
        ep.command = command;
        ep.seed = s;
        ep.initial_phase = 2.0 * std::numbers::pi * k / proto.phases;
        rep.episodes.push_back(ep);
      }
    }
  }
  auto run_episode = [&](std::size_t i) {
    EpisodeStats& ep = rep.episodes[i];
    const int k = phase_index[i];
    const std::uint64_t episode_seed =
        splitmix64(proto.seed ^ fnv1a(str_cat("eval/", ep.seed, "/", k, "/", format_double(ep.command))));
    std::unique_ptr<Env> base = make_env(env_cfg);
    const PerturbationConfig pc = proto.perturbation(*base, episode_seed);
    PerturbedEnv env(std::move(base), pc);
    Observation obs = env.reset_at(ep.initial_phase, ep.command);
    for (int t = 0; t < proto.horizon; ++t) {
      StepResult r = env.step(policy.mean(obs.packed()));
      ++ep.length;
      ep.cumulative_reward += r.reward;
      ep.tracking_return += r.info.tracking_reward;
      ep.mean_dv_sq += r.info.dv_sq;
      ep.mean_da_sq += r.info.da_sq;
      ep.mean_amplitude += r.info.amplitude;
      obs = r.obs;
      if (r.done || r.info.truncated) break;
    }
    ep.mean_dv_sq /= ep.length;
    ep.mean_da_sq /= ep.length;
    ep.mean_amplitude /= ep.length;
  };
  const std::size_t n = rep.episodes.size();
  const std::size_t nw = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
  if (nw <= 1) {
    for (std::size_t i = 0; i < n; ++i) run_episode(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(nw);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < nw; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = next++; i < n; i = next++) run_episode(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  rep.recompute();
  return rep;
}

inline void write_report(std::ostream& out, const EvalReport& r) {
  out << "dass-eval-report\n";
  out << "format_version 1\n";
  out << "label " << r.label << "\n";
  out << "policy_hash " << r.policy_hash << "\n";
  out << "env_id " << r.env_id << "\n";
  out << "protocol " << r.protocol << "\n";
  out << "action_noise_std " << format_double(r.config.action_noise_std) << "\n";
  out << "mass_scale " << format_double(r.config.mass_scale) << "\n";
  out << "push_force " << format_double(r.config.push_force) << "\n";
  out << "push_duration_steps " << r.push_duration_steps << "\n";
  out << "push_period_steps " << r.push_period_steps << "\n";
  out << "horizon " << r.config.horizon << "\n";
  out << "phases " << r.config.phases << "\n";
  out << "seeds " << r.config.seeds << "\n";
  out << "protocol_seed " << r.config.seed << "\n";
  out << "episodes " << r.episodes.size() << "\n";
  out << "mean " << format_double(r.mean) << "\n";
  out << "std " << format_double(r.std) << "\n";
  out << "mean_tracking_return " << format_double(r.mean_tracking_return) << "\n";
  out << "mean_dv_sq " << format_double(r.mean_dv_sq) << "\n";
  out << "mean_da_sq " << format_double(r.mean_da_sq) << "\n";
  out << "min_amplitude " << format_double(r.min_amplitude) << "\n";
  out << "episode command initial_phase seed length cumulative_reward tracking_return mean_dv_sq mean_da_sq mean_amplitude\n";
  for (std::size_t i = 0; i < r.episodes.size(); ++i) {
    const auto& e = r.episodes[i];
    out << i << ' ' << format_double(e.command) << ' ' << format_double(e.initial_phase) << ' '
        << e.seed << ' ' << e.length << ' ' << format_double(e.cumulative_reward) << ' '
        << format_double(e.tracking_return) << ' ' << format_double(e.mean_dv_sq) << ' '
        << format_double(e.mean_da_sq) << ' ' << format_double(e.mean_amplitude) << "\n";
  }
}

inline void save_report(const EvalReport& r, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(str_cat("cannot open '", path, "' for writing"));
  write_report(out, r);
}

inline EvalReport read_report(std::istream& in) {
  detail::LineReader rd(in);
  if (rd.require("header") != "dass-eval-report") throw ParseError("not an evaluation report", 1);
  EvalReport r;
  std::string line;
  auto value = [&](const std::string& key) {
    line = rd.require(key);
    auto [k, v] = detail::split_key(line);
    if (k != key) throw ParseError(str_cat("expected field '", key, "', found '", k, "'"), rd.line_no());
    return v;
  };
  if (value("format_version") != "1") throw UnsupportedVersion("unsupported report format_version", rd.line_no());
  r.label = value("label");
  r.policy_hash = value("policy_hash");
  r.env_id = value("env_id");
  r.protocol = value("protocol");
  r.config.variant = parse_variant(r.protocol);
  r.config.action_noise_std = parse_double(value("action_noise_std"), rd.line_no());
  r.config.mass_scale = parse_double(value("mass_scale"), rd.line_no());
  r.config.push_force = parse_double(value("push_force"), rd.line_no());
  r.push_duration_steps = std::stoi(value("push_duration_steps"));
  r.push_period_steps = std::stoi(value("push_period_steps"));
  r.config.horizon = std::stoi(value("horizon"));
  r.config.phases = std::stoi(value("phases"));
  r.config.seeds = std::stoi(value("seeds"));
  r.config.seed = std::stoull(value("protocol_seed"));
  const int n = std::stoi(value("episodes"));
  r.mean = parse_double(value("mean"), rd.line_no());
  r.std = parse_double(value("std"), rd.line_no());
  r.mean_tracking_return = parse_double(value("mean_tracking_return"), rd.line_no());
  r.mean_dv_sq = parse_double(value("mean_dv_sq"), rd.line_no());
  r.mean_da_sq = parse_double(value("mean_da_sq"), rd.line_no());
  r.min_amplitude = parse_double(value("min_amplitude"), rd.line_no());
  rd.require("episode table header");
  for (int i = 0; i < n; ++i) {
    std::istringstream row(rd.require(str_cat("episode ", i)));
    std::string tok[10];
    for (auto& t : tok) {
      if (!(row >> t)) throw ParseError(str_cat("short episode row ", i), rd.line_no());
    }
    EpisodeStats e;
    e.command = parse_double(tok[1], rd.line_no());
    e.initial_phase = parse_double(tok[2], rd.line_no());
    e.seed = std::stoi(tok[3]);
    e.length = std::stoi(tok[4]);
    e.cumulative_reward = parse_double(tok[5], rd.line_no());
    e.tracking_return = parse_double(tok[6], rd.line_no());
    e.mean_dv_sq = parse_double(tok[7], rd.line_no());
    e.mean_da_sq = parse_double(tok[8], rd.line_no());
    e.mean_amplitude = parse_double(tok[9], rd.line_no());
    r.episodes.push_back(e);
  }
  return r;
}

inline EvalReport load_report(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(str_cat("cannot open '", path, "'"));
  return read_report(in);
}

struct ComparisonTable {
  std::string text;
  std::string csv;
};

// One row per report, in input order.
inline ComparisonTable compare(const std::vector<EvalReport>& reports) {
  ComparisonTable t;
  std::ostringstream txt, csv;
  csv << "label,protocol,mean,std,tracking_return,mean_dv_sq,mean_da_sq\n";
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-24s %-14s %12s %10s %12s\n", "policy", "protocol", "mean", "std", "tracking");
  txt << buf;
  for (const auto& r : reports) {
    const std::string label = r.label.empty() ? r.policy_hash : r.label;
    std::snprintf(buf, sizeof(buf), "%-24s %-14s %12.4f %10.4f %12.4f\n", label.c_str(), r.protocol.c_str(),
                  r.mean, r.std, r.mean_tracking_return);
    txt << buf;
    csv << label << ',' << r.protocol << ',' << format_double(r.mean) << ',' << format_double(r.std) << ','
        << format_double(r.mean_tracking_return) << ',' << format_double(r.mean_dv_sq) << ','
        << format_double(r.mean_da_sq) << "\n";
  }
  t.text = txt.str();
  t.csv = csv.str();
  return t;
}

// Deterministic rollout of the mean policy from phase 0 at the given command, written as CSV.
// Row k holds the state after step k, the action applied at step k, its reward and |v_{k+1} - v_k|.
inline void export_trajectory(const GaussianPolicy& policy, const EnvConfig& env_cfg, int n_steps,
                              std::ostream& out, double command = std::numeric_limits<double>::quiet_NaN()) {
  auto env = make_env(env_cfg);
  if (env->obs_dim() != policy.obs_dim() || env->act_dim() != policy.act_dim()) {
    throw InvalidArgument("policy and environment dimensions differ");
  }
  if (std::isnan(command)) {
    auto [lo, hi] = env->command_range();
    command = 0.5 * (lo + hi);
  }
  const int sd = env->state_dim(), ad = env->act_dim();
  out << "step,phase";
  for (int i = 0; i < sd; ++i) out << ",x" << i;
  for (int i = 0; i < sd; ++i) out << ",xhat" << i;
  for (int i = 0; i < ad; ++i) out << ",a" << i;
  out << ",reward,dv_norm\n";
  Observation obs = env->reset_at(0.0, command);
  for (int k = 0; k < n_steps; ++k) {
    const Vec a = policy.mean(obs.packed());
    StepResult r = env->step(a);
    out << k << ',' << format_double(r.info.phase);
    for (int i = 0; i < sd; ++i) out << ',' << format_double(r.obs.x[i]);
    for (int i = 0; i < sd; ++i) out << ',' << format_double(r.obs.xhat[i]);
    for (int i = 0; i < ad; ++i) out << ',' << format_double(a[i]);
    out << ',' << format_double(r.reward) << ',' << format_double(std::sqrt(r.info.dv_sq)) << "\n";
    obs = (r.done || r.info.truncated) ? env->reset_at(0.0, command) : r.obs;
  }
}

}  // namespace dass

#endif  // DASS_EVAL_HPP_
