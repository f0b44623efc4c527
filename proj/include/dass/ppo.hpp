#ifndef DASS_PPO_HPP_
#define DASS_PPO_HPP_

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "dass/common.hpp"
#include "dass/envs.hpp"
#include "dass/net.hpp"
#include "dass/policy.hpp"

namespace dass {

struct Transition {
  Vec obs;
  Vec action;
  double reward = 0;
  double log_prob = 0;
  double value = 0;
  // V(s_{t+1}) at collection time; zero when the episode terminated
  double next_value = 0;
  bool done = false;
  // episode cut by the step cap (bootstrapped, not terminal)
  bool truncated = false;
  double raw_advantage = 0;
  double advantage = 0;
  double return_target = 0;
  StepInfo info;
};

struct RolloutBatch {
  std::vector<Transition> steps;
  int resets = 0;
  std::vector<double> episode_returns;
  std::vector<int> episode_lengths;
  bool has_advantages = false;

  std::size_t size() const { return steps.size(); }
};

struct PpoConfig {
  std::vector<int> hidden = {64, 64};
  std::vector<int> value_hidden = {64, 64};
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_ratio = 0.2;
  double actor_lr = 3e-4;
  double critic_lr = 1e-3;
  int epochs = 10;
  int minibatch_size = 256;
  int steps_per_iteration = 3000;
  int max_iterations = 300;
  bool symmetry_augmentation = false;
  double log_std = kDefaultLogStd;
  int normalization_steps = 10000;
  std::uint64_t seed = 0;

  void validate() const {
    if (gamma < 0 || gamma > 1 || gae_lambda < 0 || gae_lambda > 1) {
      throw InvalidArgument("gamma and gae_lambda must lie in [0, 1]");
    }
    if (!(clip_ratio > 0 && clip_ratio < 1)) throw InvalidArgument("clip_ratio must lie in (0, 1)");
    if (!(actor_lr > 0) || !(critic_lr > 0)) throw InvalidArgument("learning rates must be positive");
    if (epochs < 1 || minibatch_size < 1 || steps_per_iteration < 1 || max_iterations < 0 ||
        normalization_steps < 1) {
      throw InvalidArgument("PPO sizes must be positive");
    }
    for (int h : hidden) if (h < 1) throw InvalidArgument("hidden sizes must be positive");
    for (int h : value_hidden) if (h < 1) throw InvalidArgument("value hidden sizes must be positive");
  }
};

// Policy, critic and their optimizers.
struct ActorCritic {
  GaussianPolicy policy;
  Mlp value;
  AdamState actor_opt;
  AdamState critic_opt;

  double value_of(const Vec& obs) const { return mlp_forward(value, policy.normalize(obs))[0]; }
};

inline ActorCritic make_actor_critic(Env& env, const PpoConfig& cfg) {
  cfg.validate();
  ActorCritic ac;
  ac.policy = make_policy(env.id(), env.obs_dim(), env.act_dim(), cfg.hidden,
                          Rng::stream(cfg.seed, "init/policy").engine()(), cfg.log_std);
  Rng norm_rng = Rng::stream(cfg.seed, "init/normalization");
  Normalization norm = compute_normalization(env, cfg.normalization_steps, norm_rng,
                                             std::exp(cfg.log_std));
  ac.policy.obs_shift = norm.shift;
  ac.policy.obs_scale = norm.scale;
  std::vector<int> vsizes{env.obs_dim()};
  vsizes.insert(vsizes.end(), cfg.value_hidden.begin(), cfg.value_hidden.end());
  vsizes.push_back(1);
  ac.value = mlp_init(vsizes, Rng::stream(cfg.seed, "init/value").engine()());
  ac.actor_opt = AdamState::for_net(ac.policy.mean_net, cfg.actor_lr);
  ac.critic_opt = AdamState::for_net(ac.value, cfg.critic_lr);
  return ac;
}

// Carries the live episode between successive collections.
struct RolloutCursor {
  std::optional<Observation> obs;
  double value = 0;
  double episode_return = 0;
  int episode_length = 0;
};

inline RolloutBatch collect_rollouts(Env& env, const ActorCritic& ac, int n_steps, Rng& rng,
                                     RolloutCursor& cursor) {
  if (env.obs_dim() != ac.policy.obs_dim() || env.act_dim() != ac.policy.act_dim()) {
    throw InvalidArgument("environment and policy dimensions differ");
  }
  RolloutBatch batch;
  if (n_steps <= 0) return batch;
  batch.steps.reserve(static_cast<std::size_t>(n_steps));
  if (!cursor.obs) {
    cursor.obs = env.reset(rng);
    cursor.value = ac.value_of(cursor.obs->packed());
    cursor.episode_return = 0;
    cursor.episode_length = 0;
  }
  for (int t = 0; t < n_steps; ++t) {
    Transition tr;
    tr.obs = cursor.obs->packed();
    const Vec mu = ac.policy.mean(tr.obs);
    tr.action = mu;
    for (Eigen::Index j = 0; j < mu.size(); ++j) {
      tr.action[j] += std::exp(ac.policy.log_std[j]) * rng.normal();
    }
    tr.log_prob = ac.policy.log_prob_given_mean(mu, tr.action);
    tr.value = cursor.value;
    StepResult r = env.step(tr.action);
    tr.reward = r.reward;
    tr.done = r.done;
    tr.truncated = r.info.truncated;
    tr.info = r.info;
    cursor.episode_return += r.reward;
    cursor.episode_length += 1;
    if (r.done) {
      tr.next_value = 0.0;
    } else {
      tr.next_value = ac.value_of(r.obs.packed());
    }
    if (r.done || r.info.truncated) {
      batch.episode_returns.push_back(cursor.episode_return);
      batch.episode_lengths.push_back(cursor.episode_length);
      cursor.episode_return = 0;
      cursor.episode_length = 0;
      cursor.obs = env.reset(rng);
      cursor.value = ac.value_of(cursor.obs->packed());
      ++batch.resets;
    } else {
      cursor.obs = r.obs;
      cursor.value = tr.next_value;
    }
    batch.steps.push_back(std::move(tr));
  }
  return batch;
}

// Fresh-episode convenience overload.
inline RolloutBatch collect_rollouts(Env& env, const ActorCritic& ac, int n_steps, Rng& rng) {
  RolloutCursor cursor;
  return collect_rollouts(env, ac, n_steps, rng, cursor);
}

// Generalized advantage estimation. Chains break at terminations, truncations
// and the end of the batch; the latter two bootstrap from next_value.
inline void compute_gae(RolloutBatch& batch, double gamma, double lambda, bool normalize = true) {
  const std::size_t n = batch.size();
  double next_adv = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    Transition& tr = batch.steps[k];
    const double not_done = tr.done ? 0.0 : 1.0;
    const double delta = tr.reward + gamma * tr.next_value * not_done - tr.value;
    const bool chain = !(tr.done || tr.truncated || k + 1 == n);
    tr.raw_advantage = delta + (chain ? gamma * lambda * next_adv : 0.0);
    tr.return_target = tr.raw_advantage + tr.value;
    next_adv = tr.raw_advantage;
  }
  if (n == 0) {
    batch.has_advantages = true;
    return;
  }
  double mean = 0.0;
  for (const auto& tr : batch.steps) mean += tr.raw_advantage;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (const auto& tr : batch.steps) var += (tr.raw_advantage - mean) * (tr.raw_advantage - mean);
  var /= static_cast<double>(n);
  const double sd = std::sqrt(var);
  for (auto& tr : batch.steps) {
    tr.advantage = normalize ? (sd > 0 ? (tr.raw_advantage - mean) / (sd + 1e-8) : 0.0)
                             : tr.raw_advantage;
  }
  batch.has_advantages = true;
}

struct UpdateStats {
  double actor_loss = 0;
  double critic_loss = 0;
  double supervised_loss = 0;
  double clip_fraction = 0;
  int minibatches = 0;
};

// Position of a minibatch within one update.
struct MinibatchContext {
  int epoch = 0;
  std::size_t index = 0;
  std::size_t count = 1;
  // rollout samples in this minibatch (mirrored copies excluded)
  std::size_t size = 0;
};

// A supervised term added to the actor gradient of one minibatch.
// Returns the (already weighted) gradient and adds its loss to `loss`.
using ActorGradientHook =
    std::function<Gradients(const GaussianPolicy&, const MinibatchContext&, double& loss)>;

// Gradient of the clipped surrogate loss -mean(min(rho A, clip(rho) A)) w.r.t. the mean network.
// obs: normalized (obs_dim x B). Returns the loss through `loss` and the clipped fraction through `clipped`.
inline Gradients surrogate_gradient(const GaussianPolicy& policy, const Mat& obs_norm,
                                    const Mat& actions, const Vec& old_log_prob,
                                    const Vec& advantages, double clip_ratio, double& loss,
                                    double& clipped) {
  const Eigen::Index B = obs_norm.cols();
  const Mat mu = mlp_forward_batch(policy.mean_net, obs_norm);
  const Vec inv_var = (-2.0 * policy.log_std).array().exp();
  Mat dmu = Mat::Zero(mu.rows(), B);
  loss = 0.0;
  clipped = 0.0;
  for (Eigen::Index i = 0; i < B; ++i) {
    const double lp = policy.log_prob_given_mean(mu.col(i), actions.col(i));
    const double rho = std::exp(lp - old_log_prob[i]);
    const double adv = advantages[i];
    const double s1 = rho * adv;
    const double s2 = std::clamp(rho, 1.0 - clip_ratio, 1.0 + clip_ratio) * adv;
    loss -= std::min(s1, s2);
    if (s1 <= s2) {
      // d(-rho A)/dmu = -A rho (a - mu) / sigma^2
      dmu.col(i) = -adv * rho * ((actions.col(i) - mu.col(i)).array() * inv_var.array()).matrix();
    } else {
      clipped += 1.0;
    }
  }
  loss /= static_cast<double>(B);
  clipped /= static_cast<double>(B);
  return mlp_backward(policy.mean_net, obs_norm, dmu);
}

// Gradient of the critic loss mean((V - target)^2).
inline Gradients critic_gradient(const Mlp& value, const Mat& obs_norm, const Vec& targets,
                                 double& loss) {
  const Mat v = mlp_forward_batch(value, obs_norm);
  const Mat diff = v - targets.transpose();
  loss = diff.squaredNorm() / static_cast<double>(obs_norm.cols());
  return mlp_backward(value, obs_norm, 2.0 * diff);
}

// One PPO update: epochs x shuffled minibatches, Adam steps on actor and critic.
// `mirror` enables symmetry augmentation when non-null.
inline UpdateStats ppo_update(ActorCritic& ac, const RolloutBatch& batch, const PpoConfig& cfg,
                              Rng& shuffle_rng, const Env* mirror = nullptr,
                              const ActorGradientHook& hook = nullptr) {
  if (!batch.has_advantages) throw InvalidState("ppo_update requires compute_gae first");
  UpdateStats stats;
  const std::size_t n = batch.size();
  if (n == 0) return stats;
  const int od = ac.policy.obs_dim(), ad = ac.policy.act_dim();
  const bool sym = cfg.symmetry_augmentation && mirror != nullptr;

  // Dataset in column form; mirrored copies get the pre-update policy's log-probabilities.
  const Eigen::Index cols = static_cast<Eigen::Index>(sym ? 2 * n : n);
  Mat obs(od, cols), act(ad, cols);
  Vec old_lp(cols), adv(cols), ret(cols);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    const Transition& tr = batch.steps[i];
    obs.col(c) = tr.obs;
    act.col(c) = tr.action;
    old_lp[c] = tr.log_prob;
    adv[c] = tr.advantage;
    ret[c] = tr.return_target;
    if (sym) {
      const auto m = static_cast<Eigen::Index>(n + i);
      obs.col(m) = mirror->mirror_obs(Observation::unpack(tr.obs)).packed();
      act.col(m) = mirror->mirror_act(tr.action);
      old_lp[m] = ac.policy.log_prob(obs.col(m), act.col(m));
      adv[m] = tr.advantage;
      ret[m] = tr.return_target;
    }
  }
  const Mat obs_norm = ac.policy.normalize_batch(obs);

  const std::size_t mb = std::min<std::size_t>(static_cast<std::size_t>(cfg.minibatch_size), n);
  const std::size_t n_mb = std::max<std::size_t>(1, n / mb);
  std::vector<std::size_t> perm(n);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), shuffle_rng.engine());
    for (std::size_t b = 0; b < n_mb; ++b) {
      const std::size_t begin = b * mb;
      const std::size_t end = (b + 1 == n_mb) ? n : begin + mb;
      const auto B = static_cast<Eigen::Index>((end - begin) * (sym ? 2 : 1));
      Mat mo(od, B), ma(ad, B);
      Vec mlp_(B), madv(B), mret(B);
      Eigen::Index c = 0;
      for (std::size_t k = begin; k < end; ++k) {
        const auto src = static_cast<Eigen::Index>(perm[k]);
        mo.col(c) = obs_norm.col(src);
        ma.col(c) = act.col(src);
        mlp_[c] = old_lp[src];
        madv[c] = adv[src];
        mret[c] = ret[src];
        ++c;
        if (sym) {
          const auto m = static_cast<Eigen::Index>(n) + src;
          mo.col(c) = obs_norm.col(m);
          ma.col(c) = act.col(m);
          mlp_[c] = old_lp[m];
          madv[c] = adv[m];
          mret[c] = ret[m];
          ++c;
        }
      }
      double aloss = 0, clipped = 0, closs = 0, sloss = 0;
      Gradients ga = surrogate_gradient(ac.policy, mo, ma, mlp_, madv, cfg.clip_ratio, aloss, clipped);
      if (hook) ga += hook(ac.policy, MinibatchContext{epoch, b, n_mb, end - begin}, sloss);
      Gradients gc = critic_gradient(ac.value, mo, mret, closs);
      if (!std::isfinite(aloss) || !std::isfinite(closs) || !std::isfinite(sloss) ||
          !ga.all_finite() || !gc.all_finite()) {
        throw NumericalError(str_cat("non-finite loss in PPO update (epoch ", epoch, ", minibatch ",
                                     b, "): actor=", aloss, " critic=", closs,
                                     " supervised=", sloss));
      }
      adam_step(ac.policy.mean_net, ga, ac.actor_opt);
      adam_step(ac.value, gc, ac.critic_opt);
      stats.actor_loss += aloss;
      stats.critic_loss += closs;
      stats.supervised_loss += sloss;
      stats.clip_fraction += clipped;
      ++stats.minibatches;
    }
  }
  if (stats.minibatches) {
    const double k = stats.minibatches;
    stats.actor_loss /= k;
    stats.critic_loss /= k;
    stats.supervised_loss /= k;
    stats.clip_fraction /= k;
  }
  return stats;
}

struct TrainLogRow {
  int iteration = 0;
  double mean_return = std::numeric_limits<double>::quiet_NaN();
  double mean_episode_len = std::numeric_limits<double>::quiet_NaN();
  double actor_loss = 0;
  double critic_loss = 0;
  double mean_step_reward = 0;
  double supervised_loss = std::numeric_limits<double>::quiet_NaN();
  double style_metric = std::numeric_limits<double>::quiet_NaN();
};

struct TrainLog {
  std::vector<TrainLogRow> rows;
  bool refine_columns = false;

  void write_csv(std::ostream& out) const {
    out << "iteration,mean_return,mean_episode_len,actor_loss,critic_loss,mean_step_reward";
    if (refine_columns) out << ",supervised_loss,style_metric";
    out << "\n";
    for (const auto& r : rows) {
      out << r.iteration << ',' << format_double(r.mean_return) << ','
          << format_double(r.mean_episode_len) << ',' << format_double(r.actor_loss) << ','
          << format_double(r.critic_loss) << ',' << format_double(r.mean_step_reward);
      if (refine_columns) {
        out << ',' << format_double(r.supervised_loss) << ',' << format_double(r.style_metric);
      }
      out << "\n";
    }
  }

  void save_csv(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(str_cat("cannot open '", path, "' for writing"));
    write_csv(out);
  }

  // Mean of mean_step_reward over all iterations (area under the learning curve per iteration).
  double mean_reward_auc() const {
    if (rows.empty()) return 0.0;
    double s = 0;
    for (const auto& r : rows) s += r.mean_step_reward;
    return s / static_cast<double>(rows.size());
  }
};

inline void summarize_batch(const RolloutBatch& batch, TrainLogRow& row) {
  if (!batch.episode_returns.empty()) {
    row.mean_return = std::accumulate(batch.episode_returns.begin(), batch.episode_returns.end(), 0.0) /
                      static_cast<double>(batch.episode_returns.size());
    double len = 0;
    for (int l : batch.episode_lengths) len += l;
    row.mean_episode_len = len / static_cast<double>(batch.episode_lengths.size());
  }
  double r = 0;
  for (const auto& tr : batch.steps) r += tr.reward;
  row.mean_step_reward = batch.size() ? r / static_cast<double>(batch.size()) : 0.0;
}

struct TrainResult {
  ActorCritic model;
  GaussianPolicy best_policy;
  TrainLog log;
};

using IterationCallback = std::function<void(const TrainLogRow&)>;

// Iterated collect -> GAE -> update from an existing actor-critic.
inline TrainResult train_from(Env& env, ActorCritic ac, const PpoConfig& cfg,
                              const IterationCallback& on_iteration = nullptr) {
  cfg.validate();
  TrainResult res;
  Rng rollout_rng = Rng::stream(cfg.seed, "rollout/0");
  Rng shuffle_rng = Rng::stream(cfg.seed, "ppo/shuffle");
  RolloutCursor cursor;
  double best = -std::numeric_limits<double>::infinity();
  res.best_policy = ac.policy;
  for (int it = 0; it < cfg.max_iterations; ++it) {
    RolloutBatch batch = collect_rollouts(env, ac, cfg.steps_per_iteration, rollout_rng, cursor);
    compute_gae(batch, cfg.gamma, cfg.gae_lambda);
    TrainLogRow row;
    row.iteration = it;
    summarize_batch(batch, row);
    // the best policy is the one that produced the best batch
    if (row.mean_step_reward > best) {
      best = row.mean_step_reward;
      res.best_policy = ac.policy;
    }
    UpdateStats st = ppo_update(ac, batch, cfg, shuffle_rng, &env);
    row.actor_loss = st.actor_loss;
    row.critic_loss = st.critic_loss;
    res.log.rows.push_back(row);
    if (on_iteration) on_iteration(row);
  }
  res.model = std::move(ac);
  return res;
}

inline TrainResult train(Env& env, const PpoConfig& cfg,
                         const IterationCallback& on_iteration = nullptr) {
  return train_from(env, make_actor_critic(env, cfg), cfg, on_iteration);
}

}  // namespace dass

#endif  // DASS_PPO_HPP_
