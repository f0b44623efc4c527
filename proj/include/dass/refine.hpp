#ifndef DASS_REFINE_HPP_
#define DASS_REFINE_HPP_

#include <algorithm>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include "dass/common.hpp"
#include "dass/config.hpp"
#include "dass/dass.hpp"
#include "dass/distill.hpp"
#include "dass/envs.hpp"
#include "dass/policy.hpp"
#include "dass/ppo.hpp"

namespace dass {

struct RefineConfig {
  PpoConfig ppo;
  // weight of the supervised anchor term
  double w = 1.0;
  // anchor tuples drawn per PPO epoch, split across its minibatches
  int n_sp = 3000;
  bool from_scratch = true;

  void validate() const {
    ppo.validate();
    if (!(w >= 0)) throw InvalidArgument("supervision weight w must be >= 0");
    if (n_sp < 1) throw InvalidArgument("n_sp must be >= 1");
  }
};

// Per-iteration style statistic matching the active reward.
inline double style_metric(const RolloutBatch& batch, StyleKind kind) {
  if (batch.size() == 0) return std::numeric_limits<double>::quiet_NaN();
  double s = 0;
  for (const auto& tr : batch.steps) {
    switch (kind) {
      case StyleKind::StableBody: s += tr.info.dv_sq; break;
      case StyleKind::MinAccel: s += tr.info.da_sq; break;
      case StyleKind::HighStep: s += tr.info.amplitude; break;
      case StyleKind::TrackOnly: s += tr.info.tracking_reward; break;
    }
  }
  return s / static_cast<double>(batch.size());
}

// Supplies anchor minibatches. Each epoch a fresh draw of n_sp tuples (without
// replacement while the set is large enough) is cut at the PPO minibatch boundaries.
class AnchorSampler {
 public:
  AnchorSampler(const DassDataset& anchor, int n_sp, std::uint64_t seed)
      : anchor_(anchor), n_sp_(static_cast<std::size_t>(n_sp)), rng_(Rng::stream(seed, "refine/anchor")) {
    if (anchor.empty()) throw InvalidArgument("anchor dataset is empty");
  }

  // Tuple indices for one minibatch.
  std::vector<std::size_t> draw(const MinibatchContext& ctx) {
    if (ctx.epoch != epoch_ || ctx.index == 0 || order_.empty()) refill(ctx.epoch);
    const std::size_t per = n_sp_ / ctx.count;
    const std::size_t begin = ctx.index * per;
    const std::size_t end = (ctx.index + 1 == ctx.count) ? n_sp_ : begin + per;
    return {order_.begin() + static_cast<std::ptrdiff_t>(std::min(begin, n_sp_)),
            order_.begin() + static_cast<std::ptrdiff_t>(std::max(begin, end))};
  }

  const DassDataset& anchor() const { return anchor_; }

 private:
  void refill(int epoch) {
    epoch_ = epoch;
    const std::size_t n = anchor_.size();
    order_.clear();
    std::vector<std::size_t> perm(n);
    // whole permutations first, then a partial one
    while (order_.size() < n_sp_) {
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng_.engine());
      const std::size_t take = std::min(n, n_sp_ - order_.size());
      order_.insert(order_.end(), perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(take));
    }
  }

  const DassDataset& anchor_;
  std::size_t n_sp_;
  Rng rng_;
  int epoch_ = -1;
  std::vector<std::size_t> order_;
};

// w * gradient of the anchor loss on the given tuples, loss reported unweighted.
inline Gradients anchor_gradient(const GaussianPolicy& policy, const DassDataset& anchor,
                                 const std::vector<std::size_t>& idx, double w, double& loss) {
  if (idx.empty()) {
    loss = 0;
    return Gradients::zeros_like(policy.mean_net);
  }
  Mat obs(anchor.obs_dim, static_cast<Eigen::Index>(idx.size()));
  Mat targets(anchor.act_dim, static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) {
    obs.col(static_cast<Eigen::Index>(k)) = anchor.tuples[idx[k]].s;
    targets.col(static_cast<Eigen::Index>(k)) = anchor.tuples[idx[k]].a_mean;
  }
  Gradients g = supervised_gradient(policy, policy.normalize_batch(obs), targets, loss);
  g *= w;
  return g;
}

struct RefineState {
  ActorCritic ac;
  Rng rollout_rng;
  Rng shuffle_rng;
  AnchorSampler sampler;
  RolloutCursor cursor;
};

// One iteration: on-policy collection under the env's reward, GAE, then PPO epochs whose
// actor steps follow grad(surrogate) + w grad(anchor loss). The critic sees RL targets only.
inline TrainLogRow refine_iteration(RefineState& st, Env& env, const RefineConfig& cfg, int iteration,
                                    RolloutBatch* batch_out = nullptr) {
  const DassDataset& anchor = st.sampler.anchor();
  detail::check_dataset_policy(st.ac.policy, anchor);
  RolloutBatch batch = collect_rollouts(env, st.ac, cfg.ppo.steps_per_iteration, st.rollout_rng, st.cursor);
  compute_gae(batch, cfg.ppo.gamma, cfg.ppo.gae_lambda);
  TrainLogRow row;
  row.iteration = iteration;
  summarize_batch(batch, row);
  row.style_metric = style_metric(batch, env.style().kind);
  ActorGradientHook hook = [&](const GaussianPolicy& p, const MinibatchContext& ctx, double& loss) {
    const std::vector<std::size_t> idx = st.sampler.draw(ctx);
    double l = 0;
    Gradients g = anchor_gradient(p, anchor, idx, cfg.w, l);
    loss += l;
    // w = 0 reports the anchor loss but leaves the update untouched
    return cfg.w > 0 ? g : Gradients::zeros_like(p.mean_net);
  };
  UpdateStats us = ppo_update(st.ac, batch, cfg.ppo, st.shuffle_rng, &env, hook);
  row.actor_loss = us.actor_loss;
  row.critic_loss = us.critic_loss;
  row.supervised_loss = us.supervised_loss;
  if (batch_out) *batch_out = std::move(batch);
  return row;
}

// Trains under the env's (new) reward while anchored to `anchor`. Starts from a fresh
// initialization unless from_scratch is false, in which case `init` provides the actor.
inline TrainResult refine(Env& env, const DassDataset& anchor, const RefineConfig& cfg,
                          const std::optional<GaussianPolicy>& init = std::nullopt,
                          const IterationCallback& on_iteration = nullptr) {
  cfg.validate();
  if (anchor.env_id != env.id() || anchor.obs_dim != env.obs_dim() || anchor.act_dim != env.act_dim()) {
    throw InvalidArgument(str_cat("anchor dataset of '", anchor.env_id, "' incompatible with environment '",
                                  env.id(), "'"));
  }
  ActorCritic ac = make_actor_critic(env, cfg.ppo);
  if (!cfg.from_scratch) {
    if (!init) throw InvalidArgument("from_scratch=false needs an initial policy");
    if (init->obs_dim() != env.obs_dim() || init->act_dim() != env.act_dim()) {
      throw InvalidArgument("initial policy incompatible with environment");
    }
    ac.policy = *init;
    ac.actor_opt = AdamState::for_net(ac.policy.mean_net, cfg.ppo.actor_lr);
  }
  RefineState st{std::move(ac), Rng::stream(cfg.ppo.seed, "rollout/0"), Rng::stream(cfg.ppo.seed, "ppo/shuffle"),
                 AnchorSampler(anchor, cfg.n_sp, cfg.ppo.seed), RolloutCursor{}};
  TrainResult res;
  res.log.refine_columns = true;
  res.best_policy = st.ac.policy;
  double best = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < cfg.ppo.max_iterations; ++it) {
    const GaussianPolicy before = st.ac.policy;
    TrainLogRow row = refine_iteration(st, env, cfg, it);
    if (row.mean_step_reward > best) {
      best = row.mean_step_reward;
      res.best_policy = before;
    }
    res.log.rows.push_back(row);
    if (on_iteration) on_iteration(row);
  }
  res.model = std::move(st.ac);
  return res;
}

// Plain PPO from the teacher's parameters with a fresh critic and no anchor.
inline TrainResult finetune_baseline(const GaussianPolicy& teacher, Env& env, const PpoConfig& cfg,
                                     const IterationCallback& on_iteration = nullptr) {
  cfg.validate();
  if (teacher.obs_dim() != env.obs_dim() || teacher.act_dim() != env.act_dim()) {
    throw InvalidArgument("teacher incompatible with environment");
  }
  ActorCritic ac = make_actor_critic(env, cfg);
  ac.policy = teacher;
  ac.actor_opt = AdamState::for_net(ac.policy.mean_net, cfg.actor_lr);
  return train_from(env, std::move(ac), cfg, on_iteration);
}

struct SweepResult {
  double w = 0;
  TrainResult result;
  // anchor loss of the final policy over the whole anchor set
  double anchor_loss = 0;
};

// Refinement repeated for each supervision weight, each on a fresh environment and the same seed.
inline std::vector<SweepResult> sweep_w(const EnvConfig& env_cfg, const DassDataset& anchor, RefineConfig cfg,
                                        const std::vector<double>& ws,
                                        const std::optional<GaussianPolicy>& init = std::nullopt) {
  if (ws.empty()) throw InvalidArgument("sweep needs at least one w");
  std::vector<SweepResult> out;
  for (double w : ws) {
    cfg.w = w;
    auto env = make_env(env_cfg);
    SweepResult r;
    r.w = w;
    r.result = refine(*env, anchor, cfg, init);
    r.anchor_loss = evaluate_loss(r.result.model.policy, anchor);
    out.push_back(std::move(r));
  }
  return out;
}

inline void write_sweep_csv(std::ostream& out, const std::vector<SweepResult>& rs) {
  out << "w,final_mean_step_reward,final_style_metric,anchor_loss\n";
  for (const auto& r : rs) {
    const TrainLogRow last = r.result.log.rows.empty() ? TrainLogRow{} : r.result.log.rows.back();
    out << format_double(r.w) << ',' << format_double(last.mean_step_reward) << ','
        << format_double(last.style_metric) << ',' << format_double(r.anchor_loss) << "\n";
  }
}

}  // namespace dass

#endif  // DASS_REFINE_HPP_
