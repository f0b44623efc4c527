#ifndef DASS_ENVS_HPP_
#define DASS_ENVS_HPP_

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <utility>

#include "dass/common.hpp"

namespace dass {

// Robot state x and reference state xhat share one layout.
struct Observation {
  Vec x;
  Vec xhat;

  Vec packed() const {
    Vec s(x.size() + xhat.size());
    s << x, xhat;
    return s;
  }

  static Observation unpack(const Vec& s) {
    if (s.size() % 2 != 0) throw InvalidArgument("packed observation must have even length");
    const auto n = s.size() / 2;
    return {s.head(n), s.tail(n)};
  }
};

enum class StyleKind { TrackOnly, StableBody, MinAccel, HighStep };

inline std::string style_name(StyleKind k) {
  switch (k) {
    case StyleKind::TrackOnly: return "track";
    case StyleKind::StableBody: return "stable";
    case StyleKind::MinAccel: return "minaccel";
    case StyleKind::HighStep: return "highstep";
  }
  return "track";
}

inline StyleKind parse_style(const std::string& s) {
  if (s == "track") return StyleKind::TrackOnly;
  if (s == "stable") return StyleKind::StableBody;
  if (s == "minaccel") return StyleKind::MinAccel;
  if (s == "highstep") return StyleKind::HighStep;
  throw InvalidArgument(str_cat("unknown reward '", s, "' (expected track, stable, minaccel, highstep)"));
}

// Per-step reward variants. Velocity change dv and action change da are per control step.
struct StyleReward {
  StyleKind kind = StyleKind::TrackOnly;
  double stable_weight = 0.5;
  double track_weight = 0.5;
  double sigma_dv = 0.5;
  double sigma_da = 1.0;
  double lambda = 1.0;
  // HighStep target, as a multiple of the reference amplitude
  double target_amplitude = 1.2;

  // lower bound of the reward range is -lambda_max(); the upper bound is 1
  double lambda_max(double reference_amplitude) const {
    return kind == StyleKind::HighStep ? lambda * target_amplitude * reference_amplitude : 0.0;
  }

  void validate() const {
    if (sigma_dv <= 0 || sigma_da <= 0) throw InvalidArgument("style sigmas must be positive");
    if (stable_weight < 0 || track_weight < 0 || stable_weight + track_weight > 1.0 + 1e-12) {
      throw InvalidArgument("stable-body weights must be non-negative and sum to at most 1");
    }
    if (lambda < 0 || target_amplitude < 0) throw InvalidArgument("high-step parameters must be non-negative");
  }
};

struct TerminationRule {
  double reward_threshold = 0.3;
  double error_bound = 1.0;

  void validate() const {
    if (!(reward_threshold > 0 && reward_threshold < 1)) {
      throw InvalidArgument("reward_threshold must lie in (0, 1)");
    }
    if (!(error_bound > 0)) throw InvalidArgument("error_bound must be positive");
  }
};

struct StepInfo {
  double tracking_reward = 0;
  double tracking_error = 0;
  double dv_sq = 0;
  double da_sq = 0;
  double amplitude = 0;
  double phase = 0;
  double command = 0;
  bool truncated = false;  // episode cap reached without entering the termination set
};

struct StepResult {
  Observation obs;
  double reward = 0;
  bool done = false;
  StepInfo info;
};

class Env {
 public:
  virtual ~Env() = default;

  virtual std::string id() const = 0;
  virtual int state_dim() const = 0;
  virtual int act_dim() const = 0;
  int obs_dim() const { return 2 * state_dim(); }

  // Reference-state initialization with random phase, command and perturbation.
  virtual Observation reset(Rng& rng) = 0;
  // Deterministic reset onto the reference (evaluation phase grid).
  virtual Observation reset_at(double phase, double command) = 0;
  virtual StepResult step(const Vec& action) = 0;

  virtual Observation mirror_obs(const Observation& obs) const = 0;
  virtual Vec mirror_act(const Vec& act) const = 0;

  virtual void set_mass_scale(double scale) = 0;
  virtual void set_external_force(const Vec& force) = 0;

  virtual double dt() const = 0;
  virtual double phase() const = 0;
  virtual double command() const = 0;
  // angular rate of the reference phase for a command
  virtual double omega(double command) const = 0;
  virtual double reference_amplitude() const = 0;
  virtual int episode_cap() const = 0;
  virtual std::pair<double, double> command_range() const = 0;

  virtual const StyleReward& style() const = 0;
  virtual void set_style(const StyleReward& style) = 0;
  virtual const TerminationRule& termination() const = 0;
};

namespace detail {

inline double wrap_phase(double phi) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  phi = std::fmod(phi, kTwoPi);
  if (phi < 0) phi += kTwoPi;
  if (phi >= kTwoPi) phi = 0.0;
  return phi;
}

struct CommonParams {
  double dt = 0.03;
  double kp = 100.0;
  double kd = 20.0;
  double mass = 1.0;
  double u_max = 50.0;
  double init_noise_std = 0.02;
  double command_min = 0.5;
  double command_max = 0.5;
  // 0 means continuous; otherwise commands are drawn from the grid min, min+step, ...
  double command_step = 0.0;
  int episode_cap = 400;
};

}  // namespace detail

// Shared machinery for PD-tracked limit-cycle systems. Subclasses supply the
// reference generator and the integrator.
class LimitCycleEnv : public Env {
 public:
  double dt() const override { return params_.dt; }
  double phase() const override { return phase_; }
  double command() const override { return command_; }
  double omega(double command) const override { return 2.0 * std::numbers::pi * command; }
  int episode_cap() const override { return params_.episode_cap; }
  std::pair<double, double> command_range() const override {
    return {params_.command_min, params_.command_max};
  }
  const StyleReward& style() const override { return style_; }
  void set_style(const StyleReward& style) override {
    style.validate();
    style_ = style;
  }
  const TerminationRule& termination() const override { return termination_; }
  void set_termination(const TerminationRule& t) {
    t.validate();
    termination_ = t;
  }

  void set_mass_scale(double scale) override {
    if (!(scale > 0)) throw InvalidArgument("mass_scale must be positive");
    mass_scale_ = scale;
  }
  void set_external_force(const Vec& force) override {
    if (force.size() != act_dim()) throw InvalidArgument("external force dimension mismatch");
    external_force_ = force;
  }

  Observation reset(Rng& rng) override {
    const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double c = sample_command(rng);
    begin_episode(phi, c);
    for (Eigen::Index i = 0; i < state_.size(); ++i) {
      state_[i] += params_.init_noise_std * rng.normal();
    }
    return observe();
  }

  Observation reset_at(double phase, double command) override {
    if (command < params_.command_min - 1e-12 || command > params_.command_max + 1e-12) {
      throw InvalidArgument(str_cat("command ", command, " outside declared range [",
                                    params_.command_min, ", ", params_.command_max, "]"));
    }
    begin_episode(detail::wrap_phase(phase), command);
    return observe();
  }

  StepResult step(const Vec& action) override {
    if (terminated_) throw InvalidState("step called on a terminated episode; call reset first");
    if (!started_) throw InvalidState("step called before reset");
    if (action.size() != act_dim()) {
      throw InvalidArgument(str_cat("action dimension ", action.size(), " != ", act_dim()));
    }
    const Vec prev_vel = velocity(state_);
    const Vec target = reference_position(phase_, command_) + action;
    Vec u = params_.kp * (target - position(state_)) +
            params_.kd * (reference_velocity(phase_, command_) - velocity(state_));
    u = u.cwiseMax(-params_.u_max).cwiseMin(params_.u_max);
    integrate(u + external_force_, params_.mass * mass_scale_);
    phase_ = detail::wrap_phase(phase_ + omega(command_) * params_.dt);
    ++steps_;

    StepResult res;
    res.obs = observe();
    StepInfo& info = res.info;
    info.tracking_error = (position(state_) - reference_position(phase_, command_)).norm();
    info.tracking_reward = tracking_reward(info.tracking_error);
    info.dv_sq = (velocity(state_) - prev_vel).squaredNorm();
    info.da_sq = has_last_action_ ? (action - last_action_).squaredNorm() : 0.0;
    info.amplitude = amplitude(state_, command_);
    info.phase = phase_;
    info.command = command_;
    last_action_ = action;
    has_last_action_ = true;

    res.reward = style_reward(info);
    res.done = res.reward < termination_.reward_threshold ||
               info.tracking_error > termination_.error_bound;
    info.truncated = !res.done && steps_ >= params_.episode_cap;
    terminated_ = res.done || info.truncated;
    if (!res.obs.x.allFinite()) throw NumericalError("environment state became non-finite");
    return res;
  }

  double tracking_reward(double error) const {
    const double r = error / d0();
    return std::exp(-r * r);
  }

  double style_reward(const StepInfo& info) const {
    switch (style_.kind) {
      case StyleKind::TrackOnly:
        return info.tracking_reward;
      case StyleKind::StableBody:
        return style_.stable_weight *
                   std::exp(-info.dv_sq / (style_.sigma_dv * style_.sigma_dv)) +
               style_.track_weight * info.tracking_reward;
      case StyleKind::MinAccel:
        return std::exp(-info.da_sq / (style_.sigma_da * style_.sigma_da));
      case StyleKind::HighStep:
        return info.tracking_reward -
               style_.lambda *
                   std::max(0.0, style_.target_amplitude * reference_amplitude() - info.amplitude);
    }
    return info.tracking_reward;
  }

  // reward length scale
  double d0() const { return 0.5 * reference_amplitude(); }

  const Vec& state() const { return state_; }
  void set_state(const Vec& s) {
    if (s.size() != state_dim()) throw InvalidArgument("state dimension mismatch");
    state_ = s;
  }
  const detail::CommonParams& params() const { return params_; }
  int steps() const { return steps_; }
  bool episode_over() const { return terminated_; }

  Observation observe() const { return {state_, reference_state(phase_, command_)}; }

  virtual Vec reference_position(double phase, double command) const = 0;
  virtual Vec reference_velocity(double phase, double command) const = 0;
  Vec reference_state(double phase, double command) const {
    Vec r(state_dim());
    r << reference_position(phase, command), reference_velocity(phase, command);
    return r;
  }

 protected:
  explicit LimitCycleEnv(detail::CommonParams p, int act_dim) : params_(p) {
    if (!(p.dt > 0) || !(p.mass > 0) || !(p.u_max > 0) || p.init_noise_std < 0 ||
        p.command_min > p.command_max || p.episode_cap < 1 || p.command_step < 0) {
      throw InvalidArgument("invalid environment parameters");
    }
    external_force_ = Vec::Zero(act_dim);
    last_action_ = Vec::Zero(act_dim);
  }

  virtual Vec position(const Vec& s) const = 0;
  virtual Vec velocity(const Vec& s) const = 0;
  virtual void integrate(const Vec& force, double mass) = 0;
  virtual double amplitude(const Vec& s, double command) const = 0;

  double sample_command(Rng& rng) const {
    const double lo = params_.command_min, hi = params_.command_max;
    if (hi <= lo) return lo;
    if (params_.command_step > 0) {
      const auto n = static_cast<std::size_t>(std::floor((hi - lo) / params_.command_step + 1e-9)) + 1;
      return lo + params_.command_step * static_cast<double>(rng.index(n));
    }
    return rng.uniform(lo, hi);
  }

  void begin_episode(double phase, double command) {
    phase_ = phase;
    command_ = command;
    state_ = reference_state(phase_, command_);
    steps_ = 0;
    terminated_ = false;
    started_ = true;
    has_last_action_ = false;
    last_action_.setZero();
  }

  detail::CommonParams params_;
  StyleReward style_;
  TerminationRule termination_;
  Vec state_;
  Vec external_force_;
  Vec last_action_;
  double mass_scale_ = 1.0;
  double phase_ = 0.0;
  double command_ = 0.5;
  int steps_ = 0;
  bool terminated_ = false;
  bool started_ = false;
  bool has_last_action_ = false;
};

// Planar point mass tracking a circle of radius R.
// State (p, v) in R^2 x R^2; reference p = R (cos phi, sin phi).
struct CyclerParams : detail::CommonParams {
  double radius = 1.0;
};

class Cycler final : public LimitCycleEnv {
 public:
  explicit Cycler(CyclerParams p = {}) : LimitCycleEnv(p, 2), radius_(p.radius) {
    if (!(radius_ > 0)) throw InvalidArgument("radius must be positive");
    termination_.error_bound = radius_;
    state_ = reference_state(0.0, params_.command_min);
    command_ = params_.command_min;
  }

  std::string id() const override { return "cycler"; }
  int state_dim() const override { return 4; }
  int act_dim() const override { return 2; }
  double reference_amplitude() const override { return radius_; }

  Vec reference_position(double phase, double) const override {
    return Eigen::Vector2d(radius_ * std::cos(phase), radius_ * std::sin(phase));
  }
  Vec reference_velocity(double phase, double command) const override {
    const double w = omega(command);
    return Eigen::Vector2d(-radius_ * w * std::sin(phase), radius_ * w * std::cos(phase));
  }

  // Point reflection through the origin: a half-period phase shift of the reference.
  Observation mirror_obs(const Observation& obs) const override { return {-obs.x, -obs.xhat}; }
  Vec mirror_act(const Vec& act) const override { return -act; }

 protected:
  Vec position(const Vec& s) const override { return s.head<2>(); }
  Vec velocity(const Vec& s) const override { return s.tail<2>(); }
  double amplitude(const Vec& s, double) const override { return s.head<2>().norm(); }

  void integrate(const Vec& force, double mass) override {
    const Eigen::Vector2d acc = force / mass;
    const Eigen::Vector2d v = state_.tail<2>();
    state_.head<2>() += params_.dt * v;
    state_.tail<2>() += params_.dt * acc;
  }

 private:
  double radius_;
};

// Damped pendulum tracking theta_ref = A sin(phi).
struct PendulumParams : detail::CommonParams {
  double amplitude = 0.5;
  double gravity = 9.81;
  double length = 1.0;
  double damping = 0.1;
};

class PendulumTrack final : public LimitCycleEnv {
 public:
  explicit PendulumTrack(PendulumParams p = {})
      : LimitCycleEnv(p, 1), amp_(p.amplitude), g_(p.gravity), len_(p.length), b_(p.damping) {
    if (!(amp_ > 0) || !(len_ > 0) || b_ < 0) throw InvalidArgument("invalid pendulum parameters");
    termination_.error_bound = amp_;
    state_ = reference_state(0.0, params_.command_min);
    command_ = params_.command_min;
  }

  std::string id() const override { return "pendulum-track"; }
  int state_dim() const override { return 2; }
  int act_dim() const override { return 1; }
  double reference_amplitude() const override { return amp_; }

  Vec reference_position(double phase, double) const override {
    return Vec::Constant(1, amp_ * std::sin(phase));
  }
  Vec reference_velocity(double phase, double command) const override {
    return Vec::Constant(1, amp_ * omega(command) * std::cos(phase));
  }

  Observation mirror_obs(const Observation& obs) const override { return {-obs.x, -obs.xhat}; }
  Vec mirror_act(const Vec& act) const override { return -act; }

 protected:
  Vec position(const Vec& s) const override { return s.head<1>(); }
  Vec velocity(const Vec& s) const override { return s.tail<1>(); }
  double amplitude(const Vec& s, double command) const override {
    const double w = omega(command);
    const double q = s[0], qd = w > 0 ? s[1] / w : 0.0;
    return std::sqrt(q * q + qd * qd);
  }

  void integrate(const Vec& force, double mass) override {
    const double theta = state_[0], theta_dot = state_[1];
    const double acc = -(g_ / len_) * std::sin(theta) - b_ * theta_dot + force[0] / (mass * len_ * len_);
    state_[0] += params_.dt * theta_dot;
    state_[1] += params_.dt * acc;
  }

 private:
  double amp_, g_, len_, b_;
};

// External push: force applied for duration_steps in every period of period_steps.
struct Push {
  Vec force;
  int duration_steps = 0;
  int period_steps = 1;

  // step counts from seconds, rounded to nearest
  static Push from_seconds(Vec force, double duration_s, double period_s, double dt) {
    Push p;
    p.force = std::move(force);
    p.duration_steps = static_cast<int>(std::lround(duration_s / dt));
    p.period_steps = static_cast<int>(std::lround(period_s / dt));
    return p;
  }

  // pushes land at the end of each period so the first one hits a settled gait
  bool active(int step) const { return step % period_steps >= period_steps - duration_steps; }
};

struct PerturbationConfig {
  double action_noise_std = 0.0;
  double mass_scale = 1.0;
  std::optional<Push> push;
  std::uint64_t seed = 0;

  void validate(int act_dim) const {
    if (!(action_noise_std >= 0)) throw InvalidArgument("action_noise_std must be >= 0");
    if (!(mass_scale > 0)) throw InvalidArgument("mass_scale must be > 0");
    if (push) {
      if (push->force.size() != act_dim) throw InvalidArgument("push force dimension mismatch");
      if (push->duration_steps < 0 || push->period_steps < 1 ||
          push->duration_steps >= push->period_steps) {
        throw InvalidArgument("push requires 0 <= duration_steps < period_steps");
      }
    }
  }
};

// Decorator adding action noise, a mass change and periodic pushes to an environment.
class PerturbedEnv final : public Env {
 public:
  PerturbedEnv(std::unique_ptr<Env> base, PerturbationConfig cfg)
      : base_(std::move(base)), cfg_(std::move(cfg)), noise_(Rng::stream(cfg_.seed, "perturb/noise")) {
    if (!base_) throw InvalidArgument("null base environment");
    cfg_.validate(base_->act_dim());
    base_->set_mass_scale(cfg_.mass_scale);
  }

  std::string id() const override { return base_->id(); }
  int state_dim() const override { return base_->state_dim(); }
  int act_dim() const override { return base_->act_dim(); }

  Observation reset(Rng& rng) override {
    step_ = 0;
    apply_push();
    return base_->reset(rng);
  }
  Observation reset_at(double phase, double command) override {
    step_ = 0;
    apply_push();
    return base_->reset_at(phase, command);
  }

  StepResult step(const Vec& action) override {
    Vec a = action;
    if (cfg_.action_noise_std > 0) {
      for (Eigen::Index i = 0; i < a.size(); ++i) a[i] += cfg_.action_noise_std * noise_.normal();
    }
    apply_push();
    StepResult r = base_->step(a);
    ++step_;
    return r;
  }

  Observation mirror_obs(const Observation& obs) const override { return base_->mirror_obs(obs); }
  Vec mirror_act(const Vec& act) const override { return base_->mirror_act(act); }
  void set_mass_scale(double scale) override { base_->set_mass_scale(scale); }
  void set_external_force(const Vec& force) override { base_->set_external_force(force); }
  double dt() const override { return base_->dt(); }
  double phase() const override { return base_->phase(); }
  double command() const override { return base_->command(); }
  double omega(double c) const override { return base_->omega(c); }
  double reference_amplitude() const override { return base_->reference_amplitude(); }
  int episode_cap() const override { return base_->episode_cap(); }
  std::pair<double, double> command_range() const override { return base_->command_range(); }
  const StyleReward& style() const override { return base_->style(); }
  void set_style(const StyleReward& s) override { base_->set_style(s); }
  const TerminationRule& termination() const override { return base_->termination(); }

  const PerturbationConfig& config() const { return cfg_; }
  Env& base() { return *base_; }

 private:
  void apply_push() {
    if (!cfg_.push) return;
    base_->set_external_force(cfg_.push->active(step_) ? cfg_.push->force
                                                       : Vec::Zero(base_->act_dim()));
  }

  std::unique_ptr<Env> base_;
  PerturbationConfig cfg_;
  Rng noise_;
  int step_ = 0;
};

inline std::unique_ptr<Env> wrap_perturbed(std::unique_ptr<Env> env, const PerturbationConfig& cfg) {
  return std::make_unique<PerturbedEnv>(std::move(env), cfg);
}

}  // namespace dass

#endif  // DASS_ENVS_HPP_
