#ifndef DASS_DISTILL_HPP_
#define DASS_DISTILL_HPP_

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dass/common.hpp"
#include "dass/dass.hpp"
#include "dass/net.hpp"
#include "dass/policy.hpp"

namespace dass {

struct DistillConfig {
  std::vector<int> hidden = {16, 16};
  int batch_size = 128;
  double learning_rate = 1e-3;
  // stop once the best training loss improves by less than min_improvement over `window` iterations
  double min_improvement = 1e-5;
  int window = 1000;
  // full-set losses are evaluated every eval_interval iterations
  int eval_interval = 100;
  int max_iterations = 100000;
  std::uint64_t seed = 0;

  void validate() const {
    for (int h : hidden) if (h < 1) throw InvalidArgument("hidden sizes must be positive");
    if (batch_size < 1 || window < 1 || eval_interval < 1 || max_iterations < 0 ||
        !(learning_rate > 0) || min_improvement < 0) {
      throw InvalidArgument("invalid distillation configuration");
    }
  }
};

struct DistillReport {
  double train_loss = 0;
  double validation_loss = 0;
  int iterations = 0;
  std::vector<int> curve_iterations;
  std::vector<double> train_curve;
  std::vector<double> validation_curve;
  std::vector<double> best_train_curve;

  void write_csv(std::ostream& out) const {
    out << "iteration,train_loss,validation_loss,best_train_loss\n";
    for (std::size_t i = 0; i < train_curve.size(); ++i) {
      out << curve_iterations[i] << ',' << format_double(train_curve[i]) << ','
          << format_double(validation_curve[i]) << ',' << format_double(best_train_curve[i]) << "\n";
    }
  }
  void write_summary(std::ostream& out) const {
    out << "dass-distill-report\nformat_version 1\n";
    out << "iterations " << iterations << "\n";
    out << "train_loss " << format_double(train_loss) << "\n";
    out << "validation_loss " << format_double(validation_loss) << "\n";
  }
};

namespace detail {
inline void check_dataset_policy(const GaussianPolicy& p, const DassDataset& d) {
  if (p.obs_dim() != d.obs_dim || p.act_dim() != d.act_dim) {
    throw InvalidArgument(str_cat("policy (", p.obs_dim(), "->", p.act_dim(), ") incompatible with dataset (",
                                  d.obs_dim, "->", d.act_dim, ")"));
  }
}
}  // namespace detail

// Mean over tuples and action dimensions of (m_theta(s) - a_mean)^2.
inline double evaluate_loss(const GaussianPolicy& p, const DassDataset& d) {
  detail::check_dataset_policy(p, d);
  if (d.empty()) throw InvalidArgument("evaluate_loss on an empty dataset");
  const Mat pred = mlp_forward_batch(p.mean_net, p.normalize_batch(d.states()));
  return (pred - d.actions()).squaredNorm() / static_cast<double>(pred.size());
}

// Gradient of the minibatch supervised loss mean((m(s) - a)^2) over samples and action dims.
inline Gradients supervised_gradient(const GaussianPolicy& p, const Mat& obs_norm, const Mat& targets,
                                     double& loss) {
  const Mat pred = mlp_forward_batch(p.mean_net, obs_norm);
  const Mat diff = pred - targets;
  loss = diff.squaredNorm() / static_cast<double>(diff.size());
  // mlp_backward averages over samples; the remaining 1/act_dim is applied here
  return mlp_backward(p.mean_net, obs_norm, (2.0 / static_cast<double>(diff.rows())) * diff);
}

// Uniform minibatch of tuples (with replacement).
inline void sample_minibatch(const DassDataset& d, const GaussianPolicy& p, std::size_t b, Rng& rng,
                             Mat& obs_norm, Mat& targets) {
  Mat obs(d.obs_dim, static_cast<Eigen::Index>(b));
  targets.resize(d.act_dim, static_cast<Eigen::Index>(b));
  for (std::size_t k = 0; k < b; ++k) {
    const DassTuple& t = d.tuples[rng.index(d.size())];
    obs.col(static_cast<Eigen::Index>(k)) = t.s;
    targets.col(static_cast<Eigen::Index>(k)) = t.a_mean;
  }
  obs_norm = p.normalize_batch(obs);
}

struct DistillResult {
  GaussianPolicy policy;
  DistillReport report;
};

// Builds an untrained student carrying the dataset's recorded teacher normalization and log_std.
inline GaussianPolicy make_student(const DassDataset& train, const std::vector<int>& hidden,
                                   std::uint64_t seed) {
  GaussianPolicy s = make_policy(train.env_id, train.obs_dim, train.act_dim, hidden, seed);
  const auto& pv = train.provenance;
  if (pv.obs_shift.size() == train.obs_dim) s.obs_shift = pv.obs_shift;
  if (pv.obs_scale.size() == train.obs_dim) s.obs_scale = pv.obs_scale;
  if (pv.log_std.size() == train.act_dim) s.log_std = pv.log_std;
  return s;
}

// Supervised regression of the student mean onto the stored teacher means.
inline DistillResult distill(const DassDataset& train, const DassDataset& validation,
                             const DistillConfig& cfg, Rng& rng,
                             const std::optional<GaussianPolicy>& initial = std::nullopt) {
  cfg.validate();
  if (train.empty()) throw InvalidArgument("distill: empty training set");
  if (validation.empty()) throw InvalidArgument("distill: empty validation set");
  if (validation.env_id != train.env_id || validation.obs_dim != train.obs_dim ||
      validation.act_dim != train.act_dim) {
    throw InvalidArgument("distill: validation set incompatible with training set");
  }
  DistillResult res;
  res.policy = initial ? *initial : make_student(train, cfg.hidden, Rng::stream(cfg.seed, "distill/init").engine()());
  detail::check_dataset_policy(res.policy, train);
  AdamState opt = AdamState::for_net(res.policy.mean_net, cfg.learning_rate);
  const std::size_t b = static_cast<std::size_t>(cfg.batch_size);

  auto record = [&](int it) {
    const double tl = evaluate_loss(res.policy, train);
    const double vl = evaluate_loss(res.policy, validation);
    const double best = res.report.best_train_curve.empty()
                            ? tl
                            : std::min(tl, res.report.best_train_curve.back());
    res.report.curve_iterations.push_back(it);
    res.report.train_curve.push_back(tl);
    res.report.validation_curve.push_back(vl);
    res.report.best_train_curve.push_back(best);
  };

  record(0);
  const std::size_t lag = static_cast<std::size_t>((cfg.window + cfg.eval_interval - 1) / cfg.eval_interval);
  int it = 0;
  Mat obs_norm, targets;
  while (it < cfg.max_iterations) {
    sample_minibatch(train, res.policy, b, rng, obs_norm, targets);
    double loss = 0;
    Gradients g = supervised_gradient(res.policy, obs_norm, targets, loss);
    if (!std::isfinite(loss) || !g.all_finite()) {
      throw NumericalError(str_cat("non-finite distillation loss at iteration ", it));
    }
    adam_step(res.policy.mean_net, g, opt);
    ++it;
    if (it % cfg.eval_interval == 0) {
      record(it);
      const auto& best = res.report.best_train_curve;
      if (best.size() > lag && best[best.size() - 1 - lag] - best.back() < cfg.min_improvement) break;
    }
  }
  res.report.iterations = it;
  res.report.train_loss = evaluate_loss(res.policy, train);
  res.report.validation_loss = evaluate_loss(res.policy, validation);
  return res;
}

}  // namespace dass

#endif  // DASS_DISTILL_HPP_
