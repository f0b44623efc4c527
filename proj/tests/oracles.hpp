// Independent reference computations shared by the unit and acceptance tests.
#ifndef DASS_TESTS_ORACLES_HPP_
#define DASS_TESTS_ORACLES_HPP_

#include <algorithm>
#include <cmath>
#include <vector>

#include "dass/all.hpp"

namespace oracle {

using dass::Mat;
using dass::Vec;

// Scalar objective L = mean_j <dy_j, net(x_j)>.
inline double pairing(const dass::Mlp& net, const Mat& xs, const Mat& dys) {
  const Mat y = dass::mlp_forward_batch(net, xs);
  return (y.array() * dys.array()).sum() / static_cast<double>(xs.cols());
}

// Worst relative error between mlp_backward and central differences (h = 1e-5)
// over all parameters. Entries where both are tiny are compared absolutely.
inline double fd_relative_error(dass::Mlp net, const Mat& xs, const Mat& dys, double h = 1e-5) {
  const dass::Gradients g = dass::mlp_backward(net, xs, dys);
  std::vector<double> analytic;
  for (std::size_t l = 0; l < g.weights.size(); ++l) {
    for (Eigen::Index i = 0; i < g.weights[l].size(); ++i) analytic.push_back(g.weights[l].data()[i]);
    for (Eigen::Index i = 0; i < g.biases[l].size(); ++i) analytic.push_back(g.biases[l][i]);
  }
  double worst = 0;
  for (std::size_t i = 0; i < net.num_params(); ++i) {
    const double orig = net.param(i);
    net.param(i) = orig + h;
    const double up = pairing(net, xs, dys);
    net.param(i) = orig - h;
    const double down = pairing(net, xs, dys);
    net.param(i) = orig;
    const double numeric = (up - down) / (2 * h);
    const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-6});
    worst = std::max(worst, std::abs(numeric - analytic[i]) / denom);
  }
  return worst;
}

// Runs `count` random (net, input, cotangent) triples; returns the worst relative error.
inline double fd_suite(int count, std::uint64_t seed) {
  dass::Rng rng(seed);
  double worst = 0;
  for (int k = 0; k < count; ++k) {
    std::vector<int> sizes{1 + static_cast<int>(rng.index(6))};
    const int hidden_layers = 1 + static_cast<int>(rng.index(3));
    for (int l = 0; l < hidden_layers; ++l) sizes.push_back(1 + static_cast<int>(rng.index(8)));
    sizes.push_back(1 + static_cast<int>(rng.index(4)));
    dass::Mlp net = dass::mlp_init(sizes, rng.engine()());
    for (auto& b : net.biases) for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = 0.3 * rng.normal();
    const Eigen::Index batch = 1 + static_cast<Eigen::Index>(rng.index(4));
    Mat xs(sizes.front(), batch), dys(sizes.back(), batch);
    for (Eigen::Index i = 0; i < xs.size(); ++i) xs.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < dys.size(); ++i) dys.data()[i] = rng.normal();
    worst = std::max(worst, fd_relative_error(net, xs, dys));
  }
  return worst;
}

// Scalar Adam recurrence written out by hand.
struct ScalarAdam {
  double m = 0, v = 0, b1 = 0.9, b2 = 0.999, eps = 1e-8, lr;
  int t = 0;
  explicit ScalarAdam(double lr_) : lr(lr_) {}
  double step(double p, double g) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    double b1t = 1, b2t = 1;
    for (int i = 0; i < t; ++i) {
      b1t *= b1;
      b2t *= b2;
    }
    const double mhat = m / (1 - b1t), vhat = v / (1 - b2t);
    return p - lr * mhat / (std::sqrt(vhat) + eps);
  }
};

// Adam on a 1x1 linear net vs the scalar recurrence; returns the worst deviation.
inline double adam_scalar_gap(int steps) {
  dass::Mlp net = dass::mlp_init({1, 1}, 3);
  dass::AdamState st = dass::AdamState::for_net(net, 0.01);
  ScalarAdam ref(0.01);
  double w = net.weights[0](0, 0), b = net.biases[0][0];
  ScalarAdam ref_b(0.01);
  double worst = 0;
  for (int k = 0; k < steps; ++k) {
    const double gw = std::sin(0.7 * k) + 0.1 * k, gb = std::cos(1.3 * k) - 0.5;
    dass::Gradients g = dass::Gradients::zeros_like(net);
    g.weights[0](0, 0) = gw;
    g.biases[0][0] = gb;
    dass::adam_step(net, g, st);
    w = ref.step(w, gw);
    b = ref_b.step(b, gb);
    worst = std::max({worst, std::abs(w - net.weights[0](0, 0)), std::abs(b - net.biases[0][0])});
  }
  return worst;
}

// O(n^2) advantage estimate straight from the definition sum_l (gamma lambda)^l delta_{t+l}.
inline std::vector<double> brute_force_gae(const dass::RolloutBatch& b, double gamma, double lambda) {
  const std::size_t n = b.size();
  std::vector<double> delta(n), out(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    const auto& tr = b.steps[t];
    delta[t] = tr.reward + (tr.done ? 0.0 : gamma * tr.next_value) - tr.value;
  }
  for (std::size_t t = 0; t < n; ++t) {
    double coef = 1.0;
    for (std::size_t k = t; k < n; ++k) {
      out[t] += coef * delta[k];
      const auto& tr = b.steps[k];
      if (tr.done || tr.truncated) break;
      coef *= gamma * lambda;
    }
  }
  return out;
}

// Random synthetic batch with episode boundaries.
inline dass::RolloutBatch synthetic_batch(std::size_t n, std::uint64_t seed, double p_end = 0.1) {
  dass::Rng rng(seed);
  dass::RolloutBatch b;
  for (std::size_t t = 0; t < n; ++t) {
    dass::Transition tr;
    tr.reward = rng.normal();
    tr.value = rng.normal();
    const double u = rng.uniform();
    tr.done = u < p_end / 2;
    tr.truncated = !tr.done && u < p_end;
    tr.next_value = tr.done ? 0.0 : rng.normal();
    b.steps.push_back(tr);
  }
  // values chain within an episode
  for (std::size_t t = 0; t + 1 < n; ++t) {
    if (!b.steps[t].done && !b.steps[t].truncated) b.steps[t].next_value = b.steps[t + 1].value;
  }
  return b;
}

}  // namespace oracle

#endif  // DASS_TESTS_ORACLES_HPP_
