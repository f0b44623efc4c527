#ifndef DASS_NET_HPP_
#define DASS_NET_HPP_

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dass/common.hpp"

namespace dass {

// Dense feed-forward network: tanh on hidden layers, identity output.
// weights[l] has shape (layer_sizes[l+1] x layer_sizes[l]).
struct Mlp {
  std::vector<int> layer_sizes;
  std::vector<Mat> weights;
  std::vector<Vec> biases;

  int input_size() const { return layer_sizes.front(); }
  int output_size() const { return layer_sizes.back(); }
  std::size_t num_layers() const { return weights.size(); }

  std::size_t num_params() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
  }

  // Flat view over all parameters, layer by layer: weights (column-major) then bias.
  double& param(std::size_t i) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      auto nw = static_cast<std::size_t>(weights[l].size());
      if (i < nw) return weights[l].data()[i];
      i -= nw;
      auto nb = static_cast<std::size_t>(biases[l].size());
      if (i < nb) return biases[l][static_cast<Eigen::Index>(i)];
      i -= nb;
    }
    throw InvalidArgument("parameter index out of range");
  }
  double param(std::size_t i) const { return const_cast<Mlp*>(this)->param(i); }

  bool all_finite() const {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
    }
    return true;
  }

  bool operator==(const Mlp& o) const {
    if (layer_sizes != o.layer_sizes) return false;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (weights[l] != o.weights[l] || biases[l] != o.biases[l]) return false;
    }
    return true;
  }
};

// Parameter-shaped accumulator.
struct Gradients {
  std::vector<Mat> weights;
  std::vector<Vec> biases;

  static Gradients zeros_like(const Mlp& net) {
    Gradients g;
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
      g.weights.push_back(Mat::Zero(net.weights[l].rows(), net.weights[l].cols()));
      g.biases.push_back(Vec::Zero(net.biases[l].size()));
    }
    return g;
  }

  Gradients& operator+=(const Gradients& o) {
    check_congruent(o);
    for (std::size_t l = 0; l < weights.size(); ++l) {
      weights[l] += o.weights[l];
      biases[l] += o.biases[l];
    }
    return *this;
  }

  Gradients& operator*=(double s) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      weights[l] *= s;
      biases[l] *= s;
    }
    return *this;
  }

  void add_scaled(const Gradients& o, double s) {
    check_congruent(o);
    for (std::size_t l = 0; l < weights.size(); ++l) {
      weights[l] += s * o.weights[l];
      biases[l] += s * o.biases[l];
    }
  }

  double max_abs() const {
    double m = 0.0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (weights[l].size()) m = std::max(m, weights[l].cwiseAbs().maxCoeff());
      if (biases[l].size()) m = std::max(m, biases[l].cwiseAbs().maxCoeff());
    }
    return m;
  }

  bool all_finite() const {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
    }
    return true;
  }

  bool congruent_with(const Mlp& net) const {
    if (weights.size() != net.weights.size() || biases.size() != net.biases.size()) return false;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (weights[l].rows() != net.weights[l].rows() ||
          weights[l].cols() != net.weights[l].cols() ||
          biases[l].size() != net.biases[l].size()) {
        return false;
      }
    }
    return true;
  }

 private:
  void check_congruent(const Gradients& o) const {
    if (o.weights.size() != weights.size()) throw InvalidArgument("gradient shape mismatch");
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (o.weights[l].rows() != weights[l].rows() || o.weights[l].cols() != weights[l].cols() ||
          o.biases[l].size() != biases[l].size()) {
        throw InvalidArgument("gradient shape mismatch");
      }
    }
  }
};

struct AdamState {
  Gradients m;
  Gradients v;
  std::int64_t t = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_net(const Mlp& net, double lr) {
    AdamState s;
    s.m = Gradients::zeros_like(net);
    s.v = Gradients::zeros_like(net);
    s.lr = lr;
    return s;
  }
};

inline Mlp mlp_init(const std::vector<int>& layer_sizes, std::uint64_t seed) {
  if (layer_sizes.size() < 2) throw InvalidArgument("an Mlp needs at least two layer sizes");
  for (int s : layer_sizes) {
    if (s < 1) throw InvalidArgument(str_cat("layer sizes must be positive, got ", s));
  }
  Mlp net;
  net.layer_sizes = layer_sizes;
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const int fan_in = layer_sizes[l];
    const int fan_out = layer_sizes[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Mat w(fan_out, fan_in);
    // row-major fill order so the draw sequence matches the file layout
    for (int r = 0; r < fan_out; ++r)
      for (int c = 0; c < fan_in; ++c) w(r, c) = rng.uniform(-bound, bound);
    net.weights.push_back(std::move(w));
    net.biases.push_back(Vec::Zero(fan_out));
  }
  return net;
}

inline void check_input(const Mlp& net, Eigen::Index rows) {
  if (rows != net.input_size()) {
    throw InvalidArgument(
        str_cat("input dimension ", rows, " does not match network input size ", net.input_size()));
  }
}

inline Vec mlp_forward(const Mlp& net, const Vec& x) {
  check_input(net, x.size());
  Vec h = x;
  const std::size_t last = net.num_layers() - 1;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    Vec z = net.weights[l] * h + net.biases[l];
    h = (l == last) ? std::move(z) : Vec(z.array().tanh());
  }
  return h;
}

// Column-wise batch forward: xs is (input_size x batch).
inline Mat mlp_forward_batch(const Mlp& net, const Mat& xs) {
  check_input(net, xs.rows());
  Mat h = xs;
  const std::size_t last = net.num_layers() - 1;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    Mat z = net.weights[l] * h;
    z.colwise() += net.biases[l];
    h = (l == last) ? std::move(z) : Mat(z.array().tanh());
  }
  return h;
}

// Reverse-mode gradient of mean_j <dys[:,j], net(xs[:,j])> with respect to the parameters.
inline Gradients mlp_backward(const Mlp& net, const Mat& xs, const Mat& dys) {
  check_input(net, xs.rows());
  if (xs.cols() == 0) throw InvalidArgument("backward needs a nonempty batch");
  if (dys.rows() != net.output_size() || dys.cols() != xs.cols()) {
    throw InvalidArgument(str_cat("cotangent shape (", dys.rows(), "x", dys.cols(),
                                  ") does not match output (", net.output_size(), "x", xs.cols(),
                                  ")"));
  }
  const std::size_t n = net.num_layers();
  std::vector<Mat> acts;  // acts[l] is the input to layer l
  acts.reserve(n);
  acts.push_back(xs);
  for (std::size_t l = 0; l + 1 < n; ++l) {
    Mat z = net.weights[l] * acts.back();
    z.colwise() += net.biases[l];
    acts.push_back(z.array().tanh().matrix());
  }

  Gradients g = Gradients::zeros_like(net);
  const double inv_b = 1.0 / static_cast<double>(xs.cols());
  Mat delta = dys;
  for (std::size_t k = n; k-- > 0;) {
    g.weights[k].noalias() = inv_b * delta * acts[k].transpose();
    g.biases[k] = inv_b * delta.rowwise().sum();
    if (k > 0) {
      Mat back = net.weights[k].transpose() * delta;
      delta = back.array() * (1.0 - acts[k].array().square());
    }
  }
  return g;
}

inline void adam_step(Mlp& net, const Gradients& grads, AdamState& state) {
  if (!grads.congruent_with(net) || !state.m.congruent_with(net) ||
      !state.v.congruent_with(net)) {
    throw InvalidArgument("adam_step: gradient or optimizer state shape mismatch");
  }
  state.t += 1;
  const double b1 = state.beta1, b2 = state.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    p.array() -= state.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + state.epsilon);
  };
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    update(net.weights[l], grads.weights[l], state.m.weights[l], state.v.weights[l]);
    update(net.biases[l], grads.biases[l], state.m.biases[l], state.v.biases[l]);
  }
}

}  // namespace dass

#endif  // DASS_NET_HPP_
