#ifndef DASS_POLICY_HPP_
#define DASS_POLICY_HPP_

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "dass/common.hpp"
#include "dass/envs.hpp"
#include "dass/net.hpp"

namespace dass {

inline constexpr int kPolicyFormatVersion = 1;
inline constexpr double kDefaultLogStd = -2.0;

struct Provenance {
  std::string command_line;
  std::uint64_t seed = 0;
  std::string parent_hash = "-";
};

// Fixed-covariance diagonal Gaussian over actions. The mean network sees
// (obs - obs_shift) / obs_scale; log_std is never trained.
struct GaussianPolicy {
  std::string env_id;
  Mlp mean_net;
  Vec log_std;
  Vec obs_shift;
  Vec obs_scale;
  Provenance provenance;

  int obs_dim() const { return mean_net.input_size(); }
  int act_dim() const { return mean_net.output_size(); }

  Vec normalize(const Vec& obs) const {
    check_obs(obs.size());
    return ((obs - obs_shift).array() / obs_scale.array()).matrix();
  }

  Mat normalize_batch(const Mat& obs) const {
    check_obs(obs.rows());
    Mat out = obs.colwise() - obs_shift;
    out.array().colwise() /= obs_scale.array();
    return out;
  }

  Vec mean(const Vec& obs) const { return mlp_forward(mean_net, normalize(obs)); }

  Vec sample(const Vec& obs, Rng& rng) const {
    Vec a = mean(obs);
    for (Eigen::Index j = 0; j < a.size(); ++j) a[j] += std::exp(log_std[j]) * rng.normal();
    return a;
  }

  double log_prob(const Vec& obs, const Vec& action) const {
    return log_prob_given_mean(mean(obs), action);
  }

  double log_prob_given_mean(const Vec& mu, const Vec& action) const {
    if (action.size() != act_dim()) throw InvalidArgument("action dimension mismatch");
    constexpr double kHalfLog2Pi = 0.91893853320467274178;
    double lp = 0.0;
    for (Eigen::Index j = 0; j < action.size(); ++j) {
      const double z = (action[j] - mu[j]) / std::exp(log_std[j]);
      lp += -0.5 * z * z - log_std[j] - kHalfLog2Pi;
    }
    return lp;
  }

  void validate() const {
    if (log_std.size() != act_dim()) throw InvalidArgument("log_std length must equal action dimension");
    if (obs_shift.size() != obs_dim() || obs_scale.size() != obs_dim()) {
      throw InvalidArgument("normalization length must equal observation dimension");
    }
    if ((obs_scale.array() <= 0).any()) throw InvalidArgument("obs_scale must be strictly positive");
    if (!mean_net.all_finite() || !log_std.allFinite() || !obs_shift.allFinite() ||
        !obs_scale.allFinite()) {
      throw InvalidArgument("policy parameters must be finite");
    }
  }

 private:
  void check_obs(Eigen::Index n) const {
    if (n != obs_dim()) {
      throw InvalidArgument(str_cat("observation dimension ", n, " != policy input ", obs_dim()));
    }
  }
};

inline GaussianPolicy make_policy(const std::string& env_id, int obs_dim, int act_dim,
                                  const std::vector<int>& hidden, std::uint64_t seed,
                                  double log_std = kDefaultLogStd) {
  std::vector<int> sizes{obs_dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(act_dim);
  GaussianPolicy p;
  p.env_id = env_id;
  p.mean_net = mlp_init(sizes, seed);
  p.log_std = Vec::Constant(act_dim, log_std);
  p.obs_shift = Vec::Zero(obs_dim);
  p.obs_scale = Vec::Ones(obs_dim);
  return p;
}

struct Normalization {
  Vec shift;
  Vec scale;
};

// Fixed affine observation map from steps of a zero-mean Gaussian random policy.
inline Normalization compute_normalization(Env& env, int n_steps, Rng& rng,
                                           double action_std = std::exp(kDefaultLogStd)) {
  const int n = env.obs_dim();
  Vec sum = Vec::Zero(n), sum_sq = Vec::Zero(n);
  Observation obs = env.reset(rng);
  for (int i = 0; i < n_steps; ++i) {
    const Vec s = obs.packed();
    sum += s;
    sum_sq += s.cwiseProduct(s);
    Vec a(env.act_dim());
    for (Eigen::Index j = 0; j < a.size(); ++j) a[j] = action_std * rng.normal();
    StepResult r = env.step(a);
    obs = (r.done || r.info.truncated) ? env.reset(rng) : r.obs;
  }
  Normalization norm;
  const double cnt = std::max(1, n_steps);
  norm.shift = sum / cnt;
  Vec var = (sum_sq / cnt - norm.shift.cwiseProduct(norm.shift)).cwiseMax(0.0);
  norm.scale = var.cwiseSqrt();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(norm.scale[i] > 1e-6)) norm.scale[i] = 1.0;
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Text serialization

namespace detail {

inline std::string vec_to_line(const Vec& v) {
  std::string s;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) s += ' ';
    s += format_double(v[i]);
  }
  return s;
}

inline Vec line_to_vec(const std::string& text, Eigen::Index expected, const std::string& field,
                       int line) {
  std::istringstream in(text);
  std::vector<double> vals;
  std::string tok;
  while (in >> tok) vals.push_back(parse_double(tok, line));
  if (expected >= 0 && static_cast<Eigen::Index>(vals.size()) != expected) {
    throw ParseError(str_cat("field '", field, "' expects ", expected, " values, got ", vals.size()),
                     line);
  }
  return Eigen::Map<Vec>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

// Reads "key value..." lines with line numbers.
class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  bool next(std::string& line) {
    if (!std::getline(in_, line)) return false;
    ++line_no_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  }
  std::string require(const std::string& what) {
    std::string line;
    if (!next(line)) throw ParseError(str_cat("unexpected end of file, expected ", what), line_no_ + 1);
    return line;
  }
  int line_no() const { return line_no_; }

 private:
  std::istream& in_;
  int line_no_ = 0;
};

inline std::pair<std::string, std::string> split_key(const std::string& line) {
  const auto sp = line.find(' ');
  if (sp == std::string::npos) return {line, ""};
  return {line.substr(0, sp), line.substr(sp + 1)};
}

}  // namespace detail

inline void write_policy(std::ostream& out, const GaussianPolicy& p) {
  out << "dass-policy\n";
  out << "format_version " << kPolicyFormatVersion << "\n";
  out << "env_id " << p.env_id << "\n";
  out << "layer_sizes " << join_ints(p.mean_net.layer_sizes) << "\n";
  out << "activation tanh\n";
  out << "log_std " << detail::vec_to_line(p.log_std) << "\n";
  out << "obs_shift " << detail::vec_to_line(p.obs_shift) << "\n";
  out << "obs_scale " << detail::vec_to_line(p.obs_scale) << "\n";
  out << "provenance.command_line " << p.provenance.command_line << "\n";
  out << "provenance.seed " << p.provenance.seed << "\n";
  out << "provenance.parent_hash " << p.provenance.parent_hash << "\n";
  for (std::size_t l = 0; l < p.mean_net.num_layers(); ++l) {
    const Mat& w = p.mean_net.weights[l];
    out << "weights " << l << "\n";
    for (Eigen::Index r = 0; r < w.rows(); ++r) out << detail::vec_to_line(w.row(r).transpose()) << "\n";
    out << "biases " << l << " " << detail::vec_to_line(p.mean_net.biases[l]) << "\n";
  }
  out << "end\n";
}

inline std::string policy_to_string(const GaussianPolicy& p) {
  std::ostringstream oss;
  write_policy(oss, p);
  return oss.str();
}

// Hash of the parameters only (provenance excluded), as 16 hex digits.
inline std::string policy_hash(const GaussianPolicy& p) {
  GaussianPolicy q = p;
  q.provenance = {};
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(policy_to_string(q))));
  return buf;
}

inline GaussianPolicy read_policy(std::istream& in) {
  detail::LineReader rd(in);
  std::string line = rd.require("header 'dass-policy'");
  if (line != "dass-policy") throw ParseError("not a policy file (missing 'dass-policy' header)", 1);

  std::map<std::string, std::pair<std::string, int>> fields;
  const std::vector<std::string> keys = {"format_version", "env_id",       "layer_sizes",
                                         "activation",     "log_std",      "obs_shift",
                                         "obs_scale",      "provenance.command_line",
                                         "provenance.seed", "provenance.parent_hash"};
  std::string pending;
  while (rd.next(line)) {
    auto [key, value] = detail::split_key(line);
    if (key == "weights") {
      pending = line;
      break;
    }
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw ParseError(str_cat("unknown field '", key, "'"), rd.line_no());
    }
    fields[key] = {value, rd.line_no()};
    if (key == "format_version") {
      int v = 0;
      try {
        v = std::stoi(value);
      } catch (const std::exception&) {
        throw ParseError("malformed format_version", rd.line_no());
      }
      if (v != kPolicyFormatVersion) {
        throw UnsupportedVersion(str_cat("unsupported policy format_version ", v, " (expected ",
                                         kPolicyFormatVersion, ")"),
                                 rd.line_no());
      }
    }
  }
  for (const auto& k : keys) {
    if (!fields.count(k)) throw ParseError(str_cat("missing field '", k, "'"), rd.line_no());
  }

  GaussianPolicy p;
  p.env_id = fields["env_id"].first;
  std::vector<int> sizes;
  try {
    sizes = parse_int_list(fields["layer_sizes"].first);
  } catch (const InvalidArgument& e) {
    throw ParseError(str_cat("field 'layer_sizes': ", e.what()), fields["layer_sizes"].second);
  }
  if (sizes.size() < 2) throw ParseError("field 'layer_sizes' needs at least two entries", fields["layer_sizes"].second);
  for (int s : sizes) {
    if (s < 1) throw ParseError("field 'layer_sizes' must be positive", fields["layer_sizes"].second);
  }
  if (fields["activation"].first != "tanh") {
    throw ParseError("field 'activation': only tanh is supported", fields["activation"].second);
  }
  const int obs_dim = sizes.front(), act_dim = sizes.back();
  p.log_std = detail::line_to_vec(fields["log_std"].first, act_dim, "log_std", fields["log_std"].second);
  p.obs_shift = detail::line_to_vec(fields["obs_shift"].first, obs_dim, "obs_shift", fields["obs_shift"].second);
  p.obs_scale = detail::line_to_vec(fields["obs_scale"].first, obs_dim, "obs_scale", fields["obs_scale"].second);
  p.provenance.command_line = fields["provenance.command_line"].first;
  try {
    p.provenance.seed = std::stoull(fields["provenance.seed"].first);
  } catch (const std::exception&) {
    throw ParseError("field 'provenance.seed' is not an integer", fields["provenance.seed"].second);
  }
  p.provenance.parent_hash = fields["provenance.parent_hash"].first;

  p.mean_net.layer_sizes = sizes;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    if (pending.empty()) pending = rd.require(str_cat("'weights ", l, "'"));
    if (pending != str_cat("weights ", l)) {
      throw ParseError(str_cat("expected 'weights ", l, "'"), rd.line_no());
    }
    pending.clear();
    Mat w(sizes[l + 1], sizes[l]);
    for (int r = 0; r < sizes[l + 1]; ++r) {
      const std::string row = rd.require(str_cat("row ", r, " of weights ", l));
      w.row(r) = detail::line_to_vec(row, sizes[l], str_cat("weights ", l), rd.line_no()).transpose();
    }
    const std::string bl = rd.require(str_cat("'biases ", l, "'"));
    const std::string prefix = str_cat("biases ", l, " ");
    if (bl.rfind(prefix, 0) != 0) throw ParseError(str_cat("expected 'biases ", l, "'"), rd.line_no());
    Vec b = detail::line_to_vec(bl.substr(prefix.size()), sizes[l + 1], str_cat("biases ", l), rd.line_no());
    p.mean_net.weights.push_back(std::move(w));
    p.mean_net.biases.push_back(std::move(b));
  }
  if (rd.require("'end'") != "end") throw ParseError("expected 'end'", rd.line_no());
  try {
    p.validate();
  } catch (const InvalidArgument& e) {
    throw ParseError(e.what(), rd.line_no());
  }
  return p;
}

inline GaussianPolicy policy_from_string(const std::string& text) {
  std::istringstream in(text);
  return read_policy(in);
}

inline void save_policy(const GaussianPolicy& p, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(str_cat("cannot open '", path, "' for writing"));
  write_policy(out, p);
  if (!out) throw std::runtime_error(str_cat("failed writing '", path, "'"));
}

inline GaussianPolicy load_policy(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(str_cat("cannot open '", path, "'"));
  return read_policy(in);
}

}  // namespace dass

#endif  // DASS_POLICY_HPP_
