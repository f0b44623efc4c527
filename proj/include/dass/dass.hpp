#ifndef DASS_DASS_HPP_
#define DASS_DASS_HPP_

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dass/common.hpp"
#include "dass/envs.hpp"
#include "dass/policy.hpp"

namespace dass {

inline constexpr int kDatasetFormatVersion = 1;

// A state visited by the stochastic teacher paired with the teacher's mean action there.
struct DassTuple {
  Vec s;
  Vec a_mean;
};

struct DatasetProvenance {
  std::string teacher_hash;
  double noise_std = 0;
  std::uint64_t seed = 0;
  int terminations = 0;
  int truncations = 0;
  std::string command_line;
  // teacher normalization, copied into distilled students
  Vec obs_shift;
  Vec obs_scale;
  Vec log_std;
  // provenance of merged inputs, one JSON record each
  std::vector<nlohmann::json> parents;
};

struct DassDataset {
  std::string env_id;
  int obs_dim = 0;
  int act_dim = 0;
  std::vector<DassTuple> tuples;
  DatasetProvenance provenance;

  std::size_t size() const { return tuples.size(); }
  bool empty() const { return tuples.empty(); }

  Mat states() const {
    Mat m(obs_dim, static_cast<Eigen::Index>(tuples.size()));
    for (std::size_t i = 0; i < tuples.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = tuples[i].s;
    return m;
  }
  Mat actions() const {
    Mat m(act_dim, static_cast<Eigen::Index>(tuples.size()));
    for (std::size_t i = 0; i < tuples.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = tuples[i].a_mean;
    return m;
  }
};

namespace detail {

inline void check_teacher_env(const GaussianPolicy& teacher, const Env& env) {
  if (teacher.obs_dim() != env.obs_dim() || teacher.act_dim() != env.act_dim()) {
    throw InvalidArgument(str_cat("teacher (", teacher.obs_dim(), "->", teacher.act_dim(),
                                  ") incompatible with environment '", env.id(), "' (",
                                  env.obs_dim(), "->", env.act_dim(), ")"));
  }
}

// Shared loop of DASS and noise-free cloning collection.
inline DassDataset collect_impl(const GaussianPolicy& teacher, Env& env, int n, Rng& rng,
                                bool inject_noise) {
  check_teacher_env(teacher, env);
  if (n < 1) throw InvalidArgument("collection needs N >= 1");
  DassDataset d;
  d.env_id = env.id();
  d.obs_dim = env.obs_dim();
  d.act_dim = env.act_dim();
  d.provenance.teacher_hash = policy_hash(teacher);
  d.provenance.noise_std = inject_noise ? std::exp(teacher.log_std.maxCoeff()) : 0.0;
  d.provenance.seed = rng.seed();
  d.provenance.obs_shift = teacher.obs_shift;
  d.provenance.obs_scale = teacher.obs_scale;
  d.provenance.log_std = teacher.log_std;
  d.tuples.reserve(static_cast<std::size_t>(n));

  Observation obs = env.reset(rng);
  for (int i = 0; i < n; ++i) {
    DassTuple t;
    t.s = obs.packed();
    t.a_mean = teacher.mean(t.s);
    Vec a = t.a_mean;
    if (inject_noise) {
      for (Eigen::Index j = 0; j < a.size(); ++j) a[j] += std::exp(teacher.log_std[j]) * rng.normal();
    }
    d.tuples.push_back(std::move(t));
    StepResult r = env.step(a);
    if (r.done) {
      ++d.provenance.terminations;
      obs = env.reset(rng);
    } else if (r.info.truncated) {
      ++d.provenance.truncations;
      obs = env.reset(rng);
    } else {
      obs = r.obs;
    }
  }
  return d;
}

}  // namespace detail

// Record (s, teacher mean at s) while executing the stochastic teacher; reset on termination.
inline DassDataset collect(const GaussianPolicy& teacher, Env& env, int n, Rng& rng) {
  return detail::collect_impl(teacher, env, n, rng, true);
}

// Behavior-cloning baseline: the executed action is the recorded mean.
inline DassDataset collect_cloning(const GaussianPolicy& teacher, Env& env, int n, Rng& rng) {
  return detail::collect_impl(teacher, env, n, rng, false);
}

inline nlohmann::json provenance_json(const DatasetProvenance& p) {
  auto vec = [](const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  nlohmann::json j;
  j["teacher_hash"] = p.teacher_hash;
  j["noise_std"] = p.noise_std;
  j["seed"] = p.seed;
  j["terminations"] = p.terminations;
  j["truncations"] = p.truncations;
  j["command_line"] = p.command_line;
  j["obs_shift"] = vec(p.obs_shift);
  j["obs_scale"] = vec(p.obs_scale);
  j["log_std"] = vec(p.log_std);
  j["parents"] = p.parents;
  return j;
}

inline DassDataset merge(const std::vector<DassDataset>& parts) {
  if (parts.empty()) throw InvalidArgument("merge needs at least one dataset");
  if (parts.size() == 1) return parts.front();
  DassDataset out;
  out.env_id = parts.front().env_id;
  out.obs_dim = parts.front().obs_dim;
  out.act_dim = parts.front().act_dim;
  out.provenance.obs_shift = parts.front().provenance.obs_shift;
  out.provenance.obs_scale = parts.front().provenance.obs_scale;
  out.provenance.log_std = parts.front().provenance.log_std;
  out.provenance.teacher_hash = "merged";
  for (const auto& d : parts) {
    if (d.env_id != out.env_id || d.obs_dim != out.obs_dim || d.act_dim != out.act_dim) {
      throw InvalidArgument(str_cat("cannot merge datasets of '", out.env_id, "' and '", d.env_id, "'"));
    }
    out.tuples.insert(out.tuples.end(), d.tuples.begin(), d.tuples.end());
    out.provenance.terminations += d.provenance.terminations;
    out.provenance.truncations += d.provenance.truncations;
    out.provenance.noise_std = std::max(out.provenance.noise_std, d.provenance.noise_std);
    out.provenance.parents.push_back(provenance_json(d.provenance));
  }
  return out;
}

// Shuffled disjoint (train, validation) partition.
inline std::pair<DassDataset, DassDataset> split(const DassDataset& d, std::size_t n_validation, Rng& rng) {
  if (n_validation == 0 || n_validation >= d.size()) {
    throw InvalidArgument(str_cat("n_validation must lie in (0, ", d.size(), "), got ", n_validation));
  }
  std::vector<std::size_t> perm(d.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng.engine());
  DassDataset train = d, val = d;
  train.tuples.clear();
  val.tuples.clear();
  for (std::size_t k = 0; k < perm.size(); ++k) {
    (k < n_validation ? val : train).tuples.push_back(d.tuples[perm[k]]);
  }
  return {std::move(train), std::move(val)};
}

struct CoverageStats {
  Vec mean;
  Vec variance;
  Vec min;
  Vec max;
};

// Per-dimension statistics of the recorded states (population variance).
inline CoverageStats coverage_stats(const DassDataset& d) {
  if (d.empty()) throw InvalidArgument("coverage_stats of an empty dataset");
  const Mat s = d.states();
  CoverageStats c;
  const double n = static_cast<double>(s.cols());
  c.mean = s.rowwise().sum() / n;
  const Mat centered = s.colwise() - c.mean;
  c.variance = centered.array().square().rowwise().sum() / n;
  c.min = s.rowwise().minCoeff();
  c.max = s.rowwise().maxCoeff();
  return c;
}

// Indices of the robot velocity components inside a packed observation.
inline std::vector<int> velocity_dims(int obs_dim) {
  const int state = obs_dim / 2;
  std::vector<int> out;
  for (int i = state / 2; i < state; ++i) out.push_back(i);
  return out;
}

// ---------------------------------------------------------------------------
// Line-oriented file format: a JSON header line then one tuple per line.

inline void write_dataset(std::ostream& out, const DassDataset& d) {
  nlohmann::json h;
  h["format_version"] = kDatasetFormatVersion;
  h["env_id"] = d.env_id;
  h["obs_dim"] = d.obs_dim;
  h["act_dim"] = d.act_dim;
  h["provenance"] = provenance_json(d.provenance);
  out << h.dump() << "\n";
  for (const auto& t : d.tuples) {
    out << detail::vec_to_line(t.s) << ' ' << detail::vec_to_line(t.a_mean) << "\n";
  }
}

inline DassDataset read_dataset(std::istream& in) {
  detail::LineReader rd(in);
  const std::string header = rd.require("dataset header");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(str_cat("malformed dataset header: ", e.what()), 1);
  }
  DassDataset d;
  auto vec = [&](const nlohmann::json& j, const char* name) {
    if (!j.contains(name)) return Vec();
    auto v = j.at(name).get<std::vector<double>>();
    return Vec(Eigen::Map<Vec>(v.data(), static_cast<Eigen::Index>(v.size())));
  };
  try {
    const int version = h.at("format_version").get<int>();
    if (version != kDatasetFormatVersion) {
      throw UnsupportedVersion(str_cat("unsupported dataset format_version ", version), 1);
    }
    d.env_id = h.at("env_id").get<std::string>();
    d.obs_dim = h.at("obs_dim").get<int>();
    d.act_dim = h.at("act_dim").get<int>();
    const auto& p = h.at("provenance");
    d.provenance.teacher_hash = p.at("teacher_hash").get<std::string>();
    d.provenance.noise_std = p.at("noise_std").get<double>();
    d.provenance.seed = p.at("seed").get<std::uint64_t>();
    d.provenance.terminations = p.at("terminations").get<int>();
    d.provenance.truncations = p.value("truncations", 0);
    d.provenance.command_line = p.value("command_line", std::string());
    d.provenance.obs_shift = vec(p, "obs_shift");
    d.provenance.obs_scale = vec(p, "obs_scale");
    d.provenance.log_std = vec(p, "log_std");
    if (p.contains("parents")) d.provenance.parents = p.at("parents").get<std::vector<nlohmann::json>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(str_cat("dataset header: ", e.what()), 1);
  }
  if (d.obs_dim < 1 || d.act_dim < 1) throw ParseError("dataset dimensions must be positive", 1);
  const Eigen::Index width = d.obs_dim + d.act_dim;
  std::string line;
  while (rd.next(line)) {
    if (line.empty()) continue;
    Vec v = detail::line_to_vec(line, width, "tuple", rd.line_no());
    d.tuples.push_back({v.head(d.obs_dim), v.tail(d.act_dim)});
  }
  return d;
}

inline void save_dataset(const DassDataset& d, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(str_cat("cannot open '", path, "' for writing"));
  write_dataset(out, d);
  if (!out) throw std::runtime_error(str_cat("failed writing '", path, "'"));
}

inline DassDataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(str_cat("cannot open '", path, "'"));
  return read_dataset(in);
}

inline std::string dataset_to_string(const DassDataset& d) {
  std::ostringstream oss;
  write_dataset(oss, d);
  return oss.str();
}

}  // namespace dass

#endif  // DASS_DASS_HPP_
