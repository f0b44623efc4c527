#include <gtest/gtest.h>

#include <filesystem>

#include "oracles.hpp"

using namespace dass;

namespace {

GaussianPolicy teacher_for(const Env& env, std::uint64_t seed = 3) {
  GaussianPolicy p = make_policy(env.id(), env.obs_dim(), env.act_dim(), {8, 8}, seed);
  for (auto& w : p.mean_net.weights) w *= 0.2;
  return p;
}

}  // namespace

TEST(Collect, ActionsAreExactTeacherMeans) {
  Cycler env;
  GaussianPolicy t = teacher_for(env);
  Rng rng(1);
  DassDataset d = collect(t, env, 500, rng);
  ASSERT_EQ(d.size(), 500u);
  for (const auto& tup : d.tuples) EXPECT_EQ(tup.a_mean, t.mean(tup.s));
  EXPECT_EQ(d.provenance.teacher_hash, policy_hash(t));
  EXPECT_EQ(d.provenance.noise_std, std::exp(-2.0));
  EXPECT_EQ(d.provenance.obs_scale, t.obs_scale);
}

TEST(Collect, CloningExecutesTheMean) {
  // with noise-free execution the recorded states follow the deterministic rollout
  Cycler env, replay;
  GaussianPolicy t = teacher_for(env);
  Rng rng(2);
  DassDataset d = collect_cloning(t, env, 50, rng);
  Rng r2(2);
  Observation o = replay.reset(r2);
  EXPECT_EQ(d.tuples[0].s, o.packed());
  for (std::size_t i = 0; i + 1 < d.size(); ++i) {
    StepResult r = replay.step(d.tuples[i].a_mean);
    ASSERT_FALSE(r.done || r.info.truncated);
    EXPECT_EQ(d.tuples[i + 1].s, r.obs.packed());
  }
  EXPECT_EQ(d.provenance.noise_std, 0.0);
}

TEST(Collect, ResetsOnTermination) {
  Cycler env;
  GaussianPolicy t = teacher_for(env);
  t.mean_net.biases.back().setConstant(2.0);  // drives the mass off the circle
  Rng rng(4);
  DassDataset d = collect(t, env, 300, rng);
  EXPECT_EQ(d.size(), 300u);
  EXPECT_GT(d.provenance.terminations, 0);
}

TEST(Collect, DeterministicUnderSeed) {
  Cycler e1, e2;
  GaussianPolicy t = teacher_for(e1);
  Rng a(9), b(9);
  EXPECT_EQ(dataset_to_string(collect(t, e1, 200, a)), dataset_to_string(collect(t, e2, 200, b)));
}

TEST(Collect, IncompatibleTeacherRejected) {
  PendulumTrack env;
  Cycler c;
  GaussianPolicy t = teacher_for(c);
  Rng rng(0);
  EXPECT_THROW(collect(t, env, 10, rng), InvalidArgument);
  EXPECT_THROW(collect(t, c, 0, rng), InvalidArgument);
}

TEST(Coverage, DassWidensVelocityVariance) {
  Cycler e1, e2;
  GaussianPolicy t = teacher_for(e1);
  Rng a(5), b(6);
  CoverageStats sd = coverage_stats(collect(t, e1, 3000, a));
  CoverageStats sc = coverage_stats(collect_cloning(t, e2, 3000, b));
  int strict = 0;
  const auto dims = velocity_dims(8);
  for (int i : dims) {
    EXPECT_GE(sd.variance[i], sc.variance[i]);
    strict += sd.variance[i] > sc.variance[i] ? 1 : 0;
  }
  EXPECT_GE(2 * strict, static_cast<int>(dims.size()));
}

TEST(Coverage, PopulationVariance) {
  DassDataset d;
  d.env_id = "x";
  d.obs_dim = 1;
  d.act_dim = 1;
  for (double v : {1.0, 2.0, 3.0, 6.0}) d.tuples.push_back({Vec::Constant(1, v), Vec::Zero(1)});
  CoverageStats c = coverage_stats(d);
  EXPECT_DOUBLE_EQ(c.mean[0], 3.0);
  EXPECT_DOUBLE_EQ(c.variance[0], (4 + 1 + 0 + 9) / 4.0);
  EXPECT_EQ(c.min[0], 1.0);
  EXPECT_EQ(c.max[0], 6.0);
  EXPECT_EQ(velocity_dims(8), (std::vector<int>{2, 3}));
  EXPECT_EQ(velocity_dims(4), (std::vector<int>{1}));
}

TEST(Merge, ConcatenatesAndTracksParents) {
  Cycler env;
  GaussianPolicy t1 = teacher_for(env, 1), t2 = teacher_for(env, 2);
  Rng a(1), b(2);
  DassDataset d1 = collect(t1, env, 100, a), d2 = collect(t2, env, 50, b);
  DassDataset m = merge({d1, d2});
  ASSERT_EQ(m.size(), 150u);
  EXPECT_EQ(m.tuples[0].s, d1.tuples[0].s);
  EXPECT_EQ(m.tuples[100].a_mean, d2.tuples[0].a_mean);
  ASSERT_EQ(m.provenance.parents.size(), 2u);
  EXPECT_EQ(m.provenance.parents[1]["teacher_hash"], policy_hash(t2));
}

TEST(Merge, RejectsMixedEnvironments) {
  Cycler c;
  PendulumTrack p;
  Rng a(1), b(2);
  DassDataset d1 = collect(teacher_for(c), c, 10, a), d2 = collect(teacher_for(p), p, 10, b);
  EXPECT_THROW(merge({d1, d2}), InvalidArgument);
  EXPECT_THROW(merge({}), InvalidArgument);
}

TEST(Split, DisjointAndComplete) {
  Cycler env;
  Rng a(1), s(3);
  DassDataset d = collect(teacher_for(env), env, 100, a);
  auto [tr, va] = split(d, 30, s);
  EXPECT_EQ(tr.size(), 70u);
  EXPECT_EQ(va.size(), 30u);
  std::vector<std::string> all, parts;
  for (const auto& t : d.tuples) all.push_back(detail::vec_to_line(t.s));
  for (const auto& t : tr.tuples) parts.push_back(detail::vec_to_line(t.s));
  for (const auto& t : va.tuples) parts.push_back(detail::vec_to_line(t.s));
  std::sort(all.begin(), all.end());
  std::sort(parts.begin(), parts.end());
  EXPECT_EQ(all, parts);
  EXPECT_THROW(split(d, 0, s), InvalidArgument);
  EXPECT_THROW(split(d, 100, s), InvalidArgument);
}

TEST(DatasetFormat, RoundTripIsByteIdentical) {
  Cycler env;
  Rng a(1);
  DassDataset d = collect(teacher_for(env), env, 40, a);
  d.provenance.command_line = "dass collect --n 40";
  const std::string s = dataset_to_string(d);
  std::istringstream in(s);
  DassDataset e = read_dataset(in);
  EXPECT_EQ(dataset_to_string(e), s);
  EXPECT_EQ(e.tuples[7].s, d.tuples[7].s);
  const auto path = std::filesystem::temp_directory_path() / "dass_dataset_roundtrip.dass";
  save_dataset(d, path.string());
  EXPECT_EQ(dataset_to_string(load_dataset(path.string())), s);
  std::filesystem::remove(path);
}

TEST(DatasetFormat, ErrorsCarryLineNumbers) {
  Cycler env;
  Rng a(1);
  std::string s = dataset_to_string(collect(teacher_for(env), env, 5, a));
  std::string bad = s + "1 2 3\n";
  std::istringstream in(bad);
  try {
    read_dataset(in);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 7);
  }
  std::string v2 = s;
  v2.replace(v2.find("\"format_version\":1"), 18, "\"format_version\":9");
  std::istringstream in2(v2);
  EXPECT_THROW(read_dataset(in2), UnsupportedVersion);
  std::istringstream in3("garbage\n");
  EXPECT_THROW(read_dataset(in3), ParseError);
}
