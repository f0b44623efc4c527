#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"

using namespace dass;

namespace {

GaussianPolicy small_policy(std::uint64_t seed = 1) {
  GaussianPolicy p = make_policy("cycler", 8, 2, {5, 4}, seed);
  p.obs_shift = Vec::LinSpaced(8, -0.5, 0.5);
  p.obs_scale = Vec::LinSpaced(8, 0.5, 2.0);
  p.provenance = {"dass train --seed 3", 3, "-"};
  return p;
}

std::string replace_line(const std::string& text, const std::string& prefix, const std::string& repl) {
  std::istringstream in(text);
  std::string out, line;
  while (std::getline(in, line)) {
    if (line.rfind(prefix, 0) != 0) out += line + "\n";
    else if (!repl.empty()) out += repl + "\n";
  }
  return out;
}

}  // namespace

TEST(GaussianPolicy, SampleStdMatchesLogStd) {
  GaussianPolicy p = small_policy();
  Rng rng(9);
  const Vec obs = Vec::Random(8);
  const Vec mu = p.mean(obs);
  const int n = 40000;
  Vec sum_sq = Vec::Zero(2);
  for (int i = 0; i < n; ++i) {
    Vec d = p.sample(obs, rng) - mu;
    sum_sq += d.cwiseProduct(d);
  }
  for (int j = 0; j < 2; ++j) {
    EXPECT_NEAR(std::sqrt(sum_sq[j] / n) / std::exp(-2.0), 1.0, 0.02);
  }
}

TEST(GaussianPolicy, LogProbAtMean) {
  GaussianPolicy p = small_policy();
  const Vec obs = Vec::Random(8);
  // at the mean: -sum(log_std) - d/2 log(2 pi)
  EXPECT_NEAR(p.log_prob(obs, p.mean(obs)), 2 * 2.0 - std::log(2 * std::numbers::pi), 1e-12);
}

TEST(GaussianPolicy, LogProbMatchesDensity) {
  GaussianPolicy p = small_policy();
  p.log_std << -1.0, -0.5;
  const Vec obs = Vec::Random(8);
  const Vec mu = p.mean(obs);
  Vec a = mu;
  a[0] += 0.3;
  a[1] -= 0.2;
  double dens = 1;
  for (int j = 0; j < 2; ++j) {
    const double s = std::exp(p.log_std[j]);
    dens *= std::exp(-0.5 * std::pow((a[j] - mu[j]) / s, 2)) / (s * std::sqrt(2 * std::numbers::pi));
  }
  EXPECT_NEAR(p.log_prob(obs, a), std::log(dens), 1e-12);
}

TEST(GaussianPolicy, SampledLogProbIsFinite) {
  GaussianPolicy p = small_policy();
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const Vec obs = Vec::Random(8);
    EXPECT_TRUE(std::isfinite(p.log_prob(obs, p.sample(obs, rng))));
  }
}

TEST(GaussianPolicy, NormalizationIsApplied) {
  GaussianPolicy p = small_policy();
  const Vec obs = Vec::Random(8);
  const Vec z = ((obs - p.obs_shift).array() / p.obs_scale.array()).matrix();
  EXPECT_EQ(p.mean(obs), mlp_forward(p.mean_net, z));
}

TEST(GaussianPolicy, DimensionMismatchThrows) {
  GaussianPolicy p = small_policy();
  EXPECT_THROW(p.mean(Vec::Zero(7)), InvalidArgument);
  EXPECT_THROW(p.log_prob(Vec::Zero(8), Vec::Zero(3)), InvalidArgument);
}

TEST(Normalization, StatisticsOfRandomPolicy) {
  Cycler env;
  Rng rng(3);
  Normalization n = compute_normalization(env, 4000, rng);
  EXPECT_EQ(n.shift.size(), 8);
  EXPECT_TRUE((n.scale.array() > 0).all());
  // circle centred on the origin
  EXPECT_LT(std::abs(n.shift[0]), 0.2);
  EXPECT_NEAR(n.scale[4], std::sqrt(0.5), 0.1);
}

TEST(PolicyFormat, RoundTripIsByteIdentical) {
  GaussianPolicy p = small_policy();
  const std::string s1 = policy_to_string(p);
  const GaussianPolicy q = policy_from_string(s1);
  EXPECT_EQ(policy_to_string(q), s1);
  EXPECT_TRUE(q.mean_net == p.mean_net);
  EXPECT_EQ(q.log_std, p.log_std);
  EXPECT_EQ(q.obs_scale, p.obs_scale);
  EXPECT_EQ(q.provenance.command_line, "dass train --seed 3");
  EXPECT_EQ(q.provenance.seed, 3u);
  const Vec obs = Vec::Random(8);
  EXPECT_EQ(q.mean(obs), p.mean(obs));
}

TEST(PolicyFormat, SaveLoadFile) {
  const auto path = std::filesystem::temp_directory_path() / "dass_policy_roundtrip.pol";
  GaussianPolicy p = small_policy(4);
  save_policy(p, path.string());
  GaussianPolicy q = load_policy(path.string());
  EXPECT_EQ(policy_to_string(q), policy_to_string(p));
  std::filesystem::remove(path);
}

TEST(PolicyFormat, HashIgnoresProvenance) {
  GaussianPolicy p = small_policy(), q = small_policy();
  q.provenance.command_line = "something else";
  EXPECT_EQ(policy_hash(p), policy_hash(q));
  EXPECT_EQ(policy_hash(p).size(), 16u);
  q.mean_net.biases[0][0] += 1e-12;
  EXPECT_NE(policy_hash(p), policy_hash(q));
}

TEST(PolicyFormat, UnknownVersionRejected) {
  const std::string s = replace_line(policy_to_string(small_policy()), "format_version", "format_version 2");
  EXPECT_THROW(policy_from_string(s), UnsupportedVersion);
}

TEST(PolicyFormat, MissingFieldNamed) {
  const std::string s = replace_line(policy_to_string(small_policy()), "obs_scale", "");
  try {
    policy_from_string(s);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("obs_scale"), std::string::npos);
  }
}

TEST(PolicyFormat, WrongLengthNamed) {
  const std::string s = replace_line(policy_to_string(small_policy()), "log_std", "log_std -2");
  try {
    policy_from_string(s);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("log_std"), std::string::npos);
    EXPECT_GT(e.line(), 0);
  }
}

TEST(PolicyFormat, TruncatedAndGarbageRejected) {
  const std::string s = policy_to_string(small_policy());
  EXPECT_THROW(policy_from_string(s.substr(0, s.size() / 2)), ParseError);
  EXPECT_THROW(policy_from_string("not a policy\n"), ParseError);
  EXPECT_THROW(policy_from_string(replace_line(s, "layer_sizes", "layer_sizes 8,0,2")), ParseError);
  EXPECT_THROW(policy_from_string(replace_line(s, "activation", "activation relu")), ParseError);
  EXPECT_THROW(policy_from_string(replace_line(s, "obs_scale", "obs_scale 1 1 1 1 1 1 1 0")), ParseError);
}

TEST(PolicyFormat, MissingFileIsError) {
  EXPECT_THROW(load_policy("/nonexistent/dir/p.pol"), std::runtime_error);
}
