#include <gtest/gtest.h>

#include <filesystem>

#include "oracles.hpp"

using namespace dass;

namespace {

// zero weights: the mean action is 0 and the PD loop tracks the reference on its own
GaussianPolicy zero_policy(const EnvConfig& cfg) {
  auto env = make_env(cfg);
  GaussianPolicy p = make_policy(env->id(), env->obs_dim(), env->act_dim(), {4}, 1);
  for (auto& w : p.mean_net.weights) w.setZero();
  return p;
}

std::vector<std::vector<double>> parse_csv(const std::string& text, std::vector<std::string>& header) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  header.clear();
  {
    std::istringstream h(line);
    std::string c;
    while (std::getline(h, c, ',')) header.push_back(c);
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::istringstream r(line);
    std::string c;
    std::vector<double> row;
    while (std::getline(r, c, ',')) row.push_back(std::stod(c));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

TEST(EvalProtocol, PushScheduleIsSevenOfEveryHundredSteps) {
  EvalProtocol p = EvalProtocol::of(ProtocolVariant::Pushes);
  Cycler env;
  PerturbationConfig pc = p.perturbation(env, 0);
  ASSERT_TRUE(pc.push.has_value());
  EXPECT_EQ(pc.push->duration_steps, 7);
  EXPECT_EQ(pc.push->period_steps, 100);
  EXPECT_EQ(pc.push->force[0], 5.0);
  EXPECT_EQ(EvalProtocol::of(ProtocolVariant::ActionNoise).perturbation(env, 0).action_noise_std, 0.1);
  EXPECT_EQ(EvalProtocol::of(ProtocolVariant::MassPerturb).perturbation(env, 0).mass_scale, 1.2);
  EXPECT_FALSE(EvalProtocol::of(ProtocolVariant::NoNoise).perturbation(env, 0).push.has_value());
}

TEST(EvalProtocol, VariantNames) {
  for (auto v : {ProtocolVariant::NoNoise, ProtocolVariant::ActionNoise, ProtocolVariant::MassPerturb,
                 ProtocolVariant::Pushes}) {
    EXPECT_EQ(parse_variant(variant_name(v)), v);
  }
  EXPECT_THROW(parse_variant("windy"), InvalidArgument);
  EvalProtocol p;
  p.phases = 0;
  EXPECT_THROW(p.validate(), InvalidArgument);
}

TEST(Evaluate, PhaseGridAndEpisodeCount) {
  EnvConfig cfg;
  EvalProtocol p;
  p.horizon = 50;
  p.phases = 4;
  p.seeds = 2;
  EvalReport r = evaluate(zero_policy(cfg), cfg, p);
  ASSERT_EQ(r.episodes.size(), 8u);
  for (int k = 0; k < 4; ++k) {
    EXPECT_DOUBLE_EQ(r.episodes[k].initial_phase, 2 * std::numbers::pi * k / 4);
    EXPECT_EQ(r.episodes[k].seed, 0);
    EXPECT_EQ(r.episodes[4 + k].seed, 1);
  }
  EXPECT_EQ(r.episodes[0].command, 0.5);
  double m = 0;
  for (const auto& e : r.episodes) {
    EXPECT_LE(e.length, 50);
    m += e.cumulative_reward;
  }
  EXPECT_NEAR(r.mean, m / 8, 1e-12);
}

TEST(Evaluate, NoNoiseSeedsAreIdenticalAndNoiseIsNot) {
  EnvConfig cfg;
  EvalProtocol p;
  p.horizon = 60;
  p.phases = 2;
  p.seeds = 2;
  GaussianPolicy pol = zero_policy(cfg);
  EvalReport r = evaluate(pol, cfg, p);
  EXPECT_EQ(r.episodes[0].cumulative_reward, r.episodes[2].cumulative_reward);
  // population std over {x0, x1, x0, x1} is |x0 - x1| / 2
  EXPECT_NEAR(r.std, 0.5 * std::abs(r.episodes[0].cumulative_reward - r.episodes[1].cumulative_reward), 1e-12);
  p.variant = ProtocolVariant::ActionNoise;
  EvalReport n = evaluate(pol, cfg, p);
  EXPECT_NE(n.episodes[0].cumulative_reward, n.episodes[2].cumulative_reward);
  EvalReport n2 = evaluate(pol, cfg, p);
  std::ostringstream a, b;
  write_report(a, n);
  write_report(b, n2);
  EXPECT_EQ(a.str(), b.str());
}

TEST(Evaluate, MassPerturbationChangesOutcome) {
  EnvConfig cfg;
  EvalProtocol p;
  p.horizon = 80;
  p.phases = 1;
  p.seeds = 1;
  GaussianPolicy pol = zero_policy(cfg);
  const double base = evaluate(pol, cfg, p).mean;
  p.variant = ProtocolVariant::MassPerturb;
  EXPECT_NE(evaluate(pol, cfg, p).mean, base);
  p.variant = ProtocolVariant::Pushes;
  EvalReport pr = evaluate(pol, cfg, p);
  EXPECT_EQ(pr.push_duration_steps, 7);
  EXPECT_EQ(pr.push_period_steps, 100);
}

TEST(Evaluate, DimensionMismatchRejected) {
  EnvConfig cfg;
  EnvConfig pend;
  pend.id = "pendulum-track";
  EXPECT_THROW(evaluate(zero_policy(pend), cfg, EvalProtocol{}), InvalidArgument);
}

TEST(Report, RoundTripIsByteIdentical) {
  EnvConfig cfg;
  EvalProtocol p = EvalProtocol::of(ProtocolVariant::Pushes);
  p.horizon = 30;
  p.phases = 2;
  p.seeds = 1;
  EvalReport r = evaluate(zero_policy(cfg), cfg, p);
  r.label = "zero";
  std::ostringstream a;
  write_report(a, r);
  std::istringstream in(a.str());
  EvalReport q = read_report(in);
  std::ostringstream b;
  write_report(b, q);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(q.episodes.size(), 2u);
  const auto path = std::filesystem::temp_directory_path() / "dass_report_rt.txt";
  save_report(r, path.string());
  EXPECT_EQ(load_report(path.string()).mean, r.mean);
  std::filesystem::remove(path);
  std::istringstream bad("dass-eval-report\nformat_version 2\n");
  EXPECT_THROW(read_report(bad), UnsupportedVersion);
  std::istringstream junk("hello\n");
  EXPECT_THROW(read_report(junk), ParseError);
}

TEST(Compare, OneRowPerReport) {
  EvalReport a, b;
  a.label = "teacher";
  a.protocol = "no-noise";
  a.mean = 399.5;
  b.policy_hash = "00ff00ff00ff00ff";
  b.protocol = "pushes";
  b.mean = 12.25;
  ComparisonTable t = compare({a, b});
  EXPECT_EQ(t.csv,
            "label,protocol,mean,std,tracking_return,mean_dv_sq,mean_da_sq\n"
            "teacher,no-noise,399.5,0,0,0,0\n"
            "00ff00ff00ff00ff,pushes,12.25,0,0,0,0\n");
  EXPECT_NE(t.text.find("teacher"), std::string::npos);
  EXPECT_EQ(std::count(t.text.begin(), t.text.end(), '\n'), 3);
}

TEST(Trajectory, ZeroStepsIsHeaderOnly) {
  EnvConfig cfg;
  std::ostringstream out;
  export_trajectory(zero_policy(cfg), cfg, 0, out);
  EXPECT_EQ(out.str(), "step,phase,x0,x1,x2,x3,xhat0,xhat1,xhat2,xhat3,a0,a1,reward,dv_norm\n");
}

TEST(Trajectory, VelocityChangeMatchesStateColumns) {
  EnvConfig cfg;
  std::ostringstream out;
  export_trajectory(zero_policy(cfg), cfg, 60, out);
  std::vector<std::string> h;
  auto rows = parse_csv(out.str(), h);
  ASSERT_EQ(rows.size(), 60u);
  const auto col = [&](const std::string& name) {
    return static_cast<std::size_t>(std::find(h.begin(), h.end(), name) - h.begin());
  };
  const std::size_t vx = col("x2"), vy = col("x3"), dv = col("dv_norm");
  for (std::size_t k = 1; k < rows.size(); ++k) {
    EXPECT_EQ(rows[k][0], static_cast<double>(k));
    const double ref = std::hypot(rows[k][vx] - rows[k - 1][vx], rows[k][vy] - rows[k - 1][vy]);
    EXPECT_NEAR(rows[k][dv], ref, 1e-12);
  }
}

TEST(Trajectory, Deterministic) {
  EnvConfig cfg;
  GaussianPolicy p = make_policy("cycler", 8, 2, {4}, 3);
  std::ostringstream a, b;
  export_trajectory(p, cfg, 100, a);
  export_trajectory(p, cfg, 100, b);
  EXPECT_EQ(a.str(), b.str());
}

TEST(Evaluate, WorkersDoNotChangeTheReport) {
  EnvConfig cfg;
  cfg.params = {{"command_min", 0.4}, {"command_max", 0.5}};
  EvalProtocol p = EvalProtocol::of(ProtocolVariant::ActionNoise);
  p.horizon = 40;
  p.phases = 3;
  p.seeds = 2;
  p.commands = {0.4, 0.5};
  GaussianPolicy pol = make_policy("cycler", 8, 2, {4}, 3);
  std::ostringstream a, b;
  write_report(a, evaluate(pol, cfg, p, 1));
  write_report(b, evaluate(pol, cfg, p, 3));
  EXPECT_EQ(a.str(), b.str());
  EXPECT_THROW(evaluate(pol, cfg, p, 0), InvalidArgument);
}
