// Command-line front end: train, collect, distill, refine, eval, export-traj, compare, inspect.

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dass/all.hpp"

namespace {

using namespace dass;

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  int workers = 1;
  bool parallel_ok = false;
};

void add_common(CLI::App* app, Common& c, bool needs_out = true) {
  app->add_option("--config", c.config_path, "JSON run configuration");
  app->add_option("--seed", c.seed, "seed override");
  auto* o = app->add_option("--out,-o", c.out, "output path");
  if (needs_out) o->required();
  app->add_option("--workers", c.workers, "parallelism degree (default 1)")->check(CLI::PositiveNumber);
}

RunConfig resolve(const Common& c) {
  // training-type commands consume one sequential rng stream per run
  if (c.workers != 1 && !c.parallel_ok) {
    throw InvalidArgument("--workers > 1 is only supported by eval; this command runs single-writer");
  }
  RunConfig cfg = c.config_path.empty() ? RunConfig{} : load_run_config(c.config_path);
  if (c.seed) apply_seed(cfg, *c.seed);
  return cfg;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(str_cat("cannot open '", path, "' for writing"));
  out << text;
}

// The resolved configuration is stored next to each primary output.
void write_resolved(const std::string& out, const RunConfig& cfg, const std::string& command_line) {
  json j = run_config_to_json(cfg);
  j["command_line"] = command_line;
  j["format_version"] = 1;
  write_text(out + ".config.json", j.dump(2) + "\n");
}

void write_log(const std::string& path, const TrainLog& log) { log.save_csv(path); }

}  // namespace

int main(int argc, char** argv) {
  std::string command_line = "dass";
  for (int i = 1; i < argc; ++i) command_line += str_cat(" ", argv[i]);

  CLI::App app{"DASS distillation, compression and iterative refinement of limit-cycle policies"};
  app.require_subcommand(1);

  Common train_c;
  std::optional<int> train_iters;
  std::string train_hidden;
  auto* train_cmd = app.add_subcommand("train", "PPO from scratch");
  add_common(train_cmd, train_c);
  train_cmd->add_option("--iterations", train_iters, "PPO iterations");
  train_cmd->add_option("--hidden", train_hidden, "hidden sizes, e.g. 64,64");

  Common collect_c;
  std::string collect_policy;
  std::optional<int> collect_n;
  bool collect_cloning_flag = false;
  auto* collect_cmd = app.add_subcommand("collect", "record DASS tuples from a teacher");
  add_common(collect_cmd, collect_c);
  collect_cmd->add_option("--policy", collect_policy, "teacher policy")->required();
  collect_cmd->add_option("--n", collect_n, "number of tuples (default 600)");
  collect_cmd->add_flag("--cloning", collect_cloning_flag, "noise-free behavior-cloning collection");

  Common distill_c;
  std::vector<std::string> distill_data;
  std::string distill_val, distill_hidden, distill_curve;
  auto* distill_cmd = app.add_subcommand("distill", "supervised distillation onto DASS tuples");
  add_common(distill_cmd, distill_c);
  distill_cmd->add_option("--data", distill_data, "training datasets (merged)")->required();
  distill_cmd->add_option("--validation", distill_val, "validation dataset")->required();
  distill_cmd->add_option("--hidden", distill_hidden, "student hidden sizes");
  distill_cmd->add_option("--curve", distill_curve, "loss-curve CSV (default <out>.curve.csv)");

  Common refine_c;
  std::string refine_anchor, refine_reward = "stable", refine_init, refine_log;
  std::optional<double> refine_w;
  std::optional<int> refine_iters, refine_nsp;
  std::vector<double> refine_sweep;
  auto* refine_cmd = app.add_subcommand("refine", "RL under a new reward anchored to DASS tuples");
  add_common(refine_cmd, refine_c);
  refine_cmd->add_option("--anchor", refine_anchor, "anchor dataset")->required();
  refine_cmd->add_option("--reward", refine_reward, "track, stable, minaccel or highstep")
      ->check(CLI::IsMember({"track", "stable", "minaccel", "highstep"}));
  refine_cmd->add_option("--w", refine_w, "supervision weight");
  refine_cmd->add_option("--init", refine_init, "initial policy (disables from-scratch initialization)");
  refine_cmd->add_option("--iterations", refine_iters, "iterations");
  refine_cmd->add_option("--n-sp", refine_nsp, "anchor tuples per epoch");
  refine_cmd->add_option("--log", refine_log, "training log CSV (default <out>.log.csv)");
  refine_cmd->add_option("--sweep", refine_sweep, "comma-separated w values; writes <out>.w<k> per value and <out>.sweep.csv")
      ->delimiter(',');

  Common eval_c;
  eval_c.parallel_ok = true;
  std::string eval_policy, eval_protocol, eval_label;
  auto* eval_cmd = app.add_subcommand("eval", "robustness evaluation");
  add_common(eval_cmd, eval_c);
  eval_cmd->add_option("--policy", eval_policy, "policy")->required();
  eval_cmd->add_option("--protocol", eval_protocol, "no-noise, action-noise, mass or pushes")
      ->check(CLI::IsMember({"no-noise", "action-noise", "mass", "pushes"}));
  eval_cmd->add_option("--label", eval_label, "label used by compare");

  Common traj_c;
  std::string traj_policy;
  int traj_steps = 400;
  std::optional<double> traj_command;
  auto* traj_cmd = app.add_subcommand("export-traj", "deterministic trajectory as CSV");
  add_common(traj_cmd, traj_c);
  traj_cmd->add_option("--policy", traj_policy, "policy")->required();
  traj_cmd->add_option("--steps", traj_steps, "number of steps")->check(CLI::NonNegativeNumber);
  traj_cmd->add_option("--command", traj_command, "command (default: middle of range)");

  std::vector<std::string> compare_reports;
  std::string compare_csv;
  auto* compare_cmd = app.add_subcommand("compare", "tabulate evaluation reports");
  compare_cmd->add_option("reports", compare_reports, "report files")->required();
  compare_cmd->add_option("--csv", compare_csv, "also write the table as CSV");

  std::string inspect_path;
  auto* inspect_cmd = app.add_subcommand("inspect", "print the header of a policy, dataset or report");
  inspect_cmd->add_option("file", inspect_path, "artifact")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*train_cmd) {
      RunConfig cfg = resolve(train_c);
      if (train_iters) cfg.ppo.max_iterations = *train_iters;
      if (!train_hidden.empty()) cfg.ppo.hidden = parse_int_list(train_hidden);
      cfg.refine.ppo = cfg.ppo;
      auto env = make_env(cfg.env);
      TrainResult res = train(*env, cfg.ppo, [](const TrainLogRow& r) {
        if (r.iteration % 10 == 0) {
          std::cerr << "iter " << r.iteration << " mean_step_reward " << r.mean_step_reward << "\n";
        }
      });
      Provenance pv{command_line, cfg.seed, "-"};
      res.model.policy.provenance = pv;
      res.best_policy.provenance = pv;
      save_policy(res.model.policy, train_c.out);
      save_policy(res.best_policy, train_c.out + ".best");
      write_log(train_c.out + ".log.csv", res.log);
      write_resolved(train_c.out, cfg, command_line);
    } else if (*collect_cmd) {
      RunConfig cfg = resolve(collect_c);
      if (collect_n) cfg.collect.n = *collect_n;
      if (collect_cloning_flag) cfg.collect.cloning = true;
      const GaussianPolicy teacher = load_policy(collect_policy);
      auto env = make_env(cfg.env);
      Rng rng = Rng::stream(cfg.seed, "collect");
      DassDataset d = cfg.collect.cloning ? collect_cloning(teacher, *env, cfg.collect.n, rng)
                                          : collect(teacher, *env, cfg.collect.n, rng);
      d.provenance.command_line = command_line;
      save_dataset(d, collect_c.out);
      write_resolved(collect_c.out, cfg, command_line);
      std::cerr << "collected " << d.size() << " tuples, " << d.provenance.terminations << " terminations\n";
    } else if (*distill_cmd) {
      RunConfig cfg = resolve(distill_c);
      if (!distill_hidden.empty()) cfg.distill.hidden = parse_int_list(distill_hidden);
      std::vector<DassDataset> parts;
      for (const auto& p : distill_data) parts.push_back(load_dataset(p));
      const DassDataset train_set = merge(parts);
      const DassDataset val = load_dataset(distill_val);
      Rng rng = Rng::stream(cfg.seed, "distill/minibatch");
      DistillResult res = distill(train_set, val, cfg.distill, rng);
      res.policy.provenance = {command_line, cfg.seed, train_set.provenance.teacher_hash};
      save_policy(res.policy, distill_c.out);
      std::ofstream curve(distill_curve.empty() ? distill_c.out + ".curve.csv" : distill_curve, std::ios::binary);
      res.report.write_csv(curve);
      std::ofstream summary(distill_c.out + ".summary.txt", std::ios::binary);
      res.report.write_summary(summary);
      write_resolved(distill_c.out, cfg, command_line);
      std::cerr << "train_loss " << res.report.train_loss << " validation_loss " << res.report.validation_loss
                << " iterations " << res.report.iterations << "\n";
    } else if (*refine_cmd) {
      RunConfig cfg = resolve(refine_c);
      cfg.refine.ppo = cfg.ppo;
      if (refine_iters) cfg.refine.ppo.max_iterations = cfg.ppo.max_iterations = *refine_iters;
      if (refine_w) cfg.refine.w = *refine_w;
      if (refine_nsp) cfg.refine.n_sp = *refine_nsp;
      if (refine_cmd->count("--reward")) cfg.env.style.kind = parse_style(refine_reward);
      std::optional<GaussianPolicy> init;
      if (!refine_init.empty()) {
        init = load_policy(refine_init);
        cfg.refine.from_scratch = false;
      }
      const DassDataset anchor = load_dataset(refine_anchor);
      if (!refine_sweep.empty()) {
        const std::vector<SweepResult> rs = sweep_w(cfg.env, anchor, cfg.refine, refine_sweep, init);
        for (std::size_t k = 0; k < rs.size(); ++k) {
          GaussianPolicy p = rs[k].result.model.policy;
          p.provenance = {command_line, cfg.seed, init ? policy_hash(*init) : anchor.provenance.teacher_hash};
          save_policy(p, str_cat(refine_c.out, ".w", k));
          write_log(str_cat(refine_c.out, ".w", k, ".log.csv"), rs[k].result.log);
        }
        std::ostringstream csv;
        write_sweep_csv(csv, rs);
        write_text(refine_c.out + ".sweep.csv", csv.str());
        write_resolved(refine_c.out, cfg, command_line);
        std::cout << csv.str();
        return 0;
      }
      auto env = make_env(cfg.env);
      TrainResult res = refine(*env, anchor, cfg.refine, init, [](const TrainLogRow& r) {
        if (r.iteration % 10 == 0) {
          std::cerr << "iter " << r.iteration << " mean_step_reward " << r.mean_step_reward
                    << " supervised_loss " << r.supervised_loss << "\n";
        }
      });
      res.model.policy.provenance = {command_line, cfg.seed,
                                     init ? policy_hash(*init) : anchor.provenance.teacher_hash};
      save_policy(res.model.policy, refine_c.out);
      write_log(refine_log.empty() ? refine_c.out + ".log.csv" : refine_log, res.log);
      write_resolved(refine_c.out, cfg, command_line);
    } else if (*eval_cmd) {
      RunConfig cfg = resolve(eval_c);
      if (!eval_protocol.empty()) cfg.eval.variant = parse_variant(eval_protocol);
      const GaussianPolicy p = load_policy(eval_policy);
      EvalReport r = evaluate(p, cfg.env, cfg.eval, eval_c.workers);
      r.label = eval_label.empty() ? p.env_id + ":" + r.policy_hash : eval_label;
      save_report(r, eval_c.out);
      write_resolved(eval_c.out, cfg, command_line);
      std::cout << r.protocol << " mean " << r.mean << " std " << r.std << "\n";
    } else if (*traj_cmd) {
      RunConfig cfg = resolve(traj_c);
      const GaussianPolicy p = load_policy(traj_policy);
      std::ostringstream csv;
      export_trajectory(p, cfg.env, traj_steps, csv,
                        traj_command ? *traj_command : std::numeric_limits<double>::quiet_NaN());
      write_text(traj_c.out, csv.str());
    } else if (*compare_cmd) {
      std::vector<EvalReport> reports;
      for (const auto& p : compare_reports) reports.push_back(load_report(p));
      ComparisonTable t = compare(reports);
      std::cout << t.text;
      if (!compare_csv.empty()) write_text(compare_csv, t.csv);
    } else if (*inspect_cmd) {
      std::ifstream in(inspect_path, std::ios::binary);
      if (!in) throw std::runtime_error(str_cat("cannot open '", inspect_path, "'"));
      std::string first;
      std::getline(in, first);
      if (first == "dass-policy") {
        std::cout << first << "\n";
        std::string line;
        while (std::getline(in, line) && line.rfind("weights", 0) != 0) std::cout << line << "\n";
        in.clear();
        in.seekg(0);
        std::cout << "hash " << policy_hash(read_policy(in)) << "\n";
      } else if (!first.empty() && first[0] == '{') {
        json h = json::parse(first);
        std::size_t n = 0;
        std::string line;
        while (std::getline(in, line)) if (!line.empty()) ++n;
        h["tuples"] = n;
        std::cout << h.dump(2) << "\n";
      } else if (first == "dass-eval-report") {
        std::cout << first << "\n";
        std::string line;
        while (std::getline(in, line) && line.rfind("episode ", 0) != 0) std::cout << line << "\n";
      } else {
        throw ParseError(str_cat("'", inspect_path, "' is not a recognized artifact"), 1);
      }
    }
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
