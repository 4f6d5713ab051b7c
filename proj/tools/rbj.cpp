// Experiment runner. Talks to the library only through rbj.h.
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rbj/rbj.h"

namespace {

struct Failure {
  rbj_status status;
};

void check(rbj_status s) {
  if (s != RBJ_OK) throw Failure{s};
}

struct ConfigHandle {
  rbj_config* p = nullptr;
  ~ConfigHandle() { rbj_config_free(p); }
};

struct ReportHandle {
  rbj_report* p = nullptr;
  ~ReportHandle() { rbj_report_free(p); }
};

struct ProblemHandle {
  rbj_problem* p = nullptr;
  ~ProblemHandle() { rbj_problem_free(p); }
};

struct ConfigArgs {
  std::string path;
  std::vector<std::string> overrides;
  std::string output;
};

void add_config_args(CLI::App* cmd, ConfigArgs& a) {
  cmd->add_option("--config,-c", a.path, "Scenario config file (key = value)");
  cmd->add_option("--set,-s", a.overrides, "Override a config key, e.g. --set epsilon=0.001");
  cmd->add_option("--output,-o", a.output, "Output directory (overrides output_dir)");
}

void load(const ConfigArgs& a, ConfigHandle& cfg) {
  check(a.path.empty() ? rbj_config_new(&cfg.p) : rbj_config_load(a.path.c_str(), &cfg.p));
  for (const auto& kv : a.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "error: --set expects key=value, got '%s'\n", kv.c_str());
      throw Failure{RBJ_INVALID_ARGUMENT};
    }
    check(rbj_config_set(cfg.p, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()));
  }
  if (!a.output.empty()) check(rbj_config_set(cfg.p, "output_dir", a.output.c_str()));
  check(rbj_config_validate(cfg.p));
}

void print_report(const ReportHandle& r) {
  const char* text = nullptr;
  check(rbj_report_text(r.p, &text));
  std::fputs(text, stdout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Resilient block Jacobi experiments over lossy broadcast networks"};
  app.require_subcommand(1);

  ConfigArgs run_args, sweep_args, compare_args, export_args;
  auto* run = app.add_subcommand("run", "Run the replicas of one scenario");
  add_config_args(run, run_args);

  auto* sweep = app.add_subcommand("sweep", "Run a scenario over a list of parameter values");
  add_config_args(sweep, sweep_args);
  std::string param;
  std::vector<double> values;
  sweep->add_option("--param,-p", param, "Swept parameter")
      ->required()
      ->check(CLI::IsMember({"epsilon", "areas", "loss"}));
  sweep->add_option("--values,-v", values, "Parameter values")->required();

  auto* compare = app.add_subcommand("compare", "Fitted rates of RBJ, RGD and RWLS on the quadratic scenario");
  add_config_args(compare, compare_args);

  auto* defaults = app.add_subcommand("defaults", "Print the default config");

  auto* export_cmd = app.add_subcommand("export", "Write the scenario's per-area problem file");
  add_config_args(export_cmd, export_args);
  std::string export_path;
  export_cmd->add_option("--problem", export_path, "Destination problem file")->required();

  auto* solve = app.add_subcommand("solve", "Centralized minimizer of a problem file");
  std::string solve_path;
  bool print_x = false;
  solve->add_option("--problem", solve_path, "Problem file")->required();
  solve->add_flag("--print-x", print_x, "Also print the minimizer");

  auto* simulate = app.add_subcommand("simulate", "Run the protocol once on a problem file");
  std::string sim_path, sim_csv;
  rbj_sim_options sim = rbj_sim_options_default();
  std::string sim_variant = sim.variant, sim_scheduler = sim.scheduler;
  bool no_enforce = false;
  simulate->add_option("--problem", sim_path, "Problem file")->required();
  simulate->add_option("--variant", sim_variant)->check(CLI::IsMember({"rbj", "rgd", "rwls"}));
  simulate->add_option("--scheduler", sim_scheduler)->check(CLI::IsMember({"round", "randomized"}));
  simulate->add_option("--epsilon", sim.epsilon);
  simulate->add_option("--loss", sim.p_loss);
  simulate->add_option("--window", sim.window_T, "Persistent-communication window T");
  simulate->add_flag("--no-enforce", no_enforce, "Plain Bernoulli losses without forced delivery");
  simulate->add_option("--seed", sim.seed);
  simulate->add_option("--rounds", sim.num_rounds);
  simulate->add_option("--csv", sim_csv, "Trace CSV destination");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      ConfigHandle cfg;
      load(run_args, cfg);
      ReportHandle rep;
      check(rbj_run_scenario(cfg.p, &rep.p));
      print_report(rep);
    } else if (*sweep) {
      ConfigHandle cfg;
      load(sweep_args, cfg);
      ReportHandle rep;
      check(rbj_sweep(cfg.p, param.c_str(), values.data(), values.size(), &rep.p));
      print_report(rep);
    } else if (*compare) {
      ConfigHandle cfg;
      load(compare_args, cfg);
      ReportHandle rep;
      check(rbj_compare_variants(cfg.p, &rep.p));
      print_report(rep);
    } else if (*defaults) {
      ConfigHandle cfg;
      check(rbj_config_new(&cfg.p));
      const char* text = nullptr;
      check(rbj_config_text(cfg.p, &text));
      std::fputs(text, stdout);
    } else if (*export_cmd) {
      ConfigHandle cfg;
      load(export_args, cfg);
      ProblemHandle prob;
      check(rbj_problem_from_config(cfg.p, &prob.p));
      check(rbj_problem_save(prob.p, export_path.c_str()));
    } else if (*solve) {
      ProblemHandle prob;
      check(rbj_problem_load(solve_path.c_str(), &prob.p));
      size_t n = 0;
      check(rbj_problem_dim(prob.p, &n));
      std::vector<double> x(n);
      double j = 0.0;
      check(rbj_problem_solve(prob.p, x.data(), n, &j));
      std::printf("J* %.17g\n", j);
      if (print_x) {
        for (double v : x) std::printf("%.17g\n", v);
      }
    } else if (*simulate) {
      ProblemHandle prob;
      check(rbj_problem_load(sim_path.c_str(), &prob.p));
      size_t n = 0;
      check(rbj_problem_dim(prob.p, &n));
      sim.variant = sim_variant.c_str();
      sim.scheduler = sim_scheduler.c_str();
      sim.enforce_persistence = no_enforce ? 0 : 1;
      std::vector<double> x(n);
      int diverged = 0;
      check(rbj_simulate(prob.p, &sim, nullptr, n, sim_csv.empty() ? nullptr : sim_csv.c_str(),
                         x.data(), &diverged));
      double j = 0.0;
      check(rbj_problem_value(prob.p, x.data(), n, &j));
      std::printf("%s after %zu rounds: J %.17g\n", diverged ? "diverged" : "finished", sim.num_rounds, j);
    }
  } catch (const Failure& f) {
    std::fprintf(stderr, "error (%s): %s\n", rbj_status_name(f.status), rbj_last_error());
    return 1;
  }
  return 0;
}
