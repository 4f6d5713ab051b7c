#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rbj/grid.hpp"
#include "rbj/netsim.hpp"
#include "rbj/oracle.hpp"

namespace rbj {

enum class InitKind { flat, wls, zero, far };

const char* to_string(InitKind k);
InitKind init_from_string(const std::string& s);

/// Flat key=value experiment description. Unknown keys are rejected.
struct ScenarioConfig {
  // Feeder: synthetic unless feeder_file is set.
  std::size_t feeder_buses = 122;
  std::uint64_t feeder_seed = 1;
  std::string feeder_file;

  std::uint64_t measurement_seed = 2;
  double sigma_v = 1e-3;
  double sigma_ic = 1e-1;
  /// Outlier rates per channel; the key outlier_frac sets both.
  double outlier_frac_v = 0.10;
  double outlier_frac_ic = 0.10;
  bool outlier_random_sign = true;

  std::size_t num_areas = 13;
  std::uint64_t partition_seed = 3;

  CostFamily family = CostFamily::robust;
  double nu = 1e-4;
  Variant variant = Variant::rbj;
  double epsilon = 0.0004;

  double p_loss = 0.3;
  std::size_t window_T = 10;
  bool enforce_persistence = true;
  SchedulerKind scheduler = SchedulerKind::round;

  std::size_t num_rounds = 10000;
  std::size_t num_replicas = 20;
  /// Replica r draws its network randomness from seed + r.
  std::uint64_t seed = 100;

  InitKind init = InitKind::flat;
  /// Normalized-cost level used for rounds-to-threshold.
  double threshold = 0.1;
  /// Stop a replica once ||x - x*||_inf falls below this (0 = never).
  double stop_error = 0.0;

  /// Empty: nothing is written.
  std::string output_dir;

  void validate() const;
};

ScenarioConfig read_config(std::istream& in);
ScenarioConfig load_config(const std::string& path);
void write_config(std::ostream& out, const ScenarioConfig& cfg);
void save_config(const std::string& path, const ScenarioConfig& cfg);

/// Sets one key from its text form. Malformed values throw here; ranges and
/// cross-key constraints are checked by validate().
void set_config_value(ScenarioConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const ScenarioConfig& cfg, const std::string& key);
std::vector<std::string> config_keys();

/// Feeder, measurements, per-area cost and reference minimizer of a config.
struct Scenario {
  Feeder feeder;
  MeasurementSet measurements;
  AreaProblem problem;
  CentralizedSolution reference;
  Vector x0;
};

Scenario build_scenario(const ScenarioConfig& cfg);

/// Runs one replica (network seed cfg.seed + replica) on a built scenario.
RunTrace run_replica(const Scenario& s, const ScenarioConfig& cfg, std::size_t replica,
                     Variant variant, bool record_states = false);

struct ReplicaResult {
  std::uint64_t seed = 0;
  bool diverged = false;
  std::size_t rounds_run = 0;
  std::optional<std::size_t> rounds_to_threshold;
  std::optional<RateFit> fit;
  std::string fit_error;  // set when the rate fit failed
  double final_err = 0.0;
};

struct ScenarioSummary {
  double J_star = 0.0;
  double J0 = 0.0;
  std::size_t num_rounds = 0;
  /// Mean / population std of the normalized cost, one entry per round
  /// (inf once any replica has diverged).
  std::vector<double> mean_normalized;
  std::vector<double> std_normalized;
  std::vector<ReplicaResult> replicas;
  /// First round at which the mean curve reaches cfg.threshold.
  std::optional<std::size_t> rounds_to_threshold;
  bool any_diverged = false;
};

/// Builds the scenario, runs num_replicas replicas and, when output_dir is
/// set, writes replica_XXX.csv, summary.csv and summary.txt there.
ScenarioSummary run_scenario(const ScenarioConfig& cfg);

enum class SweepParam { epsilon, areas, loss };

const char* to_string(SweepParam p);
SweepParam sweep_param_from_string(const std::string& s);

struct SweepPoint {
  double value = 0.0;
  ScenarioSummary summary;
};

/// One run_scenario per value; outputs go to output_dir/<param>_<value>/ and
/// a sweep.csv table in output_dir.
std::vector<SweepPoint> sweep(const ScenarioConfig& cfg, SweepParam param,
                              const std::vector<double>& values);

struct VariantRow {
  Variant variant = Variant::rbj;
  bool diverged = false;
  /// Mean fitted rate over replicas that could be fitted.
  std::optional<double> rho;
  std::optional<double> C;
  std::optional<std::size_t> rounds_to_threshold;
  std::string status;  // "ok", "diverged" or the fit failure
};

/// RBJ, RGD and RWLS on the quadratic version of the scenario with identical
/// seeds. A zero-round config yields an empty table.
std::vector<VariantRow> compare_variants(const ScenarioConfig& cfg);

void write_sweep_csv(std::ostream& out, SweepParam param, const std::vector<SweepPoint>& points);
void write_compare_csv(std::ostream& out, const std::vector<VariantRow>& rows);
void write_summary_txt(std::ostream& out, const ScenarioConfig& cfg, const ScenarioSummary& s);

struct StabilitySearch {
  double lo = 0.0;   // assumed convergent (may be 0)
  double hi = 1.0;   // assumed divergent or unknown
  std::size_t iterations = 12;
  std::size_t num_seeds = 10;
  /// A replica converges when it does not diverge and its final error is at
  /// most tol times its initial error.
  double tol = 1e-3;
};

/// Largest epsilon in [lo, hi] (up to bisection resolution) for which every
/// seed converges within cfg.num_rounds. Singular preconditioners count as
/// divergence. Returns lo when nothing above it converges.
double max_convergent_epsilon(const ScenarioConfig& cfg, const StabilitySearch& search);

}  // namespace rbj
