#include "rbj/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <sstream>

namespace rbj {

namespace fs = std::filesystem;

const char* to_string(InitKind k) {
  switch (k) {
    case InitKind::flat: return "flat";
    case InitKind::wls: return "wls";
    case InitKind::zero: return "zero";
    case InitKind::far: return "far";
  }
  return "?";
}

InitKind init_from_string(const std::string& s) {
  if (s == "flat") return InitKind::flat;
  if (s == "wls") return InitKind::wls;
  if (s == "zero") return InitKind::zero;
  if (s == "far") return InitKind::far;
  throw Error(ErrorCode::invalid_argument, "unknown init '" + s + "' (flat|wls|zero|far)");
}

const char* to_string(SweepParam p) {
  switch (p) {
    case SweepParam::epsilon: return "epsilon";
    case SweepParam::areas: return "areas";
    case SweepParam::loss: return "loss";
  }
  return "?";
}

SweepParam sweep_param_from_string(const std::string& s) {
  if (s == "epsilon") return SweepParam::epsilon;
  if (s == "areas") return SweepParam::areas;
  if (s == "loss") return SweepParam::loss;
  throw Error(ErrorCode::invalid_argument, "unknown sweep parameter '" + s + "' (epsilon|areas|loss)");
}

// ---------------------------------------------------------------------------
// Config

namespace {

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

double parse_double(const std::string& key, const std::string& s) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size() || !std::isfinite(v)) {
    throw Error(ErrorCode::parse, "key '" + key + "': '" + s + "' is not a finite number");
  }
  return v;
}

std::uint64_t parse_uint(const std::string& key, const std::string& s) {
  std::uint64_t v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) {
    throw Error(ErrorCode::parse, "key '" + key + "': '" + s + "' is not a non-negative integer");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw Error(ErrorCode::parse, "key '" + key + "': '" + s + "' is not a boolean");
}

struct Field {
  const char* name;
  std::function<std::string(const ScenarioConfig&)> get;
  std::function<void(ScenarioConfig&, const std::string&)> set;
};

#define RBJ_DOUBLE(key)                                                           \
  Field{#key, [](const ScenarioConfig& c) { return format_double(c.key); },      \
        [](ScenarioConfig& c, const std::string& v) { c.key = parse_double(#key, v); }}
#define RBJ_UINT(key)                                                                    \
  Field{#key, [](const ScenarioConfig& c) { return std::to_string(c.key); },            \
        [](ScenarioConfig& c, const std::string& v) {                                   \
          c.key = static_cast<decltype(c.key)>(parse_uint(#key, v));                    \
        }}
#define RBJ_BOOL(key)                                                                \
  Field{#key, [](const ScenarioConfig& c) { return std::string(c.key ? "true" : "false"); }, \
        [](ScenarioConfig& c, const std::string& v) { c.key = parse_bool(#key, v); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      RBJ_UINT(feeder_buses),
      RBJ_UINT(feeder_seed),
      Field{"feeder_file", [](const ScenarioConfig& c) { return c.feeder_file; },
            [](ScenarioConfig& c, const std::string& v) { c.feeder_file = v; }},
      RBJ_UINT(measurement_seed),
      RBJ_DOUBLE(sigma_v),
      RBJ_DOUBLE(sigma_ic),
      RBJ_DOUBLE(outlier_frac_v),
      RBJ_DOUBLE(outlier_frac_ic),
      RBJ_BOOL(outlier_random_sign),
      RBJ_UINT(num_areas),
      RBJ_UINT(partition_seed),
      Field{"family", [](const ScenarioConfig& c) { return std::string(to_string(c.family)); },
            [](ScenarioConfig& c, const std::string& v) { c.family = cost_family_from_string(v); }},
      RBJ_DOUBLE(nu),
      Field{"variant", [](const ScenarioConfig& c) { return std::string(to_string(c.variant)); },
            [](ScenarioConfig& c, const std::string& v) { c.variant = variant_from_string(v); }},
      RBJ_DOUBLE(epsilon),
      RBJ_DOUBLE(p_loss),
      RBJ_UINT(window_T),
      RBJ_BOOL(enforce_persistence),
      Field{"scheduler", [](const ScenarioConfig& c) { return std::string(to_string(c.scheduler)); },
            [](ScenarioConfig& c, const std::string& v) { c.scheduler = scheduler_from_string(v); }},
      RBJ_UINT(num_rounds),
      RBJ_UINT(num_replicas),
      RBJ_UINT(seed),
      Field{"init", [](const ScenarioConfig& c) { return std::string(to_string(c.init)); },
            [](ScenarioConfig& c, const std::string& v) { c.init = init_from_string(v); }},
      RBJ_DOUBLE(threshold),
      RBJ_DOUBLE(stop_error),
      Field{"output_dir", [](const ScenarioConfig& c) { return c.output_dir; },
            [](ScenarioConfig& c, const std::string& v) { c.output_dir = v; }},
  };
  return table;
}

#undef RBJ_DOUBLE
#undef RBJ_UINT
#undef RBJ_BOOL

const Field& field(const std::string& key) {
  for (const auto& f : fields()) {
    if (key == f.name) return f;
  }
  throw Error(ErrorCode::invalid_argument, "unknown config key '" + key + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw Error(ErrorCode::invalid_argument, "config: " + msg);
}

}  // namespace

void ScenarioConfig::validate() const {
  require(feeder_buses >= 2, "feeder_buses must be >= 2");
  require(num_areas >= 1, "num_areas must be >= 1");
  require(!feeder_file.empty() || num_areas <= feeder_buses, "num_areas must not exceed feeder_buses");
  require(sigma_v > 0.0 && sigma_ic > 0.0, "noise scales must be positive");
  require(outlier_frac_v >= 0.0 && outlier_frac_v < 1.0, "outlier_frac_v must lie in [0, 1)");
  require(outlier_frac_ic >= 0.0 && outlier_frac_ic < 1.0, "outlier_frac_ic must lie in [0, 1)");
  require(nu > 0.0, "nu must be positive");
  require(epsilon > 0.0, "epsilon must be positive");
  require(p_loss >= 0.0 && p_loss < 1.0, "p_loss must lie in [0, 1)");
  require(window_T >= 1, "window_T must be >= 1");
  require(num_replicas >= 1, "num_replicas must be >= 1");
  require(threshold > 0.0 && threshold <= 1.0, "threshold must lie in (0, 1]");
  require(stop_error >= 0.0, "stop_error must be non-negative");
  require(variant != Variant::rwls || family == CostFamily::quadratic,
          "variant rwls needs family quadratic");
}

void set_config_value(ScenarioConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "outlier_frac") {
    set_config_value(cfg, "outlier_frac_v", value);
    set_config_value(cfg, "outlier_frac_ic", value);
    return;
  }
  field(key).set(cfg, value);
}

std::string get_config_value(const ScenarioConfig& cfg, const std::string& key) {
  return field(key).get(cfg);
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.emplace_back(f.name);
  return out;
}

ScenarioConfig read_config(std::istream& in) {
  ScenarioConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::parse, "config line " + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    try {
      set_config_value(cfg, key, trim(line.substr(eq + 1)));
    } catch (const Error& e) {
      throw Error(e.code(), "config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open config file " + path);
  return read_config(in);
}

void write_config(std::ostream& out, const ScenarioConfig& cfg) {
  for (const auto& f : fields()) out << f.name << " = " << f.get(cfg) << '\n';
}

void save_config(const std::string& path, const ScenarioConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io, "cannot write config file " + path);
  write_config(out, cfg);
}

// ---------------------------------------------------------------------------
// Scenario

Scenario build_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  Feeder feeder = cfg.feeder_file.empty() ? synth_feeder(cfg.feeder_buses, cfg.feeder_seed)
                                          : load_feeder(cfg.feeder_file);
  if (cfg.num_areas > feeder.num_buses) {
    throw Error(ErrorCode::invalid_argument, "num_areas exceeds the number of buses");
  }
  OutlierOptions o;
  o.fraction = cfg.outlier_frac_v;
  o.current_fraction = cfg.outlier_frac_ic;
  o.random_sign = cfg.outlier_random_sign;
  MeasurementSet meas = measure(feeder, cfg.sigma_v, cfg.sigma_ic, o, cfg.measurement_seed);
  AreaPartition part = partition_feeder(feeder, cfg.num_areas, cfg.partition_seed);
  AreaProblem problem = build_area_cost(feeder, meas, part, cfg.family, cfg.nu);
  CentralizedSolution ref = solve_reference(*problem.cost);

  const auto n = static_cast<Eigen::Index>(feeder.num_buses);
  Vector x0;
  switch (cfg.init) {
    case InitKind::flat: {
      Vector flat = Vector::Zero(2 * n);
      flat.head(n).setOnes();
      x0 = problem.from_rectangular(flat);
      break;
    }
    case InitKind::zero:
      x0 = Vector::Zero(2 * n);
      break;
    case InitKind::wls: {
      if (cfg.family == CostFamily::quadratic) {
        x0 = ref.x_star;
      } else {
        AreaProblem q = build_area_cost(feeder, meas, part, CostFamily::quadratic, cfg.nu);
        x0 = solve_wls(dynamic_cast<const QuadraticCost&>(*q.cost)).x_star;
      }
      break;
    }
    case InitKind::far: {
      // Every entry displaced by 1 to 2 in a random direction.
      std::mt19937_64 rng(cfg.seed);
      std::uniform_real_distribution<double> mag(1.0, 2.0);
      std::bernoulli_distribution sign(0.5);
      x0 = ref.x_star;
      for (Eigen::Index k = 0; k < x0.size(); ++k) x0[k] += (sign(rng) ? 1.0 : -1.0) * mag(rng);
      break;
    }
  }
  return Scenario{std::move(feeder), std::move(meas), std::move(problem), std::move(ref), std::move(x0)};
}

RunTrace run_replica(const Scenario& s, const ScenarioConfig& cfg, std::size_t replica,
                     Variant variant, bool record_states) {
  const auto& cost = *s.problem.cost;
  const auto& g = cost.graph();
  if (cfg.num_rounds == 0) {
    RunTrace trace;
    trace.cost.push_back(cost.global_value(s.x0));
    trace.err_inf.push_back((s.x0 - s.reference.x_star).cwiseAbs().maxCoeff());
    trace.max_staleness.push_back(0);
    if (record_states) trace.states.push_back(s.x0);
    return trace;
  }
  std::vector<AgentState> agents;
  agents.reserve(g.num_agents());
  for (AgentId i = 0; i < g.num_agents(); ++i) {
    agents.emplace_back(g, i, cost.block(i, s.x0), cfg.epsilon, variant);
  }
  RunOptions opt;
  opt.num_rounds = cfg.num_rounds;
  opt.scheduler = cfg.scheduler;
  opt.loss.p_loss = cfg.p_loss;
  opt.loss.window_T = cfg.window_T;
  opt.loss.enforce_persistence = cfg.enforce_persistence;
  opt.loss.seed = cfg.seed + replica;
  opt.x_star = s.reference.x_star;
  opt.record_states = record_states;
  opt.stop_error = cfg.stop_error;
  opt.singular_is_divergence = true;
  return run(agents, cost, opt);
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string replica_file(std::size_t r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "replica_%03zu.csv", r);
  return buf;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot write " + p.string());
  return out;
}

ReplicaResult summarize_replica(const RunTrace& trace, double j_star, double threshold,
                                std::uint64_t seed) {
  ReplicaResult r;
  r.seed = seed;
  r.diverged = trace.diverged;
  r.rounds_run = trace.cost.size() - 1;
  r.final_err = trace.err_inf.back();
  const double denom = trace.cost.front() - j_star;
  if (!trace.diverged) {
    for (std::size_t t = 0; t < trace.cost.size(); ++t) {
      const double norm = denom != 0.0 ? (trace.cost[t] - j_star) / denom : 0.0;
      if (norm <= threshold) {
        r.rounds_to_threshold = t;
        break;
      }
    }
  }
  try {
    r.fit = fit_rate(trace);
  } catch (const Error& e) {
    r.fit_error = e.what();
  }
  return r;
}

// Accumulates normalized-cost curves; replicas that stopped early hold their
// last value, diverged ones contribute inf.
struct CurveAccumulator {
  explicit CurveAccumulator(std::size_t rounds) : sum(rounds + 1, 0.0), sum_sq(rounds + 1, 0.0) {}

  void add(const RunTrace& trace, double j_star) {
    const double denom = trace.cost.front() - j_star;
    double last = 0.0;
    for (std::size_t t = 0; t < sum.size(); ++t) {
      double v;
      if (t < trace.cost.size()) {
        v = denom != 0.0 ? (trace.cost[t] - j_star) / denom : 0.0;
        last = v;
      } else {
        v = trace.diverged ? kInf : last;
      }
      sum[t] += v;
      sum_sq[t] += v * v;
    }
    ++count;
  }

  void finish(std::vector<double>& mean, std::vector<double>& sd) const {
    mean.resize(sum.size());
    sd.resize(sum.size());
    const double n = static_cast<double>(count);
    for (std::size_t t = 0; t < sum.size(); ++t) {
      mean[t] = sum[t] / n;
      if (!std::isfinite(mean[t])) {
        sd[t] = kInf;
        continue;
      }
      sd[t] = std::sqrt(std::max(0.0, sum_sq[t] / n - mean[t] * mean[t]));
    }
  }

  std::vector<double> sum;
  std::vector<double> sum_sq;
  std::size_t count = 0;
};

std::optional<std::size_t> first_below(const std::vector<double>& curve, double threshold) {
  for (std::size_t t = 0; t < curve.size(); ++t) {
    if (curve[t] <= threshold) return t;
  }
  return std::nullopt;
}

ScenarioSummary run_replicas(const Scenario& s, const ScenarioConfig& cfg, Variant variant,
                             const fs::path* dir) {
  ScenarioSummary out;
  out.J_star = s.reference.J_star;
  out.J0 = s.problem.cost->global_value(s.x0);
  out.num_rounds = cfg.num_rounds;
  CurveAccumulator acc(cfg.num_rounds);
  for (std::size_t r = 0; r < cfg.num_replicas; ++r) {
    RunTrace trace;
    try {
      trace = run_replica(s, cfg, r, variant);
    } catch (const Error& e) {
      throw Error(e.code(), "replica " + std::to_string(r) + ": " + e.what());
    }
    acc.add(trace, out.J_star);
    out.replicas.push_back(summarize_replica(trace, out.J_star, cfg.threshold, cfg.seed + r));
    out.any_diverged = out.any_diverged || trace.diverged;
    if (dir) {
      auto f = open_out(*dir / replica_file(r));
      write_trace_csv(f, trace, out.J_star, trace.diverged ? cfg.num_rounds : 0);
    }
  }
  acc.finish(out.mean_normalized, out.std_normalized);
  out.rounds_to_threshold = first_below(out.mean_normalized, cfg.threshold);
  return out;
}

void write_summary_csv(std::ostream& out, const ScenarioSummary& s) {
  out << "round,mean_normalized,std_normalized\n";
  char buf[128];
  for (std::size_t t = 0; t < s.mean_normalized.size(); ++t) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", t, s.mean_normalized[t], s.std_normalized[t]);
    out << buf;
  }
}

void write_outputs(const fs::path& dir, const ScenarioConfig& cfg, const ScenarioSummary& s) {
  {
    auto f = open_out(dir / "summary.csv");
    write_summary_csv(f, s);
  }
  auto f = open_out(dir / "summary.txt");
  write_summary_txt(f, cfg, s);
}

fs::path prepare_dir(const std::string& path) {
  fs::path dir(path);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::io, "cannot create output directory " + path + ": " + ec.message());
  return dir;
}

}  // namespace

ScenarioSummary run_scenario(const ScenarioConfig& cfg) {
  const Scenario s = build_scenario(cfg);
  if (cfg.output_dir.empty()) return run_replicas(s, cfg, cfg.variant, nullptr);
  const fs::path dir = prepare_dir(cfg.output_dir);
  ScenarioSummary summary = run_replicas(s, cfg, cfg.variant, &dir);
  write_outputs(dir, cfg, summary);
  return summary;
}

void write_summary_txt(std::ostream& out, const ScenarioConfig& cfg, const ScenarioSummary& s) {
  char buf[256];
  out << "variant " << to_string(cfg.variant) << ", family " << to_string(cfg.family) << ", "
      << cfg.num_areas << " areas\n";
  std::snprintf(buf, sizeof buf, "epsilon %g, p_loss %g, T %zu, rounds %zu, replicas %zu\n",
                cfg.epsilon, cfg.p_loss, cfg.window_T, cfg.num_rounds, cfg.num_replicas);
  out << buf;
  std::snprintf(buf, sizeof buf, "J* %.17g\nJ0 %.17g\n", s.J_star, s.J0);
  out << buf;
  out << "normalized cost = (J - J*) / (J0 - J*)\n";
  if (s.rounds_to_threshold) {
    std::snprintf(buf, sizeof buf, "rounds to mean normalized cost <= %g: %zu\n", cfg.threshold,
                  *s.rounds_to_threshold);
  } else {
    std::snprintf(buf, sizeof buf, "rounds to mean normalized cost <= %g: %s\n", cfg.threshold,
                  s.any_diverged ? "diverged" : "not reached");
  }
  out << buf;
  out << "replica,seed,status,rounds_run,final_err_inf,C,rho\n";
  for (std::size_t r = 0; r < s.replicas.size(); ++r) {
    const auto& rep = s.replicas[r];
    const char* status = rep.diverged ? "diverged" : "ok";
    if (rep.fit) {
      std::snprintf(buf, sizeof buf, "%zu,%llu,%s,%zu,%.6g,%.6g,%.9g\n", r,
                    static_cast<unsigned long long>(rep.seed), status, rep.rounds_run, rep.final_err,
                    rep.fit->C, rep.fit->rho);
    } else {
      std::snprintf(buf, sizeof buf, "%zu,%llu,%s,%zu,%.6g,no fit,no fit\n", r,
                    static_cast<unsigned long long>(rep.seed), status, rep.rounds_run, rep.final_err);
    }
    out << buf;
  }
}

// ---------------------------------------------------------------------------
// Sweep / compare

std::vector<SweepPoint> sweep(const ScenarioConfig& cfg, SweepParam param,
                              const std::vector<double>& values) {
  std::vector<SweepPoint> points;
  for (double v : values) {
    ScenarioConfig c = cfg;
    switch (param) {
      case SweepParam::epsilon:
        c.epsilon = v;
        break;
      case SweepParam::areas:
        if (!(v >= 1.0) || v != std::floor(v)) {
          throw Error(ErrorCode::invalid_argument, "area counts must be positive integers");
        }
        c.num_areas = static_cast<std::size_t>(v);
        break;
      case SweepParam::loss:
        c.p_loss = v;
        break;
    }
    if (!cfg.output_dir.empty()) {
      c.output_dir = (fs::path(cfg.output_dir) / (std::string(to_string(param)) + "_" + format_double(v))).string();
    }
    try {
      points.push_back({v, run_scenario(c)});
    } catch (const Error& e) {
      throw Error(e.code(), std::string(to_string(param)) + "=" + format_double(v) + ": " + e.what());
    }
  }
  if (!cfg.output_dir.empty()) {
    auto f = open_out(prepare_dir(cfg.output_dir) / "sweep.csv");
    write_sweep_csv(f, param, points);
  }
  return points;
}

namespace {

std::optional<double> mean_rho(const ScenarioSummary& s, double* mean_c = nullptr) {
  double sum = 0.0, sum_c = 0.0;
  std::size_t n = 0;
  for (const auto& r : s.replicas) {
    if (r.fit) {
      sum += r.fit->rho;
      sum_c += r.fit->C;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  if (mean_c) *mean_c = sum_c / static_cast<double>(n);
  return sum / static_cast<double>(n);
}

}  // namespace

void write_sweep_csv(std::ostream& out, SweepParam param, const std::vector<SweepPoint>& points) {
  out << to_string(param) << ",rounds_to_threshold,status,mean_rho\n";
  char buf[128];
  for (const auto& p : points) {
    const auto rho = mean_rho(p.summary);
    std::string rounds = p.summary.rounds_to_threshold ? std::to_string(*p.summary.rounds_to_threshold) : "";
    const char* status = p.summary.any_diverged ? "diverged" : (p.summary.rounds_to_threshold ? "ok" : "not_reached");
    std::snprintf(buf, sizeof buf, "%.17g,%s,%s,", p.value, rounds.c_str(), status);
    out << buf;
    if (rho) {
      std::snprintf(buf, sizeof buf, "%.17g", *rho);
      out << buf;
    }
    out << '\n';
  }
}

std::vector<VariantRow> compare_variants(const ScenarioConfig& cfg) {
  std::vector<VariantRow> rows;
  if (cfg.num_rounds == 0) return rows;
  ScenarioConfig c = cfg;
  c.family = CostFamily::quadratic;
  c.variant = Variant::rbj;
  const Scenario s = build_scenario(c);
  for (Variant v : {Variant::rbj, Variant::rgd, Variant::rwls}) {
    c.variant = v;
    const ScenarioSummary sum = run_replicas(s, c, v, nullptr);
    VariantRow row;
    row.variant = v;
    row.diverged = sum.any_diverged;
    double mc = 0.0;
    row.rho = mean_rho(sum, &mc);
    if (row.rho) row.C = mc;
    row.rounds_to_threshold = sum.rounds_to_threshold;
    if (row.diverged) {
      row.status = "diverged";
    } else if (!row.rho) {
      row.status = sum.replicas.front().fit_error;
    } else {
      row.status = "ok";
    }
    rows.push_back(std::move(row));
  }
  if (!cfg.output_dir.empty()) {
    auto f = open_out(prepare_dir(cfg.output_dir) / "compare.csv");
    write_compare_csv(f, rows);
  }
  return rows;
}

void write_compare_csv(std::ostream& out, const std::vector<VariantRow>& rows) {
  out << "variant,status,rho,C,rounds_to_threshold\n";
  char buf[64];
  for (const auto& r : rows) {
    out << to_string(r.variant) << ',' << (r.status.find(',') == std::string::npos ? r.status : "no_fit") << ',';
    if (r.rho) {
      std::snprintf(buf, sizeof buf, "%.17g", *r.rho);
      out << buf;
    }
    out << ',';
    if (r.C) {
      std::snprintf(buf, sizeof buf, "%.17g", *r.C);
      out << buf;
    }
    out << ',';
    if (r.rounds_to_threshold) out << *r.rounds_to_threshold;
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Stability search

double max_convergent_epsilon(const ScenarioConfig& cfg, const StabilitySearch& search) {
  if (!(search.hi > search.lo) || search.lo < 0.0) {
    throw Error(ErrorCode::invalid_argument, "stability search needs 0 <= lo < hi");
  }
  if (search.num_seeds == 0) throw Error(ErrorCode::invalid_argument, "need at least one seed");
  if (cfg.num_rounds == 0) throw Error(ErrorCode::invalid_argument, "stability search needs rounds");
  ScenarioConfig c = cfg;
  const Scenario s = build_scenario(c);
  auto converges = [&](double eps) {
    c.epsilon = eps;
    for (std::size_t r = 0; r < search.num_seeds; ++r) {
      const RunTrace trace = run_replica(s, c, r, c.variant);
      if (trace.diverged) return false;
      if (!(trace.err_inf.back() <= search.tol * trace.err_inf.front())) return false;
    }
    return true;
  };
  if (converges(search.hi)) return search.hi;
  double lo = search.lo;
  double hi = search.hi;
  for (std::size_t k = 0; k < search.iterations; ++k) {
    const double mid = 0.5 * (lo + hi);
    if (converges(mid)) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

}  // namespace rbj
