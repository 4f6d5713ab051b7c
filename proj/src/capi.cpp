#include "rbj/rbj.h"

#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include "rbj/experiment.hpp"

struct rbj_graph {
  rbj::PartitionedGraph g;
};

struct rbj_config {
  rbj::ScenarioConfig cfg;
  std::string text;
};

struct rbj_report {
  struct Row {
    bool reached = false;
    std::size_t rounds = 0;
    bool has_rate = false;
    double rho = 0.0;
    bool diverged = false;
  };
  std::string text;
  std::vector<Row> rows;
};

struct rbj_problem {
  std::shared_ptr<const rbj::SeparableCost> cost;
};

namespace {

thread_local std::string last_error;

rbj_status to_status(rbj::ErrorCode c) {
  switch (c) {
    case rbj::ErrorCode::invalid_argument: return RBJ_INVALID_ARGUMENT;
    case rbj::ErrorCode::not_connected: return RBJ_NOT_CONNECTED;
    case rbj::ErrorCode::singular: return RBJ_SINGULAR;
    case rbj::ErrorCode::protocol: return RBJ_PROTOCOL;
    case rbj::ErrorCode::not_converged: return RBJ_NOT_CONVERGED;
    case rbj::ErrorCode::no_fit: return RBJ_NO_FIT;
    case rbj::ErrorCode::io: return RBJ_IO;
    case rbj::ErrorCode::parse: return RBJ_PARSE;
  }
  return RBJ_INTERNAL;
}

template <class F>
rbj_status guard(F&& f) {
  try {
    f();
    last_error.clear();
    return RBJ_OK;
  } catch (const rbj::Error& e) {
    last_error = e.what();
    return to_status(e.code());
  } catch (const std::exception& e) {
    last_error = e.what();
    return RBJ_INTERNAL;
  } catch (...) {
    last_error = "unknown error";
    return RBJ_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (!p) throw rbj::Error(rbj::ErrorCode::invalid_argument, std::string(what) + " is NULL");
}

rbj_report::Row row_from(const rbj::ScenarioSummary& s) {
  rbj_report::Row row;
  row.diverged = s.any_diverged;
  row.reached = s.rounds_to_threshold.has_value();
  row.rounds = s.rounds_to_threshold.value_or(0);
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : s.replicas) {
    if (r.fit) {
      sum += r.fit->rho;
      ++n;
    }
  }
  row.has_rate = n > 0;
  row.rho = n > 0 ? sum / static_cast<double>(n) : 0.0;
  return row;
}

const rbj_report::Row& report_row(const rbj_report* r, std::size_t row) {
  need(r, "report");
  if (row >= r->rows.size()) throw rbj::Error(rbj::ErrorCode::invalid_argument, "row out of range");
  return r->rows[row];
}

}  // namespace

extern "C" {

const char* rbj_status_name(rbj_status s) {
  switch (s) {
    case RBJ_OK: return "ok";
    case RBJ_INVALID_ARGUMENT: return "invalid_argument";
    case RBJ_NOT_CONNECTED: return "not_connected";
    case RBJ_SINGULAR: return "singular";
    case RBJ_PROTOCOL: return "protocol";
    case RBJ_NOT_CONVERGED: return "not_converged";
    case RBJ_NO_FIT: return "no_fit";
    case RBJ_IO: return "io";
    case RBJ_PARSE: return "parse";
    case RBJ_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* rbj_last_error(void) { return last_error.c_str(); }

// Graphs

rbj_status rbj_graph_create(size_t num_agents, const size_t* edges, size_t num_edges,
                            const size_t* dims, rbj_graph** out) {
  return guard([&] {
    need(out, "out");
    if (num_edges > 0) need(edges, "edges");
    need(dims, "dims");
    std::vector<rbj::Edge> e;
    for (size_t k = 0; k < num_edges; ++k) e.emplace_back(edges[2 * k], edges[2 * k + 1]);
    std::vector<std::size_t> d(dims, dims + num_agents);
    *out = new rbj_graph{rbj::PartitionedGraph::build(num_agents, e, d)};
  });
}

rbj_status rbj_graph_load(const char* path, rbj_graph** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new rbj_graph{rbj::load_graph(path)};
  });
}

rbj_status rbj_graph_num_agents(const rbj_graph* g, size_t* out) {
  return guard([&] {
    need(g, "graph");
    need(out, "out");
    *out = g->g.num_agents();
  });
}

rbj_status rbj_graph_neighbors(const rbj_graph* g, size_t agent, size_t* buf, size_t cap,
                               size_t* count) {
  return guard([&] {
    need(g, "graph");
    const auto& nb = g->g.neighbors(agent);
    if (count) *count = nb.size();
    if (cap > 0) need(buf, "buf");
    for (size_t k = 0; k < nb.size() && k < cap; ++k) buf[k] = nb[k];
  });
}

void rbj_graph_free(rbj_graph* g) { delete g; }

// Configs

rbj_status rbj_config_new(rbj_config** out) {
  return guard([&] {
    need(out, "out");
    *out = new rbj_config{};
  });
}

rbj_status rbj_config_load(const char* path, rbj_config** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new rbj_config{rbj::load_config(path), {}};
  });
}

rbj_status rbj_config_save(const rbj_config* cfg, const char* path) {
  return guard([&] {
    need(cfg, "config");
    need(path, "path");
    rbj::save_config(path, cfg->cfg);
  });
}

rbj_status rbj_config_set(rbj_config* cfg, const char* key, const char* value) {
  return guard([&] {
    need(cfg, "config");
    need(key, "key");
    need(value, "value");
    rbj::ScenarioConfig next = cfg->cfg;
    rbj::set_config_value(next, key, value);
    cfg->cfg = next;
  });
}

rbj_status rbj_config_get(const rbj_config* cfg, const char* key, char* buf, size_t cap,
                          size_t* needed) {
  return guard([&] {
    need(cfg, "config");
    need(key, "key");
    const std::string v = rbj::get_config_value(cfg->cfg, key);
    if (needed) *needed = v.size() + 1;
    if (cap > 0) {
      need(buf, "buf");
      const size_t n = std::min(cap - 1, v.size());
      std::memcpy(buf, v.data(), n);
      buf[n] = '\0';
    }
  });
}

rbj_status rbj_config_validate(const rbj_config* cfg) {
  return guard([&] {
    need(cfg, "config");
    cfg->cfg.validate();
  });
}

rbj_status rbj_config_text(rbj_config* cfg, const char** text) {
  return guard([&] {
    need(cfg, "config");
    need(text, "text");
    std::ostringstream ss;
    rbj::write_config(ss, cfg->cfg);
    cfg->text = ss.str();
    *text = cfg->text.c_str();
  });
}

void rbj_config_free(rbj_config* cfg) { delete cfg; }

// Experiments

rbj_status rbj_run_scenario(const rbj_config* cfg, rbj_report** out) {
  return guard([&] {
    need(cfg, "config");
    need(out, "out");
    const auto s = rbj::run_scenario(cfg->cfg);
    auto rep = std::make_unique<rbj_report>();
    std::ostringstream ss;
    rbj::write_summary_txt(ss, cfg->cfg, s);
    rep->text = ss.str();
    for (const auto& r : s.replicas) {
      rbj_report::Row row;
      row.diverged = r.diverged;
      row.reached = r.rounds_to_threshold.has_value();
      row.rounds = r.rounds_to_threshold.value_or(0);
      row.has_rate = r.fit.has_value();
      row.rho = r.fit ? r.fit->rho : 0.0;
      rep->rows.push_back(row);
    }
    *out = rep.release();
  });
}

rbj_status rbj_sweep(const rbj_config* cfg, const char* param, const double* values,
                     size_t num_values, rbj_report** out) {
  return guard([&] {
    need(cfg, "config");
    need(param, "param");
    need(out, "out");
    if (num_values > 0) need(values, "values");
    const auto points = rbj::sweep(cfg->cfg, rbj::sweep_param_from_string(param),
                                   std::vector<double>(values, values + num_values));
    auto rep = std::make_unique<rbj_report>();
    std::ostringstream ss;
    rbj::write_sweep_csv(ss, rbj::sweep_param_from_string(param), points);
    rep->text = ss.str();
    for (const auto& p : points) rep->rows.push_back(row_from(p.summary));
    *out = rep.release();
  });
}

rbj_status rbj_compare_variants(const rbj_config* cfg, rbj_report** out) {
  return guard([&] {
    need(cfg, "config");
    need(out, "out");
    const auto rows = rbj::compare_variants(cfg->cfg);
    auto rep = std::make_unique<rbj_report>();
    std::ostringstream ss;
    rbj::write_compare_csv(ss, rows);
    rep->text = ss.str();
    for (const auto& r : rows) {
      rbj_report::Row row;
      row.diverged = r.diverged;
      row.reached = r.rounds_to_threshold.has_value();
      row.rounds = r.rounds_to_threshold.value_or(0);
      row.has_rate = r.rho.has_value();
      row.rho = r.rho.value_or(0.0);
      rep->rows.push_back(row);
    }
    *out = rep.release();
  });
}

rbj_status rbj_report_text(const rbj_report* r, const char** text) {
  return guard([&] {
    need(r, "report");
    need(text, "text");
    *text = r->text.c_str();
  });
}

rbj_status rbj_report_num_rows(const rbj_report* r, size_t* out) {
  return guard([&] {
    need(r, "report");
    need(out, "out");
    *out = r->rows.size();
  });
}

rbj_status rbj_report_rounds_to_threshold(const rbj_report* r, size_t row, int* reached,
                                          size_t* rounds) {
  return guard([&] {
    const auto& x = report_row(r, row);
    need(reached, "reached");
    *reached = x.reached ? 1 : 0;
    if (rounds) *rounds = x.rounds;
  });
}

rbj_status rbj_report_rate(const rbj_report* r, size_t row, int* has_rate, double* rho) {
  return guard([&] {
    const auto& x = report_row(r, row);
    need(has_rate, "has_rate");
    *has_rate = x.has_rate ? 1 : 0;
    if (rho) *rho = x.rho;
  });
}

rbj_status rbj_report_diverged(const rbj_report* r, size_t row, int* diverged) {
  return guard([&] {
    const auto& x = report_row(r, row);
    need(diverged, "diverged");
    *diverged = x.diverged ? 1 : 0;
  });
}

void rbj_report_free(rbj_report* r) { delete r; }

// Problems

rbj_status rbj_problem_load(const char* path, rbj_problem** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new rbj_problem{rbj::load_problem(path)};
  });
}

rbj_status rbj_problem_from_config(const rbj_config* cfg, rbj_problem** out) {
  return guard([&] {
    need(cfg, "config");
    need(out, "out");
    const auto& c = cfg->cfg;
    c.validate();
    const rbj::Feeder f = c.feeder_file.empty() ? rbj::synth_feeder(c.feeder_buses, c.feeder_seed)
                                                : rbj::load_feeder(c.feeder_file);
    rbj::OutlierOptions o;
    o.fraction = c.outlier_frac_v;
    o.current_fraction = c.outlier_frac_ic;
    o.random_sign = c.outlier_random_sign;
    const auto m = rbj::measure(f, c.sigma_v, c.sigma_ic, o, c.measurement_seed);
    auto prob = rbj::build_area_cost(f, m, c.num_areas, c.family, c.nu, c.partition_seed);
    *out = new rbj_problem{prob.cost};
  });
}

rbj_status rbj_problem_save(const rbj_problem* p, const char* path) {
  return guard([&] {
    need(p, "problem");
    need(path, "path");
    rbj::save_problem(path, *p->cost);
  });
}

rbj_status rbj_problem_dim(const rbj_problem* p, size_t* out) {
  return guard([&] {
    need(p, "problem");
    need(out, "out");
    *out = p->cost->graph().total_dim();
  });
}

rbj_status rbj_problem_num_agents(const rbj_problem* p, size_t* out) {
  return guard([&] {
    need(p, "problem");
    need(out, "out");
    *out = p->cost->graph().num_agents();
  });
}

namespace {

rbj::Vector checked_state(const rbj_problem* p, const double* x, size_t n) {
  need(p, "problem");
  if (n != p->cost->graph().total_dim()) {
    throw rbj::Error(rbj::ErrorCode::invalid_argument,
                     "state has length " + std::to_string(n) + ", expected " +
                         std::to_string(p->cost->graph().total_dim()));
  }
  if (!x) return rbj::Vector::Zero(static_cast<Eigen::Index>(n));
  return Eigen::Map<const rbj::Vector>(x, static_cast<Eigen::Index>(n));
}

}  // namespace

rbj_status rbj_problem_value(const rbj_problem* p, const double* x, size_t n, double* out) {
  return guard([&] {
    need(x, "x");
    need(out, "out");
    *out = p->cost->global_value(checked_state(p, x, n));
  });
}

rbj_status rbj_problem_solve(const rbj_problem* p, double* x_out, size_t n, double* j_star) {
  return guard([&] {
    need(p, "problem");
    const auto sol = rbj::solve_reference(*p->cost);
    if (x_out) {
      checked_state(p, nullptr, n);
      Eigen::Map<rbj::Vector>(x_out, static_cast<Eigen::Index>(n)) = sol.x_star;
    }
    if (j_star) *j_star = sol.J_star;
  });
}

void rbj_problem_free(rbj_problem* p) { delete p; }

rbj_sim_options rbj_sim_options_default(void) {
  rbj_sim_options o;
  o.variant = "rbj";
  o.scheduler = "round";
  o.epsilon = 0.1;
  o.p_loss = 0.0;
  o.window_T = 10;
  o.enforce_persistence = 1;
  o.seed = 0;
  o.num_rounds = 100;
  return o;
}

rbj_status rbj_simulate(const rbj_problem* p, const rbj_sim_options* opt, const double* x0,
                        size_t n, const char* csv_path, double* x_final, int* diverged) {
  return guard([&] {
    need(opt, "options");
    need(opt->variant, "options.variant");
    need(opt->scheduler, "options.scheduler");
    const rbj::Vector x = checked_state(p, x0, n);
    const auto& cost = *p->cost;
    const auto& g = cost.graph();
    const rbj::Variant variant = rbj::variant_from_string(opt->variant);
    std::vector<rbj::AgentState> agents;
    for (rbj::AgentId i = 0; i < g.num_agents(); ++i) {
      agents.emplace_back(g, i, cost.block(i, x), opt->epsilon, variant);
    }
    rbj::RunOptions ro;
    ro.num_rounds = opt->num_rounds;
    ro.scheduler = rbj::scheduler_from_string(opt->scheduler);
    ro.loss.p_loss = opt->p_loss;
    ro.loss.window_T = opt->window_T;
    ro.loss.enforce_persistence = opt->enforce_persistence != 0;
    ro.loss.seed = opt->seed;
    const auto ref = rbj::solve_reference(cost);
    ro.x_star = ref.x_star;
    const auto trace = rbj::run(agents, cost, ro);
    if (csv_path) {
      std::ofstream out(csv_path, std::ios::binary);
      if (!out) throw rbj::Error(rbj::ErrorCode::io, std::string("cannot write ") + csv_path);
      rbj::write_trace_csv(out, trace, ref.J_star, trace.diverged ? opt->num_rounds : 0);
    }
    if (x_final) {
      Eigen::Map<rbj::Vector>(x_final, static_cast<Eigen::Index>(n)) = rbj::gather_state(agents);
    }
    if (diverged) *diverged = trace.diverged ? 1 : 0;
  });
}

}  // extern "C"
