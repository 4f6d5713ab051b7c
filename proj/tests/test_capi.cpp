#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "rbj/rbj.h"

namespace fs = std::filesystem;

TEST_SUITE("capi") {

TEST_CASE("graph handles and status codes") {
  const size_t edges[] = {0, 1, 1, 2};
  const size_t dims[] = {1, 2, 1};
  rbj_graph* g = nullptr;
  REQUIRE(rbj_graph_create(3, edges, 2, dims, &g) == RBJ_OK);
  size_t n = 0;
  CHECK(rbj_graph_num_agents(g, &n) == RBJ_OK);
  CHECK(n == 3);
  size_t buf[4], count = 0;
  CHECK(rbj_graph_neighbors(g, 1, buf, 4, &count) == RBJ_OK);
  CHECK(count == 2);
  CHECK(buf[0] == 0);
  CHECK(buf[1] == 2);
  CHECK(rbj_graph_neighbors(g, 1, buf, 1, &count) == RBJ_OK);
  CHECK(count == 2);
  CHECK(rbj_graph_neighbors(g, 9, buf, 4, &count) == RBJ_INVALID_ARGUMENT);
  CHECK(std::strlen(rbj_last_error()) > 0);
  rbj_graph_free(g);

  rbj_graph* bad = nullptr;
  CHECK(rbj_graph_create(3, edges, 1, dims, &bad) == RBJ_NOT_CONNECTED);
  CHECK(bad == nullptr);
  CHECK(rbj_graph_create(3, edges, 2, dims, nullptr) == RBJ_INVALID_ARGUMENT);
  CHECK(rbj_graph_load("/nonexistent/graph.txt", &bad) == RBJ_IO);
  CHECK(std::string(rbj_status_name(RBJ_SINGULAR)) == "singular");
  rbj_graph_free(nullptr);
}

TEST_CASE("config get, set and text") {
  rbj_config* c = nullptr;
  REQUIRE(rbj_config_new(&c) == RBJ_OK);
  CHECK(rbj_config_set(c, "epsilon", "0.25") == RBJ_OK);
  char buf[8];
  size_t needed = 0;
  CHECK(rbj_config_get(c, "epsilon", buf, sizeof buf, &needed) == RBJ_OK);
  CHECK(std::string(buf) == "0.25");
  CHECK(needed == 5);
  CHECK(rbj_config_get(c, "family", buf, 3, &needed) == RBJ_OK);
  CHECK(std::string(buf) == "ro");
  CHECK(needed == 7);
  CHECK(rbj_config_set(c, "bogus", "1") == RBJ_INVALID_ARGUMENT);
  CHECK(rbj_config_set(c, "p_loss", "2") == RBJ_OK);
  CHECK(rbj_config_validate(c) == RBJ_INVALID_ARGUMENT);
  CHECK(rbj_config_set(c, "p_loss", "0.3") == RBJ_OK);
  CHECK(rbj_config_validate(c) == RBJ_OK);
  const char* text = nullptr;
  CHECK(rbj_config_text(c, &text) == RBJ_OK);
  CHECK(std::string(text).find("epsilon = 0.25") != std::string::npos);

  const auto path = fs::temp_directory_path() / "rbj_capi.cfg";
  CHECK(rbj_config_save(c, path.c_str()) == RBJ_OK);
  rbj_config* back = nullptr;
  CHECK(rbj_config_load(path.c_str(), &back) == RBJ_OK);
  const char* text2 = nullptr;
  CHECK(rbj_config_text(back, &text2) == RBJ_OK);
  CHECK(std::string(text2) == std::string(text));
  rbj_config_free(back);
  rbj_config_free(c);

  std::ofstream(path) << "epsilon = nope\n";
  CHECK(rbj_config_load(path.c_str(), &back) == RBJ_PARSE);
}

TEST_CASE("problem solve and simulate") {
  rbj_config* c = nullptr;
  REQUIRE(rbj_config_new(&c) == RBJ_OK);
  rbj_config_set(c, "feeder_buses", "20");
  rbj_config_set(c, "num_areas", "4");
  rbj_config_set(c, "family", "quadratic");
  rbj_problem* p = nullptr;
  REQUIRE(rbj_problem_from_config(c, &p) == RBJ_OK);
  size_t dim = 0, agents = 0;
  CHECK(rbj_problem_dim(p, &dim) == RBJ_OK);
  CHECK(rbj_problem_num_agents(p, &agents) == RBJ_OK);
  CHECK(dim == 40);
  CHECK(agents == 4);

  std::vector<double> xs(dim);
  double j_star = 0.0;
  CHECK(rbj_problem_solve(p, xs.data(), dim, &j_star) == RBJ_OK);
  double j = 0.0;
  CHECK(rbj_problem_value(p, xs.data(), dim, &j) == RBJ_OK);
  CHECK(j == doctest::Approx(j_star));
  CHECK(rbj_problem_value(p, xs.data(), dim - 1, &j) == RBJ_INVALID_ARGUMENT);

  const auto file = fs::temp_directory_path() / "rbj_capi_problem.txt";
  CHECK(rbj_problem_save(p, file.c_str()) == RBJ_OK);
  rbj_problem* q = nullptr;
  REQUIRE(rbj_problem_load(file.c_str(), &q) == RBJ_OK);
  double jq = 0.0;
  CHECK(rbj_problem_value(q, xs.data(), dim, &jq) == RBJ_OK);
  CHECK(jq == j);

  rbj_sim_options o = rbj_sim_options_default();
  o.variant = "rwls";
  o.epsilon = 0.5;
  o.p_loss = 0.3;
  o.num_rounds = 400;
  std::vector<double> x0(dim, 1.0), xf(dim);
  int diverged = -1;
  const auto csv = fs::temp_directory_path() / "rbj_capi_trace.csv";
  CHECK(rbj_simulate(q, &o, x0.data(), dim, csv.c_str(), xf.data(), &diverged) == RBJ_OK);
  CHECK(diverged == 0);
  double err = 0.0;
  for (size_t k = 0; k < dim; ++k) err = std::max(err, std::abs(xf[k] - xs[k]));
  CHECK(err <= 1e-6);
  CHECK(fs::file_size(csv) > 0);

  o.variant = "magic";
  CHECK(rbj_simulate(q, &o, nullptr, 0, nullptr, nullptr, nullptr) == RBJ_INVALID_ARGUMENT);
  rbj_problem_free(q);
  rbj_problem_free(p);
  rbj_config_free(c);
}

TEST_CASE("scenario reports") {
  rbj_config* c = nullptr;
  REQUIRE(rbj_config_new(&c) == RBJ_OK);
  rbj_config_set(c, "feeder_buses", "20");
  rbj_config_set(c, "num_areas", "4");
  rbj_config_set(c, "num_rounds", "60");
  rbj_config_set(c, "num_replicas", "2");
  rbj_config_set(c, "epsilon", "0.01");
  rbj_report* r = nullptr;
  REQUIRE(rbj_run_scenario(c, &r) == RBJ_OK);
  size_t rows = 0;
  CHECK(rbj_report_num_rows(r, &rows) == RBJ_OK);
  CHECK(rows == 2);
  int dv = -1;
  CHECK(rbj_report_diverged(r, 0, &dv) == RBJ_OK);
  CHECK(dv == 0);
  CHECK(rbj_report_diverged(r, 5, &dv) == RBJ_INVALID_ARGUMENT);
  const char* text = nullptr;
  CHECK(rbj_report_text(r, &text) == RBJ_OK);
  CHECK(std::strlen(text) > 0);
  rbj_report_free(r);

  const double values[] = {0.005, 0.01};
  REQUIRE(rbj_sweep(c, "epsilon", values, 2, &r) == RBJ_OK);
  CHECK(rbj_report_num_rows(r, &rows) == RBJ_OK);
  CHECK(rows == 2);
  rbj_report_free(r);
  CHECK(rbj_sweep(c, "nu", values, 2, &r) == RBJ_INVALID_ARGUMENT);

  rbj_config_set(c, "num_rounds", "0");
  REQUIRE(rbj_compare_variants(c, &r) == RBJ_OK);
  CHECK(rbj_report_num_rows(r, &rows) == RBJ_OK);
  CHECK(rows == 0);
  rbj_report_free(r);
  rbj_config_free(c);
}

}
