#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "rbj/experiment.hpp"

using namespace rbj;
namespace fs = std::filesystem;

namespace {

ScenarioConfig small_config() {
  ScenarioConfig c;
  c.feeder_buses = 30;
  c.num_areas = 6;
  c.num_rounds = 200;
  c.num_replicas = 3;
  c.epsilon = 0.01;
  return c;
}

fs::path fresh_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("rbj_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t count_lines(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

}  // namespace

TEST_SUITE("experiment") {

TEST_CASE("config text round trip") {
  auto c = small_config();
  c.family = CostFamily::quadratic;
  c.variant = Variant::rwls;
  c.scheduler = SchedulerKind::randomized;
  c.init = InitKind::far;
  c.epsilon = 0.1 + 0.2;
  c.enforce_persistence = false;
  c.output_dir = "out dir";
  std::ostringstream out;
  write_config(out, c);
  std::istringstream in(out.str());
  const auto back = read_config(in);
  std::ostringstream again;
  write_config(again, back);
  CHECK(again.str() == out.str());
  CHECK(back.epsilon == c.epsilon);
  CHECK(back.output_dir == "out dir");
  for (const auto& key : config_keys()) CHECK(get_config_value(back, key) == get_config_value(c, key));
}

TEST_CASE("config validation and key errors") {
  ScenarioConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK_THROWS_AS(set_config_value(c, "no_such_key", "1"), Error);
  CHECK_THROWS_AS(set_config_value(c, "epsilon", "abc"), Error);
  CHECK_THROWS_AS(set_config_value(c, "family", "cubic"), Error);
  for (auto [key, value] : {std::pair{"epsilon", "-1"}, std::pair{"p_loss", "1"},
                            std::pair{"window_T", "0"}, std::pair{"num_replicas", "0"}}) {
    auto d = c;
    set_config_value(d, key, value);
    CHECK_THROWS_AS(d.validate(), Error);
  }
  set_config_value(c, "outlier_frac", "0.2");
  CHECK(c.outlier_frac_v == 0.2);
  CHECK(c.outlier_frac_ic == 0.2);
  set_config_value(c, "num_rounds", "0");
  CHECK_NOTHROW(c.validate());

  ScenarioConfig bad;
  bad.num_areas = 200;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = ScenarioConfig{};
  bad.variant = Variant::rwls;
  CHECK_THROWS_AS(bad.validate(), Error);

  std::istringstream unknown("epsilon = 0.1\nbogus = 3\n");
  CHECK_THROWS_AS(read_config(unknown), Error);
  std::istringstream comment("# comment\n\nepsilon = 0.25  # trailing\n");
  CHECK(read_config(comment).epsilon == 0.25);
}

TEST_CASE("scenario outputs have one row per round and a consistent mean") {
  auto c = small_config();
  const auto dir = fresh_dir("rows");
  c.output_dir = dir.string();
  const auto s = run_scenario(c);
  CHECK(s.replicas.size() == 3);
  CHECK(s.mean_normalized.size() == c.num_rounds + 1);
  CHECK(s.mean_normalized.front() == doctest::Approx(1.0));
  for (std::size_t r = 0; r < 3; ++r) {
    char name[32];
    std::snprintf(name, sizeof name, "replica_%03zu.csv", r);
    const auto text = slurp(dir / name);
    CHECK(count_lines(text) == c.num_rounds + 2);
  }
  CHECK(count_lines(slurp(dir / "summary.csv")) == c.num_rounds + 2);
  CHECK(fs::exists(dir / "summary.txt"));

  // The mean column equals the average of the replica columns.
  std::vector<std::vector<double>> cols(3);
  for (std::size_t r = 0; r < 3; ++r) {
    char name[32];
    std::snprintf(name, sizeof name, "replica_%03zu.csv", r);
    std::istringstream in(slurp(dir / name));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      std::istringstream row(line);
      std::string round, j, norm;
      std::getline(row, round, ',');
      std::getline(row, j, ',');
      std::getline(row, norm, ',');
      cols[r].push_back(std::stod(norm));
    }
  }
  for (std::size_t t = 0; t <= c.num_rounds; ++t) {
    const double mean = (cols[0][t] + cols[1][t] + cols[2][t]) / 3.0;
    CHECK(s.mean_normalized[t] == doctest::Approx(mean).epsilon(1e-12));
  }
}

TEST_CASE("identical configs write identical files") {
  auto c = small_config();
  c.num_rounds = 100;
  const auto a = fresh_dir("det_a"), b = fresh_dir("det_b");
  c.output_dir = a.string();
  run_scenario(c);
  c.output_dir = b.string();
  run_scenario(c);
  for (const auto& e : fs::directory_iterator(a)) {
    const auto name = e.path().filename();
    if (name == "summary.txt") continue;
    CHECK(slurp(e.path()) == slurp(b / name));
  }
}

TEST_CASE("zero rounds: initial record only and an empty comparison") {
  auto c = small_config();
  c.num_rounds = 0;
  const auto s = run_scenario(c);
  CHECK(s.mean_normalized.size() == 1);
  CHECK(compare_variants(c).empty());
}

TEST_CASE("sweep writes one subdirectory per value") {
  auto c = small_config();
  c.num_rounds = 50;
  c.num_replicas = 2;
  const auto dir = fresh_dir("sweep");
  c.output_dir = dir.string();
  const auto pts = sweep(c, SweepParam::areas, {3, 6});
  CHECK(pts.size() == 2);
  CHECK(fs::exists(dir / "sweep.csv"));
  CHECK(count_lines(slurp(dir / "sweep.csv")) == 3);
  std::size_t subdirs = 0;
  for (const auto& e : fs::directory_iterator(dir)) subdirs += e.is_directory();
  CHECK(subdirs == 2);
  CHECK_THROWS_AS(sweep_param_from_string("nu"), Error);
}

TEST_CASE("variant comparison on the weighted instance") {
  auto c = small_config();
  c.num_rounds = 300;
  c.num_replicas = 2;
  c.epsilon = 0.5;
  c.init = InitKind::far;
  const auto rows = compare_variants(c);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].variant == Variant::rbj);
  CHECK(rows[1].variant == Variant::rgd);
  CHECK(rows[2].variant == Variant::rwls);
  REQUIRE(rows[0].rho);
  CHECK(*rows[0].rho < 1.0);
  CHECK((rows[1].diverged || (rows[1].rho && *rows[1].rho >= *rows[0].rho)));
  std::ostringstream out;
  write_compare_csv(out, rows);
  CHECK(count_lines(out.str()) == 4);
}

TEST_CASE("initial states") {
  auto c = small_config();
  c.family = CostFamily::quadratic;
  c.init = InitKind::wls;
  const auto s = build_scenario(c);
  CHECK((s.x0 - s.reference.x_star).cwiseAbs().maxCoeff() == 0.0);
  c.init = InitKind::far;
  const auto f = build_scenario(c);
  const Vector d = (f.x0 - f.reference.x_star).cwiseAbs();
  CHECK(d.minCoeff() >= 1.0);
  CHECK(d.maxCoeff() <= 2.0);
  c.init = InitKind::flat;
  const Vector v = build_scenario(c).problem.to_rectangular(build_scenario(c).x0);
  CHECK(v.head(30).isOnes(0.0));
  CHECK(v.tail(30).isZero(0.0));
}

}
