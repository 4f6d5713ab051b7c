#include <doctest.h>

#include <sstream>

#include "rbj/netsim.hpp"
#include "rbj/oracle.hpp"
#include "support.hpp"

using namespace rbj;
using namespace rbj::test;

namespace {

std::vector<AgentState> make_agents(const SeparableCost& c, const Vector& x, double eps,
                                    Variant v = Variant::rbj) {
  std::vector<AgentState> a;
  for (AgentId i = 0; i < c.graph().num_agents(); ++i) a.emplace_back(c.graph(), i, c.block(i, x), eps, v);
  return a;
}

RunOptions options(std::size_t rounds, double p, std::size_t T, std::uint64_t seed) {
  RunOptions o;
  o.num_rounds = rounds;
  o.loss.p_loss = p;
  o.loss.window_T = T;
  o.loss.seed = seed;
  return o;
}

}  // namespace

TEST_SUITE("netsim") {

TEST_CASE("lossless network delivers everything and converges") {
  auto c = random_quadratic(6, 3);
  const auto sol = solve_wls(*c);
  auto agents = make_agents(*c, Vector::Zero(static_cast<Eigen::Index>(c->graph().total_dim())), 0.5);
  auto o = options(400, 0.0, 10, 1);
  o.x_star = sol.x_star;
  const auto trace = run(agents, *c, o);
  CHECK(trace.rounds() == 400);
  CHECK(trace.links.size() == c->graph().num_directed_links());
  for (const auto& bits : trace.delivered) {
    for (auto b : bits) CHECK(b == 1);
  }
  for (std::size_t t = 1; t <= 400; ++t) CHECK(trace.max_staleness[t] == 0);
  CHECK(trace.err_inf.back() <= 1e-10);
  CHECK_FALSE(trace.diverged);
}

TEST_CASE("near-certain loss forces delivery every T-th round") {
  auto c = random_quadratic(5, 4);
  auto agents = make_agents(*c, Vector::Zero(static_cast<Eigen::Index>(c->graph().total_dim())), 0.1);
  const std::size_t T = 5;
  const auto trace = run(agents, *c, options(500, 0.999, T, 7));
  std::size_t random_deliveries = 0;
  for (std::size_t l = 0; l < trace.links.size(); ++l) {
    std::size_t last = 0;
    for (std::size_t t = 1; t <= trace.rounds(); ++t) {
      if (!trace.delivered[t - 1][l]) continue;
      CHECK(t - last <= T);
      if (t - last != T) ++random_deliveries;
      last = t;
    }
  }
  // With p = 0.999 a voluntary delivery is rare; the pattern is the forced one.
  CHECK(random_deliveries <= 3);
  for (std::size_t t = 0; t <= trace.rounds(); ++t) CHECK(trace.max_staleness[t] < T);
}

TEST_CASE("staleness counts rounds since the last delivery") {
  auto c = random_quadratic(6, 5);
  auto agents = make_agents(*c, Vector::Zero(static_cast<Eigen::Index>(c->graph().total_dim())), 0.1);
  const auto trace = run(agents, *c, options(300, 0.6, 4, 9));
  for (std::size_t l = 0; l < trace.links.size(); ++l) {
    const auto [s, r] = trace.links[l];
    std::size_t drops = 0;
    for (std::size_t t = 1; t <= trace.rounds(); ++t) {
      drops = trace.delivered[t - 1][l] ? 0 : drops + 1;
      CHECK(staleness(trace, r, s, t) == drops);
      CHECK(drops <= 4);
    }
  }
  CHECK_THROWS_AS(staleness(trace, 0, 0, 1), Error);
  CHECK_THROWS_AS(staleness(trace, trace.links[0].receiver, trace.links[0].sender, 301), Error);
}

TEST_CASE("max staleness stays within the window over a long run") {
  auto c = random_quadratic(8, 6);
  auto agents = make_agents(*c, Vector::Zero(static_cast<Eigen::Index>(c->graph().total_dim())), 0.2);
  const auto trace = run(agents, *c, options(10000, 0.3, 10, 11));
  std::size_t worst = 0;
  for (auto s : trace.max_staleness) worst = std::max(worst, s);
  CHECK(worst <= 10);
}

TEST_CASE("without enforcement gaps can exceed the window") {
  auto c = random_quadratic(4, 6);
  auto agents = make_agents(*c, Vector::Zero(static_cast<Eigen::Index>(c->graph().total_dim())), 0.2);
  auto o = options(2000, 0.8, 3, 2);
  o.loss.enforce_persistence = false;
  const auto trace = run(agents, *c, o);
  std::size_t worst = 0;
  for (auto s : trace.max_staleness) worst = std::max(worst, s);
  CHECK(worst >= 3);
}

TEST_CASE("identical seeds give identical traces") {
  auto c = random_robust(7, 8, 0.01);
  const Vector x0 = Vector::Ones(static_cast<Eigen::Index>(c->graph().total_dim()));
  for (auto sched : {SchedulerKind::round, SchedulerKind::randomized}) {
    auto o = options(200, 0.4, 6, 21);
    o.scheduler = sched;
    auto a1 = make_agents(*c, x0, 0.05);
    auto a2 = make_agents(*c, x0, 0.05);
    const auto t1 = run(a1, *c, o);
    const auto t2 = run(a2, *c, o);
    CHECK(t1.cost == t2.cost);
    CHECK(t1.delivered == t2.delivered);
    std::ostringstream s1, s2;
    write_trace_csv(s1, t1, 0.0);
    write_trace_csv(s2, t2, 0.0);
    CHECK(s1.str() == s2.str());
    o.loss.seed = 22;
    auto a3 = make_agents(*c, x0, 0.05);
    CHECK(run(a3, *c, o).delivered != t1.delivered);
  }
}

TEST_CASE("frozen states let the caches settle within 2T+1 rounds") {
  auto c = random_quadratic(7, 13);
  const auto& g = c->graph();
  std::mt19937_64 rng(3);
  const Vector x = random_vector(static_cast<Eigen::Index>(g.total_dim()), rng);
  const std::size_t T = 4;
  auto agents = make_agents(*c, x, 0.5);
  auto o = options(2 * T + 1, 0.5, T, 5);
  o.step_mode = StepMode::freeze;
  run(agents, *c, o);
  CHECK(gather_state(agents) == x);
  for (AgentId i = 0; i < g.num_agents(); ++i) {
    for (AgentId j : g.neighbors(i)) {
      CHECK(agents[i].cached_x(j) == c->block(j, x));
      CHECK(rel_err(agents[i].cached_rho(j), c->rho_block(j, i, c->gather(j, x))) <= 1e-14);
      CHECK(rel_err(agents[i].cached_xi(j), c->xi_block(j, i, c->gather(j, x))) <= 1e-14);
    }
  }
}

TEST_CASE("randomized scheduler converges on a lossy network") {
  auto c = random_quadratic(6, 14);
  const auto sol = solve_wls(*c);
  auto agents = make_agents(*c, Vector::Zero(static_cast<Eigen::Index>(c->graph().total_dim())), 0.3);
  auto o = options(3000, 0.3, 10, 3);
  o.scheduler = SchedulerKind::randomized;
  o.x_star = sol.x_star;
  const auto trace = run(agents, *c, o);
  CHECK(trace.err_inf.back() <= 1e-8);
}

TEST_CASE("divergence is detected and the CSV is padded") {
  auto c = random_quadratic(5, 15);
  auto agents = make_agents(*c, Vector::Ones(static_cast<Eigen::Index>(c->graph().total_dim())), 50.0,
                            Variant::rgd);
  const auto trace = run(agents, *c, options(1000, 0.0, 10, 1));
  CHECK(trace.diverged);
  CHECK(trace.rounds() < 1000);
  std::ostringstream out;
  write_trace_csv(out, trace, 0.0, 1000);
  std::size_t lines = 0;
  for (char ch : out.str()) lines += ch == '\n';
  CHECK(lines == 1002);
  CHECK(out.str().find("1000,inf,inf,inf") != std::string::npos);
}

TEST_CASE("invalid run options are rejected") {
  auto c = random_quadratic(4, 16);
  auto agents = make_agents(*c, Vector::Zero(static_cast<Eigen::Index>(c->graph().total_dim())), 0.1);
  CHECK_THROWS_AS(run(agents, *c, options(0, 0.0, 10, 1)), Error);
  CHECK_THROWS_AS(run(agents, *c, options(10, 1.0, 10, 1)), Error);
  CHECK_THROWS_AS(run(agents, *c, options(10, -0.1, 10, 1)), Error);
  CHECK_THROWS_AS(run(agents, *c, options(10, 0.1, 0, 1)), Error);
  CHECK(scheduler_from_string("randomized") == SchedulerKind::randomized);
  CHECK_THROWS_AS(scheduler_from_string("fifo"), Error);
}

TEST_CASE("counter draws are uniform") {
  double sum = 0.0;
  const int n = 200000;
  for (int k = 0; k < n; ++k) {
    const double u = counter_uniform(42, 3, static_cast<std::uint64_t>(k));
    CHECK_UNARY(u >= 0.0);
    CHECK_UNARY(u < 1.0);
    sum += u;
  }
  CHECK(std::abs(sum / n - 0.5) < 0.005);
}

}
