#include <doctest.h>

#include <queue>
#include <sstream>

#include "rbj/graph.hpp"
#include "support.hpp"

using namespace rbj;

namespace {

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::invalid_argument;
}

bool bfs_connected(std::size_t n, const std::vector<Edge>& edges) {
  std::vector<std::vector<std::size_t>> adj(n);
  for (auto [a, b] : edges) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<bool> seen(n, false);
    std::queue<std::size_t> q;
    q.push(s);
    seen[s] = true;
    std::size_t count = 1;
    while (!q.empty()) {
      auto u = q.front();
      q.pop();
      for (auto v : adj[u]) {
        if (!seen[v]) {
          seen[v] = true;
          ++count;
          q.push(v);
        }
      }
    }
    if (count != n) return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("graph") {

TEST_CASE("two agents") {
  std::vector<Edge> e{{0, 1}};
  std::vector<std::size_t> d{1, 1};
  auto g = PartitionedGraph::build(2, e, d);
  CHECK(g.neighbors(0) == std::vector<AgentId>{1});
  CHECK(g.neighbors(1) == std::vector<AgentId>{0});
  CHECK(g.closed_neighborhood(0) == std::vector<AgentId>{0, 1});
  CHECK(g.total_dim() == 2);
  CHECK(g.num_directed_links() == 2);
}

TEST_CASE("rejects disconnected, self-loops and bad dims") {
  std::vector<Edge> e{{0, 1}};
  std::vector<std::size_t> d3{1, 1, 1};
  CHECK(code_of([&] { PartitionedGraph::build(3, e, d3); }) == ErrorCode::not_connected);

  std::vector<Edge> loop{{0, 1}, {1, 1}};
  std::vector<std::size_t> d2{1, 1};
  CHECK(code_of([&] { PartitionedGraph::build(2, loop, d2); }) == ErrorCode::invalid_argument);

  std::vector<std::size_t> zero{1, 0};
  CHECK(code_of([&] { PartitionedGraph::build(2, e, zero); }) == ErrorCode::invalid_argument);

  std::vector<Edge> out_of_range{{0, 5}};
  CHECK(code_of([&] { PartitionedGraph::build(2, out_of_range, d2); }) == ErrorCode::invalid_argument);
  CHECK(code_of([&] { PartitionedGraph::build(0, {}, {}); }) == ErrorCode::invalid_argument);
}

TEST_CASE("star graph neighbors") {
  std::vector<Edge> e{{0, 1}, {0, 2}, {0, 3}, {0, 4}};
  std::vector<std::size_t> d(5, 2);
  auto g = PartitionedGraph::build(5, e, d);
  CHECK(g.neighbors(0) == std::vector<AgentId>{1, 2, 3, 4});
  CHECK(g.neighbors(2) == std::vector<AgentId>{0});
  CHECK(g.block_offset(3) == 6);
  CHECK_THROWS_AS(g.neighbors(7), Error);
}

TEST_CASE("13-area path with branch matches a brute-force scan of the edge list") {
  std::vector<Edge> e;
  for (std::size_t k = 1; k < 10; ++k) e.emplace_back(k - 1, k);
  e.emplace_back(4, 10);
  e.emplace_back(10, 11);
  e.emplace_back(2, 12);
  std::vector<std::size_t> d(13, 4);
  auto g = PartitionedGraph::build(13, e, d);
  std::size_t max_deg = 0;
  for (AgentId i = 0; i < 13; ++i) {
    std::vector<AgentId> expect;
    for (auto [a, b] : e) {
      if (a == i) expect.push_back(b);
      if (b == i) expect.push_back(a);
    }
    std::sort(expect.begin(), expect.end());
    CHECK(g.neighbors(i) == expect);
    max_deg = std::max(max_deg, expect.size());
  }
  CHECK(max_deg == 3);
}

TEST_CASE("random graphs: incidence-matrix oracle and symmetry") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    // G(8, 12): random edges, rejected until connected.
    std::vector<Edge> e;
    std::uniform_int_distribution<std::size_t> pick(0, 7);
    do {
      e.clear();
      while (e.size() < 12) {
        auto a = pick(rng), b = pick(rng);
        if (a == b) continue;
        Edge ed{std::min(a, b), std::max(a, b)};
        if (std::find(e.begin(), e.end(), ed) == e.end()) e.push_back(ed);
      }
    } while (!bfs_connected(8, e));
    std::vector<std::size_t> d(8, 1);
    auto g = PartitionedGraph::build(8, e, d);

    // Incidence matrix (edges x nodes); off-diagonal nonzeros of its Gram
    // matrix are exactly the adjacencies.
    Matrix inc = Matrix::Zero(static_cast<Eigen::Index>(e.size()), 8);
    for (std::size_t k = 0; k < e.size(); ++k) {
      inc(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(e[k].first)) = 1.0;
      inc(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(e[k].second)) = -1.0;
    }
    const Matrix gram = inc.transpose() * inc;
    for (AgentId i = 0; i < 8; ++i) {
      std::vector<AgentId> expect;
      for (AgentId j = 0; j < 8; ++j) {
        if (j != i && gram(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) != 0.0) {
          expect.push_back(j);
        }
      }
      CHECK(g.neighbors(i) == expect);
      for (AgentId j : g.neighbors(i)) CHECK(g.adjacent(j, i));
    }
  }
}

TEST_CASE("validation agrees with an independent BFS") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> pick(0, 6);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Edge> e;
    const int m = static_cast<int>(pick(rng)) + 2;
    for (int k = 0; k < m; ++k) {
      auto a = pick(rng), b = pick(rng);
      if (a != b) e.emplace_back(a, b);
    }
    std::vector<std::size_t> d(7, 1);
    const bool ok = bfs_connected(7, e);
    CHECK(is_strongly_connected(7, e) == ok);
    if (ok) {
      CHECK_NOTHROW(PartitionedGraph::build(7, e, d));
    } else {
      CHECK_THROWS_AS(PartitionedGraph::build(7, e, d), Error);
    }
  }
}

TEST_CASE("edge-list file round trip and parse errors") {
  std::istringstream in("# feeder areas\nN 4\n0 1\n1 2  # comment\n1 3\ndims 2 1 3 1\n");
  auto g = read_graph(in);
  CHECK(g.num_agents() == 4);
  CHECK(g.neighbors(1) == std::vector<AgentId>{0, 2, 3});
  CHECK(g.block_dims() == std::vector<std::size_t>{2, 1, 3, 1});

  std::ostringstream out;
  write_graph(out, g);
  std::istringstream back(out.str());
  auto g2 = read_graph(back);
  CHECK(g2.edges() == g.edges());
  CHECK(g2.block_dims() == g.block_dims());

  std::istringstream bad("N 3\n0 x\n");
  CHECK(code_of([&] { read_graph(bad); }) == ErrorCode::parse);
  std::istringstream no_dims("N 2\n0 1\n");
  CHECK_THROWS_AS(read_graph(no_dims), Error);
}

}
