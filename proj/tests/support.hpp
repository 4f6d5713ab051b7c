#pragma once

#include <memory>
#include <random>
#include <vector>

#include "rbj/cost.hpp"
#include "rbj/graph.hpp"

namespace rbj::test {

// Random spanning tree plus extra edges.
inline PartitionedGraph random_graph(std::size_t n, std::size_t extra, std::size_t max_dim,
                                     std::mt19937_64& rng) {
  std::vector<Edge> edges;
  for (std::size_t k = 1; k < n; ++k) {
    edges.emplace_back(std::uniform_int_distribution<std::size_t>(0, k - 1)(rng), k);
  }
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  for (std::size_t e = 0; e < extra && n > 1; ++e) {
    auto a = pick(rng), b = pick(rng);
    if (a != b) edges.emplace_back(a, b);
  }
  std::vector<std::size_t> dims(n);
  for (auto& d : dims) d = std::uniform_int_distribution<std::size_t>(1, max_dim)(rng);
  return PartitionedGraph::build(n, edges, dims);
}

inline Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = g(rng);
  return m;
}

inline Vector random_vector(Eigen::Index n, std::mt19937_64& rng, double scale = 1.0) {
  return scale * random_matrix(n, 1, rng);
}

// Each agent owns n_i + 1 rows; its own block carries an identity part so
// the stacked matrix always has full column rank.
inline std::vector<LocalMeasurements> random_locals(const PartitionedGraph& g, std::mt19937_64& rng,
                                                    double coupling = 0.5) {
  std::vector<LocalMeasurements> out(g.num_agents());
  for (AgentId i = 0; i < g.num_agents(); ++i) {
    const auto ni = static_cast<Eigen::Index>(g.block_dim(i));
    const Eigen::Index m = ni + 1;
    out[i].y = random_vector(m, rng);
    for (AgentId j : g.closed_neighborhood(i)) {
      const auto nj = static_cast<Eigen::Index>(g.block_dim(j));
      Matrix a = coupling * random_matrix(m, nj, rng);
      if (j == i) a.topRows(ni) += 2.0 * Matrix::Identity(ni, ni);
      out[i].blocks.emplace(j, a.sparseView());
    }
  }
  return out;
}

inline std::vector<Vector> random_weights(const std::vector<LocalMeasurements>& locals,
                                          std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.5, 2.0);
  std::vector<Vector> w;
  for (const auto& l : locals) {
    Vector v(l.y.size());
    for (Eigen::Index k = 0; k < v.size(); ++k) v[k] = u(rng);
    w.push_back(v);
  }
  return w;
}

inline std::shared_ptr<QuadraticCost> random_quadratic(std::size_t n, std::uint64_t seed,
                                                       std::size_t max_dim = 3,
                                                       double coupling = 0.5) {
  std::mt19937_64 rng(seed);
  auto g = random_graph(n, n / 2, max_dim, rng);
  auto locals = random_locals(g, rng, coupling);
  auto w = random_weights(locals, rng);
  return std::make_shared<QuadraticCost>(g, std::move(locals), std::move(w));
}

inline std::shared_ptr<RobustCost> random_robust(std::size_t n, std::uint64_t seed, double nu,
                                                 std::size_t max_dim = 3, double coupling = 0.5) {
  std::mt19937_64 rng(seed);
  auto g = random_graph(n, n / 2, max_dim, rng);
  auto locals = random_locals(g, rng, coupling);
  return std::make_shared<RobustCost>(g, std::move(locals), nu);
}

inline PartitionedGraph line_graph(std::size_t n, std::size_t dim = 1) {
  std::vector<Edge> edges;
  for (std::size_t k = 1; k < n; ++k) edges.emplace_back(k - 1, k);
  return PartitionedGraph::build(n, edges, std::vector<std::size_t>(n, dim));
}

inline BlockMap random_blocks(const SeparableCost& c, AgentId i, std::mt19937_64& rng) {
  BlockMap x;
  for (AgentId j : c.graph().closed_neighborhood(i)) {
    x.emplace(j, random_vector(static_cast<Eigen::Index>(c.graph().block_dim(j)), rng));
  }
  return x;
}

inline double rel_err(const Matrix& a, const Matrix& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff());
}

}  // namespace rbj::test
