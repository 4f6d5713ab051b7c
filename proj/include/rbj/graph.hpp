#pragma once

#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "rbj/types.hpp"

namespace rbj {

using Edge = std::pair<AgentId, AgentId>;

/// Bidirected, strongly connected communication topology over N agents, each
/// owning a state block of dimension n_i. Immutable after construction.
class PartitionedGraph {
 public:
  /// Expands every unordered pair to both directions. Duplicate pairs are
  /// merged. Throws on self-loops, out-of-range ids, non-positive block
  /// dimensions and graphs that are not strongly connected.
  static PartitionedGraph build(std::size_t num_agents,
                                std::span<const Edge> edges,
                                std::span<const std::size_t> block_dims);

  std::size_t num_agents() const noexcept { return neighbors_.size(); }

  /// N_i in ascending id order.
  const std::vector<AgentId>& neighbors(AgentId i) const;

  /// N_i^+ = N_i with i inserted, ascending.
  std::vector<AgentId> closed_neighborhood(AgentId i) const;

  bool adjacent(AgentId i, AgentId j) const;

  std::size_t block_dim(AgentId i) const;
  /// Offset of block i inside the stacked global state.
  std::size_t block_offset(AgentId i) const;
  std::size_t total_dim() const noexcept { return total_dim_; }
  const std::vector<std::size_t>& block_dims() const noexcept { return dims_; }

  /// Unordered edges (i < j), lexicographic.
  std::vector<Edge> edges() const;
  std::size_t num_directed_links() const noexcept { return num_links_; }

 private:
  PartitionedGraph() = default;
  void check_id(AgentId i) const;

  std::vector<std::vector<AgentId>> neighbors_;
  std::vector<std::size_t> dims_;
  std::vector<std::size_t> offsets_;
  std::size_t total_dim_ = 0;
  std::size_t num_links_ = 0;
};

/// Breadth-first reachability from every node over the undirected pair list.
bool is_strongly_connected(std::size_t num_agents, std::span<const Edge> edges);

/// Plain-text edge list: "N <n>", then "i j" lines, then "dims d_0 ... d_{N-1}".
/// '#' starts a comment.
PartitionedGraph read_graph(std::istream& in);
PartitionedGraph load_graph(const std::string& path);
void write_graph(std::ostream& out, const PartitionedGraph& g);

}  // namespace rbj
