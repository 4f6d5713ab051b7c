#include "rbj/graph.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <queue>
#include <sstream>

namespace rbj {

bool is_strongly_connected(std::size_t num_agents, std::span<const Edge> edges) {
  if (num_agents == 0) return false;
  std::vector<std::vector<AgentId>> adj(num_agents);
  for (const auto& [a, b] : edges) {
    if (a >= num_agents || b >= num_agents) return false;
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  std::vector<bool> seen(num_agents, false);
  std::queue<AgentId> frontier;
  frontier.push(0);
  seen[0] = true;
  std::size_t reached = 1;
  while (!frontier.empty()) {
    AgentId u = frontier.front();
    frontier.pop();
    for (AgentId v : adj[u]) {
      if (!seen[v]) {
        seen[v] = true;
        ++reached;
        frontier.push(v);
      }
    }
  }
  // Bidirected: reachability from one node implies every ordered pair.
  return reached == num_agents;
}

PartitionedGraph PartitionedGraph::build(std::size_t num_agents,
                                         std::span<const Edge> edges,
                                         std::span<const std::size_t> block_dims) {
  if (num_agents == 0) {
    throw Error(ErrorCode::invalid_argument, "graph needs at least one agent");
  }
  if (block_dims.size() != num_agents) {
    throw Error(ErrorCode::invalid_argument,
                "expected " + std::to_string(num_agents) + " block dimensions, got " +
                    std::to_string(block_dims.size()));
  }
  for (std::size_t i = 0; i < num_agents; ++i) {
    if (block_dims[i] == 0) {
      throw Error(ErrorCode::invalid_argument,
                  "block dimension of agent " + std::to_string(i) + " must be positive");
    }
  }
  for (const auto& [a, b] : edges) {
    if (a >= num_agents || b >= num_agents) {
      throw Error(ErrorCode::invalid_argument,
                  "edge (" + std::to_string(a) + "," + std::to_string(b) +
                      ") references an agent outside [0, N)");
    }
    if (a == b) {
      throw Error(ErrorCode::invalid_argument, "self-loop on agent " + std::to_string(a));
    }
  }
  if (!is_strongly_connected(num_agents, edges)) {
    throw Error(ErrorCode::not_connected, "communication graph is not strongly connected");
  }

  PartitionedGraph g;
  g.neighbors_.assign(num_agents, {});
  for (const auto& [a, b] : edges) {
    g.neighbors_[a].push_back(b);
    g.neighbors_[b].push_back(a);
  }
  for (auto& n : g.neighbors_) {
    std::sort(n.begin(), n.end());
    n.erase(std::unique(n.begin(), n.end()), n.end());
    g.num_links_ += n.size();
  }
  g.dims_.assign(block_dims.begin(), block_dims.end());
  g.offsets_.resize(num_agents);
  for (std::size_t i = 0; i < num_agents; ++i) {
    g.offsets_[i] = g.total_dim_;
    g.total_dim_ += g.dims_[i];
  }
  return g;
}

void PartitionedGraph::check_id(AgentId i) const {
  if (i >= neighbors_.size()) {
    throw Error(ErrorCode::invalid_argument, "invalid agent id " + std::to_string(i));
  }
}

const std::vector<AgentId>& PartitionedGraph::neighbors(AgentId i) const {
  check_id(i);
  return neighbors_[i];
}

std::vector<AgentId> PartitionedGraph::closed_neighborhood(AgentId i) const {
  check_id(i);
  std::vector<AgentId> out = neighbors_[i];
  out.insert(std::lower_bound(out.begin(), out.end(), i), i);
  return out;
}

bool PartitionedGraph::adjacent(AgentId i, AgentId j) const {
  check_id(i);
  check_id(j);
  return std::binary_search(neighbors_[i].begin(), neighbors_[i].end(), j);
}

std::size_t PartitionedGraph::block_dim(AgentId i) const {
  check_id(i);
  return dims_[i];
}

std::size_t PartitionedGraph::block_offset(AgentId i) const {
  check_id(i);
  return offsets_[i];
}

std::vector<Edge> PartitionedGraph::edges() const {
  std::vector<Edge> out;
  for (AgentId i = 0; i < neighbors_.size(); ++i) {
    for (AgentId j : neighbors_[i]) {
      if (i < j) out.emplace_back(i, j);
    }
  }
  return out;
}

namespace {

std::string strip_comment(const std::string& line) {
  auto pos = line.find('#');
  return pos == std::string::npos ? line : line.substr(0, pos);
}

[[noreturn]] void parse_error(std::size_t line_no, const std::string& msg) {
  throw Error(ErrorCode::parse, "line " + std::to_string(line_no) + ": " + msg);
}

}  // namespace

PartitionedGraph read_graph(std::istream& in) {
  std::size_t num_agents = 0;
  bool have_header = false;
  std::vector<Edge> edges;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(strip_comment(line));
    std::string head;
    if (!(ss >> head)) continue;
    if (head == "N") {
      if (have_header) parse_error(line_no, "duplicate N header");
      long long n = -1;
      if (!(ss >> n) || n <= 0) parse_error(line_no, "expected positive agent count after N");
      num_agents = static_cast<std::size_t>(n);
      have_header = true;
    } else if (head == "dims") {
      if (!have_header) parse_error(line_no, "dims before N header");
      std::vector<std::size_t> dims;
      long long d;
      while (ss >> d) {
        if (d <= 0) parse_error(line_no, "block dimensions must be positive");
        dims.push_back(static_cast<std::size_t>(d));
      }
      if (!ss.eof()) parse_error(line_no, "malformed dims entry");
      return PartitionedGraph::build(num_agents, edges, dims);
    } else {
      if (!have_header) parse_error(line_no, "edge before N header");
      long long a = -1, b = -1;
      std::istringstream es(head);
      if (!(es >> a) || !(ss >> b) || a < 0 || b < 0) {
        parse_error(line_no, "expected edge 'i j'");
      }
      std::string extra;
      if (ss >> extra) parse_error(line_no, "trailing tokens after edge");
      edges.emplace_back(static_cast<AgentId>(a), static_cast<AgentId>(b));
    }
  }
  throw Error(ErrorCode::parse, "graph file ended before the dims line");
}

PartitionedGraph load_graph(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open graph file " + path);
  return read_graph(in);
}

void write_graph(std::ostream& out, const PartitionedGraph& g) {
  out << "N " << g.num_agents() << '\n';
  for (const auto& [a, b] : g.edges()) out << a << ' ' << b << '\n';
  out << "dims";
  for (auto d : g.block_dims()) out << ' ' << d;
  out << '\n';
}

}  // namespace rbj
