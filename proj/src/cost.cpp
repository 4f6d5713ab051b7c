#include "rbj/cost.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace rbj {

const char* to_string(CostFamily f) {
  return f == CostFamily::quadratic ? "quadratic" : "robust";
}

CostFamily cost_family_from_string(const std::string& s) {
  if (s == "quadratic") return CostFamily::quadratic;
  if (s == "robust") return CostFamily::robust;
  throw Error(ErrorCode::invalid_argument, "unknown cost family '" + s + "'");
}

SeparableCost::SeparableCost(PartitionedGraph graph, std::vector<LocalMeasurements> locals)
    : graph_(std::move(graph)), locals_(std::move(locals)) {
  const auto n = graph_.num_agents();
  if (locals_.size() != n) {
    throw Error(ErrorCode::invalid_argument,
                "expected " + std::to_string(n) + " local measurement sets, got " +
                    std::to_string(locals_.size()));
  }
  closed_.resize(n);
  for (AgentId i = 0; i < n; ++i) {
    closed_[i] = graph_.closed_neighborhood(i);
    const auto& loc = locals_[i];
    const auto m = static_cast<Eigen::Index>(loc.y.size());
    for (const auto& [j, a] : loc.blocks) {
      if (!std::binary_search(closed_[i].begin(), closed_[i].end(), j)) {
        throw Error(ErrorCode::invalid_argument,
                    "J_" + std::to_string(i) + " depends on non-neighbor " + std::to_string(j));
      }
      if (a.rows() != m || a.cols() != static_cast<Eigen::Index>(graph_.block_dim(j))) {
        throw Error(ErrorCode::invalid_argument,
                    "block A_" + std::to_string(i) + "," + std::to_string(j) +
                        " has the wrong shape");
      }
    }
    total_rows_ += loc.y.size();
  }
}

const LocalMeasurements& SeparableCost::local(AgentId i) const {
  if (i >= locals_.size()) {
    throw Error(ErrorCode::invalid_argument, "invalid agent id " + std::to_string(i));
  }
  return locals_[i];
}

void SeparableCost::check_blocks(AgentId i, const BlockMap& x) const {
  for (AgentId j : closed(i)) {
    auto it = x.find(j);
    if (it == x.end()) {
      throw Error(ErrorCode::invalid_argument,
                  "missing block x_" + std::to_string(j) + " for J_" + std::to_string(i));
    }
    if (it->second.size() != static_cast<Eigen::Index>(graph_.block_dim(j))) {
      throw Error(ErrorCode::invalid_argument,
                  "block x_" + std::to_string(j) + " has dimension " +
                      std::to_string(it->second.size()) + ", expected " +
                      std::to_string(graph_.block_dim(j)));
    }
  }
}

Vector SeparableCost::residual(AgentId i, const BlockMap& x) const {
  const auto& loc = local(i);
  check_blocks(i, x);
  Vector r = loc.y;
  for (const auto& [j, a] : loc.blocks) r.noalias() -= a * x.at(j);
  return r;
}

double SeparableCost::local_value(AgentId i, const BlockMap& x) const {
  return penalty_value(i, residual(i, x));
}

namespace {

// A^T diag(w) A for a row-major sparse A, accumulated row by row.
Matrix weighted_gram(const SparseRowMatrix& a, const Vector& w) {
  Matrix out = Matrix::Zero(a.cols(), a.cols());
  for (Eigen::Index k = 0; k < a.outerSize(); ++k) {
    const double wk = w[k];
    for (SparseRowMatrix::InnerIterator p(a, k); p; ++p) {
      const double s = wk * p.value();
      for (SparseRowMatrix::InnerIterator q(a, k); q; ++q) {
        out(p.col(), q.col()) += s * q.value();
      }
    }
  }
  return out;
}

}  // namespace

LocalDerivatives SeparableCost::local_derivatives(AgentId i, const BlockMap& x,
                                                  const std::vector<AgentId>& targets,
                                                  bool with_xi) const {
  const Vector r = residual(i, x);
  Vector d1;
  Vector d2;
  penalty_derivatives(i, r, d1, with_xi ? &d2 : nullptr);

  const auto& loc = locals_[i];
  LocalDerivatives out;
  out.ids = targets;
  out.rho.reserve(targets.size());
  if (with_xi) out.xi.reserve(targets.size());
  for (AgentId j : targets) {
    if (!std::binary_search(closed(i).begin(), closed(i).end(), j)) {
      throw Error(ErrorCode::invalid_argument,
                  "agent " + std::to_string(j) + " is not in N_" + std::to_string(i) + "^+");
    }
    const auto nj = static_cast<Eigen::Index>(graph_.block_dim(j));
    auto it = loc.blocks.find(j);
    if (it == loc.blocks.end()) {
      out.rho.push_back(Vector::Zero(nj));
      if (with_xi) out.xi.push_back(Matrix::Zero(nj, nj));
      continue;
    }
    // r = y - A x, so grad_j = -A_ij^T phi'(r).
    out.rho.push_back(-(it->second.transpose() * d1));
    if (with_xi) out.xi.push_back(weighted_gram(it->second, d2));
  }
  return out;
}

Vector SeparableCost::rho_block(AgentId i, AgentId j, const BlockMap& x) const {
  return std::move(local_derivatives(i, x, {j}, false).rho.front());
}

Matrix SeparableCost::xi_block(AgentId i, AgentId j, const BlockMap& x) const {
  return std::move(local_derivatives(i, x, {j}, true).xi.front());
}

BlockMap SeparableCost::gather(AgentId i, const Vector& x) const {
  if (x.size() != static_cast<Eigen::Index>(graph_.total_dim())) {
    throw Error(ErrorCode::invalid_argument, "global state has the wrong dimension");
  }
  BlockMap out;
  for (AgentId j : graph_.closed_neighborhood(i)) out.emplace(j, block(j, x));
  return out;
}

Vector SeparableCost::block(AgentId i, const Vector& x) const {
  return x.segment(static_cast<Eigen::Index>(graph_.block_offset(i)),
                   static_cast<Eigen::Index>(graph_.block_dim(i)));
}

double SeparableCost::global_value(const Vector& x) const {
  double total = 0.0;
  for (AgentId i = 0; i < graph_.num_agents(); ++i) total += local_value(i, gather(i, x));
  return total;
}

SparseRowMatrix SeparableCost::stacked_matrix() const {
  std::vector<Eigen::Triplet<double>> trips;
  Eigen::Index row0 = 0;
  for (AgentId i = 0; i < locals_.size(); ++i) {
    for (const auto& [j, a] : locals_[i].blocks) {
      const auto col0 = static_cast<Eigen::Index>(graph_.block_offset(j));
      for (Eigen::Index k = 0; k < a.outerSize(); ++k) {
        for (SparseRowMatrix::InnerIterator it(a, k); it; ++it) {
          trips.emplace_back(row0 + k, col0 + it.col(), it.value());
        }
      }
    }
    row0 += locals_[i].y.size();
  }
  SparseRowMatrix out(static_cast<Eigen::Index>(total_rows_),
                      static_cast<Eigen::Index>(graph_.total_dim()));
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

Vector SeparableCost::stacked_measurements() const {
  Vector y(static_cast<Eigen::Index>(total_rows_));
  Eigen::Index row0 = 0;
  for (const auto& loc : locals_) {
    y.segment(row0, loc.y.size()) = loc.y;
    row0 += loc.y.size();
  }
  return y;
}

Vector SeparableCost::global_gradient(const Vector& x) const {
  const auto a = stacked_matrix();
  const Vector r = stacked_measurements() - a * x;
  Vector d1(r.size());
  Eigen::Index row0 = 0;
  for (AgentId i = 0; i < locals_.size(); ++i) {
    const auto m = locals_[i].y.size();
    Vector di;
    penalty_derivatives(i, r.segment(row0, m), di, nullptr);
    d1.segment(row0, m) = di;
    row0 += m;
  }
  return -(a.transpose() * d1);
}

Matrix SeparableCost::global_hessian(const Vector& x) const {
  const auto a = stacked_matrix();
  const Vector r = stacked_measurements() - a * x;
  Vector d2(r.size());
  Eigen::Index row0 = 0;
  for (AgentId i = 0; i < locals_.size(); ++i) {
    const auto m = locals_[i].y.size();
    Vector di, hi;
    penalty_derivatives(i, r.segment(row0, m), di, &hi);
    d2.segment(row0, m) = hi;
    row0 += m;
  }
  return weighted_gram(a, d2);
}

void SeparableCost::require_full_column_rank() const {
  const Matrix a = Matrix(stacked_matrix());
  if (a.rows() < a.cols()) {
    throw Error(ErrorCode::invalid_argument,
                "stacked measurement matrix has fewer rows than unknowns");
  }
  Eigen::ColPivHouseholderQR<Matrix> qr(a);
  if (qr.rank() < a.cols()) {
    throw Error(ErrorCode::invalid_argument,
                "stacked measurement matrix is rank deficient (rank " +
                    std::to_string(qr.rank()) + " < " + std::to_string(a.cols()) +
                    "); cost is not strictly convex");
  }
}

QuadraticCost::QuadraticCost(PartitionedGraph graph, std::vector<LocalMeasurements> locals,
                             std::vector<Vector> weights)
    : SeparableCost(std::move(graph), std::move(locals)), weights_(std::move(weights)) {
  if (weights_.size() != this->graph().num_agents()) {
    throw Error(ErrorCode::invalid_argument, "one weight vector per agent expected");
  }
  for (AgentId i = 0; i < weights_.size(); ++i) {
    if (weights_[i].size() != local(i).y.size()) {
      throw Error(ErrorCode::invalid_argument,
                  "weight vector of agent " + std::to_string(i) + " has the wrong length");
    }
    if (weights_[i].size() > 0 && !(weights_[i].array() > 0.0).all()) {
      throw Error(ErrorCode::invalid_argument, "weights must be strictly positive");
    }
  }
  require_full_column_rank();
}

const Vector& QuadraticCost::weights(AgentId i) const {
  local(i);
  return weights_[i];
}

Vector QuadraticCost::stacked_weights() const {
  Vector w(static_cast<Eigen::Index>(num_rows()));
  Eigen::Index row0 = 0;
  for (const auto& wi : weights_) {
    w.segment(row0, wi.size()) = wi;
    row0 += wi.size();
  }
  return w;
}

double QuadraticCost::penalty_value(AgentId i, const Vector& r) const {
  return 0.5 * r.dot(weights_[i].cwiseProduct(r));
}

void QuadraticCost::penalty_derivatives(AgentId i, const Vector& r, Vector& d1,
                                        Vector* d2) const {
  d1 = weights_[i].cwiseProduct(r);
  if (d2) *d2 = weights_[i];
}

RobustCost::RobustCost(PartitionedGraph graph, std::vector<LocalMeasurements> locals,
                       double nu)
    : SeparableCost(std::move(graph), std::move(locals)), nu_(nu) {
  if (!(nu_ > 0.0) || !std::isfinite(nu_)) {
    throw Error(ErrorCode::invalid_argument, "smoothing parameter nu must be positive");
  }
  require_full_column_rank();
}

double RobustCost::penalty_value(AgentId, const Vector& r) const {
  return (r.array().square() + nu_).sqrt().sum();
}

void RobustCost::penalty_derivatives(AgentId, const Vector& r, Vector& d1,
                                     Vector* d2) const {
  const Eigen::ArrayXd s = r.array().square() + nu_;
  const Eigen::ArrayXd root = s.sqrt();
  d1 = (r.array() / root).matrix();
  if (d2) *d2 = (nu_ / (s * root)).matrix();
}

double default_fd_step(const BlockMap& x, int order) {
  double scale = 0.0;
  for (const auto& [j, v] : x) {
    if (v.size() > 0) scale = std::max(scale, v.cwiseAbs().maxCoeff());
  }
  return (order == 1 ? 1e-6 : 1e-4) * (1.0 + scale);
}

Matrix finite_diff_oracle(const SeparableCost& c, AgentId i, AgentId j, const BlockMap& x,
                          int order, double step) {
  if (!(step > 0.0)) throw Error(ErrorCode::invalid_argument, "step must be positive");
  if (order != 1 && order != 2) throw Error(ErrorCode::invalid_argument, "order must be 1 or 2");
  auto it = x.find(j);
  if (it == x.end()) throw Error(ErrorCode::invalid_argument, "missing block for target agent");
  const auto nj = it->second.size();
  BlockMap probe = x;
  Vector& xj = probe.at(j);

  if (order == 1) {
    Matrix g(nj, 1);
    for (Eigen::Index k = 0; k < nj; ++k) {
      const double orig = xj[k];
      xj[k] = orig + step;
      const double fp = c.local_value(i, probe);
      xj[k] = orig - step;
      const double fm = c.local_value(i, probe);
      xj[k] = orig;
      g(k, 0) = (fp - fm) / (2.0 * step);
    }
    return g;
  }
  Matrix h(nj, nj);
  for (Eigen::Index k = 0; k < nj; ++k) {
    const double orig = xj[k];
    xj[k] = orig + step;
    const Vector gp = c.rho_block(i, j, probe);
    xj[k] = orig - step;
    const Vector gm = c.rho_block(i, j, probe);
    xj[k] = orig;
    h.col(k) = (gp - gm) / (2.0 * step);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Problem file

namespace {

std::vector<std::string> tokenize_rest(std::istream& in) {
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    auto pos = line.find('#');
    if (pos != std::string::npos) line.resize(pos);
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) tokens.push_back(tok);
  }
  return tokens;
}

class TokenCursor {
 public:
  explicit TokenCursor(std::vector<std::string> t) : tokens_(std::move(t)) {}
  bool done() const { return pos_ >= tokens_.size(); }
  const std::string& peek() const { return tokens_.at(pos_); }
  std::string next(const char* what) {
    if (done()) throw Error(ErrorCode::parse, std::string("unexpected end of file, expected ") + what);
    return tokens_[pos_++];
  }
  double number(const char* what) {
    auto tok = next(what);
    try {
      std::size_t used = 0;
      double v = std::stod(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
      return v;
    } catch (const std::exception&) {
      throw Error(ErrorCode::parse, std::string("expected ") + what + ", got '" + tok + "'");
    }
  }
  std::size_t count(const char* what) {
    double v = number(what);
    if (v < 0 || v != std::floor(v)) {
      throw Error(ErrorCode::parse, std::string("expected non-negative integer ") + what);
    }
    return static_cast<std::size_t>(v);
  }

 private:
  std::vector<std::string> tokens_;
  std::size_t pos_ = 0;
};

}  // namespace

std::unique_ptr<SeparableCost> read_problem(std::istream& in) {
  std::string line;
  std::string family_name;
  double nu = 0.0;
  // Header lines up to the graph.
  std::streampos graph_start = in.tellg();
  while (std::getline(in, line)) {
    auto pos = line.find('#');
    std::istringstream ss(pos == std::string::npos ? line : line.substr(0, pos));
    std::string head;
    if (!(ss >> head)) {
      graph_start = in.tellg();
      continue;
    }
    if (head == "family") {
      if (!(ss >> family_name)) throw Error(ErrorCode::parse, "family line needs a value");
    } else if (head == "nu") {
      if (!(ss >> nu)) throw Error(ErrorCode::parse, "nu line needs a value");
    } else {
      in.seekg(graph_start);
      break;
    }
    graph_start = in.tellg();
  }
  if (family_name.empty()) throw Error(ErrorCode::parse, "problem file lacks a family line");
  const CostFamily family = cost_family_from_string(family_name);
  PartitionedGraph graph = read_graph(in);

  const auto n = graph.num_agents();
  std::vector<LocalMeasurements> locals(n);
  std::vector<Vector> weights(n);
  std::vector<bool> seen(n, false);
  TokenCursor cur(tokenize_rest(in));
  while (!cur.done()) {
    auto tok = cur.next("section keyword");
    if (tok != "agent") throw Error(ErrorCode::parse, "expected 'agent', got '" + tok + "'");
    const auto i = cur.count("agent id");
    if (i >= n) throw Error(ErrorCode::parse, "agent id out of range");
    if (seen[i]) throw Error(ErrorCode::parse, "duplicate section for agent " + std::to_string(i));
    seen[i] = true;
    const auto m = static_cast<Eigen::Index>(cur.count("row count"));
    auto& loc = locals[i];
    loc.y.resize(m);
    weights[i] = Vector::Ones(m);
    while (!cur.done() && cur.peek() != "agent") {
      auto key = cur.next("y, w or A");
      if (key == "y") {
        for (Eigen::Index k = 0; k < m; ++k) loc.y[k] = cur.number("measurement");
      } else if (key == "w") {
        for (Eigen::Index k = 0; k < m; ++k) weights[i][k] = cur.number("weight");
      } else if (key == "A") {
        const auto ai = cur.count("block row owner");
        const auto aj = cur.count("block column owner");
        const auto rows = static_cast<Eigen::Index>(cur.count("rows"));
        const auto cols = static_cast<Eigen::Index>(cur.count("cols"));
        if (ai != i || rows != m) {
          throw Error(ErrorCode::parse, "block header does not match agent section");
        }
        if (aj >= n || cols != static_cast<Eigen::Index>(graph.block_dim(aj))) {
          throw Error(ErrorCode::parse, "block column owner or width invalid");
        }
        std::vector<Eigen::Triplet<double>> trips;
        for (Eigen::Index r = 0; r < rows; ++r) {
          for (Eigen::Index col = 0; col < cols; ++col) {
            const double v = cur.number("matrix entry");
            if (v != 0.0) trips.emplace_back(r, col, v);
          }
        }
        SparseRowMatrix a(rows, cols);
        a.setFromTriplets(trips.begin(), trips.end());
        loc.blocks[aj] = std::move(a);
      } else {
        throw Error(ErrorCode::parse, "unknown key '" + key + "' in agent section");
      }
    }
  }
  for (AgentId i = 0; i < n; ++i) {
    if (!seen[i]) throw Error(ErrorCode::parse, "missing section for agent " + std::to_string(i));
  }
  if (family == CostFamily::quadratic) {
    return std::make_unique<QuadraticCost>(std::move(graph), std::move(locals), std::move(weights));
  }
  return std::make_unique<RobustCost>(std::move(graph), std::move(locals), nu);
}

std::unique_ptr<SeparableCost> load_problem(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open problem file " + path);
  return read_problem(in);
}

void write_problem(std::ostream& out, const SeparableCost& c) {
  const auto old_precision = out.precision(17);
  out << "family " << to_string(c.family()) << '\n';
  if (auto* r = dynamic_cast<const RobustCost*>(&c)) out << "nu " << r->nu() << '\n';
  write_graph(out, c.graph());
  const auto* quad = dynamic_cast<const QuadraticCost*>(&c);
  for (AgentId i = 0; i < c.graph().num_agents(); ++i) {
    const auto& loc = c.local(i);
    out << "agent " << i << ' ' << loc.y.size() << "\ny";
    for (Eigen::Index k = 0; k < loc.y.size(); ++k) out << ' ' << loc.y[k];
    out << '\n';
    if (quad) {
      out << 'w';
      const auto& w = quad->weights(i);
      for (Eigen::Index k = 0; k < w.size(); ++k) out << ' ' << w[k];
      out << '\n';
    }
    for (const auto& [j, a] : loc.blocks) {
      out << "A " << i << ' ' << j << ' ' << a.rows() << ' ' << a.cols() << '\n';
      const Matrix dense(a);
      for (Eigen::Index r = 0; r < dense.rows(); ++r) {
        for (Eigen::Index col = 0; col < dense.cols(); ++col) {
          out << (col ? " " : "") << dense(r, col);
        }
        out << '\n';
      }
    }
  }
  out.precision(old_precision);
}

void save_problem(const std::string& path, const SeparableCost& c) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io, "cannot write problem file " + path);
  write_problem(out, c);
}

}  // namespace rbj
