#include "rbj/protocol.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

namespace rbj {

const char* to_string(Variant v) {
  switch (v) {
    case Variant::rbj: return "rbj";
    case Variant::rgd: return "rgd";
    case Variant::rwls: return "rwls";
  }
  return "?";
}

Variant variant_from_string(const std::string& s) {
  if (s == "rbj") return Variant::rbj;
  if (s == "rgd") return Variant::rgd;
  if (s == "rwls") return Variant::rwls;
  throw Error(ErrorCode::invalid_argument, "unknown variant '" + s + "'");
}

const Vector* BroadcastMessage::rho_for(AgentId j) const {
  auto it = std::lower_bound(rho.begin(), rho.end(), j,
                             [](const auto& e, AgentId k) { return e.first < k; });
  return it != rho.end() && it->first == j ? &it->second : nullptr;
}

const Matrix* BroadcastMessage::xi_for(AgentId j) const {
  auto it = std::lower_bound(xi.begin(), xi.end(), j,
                             [](const auto& e, AgentId k) { return e.first < k; });
  return it != xi.end() && it->first == j ? &it->second : nullptr;
}

// ---------------------------------------------------------------------------
// Codec

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u64(std::uint64_t v) {
    for (int k = 0; k < 8; ++k) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}
  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(bytes_[pos_ + k]) << (8 * k);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::size_t length() {
    auto n = u64();
    // Every counted element occupies at least 8 bytes.
    if (n > (bytes_.size() - pos_) / 8 + 1) {
      throw Error(ErrorCode::parse, "message length prefix exceeds payload");
    }
    return static_cast<std::size_t>(n);
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw Error(ErrorCode::parse, "truncated message");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_message(const BroadcastMessage& msg) {
  Writer w;
  w.u8(static_cast<std::uint8_t>(msg.kind));
  w.u64(msg.sender);
  w.u64(static_cast<std::uint64_t>(msg.x.size()));
  for (double v : msg.x) w.f64(v);
  w.u64(msg.rho.size());
  for (const auto& [j, r] : msg.rho) {
    w.u64(j);
    w.u64(static_cast<std::uint64_t>(r.size()));
    for (double v : r) w.f64(v);
  }
  w.u64(msg.xi.size());
  for (const auto& [j, m] : msg.xi) {
    w.u64(j);
    w.u64(static_cast<std::uint64_t>(m.rows()));
    w.u64(static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) w.f64(m(r, c));
    }
  }
  return w.take();
}

BroadcastMessage decode_message(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  BroadcastMessage msg;
  const auto kind = r.u8();
  if (kind > 1) throw Error(ErrorCode::parse, "unknown message kind");
  msg.kind = static_cast<BroadcastMessage::Kind>(kind);
  msg.sender = static_cast<AgentId>(r.u64());
  msg.x.resize(static_cast<Eigen::Index>(r.length()));
  for (auto& v : msg.x) v = r.f64();
  const auto n_rho = r.length();
  for (std::size_t k = 0; k < n_rho; ++k) {
    const auto j = static_cast<AgentId>(r.u64());
    Vector v(static_cast<Eigen::Index>(r.length()));
    for (auto& e : v) e = r.f64();
    msg.rho.emplace_back(j, std::move(v));
  }
  const auto n_xi = r.length();
  for (std::size_t k = 0; k < n_xi; ++k) {
    const auto j = static_cast<AgentId>(r.u64());
    const auto rows = static_cast<Eigen::Index>(r.length());
    const auto cols = static_cast<Eigen::Index>(r.length());
    Matrix m(rows, cols);
    for (Eigen::Index a = 0; a < rows; ++a) {
      for (Eigen::Index b = 0; b < cols; ++b) m(a, b) = r.f64();
    }
    msg.xi.emplace_back(j, std::move(m));
  }
  if (!r.done()) throw Error(ErrorCode::parse, "trailing bytes after message");
  return msg;
}

// ---------------------------------------------------------------------------
// Preconditioned solve

namespace {

constexpr Eigen::Index kSparseSolveThreshold = 64;

[[noreturn]] void singular(const std::string& detail) {
  throw Error(ErrorCode::singular,
              "summed xi is numerically singular (" + detail +
                  "); convexity violated or cache corrupted");
}

}  // namespace

Vector solve_preconditioned(const Matrix& d, const Vector& g) {
  if (d.rows() != d.cols() || d.rows() != g.size()) {
    throw Error(ErrorCode::invalid_argument, "preconditioner shape mismatch");
  }
  if (!d.allFinite() || !g.allFinite()) singular("non-finite entries");
  if (d.rows() <= kSparseSolveThreshold) {
    Eigen::LLT<Matrix> llt(d);
    if (llt.info() != Eigen::Success) singular("not positive definite");
    const double rcond = llt.rcond();
    if (!(rcond * kMaxPreconditionerCondition >= 1.0)) {
      singular("condition estimate " + std::to_string(1.0 / rcond));
    }
    return llt.solve(g);
  }
  const Eigen::SparseMatrix<double> sp = d.sparseView();
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(sp);
  if (ldlt.info() != Eigen::Success) singular("factorization failed");
  const Vector pivots = ldlt.vectorD();
  if (!(pivots.array() > 0.0).all()) singular("not positive definite");
  const double ratio = pivots.maxCoeff() / pivots.minCoeff();
  if (!(ratio <= kMaxPreconditionerCondition)) {
    singular("condition estimate " + std::to_string(ratio));
  }
  return ldlt.solve(g);
}

// ---------------------------------------------------------------------------
// Agent

AgentState::AgentState(const PartitionedGraph& graph, AgentId id, Vector x0, double epsilon,
                       Variant variant)
    : id_(id), variant_(variant), epsilon_(epsilon), x_(std::move(x0)) {
  if (!(epsilon_ > 0.0) || !std::isfinite(epsilon_)) {
    throw Error(ErrorCode::invalid_argument, "step size epsilon must be positive");
  }
  const auto ni = static_cast<Eigen::Index>(graph.block_dim(id));
  if (x_.size() != ni) {
    throw Error(ErrorCode::invalid_argument,
                "initial state of agent " + std::to_string(id) + " has dimension " +
                    std::to_string(x_.size()) + ", expected " + std::to_string(ni));
  }
  neighbors_ = graph.neighbors(id);
  if (neighbors_.empty() && graph.num_agents() > 1) {
    throw Error(ErrorCode::not_connected, "agent " + std::to_string(id) + " has no neighbors");
  }
  for (AgentId j : neighbors_) {
    const auto nj = static_cast<Eigen::Index>(graph.block_dim(j));
    cache_x_.push_back(Vector::Zero(nj));
    // Neighbor payloads live in this agent's own block space.
    cache_rho_.push_back(Vector::Zero(ni));
    if (stores_xi()) cache_xi_.push_back(Matrix::Identity(ni, ni));
  }
  own_rho_ = Vector::Zero(ni);
  if (stores_xi()) own_xi_ = Matrix::Identity(ni, ni);
  flags_.transmission = true;
}

std::size_t AgentState::slot(AgentId j) const {
  auto it = std::lower_bound(neighbors_.begin(), neighbors_.end(), j);
  if (it == neighbors_.end() || *it != j) {
    throw Error(ErrorCode::invalid_argument,
                "agent " + std::to_string(j) + " is not a neighbor of " + std::to_string(id_));
  }
  return static_cast<std::size_t>(it - neighbors_.begin());
}

const Vector& AgentState::cached_x(AgentId j) const { return cache_x_[slot(j)]; }
const Vector& AgentState::cached_rho(AgentId j) const { return cache_rho_[slot(j)]; }
const Matrix& AgentState::cached_xi(AgentId j) const {
  if (!stores_xi()) throw Error(ErrorCode::invalid_argument, "RGD agents keep no xi caches");
  return cache_xi_[slot(j)];
}

BlockMap AgentState::local_blocks() const {
  BlockMap blocks;
  blocks.emplace(id_, x_);
  for (std::size_t k = 0; k < neighbors_.size(); ++k) blocks.emplace(neighbors_[k], cache_x_[k]);
  return blocks;
}

BroadcastMessage AgentState::act_transmit(const SeparableCost& c) {
  if (!flags_.transmission) {
    throw Error(ErrorCode::protocol, "transmit without transmission flag on agent " + std::to_string(id_));
  }
  if (variant_ == Variant::rwls && c.family() != CostFamily::quadratic) {
    throw Error(ErrorCode::invalid_argument, "RWLS requires a quadratic cost");
  }
  const bool ship_xi = variant_ == Variant::rbj || (variant_ == Variant::rwls && !handshake_done_);
  auto d = c.local_derivatives(id_, local_blocks(), neighbors_, ship_xi);

  BroadcastMessage msg;
  msg.sender = id_;
  msg.x = x_;
  msg.rho.reserve(neighbors_.size());
  for (std::size_t k = 0; k < neighbors_.size(); ++k) {
    msg.rho.emplace_back(neighbors_[k], std::move(d.rho[k]));
    if (ship_xi) msg.xi.emplace_back(neighbors_[k], std::move(d.xi[k]));
  }
  flags_.transmission = false;
  flags_.reception = true;
  return msg;
}

void AgentState::act_receive(const BroadcastMessage& msg) {
  if (!post_transmit()) {
    throw Error(ErrorCode::protocol, "receive before transmit on agent " + std::to_string(id_));
  }
  if (msg.kind != BroadcastMessage::Kind::state) {
    throw Error(ErrorCode::protocol, "handshake payload passed to act_receive");
  }
  const auto k = slot(msg.sender);
  const Vector* rho = msg.rho_for(id_);
  if (!rho || rho->size() != own_rho_.size() || msg.x.size() != cache_x_[k].size()) {
    throw Error(ErrorCode::invalid_argument,
                "message from " + std::to_string(msg.sender) + " lacks a well-formed payload for " +
                    std::to_string(id_));
  }
  const Matrix* xi = nullptr;
  if (stores_xi()) {
    xi = msg.xi_for(id_);
    if (xi && (xi->rows() != own_rho_.size() || xi->cols() != own_rho_.size())) {
      throw Error(ErrorCode::invalid_argument, "xi payload has the wrong shape");
    }
  }
  cache_x_[k] = msg.x;
  cache_rho_[k] = *rho;
  if (xi) cache_xi_[k] = *xi;
  flags_.update = true;
}

void AgentState::act_update(const SeparableCost& c, StepMode mode) {
  if (!post_transmit()) {
    throw Error(ErrorCode::protocol, "update before transmit on agent " + std::to_string(id_));
  }
  const bool want_xi = stores_xi() && !own_xi_fixed_;
  auto d = c.local_derivatives(id_, local_blocks(), {id_}, want_xi);
  own_rho_ = std::move(d.rho.front());
  if (want_xi) own_xi_ = std::move(d.xi.front());

  Vector grad = own_rho_;
  for (const auto& r : cache_rho_) grad += r;
  Vector step;
  if (variant_ == Variant::rgd) {
    step = grad;
  } else {
    Matrix precond = own_xi_;
    for (const auto& m : cache_xi_) precond += m;
    step = solve_preconditioned(precond, grad);
  }
  if (mode == StepMode::apply) x_ -= epsilon_ * step;
  flags_.reception = false;
  flags_.update = false;
  flags_.transmission = true;
}

BroadcastMessage AgentState::handshake_message(const SeparableCost& c) {
  if (variant_ != Variant::rwls) {
    throw Error(ErrorCode::protocol, "handshake is specific to the RWLS variant");
  }
  if (c.family() != CostFamily::quadratic) {
    throw Error(ErrorCode::invalid_argument, "RWLS requires a quadratic cost");
  }
  auto targets = neighbors_;
  targets.insert(std::lower_bound(targets.begin(), targets.end(), id_), id_);
  auto d = c.local_derivatives(id_, local_blocks(), targets, true);
  BroadcastMessage msg;
  msg.kind = BroadcastMessage::Kind::handshake;
  msg.sender = id_;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    if (targets[k] == id_) {
      own_xi_ = std::move(d.xi[k]);
    } else {
      msg.xi.emplace_back(targets[k], std::move(d.xi[k]));
    }
  }
  own_xi_fixed_ = true;
  handshake_done_ = true;
  return msg;
}

void AgentState::accept_handshake(const BroadcastMessage& msg) {
  if (variant_ != Variant::rwls || msg.kind != BroadcastMessage::Kind::handshake) {
    throw Error(ErrorCode::protocol, "unexpected handshake payload");
  }
  const auto k = slot(msg.sender);
  const Matrix* xi = msg.xi_for(id_);
  if (!xi || xi->rows() != own_rho_.size() || xi->cols() != own_rho_.size()) {
    throw Error(ErrorCode::invalid_argument, "handshake lacks a xi block for this agent");
  }
  cache_xi_[k] = *xi;
}

// ---------------------------------------------------------------------------
// Synchronous baseline

void sync_round(std::vector<Vector>& blocks, const SeparableCost& c, double epsilon) {
  const auto& g = c.graph();
  const auto n = g.num_agents();
  if (blocks.size() != n) throw Error(ErrorCode::invalid_argument, "one block per agent expected");
  for (AgentId i = 0; i < n; ++i) {
    if (blocks[i].size() != static_cast<Eigen::Index>(g.block_dim(i))) {
      throw Error(ErrorCode::invalid_argument, "block dimension mismatch");
    }
  }
  // Round 1: every agent learns its neighbors' fresh states and evaluates its
  // local partial derivatives for all of N_i^+.
  std::vector<LocalDerivatives> local(n);
  for (AgentId i = 0; i < n; ++i) {
    BlockMap view;
    for (AgentId j : g.closed_neighborhood(i)) view.emplace(j, blocks[j]);
    local[i] = c.local_derivatives(i, view, g.closed_neighborhood(i), true);
  }
  // Round 2: rho_j^(i), xi_j^(i) delivered to i; block update.
  std::vector<Vector> next(n);
  for (AgentId i = 0; i < n; ++i) {
    const auto ni = static_cast<Eigen::Index>(g.block_dim(i));
    Vector grad = Vector::Zero(ni);
    Matrix precond = Matrix::Zero(ni, ni);
    for (AgentId j : g.closed_neighborhood(i)) {
      const auto& lj = local[j];
      auto pos = std::lower_bound(lj.ids.begin(), lj.ids.end(), i) - lj.ids.begin();
      grad += lj.rho[pos];
      precond += lj.xi[pos];
    }
    next[i] = blocks[i] - epsilon * solve_preconditioned(precond, grad);
  }
  blocks = std::move(next);
}

}  // namespace rbj
