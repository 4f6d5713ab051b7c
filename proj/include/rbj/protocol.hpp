#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rbj/cost.hpp"
#include "rbj/graph.hpp"
#include "rbj/types.hpp"

namespace rbj {

/// RBJ: block Jacobi with cached neighbor payloads.
/// RGD: same caching, preconditioner fixed to identity (no xi at all).
/// RWLS: quadratic costs only; xi exchanged once in a lossless handshake.
enum class Variant { rbj, rgd, rwls };

const char* to_string(Variant v);
Variant variant_from_string(const std::string& s);

/// One broadcast. `rho[k]` holds grad_j J_sender for j = rho[k].first; `xi`
/// is the matching hess_jj J_sender list and is empty whenever the variant
/// does not ship second-order data.
struct BroadcastMessage {
  enum class Kind : std::uint8_t { state = 0, handshake = 1 };

  Kind kind = Kind::state;
  AgentId sender = 0;
  Vector x;
  std::vector<std::pair<AgentId, Vector>> rho;
  std::vector<std::pair<AgentId, Matrix>> xi;

  const Vector* rho_for(AgentId j) const;
  const Matrix* xi_for(AgentId j) const;
};

/// Canonical layout, all integers u64 and all reals IEEE-754 binary64, both
/// little-endian:
///   u8 kind | sender | len(x) x... | n_rho { target len values... }
///   | n_xi { target rows cols values(row-major)... }
std::vector<std::uint8_t> encode_message(const BroadcastMessage& msg);
BroadcastMessage decode_message(std::span<const std::uint8_t> bytes);

/// Singular-guard threshold on the condition number of the summed xi.
inline constexpr double kMaxPreconditionerCondition = 1e12;

/// Solves D d = g for symmetric positive definite D. Dense blocks use an LLT
/// with a 1-norm condition estimate; large blocks go through a sparse LDLT
/// whose pivot ratio serves as the (lower-bound) estimate. Throws
/// ErrorCode::singular when D is not positive definite or the estimate
/// exceeds kMaxPreconditionerCondition.
Vector solve_preconditioned(const Matrix& d, const Vector& g);

enum class StepMode { apply, freeze };

struct ActionFlags {
  bool transmission = false;
  bool reception = false;
  bool update = false;

  bool operator==(const ActionFlags&) const = default;
};

/// Local memory of one agent running the resilient protocol. Legal action
/// sequences are (transmit, receive*, update)*; anything else throws
/// ErrorCode::protocol and leaves the state untouched.
class AgentState {
 public:
  AgentState(const PartitionedGraph& graph, AgentId id, Vector x0, double epsilon,
             Variant variant);

  /// Computes rho_i^(j) (and xi_i^(j) where the variant ships them) at x_i and
  /// the cached neighbor states.
  BroadcastMessage act_transmit(const SeparableCost& c);

  /// Overwrites the caches indexed by msg.sender only.
  void act_receive(const BroadcastMessage& msg);

  /// x_i <- x_i - eps (sum xi_hat)^-1 (sum rho_hat); RGD drops the inverse.
  /// With StepMode::freeze the own-cache refresh happens but x_i stays put.
  void act_update(const SeparableCost& c, StepMode mode = StepMode::apply);

  /// RWLS preliminary phase: the constant xi blocks, to be delivered losslessly.
  BroadcastMessage handshake_message(const SeparableCost& c);
  void accept_handshake(const BroadcastMessage& msg);

  AgentId id() const noexcept { return id_; }
  Variant variant() const noexcept { return variant_; }
  double epsilon() const noexcept { return epsilon_; }
  const Vector& x() const noexcept { return x_; }
  const ActionFlags& flags() const noexcept { return flags_; }
  const std::vector<AgentId>& neighbors() const noexcept { return neighbors_; }
  bool handshake_done() const noexcept { return handshake_done_; }
  bool stores_xi() const noexcept { return variant_ != Variant::rgd; }

  const Vector& cached_x(AgentId j) const;
  const Vector& cached_rho(AgentId j) const;
  const Matrix& cached_xi(AgentId j) const;
  const Vector& own_rho() const noexcept { return own_rho_; }
  const Matrix& own_xi() const noexcept { return own_xi_; }

 private:
  std::size_t slot(AgentId j) const;
  BlockMap local_blocks() const;
  bool post_transmit() const noexcept { return flags_.reception || flags_.update; }

  AgentId id_;
  Variant variant_;
  double epsilon_;
  Vector x_;
  std::vector<AgentId> neighbors_;
  std::vector<Vector> cache_x_;
  std::vector<Vector> cache_rho_;
  std::vector<Matrix> cache_xi_;
  Vector own_rho_;
  Matrix own_xi_;
  ActionFlags flags_;
  bool handshake_done_ = false;
  bool own_xi_fixed_ = false;
};

/// One synchronous, lossless two-round block Jacobi iteration on per-agent
/// blocks: states are exchanged, every agent evaluates its rho/xi at the fresh
/// states, those are exchanged, then every block is updated.
void sync_round(std::vector<Vector>& blocks, const SeparableCost& c, double epsilon);

}  // namespace rbj
