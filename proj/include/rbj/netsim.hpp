#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rbj/cost.hpp"
#include "rbj/protocol.hpp"

namespace rbj {

/// Independent per-link, per-transmission Bernoulli losses. With
/// `enforce_persistence`, a link that has dropped T-1 consecutive packets
/// delivers the next one, so every directed link delivers at least once in
/// any T consecutive transmissions.
struct LossModel {
  double p_loss = 0.0;
  std::size_t window_T = 10;
  std::uint64_t seed = 0;
  bool enforce_persistence = true;

  void validate() const;
};

enum class SchedulerKind { round, randomized };

const char* to_string(SchedulerKind s);
SchedulerKind scheduler_from_string(const std::string& s);

struct RunOptions {
  std::size_t num_rounds = 1;
  SchedulerKind scheduler = SchedulerKind::round;
  LossModel loss;
  /// Reference minimizer; enables err_inf and stop_error.
  std::optional<Vector> x_star;
  StepMode step_mode = StepMode::apply;
  bool record_states = false;
  /// Stop as soon as ||x - x*||_inf <= stop_error (0 disables).
  double stop_error = 0.0;
  /// Stop and flag the run when J > 1e6 J(x(0)) or the state turns non-finite.
  bool detect_divergence = true;
  /// Report a singular preconditioner as divergence (trace kept, run ends)
  /// instead of throwing.
  bool singular_is_divergence = false;
};

struct DirectedLink {
  AgentId sender;
  AgentId receiver;
};

/// Record index 0 is the initial state; record t follows round t.
struct RunTrace {
  std::vector<DirectedLink> links;
  std::vector<double> cost;
  std::vector<double> err_inf;  // NaN without a reference minimizer
  std::vector<std::size_t> max_staleness;
  /// delivered[t-1][l]: link l delivered at least once during round t.
  std::vector<std::vector<std::uint8_t>> delivered;
  std::vector<Vector> states;  // only with record_states
  bool diverged = false;
  std::size_t requested_rounds = 0;

  std::size_t rounds() const noexcept { return delivered.size(); }
  std::size_t link_index(AgentId receiver, AgentId sender) const;
};

/// Stacks the agents' blocks into the global state.
Vector gather_state(const std::vector<AgentState>& agents);

/// Drives the coupled agents over the lossy broadcast network. Round
/// scheduler: every agent transmits, deliveries resolve, delivered messages
/// are received in sender order, then every agent updates. Randomized
/// scheduler: N ticks per round, each activating the next pending action of
/// a uniformly drawn agent; messages wait in an inbox until the receiver's
/// next update. Singular preconditioners propagate with the round attached.
RunTrace run(std::vector<AgentState>& agents, const SeparableCost& cost,
             const RunOptions& options);

/// Rounds since `receiver` last heard from `sender`, as of record t.
std::size_t staleness(const RunTrace& trace, AgentId receiver, AgentId sender, std::size_t t);

/// CSV with columns round,J,J_normalized,err_inf,max_staleness. J_normalized
/// is (J - J*)/(J0 - J*). A trace cut short by divergence is padded with inf
/// rows up to `pad_to_rounds`.
void write_trace_csv(std::ostream& out, const RunTrace& trace, double j_star,
                     std::size_t pad_to_rounds = 0);

/// Counter-based uniform draw in [0, 1).
double counter_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter);

}  // namespace rbj
