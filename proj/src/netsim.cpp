#include "rbj/netsim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <ostream>

namespace rbj {

void LossModel::validate() const {
  if (!(p_loss >= 0.0 && p_loss < 1.0)) {
    throw Error(ErrorCode::invalid_argument, "p_loss must lie in [0, 1)");
  }
  if (window_T == 0) throw Error(ErrorCode::invalid_argument, "window_T must be positive");
}

const char* to_string(SchedulerKind s) {
  return s == SchedulerKind::round ? "round" : "randomized";
}

SchedulerKind scheduler_from_string(const std::string& s) {
  if (s == "round") return SchedulerKind::round;
  if (s == "randomized") return SchedulerKind::randomized;
  throw Error(ErrorCode::invalid_argument, "unknown scheduler '" + s + "'");
}

namespace {

std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t kSchedulerStream = 0;

}  // namespace

double counter_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
  const std::uint64_t h = mix64(seed ^ mix64(stream ^ mix64(counter)));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

std::size_t RunTrace::link_index(AgentId receiver, AgentId sender) const {
  for (std::size_t l = 0; l < links.size(); ++l) {
    if (links[l].receiver == receiver && links[l].sender == sender) return l;
  }
  throw Error(ErrorCode::invalid_argument,
              "no link " + std::to_string(sender) + " -> " + std::to_string(receiver));
}

Vector gather_state(const std::vector<AgentState>& agents) {
  Eigen::Index n = 0;
  for (const auto& a : agents) n += a.x().size();
  Vector x(n);
  Eigen::Index off = 0;
  for (const auto& a : agents) {
    x.segment(off, a.x().size()) = a.x();
    off += a.x().size();
  }
  return x;
}

namespace {

class LinkChannel {
 public:
  LinkChannel(const LossModel& m, std::size_t num_links)
      : model_(m), drops_(num_links, 0), sent_(num_links, 0) {}

  bool transmit(std::size_t l) {
    const std::uint64_t counter = sent_[l]++;
    bool ok;
    if (model_.enforce_persistence && drops_[l] + 1 >= model_.window_T) {
      ok = true;
    } else {
      ok = counter_uniform(model_.seed, l + 1, counter) >= model_.p_loss;
    }
    drops_[l] = ok ? 0 : drops_[l] + 1;
    return ok;
  }

 private:
  LossModel model_;
  std::vector<std::size_t> drops_;
  std::vector<std::uint64_t> sent_;
};

class Recorder {
 public:
  Recorder(RunTrace& trace, const SeparableCost& cost, const RunOptions& opt)
      : trace_(trace), cost_(cost), opt_(opt), last_rx_(trace.links.size(), 0) {}

  // Returns false when the run should stop.
  bool record(const std::vector<AgentState>& agents, std::size_t t,
              const std::vector<std::uint8_t>* bits) {
    const Vector x = gather_state(agents);
    std::size_t worst = 0;
    if (bits) {
      trace_.delivered.push_back(*bits);
      for (std::size_t l = 0; l < last_rx_.size(); ++l) {
        if ((*bits)[l]) last_rx_[l] = t;
        worst = std::max(worst, t - last_rx_[l]);
      }
    }
    const bool finite = x.allFinite();
    const double j = finite ? cost_.global_value(x) : std::numeric_limits<double>::infinity();
    trace_.cost.push_back(j);
    trace_.max_staleness.push_back(worst);
    double err = std::numeric_limits<double>::quiet_NaN();
    if (opt_.x_star) {
      err = finite ? (x - *opt_.x_star).cwiseAbs().maxCoeff()
                   : std::numeric_limits<double>::infinity();
    }
    trace_.err_inf.push_back(err);
    if (opt_.record_states) trace_.states.push_back(x);

    if (t == 0) {
      j0_ = j;
      return true;
    }
    if (opt_.detect_divergence && (!finite || !std::isfinite(j) || j > 1e6 * j0_)) {
      trace_.diverged = true;
      return false;
    }
    if (opt_.stop_error > 0.0 && opt_.x_star && err <= opt_.stop_error) return false;
    return true;
  }

 private:
  RunTrace& trace_;
  const SeparableCost& cost_;
  const RunOptions& opt_;
  std::vector<std::size_t> last_rx_;
  double j0_ = 0.0;
};

// Returns normally only when the error is reported as divergence.
void rethrow_with_round(const Error& e, std::size_t t, const RunOptions& opt, RunTrace& trace) {
  if (opt.singular_is_divergence && e.code() == ErrorCode::singular) {
    trace.diverged = true;
    return;
  }
  throw Error(e.code(), std::string(e.what()) + " at round " + std::to_string(t));
}

}  // namespace

RunTrace run(std::vector<AgentState>& agents, const SeparableCost& cost,
             const RunOptions& options) {
  options.loss.validate();
  if (options.num_rounds == 0) throw Error(ErrorCode::invalid_argument, "num_rounds must be >= 1");
  const auto& g = cost.graph();
  const auto n = g.num_agents();
  if (agents.size() != n) throw Error(ErrorCode::invalid_argument, "one agent per graph node expected");
  for (AgentId i = 0; i < n; ++i) {
    if (agents[i].id() != i) throw Error(ErrorCode::invalid_argument, "agents must be ordered by id");
  }
  if (options.x_star && options.x_star->size() != static_cast<Eigen::Index>(g.total_dim())) {
    throw Error(ErrorCode::invalid_argument, "reference minimizer has the wrong dimension");
  }

  RunTrace trace;
  trace.requested_rounds = options.num_rounds;
  // Links grouped by receiver, senders ascending.
  std::vector<std::vector<std::size_t>> in_link(n);
  std::vector<std::vector<std::size_t>> out_link(n);
  for (AgentId i = 0; i < n; ++i) {
    for (AgentId j : g.neighbors(i)) {
      in_link[i].push_back(trace.links.size());
      trace.links.push_back({j, i});
    }
  }
  for (AgentId j = 0; j < n; ++j) {
    for (AgentId i : g.neighbors(j)) out_link[j].push_back(trace.link_index(i, j));
  }

  // Lossless preliminary phase for RWLS agents.
  for (AgentId i = 0; i < n; ++i) {
    if (agents[i].variant() == Variant::rwls && !agents[i].handshake_done()) {
      const auto msg = agents[i].handshake_message(cost);
      for (AgentId j : g.neighbors(i)) agents[j].accept_handshake(msg);
    }
  }

  LinkChannel channel(options.loss, trace.links.size());
  Recorder recorder(trace, cost, options);
  recorder.record(agents, 0, nullptr);

  if (options.scheduler == SchedulerKind::round) {
    std::vector<BroadcastMessage> outbox(n);
    std::vector<std::uint8_t> bits(trace.links.size());
    for (std::size_t t = 1; t <= options.num_rounds; ++t) {
      try {
        for (AgentId i = 0; i < n; ++i) outbox[i] = agents[i].act_transmit(cost);
        for (std::size_t l = 0; l < trace.links.size(); ++l) bits[l] = channel.transmit(l);
        for (AgentId i = 0; i < n; ++i) {
          for (std::size_t l : in_link[i]) {
            if (bits[l]) agents[i].act_receive(outbox[trace.links[l].sender]);
          }
        }
        for (AgentId i = 0; i < n; ++i) agents[i].act_update(cost, options.step_mode);
      } catch (const Error& e) {
        rethrow_with_round(e, t, options, trace);
        break;
      }
      if (!recorder.record(agents, t, &bits)) break;
    }
    return trace;
  }

  std::vector<std::vector<std::shared_ptr<const BroadcastMessage>>> inbox(n);
  std::uint64_t tick = 0;
  for (std::size_t t = 1; t <= options.num_rounds; ++t) {
    std::vector<std::uint8_t> bits(trace.links.size(), 0);
    try {
      for (std::size_t k = 0; k < n; ++k, ++tick) {
        const auto a = std::min<AgentId>(
            n - 1, static_cast<AgentId>(counter_uniform(options.loss.seed, kSchedulerStream, tick) *
                                        static_cast<double>(n)));
        auto& agent = agents[a];
        if (agent.flags().transmission) {
          auto msg = std::make_shared<const BroadcastMessage>(agent.act_transmit(cost));
          for (std::size_t l : out_link[a]) {
            if (channel.transmit(l)) {
              inbox[trace.links[l].receiver].push_back(msg);
              bits[l] = 1;
            }
          }
        } else {
          for (const auto& msg : inbox[a]) agent.act_receive(*msg);
          inbox[a].clear();
          agent.act_update(cost, options.step_mode);
        }
      }
    } catch (const Error& e) {
      rethrow_with_round(e, t, options, trace);
      break;
    }
    if (!recorder.record(agents, t, &bits)) break;
  }
  return trace;
}

std::size_t staleness(const RunTrace& trace, AgentId receiver, AgentId sender, std::size_t t) {
  const auto l = trace.link_index(receiver, sender);
  if (t > trace.rounds()) {
    throw Error(ErrorCode::invalid_argument, "round " + std::to_string(t) + " outside the trace");
  }
  std::size_t s = t;
  while (s > 0 && !trace.delivered[s - 1][l]) --s;
  return t - s;
}

void write_trace_csv(std::ostream& out, const RunTrace& trace, double j_star,
                     std::size_t pad_to_rounds) {
  out << "round,J,J_normalized,err_inf,max_staleness\n";
  const double j0 = trace.cost.empty() ? 0.0 : trace.cost.front();
  const double denom = j0 - j_star;
  char buf[160];
  const std::size_t records = trace.cost.size();
  for (std::size_t t = 0; t < records; ++t) {
    const double j = trace.cost[t];
    const double norm = denom != 0.0 ? (j - j_star) / denom : 0.0;
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%zu\n", t, j, norm, trace.err_inf[t],
                  trace.max_staleness[t]);
    out << buf;
  }
  const std::size_t last_stale = trace.max_staleness.empty() ? 0 : trace.max_staleness.back();
  for (std::size_t t = records; t <= pad_to_rounds; ++t) {
    std::snprintf(buf, sizeof buf, "%zu,inf,inf,inf,%zu\n", t, last_stale);
    out << buf;
  }
}

}  // namespace rbj
