#pragma once

#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "rbj/graph.hpp"
#include "rbj/types.hpp"

namespace rbj {

enum class CostFamily { quadratic, robust };

const char* to_string(CostFamily f);
CostFamily cost_family_from_string(const std::string& s);

/// State blocks keyed by agent id. Cost evaluations for agent i expect exactly
/// the blocks of N_i^+ (extra entries are ignored).
using BlockMap = std::map<AgentId, Vector>;

/// Measurement rows owned by one agent: y_i and the coefficient blocks A_ij.
/// A block that is absent is identically zero.
struct LocalMeasurements {
  Vector y;
  std::map<AgentId, SparseRowMatrix> blocks;
};

/// Partial derivatives of one local cost J_i, one entry per j in N_i^+.
struct LocalDerivatives {
  std::vector<AgentId> ids;
  std::vector<Vector> rho;  // grad_j J_i
  std::vector<Matrix> xi;   // hess_jj J_i, left empty unless requested
};

/// J(x) = sum_i J_i(x_i, {x_j}_{j in N_i}) with J_i = sum_k phi_i(r_ik) and
/// r_i = y_i - sum_{j in N_i^+} A_ij x_j. Subclasses supply the scalar penalty.
///
/// Index convention: rho_block(i, j, .) is grad_j J_i, i.e. it is computed by
/// the owner i of J_i and is destined for agent j.
class SeparableCost {
 public:
  virtual ~SeparableCost() = default;

  virtual CostFamily family() const noexcept = 0;

  const PartitionedGraph& graph() const noexcept { return graph_; }
  const LocalMeasurements& local(AgentId i) const;
  std::size_t num_rows() const noexcept { return total_rows_; }

  double local_value(AgentId i, const BlockMap& x) const;
  Vector rho_block(AgentId i, AgentId j, const BlockMap& x) const;
  Matrix xi_block(AgentId i, AgentId j, const BlockMap& x) const;

  /// rho (and optionally xi) for every j in `targets`, sharing one residual
  /// evaluation. Targets must lie in N_i^+.
  LocalDerivatives local_derivatives(AgentId i, const BlockMap& x,
                                     const std::vector<AgentId>& targets,
                                     bool with_xi) const;

  Vector residual(AgentId i, const BlockMap& x) const;

  // Flat views over the stacked problem, global state ordered by block offset.
  double global_value(const Vector& x) const;
  Vector global_gradient(const Vector& x) const;
  Matrix global_hessian(const Vector& x) const;
  SparseRowMatrix stacked_matrix() const;
  Vector stacked_measurements() const;

  /// Blocks of N_i^+ cut out of a global state vector.
  BlockMap gather(AgentId i, const Vector& x) const;
  Vector block(AgentId i, const Vector& x) const;

  /// Per-row penalty phi and its derivatives with respect to the residual.
  virtual double penalty_value(AgentId i, const Vector& r) const = 0;
  virtual void penalty_derivatives(AgentId i, const Vector& r, Vector& d1,
                                   Vector* d2) const = 0;

 protected:
  SeparableCost(PartitionedGraph graph, std::vector<LocalMeasurements> locals);

  /// Strict convexity witness: the stacked measurement matrix has full column
  /// rank. Throws otherwise.
  void require_full_column_rank() const;

 private:
  void check_blocks(AgentId i, const BlockMap& x) const;
  const std::vector<AgentId>& closed(AgentId i) const { return closed_[i]; }

  PartitionedGraph graph_;
  std::vector<LocalMeasurements> locals_;
  std::vector<std::vector<AgentId>> closed_;
  std::size_t total_rows_ = 0;
};

/// J_i = 1/2 ||y_i - sum_j A_ij x_j||^2_{W_i} with diagonal W_i > 0.
/// Strictly convex and radially unbounded when the stacked A has full column
/// rank, which the constructor verifies.
class QuadraticCost final : public SeparableCost {
 public:
  QuadraticCost(PartitionedGraph graph, std::vector<LocalMeasurements> locals,
                std::vector<Vector> weights);

  CostFamily family() const noexcept override { return CostFamily::quadratic; }
  const Vector& weights(AgentId i) const;
  Vector stacked_weights() const;

  double penalty_value(AgentId i, const Vector& r) const override;
  void penalty_derivatives(AgentId i, const Vector& r, Vector& d1,
                           Vector* d2) const override;

 private:
  std::vector<Vector> weights_;
};

/// Smoothed 1-norm: J_i = sum_k sqrt(r_ik^2 + nu), nu > 0. Each term is
/// strictly convex in r and grows linearly, so J is strictly convex and
/// radially unbounded whenever the stacked A has full column rank (verified).
class RobustCost final : public SeparableCost {
 public:
  RobustCost(PartitionedGraph graph, std::vector<LocalMeasurements> locals, double nu);

  CostFamily family() const noexcept override { return CostFamily::robust; }
  double nu() const noexcept { return nu_; }

  double penalty_value(AgentId i, const Vector& r) const override;
  void penalty_derivatives(AgentId i, const Vector& r, Vector& d1,
                           Vector* d2) const override;

 private:
  double nu_;
};

/// Central-difference approximation used as a verification oracle.
/// order 1: grad_j J_i from local_value; order 2: hess_jj J_i as the
/// Jacobian of rho_block(i, j, .) with respect to x_j.
Matrix finite_diff_oracle(const SeparableCost& c, AgentId i, AgentId j,
                          const BlockMap& x, int order, double step);

/// 1e-6 (order 1) or 1e-4 (order 2) times 1 + max-norm of the blocks.
double default_fd_step(const BlockMap& x, int order);

/// Plain-text problem file. See README for the layout.
std::unique_ptr<SeparableCost> read_problem(std::istream& in);
std::unique_ptr<SeparableCost> load_problem(const std::string& path);
void write_problem(std::ostream& out, const SeparableCost& c);
void save_problem(const std::string& path, const SeparableCost& c);

}  // namespace rbj
