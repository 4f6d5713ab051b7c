#pragma once

#include <complex>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rbj/cost.hpp"

namespace rbj {

using ComplexVector = Eigen::VectorXcd;
using ComplexMatrix = Eigen::MatrixXcd;

/// Distribution line between buses `from` and `to` with series impedance
/// R + jX (per unit).
struct Line {
  std::size_t from = 0;
  std::size_t to = 0;
  double r = 0.0;
  double x = 0.0;
};

/// Buses exclude the PCC. `laplacian` is the complex weighted Laplacian of
/// the line graph (weights = series admittances), so i^c = L v.
struct Feeder {
  std::size_t num_buses = 0;
  std::vector<Line> lines;
  ComplexMatrix laplacian;
  ComplexVector voltages;

  ComplexVector currents() const { return laplacian * voltages; }
  std::vector<std::vector<std::size_t>> adjacency() const;
};

/// Validates the line list (in range, no self-loops, R > 0) and assembles the
/// Laplacian.
Feeder make_feeder(std::size_t num_buses, std::vector<Line> lines, ComplexVector voltages);

/// [[Re L, -Im L], [Im L, Re L]].
Matrix rectangularize(const ComplexMatrix& l);
Matrix rectangularize(const Feeder& f);
/// [Re v; Im v].
Vector rectangular(const ComplexVector& v);

/// Random radial feeder: a tree grown by mostly extending the last bus with
/// occasional branches, R in [0.02, 0.08], X in [0.02, 0.1], and a
/// voltage profile that random-walks away from 1 p.u. along the tree
/// (magnitudes in [0.95, 1.05], angles in [-0.05, 0.05] rad).
Feeder synth_feeder(std::size_t num_buses, std::uint64_t seed);

struct MeasurementSet {
  Vector true_v;   // rectangular, length 2n
  Vector true_ic;  // rectangular, length 2n
  Vector y_v;
  Vector y_ic;
  double sigma_v = 0.0;
  double sigma_ic = 0.0;
  /// One flag per stacked entry [y_v; y_ic].
  std::vector<bool> outlier_mask;

  Vector stacked() const;
  std::size_t num_outliers() const;
};

struct OutlierOptions {
  double fraction = 0.10;
  /// Rate for the current channel; defaults to `fraction`.
  std::optional<double> current_fraction;
  /// Uniform +-1 sign when true, always positive otherwise.
  bool random_sign = true;
  /// Magnitude ranges, relative to the clean measurement.
  double voltage_lo = 1.0 / 100.0;
  double voltage_hi = 1.0 / 80.0;
  double current_lo = 0.5;
  double current_hi = 1.0;
};

/// Per-bus complex magnitudes |z_b| of a rectangular vector [Re z; Im z],
/// repeated for both halves.
Vector bus_magnitudes(const Vector& rect);

/// y = [I; L] v + w + o. Both rectangular parts of bus b get noise with
/// variance sigma^2 |z_b|; each entry is an outlier independently with
/// probability `outliers.fraction`.
MeasurementSet measure(const Feeder& f, double sigma_v, double sigma_ic,
                       const OutlierOptions& outliers, std::uint64_t seed);
MeasurementSet measure(const Feeder& f, double sigma_v, double sigma_ic, double outlier_frac,
                       std::uint64_t seed);

struct AreaPartition {
  std::size_t num_areas = 0;
  std::vector<std::size_t> area_of_bus;
  std::vector<std::vector<std::size_t>> buses;  // ascending per area
};

/// Contiguous partition by seeded region growing: num_areas distinct random
/// roots, then the currently smallest area with unassigned neighbors claims a
/// random one of them, until every bus is assigned.
AreaPartition partition_feeder(const Feeder& f, std::size_t num_areas, std::uint64_t seed);

/// Lower bound on |measurement| used when deriving WLS weights.
inline constexpr double kWeightMagnitudeFloor = 1e-3;

/// Per-area problem. Agent i owns the buses of area i; its state block is
/// [Re v_b ; Im v_b] over those buses and its rows are the voltage and
/// current measurements of the same buses.
struct AreaProblem {
  AreaPartition partition;
  std::shared_ptr<const SeparableCost> cost;
  /// rect_index[p]: rectangular-coordinate index of global state entry p.
  std::vector<Eigen::Index> rect_index;

  const PartitionedGraph& graph() const { return cost->graph(); }
  Vector from_rectangular(const Vector& v_rect) const;
  Vector to_rectangular(const Vector& x) const;
};

/// Quadratic family: W = diag(1 / (sigma^2 max(|y_b|, floor))) with |y_b| the
/// measured complex magnitude of the row's bus. Robust
/// family: smoothed 1-norm with parameter nu.
AreaProblem build_area_cost(const Feeder& f, const MeasurementSet& meas, std::size_t num_areas,
                            CostFamily family, double nu, std::uint64_t partition_seed = 0);
/// Same, with an explicit partition.
AreaProblem build_area_cost(const Feeder& f, const MeasurementSet& meas, AreaPartition partition,
                            CostFamily family, double nu);

/// "buses n", then "line i j R X" rows, then n "voltage re im" rows.
Feeder read_feeder(std::istream& in);
Feeder load_feeder(const std::string& path);
void write_feeder(std::ostream& out, const Feeder& f);

/// CSV: channel,index,true_value,measured,outlier with a leading
/// "# sigma_v=..,sigma_ic=.." comment.
void write_measurements_csv(std::ostream& out, const MeasurementSet& m);
MeasurementSet read_measurements_csv(std::istream& in);

}  // namespace rbj
