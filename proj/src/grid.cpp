#include "rbj/grid.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

namespace rbj {

std::vector<std::vector<std::size_t>> Feeder::adjacency() const {
  std::vector<std::vector<std::size_t>> adj(num_buses);
  for (const auto& l : lines) {
    adj[l.from].push_back(l.to);
    adj[l.to].push_back(l.from);
  }
  for (auto& a : adj) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }
  return adj;
}

Feeder make_feeder(std::size_t num_buses, std::vector<Line> lines, ComplexVector voltages) {
  if (num_buses == 0) throw Error(ErrorCode::invalid_argument, "feeder needs at least one bus");
  if (voltages.size() != static_cast<Eigen::Index>(num_buses)) {
    throw Error(ErrorCode::invalid_argument, "one voltage per bus expected");
  }
  Feeder f;
  f.num_buses = num_buses;
  f.laplacian = ComplexMatrix::Zero(static_cast<Eigen::Index>(num_buses),
                                    static_cast<Eigen::Index>(num_buses));
  for (const auto& l : lines) {
    if (l.from >= num_buses || l.to >= num_buses || l.from == l.to) {
      throw Error(ErrorCode::invalid_argument, "line references invalid buses");
    }
    if (!(l.r > 0.0) || !std::isfinite(l.x)) {
      throw Error(ErrorCode::invalid_argument, "line resistance must be positive");
    }
    const std::complex<double> y = 1.0 / std::complex<double>(l.r, l.x);
    const auto a = static_cast<Eigen::Index>(l.from);
    const auto b = static_cast<Eigen::Index>(l.to);
    f.laplacian(a, a) += y;
    f.laplacian(b, b) += y;
    f.laplacian(a, b) -= y;
    f.laplacian(b, a) -= y;
  }
  f.lines = std::move(lines);
  f.voltages = std::move(voltages);
  return f;
}

Matrix rectangularize(const ComplexMatrix& l) {
  const auto n = l.rows();
  Matrix out(2 * n, 2 * l.cols());
  out.topLeftCorner(n, l.cols()) = l.real();
  out.topRightCorner(n, l.cols()) = -l.imag();
  out.bottomLeftCorner(n, l.cols()) = l.imag();
  out.bottomRightCorner(n, l.cols()) = l.real();
  return out;
}

Matrix rectangularize(const Feeder& f) { return rectangularize(f.laplacian); }

Vector rectangular(const ComplexVector& v) {
  Vector out(2 * v.size());
  out.head(v.size()) = v.real();
  out.tail(v.size()) = v.imag();
  return out;
}

Feeder synth_feeder(std::size_t num_buses, std::uint64_t seed) {
  if (num_buses < 2) throw Error(ErrorCode::invalid_argument, "a feeder needs at least two buses");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  std::vector<std::size_t> parent(num_buses, 0);
  std::vector<Line> lines;
  for (std::size_t k = 1; k < num_buses; ++k) {
    parent[k] = unit(rng) < 0.7 ? k - 1 : static_cast<std::size_t>(unit(rng) * static_cast<double>(k));
    parent[k] = std::min(parent[k], k - 1);
    lines.push_back({parent[k], k, uniform(0.02, 0.08), uniform(0.02, 0.1)});
  }

  std::vector<double> mag(num_buses), ang(num_buses);
  mag[0] = 1.0 + uniform(-0.01, 0.01);
  ang[0] = uniform(-0.01, 0.01);
  for (std::size_t k = 1; k < num_buses; ++k) {
    mag[k] = std::clamp(mag[parent[k]] + uniform(-0.004, 0.002), 0.95, 1.05);
    ang[k] = std::clamp(ang[parent[k]] + uniform(-0.003, 0.003), -0.05, 0.05);
  }
  ComplexVector v(static_cast<Eigen::Index>(num_buses));
  for (std::size_t k = 0; k < num_buses; ++k) v[static_cast<Eigen::Index>(k)] = std::polar(mag[k], ang[k]);
  return make_feeder(num_buses, std::move(lines), std::move(v));
}

Vector MeasurementSet::stacked() const {
  Vector y(y_v.size() + y_ic.size());
  y << y_v, y_ic;
  return y;
}

std::size_t MeasurementSet::num_outliers() const {
  return static_cast<std::size_t>(std::count(outlier_mask.begin(), outlier_mask.end(), true));
}

Vector bus_magnitudes(const Vector& rect) {
  const auto n = rect.size() / 2;
  Vector out(rect.size());
  for (Eigen::Index b = 0; b < n; ++b) {
    out[b] = out[n + b] = std::hypot(rect[b], rect[n + b]);
  }
  return out;
}

MeasurementSet measure(const Feeder& f, double sigma_v, double sigma_ic,
                       const OutlierOptions& outliers, std::uint64_t seed) {
  if (sigma_v < 0.0 || sigma_ic < 0.0) {
    throw Error(ErrorCode::invalid_argument, "noise scales must be non-negative");
  }
  const double frac_ic = outliers.current_fraction.value_or(outliers.fraction);
  for (double frac : {outliers.fraction, frac_ic}) {
    if (!(frac >= 0.0 && frac < 1.0)) {
      throw Error(ErrorCode::invalid_argument, "outlier fraction must lie in [0, 1)");
    }
  }
  MeasurementSet m;
  m.sigma_v = sigma_v;
  m.sigma_ic = sigma_ic;
  m.true_v = rectangular(f.voltages);
  m.true_ic = rectangular(f.currents());

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Noise variance sigma^2 |z_b| on both rectangular parts of bus b.
  auto corrupt = [&](const Vector& truth, double sigma, double frac, double lo, double hi,
                     Vector& y) {
    const Vector mag = bus_magnitudes(truth);
    y.resize(truth.size());
    for (Eigen::Index k = 0; k < truth.size(); ++k) {
      y[k] = truth[k] + sigma * std::sqrt(mag[k]) * gauss(rng);
    }
    for (Eigen::Index k = 0; k < truth.size(); ++k) {
      const bool hit = unit(rng) < frac;
      const double mag = lo + (hi - lo) * unit(rng);
      const double sign = !outliers.random_sign || unit(rng) < 0.5 ? 1.0 : -1.0;
      m.outlier_mask.push_back(hit);
      if (hit) y[k] += sign * mag * std::abs(y[k]);
    }
  };
  corrupt(m.true_v, sigma_v, outliers.fraction, outliers.voltage_lo, outliers.voltage_hi, m.y_v);
  corrupt(m.true_ic, sigma_ic, frac_ic, outliers.current_lo, outliers.current_hi, m.y_ic);
  return m;
}

MeasurementSet measure(const Feeder& f, double sigma_v, double sigma_ic, double outlier_frac,
                       std::uint64_t seed) {
  OutlierOptions o;
  o.fraction = outlier_frac;
  return measure(f, sigma_v, sigma_ic, o, seed);
}

AreaPartition partition_feeder(const Feeder& f, std::size_t num_areas, std::uint64_t seed) {
  const auto n = f.num_buses;
  if (num_areas == 0 || num_areas > n) {
    throw Error(ErrorCode::invalid_argument, "num_areas must lie in [1, num_buses]");
  }
  const auto adj = f.adjacency();
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  constexpr auto kUnassigned = static_cast<std::size_t>(-1);
  AreaPartition p;
  p.num_areas = num_areas;
  p.area_of_bus.assign(n, kUnassigned);
  p.buses.resize(num_areas);
  // Roots sorted so area ids follow bus order.
  std::vector<std::size_t> roots(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(num_areas));
  std::sort(roots.begin(), roots.end());
  for (std::size_t a = 0; a < num_areas; ++a) {
    p.area_of_bus[roots[a]] = a;
    p.buses[a].push_back(roots[a]);
  }
  std::size_t assigned = num_areas;
  while (assigned < n) {
    std::vector<std::size_t> by_size(num_areas);
    std::iota(by_size.begin(), by_size.end(), 0);
    std::stable_sort(by_size.begin(), by_size.end(), [&](std::size_t a, std::size_t b) {
      return p.buses[a].size() < p.buses[b].size();
    });
    bool grew = false;
    for (std::size_t a : by_size) {
      std::vector<std::size_t> frontier;
      for (std::size_t b : p.buses[a]) {
        for (std::size_t c : adj[b]) {
          if (p.area_of_bus[c] == kUnassigned) frontier.push_back(c);
        }
      }
      if (frontier.empty()) continue;
      std::sort(frontier.begin(), frontier.end());
      frontier.erase(std::unique(frontier.begin(), frontier.end()), frontier.end());
      std::uniform_int_distribution<std::size_t> pick(0, frontier.size() - 1);
      const auto c = frontier[pick(rng)];
      p.area_of_bus[c] = a;
      p.buses[a].push_back(c);
      ++assigned;
      grew = true;
      break;
    }
    if (!grew) throw Error(ErrorCode::not_connected, "feeder is not connected");
  }
  for (auto& b : p.buses) std::sort(b.begin(), b.end());
  return p;
}

Vector AreaProblem::from_rectangular(const Vector& v_rect) const {
  Vector x(static_cast<Eigen::Index>(rect_index.size()));
  for (std::size_t p = 0; p < rect_index.size(); ++p) x[static_cast<Eigen::Index>(p)] = v_rect[rect_index[p]];
  return x;
}

Vector AreaProblem::to_rectangular(const Vector& x) const {
  Vector v(static_cast<Eigen::Index>(rect_index.size()));
  for (std::size_t p = 0; p < rect_index.size(); ++p) v[rect_index[p]] = x[static_cast<Eigen::Index>(p)];
  return v;
}

AreaProblem build_area_cost(const Feeder& f, const MeasurementSet& meas, std::size_t num_areas,
                            CostFamily family, double nu, std::uint64_t partition_seed) {
  return build_area_cost(f, meas, partition_feeder(f, num_areas, partition_seed), family, nu);
}

AreaProblem build_area_cost(const Feeder& f, const MeasurementSet& meas, AreaPartition partition,
                            CostFamily family, double nu) {
  const auto n = static_cast<Eigen::Index>(f.num_buses);
  if (partition.area_of_bus.size() != f.num_buses) {
    throw Error(ErrorCode::invalid_argument, "partition does not cover the feeder");
  }
  if (meas.y_v.size() != 2 * n || meas.y_ic.size() != 2 * n) {
    throw Error(ErrorCode::invalid_argument, "measurement set does not match the feeder");
  }
  const auto num_areas = partition.num_areas;

  // Area graph: an edge whenever a line crosses an area boundary.
  std::vector<Edge> edges;
  for (const auto& l : f.lines) {
    auto a = partition.area_of_bus[l.from];
    auto b = partition.area_of_bus[l.to];
    if (a != b) edges.emplace_back(std::min(a, b), std::max(a, b));
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  std::vector<std::size_t> dims(num_areas);
  for (std::size_t a = 0; a < num_areas; ++a) dims[a] = 2 * partition.buses[a].size();
  PartitionedGraph graph = PartitionedGraph::build(num_areas, edges, dims);

  // Rectangular column c -> (area, local column).
  std::vector<std::size_t> col_area(static_cast<std::size_t>(2 * n));
  std::vector<Eigen::Index> col_local(static_cast<std::size_t>(2 * n));
  AreaProblem out;
  for (std::size_t a = 0; a < num_areas; ++a) {
    const auto& buses = partition.buses[a];
    const auto k = static_cast<Eigen::Index>(buses.size());
    for (Eigen::Index q = 0; q < k; ++q) {
      const auto b = static_cast<Eigen::Index>(buses[static_cast<std::size_t>(q)]);
      col_area[static_cast<std::size_t>(b)] = a;
      col_local[static_cast<std::size_t>(b)] = q;
      col_area[static_cast<std::size_t>(n + b)] = a;
      col_local[static_cast<std::size_t>(n + b)] = k + q;
    }
    for (Eigen::Index q = 0; q < k; ++q) out.rect_index.push_back(static_cast<Eigen::Index>(buses[static_cast<std::size_t>(q)]));
    for (Eigen::Index q = 0; q < k; ++q) out.rect_index.push_back(n + static_cast<Eigen::Index>(buses[static_cast<std::size_t>(q)]));
  }

  const Matrix lrect = rectangularize(f);
  const Vector y_all = meas.stacked();
  Vector y_mag(4 * n);
  y_mag << bus_magnitudes(meas.y_v), bus_magnitudes(meas.y_ic);
  std::vector<LocalMeasurements> locals(num_areas);
  std::vector<Vector> weights(num_areas);
  for (std::size_t a = 0; a < num_areas; ++a) {
    const auto& buses = partition.buses[a];
    // Stacked row ids: v_re, v_im, ic_re, ic_im for the area's buses.
    std::vector<Eigen::Index> rows;
    for (Eigen::Index block = 0; block < 4; ++block) {
      for (auto b : buses) rows.push_back(block * n + static_cast<Eigen::Index>(b));
    }
    const auto m = static_cast<Eigen::Index>(rows.size());
    auto& loc = locals[a];
    loc.y.resize(m);
    weights[a].resize(m);
    std::map<AgentId, std::vector<Eigen::Triplet<double>>> trips;
    for (Eigen::Index r = 0; r < m; ++r) {
      const auto row = rows[static_cast<std::size_t>(r)];
      loc.y[r] = y_all[row];
      const bool is_voltage = row < 2 * n;
      const double sigma = is_voltage ? meas.sigma_v : meas.sigma_ic;
      const double mag = std::max(y_mag[row], kWeightMagnitudeFloor);
      weights[a][r] = 1.0 / (std::max(sigma, 1e-12) * std::max(sigma, 1e-12) * mag);
      if (is_voltage) {
        trips[col_area[static_cast<std::size_t>(row)]].emplace_back(r, col_local[static_cast<std::size_t>(row)], 1.0);
      } else {
        const auto lrow = row - 2 * n;
        for (Eigen::Index c = 0; c < 2 * n; ++c) {
          const double v = lrect(lrow, c);
          if (v != 0.0) {
            trips[col_area[static_cast<std::size_t>(c)]].emplace_back(r, col_local[static_cast<std::size_t>(c)], v);
          }
        }
      }
    }
    for (auto& [j, t] : trips) {
      SparseRowMatrix blk(m, static_cast<Eigen::Index>(dims[j]));
      blk.setFromTriplets(t.begin(), t.end());
      loc.blocks.emplace(j, std::move(blk));
    }
  }

  out.partition = std::move(partition);
  if (family == CostFamily::quadratic) {
    out.cost = std::make_shared<QuadraticCost>(std::move(graph), std::move(locals), std::move(weights));
  } else {
    out.cost = std::make_shared<RobustCost>(std::move(graph), std::move(locals), nu);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Files

Feeder read_feeder(std::istream& in) {
  std::size_t n = 0;
  bool have_n = false;
  std::vector<Line> lines;
  std::vector<std::complex<double>> volts;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto pos = line.find('#');
    std::istringstream ss(pos == std::string::npos ? line : line.substr(0, pos));
    std::string head;
    if (!(ss >> head)) continue;
    auto fail = [&](const std::string& msg) {
      throw Error(ErrorCode::parse, "feeder line " + std::to_string(line_no) + ": " + msg);
    };
    if (head == "buses") {
      long long v = 0;
      if (!(ss >> v) || v <= 0) fail("expected positive bus count");
      n = static_cast<std::size_t>(v);
      have_n = true;
    } else if (head == "line") {
      long long a = -1, b = -1;
      Line l;
      if (!(ss >> a >> b >> l.r >> l.x) || a < 0 || b < 0) fail("expected 'line i j R X'");
      l.from = static_cast<std::size_t>(a);
      l.to = static_cast<std::size_t>(b);
      lines.push_back(l);
    } else if (head == "voltage") {
      double re = 0, im = 0;
      if (!(ss >> re >> im)) fail("expected 'voltage re im'");
      volts.emplace_back(re, im);
    } else {
      fail("unknown keyword '" + head + "'");
    }
  }
  if (!have_n) throw Error(ErrorCode::parse, "feeder file lacks a 'buses' line");
  if (volts.size() != n) throw Error(ErrorCode::parse, "feeder file needs one voltage per bus");
  ComplexVector v(static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < n; ++k) v[static_cast<Eigen::Index>(k)] = volts[k];
  return make_feeder(n, std::move(lines), std::move(v));
}

Feeder load_feeder(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open feeder file " + path);
  return read_feeder(in);
}

void write_feeder(std::ostream& out, const Feeder& f) {
  const auto old = out.precision(17);
  out << "buses " << f.num_buses << '\n';
  for (const auto& l : f.lines) out << "line " << l.from << ' ' << l.to << ' ' << l.r << ' ' << l.x << '\n';
  for (Eigen::Index k = 0; k < f.voltages.size(); ++k) {
    out << "voltage " << f.voltages[k].real() << ' ' << f.voltages[k].imag() << '\n';
  }
  out.precision(old);
}

void write_measurements_csv(std::ostream& out, const MeasurementSet& m) {
  const auto old = out.precision(17);
  out << "# sigma_v=" << m.sigma_v << ",sigma_ic=" << m.sigma_ic << '\n';
  out << "channel,index,true_value,measured,outlier\n";
  std::size_t flat = 0;
  for (Eigen::Index k = 0; k < m.y_v.size(); ++k, ++flat) {
    out << "v," << k << ',' << m.true_v[k] << ',' << m.y_v[k] << ',' << (m.outlier_mask[flat] ? 1 : 0) << '\n';
  }
  for (Eigen::Index k = 0; k < m.y_ic.size(); ++k, ++flat) {
    out << "ic," << k << ',' << m.true_ic[k] << ',' << m.y_ic[k] << ',' << (m.outlier_mask[flat] ? 1 : 0) << '\n';
  }
  out.precision(old);
}

MeasurementSet read_measurements_csv(std::istream& in) {
  MeasurementSet m;
  std::vector<double> tv, yv, ti, yi;
  std::vector<bool> mv, mi;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (std::sscanf(line.c_str(), "# sigma_v=%lf,sigma_ic=%lf", &m.sigma_v, &m.sigma_ic) != 2) {
        throw Error(ErrorCode::parse, "malformed sigma comment in measurement CSV");
      }
      continue;
    }
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    std::istringstream ss(line);
    std::string channel, idx, t, y, o;
    if (!std::getline(ss, channel, ',') || !std::getline(ss, idx, ',') || !std::getline(ss, t, ',') ||
        !std::getline(ss, y, ',') || !std::getline(ss, o)) {
      throw Error(ErrorCode::parse, "malformed measurement row '" + line + "'");
    }
    try {
      if (channel == "v") {
        tv.push_back(std::stod(t));
        yv.push_back(std::stod(y));
        mv.push_back(o == "1");
      } else if (channel == "ic") {
        ti.push_back(std::stod(t));
        yi.push_back(std::stod(y));
        mi.push_back(o == "1");
      } else {
        throw Error(ErrorCode::parse, "unknown channel '" + channel + "'");
      }
    } catch (const std::invalid_argument&) {
      throw Error(ErrorCode::parse, "non-numeric measurement row '" + line + "'");
    }
  }
  auto to_vec = [](const std::vector<double>& v) {
    return Vector(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
  };
  m.true_v = to_vec(tv);
  m.y_v = to_vec(yv);
  m.true_ic = to_vec(ti);
  m.y_ic = to_vec(yi);
  m.outlier_mask = mv;
  m.outlier_mask.insert(m.outlier_mask.end(), mi.begin(), mi.end());
  return m;
}

}  // namespace rbj
