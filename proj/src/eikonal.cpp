#include "pignn/eikonal.hpp"

#include "pignn/csv_io.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <queue>

namespace pignn::eikonal {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

void ReservoirGrid::validate() const {
  if (nx < 2 || ny < 2) throw Error("grid needs at least 2 cells in each direction");
  if (!(dx > 0.0) || !(dy > 0.0)) throw Error("grid cell sizes must be positive");
  if (perm.rows() != ny || perm.cols() != nx || phi.rows() != ny || phi.cols() != nx) {
    throw Error("grid rasters must be [ny x nx]");
  }
  if (!(perm.array() > 0.0).all()) throw Error("permeability must be positive everywhere");
  if (!(phi.array() > 0.0).all() || !(phi.array() < 1.0).all()) {
    throw Error("porosity must lie in (0, 1) everywhere");
  }
  fluid.validate();
}

bool ReservoirGrid::contains(double x, double y) const {
  return x >= 0.0 && y >= 0.0 && x < nx * dx && y < ny * dy;
}

Cell ReservoirGrid::cell_of(double x, double y) const {
  if (!contains(x, y)) throw Error("point lies outside the grid");
  return {std::min(nx - 1, static_cast<int>(x / dx)), std::min(ny - 1, static_cast<int>(y / dy))};
}

SpeedField speed_field(const ReservoirGrid& grid) {
  grid.validate();
  const double mu_ct = grid.fluid.viscosity * grid.fluid.total_compressibility;
  SpeedField s;
  s.dx = grid.dx;
  s.dy = grid.dy;
  s.values = (grid.perm.array() / (mu_ct * grid.phi.array())).sqrt().matrix();
  return s;
}

double upwind_update(double tx, double ty, double dx, double dy, double speed) {
  double a = tx;
  double b = ty;
  double ha = dx;
  double hb = dy;
  if (b < a) {
    std::swap(a, b);
    std::swap(ha, hb);
  }
  if (a == kInf) return kInf;
  const double one_sided = a + ha / speed;
  if (one_sided <= b) return one_sided;
  // (t - a)^2 / ha^2 + (t - b)^2 / hb^2 = 1 / F^2, larger root.
  const double wa = 1.0 / (ha * ha);
  const double wb = 1.0 / (hb * hb);
  const double qa = wa + wb;
  const double qb = -2.0 * (wa * a + wb * b);
  const double qc = wa * a * a + wb * b * b - 1.0 / (speed * speed);
  const double disc = std::max(0.0, qb * qb - 4.0 * qa * qc);
  return (-qb + std::sqrt(disc)) / (2.0 * qa);
}

double straight_ray_time(const SpeedField& speed, Cell from, Cell to) {
  const double ex = (to.ix - from.ix) * speed.dx;
  const double ey = (to.iy - from.iy) * speed.dy;
  const double length = std::hypot(ex, ey);
  if (length == 0.0) return 0.0;
  const double cells = std::hypot(to.ix - from.ix, to.iy - from.iy);
  const int samples = std::max(2, static_cast<int>(std::ceil(cells * 4.0)));
  double slowness = 0.0;
  for (int s = 0; s < samples; ++s) {
    const double u = (s + 0.5) / samples;
    const int ix = static_cast<int>(std::lround(from.ix + u * (to.ix - from.ix)));
    const int iy = static_cast<int>(std::lround(from.iy + u * (to.iy - from.iy)));
    slowness += 1.0 / std::max(speed.values(iy, ix), kMinSpeed);
  }
  return length * slowness / samples;
}

ArrivalField solve_eikonal(const SpeedField& speed, std::span<const Cell> sources,
                           const EikonalOptions& options) {
  if (sources.empty()) throw Error("eikonal solve needs at least one source cell");
  const int nx = speed.nx();
  const int ny = speed.ny();
  if (nx < 1 || ny < 1) throw Error("speed field is empty");

  enum class State : unsigned char { Far, Trial, Known };
  ArrivalField out;
  out.time = Matrix::Constant(ny, nx, kInf);
  out.prescribed = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(ny, nx, false);
  out.accepted_order.reserve(static_cast<std::size_t>(nx) * ny);
  std::vector<State> state(static_cast<std::size_t>(nx) * ny, State::Far);
  auto idx = [nx](int ix, int iy) { return static_cast<std::size_t>(iy) * nx + ix; };
  auto speed_at = [&](int ix, int iy) { return std::max(speed.values(iy, ix), kMinSpeed); };

  using Entry = std::pair<double, int>;  // (time, flat index)
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;

  const int reach = static_cast<int>(std::floor(options.seed_radius_cells));
  for (const auto& src : sources) {
    if (src.ix < 0 || src.iy < 0 || src.ix >= nx || src.iy >= ny) {
      throw Error("source cell outside grid");
    }
    for (int iy = std::max(0, src.iy - reach); iy <= std::min(ny - 1, src.iy + reach); ++iy) {
      for (int ix = std::max(0, src.ix - reach); ix <= std::min(nx - 1, src.ix + reach); ++ix) {
        if (std::hypot(ix - src.ix, iy - src.iy) > options.seed_radius_cells) continue;
        const double t = straight_ray_time(speed, src, {ix, iy});
        if (t < out.time(iy, ix)) out.time(iy, ix) = t;
        out.prescribed(iy, ix) = true;
      }
    }
  }
  for (int iy = 0; iy < ny; ++iy) {
    for (int ix = 0; ix < nx; ++ix) {
      if (!out.prescribed(iy, ix)) continue;
      state[idx(ix, iy)] = State::Trial;
      heap.emplace(out.time(iy, ix), static_cast<int>(idx(ix, iy)));
    }
  }

  auto known_time = [&](int ix, int iy) {
    if (ix < 0 || iy < 0 || ix >= nx || iy >= ny) return kInf;
    return state[idx(ix, iy)] == State::Known ? out.time(iy, ix) : kInf;
  };

  constexpr int kOffsets[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
  while (!heap.empty()) {
    const auto [t, flat] = heap.top();
    heap.pop();
    const int ix = flat % nx;
    const int iy = flat / nx;
    if (state[static_cast<std::size_t>(flat)] == State::Known || t > out.time(iy, ix)) continue;
    state[static_cast<std::size_t>(flat)] = State::Known;
    out.accepted_order.push_back(t);

    for (const auto& off : kOffsets) {
      const int jx = ix + off[0];
      const int jy = iy + off[1];
      if (jx < 0 || jy < 0 || jx >= nx || jy >= ny) continue;
      auto& st = state[idx(jx, jy)];
      if (st == State::Known || out.prescribed(jy, jx)) continue;
      const double tx = std::min(known_time(jx - 1, jy), known_time(jx + 1, jy));
      const double ty = std::min(known_time(jx, jy - 1), known_time(jx, jy + 1));
      const double cand = upwind_update(tx, ty, speed.dx, speed.dy, speed_at(jx, jy));
      if (cand < out.time(jy, jx)) {
        out.time(jy, jx) = cand;
        st = State::Trial;
        heap.emplace(cand, static_cast<int>(idx(jx, jy)));
      }
    }
  }
  return out;
}

void GraphBuildConfig::validate() const {
  if (k < 1) throw Error("graph search needs k >= 1");
  if (sectors != 4 && sectors != 8) throw Error("sector count must be 4 or 8");
}

int sector_of(double dx, double dy, int sectors) {
  double deg = std::atan2(dy, dx) * 180.0 / std::numbers::pi;
  if (deg < 0.0) deg += 360.0;
  if (deg >= 360.0) deg -= 360.0;
  const double width = 360.0 / sectors;
  return std::min(sectors - 1, static_cast<int>(std::floor(deg / width)));
}

namespace {

GraphResult build_graph_impl(const SpeedField& speed, const WellNetwork& wells,
                             const GraphBuildConfig& config) {
  wells.validate();
  config.validate();
  const auto ni = static_cast<Eigen::Index>(wells.num_injectors());
  const auto np = static_cast<Eigen::Index>(wells.num_producers());
  const double width = speed.nx() * speed.dx;
  const double height = speed.ny() * speed.dy;
  auto cell_of = [&](const Well& w) {
    if (!(w.x >= 0.0 && w.y >= 0.0 && w.x < width && w.y < height)) {
      throw Error("well '" + w.id + "' lies outside the grid");
    }
    return Cell{std::min(speed.nx() - 1, static_cast<int>(w.x / speed.dx)),
                std::min(speed.ny() - 1, static_cast<int>(w.y / speed.dy))};
  };

  GraphResult result;
  result.adjacency.values = Matrix::Zero(ni, np);
  result.adjacency.injector_ids = wells.injector_ids();
  result.adjacency.producer_ids = wells.producer_ids();
  result.producer_arrival.resize(ni, np);
  result.sector.resize(ni, np);

  for (Eigen::Index i = 0; i < ni; ++i) {
    const auto& inj = wells.injectors[static_cast<std::size_t>(i)];
    const Cell source = cell_of(inj);
    const std::array<Cell, 1> sources{source};
    const auto arrival = solve_eikonal(speed, sources, config.eikonal);

    std::vector<std::vector<Eigen::Index>> by_sector(static_cast<std::size_t>(config.sectors));
    for (Eigen::Index j = 0; j < np; ++j) {
      const auto& prd = wells.producers[static_cast<std::size_t>(j)];
      const Cell c = cell_of(prd);
      result.producer_arrival(i, j) = arrival.time(c.iy, c.ix);
      if (c == source) {
        result.producer_arrival(i, j) = 0.0;
        result.sector(i, j) = -1;
        result.adjacency.values(i, j) = 1.0;
        result.warnings.push_back("producer '" + prd.id + "' shares a cell with injector '" +
                                  inj.id + "'; connected with zero arrival");
        continue;
      }
      const int s = sector_of(prd.x - inj.x, prd.y - inj.y, config.sectors);
      result.sector(i, j) = s;
      by_sector[static_cast<std::size_t>(s)].push_back(j);
    }
    for (auto& members : by_sector) {
      // Ties in arrival go to the lower producer index.
      std::stable_sort(members.begin(), members.end(), [&](Eigen::Index a, Eigen::Index b) {
        return result.producer_arrival(i, a) < result.producer_arrival(i, b);
      });
      const auto keep = std::min<std::size_t>(members.size(), static_cast<std::size_t>(config.k));
      for (std::size_t m = 0; m < keep; ++m) result.adjacency.values(i, members[m]) = 1.0;
    }
  }
  return result;
}

}  // namespace

GraphResult build_graph(const SpeedField& speed, const WellNetwork& wells,
                        const GraphBuildConfig& config) {
  return build_graph_impl(speed, wells, config);
}

GraphResult build_graph(const ReservoirGrid& grid, const WellNetwork& wells,
                        const GraphBuildConfig& config) {
  return build_graph_impl(speed_field(grid), wells, config);
}

ReservoirGrid read_grid(const std::filesystem::path& dir) {
  std::ifstream in(dir / "grid.json");
  if (!in) throw Error("cannot open '" + (dir / "grid.json").string() + "'");
  const auto meta = nlohmann::json::parse(in);
  ReservoirGrid g;
  g.nx = meta.at("nx").get<int>();
  g.ny = meta.at("ny").get<int>();
  g.dx = meta.at("dx").get<double>();
  g.dy = meta.at("dy").get<double>();
  g.thickness = meta.value("dz", g.thickness);
  g.fluid.viscosity = meta.at("mu_cp").get<double>();
  g.fluid.total_compressibility = meta.at("ct_per_psi").get<double>();
  g.perm = io::read_raster(dir / "perm.csv");
  g.phi = io::read_raster(dir / "phi.csv");
  g.validate();
  return g;
}

void write_grid(const std::filesystem::path& dir, const ReservoirGrid& g) {
  g.validate();
  std::filesystem::create_directories(dir);
  nlohmann::json meta = {{"nx", g.nx},         {"ny", g.ny},
                         {"dx", g.dx},         {"dy", g.dy},
                         {"dz", g.thickness},  {"mu_cp", g.fluid.viscosity},
                         {"ct_per_psi", g.fluid.total_compressibility}};
  std::ofstream out(dir / "grid.json");
  if (!out) throw Error("cannot write '" + (dir / "grid.json").string() + "'");
  out << meta.dump(2) << '\n';
  io::write_raster(dir / "perm.csv", g.perm);
  io::write_raster(dir / "phi.csv", g.phi);
}

}  // namespace pignn::eikonal
