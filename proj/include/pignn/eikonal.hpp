#pragma once

// Fast marching solution of F |grad t| = 1 on reservoir rasters, and the
// sector-search construction of the injector -> producer prior graph.

#include "pignn/core.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace pignn::eikonal {

struct Cell {
  int ix = 0;
  int iy = 0;
  bool operator==(const Cell&) const = default;
};

/// 2D property raster. Matrices are [ny x nx], row iy covers y in
/// [iy*dy, (iy+1)*dy).
struct ReservoirGrid {
  int nx = 0;
  int ny = 0;
  double dx = 1.0;
  double dy = 1.0;
  double thickness = 20.0;  // ft, used only by the flow simulator
  Matrix perm;              // mD
  Matrix phi;               // fraction
  FluidProps fluid;

  void validate() const;
  bool contains(double x, double y) const;
  /// Cell holding a point; throws when the point is outside the grid.
  Cell cell_of(double x, double y) const;
  int index(Cell c) const { return c.iy * nx + c.ix; }
};

/// Diffusive front speed sqrt(k / (mu c_t phi)), in length per square root of
/// time for the raw field units.
struct SpeedField {
  Matrix values;  // [ny x nx]
  double dx = 1.0;
  double dy = 1.0;

  int nx() const { return static_cast<int>(values.cols()); }
  int ny() const { return static_cast<int>(values.rows()); }
};

struct ArrivalField {
  Matrix time;  // [ny x nx]; zero on the sources
  /// Cells whose value was prescribed (sources and the seeded disc around
  /// them) rather than computed by the upwind update.
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> prescribed;
  /// Arrival values in the order the marcher accepted cells.
  std::vector<double> accepted_order;
};

struct EikonalOptions {
  /// Cells within this many cell widths of a source are seeded with the
  /// straight-ray travel time integral of 1/F and held fixed. Zero seeds only
  /// the source cell.
  double seed_radius_cells = 8.0;
};

inline constexpr double kMinSpeed = 1e-12;

SpeedField speed_field(const ReservoirGrid& grid);

/// First-order fast marching from one or more source cells.
ArrivalField solve_eikonal(const SpeedField& speed, std::span<const Cell> sources,
                           const EikonalOptions& options = {});

/// Travel time along the straight segment between two cell centres.
double straight_ray_time(const SpeedField& speed, Cell from, Cell to);

/// The upwind quadratic update for one cell given the smaller x- and
/// y-neighbour arrivals (infinity when absent).
double upwind_update(double tx, double ty, double dx, double dy, double speed);

struct GraphBuildConfig {
  int k = 1;        // producers kept per sector
  int sectors = 4;  // 4 (quadrant) or 8 (octant)
  EikonalOptions eikonal;

  void validate() const;
};

/// Binary injector -> producer prior.
struct AdjacencyMatrix {
  Matrix values;  // [N_I x N_P] of 0/1
  std::vector<std::string> injector_ids;
  std::vector<std::string> producer_ids;

  ConnectivityMatrix as_connectivity() const {
    return {values, injector_ids, producer_ids};
  }
};

struct GraphResult {
  AdjacencyMatrix adjacency;
  Matrix producer_arrival;  // [N_I x N_P] arrival at each producer cell
  Eigen::MatrixXi sector;   // [N_I x N_P] sector index of each producer
  std::vector<std::string> warnings;
};

/// Sector index for the direction from an injector to a producer. Sectors
/// are half-open [s*w, (s+1)*w) degrees counterclockwise from +x.
int sector_of(double dx, double dy, int sectors);

GraphResult build_graph(const ReservoirGrid& grid, const WellNetwork& wells,
                        const GraphBuildConfig& config);
GraphResult build_graph(const SpeedField& speed, const WellNetwork& wells,
                        const GraphBuildConfig& config);

/// grid.json + perm.csv + phi.csv inside a directory.
ReservoirGrid read_grid(const std::filesystem::path& dir);
void write_grid(const std::filesystem::path& dir, const ReservoirGrid& grid);

}  // namespace pignn::eikonal
