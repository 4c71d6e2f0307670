#pragma once

// File formats shared by every stage of the pipeline.
//
//   wells CSV         well_id,kind,x,y        (kind is INJ or PRD)
//   panel CSV         time_days,I_<id>...,pI_<id>...,q_<id>...,pwf_<id>...
//   connectivity CSV  header row of producer ids, one row per injector id

#include "pignn/core.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace pignn::io {

/// Parsed CSV text: a header row plus string cells.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

CsvTable parse_csv(std::istream& in);
CsvTable read_csv(const std::filesystem::path& path);
double parse_double(const std::string& cell);
/// Shortest text that round-trips the double exactly.
std::string format_double(double value);

WellNetwork read_wells(const std::filesystem::path& path);
void write_wells(const std::filesystem::path& path, const WellNetwork& wells);

TimeSeriesPanel read_panel(const std::filesystem::path& path);
TimeSeriesPanel parse_panel(std::istream& in);
void write_panel(const std::filesystem::path& path, const TimeSeriesPanel& panel);
void write_panel(std::ostream& out, const TimeSeriesPanel& panel);

ConnectivityMatrix read_connectivity(const std::filesystem::path& path);
ConnectivityMatrix parse_connectivity(std::istream& in);
void write_connectivity(const std::filesystem::path& path, const ConnectivityMatrix& m);
void write_connectivity(std::ostream& out, const ConnectivityMatrix& m);

/// Row-major raster, one grid row per line, no header.
Matrix read_raster(const std::filesystem::path& path);
void write_raster(const std::filesystem::path& path, const Matrix& raster);

}  // namespace pignn::io
