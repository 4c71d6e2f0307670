#include "pignn/csv_io.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <sstream>

namespace pignn::io {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    std::size_t start = cell.find_first_not_of(' ');
    cells.push_back(start == std::string::npos ? std::string{} : cell.substr(start));
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "' for reading");
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  return out;
}

bool starts_with(const std::string& s, const std::string& prefix) {
  return s.rfind(prefix, 0) == 0;
}

}  // namespace

CsvTable parse_csv(std::istream& in) {
  CsvTable table;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (!have_header) {
      table.header = std::move(cells);
      have_header = true;
    } else {
      if (cells.size() != table.header.size()) {
        throw Error("CSV row " + std::to_string(table.rows.size() + 1) + " has " +
                    std::to_string(cells.size()) + " cells, header has " +
                    std::to_string(table.header.size()));
      }
      table.rows.push_back(std::move(cells));
    }
  }
  if (!have_header) throw Error("CSV input is empty");
  return table;
}

CsvTable read_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  return parse_csv(in);
}

double parse_double(const std::string& cell) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = first + cell.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last) throw Error("cannot parse number '" + cell + "'");
  return value;
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc{}) throw Error("number formatting failed");
  return std::string(buf, ptr);
}

WellNetwork read_wells(const std::filesystem::path& path) {
  const auto table = read_csv(path);
  if (table.header != std::vector<std::string>{"well_id", "kind", "x", "y"}) {
    throw Error("wells CSV header must be well_id,kind,x,y");
  }
  WellNetwork wells;
  for (const auto& row : table.rows) {
    Well w{row[0], parse_double(row[2]), parse_double(row[3])};
    if (row[1] == "INJ") {
      wells.injectors.push_back(w);
    } else if (row[1] == "PRD") {
      wells.producers.push_back(w);
    } else {
      throw Error("unknown well kind '" + row[1] + "'");
    }
  }
  wells.validate();
  return wells;
}

void write_wells(const std::filesystem::path& path, const WellNetwork& wells) {
  auto out = open_out(path);
  out << "well_id,kind,x,y\n";
  for (const auto& w : wells.injectors) {
    out << w.id << ",INJ," << format_double(w.x) << ',' << format_double(w.y) << '\n';
  }
  for (const auto& w : wells.producers) {
    out << w.id << ",PRD," << format_double(w.x) << ',' << format_double(w.y) << '\n';
  }
}

TimeSeriesPanel parse_panel(std::istream& in) {
  const auto table = parse_csv(in);
  if (table.header.empty() || table.header[0] != "time_days") {
    throw Error("panel CSV must start with a time_days column");
  }
  struct Column {
    int kind;  // 0 I, 1 pI, 2 q, 3 pwf
    std::string id;
  };
  std::vector<Column> columns;
  std::vector<std::string> inj_ids;
  std::vector<std::string> prd_ids;
  std::vector<std::string> pinj_ids;
  std::vector<std::string> pprd_ids;
  for (std::size_t c = 1; c < table.header.size(); ++c) {
    const auto& h = table.header[c];
    if (starts_with(h, "pwf_")) {
      columns.push_back({3, h.substr(4)});
      pprd_ids.push_back(h.substr(4));
    } else if (starts_with(h, "pI_")) {
      columns.push_back({1, h.substr(3)});
      pinj_ids.push_back(h.substr(3));
    } else if (starts_with(h, "q_")) {
      columns.push_back({2, h.substr(2)});
      prd_ids.push_back(h.substr(2));
    } else if (starts_with(h, "I_")) {
      columns.push_back({0, h.substr(2)});
      inj_ids.push_back(h.substr(2));
    } else {
      throw Error("unrecognized panel column '" + h + "'");
    }
  }
  if (inj_ids != pinj_ids || prd_ids != pprd_ids) {
    throw Error("panel rate and pressure columns must list the same wells in the same order");
  }
  const auto n = static_cast<Eigen::Index>(table.rows.size());
  const auto ni = static_cast<Eigen::Index>(inj_ids.size());
  const auto np = static_cast<Eigen::Index>(prd_ids.size());
  TimeSeriesPanel panel;
  panel.times.resize(n);
  panel.injection.resize(n, ni);
  panel.injector_bhp.resize(n, ni);
  panel.production.resize(n, np);
  panel.producer_bhp.resize(n, np);
  panel.injector_ids = inj_ids;
  panel.producer_ids = prd_ids;
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& row = table.rows[static_cast<std::size_t>(r)];
    panel.times[r] = parse_double(row[0]);
    std::array<Eigen::Index, 4> next{0, 0, 0, 0};
    for (std::size_t c = 0; c < columns.size(); ++c) {
      const double v = parse_double(row[c + 1]);
      const int kind = columns[c].kind;
      auto& slot = next[static_cast<std::size_t>(kind)];
      switch (kind) {
        case 0: panel.injection(r, slot) = v; break;
        case 1: panel.injector_bhp(r, slot) = v; break;
        case 2: panel.production(r, slot) = v; break;
        default: panel.producer_bhp(r, slot) = v; break;
      }
      ++slot;
    }
  }
  panel.validate();
  return panel;
}

TimeSeriesPanel read_panel(const std::filesystem::path& path) {
  auto in = open_in(path);
  return parse_panel(in);
}

void write_panel(std::ostream& out, const TimeSeriesPanel& p) {
  out << "time_days";
  for (const auto& id : p.injector_ids) out << ",I_" << id;
  for (const auto& id : p.injector_ids) out << ",pI_" << id;
  for (const auto& id : p.producer_ids) out << ",q_" << id;
  for (const auto& id : p.producer_ids) out << ",pwf_" << id;
  out << '\n';
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    out << format_double(p.times[r]);
    for (Eigen::Index c = 0; c < p.injection.cols(); ++c) out << ',' << format_double(p.injection(r, c));
    for (Eigen::Index c = 0; c < p.injector_bhp.cols(); ++c) out << ',' << format_double(p.injector_bhp(r, c));
    for (Eigen::Index c = 0; c < p.production.cols(); ++c) out << ',' << format_double(p.production(r, c));
    for (Eigen::Index c = 0; c < p.producer_bhp.cols(); ++c) out << ',' << format_double(p.producer_bhp(r, c));
    out << '\n';
  }
}

void write_panel(const std::filesystem::path& path, const TimeSeriesPanel& panel) {
  auto out = open_out(path);
  write_panel(out, panel);
}

ConnectivityMatrix parse_connectivity(std::istream& in) {
  const auto table = parse_csv(in);
  if (table.header.size() < 2) throw Error("connectivity CSV needs at least one producer column");
  ConnectivityMatrix m;
  m.producer_ids.assign(table.header.begin() + 1, table.header.end());
  const auto ni = static_cast<Eigen::Index>(table.rows.size());
  const auto np = static_cast<Eigen::Index>(m.producer_ids.size());
  if (ni < 1) throw Error("connectivity CSV needs at least one injector row");
  m.values.resize(ni, np);
  for (Eigen::Index i = 0; i < ni; ++i) {
    const auto& row = table.rows[static_cast<std::size_t>(i)];
    m.injector_ids.push_back(row[0]);
    for (Eigen::Index j = 0; j < np; ++j) {
      m.values(i, j) = parse_double(row[static_cast<std::size_t>(j + 1)]);
    }
  }
  return m;
}

ConnectivityMatrix read_connectivity(const std::filesystem::path& path) {
  auto in = open_in(path);
  return parse_connectivity(in);
}

void write_connectivity(std::ostream& out, const ConnectivityMatrix& m) {
  if (static_cast<Eigen::Index>(m.injector_ids.size()) != m.values.rows() ||
      static_cast<Eigen::Index>(m.producer_ids.size()) != m.values.cols()) {
    throw Error("connectivity ids do not match matrix shape");
  }
  out << "injector";
  for (const auto& id : m.producer_ids) out << ',' << id;
  out << '\n';
  for (Eigen::Index i = 0; i < m.values.rows(); ++i) {
    out << m.injector_ids[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < m.values.cols(); ++j) out << ',' << format_double(m.values(i, j));
    out << '\n';
  }
}

void write_connectivity(const std::filesystem::path& path, const ConnectivityMatrix& m) {
  auto out = open_out(path);
  write_connectivity(out, m);
}

Matrix read_raster(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    for (const auto& cell : split_line(line)) row.push_back(parse_double(cell));
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw Error("raster '" + path.string() + "' has ragged rows");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw Error("raster '" + path.string() + "' is empty");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      m(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    }
  }
  return m;
}

void write_raster(const std::filesystem::path& path, const Matrix& raster) {
  auto out = open_out(path);
  for (Eigen::Index r = 0; r < raster.rows(); ++r) {
    for (Eigen::Index c = 0; c < raster.cols(); ++c) {
      if (c) out << ',';
      out << format_double(raster(r, c));
    }
    out << '\n';
  }
}

}  // namespace pignn::io
