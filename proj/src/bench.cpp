#include "pignn/bench.hpp"

#include "pignn/csv_io.hpp"
#include "pignn/svg.hpp"

#include "json.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace pignn::bench {

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

Vector test_rmse(const Matrix& observed, const Matrix& predicted, IndexRange test) {
  Vector r(observed.cols());
  for (Eigen::Index j = 0; j < observed.cols(); ++j) {
    r[j] = rmse(Vector(observed.col(j).segment(test.begin, test.size())),
                Vector(predicted.col(j).segment(test.begin, test.size())));
  }
  return r;
}

const char* kColors[] = {"#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e"};

}  // namespace

const char* method_id(Method m) {
  switch (m) {
    case Method::PiGnnExpert: return "pignn_expert";
    case Method::PiGnnSelfLearned: return "pignn_self";
    case Method::GnnBaseline: return "gnn";
    case Method::Crm: return "crm";
  }
  return "unknown";
}

const char* method_label(Method m) {
  switch (m) {
    case Method::PiGnnExpert: return "PI-GNN (expert graph)";
    case Method::PiGnnSelfLearned: return "PI-GNN (self-learned)";
    case Method::GnnBaseline: return "GNN";
    case Method::Crm: return "CRM";
  }
  return "unknown";
}

Method method_from_id(const std::string& id) {
  for (auto m : kMethods) {
    if (id == method_id(m)) return m;
  }
  throw Error("unknown method '" + id + "'");
}

int CaseResult::best() const {
  int best = -1;
  for (std::size_t k = 0; k < methods.size(); ++k) {
    if (!methods[k].ok) continue;
    if (best < 0 || methods[k].total < methods[static_cast<std::size_t>(best)].total) best = static_cast<int>(k);
  }
  return best;
}

const MethodResult* CaseResult::find(Method m) const {
  for (const auto& r : methods) {
    if (r.method == m) return &r;
  }
  return nullptr;
}

Matrix crm_prediction(const crm::CrmParams& params, const TimeSeriesPanel& panel, const DataSplit& split) {
  const auto inputs = crm::CrmInputs::from_panel(panel);
  Matrix out(panel.rows(), panel.num_producers());
  const auto b = split.train.begin;
  const auto e = split.train.end;
  out.middleRows(b, e - b) =
      crm::crm_forecast(params, inputs.slice(b, e), panel.production.row(b).transpose());
  const auto last = e - 1;
  const auto tail = crm::crm_forecast(params, inputs.slice(last, panel.rows()),
                                      panel.production.row(last).transpose());
  out.middleRows(last, tail.rows()) = tail;
  if (b > 0) out.topRows(b).setConstant(std::nan(""));
  return out;
}

MethodResult run_method(Method method, const CaseInput& input, const DataSplit& split,
                        const BenchConfig& config) {
  MethodResult r;
  r.method = method;
  const auto start = std::chrono::steady_clock::now();
  try {
    const auto& panel = input.panel;
    if (method == Method::Crm) {
      const auto fit = crm::crm_fit(panel, split, input.total_compressibility, config.crm);
      r.prediction = crm_prediction(fit.params, panel, split);
      r.connectivity = fit.params.connectivity;
    } else {
      gnn::ModelConfig model = config.model;
      gnn::LossConfig loss = config.loss;
      model.mode = method == Method::PiGnnExpert ? gnn::GraphMode::Expert : gnn::GraphMode::SelfLearned;
      if (method == Method::GnnBaseline) loss.lambda_f = 0.0;
      const auto ens = train::train_ensemble(model, panel, split, input.prior, input.total_compressibility,
                                             config.train, loss, config.threads);
      r.prediction = ens.mean_q;
      r.connectivity = ens.mean_connectivity;
    }
    r.rmse = test_rmse(panel.production, r.prediction, split.test);
    r.total = total_rmse(std::span<const double>(r.rmse.data(), static_cast<std::size_t>(r.rmse.size())));
    if (!std::isfinite(r.total)) throw Error("non-finite test RMSE");
    r.ok = true;
  } catch (const std::exception& e) {
    r.ok = false;
    r.error = e.what();
  }
  r.seconds = seconds_since(start);
  return r;
}

CaseResult run_case(const CaseInput& input, const BenchConfig& config) {
  input.panel.validate();
  CaseResult c;
  c.name = input.name;
  c.injector_ids = input.panel.injector_ids;
  c.producer_ids = input.panel.producer_ids;
  c.split = split_panel(input.panel, config.split);
  c.panel = input.panel;
  c.prior = input.prior;
  for (auto m : config.methods) c.methods.push_back(run_method(m, input, c.split, config));
  return c;
}

BenchmarkReport run_benchmark(const std::vector<CaseInput>& cases, const BenchConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  BenchmarkReport report;
  report.seeds = config.train.seeds;
  std::ostringstream desc;
  desc << config.split.train << ',' << config.split.validation << ',' << config.split.test << ';'
       << config.model.gcn_width << ',' << config.model.hidden_width << ',' << config.model.hidden_layers << ','
       << config.model.use_injector_bhp << ';' << config.loss.m << ',' << config.loss.lambda_q << ','
       << config.loss.lambda_p << ',' << config.loss.lambda_f << ';' << config.train.learning_rate << ','
       << config.train.max_epochs << ',' << config.train.patience << ',' << config.train.min_epochs << ',' << config.train.clip_norm << ';'
       << config.crm.multistarts << ',' << config.crm.seed;
  for (auto s : config.train.seeds) desc << ',' << s;
  for (const auto& c : cases) desc << ';' << c.name;
  report.config_hash = hash_text(desc.str());
  for (const auto& c : cases) report.cases.push_back(run_case(c, config));
  report.seconds = seconds_since(start);
  return report;
}

std::string export_table_text(const BenchmarkReport& report) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  for (const auto& c : report.cases) {
    const int best = c.best();
    os << c.name << '\n';
    os << std::left << std::setw(24) << "Method";
    for (const auto& id : c.producer_ids) os << std::right << std::setw(12) << id;
    os << std::right << std::setw(14) << "Total" << '\n';
    for (std::size_t k = 0; k < c.methods.size(); ++k) {
      const auto& r = c.methods[k];
      os << std::left << std::setw(24) << method_label(r.method);
      if (!r.ok) {
        os << "failed: " << r.error << '\n';
        continue;
      }
      for (Eigen::Index j = 0; j < r.rmse.size(); ++j) os << std::right << std::setw(12) << r.rmse[j];
      std::ostringstream total;
      total << std::fixed << std::setprecision(3);
      if (static_cast<int>(k) == best) {
        total << "**" << r.total << "**";
      } else {
        total << r.total;
      }
      os << std::right << std::setw(14) << total.str() << '\n';
    }
    os << '\n';
  }
  return os.str();
}

std::string export_table_csv(const BenchmarkReport& report) {
  std::ostringstream os;
  os << "case,method,status,producer,rmse\n";
  for (const auto& c : report.cases) {
    for (const auto& r : c.methods) {
      const std::string status = r.ok ? "ok" : "failed";
      if (r.ok) {
        for (std::size_t j = 0; j < c.producer_ids.size(); ++j) {
          os << c.name << ',' << method_id(r.method) << ',' << status << ',' << c.producer_ids[j] << ','
             << io::format_double(r.rmse[static_cast<Eigen::Index>(j)]) << '\n';
        }
        os << c.name << ',' << method_id(r.method) << ',' << status << ",Total," << io::format_double(r.total) << '\n';
      } else {
        os << c.name << ',' << method_id(r.method) << ',' << status << ",Total,nan\n";
      }
    }
  }
  return os.str();
}

std::vector<CsvRow> parse_table_csv(const std::string& text) {
  std::istringstream in(text);
  const auto table = io::parse_csv(in);
  if (table.header != std::vector<std::string>{"case", "method", "status", "producer", "rmse"}) {
    throw Error("report CSV header is not case,method,status,producer,rmse");
  }
  std::vector<CsvRow> rows;
  for (const auto& r : table.rows) {
    const double v = r[4] == "nan" ? std::nan("") : io::parse_double(r[4]);
    rows.push_back({r[0], r[1], r[2], r[3], v});
  }
  return rows;
}

void write_case_plots(const std::filesystem::path& dir, const CaseResult& c) {
  const auto& panel = c.panel;
  const std::vector<double> t(panel.times.data(), panel.times.data() + panel.times.size());
  for (std::size_t j = 0; j < c.producer_ids.size(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    std::vector<svg::Series> series;
    svg::Series obs{"observed", t, {}, kColors[0], false};
    for (Eigen::Index k = 0; k < panel.rows(); ++k) obs.y.push_back(panel.production(k, jj));
    series.push_back(std::move(obs));
    int color = 1;
    for (const auto& r : c.methods) {
      if (!r.ok) continue;
      svg::Series s{method_label(r.method), t, {}, kColors[color++ % 5], true};
      for (Eigen::Index k = 0; k < panel.rows(); ++k) s.y.push_back(std::max(0.0, r.prediction(k, jj)));
      series.push_back(std::move(s));
    }
    svg::LineChartOptions opt;
    opt.title = c.name + " producer " + c.producer_ids[j];
    opt.divider = panel.times[c.split.test.begin];
    svg::write_text(dir / ("producer_" + c.producer_ids[j] + ".svg"), svg::line_chart(series, opt));
  }
  auto heat = [&](const std::string& id, const std::string& title, const Matrix& values) {
    svg::HeatmapOptions opt;
    opt.title = title;
    opt.row_labels = c.injector_ids;
    opt.col_labels = c.producer_ids;
    svg::write_text(dir / ("connectivity_" + id + ".svg"), svg::heatmap(values, opt));
  };
  heat("expert_prior", "expert prior", c.prior);
  for (const auto& r : c.methods) {
    if (r.ok) heat(method_id(r.method), method_label(r.method), r.connectivity);
  }
}

void write_report(const std::filesystem::path& dir, const BenchmarkReport& report) {
  std::filesystem::create_directories(dir);
  svg::write_text(dir / "report.csv", export_table_csv(report));
  std::ostringstream txt;
  txt << export_table_text(report);
  txt << "seeds:";
  for (auto s : report.seeds) txt << ' ' << s;
  txt << "\nconfig hash: " << report.config_hash << '\n';
  svg::write_text(dir / "report.txt", txt.str());
  nlohmann::json meta;
  meta["config_hash"] = report.config_hash;
  meta["seeds"] = report.seeds;
  meta["seconds"] = report.seconds;
  for (const auto& c : report.cases) {
    for (const auto& r : c.methods) {
      meta["methods"].push_back({{"case", c.name}, {"method", method_id(r.method)}, {"seconds", r.seconds}});
    }
  }
  svg::write_text(dir / "meta.json", meta.dump(2) + "\n");
  for (const auto& c : report.cases) {
    const auto cdir = dir / c.name;
    std::filesystem::create_directories(cdir);
    io::write_panel(cdir / "observed.csv", c.panel);
    nlohmann::json info;
    info["name"] = c.name;
    info["split"] = {{"train", {c.split.train.begin, c.split.train.end}},
                     {"validation", {c.split.validation.begin, c.split.validation.end}},
                     {"test", {c.split.test.begin, c.split.test.end}}};
    for (const auto& r : c.methods) {
      info["methods"].push_back({{"id", method_id(r.method)}, {"ok", r.ok}, {"error", r.error}});
    }
    svg::write_text(cdir / "case.json", info.dump(2) + "\n");
    io::write_connectivity(cdir / "connectivity_expert_prior.csv", {c.prior, c.injector_ids, c.producer_ids});
    for (const auto& r : c.methods) {
      if (!r.ok) continue;
      io::write_connectivity(cdir / (std::string("connectivity_") + method_id(r.method) + ".csv"),
                             {r.connectivity, c.injector_ids, c.producer_ids});
      TimeSeriesPanel pred = c.panel;
      pred.production = r.prediction.unaryExpr([](double v) { return std::isfinite(v) ? std::max(0.0, v) : 0.0; });
      io::write_panel(cdir / (std::string("prediction_") + method_id(r.method) + ".csv"), pred);
    }
    write_case_plots(cdir, c);
  }
}

CaseResult read_case_result(const std::filesystem::path& dir) {
  std::ifstream in(dir / "case.json");
  if (!in) throw Error("missing " + (dir / "case.json").string());
  const auto info = nlohmann::json::parse(in);
  CaseResult c;
  c.name = info.at("name").get<std::string>();
  auto range = [&](const char* key) {
    const auto& r = info.at("split").at(key);
    return IndexRange{r.at(0).get<Eigen::Index>(), r.at(1).get<Eigen::Index>()};
  };
  c.split = {range("train"), range("validation"), range("test")};
  c.panel = io::read_panel(dir / "observed.csv");
  c.injector_ids = c.panel.injector_ids;
  c.producer_ids = c.panel.producer_ids;
  c.prior = io::read_connectivity(dir / "connectivity_expert_prior.csv").values;
  for (const auto& m : info.at("methods")) {
    MethodResult r;
    r.method = method_from_id(m.at("id").get<std::string>());
    r.ok = m.at("ok").get<bool>();
    r.error = m.value("error", "");
    if (r.ok) {
      const std::string id = method_id(r.method);
      r.connectivity = io::read_connectivity(dir / ("connectivity_" + id + ".csv")).values;
      r.prediction = io::read_panel(dir / ("prediction_" + id + ".csv")).production;
      r.rmse = test_rmse(c.panel.production, r.prediction, c.split.test);
      r.total = total_rmse(std::span<const double>(r.rmse.data(), static_cast<std::size_t>(r.rmse.size())));
    }
    c.methods.push_back(std::move(r));
  }
  return c;
}

std::vector<std::string> report_case_names(const std::filesystem::path& report_dir) {
  std::ifstream in(report_dir / "report.csv");
  if (!in) throw Error("missing " + (report_dir / "report.csv").string());
  std::stringstream text;
  text << in.rdbuf();
  std::vector<std::string> names;
  for (const auto& row : parse_table_csv(text.str())) {
    if (names.empty() || names.back() != row.case_name) names.push_back(row.case_name);
  }
  return names;
}

std::string hash_text(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace pignn::bench
