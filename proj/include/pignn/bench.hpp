#pragma once

// Four-method comparison over a set of cases, with table, connectivity and
// plot exports.

#include "pignn/crm.hpp"
#include "pignn/gnn.hpp"
#include "pignn/trainer.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace pignn::bench {

enum class Method { PiGnnExpert, PiGnnSelfLearned, GnnBaseline, Crm };

inline constexpr Method kMethods[] = {Method::PiGnnExpert, Method::PiGnnSelfLearned,
                                      Method::GnnBaseline, Method::Crm};

/// Short identifier used in file names and CSV rows.
const char* method_id(Method m);
/// Label used in the text table.
const char* method_label(Method m);
Method method_from_id(const std::string& id);

struct CaseInput {
  std::string name;
  TimeSeriesPanel panel;
  Matrix prior;  // binary [N_I x N_P]
  double total_compressibility = 1e-5;
};

struct BenchConfig {
  SplitFractions split;
  gnn::ModelConfig model;
  gnn::LossConfig loss;
  train::TrainConfig train;
  crm::FitOptions crm;
  int threads = 1;
  std::vector<Method> methods{std::begin(kMethods), std::end(kMethods)};
};

struct MethodResult {
  Method method = Method::Crm;
  bool ok = false;
  std::string error;
  Vector rmse;           // per producer over the test rows
  double total = 0.0;    // sum of rmse
  Matrix connectivity;   // learned or fitted F
  Matrix prediction;     // [N_T x N_P] over the full panel
  double seconds = 0.0;
};

struct CaseResult {
  std::string name;
  std::vector<std::string> injector_ids;
  std::vector<std::string> producer_ids;
  DataSplit split;
  TimeSeriesPanel panel;
  Matrix prior;
  std::vector<MethodResult> methods;

  /// Index into methods of the lowest successful total, or -1.
  int best() const;
  const MethodResult* find(Method m) const;
};

struct BenchmarkReport {
  std::vector<CaseResult> cases;
  std::vector<std::uint64_t> seeds;
  std::string config_hash;
  double seconds = 0.0;
};

/// CRM forecast over the full panel: train rows from q0 = q_obs at the first
/// training row, later rows from the last training rate.
Matrix crm_prediction(const crm::CrmParams& params, const TimeSeriesPanel& panel, const DataSplit& split);

MethodResult run_method(Method method, const CaseInput& input, const DataSplit& split,
                        const BenchConfig& config);
CaseResult run_case(const CaseInput& input, const BenchConfig& config);
BenchmarkReport run_benchmark(const std::vector<CaseInput>& cases, const BenchConfig& config);

/// Per-case blocks with producer columns and a Total column. The minimum
/// total per case is wrapped in ** **.
std::string export_table_text(const BenchmarkReport& report);
/// Long format `case,method,status,producer,rmse`; each method block ends
/// with a `Total` row. Numbers use shortest round-trip formatting.
std::string export_table_csv(const BenchmarkReport& report);

struct CsvRow {
  std::string case_name;
  std::string method;
  std::string status;
  std::string producer;
  double rmse = 0.0;
};
std::vector<CsvRow> parse_table_csv(const std::string& text);

/// report.csv, report.txt, meta.json and per case: observed.csv, case.json,
/// connectivity_<method>.csv, prediction_<method>.csv, producer_<id>.svg and
/// connectivity_<method>.svg. Only meta.json carries timings.
void write_report(const std::filesystem::path& dir, const BenchmarkReport& report);
void write_case_plots(const std::filesystem::path& dir, const CaseResult& result);

/// Rebuilds a case from the files write_report left in `dir`. Stored
/// predictions are clipped at zero, and rmse/total are recomputed from them.
/// Failed methods come back with ok = false and no prediction.
CaseResult read_case_result(const std::filesystem::path& dir);
/// Case names in report order from report.csv.
std::vector<std::string> report_case_names(const std::filesystem::path& report_dir);

std::string hash_text(const std::string& text);

}  // namespace pignn::bench
