#pragma once

// JSON-configured stages shared by the command-line tool and the Python
// module. Every stage takes one config object, writes its artifacts and
// returns an exit status (0 only when all requested work succeeded).
// Unknown config keys are rejected so typos fail loudly.

#include "pignn/bench.hpp"
#include "pignn/synth.hpp"

#include "json.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>

namespace pignn::pipeline {

using Json = nlohmann::json;

synth::ChannelFieldConfig channel_config(const Json& j);
Json to_json(const synth::ChannelFieldConfig& c);
/// Missing keys fall back to `base`.
synth::Schedule schedule_from_json(const Json& j, const synth::Schedule& base);
Json to_json(const synth::Schedule& s);
synth::SimulatorOptions simulator_options(const Json& j);
Json to_json(const synth::SimulatorOptions& o);
eikonal::GraphBuildConfig graph_config(const Json& j);
SplitFractions split_fractions(const Json& j);
Json to_json(const SplitFractions& f);
gnn::ModelConfig model_config(const Json& j);
Json to_json(const gnn::ModelConfig& c);
gnn::LossConfig loss_config(const Json& j);
Json to_json(const gnn::LossConfig& c);
/// `seeds` is either a count (seeds 1000, 1001, ...) or an explicit list.
train::TrainConfig train_config(const Json& j);
Json to_json(const train::TrainConfig& c);
crm::FitOptions fit_options(const Json& j);
bench::BenchConfig bench_config(const Json& j);

/// Two injectors, four producers; the reference CRM world.
crm::CrmParams reference_crm_params();
crm::CrmParams crm_params_from_json(const Json& j);
Json to_json(const crm::CrmParams& p);

/// Throws unless `dir` is missing, empty, or `force` is set.
void prepare_output_dir(const std::filesystem::path& dir, bool force);
void prepare_output_file(const std::filesystem::path& file, bool force);

/// Loads a case directory written by synth. The prior comes from the case's
/// adjacency file when present, else from the graph builder on grid + wells.
bench::CaseInput load_case(const std::filesystem::path& dir, const eikonal::GraphBuildConfig& graph);

struct GradcheckSummary {
  double loss_error = 0.0;        // max relative error of the loss gradient
  Eigen::Index loss_worst = -1;
  double mixed_error = 0.0;       // d/dw (dq/dt) against nested differences
  Eigen::Index mixed_worst = -1;
  Eigen::Index parameters = 0;
};

/// Runs both checks on the 2x4, 50-row CRM-world fixture.
GradcheckSummary run_gradcheck_fixture(const gnn::ModelConfig& model, const gnn::LossConfig& loss,
                                       std::uint64_t seed, double h = 1e-5, double mixed_h = 1e-3,
                                       double time_step = 1e-3);

int run_synth(const Json& cfg, std::ostream& log);
int run_graph(const Json& cfg, std::ostream& log);
int run_crm_fit(const Json& cfg, std::ostream& log);
int run_train(const Json& cfg, std::ostream& log);
int run_evaluate(const Json& cfg, std::ostream& log);
int run_bench(const Json& cfg, std::ostream& log);
int run_gradcheck(const Json& cfg, std::ostream& log);
int run_plots(const Json& cfg, std::ostream& log);

/// Dispatches on the subcommand name.
int run_stage(const std::string& name, const Json& cfg, std::ostream& log);

Json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const Json& value);

}  // namespace pignn::pipeline
