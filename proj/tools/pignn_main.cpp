// Command-line front end. Every subcommand reads an optional --config JSON
// file; flags given on the command line override the matching config keys.

#include "pignn/pipeline.hpp"

#include "CLI11.hpp"

#include <deque>
#include <iostream>
#include <memory>
#include <variant>

namespace {

using pignn::pipeline::Json;

struct Override {
  CLI::Option* option = nullptr;
  std::string key;
  std::variant<std::string, int, double, bool> value;
};

class Subcommand {
 public:
  Subcommand(CLI::App& app, const std::string& name, const std::string& help)
      : sub_(app.add_subcommand(name, help)), name_(name) {
    sub_->add_option("--config", config_path_, "JSON config file");
  }

  Subcommand& text(const std::string& flag, const std::string& key, const std::string& help) {
    return add(flag, key, std::string{}, help);
  }
  Subcommand& integer(const std::string& flag, const std::string& key, const std::string& help) {
    return add(flag, key, 0, help);
  }
  Subcommand& real(const std::string& flag, const std::string& key, const std::string& help) {
    return add(flag, key, 0.0, help);
  }
  Subcommand& flag(const std::string& flag, const std::string& key, const std::string& help) {
    auto& o = overrides_.emplace_back();
    o.key = key;
    o.value = false;
    o.option = sub_->add_flag(flag, std::get<bool>(o.value), help);
    return *this;
  }

  bool parsed() const { return sub_->parsed(); }
  const std::string& name() const { return name_; }

  Json config() const {
    Json cfg = config_path_.empty() ? Json::object() : pignn::pipeline::read_json(config_path_);
    if (!cfg.is_object()) throw pignn::Error("config file must hold a JSON object");
    for (const auto& o : overrides_) {
      if (o.option->count() == 0) continue;
      std::visit([&](const auto& v) { cfg[o.key] = v; }, o.value);
    }
    return cfg;
  }

 private:
  template <class T>
  Subcommand& add(const std::string& flag, const std::string& key, T init, const std::string& help) {
    auto& o = overrides_.emplace_back();
    o.key = key;
    o.value = init;
    o.option = sub_->add_option(flag, std::get<T>(o.value), help);
    return *this;
  }

  CLI::App* sub_;
  std::string name_;
  std::string config_path_;
  std::deque<Override> overrides_;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Well-network rate forecasting: synthetic cases, CRM and graph-network models"};
  app.require_subcommand(1);
  std::vector<std::unique_ptr<Subcommand>> subs;
  auto make = [&](const std::string& name, const std::string& help) -> Subcommand& {
    subs.push_back(std::make_unique<Subcommand>(app, name, help));
    return *subs.back();
  };

  make("synth", "generate synthetic cases")
      .text("--out", "out", "output directory")
      .text("--kind", "kind", "channel or crm-world")
      .integer("--cases", "cases", "number of channel cases")
      .integer("--seed", "seed", "well placement seed")
      .flag("--force", "force", "overwrite a non-empty output directory");
  make("graph", "build the injector-producer prior graph")
      .text("--grid", "grid", "grid directory")
      .text("--wells", "wells", "wells CSV")
      .integer("--k", "k", "producers kept per sector")
      .integer("--sectors", "sectors", "4 or 8")
      .real("--seed-radius", "seed_radius", "straight-ray seeding radius in cells")
      .text("--out", "out", "adjacency CSV")
      .flag("--force", "force", "overwrite an existing file");
  make("crm-fit", "fit the CRM baseline")
      .text("--panel", "panel", "panel CSV")
      .real("--ct", "ct", "total compressibility (1/psi)")
      .text("--structure", "structure", "optional 0/1 connectivity CSV")
      .integer("--multistarts", "multistarts", "number of starts")
      .text("--out", "out", "params JSON")
      .flag("--force", "force", "overwrite an existing file");
  make("train", "train a seed ensemble")
      .text("--panel", "panel", "panel CSV")
      .text("--adj", "adj", "expert adjacency CSV")
      .flag("--self-learned", "self_learned", "learn the graph instead of using --adj")
      .text("--physics", "physics", "on or off")
      .integer("--seeds", "seeds", "ensemble size")
      .real("--ct", "ct", "total compressibility (1/psi)")
      .integer("--threads", "threads", "worker threads")
      .text("--out", "out", "run directory")
      .flag("--force", "force", "overwrite a non-empty run directory");
  make("evaluate", "score a trained run")
      .text("--run", "run", "run directory")
      .text("--panel", "panel", "panel CSV (defaults to the training panel)")
      .text("--out", "out", "metrics JSON")
      .flag("--force", "force", "overwrite an existing file");
  make("bench", "run the four-method benchmark")
      .text("--out", "out", "report directory")
      .integer("--threads", "threads", "worker threads")
      .flag("--force", "force", "overwrite a non-empty report directory");
  make("gradcheck", "compare reverse-mode gradients with finite differences")
      .text("--mode", "mode", "expert or self-learned")
      .text("--physics", "physics", "on or off")
      .integer("--seed", "seed", "initialization seed")
      .real("--tolerance", "tolerance", "pass threshold for the loss gradient");
  make("plots", "regenerate SVG plots from a report directory")
      .text("--report", "report", "report directory")
      .text("--out", "out", "output directory (defaults to the report)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    for (const auto& s : subs) {
      if (s->parsed()) return pignn::pipeline::run_stage(s->name(), s->config(), std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
