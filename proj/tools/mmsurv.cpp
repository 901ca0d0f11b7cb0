// Command-line front end: simulate, pretrain, train, evaluate, predict,
// latefusion, export-embeddings.
#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "mmsurv/errors.hpp"
#include "mmsurv/harness/commands.hpp"

namespace fs = std::filesystem;
using namespace mmsurv;
using namespace mmsurv::harness;

namespace {

struct Common {
  std::string config;
  std::uint64_t seed = 0;
};

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config.empty() ? parse_run_config(nlohmann::json::object(), fs::current_path())
                                   : load_run_config(c.config);
  cfg.set_seed(c.seed);
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* cmd, Common& c, bool stochastic) {
  cmd->add_option("-c,--config", c.config, "run configuration (JSON)")->check(CLI::ExistingFile);
  auto* seed = cmd->add_option("--seed", c.seed, "master seed");
  if (stochastic) seed->required();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal discrete-time survival models on synthetic glioma cohorts"};
  app.require_subcommand(1);

  Common sim, pre, train, eval, late;
  auto* simulate = app.add_subcommand("simulate", "write a synthetic cohort, its volumes and a pretraining corpus");
  add_common(simulate, sim, true);

  auto* pretrain = app.add_subcommand("pretrain", "self-supervised encoder pretraining");
  add_common(pretrain, pre, true);

  auto* train_cmd = app.add_subcommand("train", "train a survival model");
  add_common(train_cmd, train, true);
  std::string modality = "multimodal";
  train_cmd->add_option("--modality", modality, "input modality")
      ->check(CLI::IsMember({"clinical", "imaging", "multimodal"}))
      ->required();

  auto* evaluate = app.add_subcommand("evaluate", "score a checkpoint with bootstrap intervals");
  add_common(evaluate, eval, true);
  std::string eval_model;
  std::vector<std::string> eval_cohorts;
  evaluate->add_option("--model", eval_model, "model checkpoint (default: config paths.model)");
  evaluate->add_option("--cohort", eval_cohorts, "cohort CSV files (default: config paths.cohort)");

  auto* predict = app.add_subcommand("predict", "monthly survival curves for every patient of a cohort");
  std::string pred_model, pred_cohort, pred_out;
  std::size_t horizon = 60;
  predict->add_option("--model", pred_model)->required()->check(CLI::ExistingFile);
  predict->add_option("--cohort", pred_cohort)->required()->check(CLI::ExistingFile);
  predict->add_option("--out", pred_out)->required();
  predict->add_option("--horizon", horizon, "last month of the curves")->check(CLI::PositiveNumber);

  auto* latefusion = app.add_subcommand("latefusion", "image index + clinical Cox and clinical-only Cox baselines");
  add_common(latefusion, late, true);

  auto* export_cmd = app.add_subcommand("export-embeddings", "pooled fused embeddings with MGMT and resection labels");
  std::string exp_model, exp_cohort, exp_out;
  export_cmd->add_option("--model", exp_model)->required()->check(CLI::ExistingFile);
  export_cmd->add_option("--cohort", exp_cohort)->required()->check(CLI::ExistingFile);
  export_cmd->add_option("--out", exp_out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*simulate) {
      const auto cfg = resolve(sim);
      cmd_simulate(cfg);
      std::cout << "wrote " << cfg.paths.cohort.string() << " and " << cfg.simulation.pretrain_volumes
                << " pretraining volumes under " << cfg.paths.pretrain_volumes.string() << "\n";
    } else if (*pretrain) {
      const auto cfg = resolve(pre);
      const auto result = cmd_pretrain(cfg);
      std::cout << "held-out SSL loss " << result.heldout_initial << " -> " << result.heldout_final << "; wrote "
                << cfg.paths.encoder.string() << "\n";
    } else if (*train_cmd) {
      const auto cfg = resolve(train);
      const auto model = cmd_train(cfg, fusion::modality_from_string(modality));
      std::cout << modality << ": best epoch " << model.best_epoch << " of " << model.history.size()
                << ", validation Ctd " << model.history.at(model.best_epoch - 1).val_ctd << "; wrote "
                << cfg.paths.model.string() << "\n";
    } else if (*evaluate) {
      const auto cfg = resolve(eval);
      std::vector<fs::path> cohorts(eval_cohorts.begin(), eval_cohorts.end());
      if (cohorts.empty()) cohorts.push_back(cfg.paths.cohort);
      std::cout << cmd_evaluate(cfg, eval_model.empty() ? cfg.paths.model : fs::path(eval_model), cohorts);
    } else if (*predict) {
      cmd_predict(pred_model, pred_cohort, pred_out, horizon);
    } else if (*latefusion) {
      std::cout << cmd_latefusion(resolve(late));
    } else if (*export_cmd) {
      cmd_export_embeddings(exp_model, exp_cohort, exp_out);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
