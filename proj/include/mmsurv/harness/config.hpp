#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "mmsurv/fusion/model.hpp"
#include "mmsurv/harness/split.hpp"
#include "mmsurv/harness/synthetic.hpp"
#include "mmsurv/volume/encoder.hpp"

namespace mmsurv::harness {

enum class EncoderTraining {
  frozen,      // pretrained weights, cached token features
  end_to_end,  // encoder updated with the survival loss
};

std::string to_string(EncoderTraining e);

struct TrainingConfig {
  std::size_t max_epochs = 150;
  std::size_t patience = 20;  // epochs without a better validation Ctd
  std::size_t batch_size = 32;
  EncoderTraining encoder = EncoderTraining::frozen;
};

struct EvaluationConfig {
  std::size_t bootstrap = 1000;
  double horizon_months = 60.0;       // length of predicted monthly curves
  double late_fusion_months = 12.0;   // prognostic index is -S(this)
};

struct SimulationConfig {
  std::size_t n = 200;
  SyntheticEffects effects;
  double censor_rate = 0.3;
  std::size_t pretrain_volumes = 120;
  double noise = 0.05;
};

struct PathConfig {
  std::filesystem::path cohort = "cohort.csv";
  std::filesystem::path pretrain_volumes = "pretrain";
  std::filesystem::path encoder = "encoder.json";
  std::filesystem::path model = "model.json";
  std::filesystem::path output = "out";
};

struct RunConfig {
  std::uint64_t seed = 0;
  SplitFractions split;
  fusion::ModelConfig model;
  volume::EncoderConfig encoder;
  TrainingConfig training;
  EvaluationConfig evaluation;
  SimulationConfig simulation;
  PathConfig paths;

  // Desk-scale defaults: 32-wide model and encoder.
  RunConfig();

  // Propagates the run seed into the model and encoder configs.
  void set_seed(std::uint64_t s);
  // Throws ConfigError.
  void validate() const;
};

// Every key is optional; unknown keys at any level are a ConfigError. Paths
// are resolved against `base`.
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base = {});
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& config);

nlohmann::json encoder_config_to_json(const volume::EncoderConfig& c);
volume::EncoderConfig encoder_config_from_json(const nlohmann::json& j);
nlohmann::json model_config_to_json(const fusion::ModelConfig& c);
fusion::ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace mmsurv::harness
