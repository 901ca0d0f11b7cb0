#include "mmsurv/harness/config.hpp"

#include <fstream>
#include <initializer_list>
#include <set>

#include "mmsurv/errors.hpp"

namespace mmsurv::harness {

using nlohmann::json;

std::string to_string(EncoderTraining e) { return e == EncoderTraining::frozen ? "frozen" : "end_to_end"; }

RunConfig::RunConfig() {
  model.width = 32;
  model.heads = 4;
  model.clinical_features = kCovariateColumns.size();
  encoder.width = 32;
  encoder.ff_hidden = 64;
  encoder.steps = 150;
  encoder.learning_rate = 2e-3;
  model.imaging_width = encoder.width;
}

void RunConfig::set_seed(std::uint64_t s) {
  seed = s;
  model.seed = s;
  encoder.seed = s;
}

void RunConfig::validate() const {
  split.validate();
  model.validate();
  encoder.validate();
  if (model.imaging_width != encoder.width) throw ConfigError("model.imaging_width must equal encoder.width");
  if (model.clinical_features != kCovariateColumns.size()) {
    throw ConfigError("model.clinical_features must be " + std::to_string(kCovariateColumns.size()));
  }
  if (training.max_epochs == 0) throw ConfigError("training.max_epochs must be positive");
  if (training.batch_size < 2) throw ConfigError("training.batch_size must be at least 2");
  if (!(evaluation.horizon_months >= 1.0)) throw ConfigError("evaluation.horizon_months must be at least 1");
  if (!(evaluation.late_fusion_months > 0.0)) throw ConfigError("evaluation.late_fusion_months must be positive");
  if (simulation.n < 20) throw ConfigError("simulation.n must be at least 20");
  if (!(simulation.censor_rate >= 0.0 && simulation.censor_rate <= 0.9)) {
    throw ConfigError("simulation.censor_rate must lie in [0, 0.9]");
  }
  if (simulation.pretrain_volumes < 2) throw ConfigError("simulation.pretrain_volumes must be at least 2");
}

namespace {

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!ok.contains(key)) throw ConfigError("unknown config key " + (where.empty() ? key : where + "." + key));
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    const auto& v = j.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError("");
    } else if constexpr (std::is_unsigned_v<T>) {
      if (!v.is_number_unsigned()) throw ConfigError("");
    } else if constexpr (std::is_arithmetic_v<T>) {
      if (!v.is_number()) throw ConfigError("");
    } else {
      if (!v.is_string()) throw ConfigError("");
    }
    out = v.get<T>();
  } catch (const std::exception&) {
    throw ConfigError("config key " + where + "." + key + " has the wrong type");
  }
}

void read_path(const json& j, const char* key, std::filesystem::path& out, const std::filesystem::path& base) {
  std::string s;
  read(j, key, s, "paths");
  if (j.contains(key)) out = std::filesystem::path(s).is_absolute() ? std::filesystem::path(s) : base / s;
}

}  // namespace

json encoder_config_to_json(const volume::EncoderConfig& c) {
  return json{{"dims", {c.dims.depth, c.dims.height, c.dims.width}},
              {"patch", c.patch},
              {"width", c.width},
              {"heads", c.heads},
              {"blocks", c.blocks},
              {"ff_hidden", c.ff_hidden},
              {"projection_width", c.projection_width},
              {"temperature", c.temperature},
              {"contrastive_weight", c.contrastive_weight},
              {"combination", volume::to_string(c.combination)},
              {"cutout_fraction", c.cutout_fraction},
              {"swaps", c.swaps},
              {"learning_rate", c.learning_rate},
              {"batch_size", c.batch_size},
              {"steps", c.steps},
              {"seed", c.seed}};
}

volume::EncoderConfig encoder_config_from_json(const json& j) {
  const std::string w = "encoder";
  check_keys(j, w,
             {"dims", "patch", "width", "heads", "blocks", "ff_hidden", "projection_width", "temperature",
              "contrastive_weight", "combination", "cutout_fraction", "swaps", "learning_rate", "batch_size",
              "steps", "seed"});
  volume::EncoderConfig c;
  if (j.contains("dims")) {
    const auto& d = j.at("dims");
    if (!d.is_array() || d.size() != 3 || !d[0].is_number_unsigned() || !d[1].is_number_unsigned() ||
        !d[2].is_number_unsigned()) {
      throw ConfigError("encoder.dims must be three positive integers");
    }
    c.dims = {d[0].get<std::size_t>(), d[1].get<std::size_t>(), d[2].get<std::size_t>()};
  }
  read(j, "patch", c.patch, w);
  read(j, "width", c.width, w);
  read(j, "heads", c.heads, w);
  read(j, "blocks", c.blocks, w);
  read(j, "ff_hidden", c.ff_hidden, w);
  read(j, "projection_width", c.projection_width, w);
  read(j, "temperature", c.temperature, w);
  read(j, "contrastive_weight", c.contrastive_weight, w);
  std::string combination = volume::to_string(c.combination);
  read(j, "combination", combination, w);
  try {
    c.combination = volume::loss_combination_from_string(combination);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("encoder.combination: ") + e.what());
  }
  read(j, "cutout_fraction", c.cutout_fraction, w);
  read(j, "swaps", c.swaps, w);
  read(j, "learning_rate", c.learning_rate, w);
  read(j, "batch_size", c.batch_size, w);
  read(j, "steps", c.steps, w);
  read(j, "seed", c.seed, w);
  return c;
}

json model_config_to_json(const fusion::ModelConfig& c) {
  return json{{"width", c.width},
              {"heads", c.heads},
              {"clinical_tokens", c.clinical_tokens},
              {"clinical_features", c.clinical_features},
              {"imaging_width", c.imaging_width},
              {"bins", c.bins},
              {"fusion_depth", c.fusion_depth},
              {"symmetric_final", c.symmetric_final},
              {"dropout", c.dropout},
              {"ranking_weight", c.loss.lambda},
              {"ranking_sigma", c.loss.sigma},
              {"learning_rate", c.learning_rate},
              {"seed", c.seed}};
}

fusion::ModelConfig model_config_from_json(const json& j) {
  const std::string w = "model";
  check_keys(j, w,
             {"width", "heads", "clinical_tokens", "clinical_features", "imaging_width", "bins", "fusion_depth",
              "symmetric_final", "dropout", "ranking_weight", "ranking_sigma", "learning_rate", "seed"});
  fusion::ModelConfig c;
  c.clinical_features = kCovariateColumns.size();
  c.width = 32;
  c.imaging_width = 32;
  read(j, "width", c.width, w);
  read(j, "heads", c.heads, w);
  read(j, "clinical_tokens", c.clinical_tokens, w);
  read(j, "clinical_features", c.clinical_features, w);
  read(j, "imaging_width", c.imaging_width, w);
  read(j, "bins", c.bins, w);
  read(j, "fusion_depth", c.fusion_depth, w);
  read(j, "symmetric_final", c.symmetric_final, w);
  read(j, "dropout", c.dropout, w);
  read(j, "ranking_weight", c.loss.lambda, w);
  read(j, "ranking_sigma", c.loss.sigma, w);
  read(j, "learning_rate", c.learning_rate, w);
  read(j, "seed", c.seed, w);
  return c;
}

RunConfig parse_run_config(const json& doc, const std::filesystem::path& base) {
  check_keys(doc, "", {"seed", "split", "model", "encoder", "training", "evaluation", "simulation", "paths"});
  RunConfig c;
  std::uint64_t seed = 0;
  read(doc, "seed", seed, "");
  if (doc.contains("split")) {
    const auto& s = doc.at("split");
    check_keys(s, "split", {"train", "val", "test"});
    read(s, "train", c.split.train, "split");
    read(s, "val", c.split.val, "split");
    read(s, "test", c.split.test, "split");
  }
  if (doc.contains("model")) c.model = model_config_from_json(doc.at("model"));
  if (doc.contains("encoder")) c.encoder = encoder_config_from_json(doc.at("encoder"));
  if (doc.contains("model") && !doc.at("model").contains("imaging_width")) c.model.imaging_width = c.encoder.width;
  if (doc.contains("training")) {
    const auto& t = doc.at("training");
    check_keys(t, "training", {"max_epochs", "patience", "batch_size", "encoder"});
    read(t, "max_epochs", c.training.max_epochs, "training");
    read(t, "patience", c.training.patience, "training");
    read(t, "batch_size", c.training.batch_size, "training");
    std::string mode = to_string(c.training.encoder);
    read(t, "encoder", mode, "training");
    if (mode == "frozen") {
      c.training.encoder = EncoderTraining::frozen;
    } else if (mode == "end_to_end") {
      c.training.encoder = EncoderTraining::end_to_end;
    } else {
      throw ConfigError("training.encoder must be frozen or end_to_end, got " + mode);
    }
  }
  if (doc.contains("evaluation")) {
    const auto& e = doc.at("evaluation");
    check_keys(e, "evaluation", {"bootstrap", "horizon_months", "late_fusion_months"});
    read(e, "bootstrap", c.evaluation.bootstrap, "evaluation");
    read(e, "horizon_months", c.evaluation.horizon_months, "evaluation");
    read(e, "late_fusion_months", c.evaluation.late_fusion_months, "evaluation");
  }
  if (doc.contains("simulation")) {
    const auto& s = doc.at("simulation");
    const std::string w = "simulation";
    check_keys(s, w,
               {"n", "beta_clinical", "beta_image", "beta_interaction", "censor_rate", "pretrain_volumes", "noise"});
    read(s, "n", c.simulation.n, w);
    read(s, "beta_clinical", c.simulation.effects.clinical, w);
    read(s, "beta_image", c.simulation.effects.image, w);
    read(s, "beta_interaction", c.simulation.effects.interaction, w);
    read(s, "censor_rate", c.simulation.censor_rate, w);
    read(s, "pretrain_volumes", c.simulation.pretrain_volumes, w);
    read(s, "noise", c.simulation.noise, w);
  }
  c.paths.cohort = base / c.paths.cohort;
  c.paths.pretrain_volumes = base / c.paths.pretrain_volumes;
  c.paths.encoder = base / c.paths.encoder;
  c.paths.model = base / c.paths.model;
  c.paths.output = base / c.paths.output;
  if (doc.contains("paths")) {
    const auto& p = doc.at("paths");
    check_keys(p, "paths", {"cohort", "pretrain_volumes", "encoder", "model", "output"});
    read_path(p, "cohort", c.paths.cohort, base);
    read_path(p, "pretrain_volumes", c.paths.pretrain_volumes, base);
    read_path(p, "encoder", c.paths.encoder, base);
    read_path(p, "model", c.paths.model, base);
    read_path(p, "output", c.paths.output, base);
  }
  c.set_seed(seed);
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_run_config(doc, path.parent_path());
}

json to_json(const RunConfig& c) {
  return json{
      {"seed", c.seed},
      {"split", {{"train", c.split.train}, {"val", c.split.val}, {"test", c.split.test}}},
      {"model", model_config_to_json(c.model)},
      {"encoder", encoder_config_to_json(c.encoder)},
      {"training",
       {{"max_epochs", c.training.max_epochs},
        {"patience", c.training.patience},
        {"batch_size", c.training.batch_size},
        {"encoder", to_string(c.training.encoder)}}},
      {"evaluation",
       {{"bootstrap", c.evaluation.bootstrap},
        {"horizon_months", c.evaluation.horizon_months},
        {"late_fusion_months", c.evaluation.late_fusion_months}}},
      {"simulation",
       {{"n", c.simulation.n},
        {"beta_clinical", c.simulation.effects.clinical},
        {"beta_image", c.simulation.effects.image},
        {"beta_interaction", c.simulation.effects.interaction},
        {"censor_rate", c.simulation.censor_rate},
        {"pretrain_volumes", c.simulation.pretrain_volumes},
        {"noise", c.simulation.noise}}},
      {"paths",
       {{"cohort", c.paths.cohort.string()},
        {"pretrain_volumes", c.paths.pretrain_volumes.string()},
        {"encoder", c.paths.encoder.string()},
        {"model", c.paths.model.string()},
        {"output", c.paths.output.string()}}},
  };
}

}  // namespace mmsurv::harness
