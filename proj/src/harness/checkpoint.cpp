#include "mmsurv/harness/checkpoint.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "mmsurv/errors.hpp"

namespace mmsurv::harness {

using nlohmann::json;

namespace {

constexpr int kVersion = 1;

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError("checkpoint " + path.string() + " is not valid JSON: " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write checkpoint " + path.string());
  out << j.dump() << '\n';
}

void expect_format(const json& j, const std::string& format) {
  if (!j.is_object() || j.value("format", "") != format) throw FormatError("not a " + format + " checkpoint");
  if (j.value("version", 0) != kVersion) throw FormatError(format + " checkpoint has an unsupported version");
}

std::vector<std::size_t> indices(const json& j) { return j.get<std::vector<std::size_t>>(); }

}  // namespace

json parameters_to_json(const ad::ParameterStore& store) {
  json out = json::array();
  for (const auto* p : store.all()) {
    out.push_back({{"name", p->name}, {"shape", p->value.shape()}, {"data", p->value.vec()}});
  }
  return out;
}

void parameters_from_json(const json& j, ad::ParameterStore& store) {
  if (!j.is_array()) throw FormatError("parameters must be an array");
  std::set<std::string> seen;
  for (const auto& entry : j) {
    const auto name = entry.at("name").get<std::string>();
    if (!store.contains(name)) throw FormatError("checkpoint parameter " + name + " is unknown to this model");
    auto& p = store.at(name);
    const auto shape = entry.at("shape").get<ad::Shape>();
    if (shape != p.value.shape()) {
      throw FormatError("parameter " + name + " has shape " + ad::shape_to_string(shape) + ", model expects " +
                        ad::shape_to_string(p.value.shape()));
    }
    auto data = entry.at("data").get<std::vector<double>>();
    if (data.size() != p.value.size()) throw FormatError("parameter " + name + " has the wrong element count");
    p.value = ad::Tensor(shape, std::move(data));
    seen.insert(name);
  }
  if (seen.size() != store.size()) throw FormatError("checkpoint is missing model parameters");
}

json encoder_to_json(const ImagingEncoder& e, const volume::PretrainResult* result) {
  json landmarks = json::array();
  for (const auto& ch : e.landmarks) landmarks.push_back(std::vector<double>(ch.begin(), ch.end()));
  json j{{"format", "mmsurv-encoder"},
         {"version", kVersion},
         {"config", encoder_config_to_json(e.encoder.config())},
         {"landmarks", landmarks},
         {"parameters", parameters_to_json(e.encoder.parameters())}};
  if (result) {
    j["loss_curve"] = result->curve;
    j["heldout_initial"] = result->heldout_initial;
    j["heldout_final"] = result->heldout_final;
  }
  return j;
}

ImagingEncoder encoder_from_json(const json& j) {
  expect_format(j, "mmsurv-encoder");
  try {
    volume::Landmarks landmarks{};
    const auto& lm = j.at("landmarks");
    if (!lm.is_array() || lm.size() != volume::kChannels) throw FormatError("encoder landmarks: wrong channel count");
    for (std::size_t c = 0; c < volume::kChannels; ++c) {
      const auto v = lm[c].get<std::vector<double>>();
      if (v.size() != volume::kLandmarks) throw FormatError("encoder landmarks: wrong landmark count");
      std::copy(v.begin(), v.end(), landmarks[c].begin());
    }
    ImagingEncoder e{volume::VolumeEncoder(encoder_config_from_json(j.at("config"))), landmarks};
    parameters_from_json(j.at("parameters"), e.encoder.parameters());
    return e;
  } catch (const json::exception& ex) {
    throw FormatError(std::string("malformed encoder checkpoint: ") + ex.what());
  }
}

void save_encoder(const std::filesystem::path& path, const ImagingEncoder& encoder,
                  const volume::PretrainResult* result) {
  write_json(path, encoder_to_json(encoder, result));
}

ImagingEncoder load_encoder(const std::filesystem::path& path) { return encoder_from_json(read_json(path)); }

json model_to_json(const TrainedModel& m) {
  json history = json::array();
  for (const auto& h : m.history) {
    history.push_back({{"epoch", h.epoch},
                       {"train_loss", h.train_loss},
                       {"val_ctd", std::isfinite(h.val_ctd) ? json(h.val_ctd) : json(nullptr)}});
  }
  return json{{"format", "mmsurv-model"},
              {"version", kVersion},
              {"modality", fusion::to_string(m.modality)},
              {"config", model_config_to_json(m.net.config())},
              {"grid", m.grid.edges()},
              {"schema", {{"columns", m.schema.columns}, {"age_min", m.schema.age_min}, {"age_max", m.schema.age_max}}},
              {"encoder", m.encoder ? encoder_to_json(*m.encoder) : json(nullptr)},
              {"encoder_training", to_string(m.encoder_training)},
              {"split", {{"train", m.split.train}, {"val", m.split.val}, {"test", m.split.test}}},
              {"split_ids", {{"train", m.split_ids.train}, {"val", m.split_ids.val}, {"test", m.split_ids.test}}},
              {"cohort_fingerprint", m.cohort_fingerprint},
              {"threshold_months", m.threshold_months},
              {"best_epoch", m.best_epoch},
              {"history", history},
              {"parameters", parameters_to_json(m.net.parameters())}};
}

TrainedModel model_from_json(const json& j) {
  expect_format(j, "mmsurv-model");
  try {
    const auto modality = fusion::modality_from_string(j.at("modality").get<std::string>());
    ClinicalSchema schema;
    schema.columns = j.at("schema").at("columns").get<std::vector<std::string>>();
    schema.age_min = j.at("schema").at("age_min").get<double>();
    schema.age_max = j.at("schema").at("age_max").get<double>();
    std::optional<ImagingEncoder> encoder;
    if (!j.at("encoder").is_null()) encoder = encoder_from_json(j.at("encoder"));
    const auto mode = j.at("encoder_training").get<std::string>();
    const auto& s = j.at("split");
    const auto& ids = j.at("split_ids");
    TrainedModel m{modality,
                   fusion::FusionModel(model_config_from_json(j.at("config")), modality),
                   survival::TimeGrid(j.at("grid").get<std::vector<double>>()),
                   schema,
                   std::move(encoder),
                   mode == "end_to_end" ? EncoderTraining::end_to_end : EncoderTraining::frozen,
                   Split{indices(s.at("train")), indices(s.at("val")), indices(s.at("test"))},
                   SplitIds{ids.at("train").get<std::vector<std::string>>(),
                            ids.at("val").get<std::vector<std::string>>(),
                            ids.at("test").get<std::vector<std::string>>()},
                   j.at("cohort_fingerprint").get<std::string>(),
                   j.at("threshold_months").get<double>(),
                   {},
                   j.at("best_epoch").get<std::size_t>()};
    for (const auto& h : j.at("history")) {
      m.history.push_back({h.at("epoch").get<std::size_t>(), h.at("train_loss").get<double>(),
                           h.at("val_ctd").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                                     : h.at("val_ctd").get<double>()});
    }
    parameters_from_json(j.at("parameters"), m.net.parameters());
    if (m.encoder) m.encoder->encoder.set_frozen(true);
    return m;
  } catch (const json::exception& ex) {
    throw FormatError(std::string("malformed model checkpoint: ") + ex.what());
  }
}

void save_model(const std::filesystem::path& path, const TrainedModel& model) {
  write_json(path, model_to_json(model));
}

TrainedModel load_model(const std::filesystem::path& path) { return model_from_json(read_json(path)); }

}  // namespace mmsurv::harness
