#pragma once

#include <filesystem>

#include <json.hpp>

#include "mmsurv/harness/pipeline.hpp"

namespace mmsurv::harness {

// JSON checkpoints. Doubles are written in shortest round-trip form, so a
// reload reproduces every parameter bitwise.
nlohmann::json parameters_to_json(const ad::ParameterStore& store);
// Every stored parameter must exist in `store` with the same shape and vice
// versa; throws FormatError otherwise.
void parameters_from_json(const nlohmann::json& j, ad::ParameterStore& store);

nlohmann::json encoder_to_json(const ImagingEncoder& encoder, const volume::PretrainResult* result = nullptr);
ImagingEncoder encoder_from_json(const nlohmann::json& j);
void save_encoder(const std::filesystem::path& path, const ImagingEncoder& encoder,
                  const volume::PretrainResult* result = nullptr);
ImagingEncoder load_encoder(const std::filesystem::path& path);

nlohmann::json model_to_json(const TrainedModel& model);
TrainedModel model_from_json(const nlohmann::json& j);
void save_model(const std::filesystem::path& path, const TrainedModel& model);
TrainedModel load_model(const std::filesystem::path& path);

}  // namespace mmsurv::harness
