#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mmsurv/harness/config.hpp"
#include "mmsurv/harness/pipeline.hpp"

// File-level entry points behind the command-line tool.
namespace mmsurv::harness {

// Reads the clinical CSV and, when every row names a volume, the volumes
// (paths relative to the CSV). The cohort is named after the file stem.
Cohort load_cohort(const std::filesystem::path& csv);

std::filesystem::path audit_log_path(const RunConfig& config);

// Writes the cohort CSV, its volumes under volumes/, a ground-truth table
// next to the CSV and the unlabeled pretraining corpus.
void cmd_simulate(const RunConfig& config);

// Pretrains on every *.mmgs file of the pretraining directory; writes the
// encoder checkpoint and the per-step loss curve.
volume::PretrainResult cmd_pretrain(const RunConfig& config);

// Splits, trains and writes the model checkpoint, the training curve and a
// fresh split-audit log.
TrainedModel cmd_train(const RunConfig& config, fusion::Modality modality);

// Scores a checkpoint on each cohort and writes report.json; appends to the
// split-audit log. Returns the report text.
std::string cmd_evaluate(const RunConfig& config, const std::filesystem::path& model,
                         const std::vector<std::filesystem::path>& cohorts);

// Writes monthly survival curves for every row of the cohort.
void cmd_predict(const std::filesystem::path& model, const std::filesystem::path& cohort,
                 const std::filesystem::path& out, std::size_t horizon_months);

// Late-fusion and clinical Cox baselines on the configured cohort, evaluated
// on its test split. Returns the report text (also written to
// latefusion_report.json).
std::string cmd_latefusion(const RunConfig& config);

void cmd_export_embeddings(const std::filesystem::path& model, const std::filesystem::path& cohort,
                           const std::filesystem::path& out);

}  // namespace mmsurv::harness
