#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "mmsurv/fusion/model.hpp"
#include "mmsurv/harness/clinical.hpp"
#include "mmsurv/harness/config.hpp"
#include "mmsurv/harness/split.hpp"
#include "mmsurv/stats/bootstrap.hpp"
#include "mmsurv/stats/cox.hpp"
#include "mmsurv/survival/head.hpp"
#include "mmsurv/volume/encoder.hpp"

namespace mmsurv::harness {

// Clinical table plus raw volumes aligned with its rows (empty when the
// cohort carries no imaging).
struct Cohort {
  CohortTable table;
  std::vector<volume::Volume> volumes;
  std::string name = "cohort";

  bool has_volumes() const noexcept { return !volumes.empty(); }
};

Cohort cohort_from_synthetic(const SyntheticCohort& s, std::string name = "cohort");

// FNV-1a of the canonical CSV rendering, as 16 hex digits.
std::string cohort_fingerprint(const CohortTable& table);

// Encoder weights together with the intensity landmarks its inputs were
// standardized against.
struct ImagingEncoder {
  volume::VolumeEncoder encoder;
  volume::Landmarks landmarks;
};

struct PretrainOutcome {
  ImagingEncoder model;
  volume::PretrainResult result;
};

// Landmarks are fitted on the whole corpus; the last tenth (at least two
// volumes when the corpus has six or more) is held out for the loss check.
PretrainOutcome pretrain_encoder(std::span<const volume::Volume> corpus, const volume::EncoderConfig& config);

// Randomly initialized encoder with landmarks fitted on `reference`.
ImagingEncoder untrained_encoder(std::span<const volume::Volume> reference, const volume::EncoderConfig& config);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_ctd = 0.0;  // NaN when undefined on the validation split
};

struct SplitIds {
  std::vector<std::string> train, val, test;
};

struct TrainedModel {
  fusion::Modality modality;
  fusion::FusionModel net;
  survival::TimeGrid grid;
  ClinicalSchema schema;
  std::optional<ImagingEncoder> encoder;
  EncoderTraining encoder_training = EncoderTraining::frozen;
  Split split;
  SplitIds split_ids;
  std::string cohort_fingerprint;
  double threshold_months = 0.0;  // training-split median survival
  std::vector<EpochLog> history;
  std::size_t best_epoch = 0;
};

// Median of the training split's Kaplan-Meier curve, or the median observed
// time when the curve never reaches one half.
double training_median_threshold(std::span<const EventRecord> training);

// Trains the chosen variant on split.train with early stopping on the
// validation Ctd; the test rows are never touched. Imaging variants need an
// encoder: frozen mode caches its token features, end-to-end mode updates it
// with the survival loss.
TrainedModel train_model(const Cohort& cohort, const Split& split, fusion::Modality modality,
                         const RunConfig& config, std::optional<ImagingEncoder> encoder, SplitAudit& audit);

std::vector<survival::SurvivalDistribution> predict_distributions(const TrainedModel& model, const Cohort& cohort,
                                                                  std::span<const std::size_t> rows);
std::vector<stats::SurvCurve> predict_curves(const TrainedModel& model, const Cohort& cohort,
                                             std::span<const std::size_t> rows);
// batch x width pooled representations.
ad::Tensor pooled_embeddings(const TrainedModel& model, const Cohort& cohort, std::span<const std::size_t> rows);

struct CohortMetrics {
  std::string name;
  std::size_t n = 0;
  stats::ConfidenceInterval ctd;
  stats::ConfidenceInterval ibs;
  double ibs_horizon_months = 0.0;
  std::optional<double> logrank_p;  // empty when a risk group is empty
  std::size_t favorable = 0, unfavorable = 0;
  double threshold_months = 0.0;
  std::uint64_t seed = 0;
};

// Ctd and IBS (over [0, ibs_horizon]) with percentile-bootstrap intervals,
// plus the logrank test between the groups split at threshold_months.
CohortMetrics evaluate_curves(const std::string& name, std::span<const stats::SurvCurve> curves,
                              std::span<const EventRecord> records, double threshold_months, double ibs_horizon,
                              std::size_t bootstrap, std::uint64_t seed);

// The rows a checkpoint may be scored on: the stored test split for the
// training cohort, every row for any other cohort. Marks the audit as in
// evaluation before reading.
std::vector<std::size_t> evaluation_rows(const TrainedModel& model, const Cohort& cohort, SplitAudit& audit);

CohortMetrics evaluate_model(const TrainedModel& model, const Cohort& cohort, SplitAudit& audit,
                             std::size_t bootstrap, std::uint64_t seed);

struct Report {
  std::string setup;
  std::vector<CohortMetrics> cohorts;
};

nlohmann::json to_json(const CohortMetrics& m);
std::string report_text(const std::vector<Report>& reports);

// Image-only survival model whose -S(index_months) joins the clinical Cox
// design. The Cox stage is fitted on out-of-fold indices: each training row's
// index comes from an image model trained without it.
struct LateFusionModel {
  TrainedModel image_model;
  stats::CoxFit fit;
  stats::BaselineHazard baseline;
  double index_months = 12.0;
};

LateFusionModel train_late_fusion(const Cohort& cohort, const Split& split, const RunConfig& config,
                                  ImagingEncoder encoder, SplitAudit& audit);
// Index from the full image model.
Eigen::MatrixXd late_fusion_design(const LateFusionModel& model, const Cohort& cohort,
                                   std::span<const std::size_t> rows);
Eigen::MatrixXd late_fusion_design(const LateFusionModel& model, const Cohort& cohort,
                                   std::span<const std::size_t> rows, std::span<const double> index);
std::vector<stats::SurvCurve> late_fusion_curves(const LateFusionModel& model, const Cohort& cohort,
                                                 std::span<const std::size_t> rows);

// Cox model on the clinical covariates alone.
struct ClinicalCox {
  ClinicalSchema schema;
  stats::CoxFit fit;
  stats::BaselineHazard baseline;
};

ClinicalCox fit_clinical_cox(const Cohort& cohort, const Split& split, SplitAudit& audit);
std::vector<stats::SurvCurve> clinical_cox_curves(const ClinicalCox& model, const Cohort& cohort,
                                                  std::span<const std::size_t> rows);

// [{id, months[], survival[]}] at months 0..horizon.
nlohmann::json predict_json(const TrainedModel& model, const Cohort& cohort, std::span<const std::size_t> rows,
                            std::size_t horizon_months);

// id, e0..e{width-1}, mgmt, resection. Requires a multimodal model.
std::string embeddings_csv(const TrainedModel& model, const Cohort& cohort, std::span<const std::size_t> rows);

}  // namespace mmsurv::harness
