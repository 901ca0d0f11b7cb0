#include "mmsurv/harness/commands.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mmsurv/errors.hpp"
#include "mmsurv/harness/checkpoint.hpp"
#include "mmsurv/harness/synthetic.hpp"
#include "mmsurv/harness/volume_io.hpp"

namespace mmsurv::harness {

namespace fs = std::filesystem;

namespace {

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write " + path.string());
  return out;
}

void write_text(const fs::path& path, const std::string& text) { open_output(path) << text; }

std::vector<fs::path> volume_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("volume directory " + dir.string() + " does not exist");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".mmgs") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw InsufficientDataError("no .mmgs volumes in " + dir.string());
  return files;
}

}  // namespace

Cohort load_cohort(const fs::path& csv) {
  Cohort c;
  c.table = load_clinical_csv(csv);
  c.name = csv.stem().string();
  const bool all = std::all_of(c.table.rows.begin(), c.table.rows.end(),
                               [](const ClinicalRow& r) { return !r.volume.empty(); });
  if (all) {
    for (const auto& r : c.table.rows) c.volumes.push_back(load_volume(csv.parent_path() / r.volume));
  }
  return c;
}

fs::path audit_log_path(const RunConfig& config) { return config.paths.output / "split_audit.log"; }

void cmd_simulate(const RunConfig& config) {
  SyntheticOptions o;
  o.seed = config.seed;
  o.n = config.simulation.n;
  o.effects = config.simulation.effects;
  o.censor_rate = config.simulation.censor_rate;
  o.dims = config.encoder.dims;
  o.noise = config.simulation.noise;
  auto cohort = generate_synthetic_cohort(o);

  const fs::path dir = config.paths.cohort.parent_path();
  for (std::size_t i = 0; i < cohort.table.size(); ++i) {
    auto& row = cohort.table.rows[i];
    row.volume = "volumes/" + row.id + ".mmgs";
    const fs::path path = dir / row.volume;
    fs::create_directories(path.parent_path());
    save_volume(path, cohort.volumes[i]);
  }
  auto csv = open_output(config.paths.cohort);
  write_clinical_csv(csv, cohort.table);

  std::ostringstream truth;
  truth << "id,clinical_score,image_score,true_risk,lesion_radius,rim_intensity\n";
  for (std::size_t i = 0; i < cohort.table.size(); ++i) {
    truth << cohort.table.rows[i].id << ',' << cohort.clinical_score[i] << ',' << cohort.image_score[i] << ','
          << cohort.true_risk[i] << ',' << cohort.phantoms[i].lesion_radius << ','
          << cohort.phantoms[i].rim_intensity << '\n';
  }
  write_text(dir / (config.paths.cohort.stem().string() + "_truth.csv"), truth.str());

  const auto corpus = generate_pretraining_volumes(stats::derive_seed(config.seed, 0x9e7a),
                                                   config.simulation.pretrain_volumes, config.encoder.dims,
                                                   config.simulation.noise);
  fs::create_directories(config.paths.pretrain_volumes);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "v%05zu.mmgs", i);
    save_volume(config.paths.pretrain_volumes / name, corpus[i]);
  }
}

volume::PretrainResult cmd_pretrain(const RunConfig& config) {
  std::vector<volume::Volume> corpus;
  for (const auto& f : volume_files(config.paths.pretrain_volumes)) corpus.push_back(load_volume(f));
  auto outcome = pretrain_encoder(corpus, config.encoder);
  if (config.paths.encoder.has_parent_path()) fs::create_directories(config.paths.encoder.parent_path());
  save_encoder(config.paths.encoder, outcome.model, &outcome.result);
  std::ostringstream curve;
  curve << "step,loss\n";
  for (std::size_t i = 0; i < outcome.result.curve.size(); ++i) curve << i + 1 << ',' << outcome.result.curve[i] << '\n';
  write_text(config.paths.output / "pretrain_curve.csv", curve.str());
  return outcome.result;
}

TrainedModel cmd_train(const RunConfig& config, fusion::Modality modality) {
  const Cohort cohort = load_cohort(config.paths.cohort);
  const Split split = stratified_split(cohort.table.records(), config.split, config.seed);
  SplitAudit audit;
  std::optional<ImagingEncoder> encoder;
  if (modality != fusion::Modality::clinical) {
    if (!cohort.has_volumes()) throw ConfigError("cohort has no volumes for an imaging model");
    if (config.training.encoder == EncoderTraining::frozen) {
      encoder = load_encoder(config.paths.encoder);
    } else {
      audit.read(Partition::train, split.train.size(), "train: landmarks for an untrained encoder");
      std::vector<volume::Volume> reference;
      for (auto i : split.train) reference.push_back(cohort.volumes[i]);
      encoder = untrained_encoder(reference, config.encoder);
    }
  }
  TrainedModel model = train_model(cohort, split, modality, config, std::move(encoder), audit);
  if (config.paths.model.has_parent_path()) fs::create_directories(config.paths.model.parent_path());
  save_model(config.paths.model, model);

  std::ostringstream curve;
  curve << "epoch,train_loss,val_ctd\n";
  for (const auto& h : model.history) curve << h.epoch << ',' << h.train_loss << ',' << h.val_ctd << '\n';
  write_text(config.paths.output / ("training_curve_" + fusion::to_string(modality) + ".csv"), curve.str());
  write_text(audit_log_path(config), audit.to_text());
  return model;
}

std::string cmd_evaluate(const RunConfig& config, const fs::path& model_path, const std::vector<fs::path>& cohorts) {
  if (cohorts.empty()) throw ConfigError("evaluate needs at least one cohort");
  const TrainedModel model = load_model(model_path);
  SplitAudit audit;
  Report report{fusion::to_string(model.modality), {}};
  for (const auto& path : cohorts) {
    const Cohort cohort = load_cohort(path);
    report.cohorts.push_back(evaluate_model(model, cohort, audit, config.evaluation.bootstrap, config.seed));
  }
  const std::string text = report_text({report});
  write_text(config.paths.output / "report.json", text);
  fs::create_directories(config.paths.output);
  audit.append_to(audit_log_path(config));
  return text;
}

void cmd_predict(const fs::path& model_path, const fs::path& cohort_path, const fs::path& out,
                 std::size_t horizon_months) {
  const TrainedModel model = load_model(model_path);
  const Cohort cohort = load_cohort(cohort_path);
  std::vector<std::size_t> rows(cohort.table.size());
  std::iota(rows.begin(), rows.end(), 0);
  write_text(out, predict_json(model, cohort, rows, horizon_months).dump(2) + "\n");
}

std::string cmd_latefusion(const RunConfig& config) {
  const Cohort cohort = load_cohort(config.paths.cohort);
  if (!cohort.has_volumes()) throw ConfigError("late fusion needs a cohort with volumes");
  const Split split = stratified_split(cohort.table.records(), config.split, config.seed);
  SplitAudit audit;
  const LateFusionModel lf = train_late_fusion(cohort, split, config, load_encoder(config.paths.encoder), audit);
  const ClinicalCox cox = fit_clinical_cox(cohort, split, audit);

  const auto rows = evaluation_rows(lf.image_model, cohort, audit);
  const auto records = cohort.table.records(rows);
  const double horizon = std::min(lf.image_model.grid.last_edge(), std::ranges::max(record_times(records)));
  const double threshold = lf.image_model.threshold_months;
  const auto boots = config.evaluation.bootstrap;
  Report late{"late_fusion",
              {evaluate_curves(cohort.name, late_fusion_curves(lf, cohort, rows), records, threshold, horizon, boots,
                               config.seed)}};
  Report clinical{"coxph",
                  {evaluate_curves(cohort.name, clinical_cox_curves(cox, cohort, rows), records, threshold, horizon,
                                   boots, config.seed)}};
  const std::string text = report_text({late, clinical});
  write_text(config.paths.output / "latefusion_report.json", text);
  audit.append_to(audit_log_path(config));
  return text;
}

void cmd_export_embeddings(const fs::path& model_path, const fs::path& cohort_path, const fs::path& out) {
  const TrainedModel model = load_model(model_path);
  const Cohort cohort = load_cohort(cohort_path);
  std::vector<std::size_t> rows(cohort.table.size());
  std::iota(rows.begin(), rows.end(), 0);
  write_text(out, embeddings_csv(model, cohort, rows));
}

}  // namespace mmsurv::harness
