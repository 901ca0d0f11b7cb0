#include "mmsurv/harness/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "mmsurv/autodiff/optim.hpp"
#include "mmsurv/errors.hpp"
#include "mmsurv/harness/checkpoint.hpp"
#include "mmsurv/stats/brier.hpp"
#include "mmsurv/stats/concordance.hpp"
#include "mmsurv/stats/dichotomize.hpp"
#include "mmsurv/stats/kaplan_meier.hpp"
#include "mmsurv/stats/tests.hpp"

namespace mmsurv::harness {

using nlohmann::json;

namespace {

constexpr std::size_t kPredictBatch = 64;
constexpr std::size_t kLateFusionFolds = 3;

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

void fnv1a(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
}

bool uses_clinical(fusion::Modality m) { return m != fusion::Modality::imaging; }
bool uses_imaging(fusion::Modality m) { return m != fusion::Modality::clinical; }

ad::Tensor stack_rows(const std::vector<const ad::Tensor*>& parts) {
  const std::size_t cols = parts.front()->cols();
  std::size_t rows = 0;
  for (const auto* t : parts) rows += t->rows();
  std::vector<double> data;
  data.reserve(rows * cols);
  for (const auto* t : parts) data.insert(data.end(), t->data().begin(), t->data().end());
  return ad::Tensor({rows, cols}, std::move(data));
}

// Per-row network inputs, computed on first use so only the rows a stage
// asks for are ever preprocessed.
class Featurizer {
 public:
  Featurizer(const TrainedModel& model, const Cohort& cohort) : model_(model), cohort_(cohort) {
    if (uses_imaging(model.modality)) {
      if (!model.encoder) throw ContractError("imaging variants need an encoder");
      if (!cohort.has_volumes()) throw ContractError("cohort '" + cohort.name + "' has no volumes");
      if (cohort.volumes.size() != cohort.table.size()) throw ShapeError("cohort volumes do not match its rows");
    }
  }

  fusion::Inputs inputs(ad::Graph& g, std::span<const std::size_t> rows) {
    fusion::Inputs in;
    in.batch = rows.size();
    if (uses_clinical(model_.modality)) {
      std::vector<const ad::Tensor*> parts;
      for (auto r : rows) parts.push_back(&covariates(r));
      in.clinical = g.constant(stack_rows(parts));
    }
    if (uses_imaging(model_.modality)) {
      std::vector<const ad::Tensor*> parts;
      if (model_.encoder_training == EncoderTraining::frozen) {
        for (auto r : rows) parts.push_back(&tokens(r));
        in.imaging = g.constant(stack_rows(parts));
      } else {
        for (auto r : rows) parts.push_back(&patches(r));
        in.imaging = model_.encoder->encoder.encode_tokens(g, g.constant(stack_rows(parts)), rows.size());
      }
    }
    return in;
  }

 private:
  const ad::Tensor& covariates(std::size_t row) {
    auto it = cov_.find(row);
    if (it == cov_.end()) {
      const std::size_t one[1] = {row};
      it = cov_.emplace(row, preprocess_clinical(cohort_.table, one, model_.schema)).first;
    }
    return it->second;
  }

  const ad::Tensor& patches(std::size_t row) {
    auto it = patches_.find(row);
    if (it == patches_.end()) {
      const auto& enc = model_.encoder->encoder;
      const auto v = volume::preprocess_volume(cohort_.volumes.at(row), model_.encoder->landmarks);
      if (!(v.dims() == enc.config().dims)) throw ShapeError("volume dims differ from the encoder's");
      it = patches_.emplace(row, volume::patchify(v, enc.config().patch)).first;
    }
    return it->second;
  }

  const ad::Tensor& tokens(std::size_t row) {
    auto it = tokens_.find(row);
    if (it == tokens_.end()) {
      const auto& enc = model_.encoder->encoder;
      const auto v = volume::preprocess_volume(cohort_.volumes.at(row), model_.encoder->landmarks);
      if (!(v.dims() == enc.config().dims)) throw ShapeError("volume dims differ from the encoder's");
      it = tokens_.emplace(row, enc.encode(v)).first;
    }
    return it->second;
  }

  const TrainedModel& model_;
  const Cohort& cohort_;
  std::map<std::size_t, ad::Tensor> cov_, patches_, tokens_;
};

std::vector<survival::SurvivalDistribution> predict_with(const TrainedModel& model, Featurizer& features,
                                                         std::span<const std::size_t> rows) {
  std::vector<survival::SurvivalDistribution> out;
  out.reserve(rows.size());
  for (std::size_t start = 0; start < rows.size(); start += kPredictBatch) {
    const auto chunk = rows.subspan(start, std::min(kPredictBatch, rows.size() - start));
    ad::Graph g;
    const auto fwd = model.net.forward(g, features.inputs(g, chunk));
    const auto& logits = fwd.logits.value();
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      out.push_back(survival::pmf_from_logits(logits.data().subspan(i * logits.cols(), logits.cols()), model.grid));
    }
  }
  return out;
}

std::vector<stats::SurvCurve> curves_of(const std::vector<survival::SurvivalDistribution>& dists) {
  std::vector<stats::SurvCurve> curves;
  curves.reserve(dists.size());
  for (const auto& d : dists) curves.push_back(d.curve());
  return curves;
}

double validation_ctd(const TrainedModel& model, Featurizer& features, std::span<const std::size_t> rows,
                      std::span<const EventRecord> records) {
  const auto curves = curves_of(predict_with(model, features, rows));
  try {
    return stats::c_td(curves, records);
  } catch (const UndefinedMetricError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

SplitIds ids_of(const CohortTable& table, const Split& split) {
  SplitIds ids;
  for (auto i : split.train) ids.train.push_back(table.rows.at(i).id);
  for (auto i : split.val) ids.val.push_back(table.rows.at(i).id);
  for (auto i : split.test) ids.test.push_back(table.rows.at(i).id);
  return ids;
}

Eigen::MatrixXd to_eigen(const ad::Tensor& t) {
  Eigen::MatrixXd m(t.rows(), t.cols());
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t c = 0; c < t.cols(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = t(r, c);
  }
  return m;
}

}  // namespace

Cohort cohort_from_synthetic(const SyntheticCohort& s, std::string name) {
  return Cohort{s.table, s.volumes, std::move(name)};
}

std::string cohort_fingerprint(const CohortTable& table) {
  std::ostringstream csv;
  write_clinical_csv(csv, table);
  const std::string text = csv.str();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  fnv1a(h, text.data(), text.size());
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

PretrainOutcome pretrain_encoder(std::span<const volume::Volume> corpus, const volume::EncoderConfig& config) {
  config.validate();
  if (corpus.size() < 2) throw InsufficientDataError("pretraining needs at least two volumes");
  const auto landmarks = volume::fit_landmarks(corpus);
  std::vector<volume::Volume> prepared;
  prepared.reserve(corpus.size());
  for (const auto& v : corpus) prepared.push_back(volume::preprocess_volume(v, landmarks));
  const std::size_t held = corpus.size() >= 6 ? std::max<std::size_t>(2, corpus.size() / 10) : 0;
  const std::span<const volume::Volume> all(prepared);
  volume::VolumeEncoder enc(config);
  auto result = volume::ssl_pretrain(enc, all.first(all.size() - held), all.last(held));
  return {ImagingEncoder{std::move(enc), landmarks}, std::move(result)};
}

ImagingEncoder untrained_encoder(std::span<const volume::Volume> reference, const volume::EncoderConfig& config) {
  config.validate();
  return ImagingEncoder{volume::VolumeEncoder(config), volume::fit_landmarks(reference)};
}

double training_median_threshold(std::span<const EventRecord> training) {
  if (training.empty()) throw InsufficientDataError("threshold needs training records");
  if (auto m = stats::median_survival(stats::kaplan_meier(training))) return *m;
  auto t = record_times(training);
  std::sort(t.begin(), t.end());
  const std::size_t n = t.size();
  return n % 2 == 1 ? t[n / 2] : 0.5 * (t[n / 2 - 1] + t[n / 2]);
}

TrainedModel train_model(const Cohort& cohort, const Split& split, fusion::Modality modality,
                         const RunConfig& config, std::optional<ImagingEncoder> encoder, SplitAudit& audit) {
  config.validate();
  if (split.train.size() < 2 || split.val.empty()) throw InsufficientDataError("training needs train and val rows");
  if (uses_imaging(modality) && !encoder) throw ContractError(fusion::to_string(modality) + " model needs an encoder");
  if (!uses_imaging(modality)) encoder.reset();

  audit.read(Partition::train, split.train.size(), "train: schema, time grid, threshold, fitting");
  const auto train_records = cohort.table.records(split.train);
  std::vector<double> train_times = record_times(train_records);

  fusion::ModelConfig mc = config.model;
  if (encoder) mc.imaging_width = encoder->encoder.config().width;
  TrainedModel m{modality,
                 fusion::FusionModel(mc, modality),
                 survival::build_time_grid(train_times, mc.bins),
                 fit_clinical_schema(cohort.table, split.train),
                 std::move(encoder),
                 config.training.encoder,
                 split,
                 ids_of(cohort.table, split),
                 cohort_fingerprint(cohort.table),
                 training_median_threshold(train_records),
                 {},
                 0};
  const bool tune_encoder = m.encoder && m.encoder_training == EncoderTraining::end_to_end;
  if (m.encoder) m.encoder->encoder.set_frozen(!tune_encoder);

  std::vector<ad::Parameter*> params = m.net.parameters().all();
  if (tune_encoder) {
    for (auto* p : m.encoder->encoder.parameters().all()) params.push_back(p);
  }
  ad::Adam opt(params, {.learning_rate = mc.learning_rate});
  std::mt19937_64 order_rng(stats::derive_seed(config.seed, 1));
  std::mt19937_64 dropout_rng(stats::derive_seed(config.seed, 2));

  Featurizer features(m, cohort);
  audit.read(Partition::val, split.val.size(), "train: early stopping");
  const auto val_records = cohort.table.records(split.val);

  std::vector<std::size_t> order = split.train;
  const std::size_t n = order.size();
  const std::size_t batches = (n + config.training.batch_size - 1) / config.training.batch_size;
  double best = -std::numeric_limits<double>::infinity();
  std::vector<ad::Tensor> best_net = m.net.parameters().snapshot();
  std::vector<ad::Tensor> best_enc;
  if (tune_encoder) best_enc = m.encoder->encoder.parameters().snapshot();
  std::size_t stale = 0;

  for (std::size_t epoch = 1; epoch <= config.training.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    double loss_sum = 0.0;
    std::size_t start = 0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t len = (n - start) / (batches - b);
      const std::span<const std::size_t> rows(order.data() + start, len);
      start += len;
      ad::Graph g;
      const auto fwd = m.net.forward(g, features.inputs(g, rows), mc.dropout > 0.0 ? &dropout_rng : nullptr);
      const auto records = cohort.table.records(rows);
      const auto loss = survival::total_loss(fwd.logits, records, m.grid, mc.loss);
      loss_sum += loss.value().item() * static_cast<double>(len);
      g.backward(loss);
      opt.step();
    }
    const double ctd = validation_ctd(m, features, split.val, val_records);
    m.history.push_back({epoch, loss_sum / static_cast<double>(n), ctd});
    if (ctd > best) {
      best = ctd;
      m.best_epoch = epoch;
      best_net = m.net.parameters().snapshot();
      if (tune_encoder) best_enc = m.encoder->encoder.parameters().snapshot();
      stale = 0;
    } else if (++stale >= config.training.patience) {
      break;
    }
  }
  m.net.parameters().restore(best_net);
  if (tune_encoder) m.encoder->encoder.parameters().restore(best_enc);
  if (m.encoder) m.encoder->encoder.set_frozen(true);
  m.encoder_training = tune_encoder ? EncoderTraining::end_to_end : EncoderTraining::frozen;
  return m;
}

std::vector<survival::SurvivalDistribution> predict_distributions(const TrainedModel& model, const Cohort& cohort,
                                                                  std::span<const std::size_t> rows) {
  Featurizer features(model, cohort);
  return predict_with(model, features, rows);
}

std::vector<stats::SurvCurve> predict_curves(const TrainedModel& model, const Cohort& cohort,
                                             std::span<const std::size_t> rows) {
  return curves_of(predict_distributions(model, cohort, rows));
}

ad::Tensor pooled_embeddings(const TrainedModel& model, const Cohort& cohort, std::span<const std::size_t> rows) {
  Featurizer features(model, cohort);
  std::vector<double> data;
  const std::size_t width = model.net.config().width;
  for (std::size_t start = 0; start < rows.size(); start += kPredictBatch) {
    const auto chunk = rows.subspan(start, std::min(kPredictBatch, rows.size() - start));
    ad::Graph g;
    const auto fwd = model.net.forward(g, features.inputs(g, chunk));
    const auto& p = fwd.pooled.value();
    data.insert(data.end(), p.data().begin(), p.data().end());
  }
  return ad::Tensor({rows.size(), width}, std::move(data));
}

CohortMetrics evaluate_curves(const std::string& name, std::span<const stats::SurvCurve> curves,
                              std::span<const EventRecord> records, double threshold_months, double ibs_horizon,
                              std::size_t bootstrap, std::uint64_t seed) {
  if (curves.size() != records.size()) throw ShapeError("evaluate: curves and records differ in length");
  CohortMetrics m;
  m.name = name;
  m.n = records.size();
  m.threshold_months = threshold_months;
  m.ibs_horizon_months = ibs_horizon;
  m.seed = seed;

  std::vector<stats::SurvCurve> sub_curves;
  std::vector<EventRecord> sub_records;
  auto take = [&](std::span<const std::size_t> idx) {
    sub_curves.clear();
    sub_records.clear();
    for (auto i : idx) {
      sub_curves.push_back(curves[i]);
      sub_records.push_back(records[i]);
    }
  };
  m.ctd = stats::bootstrap_ci(records.size(), bootstrap, seed, [&](std::span<const std::size_t> idx) {
    take(idx);
    return stats::c_td(sub_curves, sub_records);
  });
  m.ibs = stats::bootstrap_ci(records.size(), bootstrap, seed, [&](std::span<const std::size_t> idx) {
    take(idx);
    return stats::integrated_brier(sub_curves, sub_records, ibs_horizon);
  });

  const auto groups = stats::dichotomize(curves, threshold_months);
  std::vector<EventRecord> fav, unfav;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    (groups[i] == stats::RiskGroup::favorable ? fav : unfav).push_back(records[i]);
  }
  m.favorable = fav.size();
  m.unfavorable = unfav.size();
  try {
    m.logrank_p = stats::logrank(fav, unfav).p_value;
  } catch (const UndefinedMetricError&) {
    m.logrank_p.reset();
  }
  return m;
}

std::vector<std::size_t> evaluation_rows(const TrainedModel& model, const Cohort& cohort, SplitAudit& audit) {
  audit.begin_evaluation();
  if (cohort_fingerprint(cohort.table) == model.cohort_fingerprint) {
    audit.read(Partition::test, model.split.test.size(), "evaluate: " + cohort.name);
    return model.split.test;
  }
  std::vector<std::size_t> all(cohort.table.size());
  std::iota(all.begin(), all.end(), 0);
  return all;
}

CohortMetrics evaluate_model(const TrainedModel& model, const Cohort& cohort, SplitAudit& audit,
                             std::size_t bootstrap, std::uint64_t seed) {
  const auto rows = evaluation_rows(model, cohort, audit);
  const auto curves = predict_curves(model, cohort, rows);
  const auto records = cohort.table.records(rows);
  const double horizon = std::min(model.grid.last_edge(), std::ranges::max(record_times(records)));
  return evaluate_curves(cohort.name, curves, records, model.threshold_months, horizon, bootstrap, seed);
}

json to_json(const CohortMetrics& m) {
  auto ci = [](const stats::ConfidenceInterval& c) { return json::array({c.lower, c.upper}); };
  return json{{"name", m.name},
              {"n", m.n},
              {"ctd", m.ctd.estimate},
              {"ctd_ci", ci(m.ctd)},
              {"ctd_mean", m.ctd.mean},
              {"ctd_margin", m.ctd.margin},
              {"ibs", m.ibs.estimate},
              {"ibs_ci", ci(m.ibs)},
              {"ibs_mean", m.ibs.mean},
              {"ibs_margin", m.ibs.margin},
              {"ibs_horizon_months", m.ibs_horizon_months},
              {"logrank_p", m.logrank_p ? json(*m.logrank_p) : json(nullptr)},
              {"favorable", m.favorable},
              {"unfavorable", m.unfavorable},
              {"threshold_months", m.threshold_months},
              {"bootstrap_resamples", m.ctd.resamples_used},
              {"seed", m.seed}};
}

std::string report_text(const std::vector<Report>& reports) {
  json out = json::array();
  for (const auto& r : reports) {
    json cohorts = json::array();
    for (const auto& c : r.cohorts) cohorts.push_back(to_json(c));
    out.push_back({{"setup", r.setup}, {"cohorts", cohorts}});
  }
  return out.dump(2) + "\n";
}

LateFusionModel train_late_fusion(const Cohort& cohort, const Split& split, const RunConfig& config,
                                  ImagingEncoder encoder, SplitAudit& audit) {
  RunConfig image_config = config;
  image_config.training.encoder = EncoderTraining::frozen;
  const json encoder_state = encoder_to_json(encoder);
  LateFusionModel lf{train_model(cohort, split, fusion::Modality::imaging, image_config, std::move(encoder), audit),
                     {},
                     {},
                     config.evaluation.late_fusion_months};

  // Out-of-fold index for the training rows, so the Cox stage never sees an
  // index fitted to the same outcomes.
  std::vector<std::size_t> shuffled = split.train;
  std::mt19937_64 rng(stats::derive_seed(config.seed, 3));
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  std::map<std::size_t, double> index;
  for (std::size_t fold = 0; fold < kLateFusionFolds; ++fold) {
    Split inner{{}, split.val, {}};
    std::vector<std::size_t> held;
    for (std::size_t k = 0; k < shuffled.size(); ++k) (k % kLateFusionFolds == fold ? held : inner.train).push_back(shuffled[k]);
    std::sort(inner.train.begin(), inner.train.end());
    const auto fold_model = train_model(cohort, inner, fusion::Modality::imaging, image_config,
                                        encoder_from_json(encoder_state), audit);
    const auto dists = predict_distributions(fold_model, cohort, held);
    for (std::size_t k = 0; k < held.size(); ++k) index[held[k]] = -dists[k].survival_at(lf.index_months);
  }
  audit.read(Partition::train, split.train.size(), "latefusion: cox fit");
  std::vector<double> train_index;
  for (auto i : split.train) train_index.push_back(index.at(i));
  const Eigen::MatrixXd x = late_fusion_design(lf, cohort, split.train, train_index);
  const auto records = cohort.table.records(split.train);
  lf.fit = stats::fit_coxph(x, records);
  lf.baseline = stats::breslow_baseline(lf.fit, x, records);
  return lf;
}

Eigen::MatrixXd late_fusion_design(const LateFusionModel& model, const Cohort& cohort,
                                   std::span<const std::size_t> rows, std::span<const double> index) {
  const Eigen::MatrixXd clinical =
      to_eigen(cox_design(preprocess_clinical(cohort.table, rows, model.image_model.schema)));
  Eigen::MatrixXd x(clinical.rows(), clinical.cols() + 1);
  x.col(0) = Eigen::Map<const Eigen::VectorXd>(index.data(), static_cast<Eigen::Index>(index.size()));
  x.rightCols(clinical.cols()) = clinical;
  return x;
}

Eigen::MatrixXd late_fusion_design(const LateFusionModel& model, const Cohort& cohort,
                                   std::span<const std::size_t> rows) {
  const auto dists = predict_distributions(model.image_model, cohort, rows);
  std::vector<double> index;
  for (const auto& d : dists) index.push_back(-d.survival_at(model.index_months));
  return late_fusion_design(model, cohort, rows, index);
}

std::vector<stats::SurvCurve> late_fusion_curves(const LateFusionModel& model, const Cohort& cohort,
                                                 std::span<const std::size_t> rows) {
  const Eigen::MatrixXd x = late_fusion_design(model, cohort, rows);
  std::vector<stats::SurvCurve> out;
  for (Eigen::Index i = 0; i < x.rows(); ++i) out.push_back(stats::cox_survival(model.baseline, model.fit, x.row(i)));
  return out;
}

ClinicalCox fit_clinical_cox(const Cohort& cohort, const Split& split, SplitAudit& audit) {
  audit.read(Partition::train, split.train.size(), "coxph: fit");
  ClinicalCox c;
  c.schema = fit_clinical_schema(cohort.table, split.train);
  const Eigen::MatrixXd x = to_eigen(cox_design(preprocess_clinical(cohort.table, split.train, c.schema)));
  const auto records = cohort.table.records(split.train);
  c.fit = stats::fit_coxph(x, records);
  c.baseline = stats::breslow_baseline(c.fit, x, records);
  return c;
}

std::vector<stats::SurvCurve> clinical_cox_curves(const ClinicalCox& model, const Cohort& cohort,
                                                  std::span<const std::size_t> rows) {
  const Eigen::MatrixXd x = to_eigen(cox_design(preprocess_clinical(cohort.table, rows, model.schema)));
  std::vector<stats::SurvCurve> out;
  for (Eigen::Index i = 0; i < x.rows(); ++i) out.push_back(stats::cox_survival(model.baseline, model.fit, x.row(i)));
  return out;
}

json predict_json(const TrainedModel& model, const Cohort& cohort, std::span<const std::size_t> rows,
                  std::size_t horizon_months) {
  const auto dists = predict_distributions(model, cohort, rows);
  json out = json::array();
  std::vector<std::size_t> months(horizon_months + 1);
  std::iota(months.begin(), months.end(), 0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.push_back({{"id", cohort.table.rows.at(rows[i]).id},
                   {"months", months},
                   {"survival", survival::survival_monthly(dists[i], horizon_months)}});
  }
  return out;
}

std::string embeddings_csv(const TrainedModel& model, const Cohort& cohort, std::span<const std::size_t> rows) {
  if (model.modality != fusion::Modality::multimodal) {
    throw ContractError("embedding export needs a multimodal checkpoint");
  }
  const ad::Tensor e = pooled_embeddings(model, cohort, rows);
  std::ostringstream out;
  out << "id";
  for (std::size_t j = 0; j < e.cols(); ++j) out << ",e" << j;
  out << ",mgmt,resection\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = cohort.table.rows.at(rows[i]);
    out << row.id;
    for (std::size_t j = 0; j < e.cols(); ++j) out << ',' << format_double(e(i, j));
    out << ',' << to_string(row.mgmt) << ',' << to_string(row.resection) << '\n';
  }
  return out.str();
}

}  // namespace mmsurv::harness
