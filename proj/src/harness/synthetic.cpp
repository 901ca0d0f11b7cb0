#include "mmsurv/harness/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>

#include "mmsurv/errors.hpp"

namespace mmsurv::harness {

namespace {

constexpr double kRadiusLo = 1.5, kRadiusHi = 5.0;
constexpr double kRimLo = 0.5, kRimHi = 1.5;

// Uniform(lo, hi) standardized to zero mean and unit variance.
double standardize_uniform(double v, double lo, double hi) {
  return (v - 0.5 * (lo + hi)) / ((hi - lo) / std::sqrt(12.0));
}

// Expected censored fraction P(C < T) for C ~ U(0, c_max).
double censored_fraction(const std::vector<double>& t, double c_max) {
  double s = 0.0;
  for (double ti : t) s += std::min(ti / c_max, 1.0);
  return s / static_cast<double>(t.size());
}

std::string patient_id(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "P%04zu", i + 1);
  return buf;
}

}  // namespace

SyntheticCohort generate_synthetic_cohort(const SyntheticOptions& o) {
  if (o.n < 20) throw ConfigError("synthetic cohorts need at least 20 patients");
  if (!(o.censor_rate >= 0.0 && o.censor_rate <= 0.9)) throw ConfigError("censor_rate must lie in [0, 0.9]");
  if (!(o.baseline_median_months > 0.0)) throw ConfigError("baseline median must be positive");

  std::mt19937_64 rng(o.seed);
  std::normal_distribution<double> age_dist(63.0, 11.0);
  std::bernoulli_distribution male(0.6);
  std::discrete_distribution<int> resection({0.5, 0.3, 0.2});
  std::discrete_distribution<int> mgmt({0.35, 0.35, 0.3});
  std::uniform_real_distribution<double> radius(kRadiusLo, kRadiusHi), rim(kRimLo, kRimHi);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  SyntheticCohort c;
  std::vector<double> latent_t;
  // age, resection and MGMT drive the clinical score; its spread is fixed
  // below so that effects are per standard deviation
  std::vector<double> raw_clinical;
  for (std::size_t i = 0; i < o.n; ++i) {
    ClinicalRow r;
    r.id = patient_id(i);
    r.age_years = std::clamp(age_dist(rng), 18.0, 95.0);
    r.sex = male(rng) ? Sex::male : Sex::female;
    r.resection = static_cast<Resection>(resection(rng));
    r.mgmt = static_cast<Mgmt>(mgmt(rng));
    const double resection_term = r.resection == Resection::gtr ? -0.6 : (r.resection == Resection::ntr ? 0.3 : 0.6);
    const double mgmt_term = r.mgmt == Mgmt::methylated ? -0.8 : (r.mgmt == Mgmt::unmethylated ? 0.5 : 0.1);
    raw_clinical.push_back(0.7 * (r.age_years - 63.0) / 11.0 + resection_term + mgmt_term);

    const double rad = radius(rng), brightness = rim(rng);
    c.phantoms.push_back(volume::random_phantom(o.dims, rad, brightness, rng));
    c.image_score.push_back(0.8 * standardize_uniform(rad, kRadiusLo, kRadiusHi) +
                            0.6 * standardize_uniform(brightness, kRimLo, kRimHi));
    c.table.rows.push_back(std::move(r));
  }
  // population moments of the clinical score under the sampling design
  constexpr double kClinicalMean = 0.35 * -0.8 + 0.35 * 0.5 + 0.3 * 0.1 + (0.5 * -0.6 + 0.3 * 0.3 + 0.2 * 0.6);
  const double res_var = 0.5 * 0.36 + 0.3 * 0.09 + 0.2 * 0.36 - std::pow(0.5 * -0.6 + 0.3 * 0.3 + 0.2 * 0.6, 2);
  const double mgmt_var = 0.35 * 0.64 + 0.35 * 0.25 + 0.3 * 0.01 - std::pow(0.35 * -0.8 + 0.35 * 0.5 + 0.3 * 0.1, 2);
  const double clinical_sd = std::sqrt(0.49 + res_var + mgmt_var);
  for (double v : raw_clinical) c.clinical_score.push_back((v - kClinicalMean) / clinical_sd);

  const double base_rate = std::log(2.0) / o.baseline_median_months;
  for (std::size_t i = 0; i < o.n; ++i) {
    const double risk = o.effects.clinical * c.clinical_score[i] + o.effects.image * c.image_score[i] +
                        o.effects.interaction * c.clinical_score[i] * c.image_score[i];
    c.true_risk.push_back(risk);
    latent_t.push_back(-std::log1p(-unit(rng)) / (base_rate * std::exp(risk)));
  }

  double c_max = std::numeric_limits<double>::infinity();
  if (o.censor_rate > 0.0) {
    double lo = 1e-9, hi = 1.0;
    while (censored_fraction(latent_t, hi) > o.censor_rate) hi *= 2.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (censored_fraction(latent_t, mid) > o.censor_rate ? lo : hi) = mid;
    }
    c_max = hi;
  }
  std::size_t events = 0;
  for (std::size_t i = 0; i < o.n; ++i) {
    const double cens = std::isfinite(c_max) ? unit(rng) * c_max : std::numeric_limits<double>::infinity();
    auto& r = c.table.rows[i];
    r.event = latent_t[i] <= cens ? 1 : 0;
    r.time_months = std::max(1.0, std::ceil(std::min(latent_t[i], cens)));
    events += static_cast<std::size_t>(r.event);
  }
  if (events == 0) throw DegenerateInputError("synthetic cohort has no observed events");

  if (o.with_volumes) {
    for (std::size_t i = 0; i < o.n; ++i) c.volumes.push_back(volume::render_phantom(o.dims, c.phantoms[i], rng, o.noise));
  }
  return c;
}

std::vector<volume::Volume> generate_pretraining_volumes(std::uint64_t seed, std::size_t n, volume::Dims dims,
                                                         double noise) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> radius(kRadiusLo, kRadiusHi), rim(kRimLo, kRimHi);
  std::vector<volume::Volume> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = radius(rng), b = rim(rng);
    out.push_back(volume::render_phantom(dims, volume::random_phantom(dims, r, b, rng), rng, noise));
  }
  return out;
}

}  // namespace mmsurv::harness
