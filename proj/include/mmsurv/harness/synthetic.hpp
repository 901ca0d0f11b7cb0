#pragma once

#include <cstdint>
#include <vector>

#include "mmsurv/harness/clinical.hpp"
#include "mmsurv/volume/phantom.hpp"

namespace mmsurv::harness {

struct SyntheticEffects {
  double clinical = 1.0;     // per unit of the standardized clinical score
  double image = 1.0;        // per unit of the standardized image score
  double interaction = 0.0;  // clinical score x image score
};

struct SyntheticOptions {
  std::uint64_t seed = 0;
  std::size_t n = 200;
  SyntheticEffects effects;
  double censor_rate = 0.3;
  double baseline_median_months = 12.0;
  volume::Dims dims;
  double noise = 0.05;
  bool with_volumes = true;
};

struct SyntheticCohort {
  CohortTable table;
  std::vector<volume::Volume> volumes;  // empty when with_volumes is off
  std::vector<volume::Phantom> phantoms;
  std::vector<double> clinical_score;
  std::vector<double> image_score;
  std::vector<double> true_risk;  // log hazard ratio
};

// Clinical marginals: age ~ N(63, 11) clipped to [18, 95], 60% male,
// resection GTR/NTR/NA = 0.5/0.3/0.2, MGMT methylated/unmethylated/NA =
// 0.35/0.35/0.3. Lesion radius ~ U(1.5, 5) voxels and rim brightness
// ~ U(0.5, 1.5) define the image score. Event times are the monthly ceiling
// of an exponential with median baseline_median_months * exp(-risk).
// Censoring is uniform on [0, c_max] with c_max solved so that the expected
// censored fraction equals censor_rate. Throws DegenerateInputError if no
// event survives censoring.
SyntheticCohort generate_synthetic_cohort(const SyntheticOptions& options);

// A corpus of unlabeled phantom volumes for encoder pretraining.
std::vector<volume::Volume> generate_pretraining_volumes(std::uint64_t seed, std::size_t n, volume::Dims dims,
                                                         double noise = 0.05);

}  // namespace mmsurv::harness
