#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mmsurv/autodiff/tensor.hpp"
#include "mmsurv/records.hpp"

namespace mmsurv::harness {

enum class Sex { male, female };
enum class Resection { gtr, ntr, na };
enum class Mgmt { methylated, unmethylated, na };

std::string to_string(Sex s);
std::string to_string(Resection r);
std::string to_string(Mgmt m);

struct ClinicalRow {
  std::string id;
  double age_years = 0.0;
  Sex sex = Sex::male;
  Resection resection = Resection::na;
  Mgmt mgmt = Mgmt::na;
  double time_months = 0.0;
  int event = 0;
  std::string volume;  // optional path, relative to the CSV's directory
};

struct CohortTable {
  std::vector<ClinicalRow> rows;
  std::vector<std::string> warnings;

  std::size_t size() const noexcept { return rows.size(); }
  std::vector<EventRecord> records() const;
  std::vector<EventRecord> records(std::span<const std::size_t> idx) const;
};

// Required header: id,age_years,sex,resection,mgmt,time_months,event. An
// optional trailing `volume` column is recognized; Karnofsky columns (kps,
// karnofsky*) are ignored with a warning; any other column is a ParseError.
// Empty resection/mgmt cells become NA; other empty cells are errors.
CohortTable parse_clinical_csv(std::istream& in);
CohortTable load_clinical_csv(const std::filesystem::path& path);
void write_clinical_csv(std::ostream& out, const CohortTable& table);
void save_clinical_csv(const std::filesystem::path& path, const CohortTable& table);

// Order of the preprocessed covariate columns.
inline const std::array<std::string, 9> kCovariateColumns{
    "age", "sex=male", "sex=female", "resection=GTR", "resection=NTR", "resection=NA",
    "mgmt=methylated", "mgmt=unmethylated", "mgmt=NA"};

// Fitted on the training split: training age range for the [-1, 1] map.
struct ClinicalSchema {
  std::vector<std::string> columns{kCovariateColumns.begin(), kCovariateColumns.end()};
  double age_min = 0.0;
  double age_max = 0.0;
};

ClinicalSchema fit_clinical_schema(const CohortTable& table, std::span<const std::size_t> training_rows);

// rows x 9 covariates. Ages outside the training range clamp to +-1. Throws
// ContractError when the schema's column list differs from this build's.
ad::Tensor preprocess_clinical(const CohortTable& table, std::span<const std::size_t> rows,
                               const ClinicalSchema& schema);
double scale_age(double age, const ClinicalSchema& schema);

// Cox design with reference levels dropped: age, sex=male, resection=NTR,
// resection=NA, mgmt=unmethylated, mgmt=NA.
ad::Tensor cox_design(const ad::Tensor& covariates);

}  // namespace mmsurv::harness
