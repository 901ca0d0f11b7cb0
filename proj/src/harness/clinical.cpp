#include "mmsurv/harness/clinical.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "mmsurv/errors.hpp"

namespace mmsurv::harness {

std::string to_string(Sex s) { return s == Sex::male ? "male" : "female"; }

std::string to_string(Resection r) {
  switch (r) {
    case Resection::gtr: return "GTR";
    case Resection::ntr: return "NTR";
    case Resection::na: return "NA";
  }
  return "NA";
}

std::string to_string(Mgmt m) {
  switch (m) {
    case Mgmt::methylated: return "methylated";
    case Mgmt::unmethylated: return "unmethylated";
    case Mgmt::na: return "NA";
  }
  return "NA";
}

std::vector<EventRecord> CohortTable::records() const {
  std::vector<EventRecord> r;
  r.reserve(rows.size());
  for (const auto& row : rows) r.push_back({row.time_months, row.event});
  return r;
}

std::vector<EventRecord> CohortTable::records(std::span<const std::size_t> idx) const {
  std::vector<EventRecord> r;
  r.reserve(idx.size());
  for (auto i : idx) r.push_back({rows.at(i).time_months, rows.at(i).event});
  return r;
}

namespace {

const std::vector<std::string> kRequired{"id", "age_years", "sex", "resection", "mgmt", "time_months", "event"};

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_line(const std::string& line, std::size_t row) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw ParseError("line " + std::to_string(row) + ": unterminated quote");
  cells.push_back(trim(cur));
  return cells;
}

double parse_number(const std::string& cell, const std::string& column, std::size_t row) {
  if (cell.empty()) throw ParseError("line " + std::to_string(row) + ": empty " + column + " (missing values are not supported)");
  double v = 0.0;
  const auto* end = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(cell.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw ParseError("line " + std::to_string(row) + ": malformed number '" + cell + "' in " + column);
  }
  return v;
}

bool is_karnofsky(std::string name) {
  std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
  return name == "kps" || name.starts_with("karnofsky");
}

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

CohortTable parse_clinical_csv(std::istream& in) {
  CohortTable table;
  std::string line;
  if (!std::getline(in, line)) throw ParseError("clinical CSV is empty");
  if (line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
  const auto header = split_line(line, 1);
  if (header.size() < kRequired.size() || !std::equal(kRequired.begin(), kRequired.end(), header.begin())) {
    throw ParseError("clinical CSV header must start with id,age_years,sex,resection,mgmt,time_months,event");
  }
  std::optional<std::size_t> volume_col;
  for (std::size_t c = kRequired.size(); c < header.size(); ++c) {
    if (header[c] == "volume" && !volume_col) {
      volume_col = c;
    } else if (is_karnofsky(header[c])) {
      table.warnings.push_back("ignoring column '" + header[c] + "' (Karnofsky status is excluded)");
    } else {
      throw ParseError("unknown column '" + header[c] + "'");
    }
  }

  std::set<std::string> seen;
  std::size_t row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (trim(line).empty()) continue;
    const auto cells = split_line(line, row_no);
    if (cells.size() != header.size()) {
      throw ParseError("line " + std::to_string(row_no) + ": expected " + std::to_string(header.size()) +
                       " cells, got " + std::to_string(cells.size()));
    }
    const std::string where = "line " + std::to_string(row_no) + ": ";
    ClinicalRow r;
    r.id = cells[0];
    if (r.id.empty()) throw ParseError(where + "empty id");
    if (!seen.insert(r.id).second) throw ParseError(where + "duplicate id '" + r.id + "'");
    r.age_years = parse_number(cells[1], "age_years", row_no);
    if (cells[2] == "male") {
      r.sex = Sex::male;
    } else if (cells[2] == "female") {
      r.sex = Sex::female;
    } else {
      throw ParseError(where + "sex must be male or female, got '" + cells[2] + "'");
    }
    if (cells[3] == "GTR") {
      r.resection = Resection::gtr;
    } else if (cells[3] == "NTR") {
      r.resection = Resection::ntr;
    } else if (cells[3] == "NA" || cells[3].empty()) {
      r.resection = Resection::na;
    } else {
      throw ParseError(where + "resection must be GTR, NTR or NA, got '" + cells[3] + "'");
    }
    if (cells[4] == "methylated") {
      r.mgmt = Mgmt::methylated;
    } else if (cells[4] == "unmethylated") {
      r.mgmt = Mgmt::unmethylated;
    } else if (cells[4] == "NA" || cells[4].empty()) {
      r.mgmt = Mgmt::na;
    } else {
      throw ParseError(where + "mgmt must be methylated, unmethylated or NA, got '" + cells[4] + "'");
    }
    r.time_months = parse_number(cells[5], "time_months", row_no);
    if (r.time_months <= 0.0) throw ParseError(where + "time_months must be positive");
    if (cells[6] != "0" && cells[6] != "1") throw ParseError(where + "event must be 0 or 1, got '" + cells[6] + "'");
    r.event = cells[6] == "1" ? 1 : 0;
    if (volume_col) r.volume = cells[*volume_col];
    table.rows.push_back(std::move(r));
  }
  return table;
}

CohortTable load_clinical_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open clinical CSV " + path.string());
  return parse_clinical_csv(in);
}

void write_clinical_csv(std::ostream& out, const CohortTable& table) {
  const bool with_volume =
      std::any_of(table.rows.begin(), table.rows.end(), [](const ClinicalRow& r) { return !r.volume.empty(); });
  out << "id,age_years,sex,resection,mgmt,time_months,event" << (with_volume ? ",volume" : "") << "\n";
  for (const auto& r : table.rows) {
    out << quote_if_needed(r.id) << ',' << format_number(r.age_years) << ',' << to_string(r.sex) << ','
        << to_string(r.resection) << ',' << to_string(r.mgmt) << ',' << format_number(r.time_months) << ','
        << r.event;
    if (with_volume) out << ',' << quote_if_needed(r.volume);
    out << "\n";
  }
}

void save_clinical_csv(const std::filesystem::path& path, const CohortTable& table) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write clinical CSV " + path.string());
  write_clinical_csv(out, table);
}

ClinicalSchema fit_clinical_schema(const CohortTable& table, std::span<const std::size_t> training_rows) {
  if (training_rows.empty()) throw InsufficientDataError("clinical schema needs training rows");
  ClinicalSchema s;
  s.age_min = s.age_max = table.rows.at(training_rows.front()).age_years;
  for (auto i : training_rows) {
    s.age_min = std::min(s.age_min, table.rows.at(i).age_years);
    s.age_max = std::max(s.age_max, table.rows.at(i).age_years);
  }
  return s;
}

double scale_age(double age, const ClinicalSchema& schema) {
  if (schema.age_max <= schema.age_min) return 0.0;
  const double z = 2.0 * (age - schema.age_min) / (schema.age_max - schema.age_min) - 1.0;
  return std::clamp(z, -1.0, 1.0);
}

ad::Tensor preprocess_clinical(const CohortTable& table, std::span<const std::size_t> rows,
                               const ClinicalSchema& schema) {
  if (!std::equal(schema.columns.begin(), schema.columns.end(), kCovariateColumns.begin(), kCovariateColumns.end())) {
    throw ContractError("clinical schema columns do not match the covariate layout");
  }
  if (rows.empty()) throw ShapeError("preprocess_clinical: no rows");
  ad::Tensor x({rows.size(), kCovariateColumns.size()}, 0.0);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& r = table.rows.at(rows[k]);
    x(k, 0) = scale_age(r.age_years, schema);
    x(k, r.sex == Sex::male ? 1 : 2) = 1.0;
    x(k, 3 + static_cast<std::size_t>(r.resection)) = 1.0;
    x(k, 6 + static_cast<std::size_t>(r.mgmt)) = 1.0;
  }
  return x;
}

ad::Tensor cox_design(const ad::Tensor& covariates) {
  if (covariates.cols() != kCovariateColumns.size()) throw ShapeError("cox_design: expected 9 covariates");
  const std::array<std::size_t, 6> keep{0, 1, 4, 5, 7, 8};
  ad::Tensor out({covariates.rows(), keep.size()});
  for (std::size_t i = 0; i < covariates.rows(); ++i)
    for (std::size_t j = 0; j < keep.size(); ++j) out(i, j) = covariates(i, keep[j]);
  return out;
}

}  // namespace mmsurv::harness
