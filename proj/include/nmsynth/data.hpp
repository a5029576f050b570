#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nmsynth/csv.hpp"

namespace nmsynth {

enum class Design { rct, nrs };
enum class DataFormat { ipd, ad };
enum class RobLevel { low, high, unclear };

std::string to_string(Design d);
std::string to_string(DataFormat f);
std::string to_string(RobLevel r);

struct Treatment {
  int id = 0;  // dense 1..K
  std::string label;
  bool is_active = true;  // placebo / standard care / no treatment => false
};

struct IpdRecord {
  int treatment = 0;
  int outcome = 0;  // binary
  std::vector<double> x;  // participant covariates, one entry per column
};

struct AdArm {
  int treatment = 0;
  long events = 0;
  long sample_size = 0;
  std::vector<double> mean_x;  // per-arm mean covariates
};

struct BetaParams {
  double a = 1.0;
  double b = 1.0;
};

// Direction of bias for an active-vs-active contrast: 0 favours the study
// reference b, 1 favours k, unknown is resolved by a latent indicator.
enum class BiasDirection { favours_b = 0, favours_k = 1, unknown = 2 };

struct Study {
  std::string id;
  Design design = Design::rct;
  DataFormat format = DataFormat::ad;
  RobLevel rob = RobLevel::low;
  int reference_arm = 0;           // treatment id of the study-specific reference b
  std::vector<int> arms;           // distinct treatment ids; reference first, rest in id order
  std::vector<IpdRecord> ipd;      // rows, independent observations (a participant
                                   // contributing several follow-up cycles appears once per cycle)
  std::vector<AdArm> ad;           // exactly one per arm when format == ad
  std::vector<double> z;           // study characteristics for the logistic bias-probability model
  std::optional<BetaParams> bias_prior;  // per-study override of the RoB-level beta prior
  std::map<std::pair<int, int>, BiasDirection> directions;  // (b, k) -> direction

  std::vector<int> non_reference_arms() const;
  const AdArm* ad_arm(int treatment) const;
  // Study-level mean covariate: sample-size-weighted over AD arms, plain row
  // mean for IPD.
  std::vector<double> mean_covariates(std::size_t dim) const;
  long total_sample_size() const;
};

struct EvidenceNetwork {
  std::vector<Treatment> treatments;  // index id-1
  std::vector<Study> studies;
  int reference_treatment = 1;        // network reference A
  std::vector<double> covariate_centers;  // applied shifts, zero until center_covariates
  std::vector<std::string> covariate_names;

  int treatment_count() const { return static_cast<int>(treatments.size()); }
  const Treatment& treatment(int id) const { return treatments.at(static_cast<std::size_t>(id - 1)); }
  bool is_active(int id) const { return treatment(id).is_active; }
  std::size_t covariate_dim() const { return covariate_names.size(); }
  const Study* find_study(const std::string& id) const;
};

struct ValidationIssue {
  bool fatal = false;
  std::string message;
};

struct ValidationReport {
  bool connected = false;
  std::vector<std::vector<int>> components;            // treatment ids per component
  std::map<std::pair<int, int>, int> comparison_arms;  // (a<b) pair -> number of studies
  std::map<std::string, bool> covariates_available;    // study id -> has covariate data
  std::map<RobLevel, int> rob_counts;
  std::vector<ValidationIssue> issues;

  bool ok() const;
  std::string describe(const EvidenceNetwork& net) const;
};

// Reads the four CSV schemas (directions optional, pass "" to skip) and links
// them into a network. Throws DataError naming file/row on any violation.
EvidenceNetwork load_network(const std::string& ipd_file, const std::string& ad_file,
                             const std::string& study_file, const std::string& treatment_file,
                             const std::string& directions_file = "");

// Same ingestion from in-memory tables (used by tests and the simulator).
EvidenceNetwork link_network(const CsvTable& treatments, const CsvTable& studies, const CsvTable& ipd,
                             const CsvTable& ad, const CsvTable* directions);

ValidationReport validate_network(const EvidenceNetwork& net);

// Throws DataError if validate_network reports a fatal issue.
void require_valid(const EvidenceNetwork& net);

// Returns a copy with every x_ijk and per-arm mean shifted by -centers and the
// applied centers recorded for back-transformation in reports.
EvidenceNetwork center_covariates(const EvidenceNetwork& net, const std::vector<double>& centers);

// Collapses an IPD study to aggregate arms: r = sum of outcomes, n = row
// count, mean covariates = arithmetic means.
std::vector<AdArm> aggregate_ipd(const Study& study);

// Writes the network back out in the ingestion schemas (round-trips with
// load_network). Paths may be empty to skip a file.
void export_network(const EvidenceNetwork& net, const std::string& ipd_file, const std::string& ad_file,
                    const std::string& study_file, const std::string& treatment_file,
                    const std::string& directions_file = "");

}  // namespace nmsynth
