#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nmsynth/sampler.hpp"

namespace nmsynth {

// Equal-tailed quantile with linear interpolation between order statistics
// (h = (n-1)p). draws need not be sorted.
double quantile(std::vector<double> draws, double p);

struct ParamSummary {
  std::string name;
  double median = 0.0, lo = 0.0, hi = 0.0, mean = 0.0, sd = 0.0;
  std::optional<double> rhat;
  std::optional<double> ess;
};

struct IntervalSummary {
  double median = 0.0, lo = 0.0, hi = 0.0;
};

struct CurvePoint {
  double x_raw = 0.0;
  IntervalSummary value;
};

struct BiasSummary {
  // Exponentiated mean-bias effects; key is the parameter name, e.g. exp(g_add).
  std::map<std::string, IntervalSummary> exp_g;
  std::map<std::string, IntervalSummary> tau_gamma;
  std::map<std::string, double> prob_biased;  // study id -> posterior P(R_j = 1)
};

struct FitReport {
  double level = 0.95;
  std::vector<ParamSummary> params;
  std::vector<std::string> treatment_labels;
  int reference_treatment = 1;
  // league[a][b] summarizes the OR of treatment b vs treatment a, contrasts
  // computed per draw so the table is exactly consistent on the log scale.
  std::vector<std::vector<IntervalSummary>> league_or;
  BiasSummary bias;
  // Per non-reference active treatment: OR-vs-reference across the covariate grid.
  std::map<std::string, std::vector<CurvePoint>> curves;
  std::vector<double> covariate_centers;

  const ParamSummary* find(const std::string& name) const;
  double max_rhat() const;  // NaN when no parameter has a computable rhat
};

FitReport summarize(const PosteriorSamples& samples, double level = 0.95);

std::vector<std::vector<IntervalSummary>> league_table(const PosteriorSamples& samples,
                                                       const EvidenceNetwork& net, const ParameterSpace& space,
                                                       bool or_scale, double level = 0.95);

std::vector<CurvePoint> regression_curve(const PosteriorSamples& samples, const EvidenceNetwork& net,
                                         const ParameterSpace& space, int treatment,
                                         const std::vector<double>& grid_raw, double center,
                                         double level = 0.95);

BiasSummary bias_report(const PosteriorSamples& samples, const EvidenceNetwork& net, const ParameterSpace& space,
                        double level = 0.95);

// Full report for a fitted model; the curve grid is used only when the
// configuration has regression enabled (empty grid = 20..60 step 1).
FitReport build_report(const PosteriorSamples& samples, const EvidenceNetwork& net, const ParameterSpace& space,
                       const ModelConfig& cfg, double level = 0.95, std::vector<double> grid_raw = {});

// Writes summaries.csv, league.csv, forest.csv, report.json and, when curves
// are present, curves.csv plus simple SVG forest/curve plots.
void export_report(const FitReport& report, const std::string& directory);

// Re-reads an exported summaries.csv (round-trips with export_report).
std::vector<ParamSummary> read_summaries_csv(const std::string& path);

}  // namespace nmsynth
