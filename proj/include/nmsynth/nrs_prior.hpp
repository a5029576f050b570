#pragma once

#include <map>
#include <string>
#include <vector>

#include "nmsynth/report.hpp"
#include "nmsynth/sampler.hpp"

namespace nmsynth {

struct NrsPosteriorEntry {
  int treatment = 0;
  bool observed = false;  // seen in at least one NRS study
  double mean = 0.0;
  double variance = 0.0;
  double skewness = 0.0;
};

struct NrsPosteriorSummary {
  int reference = 1;  // treatment the basic parameters are rooted at
  std::vector<NrsPosteriorEntry> entries;  // one per non-reference treatment

  const NrsPosteriorEntry* find(int treatment) const;
  void write_csv(const std::string& path, const EvidenceNetwork& net) const;
  static NrsPosteriorSummary read_csv(const std::string& path, const EvidenceNetwork& net);
};

// Keeps only studies of one design; treatment list and ids are preserved.
EvidenceNetwork filter_by_design(const EvidenceNetwork& net, Design design);

// Treatments reachable from any study of the given design.
std::vector<int> observed_treatments(const EvidenceNetwork& net, Design design);

// Reference used for the whole two-step run: the configured label when given,
// else the network reference if NRS-observed, else the lowest NRS-observed id.
int two_step_reference(const EvidenceNetwork& net, const ModelConfig& cfg);

// Step 1: fit the NRS stratum alone and summarize each observed basic
// parameter by its posterior mean and variance (normal approximation;
// |skewness| > 0.5 earns a warning flag in the entry).
NrsPosteriorSummary fit_nrs_posterior(const EvidenceNetwork& net, const ModelConfig& cfg,
                                      const SamplerSettings& settings);

// d_Ak ~ N(mean + zeta, variance / w) for NRS-observed contrasts; unobserved
// contrasts keep vague priors (no override emitted).
std::map<int, NormalPrior> make_informative_priors(const NrsPosteriorSummary& summary, double zeta, double w);

struct TwoStepFit {
  EvidenceNetwork network;  // re-rooted full network
  NrsPosteriorSummary step1;
  PosteriorSamples step1_samples;
  ParameterSpace step1_space;
  EvidenceNetwork step2_network;  // RCT stratum
  ModelConfig step2_config;
  ParameterSpace step2_space;
  PosteriorSamples step2_samples;
};

// The full 3.2.2 workflow: NRS-only fit, posterior -> shifted/inflated
// priors, RCT-only refit. Step 2 keeps the full treatment list; informative
// priors carry identification for contrasts unobserved in the RCT stratum.
TwoStepFit run_two_step(const EvidenceNetwork& net, const ModelConfig& cfg, const SamplerSettings& settings);

}  // namespace nmsynth
