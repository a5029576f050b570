#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nmsynth/data.hpp"
#include "nmsynth/sampler.hpp"

namespace nmsynth {

// A two-treatment, aggregate-only, common-effect model small enough for
// tensor-product quadrature: free parameters are one baseline per study plus
// (optionally) the single basic contrast, at most 3 in total.
struct TinyStudy {
  long r_ref = 0, n_ref = 1;  // reference (treatment 1) arm
  long r_trt = 0, n_trt = 1;  // treatment 2 arm
};

struct TinyModelSpec {
  std::vector<TinyStudy> studies;  // up to 2; may be empty for prior recovery
  bool include_d = true;
  double prior_mean_u = 0.0, prior_var_u = 100.0;
  double prior_mean_d = 0.0, prior_var_d = 100.0;
  int points_per_dim = 400;
  double range_sds = 8.0;  // grid half-width in prior sds
};

struct OracleMoments {
  std::vector<std::string> names;  // u[1..], then d
  std::vector<double> mean;
  std::vector<double> sd;
  double log_normalizer = 0.0;
};

// Posterior moments by tensor-product trapezoidal quadrature on a grid of
// prior mean +- range_sds prior sds with points_per_dim nodes per dimension.
// Self-contained binomial-logit evaluation, independent of PosteriorKernel.
OracleMoments grid_posterior_oracle(const TinyModelSpec& spec);

// The network and configuration matching a TinyModelSpec, for fitting the
// same model through the production path.
EvidenceNetwork tiny_network(const TinyModelSpec& spec);
ModelConfig tiny_config(const TinyModelSpec& spec);

// ---- synthetic network generation -----------------------------------------

struct SimStudySpec {
  std::string id;
  Design design = Design::rct;
  DataFormat format = DataFormat::ad;
  RobLevel rob = RobLevel::low;
  std::vector<int> arms;        // treatment ids, [0] = study reference
  std::vector<long> arm_sizes;  // aligned with arms
  double cov_mean = 0.0;        // covariate distribution for this study
  double cov_sd = 0.0;          // 0 = no covariate column
  std::map<std::pair<int, int>, BiasDirection> directions;
};

struct SimulationSpec {
  std::vector<Treatment> treatments;
  int reference = 1;
  std::vector<SimStudySpec> studies;
  std::vector<double> d_true;       // per treatment id-1; reference entry 0
  double tau = 0.0;                 // between-study sd of treatment effects
  double u_mean = -0.5, u_sd = 0.4; // study baselines
  bool with_covariate = false;
  double beta0_true = 0.0;                // prognostic effect per covariate unit
  std::vector<double> beta1_true;         // per treatment id-1 interaction (within = between)
  double g_true = 0.0, g_act_true = 0.0;  // additive mean bias
  double tau_gamma = 0.0;
  double pi_low = 0.02, pi_high = 0.98, pi_unclear = 0.5;  // generation P(R_j = 1)
  std::uint64_t seed = 1;
};

struct TruthRecord {
  std::map<std::string, double> values;       // d[label], g_add, tau, ...
  std::map<std::string, int> study_biased;    // study id -> generated R_j
  std::map<std::string, double> study_u;      // study id -> generated baseline
};

struct SimulatedNetwork {
  EvidenceNetwork network;
  TruthRecord truth;
};

// Draws IPD rows Bernoulli and AD arms binomial at the configured logits;
// studies flagged biased (R_j = 1 with the class probability) have additive
// bias gamma ~ N(g, tau_gamma^2) applied to their contrasts, oriented so the
// bias favours the active treatment. Deterministic per seed.
SimulatedNetwork simulate_network(const SimulationSpec& spec);

// Presets for the CLI: "rrms-shape" mirrors the six-study mixed-design
// network shape; "tiny" is a quadrature-tractable fixture; "two-step" has a
// large NRS study and small RCTs on two treatments.
SimulationSpec preset_spec(const std::string& name, std::uint64_t seed);

void write_truth_csv(const TruthRecord& truth, const std::string& path);

// ---- recovery experiments ---------------------------------------------------

struct RecoveryRow {
  std::string name;
  double truth = 0.0;
  int covered = 0;      // replicates whose CrI contains the truth
  int replicates = 0;
  double mean_bias = 0.0;      // average of (posterior median - truth)
  double mean_median = 0.0;
};

struct RecoveryReport {
  std::vector<RecoveryRow> rows;
  const RecoveryRow* find(const std::string& name) const;
  void write_csv(const std::string& path) const;
};

// Repeatedly simulates from spec (seed + replicate), fits cfg/settings, and
// tallies CrI coverage of the generating values for the basic parameters and
// the mean bias effect.
RecoveryReport recovery_experiment(const SimulationSpec& spec, const ModelConfig& cfg,
                                   const SamplerSettings& settings, int replicates);

}  // namespace nmsynth
