#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nmsynth/config.hpp"
#include "nmsynth/data.hpp"

namespace nmsynth {

enum class ParamRole {
  baseline_u,        // study-specific log-odds under the study reference arm
  basic_d,           // log OR of treatment k vs the network reference
  study_delta,       // exchangeable per-study treatment effect (theta for bias_model_2)
  beta0,             // prognostic covariate effect, IPD studies
  beta0_mean,        // hyper-mean of random beta0
  interaction_w,     // within-study covariate-treatment interaction, per contrast
  interaction_b,     // between-study covariate-treatment interaction, per contrast
  basic_bw,          // within-interaction basic parameter
  basic_bb,          // between-interaction basic parameter
  bias_gamma_add,    // additive study bias effect
  bias_gamma_mult,   // multiplicative study bias effect, log scale
  delta_bias,        // bias-adjusted treatment effect (delta + gamma parametrization)
  bias_mean_g,       // mean bias for active-vs-inactive contrasts
  bias_mean_g_act,   // mean bias magnitude for active-vs-active contrasts
  tau,               // heterogeneity of treatment effects
  tau_b,             // heterogeneity of between-study interactions
  tau_w,             // heterogeneity of within-study interactions
  tau0,              // heterogeneity of random baseline covariate effects
  tau_gamma,         // heterogeneity of bias effects
  bias_pi,           // per-study bias probability
  bias_indicator,    // R_j
  direction,         // dir for an active-vs-active contrast
  rob_weight_q,      // per-study share of heterogeneity not attributed to bias
  p_direction,       // probability that bias favours the study reference
  logistic_e,        // intercept of the logistic bias-probability model
  logistic_f,        // z-coefficients of the logistic bias-probability model
};

enum class Support { real, positive_interval, unit_interval, binary };

enum class MarginalPrior { none, normal, uniform, beta };

struct ParamDescriptor {
  std::string name;
  ParamRole role{};
  Support support = Support::real;
  double upper = 0.0;  // for positive_interval
  MarginalPrior prior = MarginalPrior::none;
  double prior_a = 0.0;  // normal: mean; uniform: lo; beta: a
  double prior_b = 0.0;  // normal: variance; uniform: hi; beta: b
  int study = -1;        // index into net.studies
  int treatment = -1;    // treatment id for contrast/basic parameters
  int covariate = -1;    // z column for logistic_f
};

// One concrete value per descriptor, in descriptor order. Binary parameters
// are stored as 0.0/1.0.
struct ParameterState {
  std::vector<double> values;
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  std::size_t size() const { return values.size(); }
};

// The enumerated unknowns for one network + configuration, with index tables
// the kernel and sampler navigate by. Ordering is deterministic:
// u (study order), d (treatment id order), delta/theta (study x arm order),
// tau, regression terms, bias terms, indicator machinery.
struct ParameterSpace {
  std::vector<ParamDescriptor> params;

  std::vector<int> u;                       // per study
  std::vector<int> d;                       // per treatment id-1; reference stays -1 (fixed 0)
  std::vector<std::vector<int>> delta;      // per study, per non-reference arm
  std::vector<int> beta0;                   // per study (-1 for AD studies / regression off)
  int beta0_mean = -1;
  int tau0 = -1;
  std::vector<std::vector<int>> beta_w;     // per study, per non-reference arm
  std::vector<std::vector<int>> beta_b;
  std::vector<int> basic_bw;                // per treatment id-1
  std::vector<int> basic_bb;
  int tau = -1;
  int tau_b = -1;
  int tau_w = -1;
  std::vector<std::vector<int>> gamma_add;  // per study, per non-reference arm
  std::vector<std::vector<int>> gamma_mult;
  std::vector<std::vector<int>> delta_bias;
  int g_add = -1;
  int g_add_act = -1;
  int g_mult = -1;
  int g_mult_act = -1;
  int tau_gamma_add = -1;
  int tau_gamma_mult = -1;
  std::vector<int> pi;                      // per study
  std::vector<int> r_ind;                   // per study
  std::vector<int> q;                       // per study; -1 when fixed or absent
  std::vector<double> q_fixed;              // fixed q value per study (1.0 default)
  std::vector<std::vector<int>> dir;        // per study, per non-reference arm; -1 when not sampled
  std::vector<std::vector<int>> dir_const;  // fixed 0/1 when known, -1 otherwise
  int p_dir = -1;
  int e_logit = -1;
  std::vector<int> f_logit;                 // per z covariate

  std::size_t size() const { return params.size(); }
  int index_of(const std::string& name) const;  // -1 if absent
};

// Enumerates every symbol demanded by the configured equations, exactly once.
// Pure function of (net, cfg): identical inputs give identical orderings.
ParameterSpace build_parameter_space(const EvidenceNetwork& net, const ModelConfig& cfg);

// Deterministic starting point: location parameters get N(0, 0.1^2) jitter,
// heterogeneity sds start in Unif(0.1, 0.5), probabilities at their prior
// means, indicators at the rounded prior mean.
ParameterState initial_state(const ParameterSpace& space, std::uint64_t seed);

}  // namespace nmsynth
