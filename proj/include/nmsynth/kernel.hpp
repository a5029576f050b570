#pragma once

#include <cstddef>
#include <vector>

#include "nmsynth/config.hpp"
#include "nmsynth/data.hpp"
#include "nmsynth/space.hpp"

namespace nmsynth {

// Stable log(1 + e^m); never materializes probabilities of exactly 0 or 1.
double softplus(double m);
double log_sigmoid(double m);
double inv_logit(double m);
double normal_logpdf(double x, double mean, double var);

// Log density of a multivariate normal with the multi-arm correlation
// structure: diagonal variances v_i, off-diagonals half the geometric mean
// of the corresponding diagonals. For equal v this is v * (I + J)/2.
double multiarm_normal_logpdf(const std::vector<double>& y, const std::vector<double>& mean,
                              const std::vector<double>& var);

// Joint log-posterior evaluator. Decomposes the target into per-study data
// terms, per-study structural prior terms ("blocks") and per-parameter
// marginal priors, with an index of which blocks each parameter touches so
// the sampler can evaluate single-site conditionals at local cost.
class PosteriorKernel {
public:
  PosteriorKernel(const EvidenceNetwork& net, const ModelConfig& cfg, const ParameterSpace& space);

  const EvidenceNetwork& network() const { return *net_; }
  const ModelConfig& config() const { return *cfg_; }
  const ParameterSpace& space() const { return *space_; }

  std::size_t block_count() const { return blocks_.size(); }
  double eval_block(std::size_t block, const ParameterState& s) const;
  const std::vector<int>& blocks_for(std::size_t param) const { return deps_[param]; }
  double marginal_logprior(std::size_t param, double value) const;

  // Full joint evaluation; deterministic; throws std::invalid_argument when a
  // parameter value is NaN (support violations return -inf instead).
  double log_posterior(const ParameterState& s) const;

  double data_loglik(const ParameterState& s) const;
  double ipd_loglik(const ParameterState& s) const;
  double ad_loglik(const ParameterState& s) const;
  double data_loglik_study(const ParameterState& s, std::size_t study) const;

  double linear_predictor_ipd(const ParameterState& s, std::size_t study, std::size_t row) const;
  double linear_predictor_ad(const ParameterState& s, std::size_t study, int treatment) const;

  double random_effects_logprior(const ParameterState& s, std::size_t study) const;
  double interaction_logprior(const ParameterState& s) const;
  double bias_structure_logprior(const ParameterState& s) const;
  double bias_probability_logprior(const ParameterState& s) const;
  // Conditional theta prior given the sampled indicator (latent representation).
  double mixture_logprior_theta(const ParameterState& s, std::size_t study) const;
  // Direct two-component mixture density of the study's theta vector.
  double mixture_logprior_theta_marginal(const ParameterState& s, std::size_t study) const;
  double hyperprior_logdensity(const ParameterState& s) const;

  // Bias probability of study j under the current state (beta or logistic model).
  double bias_probability(const ParameterState& s, std::size_t study) const;

  // Symbol audit: marks every parameter read by at least one block or marginal.
  std::vector<bool> referenced_params() const;

private:
  struct MeanBias {
    enum class Kind { zero, g_plus, g_minus, g_act } kind = Kind::zero;
    int idx_g = -1;
    int idx_dir = -1;
    int dir_const = 0;
    double resolve(const ParameterState& s) const;
  };

  struct ArmData {
    int treatment = 0;
    // aggregate side
    double events = 0.0, size = 0.0, log_choose = 0.0;
    // participant side (selected covariate only)
    std::vector<double> x;
    std::vector<unsigned char> y;
    double sum_y = 0.0, rows = 0.0;
  };

  struct Contrast {
    int treatment = 0;
    int idx_delta = -1;
    int idx_dk = -1, idx_db = -1;
    int idx_gamma_add = -1, idx_gamma_mult = -1, idx_delta_bias = -1;
    int idx_beta_w = -1, idx_beta_b = -1;
    int idx_bw_k = -1, idx_bw_b = -1, idx_bb_k = -1, idx_bb_b = -1;
    MeanBias mb_add, mb_mult;
  };

  enum class TermMode { plain, bias1_gamma, bias1_dbias, theta_sampled, theta_deterministic };

  struct StudyPlan {
    bool ipd = false;
    double xbar = 0.0;  // study-level mean of the active covariate
    std::vector<ArmData> arms;  // [0] is the study reference arm
    std::vector<Contrast> contrasts;  // aligned with arms[1..]
  };

  struct Block {
    enum class Kind { data, re_delta, theta_prior, int_b, int_w, beta0_re, gamma_add, gamma_mult, dbias, pi_r, dir_bern };
    Kind kind;
    int study;
  };

  double treatment_term(const ParameterState& s, const StudyPlan& plan, const Contrast& c, double r_value,
                        std::size_t study) const;
  double contrast_ddiff(const ParameterState& s, const Contrast& c) const;
  double arm_loglik_ipd(const ParameterState& s, const StudyPlan& plan, std::size_t arm_pos,
                        std::size_t study) const;
  double arm_loglik_ad(const ParameterState& s, const StudyPlan& plan, std::size_t arm_pos,
                       std::size_t study) const;
  double indicator_value(const ParameterState& s, std::size_t study) const;
  double theta_component_var(const ParameterState& s, std::size_t study, bool biased) const;
  double resolved_gamma_add(const ParameterState& s, std::size_t study, std::size_t m) const;

  void build_plans();
  void build_blocks();
  void register_dep(int param, int block);

  const EvidenceNetwork* net_;
  const ModelConfig* cfg_;
  const ParameterSpace* space_;
  TermMode term_mode_ = TermMode::plain;
  bool mult_active_ = false, add_active_ = false;
  std::vector<StudyPlan> plans_;
  std::vector<Block> blocks_;
  std::vector<std::vector<int>> deps_;  // param -> sorted block ids
};

}  // namespace nmsynth
