#pragma once

#include <map>
#include <optional>
#include <string>

#include "nmsynth/data.hpp"

namespace nmsynth {

class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

enum class Approach { unadjusted, nrs_prior, bias_model_1, bias_model_2 };
enum class EffectModel { random_effect, common_effect };
enum class Beta0Model { independent, random_effect };
enum class WithinBetween { separate, equal };
enum class BiasForm { additive, multiplicative, both };
enum class BiasMeanStructure { zero_active_active, signed_active_active };
enum class BiasProbabilityModel { per_study_beta, logistic_on_z };
enum class BiasHeterogeneity { tau_prior, rob_weight };

std::string to_string(Approach a);
Approach approach_from_string(const std::string& s);

struct RegressionConfig {
  bool enabled = false;
  std::string covariate;            // column name, e.g. "x1"
  int covariate_index = -1;         // resolved against the network
  Beta0Model baseline = Beta0Model::independent;
  WithinBetween within_between = WithinBetween::separate;
  EffectModel interaction = EffectModel::random_effect;
};

// How q_j is treated for one RoB class under the rob_weight parametrization.
struct RobWeightRule {
  bool fixed = false;
  double value = 1.0;  // fixed q in (0,1], or v of Beta(v,1)
};

struct BiasConfig {
  BiasForm form = BiasForm::additive;
  EffectModel effect = EffectModel::common_effect;
  BiasMeanStructure mean_structure = BiasMeanStructure::zero_active_active;
  BiasProbabilityModel probability_model = BiasProbabilityModel::per_study_beta;
  BetaParams pi_low{1, 100};
  BetaParams pi_high{100, 1};
  BetaParams pi_unclear{1, 1};    // uniform for unclear RoB
  BetaParams direction_prior{1, 1};
  BiasHeterogeneity heterogeneity = BiasHeterogeneity::tau_prior;
  std::map<RobLevel, RobWeightRule> rob_weight;  // used when heterogeneity == rob_weight

  const BetaParams& pi_prior(const Study& s) const;
  RobWeightRule rob_weight_rule(RobLevel level) const;
};

struct NormalPrior {
  double mean = 0.0;
  double variance = 100.0;
};

struct PriorConfig {
  double vague_sd = 10.0;   // N(0, vague_sd^2) on locations
  double tau_upper = 2.0;   // Unif(0, tau_upper) on every heterogeneity sd
};

struct NrsPriorSettings {
  double zeta = 0.0;  // mean shift
  double w = 1.0;     // variance inflation divisor, 0 < w <= 1
  std::string step1_reference;  // treatment label; empty = auto
};

struct ModelConfig {
  Approach approach = Approach::unadjusted;
  EffectModel trt_effect = EffectModel::random_effect;
  RegressionConfig regression;
  std::optional<BiasConfig> bias;
  NrsPriorSettings nrs;
  PriorConfig priors;
  // Informative overrides for selected basic parameters (the step-2 priors of
  // the two-step workflow). Keyed by treatment id.
  std::map<int, NormalPrior> d_prior_overrides;

  // Cross-checks the configuration against itself and the network; resolves
  // regression.covariate_index. Throws ConfigError.
  void validate(const EvidenceNetwork& net);

  static ModelConfig from_json_text(const std::string& text);
  static ModelConfig from_json_file(const std::string& path);
  std::string to_json_text() const;
};

}  // namespace nmsynth
