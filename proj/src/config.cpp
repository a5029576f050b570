#include "nmsynth/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace nmsynth {

using nlohmann::json;

std::string to_string(Approach a) {
  switch (a) {
    case Approach::unadjusted: return "unadjusted";
    case Approach::nrs_prior: return "nrs_prior";
    case Approach::bias_model_1: return "bias_model_1";
    default: return "bias_model_2";
  }
}

Approach approach_from_string(const std::string& s) {
  if (s == "unadjusted") return Approach::unadjusted;
  if (s == "nrs_prior" || s == "nrs-prior") return Approach::nrs_prior;
  if (s == "bias_model_1" || s == "bias1") return Approach::bias_model_1;
  if (s == "bias_model_2" || s == "bias2") return Approach::bias_model_2;
  throw ConfigError("unknown approach '" + s + "'");
}

const BetaParams& BiasConfig::pi_prior(const Study& s) const {
  if (s.bias_prior) return *s.bias_prior;
  switch (s.rob) {
    case RobLevel::low: return pi_low;
    case RobLevel::high: return pi_high;
    default: return pi_unclear;
  }
}

RobWeightRule BiasConfig::rob_weight_rule(RobLevel level) const {
  auto it = rob_weight.find(level);
  if (it != rob_weight.end()) return it->second;
  return RobWeightRule{false, 1.0};  // Beta(1,1): mean down-weight 50%
}

namespace {

EffectModel effect_from_string(const std::string& s, const char* what) {
  if (s == "random") return EffectModel::random_effect;
  if (s == "common" || s == "fixed") return EffectModel::common_effect;
  throw ConfigError(std::string(what) + " must be random or common, got '" + s + "'");
}

std::string effect_to_string(EffectModel m) { return m == EffectModel::random_effect ? "random" : "common"; }

BetaParams beta_from_json(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 2) throw ConfigError(std::string(what) + " must be [a, b]");
  BetaParams p{j[0].get<double>(), j[1].get<double>()};
  if (p.a <= 0 || p.b <= 0) throw ConfigError(std::string(what) + " parameters must be positive");
  return p;
}

RobLevel rob_from_key(const std::string& key) {
  if (key == "low") return RobLevel::low;
  if (key == "high") return RobLevel::high;
  if (key == "unclear") return RobLevel::unclear;
  throw ConfigError("rob_weight keys must be low/high/unclear, got '" + key + "'");
}

}  // namespace

ModelConfig ModelConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ModelConfig cfg;
  if (j.contains("approach")) cfg.approach = approach_from_string(j["approach"].get<std::string>());
  if (j.contains("trt_effect")) cfg.trt_effect = effect_from_string(j["trt_effect"].get<std::string>(), "trt_effect");

  if (j.contains("regression") && !j["regression"].is_null()) {
    const json& r = j["regression"];
    cfg.regression.enabled = true;
    cfg.regression.covariate = r.value("covariate", std::string("x1"));
    std::string b0 = r.value("baseline_beta0", std::string("independent"));
    if (b0 == "independent") cfg.regression.baseline = Beta0Model::independent;
    else if (b0 == "random") cfg.regression.baseline = Beta0Model::random_effect;
    else throw ConfigError("baseline_beta0 must be independent or random");
    std::string wb = r.value("within_between", std::string("separate"));
    if (wb == "separate") cfg.regression.within_between = WithinBetween::separate;
    else if (wb == "equal") cfg.regression.within_between = WithinBetween::equal;
    else throw ConfigError("within_between must be separate or equal");
    cfg.regression.interaction =
        effect_from_string(r.value("interaction_effect", std::string("random")), "interaction_effect");
  }

  if (j.contains("bias") && !j["bias"].is_null()) {
    const json& b = j["bias"];
    BiasConfig bias;
    std::string form = b.value("form", std::string("additive"));
    if (form == "additive") bias.form = BiasForm::additive;
    else if (form == "multiplicative") bias.form = BiasForm::multiplicative;
    else if (form == "both") bias.form = BiasForm::both;
    else throw ConfigError("bias form must be additive, multiplicative or both");
    bias.effect = effect_from_string(b.value("effect", std::string("common")), "bias effect");
    std::string ms = b.value("mean_structure", std::string("zero_active_active"));
    if (ms == "zero_active_active") bias.mean_structure = BiasMeanStructure::zero_active_active;
    else if (ms == "signed_active_active") bias.mean_structure = BiasMeanStructure::signed_active_active;
    else throw ConfigError("mean_structure must be zero_active_active or signed_active_active");
    std::string pm = b.value("probability_model", std::string("per_study_beta"));
    if (pm == "per_study_beta") bias.probability_model = BiasProbabilityModel::per_study_beta;
    else if (pm == "logistic_on_z") bias.probability_model = BiasProbabilityModel::logistic_on_z;
    else throw ConfigError("probability_model must be per_study_beta or logistic_on_z");
    if (b.contains("pi_low")) bias.pi_low = beta_from_json(b["pi_low"], "pi_low");
    if (b.contains("pi_high")) bias.pi_high = beta_from_json(b["pi_high"], "pi_high");
    if (b.contains("pi_unclear")) bias.pi_unclear = beta_from_json(b["pi_unclear"], "pi_unclear");
    if (b.contains("direction_prior")) bias.direction_prior = beta_from_json(b["direction_prior"], "direction_prior");
    if (b.contains("heterogeneity")) {
      const json& h = b["heterogeneity"];
      std::string kind = h.value("kind", std::string("tau_prior"));
      if (kind == "tau_prior") bias.heterogeneity = BiasHeterogeneity::tau_prior;
      else if (kind == "rob_weight") {
        bias.heterogeneity = BiasHeterogeneity::rob_weight;
        for (auto& [key, val] : h.items()) {
          if (key == "kind") continue;
          RobWeightRule rule;
          if (val.contains("fixed")) {
            rule.fixed = true;
            rule.value = val["fixed"].get<double>();
            if (rule.value <= 0 || rule.value > 1) throw ConfigError("fixed q must lie in (0,1]");
          } else if (val.contains("beta_v")) {
            rule.fixed = false;
            rule.value = val["beta_v"].get<double>();
            if (rule.value <= 0) throw ConfigError("beta_v must be positive");
          } else {
            throw ConfigError("rob_weight rule needs 'fixed' or 'beta_v'");
          }
          bias.rob_weight[rob_from_key(key)] = rule;
        }
      } else {
        throw ConfigError("heterogeneity kind must be tau_prior or rob_weight");
      }
    }
    cfg.bias = bias;
  }

  if (j.contains("nrs_prior") && !j["nrs_prior"].is_null()) {
    const json& n = j["nrs_prior"];
    cfg.nrs.zeta = n.value("zeta", 0.0);
    cfg.nrs.w = n.value("w", 1.0);
    cfg.nrs.step1_reference = n.value("step1_reference", std::string());
  }

  if (j.contains("priors") && !j["priors"].is_null()) {
    cfg.priors.vague_sd = j["priors"].value("vague_sd", 10.0);
    cfg.priors.tau_upper = j["priors"].value("tau_upper", 2.0);
  }

  if (j.contains("d_priors") && !j["d_priors"].is_null()) {
    for (auto& [key, val] : j["d_priors"].items()) {
      NormalPrior p;
      p.mean = val.at("mean").get<double>();
      p.variance = val.at("variance").get<double>();
      if (p.variance <= 0) throw ConfigError("d prior variance must be positive");
      cfg.d_prior_overrides[std::stoi(key)] = p;
    }
  }
  return cfg;
}

ModelConfig ModelConfig::from_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json_text(buf.str());
}

std::string ModelConfig::to_json_text() const {
  json j;
  j["approach"] = to_string(approach);
  j["trt_effect"] = effect_to_string(trt_effect);
  if (regression.enabled) {
    j["regression"] = {
        {"covariate", regression.covariate},
        {"baseline_beta0", regression.baseline == Beta0Model::independent ? "independent" : "random"},
        {"within_between", regression.within_between == WithinBetween::separate ? "separate" : "equal"},
        {"interaction_effect", effect_to_string(regression.interaction)},
    };
  }
  if (bias) {
    json b;
    b["form"] = bias->form == BiasForm::additive ? "additive"
                : bias->form == BiasForm::multiplicative ? "multiplicative"
                                                         : "both";
    b["effect"] = effect_to_string(bias->effect);
    b["mean_structure"] =
        bias->mean_structure == BiasMeanStructure::zero_active_active ? "zero_active_active" : "signed_active_active";
    b["probability_model"] =
        bias->probability_model == BiasProbabilityModel::per_study_beta ? "per_study_beta" : "logistic_on_z";
    b["pi_low"] = {bias->pi_low.a, bias->pi_low.b};
    b["pi_high"] = {bias->pi_high.a, bias->pi_high.b};
    b["pi_unclear"] = {bias->pi_unclear.a, bias->pi_unclear.b};
    b["direction_prior"] = {bias->direction_prior.a, bias->direction_prior.b};
    json h;
    h["kind"] = bias->heterogeneity == BiasHeterogeneity::tau_prior ? "tau_prior" : "rob_weight";
    for (const auto& [level, rule] : bias->rob_weight) {
      json r;
      if (rule.fixed) r["fixed"] = rule.value;
      else r["beta_v"] = rule.value;
      h[to_string(level)] = r;
    }
    b["heterogeneity"] = h;
    j["bias"] = b;
  }
  if (approach == Approach::nrs_prior) {
    j["nrs_prior"] = {{"zeta", nrs.zeta}, {"w", nrs.w}, {"step1_reference", nrs.step1_reference}};
  }
  j["priors"] = {{"vague_sd", priors.vague_sd}, {"tau_upper", priors.tau_upper}};
  if (!d_prior_overrides.empty()) {
    json d;
    for (const auto& [k, p] : d_prior_overrides)
      d[std::to_string(k)] = {{"mean", p.mean}, {"variance", p.variance}};
    j["d_priors"] = d;
  }
  return j.dump(2) + "\n";
}

void ModelConfig::validate(const EvidenceNetwork& net) {
  if (priors.vague_sd <= 0) throw ConfigError("vague_sd must be positive");
  if (priors.tau_upper <= 0) throw ConfigError("tau_upper must be positive");

  bool bias_approach = approach == Approach::bias_model_1 || approach == Approach::bias_model_2;
  if (bias_approach && !bias) throw ConfigError(to_string(approach) + " requires a bias section");
  if (!bias_approach && bias) throw ConfigError("bias settings are only valid for bias_model_1/bias_model_2");

  if (approach == Approach::nrs_prior) {
    if (nrs.w <= 0 || nrs.w > 1) throw ConfigError("nrs_prior w must lie in (0, 1]");
  }

  if (regression.enabled) {
    if (net.covariate_dim() == 0) throw ConfigError("regression requested but the data carry no covariates");
    auto it = std::find(net.covariate_names.begin(), net.covariate_names.end(), regression.covariate);
    if (it == net.covariate_names.end())
      throw ConfigError("regression covariate '" + regression.covariate + "' not found in the data");
    regression.covariate_index = static_cast<int>(it - net.covariate_names.begin());
  } else {
    regression.covariate_index = -1;
  }

  if (bias) {
    if (bias->probability_model == BiasProbabilityModel::logistic_on_z) {
      bool any_z = false;
      for (const auto& s : net.studies) any_z = any_z || !s.z.empty();
      if (!any_z) throw ConfigError("logistic_on_z bias-probability model needs z columns in studies.csv");
    }
    if (bias->heterogeneity == BiasHeterogeneity::rob_weight) {
      if (approach == Approach::bias_model_1 && bias->form != BiasForm::additive)
        throw ConfigError("rob_weight heterogeneity requires the additive bias form");
      if (trt_effect != EffectModel::random_effect && bias->effect == EffectModel::random_effect)
        throw ConfigError("rob_weight heterogeneity with exchangeable bias needs random treatment effects");
    }
    if (approach == Approach::bias_model_2 && bias->form != BiasForm::additive)
      throw ConfigError("bias_model_2 uses additive bias effects");
  }
}

}  // namespace nmsynth
