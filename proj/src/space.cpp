#include "nmsynth/space.hpp"

#include <cmath>
#include <random>

namespace nmsynth {

int ParameterSpace::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i].name == name) return static_cast<int>(i);
  return -1;
}

namespace {

struct Builder {
  const EvidenceNetwork& net;
  const ModelConfig& cfg;
  ParameterSpace space;

  int add(ParamDescriptor desc) {
    space.params.push_back(std::move(desc));
    return static_cast<int>(space.params.size() - 1);
  }

  int add_normal(std::string name, ParamRole role, double mean, double var, int study = -1, int treatment = -1) {
    ParamDescriptor d;
    d.name = std::move(name);
    d.role = role;
    d.support = Support::real;
    d.prior = MarginalPrior::normal;
    d.prior_a = mean;
    d.prior_b = var;
    d.study = study;
    d.treatment = treatment;
    return add(d);
  }

  int add_hier(std::string name, ParamRole role, int study, int treatment) {
    ParamDescriptor d;
    d.name = std::move(name);
    d.role = role;
    d.support = Support::real;
    d.prior = MarginalPrior::none;
    d.study = study;
    d.treatment = treatment;
    return add(d);
  }

  int add_tau(std::string name, ParamRole role) {
    ParamDescriptor d;
    d.name = std::move(name);
    d.role = role;
    d.support = Support::positive_interval;
    d.upper = cfg.priors.tau_upper;
    d.prior = MarginalPrior::uniform;
    d.prior_a = 0.0;
    d.prior_b = cfg.priors.tau_upper;
    return add(d);
  }

  const std::string& label(int treatment) const { return net.treatment(treatment).label; }
};

}  // namespace

ParameterSpace build_parameter_space(const EvidenceNetwork& net, const ModelConfig& cfg) {
  Builder b{net, cfg, {}};
  ParameterSpace& sp = b.space;
  const std::size_t ns = net.studies.size();
  const int K = net.treatment_count();
  const double vague_var = cfg.priors.vague_sd * cfg.priors.vague_sd;
  const bool model2 = cfg.approach == Approach::bias_model_2;
  const bool bias_active = cfg.bias.has_value();
  const bool random_trt = cfg.trt_effect == EffectModel::random_effect;

  sp.u.assign(ns, -1);
  sp.d.assign(static_cast<std::size_t>(K), -1);
  sp.delta.assign(ns, {});
  sp.beta0.assign(ns, -1);
  sp.beta_w.assign(ns, {});
  sp.beta_b.assign(ns, {});
  sp.basic_bw.assign(static_cast<std::size_t>(K), -1);
  sp.basic_bb.assign(static_cast<std::size_t>(K), -1);
  sp.gamma_add.assign(ns, {});
  sp.gamma_mult.assign(ns, {});
  sp.delta_bias.assign(ns, {});
  sp.pi.assign(ns, -1);
  sp.r_ind.assign(ns, -1);
  sp.q.assign(ns, -1);
  sp.q_fixed.assign(ns, 1.0);
  sp.dir.assign(ns, {});
  sp.dir_const.assign(ns, {});

  for (std::size_t j = 0; j < ns; ++j)
    sp.u[j] = b.add_normal("u[" + net.studies[j].id + "]", ParamRole::baseline_u, 0.0, vague_var,
                           static_cast<int>(j));

  for (int k = 1; k <= K; ++k) {
    if (k == net.reference_treatment) continue;
    double mean = 0.0, var = vague_var;
    if (auto it = cfg.d_prior_overrides.find(k); it != cfg.d_prior_overrides.end()) {
      mean = it->second.mean;
      var = it->second.variance;
    }
    sp.d[static_cast<std::size_t>(k - 1)] =
        b.add_normal("d[" + b.label(k) + "]", ParamRole::basic_d, mean, var, -1, k);
  }

  // theta plays delta's slot for bias model 2 with random effects.
  if (random_trt) {
    const char* stem = model2 ? "theta[" : "delta[";
    for (std::size_t j = 0; j < ns; ++j) {
      for (int k : net.studies[j].non_reference_arms())
        sp.delta[j].push_back(b.add_hier(stem + net.studies[j].id + ":" + b.label(k) + "]", ParamRole::study_delta,
                                         static_cast<int>(j), k));
    }
    sp.tau = b.add_tau("tau", ParamRole::tau);
  }

  if (cfg.regression.enabled) {
    bool any_ipd = false;
    for (const auto& s : net.studies) any_ipd = any_ipd || s.format == DataFormat::ipd;
    bool random_beta0 = cfg.regression.baseline == Beta0Model::random_effect;
    for (std::size_t j = 0; j < ns; ++j) {
      if (net.studies[j].format != DataFormat::ipd) continue;
      if (random_beta0)
        sp.beta0[j] = b.add_hier("beta0[" + net.studies[j].id + "]", ParamRole::beta0, static_cast<int>(j), -1);
      else
        sp.beta0[j] = b.add_normal("beta0[" + net.studies[j].id + "]", ParamRole::beta0, 0.0, vague_var,
                                   static_cast<int>(j));
    }
    if (random_beta0 && any_ipd) {
      sp.beta0_mean = b.add_normal("B0", ParamRole::beta0_mean, 0.0, vague_var);
      sp.tau0 = b.add_tau("tau0", ParamRole::tau0);
    }

    const bool equal = cfg.regression.within_between == WithinBetween::equal;
    const bool random_int = cfg.regression.interaction == EffectModel::random_effect;
    if (random_int) {
      for (std::size_t j = 0; j < ns; ++j) {
        const Study& s = net.studies[j];
        for (int k : s.non_reference_arms()) {
          std::string tag = s.id + ":" + b.label(k) + "]";
          int idx_b = b.add_hier((equal ? "beta1[" : "betaB[") + tag, ParamRole::interaction_b,
                                 static_cast<int>(j), k);
          sp.beta_b[j].push_back(idx_b);
          if (s.format == DataFormat::ipd)
            sp.beta_w[j].push_back(equal ? idx_b
                                         : b.add_hier("betaW[" + tag, ParamRole::interaction_w,
                                                      static_cast<int>(j), k));
          else
            sp.beta_w[j].push_back(-1);
        }
      }
    } else {
      for (std::size_t j = 0; j < ns; ++j) {
        sp.beta_b[j].assign(net.studies[j].non_reference_arms().size(), -1);
        sp.beta_w[j].assign(net.studies[j].non_reference_arms().size(), -1);
      }
    }
    for (int k = 1; k <= K; ++k) {
      if (k == net.reference_treatment) continue;
      int idx_bb = b.add_normal((equal ? "B1[" : "BB[") + b.label(k) + "]", ParamRole::basic_bb, 0.0, vague_var,
                                -1, k);
      sp.basic_bb[static_cast<std::size_t>(k - 1)] = idx_bb;
      if (equal) {
        sp.basic_bw[static_cast<std::size_t>(k - 1)] = idx_bb;
      } else if (any_ipd) {
        sp.basic_bw[static_cast<std::size_t>(k - 1)] =
            b.add_normal("BW[" + b.label(k) + "]", ParamRole::basic_bw, 0.0, vague_var, -1, k);
      }
    }
    if (random_int) {
      sp.tau_b = b.add_tau(equal ? "tau1" : "tauB", ParamRole::tau_b);
      if (!equal && any_ipd) sp.tau_w = b.add_tau("tauW", ParamRole::tau_w);
    }
  }

  if (bias_active) {
    const BiasConfig& bias = *cfg.bias;
    const bool random_bias = bias.effect == EffectModel::random_effect;
    const bool tau_param = bias.heterogeneity == BiasHeterogeneity::tau_prior;
    const bool mult = bias.form == BiasForm::multiplicative || bias.form == BiasForm::both;
    const bool addv = bias.form == BiasForm::additive || bias.form == BiasForm::both;
    // Model 1 with the q_j parametrization works on delta_bias instead of gamma.
    const bool use_delta_bias = !model2 && bias.heterogeneity == BiasHeterogeneity::rob_weight;
    // Model 2 with rob_weight keeps gamma at its mean: the bias heterogeneity
    // already sits in the q-inflated mixture component.
    const bool sample_gamma = random_bias && !use_delta_bias && !(model2 && !tau_param);

    if (sample_gamma) {
      for (std::size_t j = 0; j < ns; ++j) {
        const Study& s = net.studies[j];
        for (int k : s.non_reference_arms()) {
          std::string tag = s.id + ":" + b.label(k) + "]";
          if (model2 || addv)
            sp.gamma_add[j].push_back(
                b.add_hier("gamma[" + tag, ParamRole::bias_gamma_add, static_cast<int>(j), k));
          if (!model2 && mult)
            sp.gamma_mult[j].push_back(
                b.add_hier("log_gamma1[" + tag, ParamRole::bias_gamma_mult, static_cast<int>(j), k));
        }
      }
    }
    if (use_delta_bias && random_bias) {
      for (std::size_t j = 0; j < ns; ++j) {
        const Study& s = net.studies[j];
        for (int k : s.non_reference_arms())
          sp.delta_bias[j].push_back(b.add_hier("delta_bias[" + s.id + ":" + b.label(k) + "]",
                                                ParamRole::delta_bias, static_cast<int>(j), k));
      }
    }

    // Mean-bias parameters: emitted only for contrast kinds the network has.
    bool any_inactive_contrast = false, any_active_active = false;
    for (const auto& s : net.studies) {
      bool b_active = net.is_active(s.reference_arm);
      for (int k : s.non_reference_arms()) {
        bool k_active = net.is_active(k);
        if (b_active && k_active) any_active_active = true;
        else if (b_active != k_active) any_inactive_contrast = true;
      }
    }
    const bool signed_aa = bias.mean_structure == BiasMeanStructure::signed_active_active;
    if (model2 || addv) {
      if (any_inactive_contrast) sp.g_add = b.add_normal("g_add", ParamRole::bias_mean_g, 0.0, vague_var);
      if (any_active_active && signed_aa)
        sp.g_add_act = b.add_normal("g_add_act", ParamRole::bias_mean_g_act, 0.0, vague_var);
    }
    if (!model2 && mult) {
      if (any_inactive_contrast) sp.g_mult = b.add_normal("g_mult", ParamRole::bias_mean_g, 0.0, vague_var);
      if (any_active_active && signed_aa)
        sp.g_mult_act = b.add_normal("g_mult_act", ParamRole::bias_mean_g_act, 0.0, vague_var);
    }

    if (tau_param && (random_bias || model2)) {
      if (model2 || addv) sp.tau_gamma_add = b.add_tau(model2 ? "tau_gamma" : "tau_gamma_add", ParamRole::tau_gamma);
      if (!model2 && mult) sp.tau_gamma_mult = b.add_tau("tau_gamma_mult", ParamRole::tau_gamma);
    }

    if (bias.heterogeneity == BiasHeterogeneity::rob_weight) {
      bool q_used = model2 ? random_trt : random_bias;
      if (q_used) {
        for (std::size_t j = 0; j < ns; ++j) {
          RobWeightRule rule = bias.rob_weight_rule(net.studies[j].rob);
          if (rule.fixed) {
            sp.q_fixed[j] = rule.value;
          } else {
            ParamDescriptor d;
            d.name = "q[" + net.studies[j].id + "]";
            d.role = ParamRole::rob_weight_q;
            d.support = Support::unit_interval;
            d.prior = MarginalPrior::beta;
            d.prior_a = rule.value;  // Beta(v, 1)
            d.prior_b = 1.0;
            d.study = static_cast<int>(j);
            sp.q[j] = b.add(d);
          }
        }
      }
    }

    if (bias.probability_model == BiasProbabilityModel::per_study_beta) {
      for (std::size_t j = 0; j < ns; ++j) {
        const BetaParams& p = bias.pi_prior(net.studies[j]);
        ParamDescriptor d;
        d.name = "pi[" + net.studies[j].id + "]";
        d.role = ParamRole::bias_pi;
        d.support = Support::unit_interval;
        d.prior = MarginalPrior::beta;
        d.prior_a = p.a;
        d.prior_b = p.b;
        d.study = static_cast<int>(j);
        sp.pi[j] = b.add(d);
      }
    } else {
      sp.e_logit = b.add_normal("e_bias", ParamRole::logistic_e, 0.0, vague_var);
      std::size_t zdim = 0;
      for (const auto& s : net.studies) zdim = std::max(zdim, s.z.size());
      for (std::size_t c = 0; c < zdim; ++c) {
        ParamDescriptor d;
        d.name = "f_bias[z" + std::to_string(c + 1) + "]";
        d.role = ParamRole::logistic_f;
        d.support = Support::real;
        d.prior = MarginalPrior::normal;
        d.prior_a = 0.0;
        d.prior_b = vague_var;
        d.covariate = static_cast<int>(c);
        sp.f_logit.push_back(b.add(d));
      }
    }

    // R_j: needed whenever the indicator enters the predictor (model 1) or the
    // mixture (model 2 with random effects).
    const bool needs_r = !model2 || random_trt;
    if (needs_r) {
      for (std::size_t j = 0; j < ns; ++j) {
        ParamDescriptor d;
        d.name = "R[" + net.studies[j].id + "]";
        d.role = ParamRole::bias_indicator;
        d.support = Support::binary;
        d.study = static_cast<int>(j);
        sp.r_ind[j] = b.add(d);
      }
    }

    // Directions for active-vs-active contrasts under the signed structure;
    // unknown entries become latent indicators sharing one p_dir.
    bool any_sampled_dir = false;
    for (std::size_t j = 0; j < ns; ++j) {
      const Study& s = net.studies[j];
      bool b_active = net.is_active(s.reference_arm);
      for (int k : s.non_reference_arms()) {
        int cidx = -1, cconst = -1;
        if (signed_aa && b_active && net.is_active(k)) {
          auto it = s.directions.find({s.reference_arm, k});
          BiasDirection dirv = it == s.directions.end() ? BiasDirection::unknown : it->second;
          if (dirv == BiasDirection::unknown) {
            ParamDescriptor d;
            d.name = "dir[" + s.id + ":" + b.label(k) + "]";
            d.role = ParamRole::direction;
            d.support = Support::binary;
            d.study = static_cast<int>(j);
            d.treatment = k;
            cidx = b.add(d);
            any_sampled_dir = true;
          } else {
            cconst = static_cast<int>(dirv);
          }
        }
        sp.dir[j].push_back(cidx);
        sp.dir_const[j].push_back(cconst);
      }
    }
    if (any_sampled_dir) {
      ParamDescriptor d;
      d.name = "p_dir";
      d.role = ParamRole::p_direction;
      d.support = Support::unit_interval;
      d.prior = MarginalPrior::beta;
      d.prior_a = cfg.bias->direction_prior.a;
      d.prior_b = cfg.bias->direction_prior.b;
      sp.p_dir = b.add(d);
    }
  }

  return sp;
}

ParameterState initial_state(const ParameterSpace& space, std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x1d5eu};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> jitter(0.0, 0.1);
  std::uniform_real_distribution<double> tau_init(0.1, 0.5);

  ParameterState st;
  st.values.resize(space.size(), 0.0);
  for (std::size_t i = 0; i < space.size(); ++i) {
    const ParamDescriptor& d = space.params[i];
    switch (d.support) {
      case Support::real:
        st.values[i] = jitter(rng);
        break;
      case Support::positive_interval:
        st.values[i] = tau_init(rng) * (d.upper / 2.0);
        break;
      case Support::unit_interval:
        if (d.prior == MarginalPrior::beta)
          st.values[i] = d.prior_a / (d.prior_a + d.prior_b);
        else
          st.values[i] = 0.5;
        break;
      case Support::binary:
        st.values[i] = 0.0;  // resolved below from the paired probability
        break;
    }
  }
  // Indicators start at the rounded prior mean of their probability.
  for (std::size_t i = 0; i < space.size(); ++i) {
    const ParamDescriptor& d = space.params[i];
    if (d.support != Support::binary) continue;
    double p = 0.5;
    if (d.role == ParamRole::bias_indicator && d.study >= 0) {
      int pi_idx = space.pi[static_cast<std::size_t>(d.study)];
      if (pi_idx >= 0) p = st.values[static_cast<std::size_t>(pi_idx)];
    } else if (d.role == ParamRole::direction && space.p_dir >= 0) {
      p = st.values[static_cast<std::size_t>(space.p_dir)];
    }
    st.values[i] = std::lround(p) >= 1 ? 1.0 : 0.0;
  }
  return st;
}

}  // namespace nmsynth
