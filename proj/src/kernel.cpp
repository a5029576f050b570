#include "nmsynth/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace nmsynth {

namespace {
constexpr double kLog2Pi = 1.8378770664093453;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_beta_fn(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

double beta_logpdf(double x, double a, double b) {
  if (!(x > 0.0) || !(x < 1.0)) return kNegInf;
  return (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) - log_beta_fn(a, b);
}

double bernoulli_logpmf(bool hit, double p) {
  if (!(p > 0.0) || !(p < 1.0)) {
    // Degenerate probabilities are admissible for indicators pinned by the prior.
    if (hit) return p >= 1.0 ? 0.0 : kNegInf;
    return p <= 0.0 ? 0.0 : kNegInf;
  }
  return hit ? std::log(p) : std::log1p(-p);
}
}  // namespace

double softplus(double m) { return m > 0.0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m)); }
double log_sigmoid(double m) { return -softplus(-m); }
double inv_logit(double m) { return m >= 0.0 ? 1.0 / (1.0 + std::exp(-m)) : std::exp(m) / (1.0 + std::exp(m)); }

double normal_logpdf(double x, double mean, double var) {
  if (!(var > 0.0)) return kNegInf;
  double z = x - mean;
  return -0.5 * (kLog2Pi + std::log(var)) - 0.5 * z * z / var;
}

double multiarm_normal_logpdf(const std::vector<double>& y, const std::vector<double>& mean,
                              const std::vector<double>& var) {
  const std::size_t m = y.size();
  if (m == 1) return normal_logpdf(y[0], mean[0], var[0]);
  // Sigma = D^1/2 C D^1/2 with C = (I + J)/2; det C = (1/2)^m (m+1),
  // C^-1 = 2 (I - J/(m+1)).
  double logdet = std::log(static_cast<double>(m + 1)) - static_cast<double>(m) * std::log(2.0);
  double sum_z = 0.0, sum_z2 = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (!(var[i] > 0.0)) return kNegInf;
    logdet += std::log(var[i]);
    double z = (y[i] - mean[i]) / std::sqrt(var[i]);
    sum_z += z;
    sum_z2 += z * z;
  }
  double qf = 2.0 * (sum_z2 - sum_z * sum_z / static_cast<double>(m + 1));
  return -0.5 * static_cast<double>(m) * kLog2Pi - 0.5 * logdet - 0.5 * qf;
}

double PosteriorKernel::MeanBias::resolve(const ParameterState& s) const {
  switch (kind) {
    case Kind::zero: return 0.0;
    case Kind::g_plus: return s[static_cast<std::size_t>(idx_g)];
    case Kind::g_minus: return -s[static_cast<std::size_t>(idx_g)];
    case Kind::g_act: {
      double dir = idx_dir >= 0 ? s[static_cast<std::size_t>(idx_dir)] : static_cast<double>(dir_const);
      return (dir >= 0.5 ? -1.0 : 1.0) * s[static_cast<std::size_t>(idx_g)];
    }
  }
  return 0.0;
}

PosteriorKernel::PosteriorKernel(const EvidenceNetwork& net, const ModelConfig& cfg, const ParameterSpace& space)
    : net_(&net), cfg_(&cfg), space_(&space) {
  const bool model2 = cfg.approach == Approach::bias_model_2;
  if (cfg.bias) {
    mult_active_ = !model2 && (cfg.bias->form != BiasForm::additive);
    add_active_ = model2 || (cfg.bias->form != BiasForm::multiplicative);
    if (model2)
      term_mode_ = cfg.trt_effect == EffectModel::random_effect ? TermMode::theta_sampled
                                                                : TermMode::theta_deterministic;
    else
      term_mode_ = cfg.bias->heterogeneity == BiasHeterogeneity::rob_weight ? TermMode::bias1_dbias
                                                                             : TermMode::bias1_gamma;
  }
  deps_.assign(space.size(), {});
  build_plans();
  build_blocks();
  for (auto& d : deps_) {
    std::sort(d.begin(), d.end());
    d.erase(std::unique(d.begin(), d.end()), d.end());
  }
}

void PosteriorKernel::build_plans() {
  const EvidenceNetwork& net = *net_;
  const ParameterSpace& sp = *space_;
  const int cov = cfg_->regression.enabled ? cfg_->regression.covariate_index : -1;
  const bool signed_aa = cfg_->bias && cfg_->bias->mean_structure == BiasMeanStructure::signed_active_active;

  plans_.resize(net.studies.size());
  for (std::size_t j = 0; j < net.studies.size(); ++j) {
    const Study& study = net.studies[j];
    StudyPlan& plan = plans_[j];
    plan.ipd = study.format == DataFormat::ipd;
    if (cov >= 0) plan.xbar = study.mean_covariates(net.covariate_dim())[static_cast<std::size_t>(cov)];

    for (int t : study.arms) {
      ArmData arm;
      arm.treatment = t;
      if (plan.ipd) {
        for (const auto& rec : study.ipd) {
          if (rec.treatment != t) continue;
          arm.y.push_back(static_cast<unsigned char>(rec.outcome));
          arm.x.push_back(cov >= 0 ? rec.x[static_cast<std::size_t>(cov)] : 0.0);
          arm.sum_y += rec.outcome;
          arm.rows += 1.0;
        }
      } else {
        const AdArm* a = study.ad_arm(t);
        arm.events = static_cast<double>(a->events);
        arm.size = static_cast<double>(a->sample_size);
        arm.log_choose = std::lgamma(arm.size + 1.0) - std::lgamma(arm.events + 1.0) -
                         std::lgamma(arm.size - arm.events + 1.0);
      }
      plan.arms.push_back(std::move(arm));
    }

    const int b = study.reference_arm;
    const bool b_active = net.is_active(b);
    auto non_ref = study.non_reference_arms();
    for (std::size_t m = 0; m < non_ref.size(); ++m) {
      int k = non_ref[m];
      Contrast c;
      c.treatment = k;
      if (!sp.delta[j].empty()) c.idx_delta = sp.delta[j][m];
      if (k != net.reference_treatment) c.idx_dk = sp.d[static_cast<std::size_t>(k - 1)];
      if (b != net.reference_treatment) c.idx_db = sp.d[static_cast<std::size_t>(b - 1)];
      if (!sp.gamma_add[j].empty()) c.idx_gamma_add = sp.gamma_add[j][m];
      if (!sp.gamma_mult[j].empty()) c.idx_gamma_mult = sp.gamma_mult[j][m];
      if (!sp.delta_bias[j].empty()) c.idx_delta_bias = sp.delta_bias[j][m];
      if (!sp.beta_w[j].empty()) c.idx_beta_w = sp.beta_w[j][m];
      if (!sp.beta_b[j].empty()) c.idx_beta_b = sp.beta_b[j][m];
      auto basic = [&](const std::vector<int>& table, int t) {
        return t == net.reference_treatment ? -1 : table[static_cast<std::size_t>(t - 1)];
      };
      if (cfg_->regression.enabled) {
        c.idx_bw_k = basic(sp.basic_bw, k);
        c.idx_bw_b = basic(sp.basic_bw, b);
        c.idx_bb_k = basic(sp.basic_bb, k);
        c.idx_bb_b = basic(sp.basic_bb, b);
      }
      if (cfg_->bias) {
        const bool k_active = net.is_active(k);
        auto wire = [&](MeanBias& mb, int idx_g, int idx_g_act) {
          if (b_active && k_active) {
            if (signed_aa) {
              mb.kind = MeanBias::Kind::g_act;
              mb.idx_g = idx_g_act;
              mb.idx_dir = sp.dir[j].empty() ? -1 : sp.dir[j][m];
              mb.dir_const = sp.dir_const[j].empty() ? 0 : std::max(sp.dir_const[j][m], 0);
            }
          } else if (b_active != k_active) {
            mb.kind = b_active ? MeanBias::Kind::g_minus : MeanBias::Kind::g_plus;
            mb.idx_g = idx_g;
          }
          if (mb.kind != MeanBias::Kind::zero && mb.idx_g < 0)
            throw std::logic_error("bias mean parameter missing for a contrast that needs it");
        };
        if (add_active_) wire(c.mb_add, sp.g_add, sp.g_add_act);
        if (mult_active_) wire(c.mb_mult, sp.g_mult, sp.g_mult_act);
      }
      plan.contrasts.push_back(c);
    }
  }
}

void PosteriorKernel::register_dep(int param, int block) {
  if (param >= 0) deps_[static_cast<std::size_t>(param)].push_back(block);
}

void PosteriorKernel::build_blocks() {
  const ParameterSpace& sp = *space_;
  const bool model2 = cfg_->approach == Approach::bias_model_2;
  auto require = [](int idx, const char* what) {
    if (idx < 0) throw std::logic_error(std::string("parameter space is missing ") + what);
  };

  for (std::size_t j = 0; j < plans_.size(); ++j) {
    const StudyPlan& plan = plans_[j];
    int id = static_cast<int>(blocks_.size());
    blocks_.push_back({Block::Kind::data, static_cast<int>(j)});
    register_dep(sp.u[j], id);
    if (sp.beta0[j] >= 0) register_dep(sp.beta0[j], id);
    for (const Contrast& c : plan.contrasts) {
      register_dep(c.idx_delta, id);
      bool ddiff_in_predictor = c.idx_delta < 0 || term_mode_ == TermMode::theta_deterministic ||
                                (term_mode_ == TermMode::bias1_dbias && c.idx_delta_bias < 0);
      if (ddiff_in_predictor) {
        register_dep(c.idx_dk, id);
        register_dep(c.idx_db, id);
      }
      if (term_mode_ == TermMode::bias1_gamma || term_mode_ == TermMode::theta_deterministic) {
        if (add_active_) {
          register_dep(c.idx_gamma_add, id);
          if (c.idx_gamma_add < 0) {
            register_dep(c.mb_add.idx_g, id);
            register_dep(c.mb_add.idx_dir, id);
          }
        }
        if (mult_active_) {
          register_dep(c.idx_gamma_mult, id);
          if (c.idx_gamma_mult < 0) {
            register_dep(c.mb_mult.idx_g, id);
            register_dep(c.mb_mult.idx_dir, id);
          }
        }
      }
      if (term_mode_ == TermMode::bias1_dbias) {
        register_dep(c.idx_delta_bias, id);
        if (c.idx_delta_bias < 0) {
          register_dep(c.mb_add.idx_g, id);
          register_dep(c.mb_add.idx_dir, id);
        }
      }
      register_dep(c.idx_beta_w, id);
      register_dep(c.idx_beta_b, id);
      if (c.idx_beta_w < 0) {
        register_dep(c.idx_bw_k, id);
        register_dep(c.idx_bw_b, id);
      }
      if (c.idx_beta_b < 0) {
        register_dep(c.idx_bb_k, id);
        register_dep(c.idx_bb_b, id);
      }
    }
    if (term_mode_ == TermMode::bias1_gamma || term_mode_ == TermMode::bias1_dbias)
      register_dep(sp.r_ind[j], id);
    if (term_mode_ == TermMode::theta_deterministic) {
      if (!sp.pi.empty() && sp.pi[j] >= 0) register_dep(sp.pi[j], id);
      register_dep(sp.e_logit, id);
      for (int f : sp.f_logit) register_dep(f, id);
    }
  }

  for (std::size_t j = 0; j < plans_.size(); ++j) {
    const StudyPlan& plan = plans_[j];
    if (plan.contrasts.empty()) continue;

    if (!sp.delta[j].empty() && !model2) {
      require(sp.tau, "tau");
      int id = static_cast<int>(blocks_.size());
      blocks_.push_back({Block::Kind::re_delta, static_cast<int>(j)});
      register_dep(sp.tau, id);
      for (const Contrast& c : plan.contrasts) {
        register_dep(c.idx_delta, id);
        register_dep(c.idx_dk, id);
        register_dep(c.idx_db, id);
      }
    }

    if (!sp.delta[j].empty() && model2) {
      require(sp.tau, "tau");
      int id = static_cast<int>(blocks_.size());
      blocks_.push_back({Block::Kind::theta_prior, static_cast<int>(j)});
      register_dep(sp.tau, id);
      register_dep(sp.r_ind[j], id);
      if (cfg_->bias->heterogeneity == BiasHeterogeneity::tau_prior) {
        require(sp.tau_gamma_add, "tau_gamma");
        register_dep(sp.tau_gamma_add, id);
      } else if (sp.q[j] >= 0) {
        register_dep(sp.q[j], id);
      }
      for (std::size_t m = 0; m < plan.contrasts.size(); ++m) {
        const Contrast& c = plan.contrasts[m];
        register_dep(c.idx_delta, id);
        register_dep(c.idx_dk, id);
        register_dep(c.idx_db, id);
        register_dep(c.idx_gamma_add, id);
        if (c.idx_gamma_add < 0) {
          register_dep(c.mb_add.idx_g, id);
          register_dep(c.mb_add.idx_dir, id);
        }
      }
    }

    if (!sp.beta_b[j].empty() && sp.beta_b[j][0] >= 0) {
      require(sp.tau_b, "tauB");
      int id = static_cast<int>(blocks_.size());
      blocks_.push_back({Block::Kind::int_b, static_cast<int>(j)});
      register_dep(sp.tau_b, id);
      for (const Contrast& c : plan.contrasts) {
        register_dep(c.idx_beta_b, id);
        register_dep(c.idx_bb_k, id);
        register_dep(c.idx_bb_b, id);
      }
    }
    bool separate_w = !sp.beta_w[j].empty() && sp.beta_w[j][0] >= 0 && sp.beta_w[j][0] != sp.beta_b[j][0];
    if (separate_w) {
      require(sp.tau_w, "tauW");
      int id = static_cast<int>(blocks_.size());
      blocks_.push_back({Block::Kind::int_w, static_cast<int>(j)});
      register_dep(sp.tau_w, id);
      for (const Contrast& c : plan.contrasts) {
        register_dep(c.idx_beta_w, id);
        register_dep(c.idx_bw_k, id);
        register_dep(c.idx_bw_b, id);
      }
    }

    if (sp.beta0[j] >= 0 && cfg_->regression.baseline == Beta0Model::random_effect) {
      require(sp.beta0_mean, "B0");
      require(sp.tau0, "tau0");
      int id = static_cast<int>(blocks_.size());
      blocks_.push_back({Block::Kind::beta0_re, static_cast<int>(j)});
      register_dep(sp.beta0[j], id);
      register_dep(sp.beta0_mean, id);
      register_dep(sp.tau0, id);
    }

    if (!sp.gamma_add[j].empty() && sp.tau_gamma_add >= 0) {
      int id = static_cast<int>(blocks_.size());
      blocks_.push_back({Block::Kind::gamma_add, static_cast<int>(j)});
      register_dep(sp.tau_gamma_add, id);
      for (std::size_t m = 0; m < plan.contrasts.size(); ++m) {
        const Contrast& c = plan.contrasts[m];
        register_dep(c.idx_gamma_add, id);
        register_dep(c.mb_add.idx_g, id);
        register_dep(c.mb_add.idx_dir, id);
      }
    }
    if (!sp.gamma_mult[j].empty() && sp.tau_gamma_mult >= 0) {
      int id = static_cast<int>(blocks_.size());
      blocks_.push_back({Block::Kind::gamma_mult, static_cast<int>(j)});
      register_dep(sp.tau_gamma_mult, id);
      for (std::size_t m = 0; m < plan.contrasts.size(); ++m) {
        const Contrast& c = plan.contrasts[m];
        register_dep(c.idx_gamma_mult, id);
        register_dep(c.mb_mult.idx_g, id);
        register_dep(c.mb_mult.idx_dir, id);
      }
    }
    if (!sp.delta_bias[j].empty()) {
      require(sp.tau, "tau");
      int id = static_cast<int>(blocks_.size());
      blocks_.push_back({Block::Kind::dbias, static_cast<int>(j)});
      register_dep(sp.tau, id);
      if (sp.q[j] >= 0) register_dep(sp.q[j], id);
      for (const Contrast& c : plan.contrasts) {
        register_dep(c.idx_delta_bias, id);
        register_dep(c.idx_dk, id);
        register_dep(c.idx_db, id);
        register_dep(c.mb_add.idx_g, id);
        register_dep(c.mb_add.idx_dir, id);
      }
    }

    if (!sp.r_ind.empty() && sp.r_ind[j] >= 0) {
      int id = static_cast<int>(blocks_.size());
      blocks_.push_back({Block::Kind::pi_r, static_cast<int>(j)});
      register_dep(sp.r_ind[j], id);
      if (sp.pi[j] >= 0) {
        register_dep(sp.pi[j], id);
      } else {
        register_dep(sp.e_logit, id);
        for (int f : sp.f_logit) register_dep(f, id);
      }
    }

    bool any_dir = false;
    if (!sp.dir[j].empty())
      for (int d : sp.dir[j]) any_dir = any_dir || d >= 0;
    if (any_dir) {
      require(sp.p_dir, "p_dir");
      int id = static_cast<int>(blocks_.size());
      blocks_.push_back({Block::Kind::dir_bern, static_cast<int>(j)});
      register_dep(sp.p_dir, id);
      for (int d : sp.dir[j]) register_dep(d, id);
    }
  }
}

double PosteriorKernel::contrast_ddiff(const ParameterState& s, const Contrast& c) const {
  double dk = c.idx_dk >= 0 ? s[static_cast<std::size_t>(c.idx_dk)] : 0.0;
  double db = c.idx_db >= 0 ? s[static_cast<std::size_t>(c.idx_db)] : 0.0;
  return dk - db;
}

double PosteriorKernel::indicator_value(const ParameterState& s, std::size_t study) const {
  int idx = space_->r_ind.empty() ? -1 : space_->r_ind[study];
  return idx >= 0 ? s[static_cast<std::size_t>(idx)] : 0.0;
}

double PosteriorKernel::bias_probability(const ParameterState& s, std::size_t study) const {
  const ParameterSpace& sp = *space_;
  if (!sp.pi.empty() && sp.pi[study] >= 0) return s[static_cast<std::size_t>(sp.pi[study])];
  if (sp.e_logit >= 0) {
    double t = s[static_cast<std::size_t>(sp.e_logit)];
    const auto& z = net_->studies[study].z;
    for (std::size_t c = 0; c < sp.f_logit.size(); ++c)
      t += s[static_cast<std::size_t>(sp.f_logit[c])] * (c < z.size() ? z[c] : 0.0);
    return inv_logit(t);
  }
  return 0.0;
}

double PosteriorKernel::resolved_gamma_add(const ParameterState& s, std::size_t study, std::size_t m) const {
  const Contrast& c = plans_[study].contrasts[m];
  return c.idx_gamma_add >= 0 ? s[static_cast<std::size_t>(c.idx_gamma_add)] : c.mb_add.resolve(s);
}

double PosteriorKernel::treatment_term(const ParameterState& s, const StudyPlan& plan, const Contrast& c,
                                       double r_value, std::size_t study) const {
  (void)plan;
  switch (term_mode_) {
    case TermMode::plain:
      return c.idx_delta >= 0 ? s[static_cast<std::size_t>(c.idx_delta)] : contrast_ddiff(s, c);
    case TermMode::bias1_gamma: {
      double base = c.idx_delta >= 0 ? s[static_cast<std::size_t>(c.idx_delta)] : contrast_ddiff(s, c);
      if (mult_active_) {
        double lg = c.idx_gamma_mult >= 0 ? s[static_cast<std::size_t>(c.idx_gamma_mult)] : c.mb_mult.resolve(s);
        base *= std::exp(r_value * lg);
      }
      if (add_active_) {
        double g2 = c.idx_gamma_add >= 0 ? s[static_cast<std::size_t>(c.idx_gamma_add)] : c.mb_add.resolve(s);
        base += r_value * g2;
      }
      return base;
    }
    case TermMode::bias1_dbias:
      if (r_value >= 0.5) {
        return c.idx_delta_bias >= 0 ? s[static_cast<std::size_t>(c.idx_delta_bias)]
                                     : c.mb_add.resolve(s) + contrast_ddiff(s, c);
      }
      return c.idx_delta >= 0 ? s[static_cast<std::size_t>(c.idx_delta)] : contrast_ddiff(s, c);
    case TermMode::theta_sampled:
      return s[static_cast<std::size_t>(c.idx_delta)];
    case TermMode::theta_deterministic: {
      std::size_t m = static_cast<std::size_t>(&c - plans_[study].contrasts.data());
      return contrast_ddiff(s, c) + bias_probability(s, study) * resolved_gamma_add(s, study, m);
    }
  }
  return 0.0;
}

double PosteriorKernel::arm_loglik_ipd(const ParameterState& s, const StudyPlan& plan, std::size_t arm_pos,
                                       std::size_t study) const {
  const ArmData& arm = plan.arms[arm_pos];
  double u = s[static_cast<std::size_t>(space_->u[study])];
  int b0_idx = space_->beta0[study];
  double beta0 = b0_idx >= 0 ? s[static_cast<std::size_t>(b0_idx)] : 0.0;
  double alpha, slope;
  if (arm_pos == 0) {
    alpha = u;
    slope = beta0;
  } else {
    const Contrast& c = plan.contrasts[arm_pos - 1];
    double r = indicator_value(s, study);
    double term = treatment_term(s, plan, c, r, study);
    double bw = c.idx_beta_w >= 0 ? s[static_cast<std::size_t>(c.idx_beta_w)]
                                  : (c.idx_bw_k >= 0 ? s[static_cast<std::size_t>(c.idx_bw_k)] : 0.0) -
                                        (c.idx_bw_b >= 0 ? s[static_cast<std::size_t>(c.idx_bw_b)] : 0.0);
    double bb = c.idx_beta_b >= 0 ? s[static_cast<std::size_t>(c.idx_beta_b)]
                                  : (c.idx_bb_k >= 0 ? s[static_cast<std::size_t>(c.idx_bb_k)] : 0.0) -
                                        (c.idx_bb_b >= 0 ? s[static_cast<std::size_t>(c.idx_bb_b)] : 0.0);
    alpha = u + term + (bb - bw) * plan.xbar;
    slope = beta0 + bw;
  }
  if (!cfg_->regression.enabled) {
    return arm.sum_y * alpha - arm.rows * softplus(alpha);
  }
  double ll = 0.0;
  for (std::size_t i = 0; i < arm.y.size(); ++i) {
    double m = alpha + slope * arm.x[i];
    ll += (arm.y[i] ? m : 0.0) - softplus(m);
  }
  return ll;
}

double PosteriorKernel::arm_loglik_ad(const ParameterState& s, const StudyPlan& plan, std::size_t arm_pos,
                                      std::size_t study) const {
  const ArmData& arm = plan.arms[arm_pos];
  double u = s[static_cast<std::size_t>(space_->u[study])];
  double m = u;
  if (arm_pos > 0) {
    const Contrast& c = plan.contrasts[arm_pos - 1];
    double r = indicator_value(s, study);
    double bb = c.idx_beta_b >= 0 ? s[static_cast<std::size_t>(c.idx_beta_b)]
                                  : (c.idx_bb_k >= 0 ? s[static_cast<std::size_t>(c.idx_bb_k)] : 0.0) -
                                        (c.idx_bb_b >= 0 ? s[static_cast<std::size_t>(c.idx_bb_b)] : 0.0);
    m += treatment_term(s, plan, c, r, study) + bb * plan.xbar;
  }
  return arm.log_choose + arm.events * m - arm.size * softplus(m);
}

double PosteriorKernel::data_loglik_study(const ParameterState& s, std::size_t study) const {
  const StudyPlan& plan = plans_[study];
  double ll = 0.0;
  for (std::size_t a = 0; a < plan.arms.size(); ++a)
    ll += plan.ipd ? arm_loglik_ipd(s, plan, a, study) : arm_loglik_ad(s, plan, a, study);
  return ll;
}

double PosteriorKernel::theta_component_var(const ParameterState& s, std::size_t study, bool biased) const {
  const ParameterSpace& sp = *space_;
  double tau = s[static_cast<std::size_t>(sp.tau)];
  double v = tau * tau;
  if (!biased) return v;
  if (cfg_->bias->heterogeneity == BiasHeterogeneity::tau_prior) {
    double tg = s[static_cast<std::size_t>(sp.tau_gamma_add)];
    return v + tg * tg;
  }
  double q = sp.q[study] >= 0 ? s[static_cast<std::size_t>(sp.q[study])] : sp.q_fixed[study];
  if (!(q > 0.0) || !(q <= 1.0)) return -1.0;  // signals an invalid variance
  return v / q;
}

double PosteriorKernel::eval_block(std::size_t block, const ParameterState& s) const {
  const Block& blk = blocks_[block];
  const std::size_t j = static_cast<std::size_t>(blk.study);
  const StudyPlan& plan = plans_[j];
  const ParameterSpace& sp = *space_;
  switch (blk.kind) {
    case Block::Kind::data:
      return data_loglik_study(s, j);
    case Block::Kind::re_delta: {
      double tau = s[static_cast<std::size_t>(sp.tau)];
      static thread_local std::vector<double> y, mean, var;
      y.clear(); mean.clear(); var.clear();
      for (const Contrast& c : plan.contrasts) {
        y.push_back(s[static_cast<std::size_t>(c.idx_delta)]);
        mean.push_back(contrast_ddiff(s, c));
        var.push_back(tau * tau);
      }
      return multiarm_normal_logpdf(y, mean, var);
    }
    case Block::Kind::theta_prior: {
      bool biased = indicator_value(s, j) >= 0.5;
      double v = theta_component_var(s, j, biased);
      if (!(v > 0.0)) return kNegInf;
      static thread_local std::vector<double> y, mean, var;
      y.clear(); mean.clear(); var.clear();
      for (std::size_t m = 0; m < plan.contrasts.size(); ++m) {
        const Contrast& c = plan.contrasts[m];
        y.push_back(s[static_cast<std::size_t>(c.idx_delta)]);
        mean.push_back(contrast_ddiff(s, c) + (biased ? resolved_gamma_add(s, j, m) : 0.0));
        var.push_back(v);
      }
      return multiarm_normal_logpdf(y, mean, var);
    }
    case Block::Kind::int_b: {
      double tb = s[static_cast<std::size_t>(sp.tau_b)];
      double ll = 0.0;
      for (const Contrast& c : plan.contrasts) {
        double mean = (c.idx_bb_k >= 0 ? s[static_cast<std::size_t>(c.idx_bb_k)] : 0.0) -
                      (c.idx_bb_b >= 0 ? s[static_cast<std::size_t>(c.idx_bb_b)] : 0.0);
        ll += normal_logpdf(s[static_cast<std::size_t>(c.idx_beta_b)], mean, tb * tb);
      }
      return ll;
    }
    case Block::Kind::int_w: {
      double tw = s[static_cast<std::size_t>(sp.tau_w)];
      double ll = 0.0;
      for (const Contrast& c : plan.contrasts) {
        double mean = (c.idx_bw_k >= 0 ? s[static_cast<std::size_t>(c.idx_bw_k)] : 0.0) -
                      (c.idx_bw_b >= 0 ? s[static_cast<std::size_t>(c.idx_bw_b)] : 0.0);
        ll += normal_logpdf(s[static_cast<std::size_t>(c.idx_beta_w)], mean, tw * tw);
      }
      return ll;
    }
    case Block::Kind::beta0_re: {
      double t0 = s[static_cast<std::size_t>(sp.tau0)];
      return normal_logpdf(s[static_cast<std::size_t>(sp.beta0[j])],
                           s[static_cast<std::size_t>(sp.beta0_mean)], t0 * t0);
    }
    case Block::Kind::gamma_add: {
      double tg = s[static_cast<std::size_t>(sp.tau_gamma_add)];
      double ll = 0.0;
      for (std::size_t m = 0; m < plan.contrasts.size(); ++m) {
        const Contrast& c = plan.contrasts[m];
        ll += normal_logpdf(s[static_cast<std::size_t>(c.idx_gamma_add)], c.mb_add.resolve(s), tg * tg);
      }
      return ll;
    }
    case Block::Kind::gamma_mult: {
      double tg = s[static_cast<std::size_t>(sp.tau_gamma_mult)];
      double ll = 0.0;
      for (std::size_t m = 0; m < plan.contrasts.size(); ++m) {
        const Contrast& c = plan.contrasts[m];
        ll += normal_logpdf(s[static_cast<std::size_t>(c.idx_gamma_mult)], c.mb_mult.resolve(s), tg * tg);
      }
      return ll;
    }
    case Block::Kind::dbias: {
      double tau = s[static_cast<std::size_t>(sp.tau)];
      double q = sp.q[j] >= 0 ? s[static_cast<std::size_t>(sp.q[j])] : sp.q_fixed[j];
      if (!(q > 0.0) || !(q <= 1.0)) return kNegInf;
      static thread_local std::vector<double> y, mean, var;
      y.clear(); mean.clear(); var.clear();
      for (const Contrast& c : plan.contrasts) {
        y.push_back(s[static_cast<std::size_t>(c.idx_delta_bias)]);
        mean.push_back(c.mb_add.resolve(s) + contrast_ddiff(s, c));
        var.push_back(tau * tau / q);
      }
      return multiarm_normal_logpdf(y, mean, var);
    }
    case Block::Kind::pi_r: {
      bool hit = s[static_cast<std::size_t>(sp.r_ind[j])] >= 0.5;
      return bernoulli_logpmf(hit, bias_probability(s, j));
    }
    case Block::Kind::dir_bern: {
      double p = s[static_cast<std::size_t>(sp.p_dir)];
      double ll = 0.0;
      for (int d : sp.dir[j])
        if (d >= 0) ll += bernoulli_logpmf(s[static_cast<std::size_t>(d)] >= 0.5, p);
      return ll;
    }
  }
  return 0.0;
}

double PosteriorKernel::marginal_logprior(std::size_t param, double value) const {
  const ParamDescriptor& d = space_->params[param];
  switch (d.prior) {
    case MarginalPrior::none: return 0.0;
    case MarginalPrior::normal: return normal_logpdf(value, d.prior_a, d.prior_b);
    case MarginalPrior::uniform:
      return value > d.prior_a && value < d.prior_b ? -std::log(d.prior_b - d.prior_a) : kNegInf;
    case MarginalPrior::beta: return beta_logpdf(value, d.prior_a, d.prior_b);
  }
  return 0.0;
}

double PosteriorKernel::log_posterior(const ParameterState& s) const {
  for (double v : s.values)
    if (std::isnan(v)) throw std::invalid_argument("log_posterior: NaN parameter value");
  double lp = 0.0;
  for (std::size_t b = 0; b < blocks_.size(); ++b) lp += eval_block(b, s);
  for (std::size_t p = 0; p < space_->size(); ++p) lp += marginal_logprior(p, s[p]);
  return lp;
}

double PosteriorKernel::data_loglik(const ParameterState& s) const {
  double ll = 0.0;
  for (std::size_t j = 0; j < plans_.size(); ++j) ll += data_loglik_study(s, j);
  return ll;
}

double PosteriorKernel::ipd_loglik(const ParameterState& s) const {
  double ll = 0.0;
  for (std::size_t j = 0; j < plans_.size(); ++j)
    if (plans_[j].ipd) ll += data_loglik_study(s, j);
  return ll;
}

double PosteriorKernel::ad_loglik(const ParameterState& s) const {
  double ll = 0.0;
  for (std::size_t j = 0; j < plans_.size(); ++j)
    if (!plans_[j].ipd) ll += data_loglik_study(s, j);
  return ll;
}

double PosteriorKernel::linear_predictor_ipd(const ParameterState& s, std::size_t study, std::size_t row) const {
  const Study& st = net_->studies[study];
  const IpdRecord& rec = st.ipd.at(row);
  const StudyPlan& plan = plans_[study];
  double u = s[static_cast<std::size_t>(space_->u[study])];
  int b0_idx = space_->beta0[study];
  double beta0 = b0_idx >= 0 ? s[static_cast<std::size_t>(b0_idx)] : 0.0;
  int cov = cfg_->regression.enabled ? cfg_->regression.covariate_index : -1;
  double x = cov >= 0 ? rec.x[static_cast<std::size_t>(cov)] : 0.0;
  if (rec.treatment == st.reference_arm) return u + beta0 * x;
  auto non_ref = st.non_reference_arms();
  std::size_t m = static_cast<std::size_t>(std::find(non_ref.begin(), non_ref.end(), rec.treatment) -
                                           non_ref.begin());
  const Contrast& c = plan.contrasts[m];
  double r = indicator_value(s, study);
  double bw = c.idx_beta_w >= 0 ? s[static_cast<std::size_t>(c.idx_beta_w)]
                                : (c.idx_bw_k >= 0 ? s[static_cast<std::size_t>(c.idx_bw_k)] : 0.0) -
                                      (c.idx_bw_b >= 0 ? s[static_cast<std::size_t>(c.idx_bw_b)] : 0.0);
  double bb = c.idx_beta_b >= 0 ? s[static_cast<std::size_t>(c.idx_beta_b)]
                                : (c.idx_bb_k >= 0 ? s[static_cast<std::size_t>(c.idx_bb_k)] : 0.0) -
                                      (c.idx_bb_b >= 0 ? s[static_cast<std::size_t>(c.idx_bb_b)] : 0.0);
  return u + treatment_term(s, plan, c, r, study) + beta0 * x + bw * x + (bb - bw) * plan.xbar;
}

double PosteriorKernel::linear_predictor_ad(const ParameterState& s, std::size_t study, int treatment) const {
  const Study& st = net_->studies[study];
  const StudyPlan& plan = plans_[study];
  double u = s[static_cast<std::size_t>(space_->u[study])];
  if (treatment == st.reference_arm) return u;
  auto non_ref = st.non_reference_arms();
  std::size_t m = static_cast<std::size_t>(std::find(non_ref.begin(), non_ref.end(), treatment) -
                                           non_ref.begin());
  const Contrast& c = plan.contrasts[m];
  double r = indicator_value(s, study);
  double bb = c.idx_beta_b >= 0 ? s[static_cast<std::size_t>(c.idx_beta_b)]
                                : (c.idx_bb_k >= 0 ? s[static_cast<std::size_t>(c.idx_bb_k)] : 0.0) -
                                      (c.idx_bb_b >= 0 ? s[static_cast<std::size_t>(c.idx_bb_b)] : 0.0);
  return u + treatment_term(s, plan, c, r, study) + bb * plan.xbar;
}

double PosteriorKernel::random_effects_logprior(const ParameterState& s, std::size_t study) const {
  for (std::size_t b = 0; b < blocks_.size(); ++b)
    if (blocks_[b].kind == Block::Kind::re_delta && blocks_[b].study == static_cast<int>(study))
      return eval_block(b, s);
  return 0.0;
}

double PosteriorKernel::interaction_logprior(const ParameterState& s) const {
  double ll = 0.0;
  for (std::size_t b = 0; b < blocks_.size(); ++b)
    if (blocks_[b].kind == Block::Kind::int_b || blocks_[b].kind == Block::Kind::int_w)
      ll += eval_block(b, s);
  return ll;
}

double PosteriorKernel::bias_structure_logprior(const ParameterState& s) const {
  double ll = 0.0;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    auto k = blocks_[b].kind;
    if (k == Block::Kind::gamma_add || k == Block::Kind::gamma_mult || k == Block::Kind::dbias)
      ll += eval_block(b, s);
  }
  for (std::size_t p = 0; p < space_->size(); ++p)
    if (space_->params[p].role == ParamRole::rob_weight_q) ll += marginal_logprior(p, s[p]);
  return ll;
}

double PosteriorKernel::bias_probability_logprior(const ParameterState& s) const {
  double ll = 0.0;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    auto k = blocks_[b].kind;
    if (k == Block::Kind::pi_r || k == Block::Kind::dir_bern) ll += eval_block(b, s);
  }
  for (std::size_t p = 0; p < space_->size(); ++p) {
    auto role = space_->params[p].role;
    if (role == ParamRole::bias_pi || role == ParamRole::logistic_e || role == ParamRole::logistic_f ||
        role == ParamRole::p_direction)
      ll += marginal_logprior(p, s[p]);
  }
  return ll;
}

double PosteriorKernel::mixture_logprior_theta(const ParameterState& s, std::size_t study) const {
  for (std::size_t b = 0; b < blocks_.size(); ++b)
    if (blocks_[b].kind == Block::Kind::theta_prior && blocks_[b].study == static_cast<int>(study))
      return eval_block(b, s);
  return 0.0;
}

double PosteriorKernel::mixture_logprior_theta_marginal(const ParameterState& s, std::size_t study) const {
  int block = -1;
  for (std::size_t b = 0; b < blocks_.size(); ++b)
    if (blocks_[b].kind == Block::Kind::theta_prior && blocks_[b].study == static_cast<int>(study))
      block = static_cast<int>(b);
  if (block < 0) return 0.0;
  double pi = bias_probability(s, study);
  ParameterState tmp = s;
  std::size_t r_idx = static_cast<std::size_t>(space_->r_ind[study]);
  tmp[r_idx] = 0.0;
  double l0 = eval_block(static_cast<std::size_t>(block), tmp);
  tmp[r_idx] = 1.0;
  double l1 = eval_block(static_cast<std::size_t>(block), tmp);
  double a = std::log1p(-pi) + l0, b = std::log(pi) + l1;
  if (pi <= 0.0) return l0;
  if (pi >= 1.0) return l1;
  double hi = std::max(a, b);
  return hi + std::log(std::exp(a - hi) + std::exp(b - hi));
}

double PosteriorKernel::hyperprior_logdensity(const ParameterState& s) const {
  double ll = 0.0;
  for (std::size_t p = 0; p < space_->size(); ++p) {
    auto role = space_->params[p].role;
    if (role == ParamRole::bias_pi || role == ParamRole::rob_weight_q || role == ParamRole::p_direction ||
        role == ParamRole::logistic_e || role == ParamRole::logistic_f)
      continue;
    ll += marginal_logprior(p, s[p]);
  }
  return ll;
}

std::vector<bool> PosteriorKernel::referenced_params() const {
  std::vector<bool> seen(space_->size(), false);
  for (std::size_t p = 0; p < space_->size(); ++p)
    seen[p] = !deps_[p].empty() || space_->params[p].prior != MarginalPrior::none;
  return seen;
}

}  // namespace nmsynth
