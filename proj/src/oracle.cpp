#include "nmsynth/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "nmsynth/csv.hpp"
#include "nmsynth/kernel.hpp"
#include "nmsynth/report.hpp"

namespace nmsynth {

namespace {

double tiny_loglik(const TinyModelSpec& spec, const std::vector<double>& theta) {
  // theta: u per study, then d (when included). Binomial-logit likelihood,
  // written out directly so this path shares nothing with PosteriorKernel.
  double ll = 0.0;
  const std::size_t ns = spec.studies.size();
  for (std::size_t j = 0; j < ns; ++j) {
    const TinyStudy& s = spec.studies[j];
    double u = theta[j];
    double d = spec.include_d ? theta[ns] : 0.0;
    double m0 = u, m1 = u + d;
    auto sp = [](double m) { return m > 0.0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m)); };
    ll += static_cast<double>(s.r_ref) * m0 - static_cast<double>(s.n_ref) * sp(m0);
    ll += static_cast<double>(s.r_trt) * m1 - static_cast<double>(s.n_trt) * sp(m1);
  }
  return ll;
}

double tiny_logprior(const TinyModelSpec& spec, const std::vector<double>& theta) {
  double lp = 0.0;
  const std::size_t ns = spec.studies.size();
  for (std::size_t j = 0; j < ns; ++j) {
    double z = theta[j] - spec.prior_mean_u;
    lp += -0.5 * z * z / spec.prior_var_u - 0.5 * std::log(2.0 * M_PI * spec.prior_var_u);
  }
  if (spec.include_d) {
    double z = theta[ns] - spec.prior_mean_d;
    lp += -0.5 * z * z / spec.prior_var_d - 0.5 * std::log(2.0 * M_PI * spec.prior_var_d);
  }
  return lp;
}

}  // namespace

OracleMoments grid_posterior_oracle(const TinyModelSpec& spec) {
  const std::size_t ns = spec.studies.size();
  const std::size_t dim = ns + (spec.include_d ? 1 : 0);
  if (ns > 2) throw std::invalid_argument("grid_posterior_oracle: at most 2 studies");
  if (dim == 0 || dim > 3) throw std::invalid_argument("grid_posterior_oracle: dimension must be 1..3");
  const int n = spec.points_per_dim;
  if (n < 3) throw std::invalid_argument("grid_posterior_oracle: need at least 3 points per dimension");

  OracleMoments out;
  std::vector<std::vector<double>> grids(dim);
  for (std::size_t a = 0; a < dim; ++a) {
    bool is_d = spec.include_d && a == ns;
    double mean = is_d ? spec.prior_mean_d : spec.prior_mean_u;
    double sd = std::sqrt(is_d ? spec.prior_var_d : spec.prior_var_u);
    double lo = mean - spec.range_sds * sd, hi = mean + spec.range_sds * sd;
    grids[a].resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      grids[a][static_cast<std::size_t>(i)] = lo + (hi - lo) * static_cast<double>(i) / (n - 1);
    out.names.push_back(is_d ? "d" : "u[" + std::to_string(a + 1) + "]");
  }

  std::vector<std::size_t> idx(dim, 0);
  std::vector<double> theta(dim, 0.0);
  auto for_each_node = [&](auto&& visit) {
    std::fill(idx.begin(), idx.end(), 0);
    while (true) {
      double logw = 0.0;
      for (std::size_t a = 0; a < dim; ++a) {
        theta[a] = grids[a][idx[a]];
        bool edge = idx[a] == 0 || idx[a] + 1 == grids[a].size();
        logw += edge ? std::log(0.5) : 0.0;  // trapezoid end weights; h factored out
      }
      visit(theta, logw);
      std::size_t a = 0;
      while (a < dim) {
        if (++idx[a] < grids[a].size()) break;
        idx[a] = 0;
        ++a;
      }
      if (a == dim) break;
    }
  };

  double max_lp = -std::numeric_limits<double>::infinity();
  for_each_node([&](const std::vector<double>& th, double logw) {
    double lp = tiny_loglik(spec, th) + tiny_logprior(spec, th) + logw;
    max_lp = std::max(max_lp, lp);
  });

  std::vector<double> sum1(dim, 0.0), sum2(dim, 0.0);
  double z = 0.0;
  for_each_node([&](const std::vector<double>& th, double logw) {
    double w = std::exp(tiny_loglik(spec, th) + tiny_logprior(spec, th) + logw - max_lp);
    z += w;
    for (std::size_t a = 0; a < dim; ++a) {
      sum1[a] += w * th[a];
      sum2[a] += w * th[a] * th[a];
    }
  });

  double log_h = 0.0;
  for (std::size_t a = 0; a < dim; ++a) log_h += std::log(grids[a][1] - grids[a][0]);
  out.log_normalizer = std::log(z) + max_lp + log_h;
  for (std::size_t a = 0; a < dim; ++a) {
    double mean = sum1[a] / z;
    double var = sum2[a] / z - mean * mean;
    out.mean.push_back(mean);
    out.sd.push_back(std::sqrt(std::max(var, 0.0)));
  }
  return out;
}

EvidenceNetwork tiny_network(const TinyModelSpec& spec) {
  EvidenceNetwork net;
  net.treatments = {{1, "control", false}, {2, "active", true}};
  net.reference_treatment = 1;
  for (std::size_t j = 0; j < spec.studies.size(); ++j) {
    Study s;
    s.id = "t" + std::to_string(j + 1);
    s.design = Design::rct;
    s.format = DataFormat::ad;
    s.rob = RobLevel::low;
    s.reference_arm = 1;
    s.arms = {1, 2};
    s.ad.push_back({1, spec.studies[j].r_ref, spec.studies[j].n_ref, {}});
    s.ad.push_back({2, spec.studies[j].r_trt, spec.studies[j].n_trt, {}});
    net.studies.push_back(std::move(s));
  }
  return net;
}

ModelConfig tiny_config(const TinyModelSpec& spec) {
  ModelConfig cfg;
  cfg.approach = Approach::unadjusted;
  cfg.trt_effect = EffectModel::common_effect;
  cfg.priors.vague_sd = std::sqrt(spec.prior_var_u);
  return cfg;
}

SimulatedNetwork simulate_network(const SimulationSpec& spec) {
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32), 0x51u};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  SimulatedNetwork out;
  EvidenceNetwork& net = out.network;
  net.treatments = spec.treatments;
  net.reference_treatment = spec.reference;
  std::size_t dim = spec.with_covariate ? 1 : 0;
  net.covariate_names.assign(dim, "x1");
  net.covariate_centers.assign(dim, 0.0);

  out.truth.values["tau"] = spec.tau;
  out.truth.values["g_add"] = spec.g_true;
  out.truth.values["g_add_act"] = spec.g_act_true;
  out.truth.values["tau_gamma"] = spec.tau_gamma;
  for (const auto& t : spec.treatments) {
    double d = t.id == spec.reference ? 0.0 : spec.d_true[static_cast<std::size_t>(t.id - 1)];
    if (t.id != spec.reference) out.truth.values["d[" + t.label + "]"] = d;
  }

  for (const auto& ss : spec.studies) {
    Study s;
    s.id = ss.id;
    s.design = ss.design;
    s.format = ss.format;
    s.rob = ss.rob;
    s.reference_arm = ss.arms[0];
    s.arms = ss.arms;
    s.directions = ss.directions;

    double u = spec.u_mean + spec.u_sd * normal(rng);
    out.truth.study_u[s.id] = u;

    double pi = ss.rob == RobLevel::high ? spec.pi_high
                : ss.rob == RobLevel::low ? spec.pi_low
                                          : spec.pi_unclear;
    int biased = unif(rng) < pi ? 1 : 0;
    out.truth.study_biased[s.id] = biased;

    // Arm-based random effects give the (tau^2, tau^2/2) multi-arm structure.
    std::map<int, double> arm_re;
    for (int a : ss.arms) arm_re[a] = spec.tau > 0.0 ? spec.tau / std::sqrt(2.0) * normal(rng) : 0.0;

    const bool b_active = net.is_active(s.reference_arm);
    std::map<int, double> contrast;  // non-reference arm -> treatment+bias term
    for (std::size_t m = 1; m < ss.arms.size(); ++m) {
      int k = ss.arms[m];
      double d_b = s.reference_arm == spec.reference ? 0.0 : spec.d_true[static_cast<std::size_t>(s.reference_arm - 1)];
      double d_k = k == spec.reference ? 0.0 : spec.d_true[static_cast<std::size_t>(k - 1)];
      double delta = (d_k + arm_re[k]) - (d_b + arm_re[s.reference_arm]);
      if (biased) {
        const bool k_active = net.is_active(k);
        double mean_bias = 0.0;
        if (b_active != k_active) mean_bias = b_active ? -spec.g_true : spec.g_true;
        else if (b_active && k_active) {
          auto it = ss.directions.find({s.reference_arm, k});
          int dir = it != ss.directions.end() && it->second == BiasDirection::favours_k ? 1 : 0;
          mean_bias = (dir ? -1.0 : 1.0) * spec.g_act_true;
        }
        delta += mean_bias + (spec.tau_gamma > 0.0 ? spec.tau_gamma * normal(rng) : 0.0);
      }
      contrast[k] = delta;
    }

    for (std::size_t m = 0; m < ss.arms.size(); ++m) {
      int t = ss.arms[m];
      long n = ss.arm_sizes[m];
      double base = u + (m == 0 ? 0.0 : contrast[t]);
      double beta1 = 0.0;
      if (spec.with_covariate && m > 0 && !spec.beta1_true.empty()) {
        double b1_k = spec.beta1_true[static_cast<std::size_t>(t - 1)];
        double b1_b = spec.beta1_true[static_cast<std::size_t>(s.reference_arm - 1)];
        beta1 = b1_k - b1_b;
      }
      if (s.format == DataFormat::ipd) {
        for (long i = 0; i < n; ++i) {
          IpdRecord rec;
          rec.treatment = t;
          double x = spec.with_covariate ? ss.cov_mean + ss.cov_sd * normal(rng) : 0.0;
          double logit_p = base + (spec.with_covariate ? (spec.beta0_true + beta1) * x : 0.0);
          rec.outcome = unif(rng) < inv_logit(logit_p) ? 1 : 0;
          if (dim) rec.x.push_back(x);
          s.ipd.push_back(std::move(rec));
        }
      } else {
        AdArm arm;
        arm.treatment = t;
        arm.sample_size = n;
        double logit_p = base + (spec.with_covariate ? beta1 * ss.cov_mean : 0.0);
        double p = inv_logit(logit_p);
        long r = 0;
        for (long i = 0; i < n; ++i) r += unif(rng) < p ? 1 : 0;
        arm.events = r;
        if (dim) arm.mean_x.push_back(ss.cov_mean);
        s.ad.push_back(std::move(arm));
      }
    }
    net.studies.push_back(std::move(s));
  }
  return out;
}

SimulationSpec preset_spec(const std::string& name, std::uint64_t seed) {
  SimulationSpec spec;
  spec.seed = seed;
  if (name == "tiny") {
    spec.treatments = {{1, "control", false}, {2, "active", true}};
    spec.studies = {{"t1", Design::rct, DataFormat::ad, RobLevel::low, {1, 2}, {10, 10}, 0, 0, {}}};
    spec.d_true = {0.0, 0.8};
    return spec;
  }
  if (name == "rrms-shape") {
    // Six studies, four treatments, mixed design and format, one covariate.
    spec.treatments = {{1, "placebo", false}, {2, "drug_a", true}, {3, "drug_b", true}, {4, "drug_c", true}};
    spec.d_true = {0.0, -1.2, -0.75, -0.35};
    spec.u_mean = -0.2;
    spec.u_sd = 0.25;
    spec.with_covariate = true;
    spec.beta0_true = 0.015;
    spec.beta1_true = {0.0, 0.012, 0.012, 0.012};
    spec.g_true = -0.35;
    spec.g_act_true = -0.3;
    spec.tau_gamma = 0.0;
    spec.studies = {
        {"ipd_rct_1", Design::rct, DataFormat::ipd, RobLevel::low, {1, 2}, {312, 627}, 36, 7, {}},
        {"ipd_rct_2", Design::rct, DataFormat::ipd, RobLevel::low, {1, 3, 4}, {473, 472, 472}, 37, 7, {}},
        {"ipd_rct_3", Design::rct, DataFormat::ipd, RobLevel::low, {1, 3}, {617, 617}, 39, 7, {}},
        {"cohort", Design::nrs, DataFormat::ipd, RobLevel::high, {4, 2, 3}, {63, 80, 63}, 46, 8,
         {{{4, 2}, BiasDirection::favours_k}, {{4, 3}, BiasDirection::favours_k}}},
        {"ad_rct_1", Design::rct, DataFormat::ad, RobLevel::high, {1, 4}, {25, 25}, 34, 0, {}},
        {"ad_rct_2", Design::rct, DataFormat::ad, RobLevel::high, {1, 4}, {126, 125}, 30, 0, {}},
    };
    return spec;
  }
  if (name == "two-step") {
    spec.treatments = {{1, "control", false}, {2, "active", true}};
    spec.d_true = {0.0, 0.0};
    spec.u_mean = -0.4;
    spec.u_sd = 0.2;
    spec.studies = {
        {"rct_1", Design::rct, DataFormat::ad, RobLevel::low, {1, 2}, {40, 40}, 0, 0, {}},
        {"rct_2", Design::rct, DataFormat::ad, RobLevel::low, {1, 2}, {40, 40}, 0, 0, {}},
        {"nrs_1", Design::nrs, DataFormat::ad, RobLevel::low, {1, 2}, {2500, 2500}, 0, 0, {}},
    };
    return spec;
  }
  throw std::invalid_argument("unknown preset '" + name + "'");
}

void write_truth_csv(const TruthRecord& truth, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path, 0, "cannot open for writing");
  out << csv_join({"name", "value"});
  for (const auto& [name, value] : truth.values) out << csv_join({name, format_double(value)});
  for (const auto& [sid, r] : truth.study_biased) out << csv_join({"R[" + sid + "]", std::to_string(r)});
  for (const auto& [sid, u] : truth.study_u) out << csv_join({"u[" + sid + "]", format_double(u)});
}

const RecoveryRow* RecoveryReport::find(const std::string& name) const {
  for (const auto& r : rows)
    if (r.name == name) return &r;
  return nullptr;
}

void RecoveryReport::write_csv(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path, 0, "cannot open for writing");
  out << csv_join({"parameter", "truth", "covered", "replicates", "coverage", "mean_bias"});
  for (const auto& r : rows)
    out << csv_join({r.name, format_double(r.truth), std::to_string(r.covered), std::to_string(r.replicates),
                     format_double(static_cast<double>(r.covered) / std::max(1, r.replicates)),
                     format_double(r.mean_bias)});
}

RecoveryReport recovery_experiment(const SimulationSpec& spec, const ModelConfig& cfg,
                                   const SamplerSettings& settings, int replicates) {
  std::map<std::string, RecoveryRow> rows;
  for (int rep = 0; rep < replicates; ++rep) {
    SimulationSpec rep_spec = spec;
    rep_spec.seed = spec.seed + static_cast<std::uint64_t>(rep) * 1000003ULL;
    SimulatedNetwork sim = simulate_network(rep_spec);
    ModelConfig rep_cfg = cfg;
    rep_cfg.validate(sim.network);
    ParameterSpace space = build_parameter_space(sim.network, rep_cfg);
    PosteriorKernel kernel(sim.network, rep_cfg, space);
    SamplerSettings rep_settings = settings;
    rep_settings.seed = settings.seed + static_cast<std::uint64_t>(rep) * 7919ULL;
    PosteriorSamples samples = run_chains(kernel, rep_settings);
    FitReport report = summarize(samples);

    auto tally = [&](const std::string& name, double truth) {
      const ParamSummary* s = report.find(name);
      if (!s) return;
      RecoveryRow& row = rows[name];
      row.name = name;
      row.truth = truth;
      row.replicates += 1;
      row.covered += (truth >= s->lo && truth <= s->hi) ? 1 : 0;
      row.mean_bias += (s->median - truth);
      row.mean_median += s->median;
    };
    for (const auto& t : sim.network.treatments) {
      if (t.id == sim.network.reference_treatment) continue;
      tally("d[" + t.label + "]", sim.truth.values.at("d[" + t.label + "]"));
    }
    if (cfg.bias) {
      tally("g_add", spec.g_true);
      tally("g_add_act", spec.g_act_true);
    }
    if (cfg.trt_effect == EffectModel::random_effect) tally("tau", spec.tau);
  }
  RecoveryReport out;
  for (auto& [name, row] : rows) {
    row.mean_bias /= std::max(1, row.replicates);
    row.mean_median /= std::max(1, row.replicates);
    out.rows.push_back(row);
  }
  return out;
}

}  // namespace nmsynth
