#include <cmath>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "nmsynth/kernel.hpp"

using namespace nmsynth;
using nmsynth::testing::load_rrms_shape;
using nmsynth::testing::random_state;
using nmsynth::testing::two_arm_ad_network;

namespace {

// One IPD study built so that the study mean covariate is exactly 1.5 while
// the treated row sits at x = 2.
EvidenceNetwork nmr_hand_network() {
  EvidenceNetwork net;
  net.treatments = {{1, "control", false}, {2, "active", true}};
  net.reference_treatment = 1;
  net.covariate_names = {"x1"};
  net.covariate_centers = {0.0};
  Study s;
  s.id = "s1";
  s.format = DataFormat::ipd;
  s.design = Design::rct;
  s.reference_arm = 1;
  s.arms = {1, 2};
  s.ipd = {{1, 0, {1.0}}, {2, 1, {2.0}}};
  net.studies.push_back(std::move(s));
  return net;
}

ModelConfig nmr_config() {
  ModelConfig cfg;
  cfg.trt_effect = EffectModel::random_effect;
  cfg.regression.enabled = true;
  cfg.regression.covariate = "x1";
  cfg.regression.within_between = WithinBetween::separate;
  cfg.regression.interaction = EffectModel::random_effect;
  return cfg;
}

}  // namespace

TEST_CASE("linear predictors reproduce the hand-evaluated formulas") {
  EvidenceNetwork net = nmr_hand_network();
  ModelConfig cfg = nmr_config();
  cfg.validate(net);
  ParameterSpace sp = build_parameter_space(net, cfg);
  PosteriorKernel kernel(net, cfg, sp);
  ParameterState st;
  st.values.assign(sp.size(), 0.0);
  auto set = [&](const std::string& name, double v) {
    int idx = sp.index_of(name);
    REQUIRE(idx >= 0);
    st[static_cast<std::size_t>(idx)] = v;
  };
  set("u[s1]", -1.0);
  set("delta[s1:active]", -0.5);
  set("beta0[s1]", 0.2);
  set("betaW[s1:active]", 0.1);
  set("betaB[s1:active]", 0.3);
  set("tau", 1.0);

  // control arm, centered covariate at 0
  ParameterState ctl = st;
  ctl[static_cast<std::size_t>(sp.index_of("beta0[s1]"))] = 0.5;
  ctl[static_cast<std::size_t>(sp.index_of("u[s1]"))] = -1.0;
  EvidenceNetwork net0 = nmr_hand_network();
  net0.studies[0].ipd[0].x[0] = 0.0;
  PosteriorKernel k0(net0, cfg, sp);
  CHECK(k0.linear_predictor_ipd(ctl, 0, 0) == doctest::Approx(-1.0));

  // treated row: u + delta + beta0 x + betaW x + (betaB - betaW) xbar
  // = -1 - 0.5 + 0.4 + 0.2 + 0.2 * 1.5 = -0.6
  CHECK(kernel.linear_predictor_ipd(st, 0, 1) == doctest::Approx(-0.6).epsilon(1e-12));
}

TEST_CASE("AD linear predictor covers reference, multiplicative and theta forms") {
  EvidenceNetwork net = two_arm_ad_network({{3, 10, 5, 10}});
  SUBCASE("reference arm is the baseline alone") {
    ModelConfig cfg;
    cfg.trt_effect = EffectModel::common_effect;
    cfg.validate(net);
    ParameterSpace sp = build_parameter_space(net, cfg);
    PosteriorKernel kernel(net, cfg, sp);
    ParameterState st;
    st.values.assign(sp.size(), 0.0);
    st[static_cast<std::size_t>(sp.index_of("u[s1]"))] = -0.7;
    CHECK(kernel.linear_predictor_ad(st, 0, 1) == doctest::Approx(-0.7));
  }
  SUBCASE("multiplicative bias scales delta by gamma1^R") {
    ModelConfig cfg;
    cfg.approach = Approach::bias_model_1;
    cfg.trt_effect = EffectModel::random_effect;
    cfg.bias = BiasConfig{};
    cfg.bias->form = BiasForm::multiplicative;
    cfg.bias->effect = EffectModel::random_effect;
    cfg.validate(net);
    ParameterSpace sp = build_parameter_space(net, cfg);
    PosteriorKernel kernel(net, cfg, sp);
    ParameterState st;
    st.values.assign(sp.size(), 0.0);
    st[static_cast<std::size_t>(sp.index_of("tau"))] = 0.5;
    st[static_cast<std::size_t>(sp.index_of("tau_gamma_mult"))] = 0.5;
    st[static_cast<std::size_t>(sp.index_of("delta[s1:active]"))] = 0.8;
    st[static_cast<std::size_t>(sp.index_of("log_gamma1[s1:active]"))] = std::log(0.5);
    st[static_cast<std::size_t>(sp.index_of("R[s1]"))] = 1.0;
    CHECK(kernel.linear_predictor_ad(st, 0, 2) == doctest::Approx(0.4).epsilon(1e-12));
    st[static_cast<std::size_t>(sp.index_of("R[s1]"))] = 0.0;
    CHECK(kernel.linear_predictor_ad(st, 0, 2) == doctest::Approx(0.8).epsilon(1e-12));
  }
  SUBCASE("theta substitutes the whole treatment term") {
    ModelConfig cfg;
    cfg.approach = Approach::bias_model_2;
    cfg.trt_effect = EffectModel::random_effect;
    cfg.bias = BiasConfig{};
    cfg.validate(net);
    ParameterSpace sp = build_parameter_space(net, cfg);
    PosteriorKernel kernel(net, cfg, sp);
    ParameterState st;
    st.values.assign(sp.size(), 0.0);
    st[static_cast<std::size_t>(sp.index_of("u[s1]"))] = -1.0;
    st[static_cast<std::size_t>(sp.index_of("theta[s1:active]"))] = 0.25;
    CHECK(kernel.linear_predictor_ad(st, 0, 2) == doctest::Approx(-0.75));
  }
}

TEST_CASE("bias model 1 additive term adds gamma2 R to the predictor") {
  EvidenceNetwork net = nmr_hand_network();
  ModelConfig cfg = nmr_config();
  cfg.approach = Approach::bias_model_1;
  cfg.bias = BiasConfig{};
  cfg.bias->form = BiasForm::additive;
  cfg.bias->effect = EffectModel::random_effect;
  cfg.validate(net);
  ParameterSpace sp = build_parameter_space(net, cfg);
  PosteriorKernel kernel(net, cfg, sp);
  ParameterState st;
  st.values.assign(sp.size(), 0.0);
  auto set = [&](const std::string& name, double v) {
    int idx = sp.index_of(name);
    REQUIRE(idx >= 0);
    st[static_cast<std::size_t>(idx)] = v;
  };
  set("u[s1]", -1.0);
  set("delta[s1:active]", -0.5);
  set("beta0[s1]", 0.2);
  set("betaW[s1:active]", 0.1);
  set("betaB[s1:active]", 0.3);
  set("gamma[s1:active]", 0.3);
  set("R[s1]", 1.0);
  CHECK(kernel.linear_predictor_ipd(st, 0, 1) == doctest::Approx(-0.3).epsilon(1e-12));
  set("R[s1]", 0.0);
  CHECK(kernel.linear_predictor_ipd(st, 0, 1) == doctest::Approx(-0.6).epsilon(1e-12));
}

TEST_CASE("ipd_loglik matches scalar arithmetic") {
  EvidenceNetwork net;
  net.treatments = {{1, "c", false}, {2, "t", true}};
  net.reference_treatment = 1;
  Study s;
  s.id = "s1";
  s.format = DataFormat::ipd;
  s.reference_arm = 1;
  s.arms = {1, 2};
  s.ipd = {{1, 1, {}}, {2, 0, {}}};
  net.studies.push_back(s);
  ModelConfig cfg;
  cfg.trt_effect = EffectModel::common_effect;
  cfg.validate(net);
  ParameterSpace sp = build_parameter_space(net, cfg);
  PosteriorKernel kernel(net, cfg, sp);
  ParameterState st;
  st.values.assign(sp.size(), 0.0);
  // both rows at logit 0
  CHECK(kernel.ipd_loglik(st) == doctest::Approx(2 * std::log(0.5)).epsilon(1e-12));
  // one row y=1 at logit 3: log sigmoid(3)
  net.studies[0].ipd = {{2, 1, {}}};
  net.studies[0].arms = {1, 2};
  PosteriorKernel k2(net, cfg, sp);
  st[static_cast<std::size_t>(sp.index_of("d[t]"))] = 3.0;
  CHECK(k2.ipd_loglik(st) == doctest::Approx(-0.04858735157374206).epsilon(1e-10));
}

TEST_CASE("ad_loglik includes the binomial coefficient") {
  EvidenceNetwork net = two_arm_ad_network({{3, 10, 1, 1}});
  ModelConfig cfg;
  cfg.trt_effect = EffectModel::common_effect;
  cfg.validate(net);
  ParameterSpace sp = build_parameter_space(net, cfg);
  PosteriorKernel kernel(net, cfg, sp);
  ParameterState st;
  st.values.assign(sp.size(), 0.0);
  // r=3, n=10 at p=0.5: log C(10,3) - 10 log 2; plus r=n=1 at p=0.5: log 0.5
  double expected = -2.1439800628174071 + std::log(0.5);
  CHECK(kernel.ad_loglik(st) == doctest::Approx(expected).epsilon(1e-12));

  EvidenceNetwork low = two_arm_ad_network({{0, 5, 0, 5}});
  PosteriorKernel k2(low, cfg, sp);
  ParameterState st2;
  st2.values.assign(sp.size(), 0.0);
  st2[static_cast<std::size_t>(sp.index_of("u[s1]"))] = -10.0;
  st2[static_cast<std::size_t>(sp.index_of("d[active]"))] = 0.0;
  CHECK(k2.data_loglik_study(st2, 0) == doctest::Approx(2 * -0.00022699449608432323).epsilon(1e-9));
}

TEST_CASE("random-effects log-prior matches closed-form multivariate normal values") {
  SUBCASE("two-arm study at the mean, tau = 1") {
    EvidenceNetwork net = two_arm_ad_network({{3, 10, 5, 10}});
    ModelConfig cfg;
    cfg.trt_effect = EffectModel::random_effect;
    cfg.validate(net);
    ParameterSpace sp = build_parameter_space(net, cfg);
    PosteriorKernel kernel(net, cfg, sp);
    ParameterState st;
    st.values.assign(sp.size(), 0.0);
    st[static_cast<std::size_t>(sp.index_of("tau"))] = 1.0;
    st[static_cast<std::size_t>(sp.index_of("d[active]"))] = 0.4;
    st[static_cast<std::size_t>(sp.index_of("delta[s1:active]"))] = 0.4;
    CHECK(kernel.random_effects_logprior(st, 0) == doctest::Approx(-0.9189385332046727).epsilon(1e-12));
  }
  SUBCASE("three-arm study at the mean: bivariate with off-diagonal 1/2") {
    EvidenceNetwork net;
    net.treatments = {{1, "a", false}, {2, "b", true}, {3, "c", true}};
    net.reference_treatment = 1;
    Study s;
    s.id = "s1";
    s.format = DataFormat::ad;
    s.reference_arm = 1;
    s.arms = {1, 2, 3};
    s.ad = {{1, 2, 10, {}}, {2, 3, 10, {}}, {3, 4, 10, {}}};
    net.studies.push_back(s);
    ModelConfig cfg;
    cfg.trt_effect = EffectModel::random_effect;
    cfg.validate(net);
    ParameterSpace sp = build_parameter_space(net, cfg);
    PosteriorKernel kernel(net, cfg, sp);
    ParameterState st;
    st.values.assign(sp.size(), 0.0);
    st[static_cast<std::size_t>(sp.index_of("tau"))] = 1.0;
    CHECK(kernel.random_effects_logprior(st, 0) == doctest::Approx(-1.6940360301834550).epsilon(1e-12));
  }
}

TEST_CASE("multiarm covariance is positive definite for m up to 10") {
  // Brute-force check: the closed-form density equals a dense evaluation via
  // Cholesky on the explicit covariance matrix.
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> utau(0.05, 1.9);
  for (int m = 1; m <= 10; ++m) {
    double tau = utau(rng);
    std::vector<double> y(static_cast<std::size_t>(m)), mu(static_cast<std::size_t>(m)),
        var(static_cast<std::size_t>(m), tau * tau);
    for (auto& v : y) v = normal(rng);
    for (auto& v : mu) v = normal(rng);
    // dense Sigma
    std::vector<std::vector<double>> a(static_cast<std::size_t>(m), std::vector<double>(static_cast<std::size_t>(m)));
    for (int i = 0; i < m; ++i)
      for (int k = 0; k < m; ++k) a[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] =
          i == k ? tau * tau : tau * tau / 2.0;
    // Cholesky (throws-free; positive definiteness verified by the sqrt arguments)
    std::vector<std::vector<double>> L = a;
    double logdet = 0.0;
    for (int i = 0; i < m; ++i) {
      for (int k = 0; k <= i; ++k) {
        double sum = L[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
        for (int q = 0; q < k; ++q)
          sum -= L[static_cast<std::size_t>(i)][static_cast<std::size_t>(q)] *
                 L[static_cast<std::size_t>(k)][static_cast<std::size_t>(q)];
        if (i == k) {
          REQUIRE(sum > 0.0);  // positive definite
          L[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] = std::sqrt(sum);
          logdet += 2.0 * std::log(L[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)]);
        } else {
          L[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] =
              sum / L[static_cast<std::size_t>(k)][static_cast<std::size_t>(k)];
        }
      }
      for (int k = i + 1; k < m; ++k) L[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] = 0.0;
    }
    // solve L z = (y - mu)
    std::vector<double> z(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
      double sum = y[static_cast<std::size_t>(i)] - mu[static_cast<std::size_t>(i)];
      for (int q = 0; q < i; ++q)
        sum -= L[static_cast<std::size_t>(i)][static_cast<std::size_t>(q)] * z[static_cast<std::size_t>(q)];
      z[static_cast<std::size_t>(i)] = sum / L[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)];
    }
    double qf = 0.0;
    for (double v : z) qf += v * v;
    double dense = -0.5 * m * std::log(2 * M_PI) - 0.5 * logdet - 0.5 * qf;
    CHECK(multiarm_normal_logpdf(y, mu, var) == doctest::Approx(dense).epsilon(1e-10));
  }
}

TEST_CASE("interaction log-prior: equal constraint removes the aggregation term") {
  EvidenceNetwork net = nmr_hand_network();
  ModelConfig cfg = nmr_config();
  cfg.regression.within_between = WithinBetween::equal;
  cfg.validate(net);
  ParameterSpace sp = build_parameter_space(net, cfg);
  PosteriorKernel kernel(net, cfg, sp);
  CHECK(sp.index_of("betaW[s1:active]") == -1);
  CHECK(sp.index_of("beta1[s1:active]") >= 0);
  std::mt19937_64 rng(3);
  ParameterState st = random_state(sp, rng);
  // aggregation term (betaB - betaW) xbar vanishes identically: predictor is
  // unchanged when the study mean covariate is recentered arbitrarily.
  EvidenceNetwork shifted = nmr_hand_network();
  for (auto& rec : shifted.studies[0].ipd) rec.x[0] += 0.0;  // same rows
  double base = kernel.linear_predictor_ipd(st, 0, 1);
  EvidenceNetwork moved = nmr_hand_network();
  moved.studies[0].ipd.push_back({1, 0, {9.0}});  // changes xbar only
  moved.studies[0].arms = {1, 2};
  PosteriorKernel k2(moved, cfg, sp);
  CHECK(k2.linear_predictor_ipd(st, 0, 1) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("interaction log-prior values") {
  EvidenceNetwork net;
  net.treatments = {{1, "c", false}, {2, "t", true}};
  net.reference_treatment = 1;
  net.covariate_names = {"x1"};
  net.covariate_centers = {0.0};
  for (int j = 0; j < 2; ++j) {
    Study s;
    s.id = "s" + std::to_string(j + 1);
    s.format = DataFormat::ipd;
    s.reference_arm = 1;
    s.arms = {1, 2};
    s.ipd = {{1, 0, {0.0}}, {2, 1, {0.0}}};
    net.studies.push_back(std::move(s));
  }
  ModelConfig cfg = nmr_config();
  cfg.validate(net);
  ParameterSpace sp = build_parameter_space(net, cfg);
  PosteriorKernel kernel(net, cfg, sp);
  ParameterState st;
  st.values.assign(sp.size(), 0.0);
  auto set = [&](const std::string& n, double v) {
    int idx = sp.index_of(n);
    REQUIRE(idx >= 0);
    st[static_cast<std::size_t>(idx)] = v;
  };
  set("tau", 1.0);
  set("tauB", 1.0);
  set("tauW", 0.5);
  set("betaW[s1:t]", 0.1);
  set("betaW[s2:t]", -0.1);
  // betaB at their means contribute -0.918939 each; betaW terms are
  // 2 * logN(+-0.1 | 0, 0.25)
  double expect_b = 2 * -0.9189385332046727;
  double expect_w = -0.4915827052894549;
  CHECK(kernel.interaction_logprior(st) == doctest::Approx(expect_b + expect_w).epsilon(1e-10));
}

TEST_CASE("bias structure: direction flips the active-active mean sign") {
  EvidenceNetwork net;
  net.treatments = {{1, "a1", true}, {2, "a2", true}};
  net.reference_treatment = 1;
  Study s;
  s.id = "s1";
  s.format = DataFormat::ad;
  s.rob = RobLevel::high;
  s.reference_arm = 1;
  s.arms = {1, 2};
  s.ad = {{1, 3, 10, {}}, {2, 5, 10, {}}};
  s.directions[{1, 2}] = BiasDirection::favours_k;
  net.studies.push_back(s);

  ModelConfig cfg;
  cfg.approach = Approach::bias_model_1;
  cfg.trt_effect = EffectModel::common_effect;
  cfg.bias = BiasConfig{};
  cfg.bias->form = BiasForm::additive;
  cfg.bias->effect = EffectModel::common_effect;
  cfg.bias->mean_structure = BiasMeanStructure::signed_active_active;
  cfg.validate(net);
  ParameterSpace sp = build_parameter_space(net, cfg);
  PosteriorKernel kernel(net, cfg, sp);
  CHECK(sp.index_of("g_add") == -1);  // no inactive-reference contrast in this net
  ParameterState st;
  st.values.assign(sp.size(), 0.0);
  auto set = [&](const std::string& n, double v) {
    int idx = sp.index_of(n);
    REQUIRE(idx >= 0);
    st[static_cast<std::size_t>(idx)] = v;
  };
  set("g_add_act", 0.2);
  set("R[s1]", 1.0);
  double base = st[static_cast<std::size_t>(sp.index_of("u[s1]"))];
  // dir = 1 (favours k): mean bias (-1)^1 g_act = -0.2
  CHECK(kernel.linear_predictor_ad(st, 0, 2) == doctest::Approx(base - 0.2).epsilon(1e-12));
  // flipping the recorded direction to favours_b gives +0.2
  net.studies[0].directions[{1, 2}] = BiasDirection::favours_b;
  ParameterSpace sp2 = build_parameter_space(net, cfg);
  PosteriorKernel k2(net, cfg, sp2);
  CHECK(k2.linear_predictor_ad(st, 0, 2) == doctest::Approx(base + 0.2).epsilon(1e-12));
}

TEST_CASE("rob weight q: Beta(1,1) prior has zero log-density and E(q) = 0.5") {
  EvidenceNetwork net = two_arm_ad_network({{3, 10, 5, 10}, {4, 12, 6, 12}});
  net.studies[1].rob = RobLevel::high;
  ModelConfig cfg;
  cfg.approach = Approach::bias_model_1;
  cfg.trt_effect = EffectModel::random_effect;
  cfg.bias = BiasConfig{};
  cfg.bias->form = BiasForm::additive;
  cfg.bias->effect = EffectModel::random_effect;
  cfg.bias->heterogeneity = BiasHeterogeneity::rob_weight;
  cfg.bias->rob_weight[RobLevel::high] = {false, 1.0};  // Beta(1,1)
  cfg.bias->rob_weight[RobLevel::low] = {true, 1.0};    // fixed, no down-weighting
  cfg.validate(net);
  ParameterSpace sp = build_parameter_space(net, cfg);
  PosteriorKernel kernel(net, cfg, sp);
  int q_idx = sp.index_of("q[s2]");
  REQUIRE(q_idx >= 0);
  CHECK(sp.index_of("q[s1]") == -1);  // fixed value, not sampled
  const auto& desc = sp.params[static_cast<std::size_t>(q_idx)];
  CHECK(desc.prior_a / (desc.prior_a + desc.prior_b) == doctest::Approx(0.5));
  CHECK(kernel.marginal_logprior(static_cast<std::size_t>(q_idx), 0.3) == doctest::Approx(0.0));
  ParameterState st = initial_state(sp, 5);
  CHECK(st[static_cast<std::size_t>(q_idx)] == doctest::Approx(0.5));

  // delta_bias hierarchy uses variance tau^2 / q
  std::mt19937_64 rng(5);
  ParameterState rs = random_state(sp, rng);
  double tau = rs[static_cast<std::size_t>(sp.index_of("tau"))];
  double q = rs[static_cast<std::size_t>(q_idx)];
  double db = rs[static_cast<std::size_t>(sp.index_of("delta_bias[s2:active]"))];
  double g = rs[static_cast<std::size_t>(sp.index_of("g_add"))];
  double dk = rs[static_cast<std::size_t>(sp.index_of("d[active]"))];
  double expect = normal_logpdf(db, g + dk, tau * tau / q);
  // isolate study 2's block via the structure log-prior difference
  ParameterState at_mean = rs;
  at_mean[static_cast<std::size_t>(sp.index_of("delta_bias[s2:active]"))] = g + dk;
  double diff = kernel.bias_structure_logprior(rs) - kernel.bias_structure_logprior(at_mean);
  double expect_diff = expect - normal_logpdf(g + dk, g + dk, tau * tau / q);
  CHECK(diff == doctest::Approx(expect_diff).epsilon(1e-10));
}

TEST_CASE("bias probability terms") {
  EvidenceNetwork net = two_arm_ad_network({{3, 10, 5, 10}});
  net.studies[0].rob = RobLevel::high;
  ModelConfig cfg;
  cfg.approach = Approach::bias_model_1;
  cfg.trt_effect = EffectModel::common_effect;
  cfg.bias = BiasConfig{};
  cfg.bias->effect = EffectModel::common_effect;
  cfg.validate(net);
  ParameterSpace sp = build_parameter_space(net, cfg);
  PosteriorKernel kernel(net, cfg, sp);
  ParameterState st;
  st.values.assign(sp.size(), 0.0);
  int pi_idx = sp.index_of("pi[s1]");
  int r_idx = sp.index_of("R[s1]");
  st[static_cast<std::size_t>(pi_idx)] = 0.99;
  st[static_cast<std::size_t>(r_idx)] = 1.0;
  // Bernoulli(R=1 | 0.99) = log 0.99; the Beta(100,1) prior term is separate
  double bern = kernel.bias_probability_logprior(st) -
                kernel.marginal_logprior(static_cast<std::size_t>(pi_idx), 0.99);
  CHECK(bern == doctest::Approx(-0.010050335853501441).epsilon(1e-10));

  // Beta(1,1): log-density zero everywhere on (0,1)
  net.studies[0].rob = RobLevel::unclear;
  ParameterSpace sp2 = build_parameter_space(net, cfg);
  PosteriorKernel k2(net, cfg, sp2);
  int pi2 = sp2.index_of("pi[s1]");
  CHECK(k2.marginal_logprior(static_cast<std::size_t>(pi2), 0.3) == doctest::Approx(0.0));
  CHECK(k2.marginal_logprior(static_cast<std::size_t>(pi2), 0.9) == doctest::Approx(0.0));
}

TEST_CASE("logistic bias probability: e = f = 0 gives pi = 0.5") {
  EvidenceNetwork net = two_arm_ad_network({{3, 10, 5, 10}});
  net.studies[0].z = {1.0};
  ModelConfig cfg;
  cfg.approach = Approach::bias_model_1;
  cfg.trt_effect = EffectModel::common_effect;
  cfg.bias = BiasConfig{};
  cfg.bias->effect = EffectModel::common_effect;
  cfg.bias->probability_model = BiasProbabilityModel::logistic_on_z;
  cfg.validate(net);
  ParameterSpace sp = build_parameter_space(net, cfg);
  PosteriorKernel kernel(net, cfg, sp);
  ParameterState st;
  st.values.assign(sp.size(), 0.0);
  CHECK(kernel.bias_probability(st, 0) == doctest::Approx(0.5));
  st[static_cast<std::size_t>(sp.index_of("e_bias"))] = 1.0;
  st[static_cast<std::size_t>(sp.index_of("f_bias[z1]"))] = 0.5;
  CHECK(kernel.bias_probability(st, 0) == doctest::Approx(inv_logit(1.5)));
}

TEST_CASE("hyperprior log-density") {
  EvidenceNetwork net = two_arm_ad_network({{3, 10, 5, 10}});
  ModelConfig cfg;
  cfg.trt_effect = EffectModel::random_effect;
  cfg.validate(net);
  ParameterSpace sp = build_parameter_space(net, cfg);
  PosteriorKernel kernel(net, cfg, sp);
  ParameterState st = initial_state(sp, 1);
  st[static_cast<std::size_t>(sp.index_of("d[active]"))] = 0.0;
  double at_zero = kernel.marginal_logprior(static_cast<std::size_t>(sp.index_of("d[active]")), 0.0);
  CHECK(at_zero == doctest::Approx(-3.2215236261987184).epsilon(1e-12));
  CHECK(std::isfinite(kernel.hyperprior_logdensity(st)));
  st[static_cast<std::size_t>(sp.index_of("tau"))] = 2.5;
  CHECK(kernel.hyperprior_logdensity(st) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("mixture prior: reductions, frozen marginal value, latent vs marginal") {
  EvidenceNetwork net = two_arm_ad_network({{3, 10, 5, 10}});
  net.studies[0].rob = RobLevel::high;
  ModelConfig cfg;
  cfg.approach = Approach::bias_model_2;
  cfg.trt_effect = EffectModel::random_effect;
  cfg.bias = BiasConfig{};
  cfg.bias->effect = EffectModel::random_effect;
  cfg.validate(net);
  ParameterSpace sp = build_parameter_space(net, cfg);
  PosteriorKernel kernel(net, cfg, sp);
  ParameterState st;
  st.values.assign(sp.size(), 0.0);
  auto set = [&](const std::string& n, double v) {
    int idx = sp.index_of(n);
    REQUIRE(idx >= 0);
    st[static_cast<std::size_t>(idx)] = v;
  };
  set("tau", 1.0);
  set("tau_gamma", 1.0);
  set("gamma[s1:active]", 1.0);
  set("theta[s1:active]", 0.0);
  set("d[active]", 0.0);

  // frozen: log(0.5 N(0|0,1) + 0.5 N(0|1,2))
  set("pi[s1]", 0.5);
  CHECK(kernel.mixture_logprior_theta_marginal(st, 0) == doctest::Approx(-1.1733822931598747).epsilon(1e-12));

  // pi -> 0 and pi -> 1 reduce to the single components
  set("pi[s1]", 1e-300);
  CHECK(kernel.mixture_logprior_theta_marginal(st, 0) ==
        doctest::Approx(normal_logpdf(0.0, 0.0, 1.0)).epsilon(1e-9));
  set("pi[s1]", 1.0 - 1e-16);
  CHECK(kernel.mixture_logprior_theta_marginal(st, 0) ==
        doctest::Approx(normal_logpdf(0.0, 1.0, 2.0)).epsilon(1e-9));

  // latent-indicator representation conditions on R
  set("pi[s1]", 0.5);
  set("R[s1]", 0.0);
  CHECK(kernel.mixture_logprior_theta(st, 0) == doctest::Approx(normal_logpdf(0.0, 0.0, 1.0)).epsilon(1e-12));
  set("R[s1]", 1.0);
  CHECK(kernel.mixture_logprior_theta(st, 0) == doctest::Approx(normal_logpdf(0.0, 1.0, 2.0)).epsilon(1e-12));

  // averaging the latent density over R with weights (1-pi, pi) equals the
  // direct two-component mixture on random points
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 10000; ++trial) {
    ParameterState rs = random_state(sp, rng);
    double pi = rs[static_cast<std::size_t>(sp.index_of("pi[s1]"))];
    ParameterState r0 = rs, r1 = rs;
    r0[static_cast<std::size_t>(sp.index_of("R[s1]"))] = 0.0;
    r1[static_cast<std::size_t>(sp.index_of("R[s1]"))] = 1.0;
    double direct = std::log((1.0 - pi) * std::exp(kernel.mixture_logprior_theta(r0, 0)) +
                             pi * std::exp(kernel.mixture_logprior_theta(r1, 0)));
    double marginal = kernel.mixture_logprior_theta_marginal(rs, 0);
    CHECK(marginal == doctest::Approx(direct).epsilon(1e-12));
  }
}

TEST_CASE("fixed-effect bias model 2: theta = d-contrast + pi * gamma exactly") {
  EvidenceNetwork net = two_arm_ad_network({{3, 10, 5, 10}});
  net.studies[0].rob = RobLevel::high;
  ModelConfig cfg;
  cfg.approach = Approach::bias_model_2;
  cfg.trt_effect = EffectModel::common_effect;
  cfg.bias = BiasConfig{};
  cfg.bias->effect = EffectModel::common_effect;
  cfg.validate(net);
  ParameterSpace sp = build_parameter_space(net, cfg);
  PosteriorKernel kernel(net, cfg, sp);
  CHECK(sp.index_of("theta[s1:active]") == -1);
  CHECK(sp.index_of("R[s1]") == -1);
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    ParameterState st = random_state(sp, rng);
    double u = st[static_cast<std::size_t>(sp.index_of("u[s1]"))];
    double d = st[static_cast<std::size_t>(sp.index_of("d[active]"))];
    double pi = st[static_cast<std::size_t>(sp.index_of("pi[s1]"))];
    double g = st[static_cast<std::size_t>(sp.index_of("g_add"))];
    double theta = d + pi * g;  // the fixed-effect substitution, exactly
    CHECK(kernel.linear_predictor_ad(st, 0, 2) == u + theta);
  }
}

TEST_CASE("reduction: bias model 1 with R = 0 has exactly the unadjusted data likelihood") {
  EvidenceNetwork net = load_rrms_shape();
  ModelConfig plain;
  plain.trt_effect = EffectModel::random_effect;
  plain.validate(net);
  ParameterSpace sp_plain = build_parameter_space(net, plain);
  PosteriorKernel k_plain(net, plain, sp_plain);

  ModelConfig bias = plain;
  bias.approach = Approach::bias_model_1;
  bias.bias = BiasConfig{};
  bias.bias->form = BiasForm::additive;
  bias.bias->effect = EffectModel::random_effect;
  bias.bias->mean_structure = BiasMeanStructure::signed_active_active;
  bias.validate(net);
  ParameterSpace sp_bias = build_parameter_space(net, bias);
  PosteriorKernel k_bias(net, bias, sp_bias);

  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 100; ++trial) {
    ParameterState sb = random_state(sp_bias, rng);
    for (std::size_t j = 0; j < net.studies.size(); ++j)
      sb[static_cast<std::size_t>(sp_bias.r_ind[j])] = 0.0;
    ParameterState sp_state;
    sp_state.values.assign(sp_plain.size(), 0.0);
    for (std::size_t i = 0; i < sp_plain.size(); ++i) {
      int src = sp_bias.index_of(sp_plain.params[i].name);
      REQUIRE(src >= 0);
      sp_state[i] = sb[static_cast<std::size_t>(src)];
    }
    double lhs = k_bias.ipd_loglik(sb) + k_bias.ad_loglik(sb);
    double rhs = k_plain.ipd_loglik(sp_state) + k_plain.ad_loglik(sp_state);
    CHECK(lhs == rhs);  // exact equality
  }
}

TEST_CASE("equivalence of the gamma and delta-bias parametrizations in the predictor") {
  EvidenceNetwork net = load_rrms_shape();
  ModelConfig ga;
  ga.approach = Approach::bias_model_1;
  ga.trt_effect = EffectModel::random_effect;
  ga.bias = BiasConfig{};
  ga.bias->form = BiasForm::additive;
  ga.bias->effect = EffectModel::random_effect;
  ga.bias->mean_structure = BiasMeanStructure::signed_active_active;
  ga.validate(net);
  ParameterSpace sp_g = build_parameter_space(net, ga);
  PosteriorKernel k_g(net, ga, sp_g);

  ModelConfig db = ga;
  db.bias->heterogeneity = BiasHeterogeneity::rob_weight;
  db.bias->rob_weight[RobLevel::high] = {false, 1.0};
  db.bias->rob_weight[RobLevel::low] = {false, 1.0};
  db.validate(net);
  ParameterSpace sp_d = build_parameter_space(net, db);
  PosteriorKernel k_d(net, db, sp_d);

  std::mt19937_64 rng(31);
  int checked = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    ParameterState sg = random_state(sp_g, rng);
    ParameterState sd;
    sd.values.assign(sp_d.size(), 0.0);
    for (std::size_t i = 0; i < sp_d.size(); ++i) {
      const std::string& name = sp_d.params[i].name;
      if (name.rfind("delta_bias[", 0) == 0) continue;  // set below
      if (name.rfind("q[", 0) == 0) {
        sd[i] = 0.5;
        continue;
      }
      int src = sp_g.index_of(name);
      REQUIRE(src >= 0);
      sd[i] = sg[static_cast<std::size_t>(src)];
    }
    // delta_bias = delta + gamma
    for (std::size_t j = 0; j < net.studies.size(); ++j) {
      for (std::size_t m = 0; m < sp_d.delta_bias[j].size(); ++m) {
        double delta = sg[static_cast<std::size_t>(sp_g.delta[j][m])];
        double gamma = sg[static_cast<std::size_t>(sp_g.gamma_add[j][m])];
        sd[static_cast<std::size_t>(sp_d.delta_bias[j][m])] = delta + gamma;
      }
    }
    for (std::size_t j = 0; j < net.studies.size(); ++j) {
      const Study& study = net.studies[j];
      if (study.format == DataFormat::ipd) {
        for (std::size_t row = 0; row < study.ipd.size(); ++row) {
          double a = k_g.linear_predictor_ipd(sg, j, row);
          double b = k_d.linear_predictor_ipd(sd, j, row);
          CHECK(std::abs(a - b) <= 1e-12);
          ++checked;
        }
      } else {
        for (int t : study.arms) {
          double a = k_g.linear_predictor_ad(sg, j, t);
          double b = k_d.linear_predictor_ad(sd, j, t);
          CHECK(std::abs(a - b) <= 1e-12);
          ++checked;
        }
      }
    }
    if (checked >= 10000) break;
  }
  CHECK(checked >= 10000);
}

TEST_CASE("aggregation consistency: AD likelihood of aggregated IPD differs by the binomial constants") {
  EvidenceNetwork net = load_rrms_shape();
  // regression off: beta0 = betaW = 0 by construction
  ModelConfig cfg;
  cfg.trt_effect = EffectModel::common_effect;
  cfg.validate(net);

  // aggregate every IPD study
  EvidenceNetwork agg = net;
  for (auto& s : agg.studies) {
    if (s.format != DataFormat::ipd) continue;
    s.ad = aggregate_ipd(s);
    s.format = DataFormat::ad;
    s.ipd.clear();
  }
  ParameterSpace sp = build_parameter_space(net, cfg);
  PosteriorKernel k_ipd(net, cfg, sp);
  PosteriorKernel k_ad(agg, cfg, sp);

  double log_choose = 0.0;
  for (const auto& s : agg.studies) {
    if (net.find_study(s.id)->format != DataFormat::ipd) continue;
    for (const auto& arm : s.ad) {
      double n = static_cast<double>(arm.sample_size), r = static_cast<double>(arm.events);
      log_choose += std::lgamma(n + 1) - std::lgamma(r + 1) - std::lgamma(n - r + 1);
    }
  }
  std::mt19937_64 rng(37);
  for (int trial = 0; trial < 50; ++trial) {
    ParameterState st = random_state(sp, rng);
    double lhs = k_ad.data_loglik(st);
    double rhs = k_ipd.data_loglik(st) + log_choose;
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
  }
}

TEST_CASE("log_posterior equals the sum of its parts and rejects NaN") {
  EvidenceNetwork net = load_rrms_shape();
  ModelConfig cfg;
  cfg.trt_effect = EffectModel::random_effect;
  cfg.validate(net);
  ParameterSpace sp = build_parameter_space(net, cfg);
  PosteriorKernel kernel(net, cfg, sp);
  std::mt19937_64 rng(41);
  ParameterState st = random_state(sp, rng);
  double total = kernel.ipd_loglik(st) + kernel.ad_loglik(st);
  for (std::size_t j = 0; j < net.studies.size(); ++j) total += kernel.random_effects_logprior(st, j);
  total += kernel.hyperprior_logdensity(st);
  CHECK(kernel.log_posterior(st) == doctest::Approx(total).epsilon(1e-10));

  st[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(kernel.log_posterior(st), std::invalid_argument);
}

TEST_CASE("log_posterior is invariant to study ordering") {
  EvidenceNetwork net = load_rrms_shape();
  EvidenceNetwork reversed = net;
  std::reverse(reversed.studies.begin(), reversed.studies.end());
  ModelConfig cfg;
  cfg.approach = Approach::bias_model_1;
  cfg.trt_effect = EffectModel::random_effect;
  cfg.bias = BiasConfig{};
  cfg.bias->form = BiasForm::additive;
  cfg.bias->effect = EffectModel::random_effect;
  cfg.bias->mean_structure = BiasMeanStructure::signed_active_active;
  cfg.validate(net);
  ParameterSpace sp_a = build_parameter_space(net, cfg);
  ParameterSpace sp_b = build_parameter_space(reversed, cfg);
  PosteriorKernel k_a(net, cfg, sp_a);
  PosteriorKernel k_b(reversed, cfg, sp_b);
  std::mt19937_64 rng(43);
  for (int trial = 0; trial < 20; ++trial) {
    ParameterState sa = random_state(sp_a, rng);
    ParameterState sb;
    sb.values.assign(sp_b.size(), 0.0);
    for (std::size_t i = 0; i < sp_b.size(); ++i) {
      int src = sp_a.index_of(sp_b.params[i].name);
      REQUIRE(src >= 0);
      sb[i] = sa[static_cast<std::size_t>(src)];
    }
    CHECK(k_a.log_posterior(sa) == doctest::Approx(k_b.log_posterior(sb)).epsilon(1e-11));
  }
}

TEST_CASE("single-site conditionals agree with full log-posterior differences") {
  EvidenceNetwork net = load_rrms_shape();
  std::vector<ModelConfig> configs;
  {
    ModelConfig base;
    base.trt_effect = EffectModel::random_effect;
    configs.push_back(base);
    base.regression.enabled = true;
    base.regression.covariate = "x1";
    base.regression.within_between = WithinBetween::separate;
    base.regression.interaction = EffectModel::random_effect;
    base.regression.baseline = Beta0Model::random_effect;
    configs.push_back(base);
  }
  for (int model : {1, 2}) {
    ModelConfig cfg;
    cfg.approach = model == 1 ? Approach::bias_model_1 : Approach::bias_model_2;
    cfg.trt_effect = EffectModel::random_effect;
    cfg.bias = BiasConfig{};
    cfg.bias->form = model == 1 ? BiasForm::both : BiasForm::additive;
    cfg.bias->effect = EffectModel::random_effect;
    cfg.bias->mean_structure = BiasMeanStructure::signed_active_active;
    configs.push_back(cfg);
    cfg.bias->form = BiasForm::additive;
    cfg.bias->heterogeneity = BiasHeterogeneity::rob_weight;
    cfg.bias->rob_weight[RobLevel::high] = {false, 0.5};
    cfg.bias->rob_weight[RobLevel::low] = {true, 1.0};
    configs.push_back(cfg);
  }
  std::mt19937_64 rng(47);
  for (ModelConfig cfg : configs) {
    cfg.validate(net);
    ParameterSpace sp = build_parameter_space(net, cfg);
    PosteriorKernel kernel(net, cfg, sp);
    ParameterState st = random_state(sp, rng);
    double full = kernel.log_posterior(st);
    std::vector<double> blocks(kernel.block_count());
    for (std::size_t b = 0; b < blocks.size(); ++b) blocks[b] = kernel.eval_block(b, st);
    std::normal_distribution<double> normal(0.0, 0.3);
    for (std::size_t p = 0; p < sp.size(); ++p) {
      ParameterState moved = st;
      switch (sp.params[p].support) {
        case Support::real: moved[p] += normal(rng); break;
        case Support::positive_interval: moved[p] = 0.05 + 0.9 * sp.params[p].upper * (rng() % 1000) / 1000.0; break;
        case Support::unit_interval: moved[p] = 0.05 + 0.9 * (rng() % 1000) / 1000.0; break;
        case Support::binary: moved[p] = 1.0 - moved[p]; break;
      }
      double delta_incremental =
          kernel.marginal_logprior(p, moved[p]) - kernel.marginal_logprior(p, st[p]);
      for (int b : kernel.blocks_for(p))
        delta_incremental += kernel.eval_block(static_cast<std::size_t>(b), moved) -
                             blocks[static_cast<std::size_t>(b)];
      double delta_full = kernel.log_posterior(moved) - full;
      INFO("config ", to_string(cfg.approach), " param ", sp.params[p].name);
      CHECK(delta_incremental == doctest::Approx(delta_full).epsilon(1e-9));
    }
  }
}
