#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "nmsynth/report.hpp"

using namespace nmsynth;

namespace {

// Hand-crafted sample container: one value per retained slot.
PosteriorSamples craft(const std::vector<std::string>& names,
                       const std::vector<std::vector<std::vector<double>>>& per_chain_per_param) {
  SamplerSettings settings;
  settings.n_chains = static_cast<int>(per_chain_per_param.size());
  settings.n_iterations = static_cast<long>(per_chain_per_param[0][0].size());
  settings.burn_in = 0;
  settings.thin = 1;
  PosteriorSamples samples(names, settings);
  for (std::size_t c = 0; c < per_chain_per_param.size(); ++c) {
    float* data = samples.chain_data(c);
    for (std::size_t p = 0; p < names.size(); ++p)
      for (std::size_t t = 0; t < per_chain_per_param[c][p].size(); ++t)
        data[p * samples.retained() + t] = static_cast<float>(per_chain_per_param[c][p][t]);
  }
  return samples;
}

}  // namespace

TEST_CASE("quantile: order statistics with linear interpolation") {
  std::vector<double> draws;
  for (int i = 1; i <= 100; ++i) draws.push_back(i);
  CHECK(quantile(draws, 0.5) == doctest::Approx(50.5));
  CHECK(quantile(draws, 0.0) == doctest::Approx(1.0));
  CHECK(quantile(draws, 1.0) == doctest::Approx(100.0));
  CHECK(quantile(draws, 0.025) == doctest::Approx(1 + 0.025 * 99));
  CHECK_THROWS_AS(quantile({}, 0.5), std::invalid_argument);
}

TEST_CASE("summarize: medians, symmetric CrIs, and monotone level widths") {
  std::mt19937 rng(5);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<std::vector<double>>> chains(2, std::vector<std::vector<double>>(1));
  for (int c = 0; c < 2; ++c)
    for (int t = 0; t < 40000; ++t) chains[static_cast<std::size_t>(c)][0].push_back(normal(rng));
  PosteriorSamples samples = craft({"x"}, chains);
  FitReport r95 = summarize(samples, 0.95);
  const ParamSummary* s = r95.find("x");
  REQUIRE(s);
  CHECK(std::abs(s->median) < 0.02);
  CHECK(std::abs(s->lo + s->hi) < 0.05);  // symmetric about zero
  CHECK(s->rhat.has_value());
  CHECK(*s->rhat < 1.01);
  FitReport r80 = summarize(samples, 0.80);
  CHECK(r80.params[0].hi - r80.params[0].lo < s->hi - s->lo);
  FitReport r50 = summarize(samples, 0.50);
  CHECK(r50.params[0].hi - r50.params[0].lo < r80.params[0].hi - r80.params[0].lo);
}

TEST_CASE("league table: diagonal 1, per-draw consistency, constant-draw entries") {
  EvidenceNetwork net;
  net.treatments = {{1, "A", false}, {2, "B", true}, {3, "C", true}};
  net.reference_treatment = 1;
  ParameterSpace space;
  space.d = {-1, 0, 1};  // d[B] is param 0, d[C] is param 1
  std::mt19937 rng(11);
  std::normal_distribution<double> normal(0.0, 0.4);
  std::vector<std::vector<std::vector<double>>> chains(2, std::vector<std::vector<double>>(2));
  for (std::size_t c = 0; c < 2; ++c)
    for (int t = 0; t < 5000; ++t) {
      chains[c][0].push_back(std::log(2.0));  // constant d_B
      chains[c][1].push_back(0.7 + normal(rng));
    }
  PosteriorSamples samples = craft({"d[B]", "d[C]"}, chains);
  auto or_table = league_table(samples, net, space, true);
  CHECK(or_table[0][0].median == doctest::Approx(1.0));
  CHECK(or_table[1][1].median == doctest::Approx(1.0));
  // constant draws: OR(B vs A) = 2, OR(A vs B) = 1/2
  CHECK(or_table[0][1].median == doctest::Approx(2.0));
  CHECK(or_table[1][0].median == doctest::Approx(0.5));
  // per-draw consistency on the log scale: logOR(B,C) = logOR(A,C) - logOR(A,B)
  auto log_table = league_table(samples, net, space, false);
  CHECK(log_table[1][2].median ==
        doctest::Approx(log_table[0][2].median - log_table[0][1].median).epsilon(1e-9));
  // antisymmetry
  CHECK(log_table[2][1].median == doctest::Approx(-log_table[1][2].median).epsilon(1e-9));
}

TEST_CASE("regression curve: flat for B = 0, constant ratio for constant B") {
  EvidenceNetwork net;
  net.treatments = {{1, "A", false}, {2, "B", true}};
  net.reference_treatment = 1;
  ParameterSpace space;
  space.d = {-1, 0};
  space.basic_bb = {-1, 1};
  std::vector<std::vector<std::vector<double>>> chains(
      2, std::vector<std::vector<double>>(2, std::vector<double>(100)));
  for (std::size_t c = 0; c < 2; ++c)
    for (int t = 0; t < 100; ++t) {
      chains[c][0][static_cast<std::size_t>(t)] = -0.4;
      chains[c][1][static_cast<std::size_t>(t)] = std::log(0.984);
    }
  PosteriorSamples samples = craft({"d[B]", "B1[B]"}, chains);
  auto curve = regression_curve(samples, net, space, 2, {20, 21, 38, 39}, 38.0);
  REQUIRE(curve.size() == 4);
  // at the raw center the curve equals the plain OR
  CHECK(curve[2].value.median == doctest::Approx(std::exp(-0.4)).epsilon(1e-6));
  // adjacent ages differ by exactly exp(B) = 0.984
  CHECK(curve[1].value.median / curve[0].value.median == doctest::Approx(0.984).epsilon(1e-6));
  CHECK(curve[3].value.median / curve[2].value.median == doctest::Approx(0.984).epsilon(1e-6));

  // B identically zero: flat curve
  for (std::size_t c = 0; c < 2; ++c)
    for (int t = 0; t < 100; ++t) chains[c][1][static_cast<std::size_t>(t)] = 0.0;
  PosteriorSamples flat_samples = craft({"d[B]", "B1[B]"}, chains);
  auto flat = regression_curve(flat_samples, net, space, 2, {20, 40, 60}, 38.0);
  CHECK(flat[0].value.median == doctest::Approx(flat[2].value.median).epsilon(1e-9));
}

TEST_CASE("bias report: exp(g) of constant zero draws is exactly 1") {
  EvidenceNetwork net;
  net.treatments = {{1, "A", false}, {2, "B", true}};
  net.reference_treatment = 1;
  Study s;
  s.id = "s1";
  net.studies.push_back(s);
  ParameterSpace space;
  space.d = {-1, -1};
  space.g_add = 0;
  space.r_ind = {1};
  std::vector<std::vector<std::vector<double>>> chains(
      2, std::vector<std::vector<double>>(2, std::vector<double>(50, 0.0)));
  for (std::size_t c = 0; c < 2; ++c)
    for (int t = 0; t < 50; ++t) chains[c][1][static_cast<std::size_t>(t)] = t % 10 == 0 ? 1.0 : 0.0;
  PosteriorSamples samples = craft({"g_add", "R[s1]"}, chains);
  BiasSummary bias = bias_report(samples, net, space);
  CHECK(bias.exp_g.at("exp(g_add)").median == doctest::Approx(1.0));
  CHECK(bias.prob_biased.at("s1") == doctest::Approx(0.1));
}

TEST_CASE("export: summaries round-trip and plot data files have the expected schema") {
  namespace fs = std::filesystem;
  EvidenceNetwork net;
  net.treatments = {{1, "A", false}, {2, "B", true}, {3, "C", true}};
  net.reference_treatment = 1;
  ParameterSpace space;
  space.d = {-1, 0, 1};
  space.basic_bb = {-1, 2, 3};
  std::mt19937 rng(3);
  std::normal_distribution<double> normal(0.0, 0.3);
  std::vector<std::vector<std::vector<double>>> chains(
      2, std::vector<std::vector<double>>(4, std::vector<double>(2000)));
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t p = 0; p < 4; ++p)
      for (int t = 0; t < 2000; ++t) chains[c][p][static_cast<std::size_t>(t)] = normal(rng) - 0.3;
  PosteriorSamples samples = craft({"d[B]", "d[C]", "B1[B]", "B1[C]"}, chains);

  ModelConfig cfg;
  cfg.regression.enabled = true;
  cfg.regression.covariate = "x1";
  cfg.regression.covariate_index = 0;
  EvidenceNetwork with_cov = net;
  with_cov.covariate_names = {"x1"};
  with_cov.covariate_centers = {38.0};
  FitReport report = build_report(samples, with_cov, space, cfg, 0.95, {20, 30, 40, 50, 60});
  fs::path dir = fs::temp_directory_path() / "nmsynth_export";
  fs::remove_all(dir);
  export_report(report, dir.string());

  auto summaries = read_summaries_csv((dir / "summaries.csv").string());
  REQUIRE(summaries.size() == report.params.size());
  for (std::size_t i = 0; i < summaries.size(); ++i) {
    CHECK(summaries[i].name == report.params[i].name);
    CHECK(summaries[i].median == doctest::Approx(report.params[i].median).epsilon(1e-9));
    CHECK(summaries[i].sd == doctest::Approx(report.params[i].sd).epsilon(1e-9));
  }
  CsvTable forest = CsvTable::read_file((dir / "forest.csv").string());
  CHECK(forest.rows() == 2);  // one row per non-reference contrast
  CHECK(forest.header() == std::vector<std::string>{"contrast", "or_median", "or_lo", "or_hi"});
  CsvTable curves = CsvTable::read_file((dir / "curves.csv").string());
  CHECK(curves.rows() == 2 * 5);  // two contrasts, five grid ages
  CHECK(fs::file_size(dir / "forest.svg") > 100);
  CHECK(fs::file_size(dir / "curves.svg") > 100);
  CHECK(fs::exists(dir / "report.json"));
  CHECK(fs::exists(dir / "league.csv"));
  fs::remove_all(dir);
}
