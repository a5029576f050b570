// Command-line frontend: validate / fit / simulate / report / replay.
// Exit codes: 0 ok, 1 input error, 2 convergence warning (outputs written),
// 3 internal error. Progress goes to stderr; results go to files.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "nmsynth/config.hpp"
#include "nmsynth/csv.hpp"
#include "nmsynth/data.hpp"
#include "nmsynth/kernel.hpp"
#include "nmsynth/manifest.hpp"
#include "nmsynth/nrs_prior.hpp"
#include "nmsynth/oracle.hpp"
#include "nmsynth/report.hpp"
#include "nmsynth/sampler.hpp"
#include "nmsynth/version.hpp"

namespace fs = std::filesystem;
using namespace nmsynth;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitConvergence = 2;
constexpr int kExitInternal = 3;
constexpr double kRhatGate = 1.05;

struct DataArgs {
  std::string treatments, studies, ipd, ad, directions;
};

void add_data_options(CLI::App* cmd, DataArgs& args) {
  cmd->add_option("--treatments", args.treatments, "treatments.csv")->required();
  cmd->add_option("--studies", args.studies, "studies.csv")->required();
  cmd->add_option("--ipd", args.ipd, "ipd.csv (optional)");
  cmd->add_option("--ad", args.ad, "ad.csv (optional)");
  cmd->add_option("--directions", args.directions, "directions.csv (optional)");
}

EvidenceNetwork load_from_args(const DataArgs& args) {
  return load_network(args.ipd, args.ad, args.studies, args.treatments, args.directions);
}

std::optional<BetaParams> parse_beta_pair(const std::string& text, const char* what) {
  if (text.empty()) return std::nullopt;
  std::istringstream in(text);
  double a, b;
  char comma;
  if (!(in >> a >> comma >> b) || comma != ',')
    throw ConfigError(std::string(what) + " must be 'a,b', got '" + text + "'");
  return BetaParams{a, b};
}

struct FitArgs {
  DataArgs data;
  std::string out_dir;
  std::string config_file;
  std::string approach, effects, bias_form, bias_effect, mean_structure, probability_model;
  std::string pi_low, pi_high, pi_unclear;
  std::string covariate, reference, step1_reference;
  std::string beta0, within_between, interaction;
  std::string save_samples = "core";
  std::string step1_summary_csv;  // run step 2 standalone from exported summaries
  double center = std::numeric_limits<double>::quiet_NaN();
  double zeta = std::numeric_limits<double>::quiet_NaN();
  double w = std::numeric_limits<double>::quiet_NaN();
  double level = 0.95;
  long chains = -1, iterations = -1, burn_in = -1, thin = -1;
  long long seed = -1;
  int threads = 0;
  bool quiet = false;
};

void add_fit_options(CLI::App* cmd, FitArgs& args) {
  add_data_options(cmd, args.data);
  cmd->add_option("--out", args.out_dir, "output directory")->required();
  cmd->add_option("--config", args.config_file, "JSON model configuration; flags override file values");
  cmd->add_option("--approach", args.approach, "unadjusted | nrs_prior | bias1 | bias2");
  cmd->add_option("--effects", args.effects, "random | common treatment effects");
  cmd->add_option("--bias-form", args.bias_form, "additive | multiplicative | both");
  cmd->add_option("--bias-effect", args.bias_effect, "random | common bias effects");
  cmd->add_option("--mean-structure", args.mean_structure, "zero_active_active | signed_active_active");
  cmd->add_option("--probability-model", args.probability_model, "per_study_beta | logistic_on_z");
  cmd->add_option("--pi-low", args.pi_low, "beta prior a,b for low RoB studies");
  cmd->add_option("--pi-high", args.pi_high, "beta prior a,b for high RoB studies");
  cmd->add_option("--pi-unclear", args.pi_unclear, "beta prior a,b for unclear RoB studies");
  cmd->add_option("--covariate", args.covariate, "covariate column for meta-regression, e.g. x1");
  cmd->add_option("--center", args.center, "centering value for the regression covariate");
  cmd->add_option("--beta0", args.beta0, "independent | random baseline covariate effects");
  cmd->add_option("--within-between", args.within_between, "separate | equal interaction coefficients");
  cmd->add_option("--interaction", args.interaction, "random | common interaction effects");
  cmd->add_option("--reference", args.reference, "network reference treatment label");
  cmd->add_option("--zeta", args.zeta, "NRS prior mean shift");
  cmd->add_option("--w", args.w, "NRS prior variance inflation factor in (0,1]");
  cmd->add_option("--step1-reference", args.step1_reference, "reference label for the two-step workflow");
  cmd->add_option("--step1-summary", args.step1_summary_csv,
                  "step-1 summary CSV; runs step 2 standalone with these priors");
  cmd->add_option("--chains", args.chains, "number of chains (default 2)");
  cmd->add_option("--iterations", args.iterations, "iterations per chain (default 100000)");
  cmd->add_option("--burn-in", args.burn_in, "discarded initial iterations (default 40000)");
  cmd->add_option("--thin", args.thin, "thinning interval (default 1)");
  cmd->add_option("--seed", args.seed, "master seed (default 1)");
  cmd->add_option("--level", args.level, "credible level (default 0.95)");
  cmd->add_option("--threads", args.threads, "chain threads (default NMSYNTH_THREADS or hardware)");
  cmd->add_option("--save-samples", args.save_samples, "core | all | none (default core)");
  cmd->add_flag("--quiet", args.quiet, "suppress progress output");
}

ModelConfig resolve_config(const FitArgs& args, const EvidenceNetwork& net) {
  ModelConfig cfg = args.config_file.empty() ? ModelConfig{} : ModelConfig::from_json_file(args.config_file);
  if (!args.approach.empty()) cfg.approach = approach_from_string(args.approach);
  auto effect = [](const std::string& s, const char* what) {
    if (s == "random") return EffectModel::random_effect;
    if (s == "common" || s == "fixed") return EffectModel::common_effect;
    throw ConfigError(std::string(what) + " must be random or common");
  };
  if (!args.effects.empty()) cfg.trt_effect = effect(args.effects, "--effects");

  bool bias_approach = cfg.approach == Approach::bias_model_1 || cfg.approach == Approach::bias_model_2;
  if (bias_approach && !cfg.bias) cfg.bias = BiasConfig{};
  if (cfg.bias) {
    if (!args.bias_form.empty()) {
      if (args.bias_form == "additive") cfg.bias->form = BiasForm::additive;
      else if (args.bias_form == "multiplicative") cfg.bias->form = BiasForm::multiplicative;
      else if (args.bias_form == "both") cfg.bias->form = BiasForm::both;
      else throw ConfigError("--bias-form must be additive, multiplicative or both");
    }
    if (!args.bias_effect.empty()) cfg.bias->effect = effect(args.bias_effect, "--bias-effect");
    if (!args.mean_structure.empty()) {
      if (args.mean_structure == "zero_active_active")
        cfg.bias->mean_structure = BiasMeanStructure::zero_active_active;
      else if (args.mean_structure == "signed_active_active")
        cfg.bias->mean_structure = BiasMeanStructure::signed_active_active;
      else throw ConfigError("--mean-structure must be zero_active_active or signed_active_active");
    }
    if (!args.probability_model.empty()) {
      if (args.probability_model == "per_study_beta")
        cfg.bias->probability_model = BiasProbabilityModel::per_study_beta;
      else if (args.probability_model == "logistic_on_z")
        cfg.bias->probability_model = BiasProbabilityModel::logistic_on_z;
      else throw ConfigError("--probability-model must be per_study_beta or logistic_on_z");
    }
    if (auto p = parse_beta_pair(args.pi_low, "--pi-low")) cfg.bias->pi_low = *p;
    if (auto p = parse_beta_pair(args.pi_high, "--pi-high")) cfg.bias->pi_high = *p;
    if (auto p = parse_beta_pair(args.pi_unclear, "--pi-unclear")) cfg.bias->pi_unclear = *p;
  }

  if (!args.covariate.empty()) {
    cfg.regression.enabled = true;
    cfg.regression.covariate = args.covariate;
  }
  if (cfg.regression.enabled) {
    if (!args.beta0.empty()) {
      if (args.beta0 == "independent") cfg.regression.baseline = Beta0Model::independent;
      else if (args.beta0 == "random") cfg.regression.baseline = Beta0Model::random_effect;
      else throw ConfigError("--beta0 must be independent or random");
    }
    if (!args.within_between.empty()) {
      if (args.within_between == "separate") cfg.regression.within_between = WithinBetween::separate;
      else if (args.within_between == "equal") cfg.regression.within_between = WithinBetween::equal;
      else throw ConfigError("--within-between must be separate or equal");
    }
    if (!args.interaction.empty()) cfg.regression.interaction = effect(args.interaction, "--interaction");
  }
  if (!std::isnan(args.zeta)) cfg.nrs.zeta = args.zeta;
  if (!std::isnan(args.w)) cfg.nrs.w = args.w;
  if (!args.step1_reference.empty()) cfg.nrs.step1_reference = args.step1_reference;

  if (!args.step1_summary_csv.empty()) {
    NrsPosteriorSummary summary = NrsPosteriorSummary::read_csv(args.step1_summary_csv, net);
    cfg.d_prior_overrides = make_informative_priors(summary, cfg.nrs.zeta, cfg.nrs.w);
  }
  return cfg;
}

SamplerSettings resolve_settings(const FitArgs& args) {
  SamplerSettings s;
  if (args.chains > 0) s.n_chains = static_cast<int>(args.chains);
  if (args.iterations > 0) s.n_iterations = args.iterations;
  if (args.burn_in >= 0) s.burn_in = args.burn_in;
  if (args.thin > 0) s.thin = args.thin;
  if (args.seed >= 0) s.seed = static_cast<std::uint64_t>(args.seed);
  s.n_threads = args.threads;
  s.verbose = !args.quiet;
  return s;
}

std::vector<std::size_t> core_params(const ParameterSpace& space) {
  std::vector<std::size_t> out;
  for (std::size_t p = 0; p < space.size(); ++p) {
    switch (space.params[p].role) {
      case ParamRole::basic_d:
      case ParamRole::basic_bw:
      case ParamRole::basic_bb:
      case ParamRole::beta0_mean:
      case ParamRole::bias_mean_g:
      case ParamRole::bias_mean_g_act:
      case ParamRole::tau:
      case ParamRole::tau_b:
      case ParamRole::tau_w:
      case ParamRole::tau0:
      case ParamRole::tau_gamma:
      case ParamRole::p_direction:
      case ParamRole::logistic_e:
      case ParamRole::logistic_f:
        out.push_back(p);
        break;
      default:
        break;
    }
  }
  return out;
}

int cmd_validate(const DataArgs& args) {
  EvidenceNetwork net = load_from_args(args);
  ValidationReport report = validate_network(net);
  std::cout << report.describe(net);
  return report.ok() ? kExitOk : kExitInput;
}

int cmd_fit(const FitArgs& args, const std::string& command_line) {
  auto t0 = std::chrono::steady_clock::now();
  EvidenceNetwork net = load_from_args(args.data);
  ValidationReport vreport = validate_network(net);
  if (!vreport.ok()) {
    std::cerr << vreport.describe(net);
    return kExitInput;
  }
  if (!args.reference.empty()) {
    bool found = false;
    for (const auto& t : net.treatments)
      if (t.label == args.reference) {
        net.reference_treatment = t.id;
        found = true;
      }
    if (!found) throw ConfigError("unknown reference treatment '" + args.reference + "'");
  }
  ModelConfig cfg = resolve_config(args, net);
  if (!std::isnan(args.center)) {
    if (net.covariate_dim() == 0) throw ConfigError("--center given but the data carry no covariates");
    std::vector<double> centers(net.covariate_dim(), 0.0);
    cfg.validate(net);
    centers[static_cast<std::size_t>(std::max(cfg.regression.covariate_index, 0))] = args.center;
    net = center_covariates(net, centers);
  }
  cfg.validate(net);
  SamplerSettings settings = resolve_settings(args);

  fs::create_directories(args.out_dir);
  RunManifest manifest;
  manifest.version = kVersion;
  manifest.command = command_line;
  for (const std::string& f :
       {args.data.treatments, args.data.studies, args.data.ipd, args.data.ad, args.data.directions})
    if (!f.empty()) manifest.input_digests[f] = sha256_file(f);
  if (!args.config_file.empty()) manifest.input_digests[args.config_file] = sha256_file(args.config_file);
  manifest.n_chains = settings.n_chains;
  manifest.n_iterations = settings.n_iterations;
  manifest.burn_in = settings.burn_in;
  manifest.thin = settings.thin;
  manifest.seed = settings.seed;

  FitReport report;
  std::vector<std::string> outputs;
  if (cfg.approach == Approach::nrs_prior) {
    TwoStepFit fit = run_two_step(net, cfg, settings);
    manifest.config_json = cfg.to_json_text();
    report = build_report(fit.step2_samples, fit.step2_network, fit.step2_space, fit.step2_config, args.level);
    export_report(report, args.out_dir);
    fit.step1.write_csv((fs::path(args.out_dir) / "step1_summary.csv").string(), fit.network);
    outputs.push_back("step1_summary.csv");
    if (args.save_samples != "none") {
      fit.step2_samples.export_csv((fs::path(args.out_dir) / "samples.csv").string(),
                                   args.save_samples == "all" ? std::vector<std::size_t>{}
                                                              : core_params(fit.step2_space));
      outputs.push_back("samples.csv");
    }
  } else {
    ParameterSpace space = build_parameter_space(net, cfg);
    PosteriorKernel kernel(net, cfg, space);
    PosteriorSamples samples = run_chains(kernel, settings);
    manifest.config_json = cfg.to_json_text();
    report = build_report(samples, net, space, cfg, args.level);
    export_report(report, args.out_dir);
    if (args.save_samples != "none") {
      samples.export_csv((fs::path(args.out_dir) / "samples.csv").string(),
                         args.save_samples == "all" ? std::vector<std::size_t>{} : core_params(space));
      outputs.push_back("samples.csv");
    }
  }
  {
    std::ofstream cfg_out(fs::path(args.out_dir) / "config.json", std::ios::binary);
    cfg_out << cfg.to_json_text();
    outputs.push_back("config.json");
  }

  for (const auto& p : report.params)
    manifest.diagnostics.push_back({p.name, p.rhat ? *p.rhat : std::numeric_limits<double>::quiet_NaN(),
                                    p.ess ? *p.ess : std::numeric_limits<double>::quiet_NaN()});
  outputs.insert(outputs.end(), {"summaries.csv", "league.csv", "forest.csv", "report.json", "forest.svg"});
  if (!report.curves.empty()) outputs.insert(outputs.end(), {"curves.csv", "curves.svg"});
  for (const std::string& f : outputs) {
    fs::path path = fs::path(args.out_dir) / f;
    if (fs::exists(path)) manifest.output_digests[f] = sha256_file(path.string());
  }
  manifest.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  manifest.write((fs::path(args.out_dir) / "manifest.json").string());

  double worst = report.max_rhat();
  if (worst == worst && worst >= kRhatGate) {
    std::cerr << "warning: max Rhat " << worst << " >= " << kRhatGate
              << "; chains may not have converged\n";
    return kExitConvergence;
  }
  return kExitOk;
}

int cmd_simulate(const std::string& preset, std::uint64_t seed, const std::string& out_dir) {
  SimulationSpec spec = preset_spec(preset, seed);
  SimulatedNetwork sim = simulate_network(spec);
  fs::create_directories(out_dir);
  bool any_dirs = false;
  for (const auto& s : sim.network.studies) any_dirs = any_dirs || !s.directions.empty();
  export_network(sim.network, (fs::path(out_dir) / "ipd.csv").string(),
                 (fs::path(out_dir) / "ad.csv").string(), (fs::path(out_dir) / "studies.csv").string(),
                 (fs::path(out_dir) / "treatments.csv").string(),
                 any_dirs ? (fs::path(out_dir) / "directions.csv").string() : "");
  write_truth_csv(sim.truth, (fs::path(out_dir) / "truth.csv").string());
  return kExitOk;
}

// Rebuilds per-chain draws for the named column of an exported samples.csv.
struct StoredSamples {
  std::vector<std::string> names;
  std::vector<std::vector<std::vector<double>>> draws;  // [param][chain][t]
  int find(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return static_cast<int>(i);
    return -1;
  }
};

StoredSamples load_samples_csv(const std::string& path) {
  CsvTable t = CsvTable::read_file(path);
  StoredSamples out;
  std::size_t c_chain = t.column("chain");
  for (std::size_t c = 0; c < t.header().size(); ++c)
    if (t.header()[c] != "chain" && t.header()[c] != "iteration") out.names.push_back(t.header()[c]);
  std::size_t n_chains = 0;
  for (std::size_t r = 0; r < t.rows(); ++r)
    n_chains = std::max(n_chains, static_cast<std::size_t>(t.integer(r, c_chain)));
  out.draws.assign(out.names.size(), std::vector<std::vector<double>>(n_chains));
  for (std::size_t r = 0; r < t.rows(); ++r) {
    std::size_t chain = static_cast<std::size_t>(t.integer(r, c_chain)) - 1;
    std::size_t pi = 0;
    for (std::size_t c = 0; c < t.header().size(); ++c) {
      if (t.header()[c] == "chain" || t.header()[c] == "iteration") continue;
      out.draws[pi][chain].push_back(t.number(r, c));
      ++pi;
    }
  }
  return out;
}

int cmd_report(const std::string& fit_dir, const std::string& out_dir, double level, double age_lo,
               double age_hi, double age_step) {
  fs::path dir(fit_dir);
  if (!fs::exists(dir / "report.json") || !fs::exists(dir / "samples.csv")) {
    std::cerr << "error: '" << fit_dir << "' does not contain report.json and samples.csv\n";
    return kExitInput;
  }
  nlohmann::json meta;
  {
    std::ifstream in(dir / "report.json");
    in >> meta;
  }
  StoredSamples stored = load_samples_csv((dir / "samples.csv").string());
  std::vector<std::string> labels = meta["treatments"].get<std::vector<std::string>>();
  int ref = meta["reference_treatment"].get<int>();
  std::vector<double> centers = meta.value("covariate_centers", std::vector<double>{});

  std::string target = out_dir.empty() ? fit_dir : out_dir;
  fs::create_directories(target);

  // Per-draw basic parameters; reference column is identically zero.
  std::vector<std::vector<double>> d(labels.size());
  std::size_t n_draws = 0;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    int idx = stored.find("d[" + labels[k] + "]");
    if (idx >= 0) {
      for (const auto& chain : stored.draws[static_cast<std::size_t>(idx)])
        d[k].insert(d[k].end(), chain.begin(), chain.end());
      n_draws = d[k].size();
    }
  }
  for (auto& col : d)
    if (col.empty()) col.assign(n_draws, 0.0);
  if (n_draws == 0) {
    std::cerr << "error: samples.csv has no basic-parameter draws\n";
    return kExitInput;
  }

  auto interval = [&](std::vector<double> v) {
    IntervalSummary s;
    s.median = quantile(v, 0.5);
    s.lo = quantile(v, (1 - level) / 2);
    s.hi = quantile(v, 1 - (1 - level) / 2);
    return s;
  };

  {
    std::ofstream out(fs::path(target) / "forest.csv", std::ios::binary);
    out << csv_join({"contrast", "or_median", "or_lo", "or_hi"});
    for (std::size_t k = 0; k < labels.size(); ++k) {
      if (static_cast<int>(k + 1) == ref) continue;
      std::vector<double> v(n_draws);
      for (std::size_t t = 0; t < n_draws; ++t)
        v[t] = std::exp(d[k][t] - d[static_cast<std::size_t>(ref - 1)][t]);
      auto iv = interval(std::move(v));
      out << csv_join({labels[k] + " vs " + labels[static_cast<std::size_t>(ref - 1)],
                       format_double(iv.median), format_double(iv.lo), format_double(iv.hi)});
    }
  }
  {
    std::ofstream out(fs::path(target) / "league.csv", std::ios::binary);
    out << csv_join({"treatment_a", "treatment_b", "or_median", "or_lo", "or_hi"});
    for (std::size_t a = 0; a < labels.size(); ++a) {
      for (std::size_t b = 0; b < labels.size(); ++b) {
        std::vector<double> v(n_draws);
        for (std::size_t t = 0; t < n_draws; ++t) v[t] = std::exp(d[b][t] - d[a][t]);
        auto iv = interval(std::move(v));
        out << csv_join({labels[a], labels[b], format_double(iv.median), format_double(iv.lo),
                         format_double(iv.hi)});
      }
    }
  }
  // Regression-curve export when interaction basics were stored.
  bool any_b = false;
  for (std::size_t k = 0; k < labels.size(); ++k)
    any_b = any_b || stored.find("B1[" + labels[k] + "]") >= 0 || stored.find("BB[" + labels[k] + "]") >= 0;
  if (any_b) {
    double center = centers.empty() ? 0.0 : centers[0];
    std::ofstream out(fs::path(target) / "curves.csv", std::ios::binary);
    out << csv_join({"x", "contrast", "or_median", "or_lo", "or_hi"});
    for (std::size_t k = 0; k < labels.size(); ++k) {
      if (static_cast<int>(k + 1) == ref) continue;
      int bidx = stored.find("B1[" + labels[k] + "]");
      if (bidx < 0) bidx = stored.find("BB[" + labels[k] + "]");
      std::vector<double> b_draws;
      if (bidx >= 0)
        for (const auto& chain : stored.draws[static_cast<std::size_t>(bidx)])
          b_draws.insert(b_draws.end(), chain.begin(), chain.end());
      else
        b_draws.assign(n_draws, 0.0);
      for (double age = age_lo; age <= age_hi + 1e-9; age += age_step) {
        std::vector<double> v(n_draws);
        for (std::size_t t = 0; t < n_draws; ++t)
          v[t] = std::exp(d[k][t] - d[static_cast<std::size_t>(ref - 1)][t] + b_draws[t] * (age - center));
        auto iv = interval(std::move(v));
        out << csv_join({format_double(age), labels[k] + " vs " + labels[static_cast<std::size_t>(ref - 1)],
                         format_double(iv.median), format_double(iv.lo), format_double(iv.hi)});
      }
    }
  }
  return kExitOk;
}

int cmd_replay(const std::string& fit_dir) {
  fs::path dir(fit_dir);
  RunManifest manifest = RunManifest::read((dir / "manifest.json").string());
  for (const auto& [path, digest] : manifest.input_digests) {
    if (!fs::exists(path)) {
      std::cerr << "error: input '" << path << "' from the manifest no longer exists\n";
      return kExitInput;
    }
    if (sha256_file(path) != digest) {
      std::cerr << "error: input '" << path << "' differs from the recorded digest\n";
      return kExitInput;
    }
  }
  std::string cmd = manifest.command;
  fs::path replay_dir = dir / "replay_tmp";
  fs::remove_all(replay_dir);
  // Re-run the recorded command with the output redirected.
  std::size_t pos = cmd.find("--out");
  if (pos == std::string::npos) {
    std::cerr << "error: manifest command has no --out argument\n";
    return kExitInput;
  }
  std::size_t val_start = cmd.find_first_not_of(' ', pos + 5);
  std::size_t val_end = cmd.find(' ', val_start);
  cmd = cmd.substr(0, val_start) + replay_dir.string() +
        (val_end == std::string::npos ? "" : cmd.substr(val_end));
  std::cerr << "replaying: " << cmd << "\n";
  int rc = std::system(cmd.c_str());
  if (rc != 0 && rc != kExitConvergence << 8) {
    std::cerr << "error: replay run failed\n";
    return kExitInternal;
  }
  bool all_equal = true;
  for (const auto& [name, digest] : manifest.output_digests) {
    fs::path replayed = replay_dir / name;
    std::string got = fs::exists(replayed) ? sha256_file(replayed.string()) : "<missing>";
    bool same = got == digest;
    all_equal = all_equal && same;
    std::cout << name << ": " << (same ? "ok" : "MISMATCH") << "\n";
  }
  fs::remove_all(replay_dir);
  return all_equal ? kExitOk : kExitInput;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-design, cross-format Bayesian network meta-analysis"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  DataArgs validate_args;
  auto* validate = app.add_subcommand("validate", "Load and validate network CSV files");
  add_data_options(validate, validate_args);

  FitArgs fit_args;
  auto* fit = app.add_subcommand("fit", "Fit a synthesis model and export reports");
  add_fit_options(fit, fit_args);

  std::string sim_preset = "tiny", sim_out = ".";
  std::uint64_t sim_seed = 1;
  auto* simulate = app.add_subcommand("simulate", "Write a synthetic network with a truth record");
  simulate->add_option("--preset", sim_preset, "tiny | rrms-shape | two-step")->required();
  simulate->add_option("--seed", sim_seed, "generator seed");
  simulate->add_option("--out", sim_out, "output directory")->required();

  std::string report_fit, report_out;
  double report_level = 0.95, age_lo = 20, age_hi = 60, age_step = 1;
  auto* report = app.add_subcommand("report", "Re-export tables and plot data from a stored fit");
  report->add_option("--fit", report_fit, "fit directory")->required();
  report->add_option("--out", report_out, "output directory (default: the fit directory)");
  report->add_option("--level", report_level, "credible level");
  report->add_option("--age-lo", age_lo, "curve grid start");
  report->add_option("--age-hi", age_hi, "curve grid end");
  report->add_option("--age-step", age_step, "curve grid step");

  std::string replay_fit;
  auto* replay = app.add_subcommand("replay", "Re-run a fit from its manifest and verify output digests");
  replay->add_option("--fit", replay_fit, "fit directory")->required();

  CLI11_PARSE(app, argc, argv);

  std::string command_line;
  for (int i = 0; i < argc; ++i) command_line += std::string(i ? " " : "") + argv[i];

  try {
    if (validate->parsed()) return cmd_validate(validate_args);
    if (fit->parsed()) return cmd_fit(fit_args, command_line);
    if (simulate->parsed()) return cmd_simulate(sim_preset, sim_seed, sim_out);
    if (report->parsed()) return cmd_report(report_fit, report_out, report_level, age_lo, age_hi, age_step);
    if (replay->parsed()) return cmd_replay(replay_fit);
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitOk;
}
