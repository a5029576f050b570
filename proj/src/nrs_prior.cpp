#include "nmsynth/nrs_prior.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include "nmsynth/csv.hpp"
#include "nmsynth/kernel.hpp"

namespace nmsynth {

const NrsPosteriorEntry* NrsPosteriorSummary::find(int treatment) const {
  for (const auto& e : entries)
    if (e.treatment == treatment) return &e;
  return nullptr;
}

void NrsPosteriorSummary::write_csv(const std::string& path, const EvidenceNetwork& net) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path, 0, "cannot open for writing");
  out << csv_join({"parameter", "mean", "variance"});
  for (const auto& e : entries) {
    if (!e.observed) continue;
    out << csv_join({"d[" + net.treatment(e.treatment).label + "]", format_double(e.mean),
                     format_double(e.variance)});
  }
}

NrsPosteriorSummary NrsPosteriorSummary::read_csv(const std::string& path, const EvidenceNetwork& net) {
  CsvTable t = CsvTable::read_file(path);
  NrsPosteriorSummary out;
  out.reference = net.reference_treatment;
  for (std::size_t r = 0; r < t.rows(); ++r) {
    std::string name = t.get(r, "parameter");
    if (name.size() < 4 || name.substr(0, 2) != "d[" || name.back() != ']')
      throw DataError(path, t.file_row(r), "parameter must look like d[label]");
    std::string label = name.substr(2, name.size() - 3);
    int treatment = -1;
    for (const auto& trt : net.treatments)
      if (trt.label == label) treatment = trt.id;
    if (treatment < 0) throw DataError(path, t.file_row(r), "unknown treatment label '" + label + "'");
    NrsPosteriorEntry e;
    e.treatment = treatment;
    e.observed = true;
    e.mean = t.number(r, t.column("mean"));
    e.variance = t.number(r, t.column("variance"));
    if (e.variance <= 0) throw DataError(path, t.file_row(r), "variance must be positive");
    out.entries.push_back(e);
  }
  return out;
}

EvidenceNetwork filter_by_design(const EvidenceNetwork& net, Design design) {
  EvidenceNetwork out = net;
  out.studies.clear();
  for (const auto& s : net.studies)
    if (s.design == design) out.studies.push_back(s);
  return out;
}

std::vector<int> observed_treatments(const EvidenceNetwork& net, Design design) {
  std::set<int> seen;
  for (const auto& s : net.studies)
    if (s.design == design)
      for (int a : s.arms) seen.insert(a);
  return {seen.begin(), seen.end()};
}

int two_step_reference(const EvidenceNetwork& net, const ModelConfig& cfg) {
  auto observed = observed_treatments(net, Design::nrs);
  if (observed.empty()) throw DataError("<network>", 0, "two-step workflow needs at least one NRS study");
  if (!cfg.nrs.step1_reference.empty()) {
    for (const auto& t : net.treatments)
      if (t.label == cfg.nrs.step1_reference) {
        if (std::find(observed.begin(), observed.end(), t.id) == observed.end())
          throw ConfigError("step1_reference '" + t.label + "' is not observed in the NRS stratum");
        return t.id;
      }
    throw ConfigError("unknown step1_reference '" + cfg.nrs.step1_reference + "'");
  }
  if (std::find(observed.begin(), observed.end(), net.reference_treatment) != observed.end())
    return net.reference_treatment;
  return observed.front();
}

namespace {

// Connectivity among the treatments observed in the given stratum only.
void require_connected_stratum(const EvidenceNetwork& stratum, Design design) {
  auto observed = observed_treatments(stratum, design);
  if (observed.empty())
    throw DataError("<network>", 0, std::string("no ") + (design == Design::nrs ? "NRS" : "RCT") + " studies");
  std::map<int, int> parent;
  for (int t : observed) parent[t] = t;
  std::function<int(int)> find = [&](int a) { return parent[a] == a ? a : parent[a] = find(parent[a]); };
  for (const auto& s : stratum.studies)
    for (std::size_t i = 1; i < s.arms.size(); ++i) parent[find(s.arms[i])] = find(s.arms[0]);
  std::map<int, std::vector<int>> comps;
  for (int t : observed) comps[find(t)].push_back(t);
  if (comps.size() > 1) {
    std::ostringstream os;
    os << (design == Design::nrs ? "NRS" : "RCT") << " stratum is disconnected:";
    for (auto& [root, members] : comps) {
      os << " {";
      for (std::size_t i = 0; i < members.size(); ++i)
        os << (i ? "," : "") << stratum.treatment(members[i]).label;
      os << "}";
    }
    throw DataError("<network>", 0, os.str());
  }
}

double skewness(const std::vector<double>& xs) {
  double m = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double m2 = 0.0, m3 = 0.0;
  for (double x : xs) {
    double z = x - m;
    m2 += z * z;
    m3 += z * z * z;
  }
  m2 /= static_cast<double>(xs.size());
  m3 /= static_cast<double>(xs.size());
  return m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
}

}  // namespace

NrsPosteriorSummary fit_nrs_posterior(const EvidenceNetwork& net, const ModelConfig& cfg,
                                      const SamplerSettings& settings) {
  EvidenceNetwork stratum = filter_by_design(net, Design::nrs);
  if (stratum.studies.empty()) throw DataError("<network>", 0, "no NRS studies in the network");
  require_connected_stratum(stratum, Design::nrs);
  if (std::find(observed_treatments(stratum, Design::nrs).begin(),
                observed_treatments(stratum, Design::nrs).end(),
                stratum.reference_treatment) == observed_treatments(stratum, Design::nrs).end())
    throw DataError("<network>", 0, "step-1 reference treatment is not observed in the NRS stratum");

  ModelConfig step1 = cfg;
  step1.approach = Approach::unadjusted;
  step1.d_prior_overrides.clear();
  step1.bias.reset();
  step1.validate(stratum);
  ParameterSpace space = build_parameter_space(stratum, step1);
  PosteriorKernel kernel(stratum, step1, space);
  PosteriorSamples samples = run_chains(kernel, settings);

  NrsPosteriorSummary out;
  out.reference = stratum.reference_treatment;
  auto observed = observed_treatments(stratum, Design::nrs);
  for (const auto& t : stratum.treatments) {
    if (t.id == stratum.reference_treatment) continue;
    NrsPosteriorEntry e;
    e.treatment = t.id;
    e.observed = std::find(observed.begin(), observed.end(), t.id) != observed.end();
    if (e.observed) {
      int idx = space.d[static_cast<std::size_t>(t.id - 1)];
      std::vector<double> draws = samples.merged(static_cast<std::size_t>(idx));
      double mean = std::accumulate(draws.begin(), draws.end(), 0.0) / static_cast<double>(draws.size());
      double var = 0.0;
      for (double v : draws) var += (v - mean) * (v - mean);
      var /= static_cast<double>(draws.size() - 1);
      e.mean = mean;
      e.variance = var;
      e.skewness = skewness(draws);
      if (std::abs(e.skewness) > 0.5)
        std::cerr << "warning: NRS posterior of d[" << t.label << "] is skewed (" << e.skewness
                  << "); the normal approximation may be poor\n";
    }
    out.entries.push_back(e);
  }
  return out;
}

std::map<int, NormalPrior> make_informative_priors(const NrsPosteriorSummary& summary, double zeta, double w) {
  if (!(w > 0.0) || w > 1.0) throw ConfigError("inflation factor w must lie in (0, 1]");
  std::map<int, NormalPrior> priors;
  for (const auto& e : summary.entries) {
    if (!e.observed) continue;
    priors[e.treatment] = NormalPrior{e.mean + zeta, e.variance / w};
  }
  return priors;
}

TwoStepFit run_two_step(const EvidenceNetwork& net, const ModelConfig& cfg, const SamplerSettings& settings) {
  TwoStepFit fit;
  fit.network = net;
  fit.network.reference_treatment = two_step_reference(net, cfg);

  bool any_rct = false;
  for (const auto& s : net.studies) any_rct = any_rct || s.design == Design::rct;
  if (!any_rct) throw DataError("<network>", 0, "two-step workflow needs at least one RCT study");

  {
    ModelConfig step1_cfg = cfg;
    step1_cfg.approach = Approach::unadjusted;
    step1_cfg.d_prior_overrides.clear();
    step1_cfg.bias.reset();
    EvidenceNetwork stratum = filter_by_design(fit.network, Design::nrs);
    if (stratum.studies.empty()) throw DataError("<network>", 0, "no NRS studies in the network");
    require_connected_stratum(stratum, Design::nrs);
    step1_cfg.validate(stratum);
    fit.step1_space = build_parameter_space(stratum, step1_cfg);
    PosteriorKernel kernel(stratum, step1_cfg, fit.step1_space);
    fit.step1_samples = run_chains(kernel, settings);

    fit.step1.reference = stratum.reference_treatment;
    auto observed = observed_treatments(stratum, Design::nrs);
    for (const auto& t : stratum.treatments) {
      if (t.id == stratum.reference_treatment) continue;
      NrsPosteriorEntry e;
      e.treatment = t.id;
      e.observed = std::find(observed.begin(), observed.end(), t.id) != observed.end();
      if (e.observed) {
        int idx = fit.step1_space.d[static_cast<std::size_t>(t.id - 1)];
        std::vector<double> draws = fit.step1_samples.merged(static_cast<std::size_t>(idx));
        double mean = std::accumulate(draws.begin(), draws.end(), 0.0) / static_cast<double>(draws.size());
        double var = 0.0;
        for (double v : draws) var += (v - mean) * (v - mean);
        var /= static_cast<double>(draws.size() - 1);
        e.mean = mean;
        e.variance = var;
        e.skewness = skewness(draws);
      }
      fit.step1.entries.push_back(e);
    }
  }

  fit.step2_network = filter_by_design(fit.network, Design::rct);
  fit.step2_config = cfg;
  fit.step2_config.approach = Approach::unadjusted;
  fit.step2_config.bias.reset();
  fit.step2_config.d_prior_overrides = make_informative_priors(fit.step1, cfg.nrs.zeta, cfg.nrs.w);
  fit.step2_config.validate(fit.step2_network);
  fit.step2_space = build_parameter_space(fit.step2_network, fit.step2_config);
  PosteriorKernel kernel(fit.step2_network, fit.step2_config, fit.step2_space);
  SamplerSettings step2_settings = settings;
  step2_settings.seed = settings.seed + 1;
  fit.step2_samples = run_chains(kernel, step2_settings);
  return fit;
}

}  // namespace nmsynth
