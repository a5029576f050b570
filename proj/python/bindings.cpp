#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "nmsynth/config.hpp"
#include "nmsynth/data.hpp"
#include "nmsynth/diagnostics.hpp"
#include "nmsynth/kernel.hpp"
#include "nmsynth/nrs_prior.hpp"
#include "nmsynth/oracle.hpp"
#include "nmsynth/report.hpp"
#include "nmsynth/sampler.hpp"
#include "nmsynth/version.hpp"

namespace py = pybind11;
using namespace nmsynth;

namespace {

// A self-contained fit handle so python callers keep network/config/space
// alive alongside the draws.
struct Fit {
  EvidenceNetwork net;
  ModelConfig cfg;
  ParameterSpace space;
  PosteriorSamples samples;
  FitReport report;
};

Fit fit_network(const EvidenceNetwork& net_in, const std::string& config_json, int chains, long iterations,
                long burn_in, long thin, std::uint64_t seed) {
  Fit fit;
  fit.net = net_in;
  fit.cfg = ModelConfig::from_json_text(config_json);
  fit.cfg.validate(fit.net);
  fit.space = build_parameter_space(fit.net, fit.cfg);
  PosteriorKernel kernel(fit.net, fit.cfg, fit.space);
  SamplerSettings settings;
  settings.n_chains = chains;
  settings.n_iterations = iterations;
  settings.burn_in = burn_in;
  settings.thin = thin;
  settings.seed = seed;
  settings.verbose = false;
  fit.samples = run_chains(kernel, settings);
  fit.report = build_report(fit.samples, fit.net, fit.space, fit.cfg);
  return fit;
}

py::dict summary_dict(const FitReport& report) {
  py::dict out;
  for (const auto& p : report.params) {
    py::dict row;
    row["median"] = p.median;
    row["lo"] = p.lo;
    row["hi"] = p.hi;
    row["mean"] = p.mean;
    row["sd"] = p.sd;
    row["rhat"] = p.rhat ? py::cast(*p.rhat) : py::none();
    row["ess"] = p.ess ? py::cast(*p.ess) : py::none();
    out[py::str(p.name)] = row;
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_nmsynth, m) {
  m.doc() = "Cross-design, cross-format Bayesian network meta-analysis";
  m.attr("__version__") = kVersion;

  py::class_<EvidenceNetwork>(m, "EvidenceNetwork")
      .def_property_readonly("n_studies", [](const EvidenceNetwork& n) { return n.studies.size(); })
      .def_property_readonly("n_treatments", [](const EvidenceNetwork& n) { return n.treatments.size(); })
      .def_property_readonly("reference_treatment", [](const EvidenceNetwork& n) { return n.reference_treatment; })
      .def_property_readonly("treatment_labels",
                             [](const EvidenceNetwork& n) {
                               std::vector<std::string> out;
                               for (const auto& t : n.treatments) out.push_back(t.label);
                               return out;
                             })
      .def("__repr__", [](const EvidenceNetwork& n) {
        return "<EvidenceNetwork: " + std::to_string(n.studies.size()) + " studies, " +
               std::to_string(n.treatments.size()) + " treatments>";
      });

  m.def("load_network", &load_network, py::arg("ipd"), py::arg("ad"), py::arg("studies"),
        py::arg("treatments"), py::arg("directions") = "",
        "Load and link the network CSV files");

  m.def("validate_network", [](const EvidenceNetwork& net) {
    ValidationReport rep = validate_network(net);
    py::dict out;
    out["ok"] = rep.ok();
    out["connected"] = rep.connected;
    out["description"] = rep.describe(net);
    return out;
  });

  m.def("center_covariates", &center_covariates, py::arg("network"), py::arg("centers"));

  m.def(
      "aggregate_ipd",
      [](const EvidenceNetwork& net, const std::string& study_id) {
        const Study* s = net.find_study(study_id);
        if (!s) throw std::invalid_argument("unknown study '" + study_id + "'");
        py::list out;
        for (const auto& arm : aggregate_ipd(*s)) {
          py::dict row;
          row["treatment"] = arm.treatment;
          row["events"] = arm.events;
          row["sample_size"] = arm.sample_size;
          row["mean_x"] = arm.mean_x;
          out.append(row);
        }
        return out;
      },
      py::arg("network"), py::arg("study_id"));

  m.def(
      "simulate_preset",
      [](const std::string& preset, std::uint64_t seed) {
        SimulatedNetwork sim = simulate_network(preset_spec(preset, seed));
        py::dict truth;
        for (const auto& [k, v] : sim.truth.values) truth[py::str(k)] = v;
        return py::make_tuple(sim.network, truth);
      },
      py::arg("preset"), py::arg("seed") = 1);

  py::class_<Fit>(m, "Fit")
      .def_property_readonly("parameter_names",
                             [](const Fit& f) { return f.samples.names(); })
      .def("draws",
           [](const Fit& f, const std::string& name) {
             int idx = f.samples.index_of(name);
             if (idx < 0) throw std::invalid_argument("unknown parameter '" + name + "'");
             return f.samples.merged(static_cast<std::size_t>(idx));
           })
      .def("summary", [](const Fit& f) { return summary_dict(f.report); })
      .def("max_rhat", [](const Fit& f) { return f.report.max_rhat(); })
      .def("league_table",
           [](const Fit& f) {
             py::dict out;
             for (std::size_t a = 0; a < f.report.league_or.size(); ++a) {
               for (std::size_t b = 0; b < f.report.league_or.size(); ++b) {
                 const auto& iv = f.report.league_or[a][b];
                 out[py::make_tuple(f.report.treatment_labels[a], f.report.treatment_labels[b])] =
                     py::make_tuple(iv.median, iv.lo, iv.hi);
               }
             }
             return out;
           })
      .def("bias_probabilities", [](const Fit& f) {
        py::dict out;
        for (const auto& [sid, p] : f.report.bias.prob_biased) out[py::str(sid)] = p;
        return out;
      });

  m.def("fit", &fit_network, py::arg("network"), py::arg("config_json") = "{}", py::arg("chains") = 2,
        py::arg("iterations") = 20000, py::arg("burn_in") = 8000, py::arg("thin") = 1, py::arg("seed") = 1,
        "Run the MCMC sampler and report posterior summaries");

  m.def(
      "log_posterior",
      [](const EvidenceNetwork& net, const std::string& config_json,
         const std::vector<double>& values) {
        ModelConfig cfg = ModelConfig::from_json_text(config_json);
        cfg.validate(const_cast<EvidenceNetwork&>(net));
        ParameterSpace space = build_parameter_space(net, cfg);
        PosteriorKernel kernel(net, cfg, space);
        ParameterState st;
        st.values = values;
        if (st.size() != space.size())
          throw std::invalid_argument("expected " + std::to_string(space.size()) + " parameter values");
        return kernel.log_posterior(st);
      },
      py::arg("network"), py::arg("config_json"), py::arg("values"));

  m.def(
      "parameter_names",
      [](const EvidenceNetwork& net, const std::string& config_json) {
        ModelConfig cfg = ModelConfig::from_json_text(config_json);
        cfg.validate(const_cast<EvidenceNetwork&>(net));
        ParameterSpace space = build_parameter_space(net, cfg);
        std::vector<std::string> names;
        for (const auto& d : space.params) names.push_back(d.name);
        return names;
      },
      py::arg("network"), py::arg("config_json") = "{}");

  m.def(
      "grid_oracle",
      [](long r_ref, long n_ref, long r_trt, long n_trt, int points) {
        TinyModelSpec spec;
        spec.studies = {{r_ref, n_ref, r_trt, n_trt}};
        spec.points_per_dim = points;
        OracleMoments mom = grid_posterior_oracle(spec);
        py::dict out;
        for (std::size_t i = 0; i < mom.names.size(); ++i)
          out[py::str(mom.names[i])] = py::make_tuple(mom.mean[i], mom.sd[i]);
        return out;
      },
      py::arg("r_ref"), py::arg("n_ref"), py::arg("r_trt"), py::arg("n_trt"), py::arg("points") = 400,
      "Quadrature posterior moments for a one-study two-arm binomial model");

  m.def("gelman_rubin", [](const std::vector<std::vector<float>>& chains) -> py::object {
    std::vector<std::span<const float>> spans;
    spans.reserve(chains.size());
    for (const auto& c : chains) spans.emplace_back(c.data(), c.size());
    auto r = gelman_rubin(spans);
    return r ? py::cast(*r) : py::none();
  });

  m.def("effective_sample_size", [](const std::vector<float>& chain) -> py::object {
    auto r = effective_sample_size(std::span<const float>(chain.data(), chain.size()));
    return r ? py::cast(*r) : py::none();
  });
}
