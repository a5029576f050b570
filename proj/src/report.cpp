#include "nmsynth/report.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "nmsynth/csv.hpp"
#include "nmsynth/diagnostics.hpp"

namespace nmsynth {

using nlohmann::json;

double quantile(std::vector<double> draws, double p) {
  if (draws.empty()) throw std::invalid_argument("quantile of empty draws");
  std::sort(draws.begin(), draws.end());
  double h = (static_cast<double>(draws.size()) - 1.0) * p;
  std::size_t lo = static_cast<std::size_t>(std::floor(h));
  std::size_t hi = std::min(lo + 1, draws.size() - 1);
  double frac = h - static_cast<double>(lo);
  return draws[lo] + frac * (draws[hi] - draws[lo]);
}

namespace {

IntervalSummary interval_summary(std::vector<double> draws, double level) {
  IntervalSummary s;
  double alpha = (1.0 - level) / 2.0;
  std::sort(draws.begin(), draws.end());
  auto q = [&](double p) {
    double h = (static_cast<double>(draws.size()) - 1.0) * p;
    std::size_t lo = static_cast<std::size_t>(std::floor(h));
    std::size_t hi = std::min(lo + 1, draws.size() - 1);
    return draws[lo] + (h - static_cast<double>(lo)) * (draws[hi] - draws[lo]);
  };
  s.median = q(0.5);
  s.lo = q(alpha);
  s.hi = q(1.0 - alpha);
  return s;
}

}  // namespace

const ParamSummary* FitReport::find(const std::string& name) const {
  for (const auto& p : params)
    if (p.name == name) return &p;
  return nullptr;
}

double FitReport::max_rhat() const {
  double worst = std::numeric_limits<double>::quiet_NaN();
  for (const auto& p : params)
    if (p.rhat && (!(worst == worst) || *p.rhat > worst)) worst = *p.rhat;
  return worst;
}

FitReport summarize(const PosteriorSamples& samples, double level) {
  if (samples.retained() == 0) throw std::invalid_argument("summarize: no retained draws");
  FitReport report;
  report.level = level;
  for (std::size_t p = 0; p < samples.n_params(); ++p) {
    ParamSummary s;
    s.name = samples.names()[p];
    std::vector<double> merged = samples.merged(p);
    auto iv = interval_summary(merged, level);
    s.median = iv.median;
    s.lo = iv.lo;
    s.hi = iv.hi;
    double sum = 0.0;
    for (double v : merged) sum += v;
    s.mean = sum / static_cast<double>(merged.size());
    double ss = 0.0;
    for (double v : merged) ss += (v - s.mean) * (v - s.mean);
    s.sd = merged.size() > 1 ? std::sqrt(ss / static_cast<double>(merged.size() - 1)) : 0.0;
    if (samples.n_chains() >= 2 && samples.retained() >= 10) s.rhat = gelman_rubin(samples.chain_spans(p));
    if (samples.retained() >= 4) s.ess = effective_sample_size(samples.chain_spans(p));
    report.params.push_back(std::move(s));
  }
  return report;
}

namespace {

// Per-draw basic-parameter matrix: column per treatment (reference = zeros).
std::vector<std::vector<double>> basic_draws(const PosteriorSamples& samples, const EvidenceNetwork& net,
                                             const ParameterSpace& space) {
  std::size_t n = samples.n_chains() * samples.retained();
  std::vector<std::vector<double>> d(static_cast<std::size_t>(net.treatment_count()));
  for (int k = 1; k <= net.treatment_count(); ++k) {
    int idx = space.d[static_cast<std::size_t>(k - 1)];
    if (idx < 0) d[static_cast<std::size_t>(k - 1)].assign(n, 0.0);
    else d[static_cast<std::size_t>(k - 1)] = samples.merged(static_cast<std::size_t>(idx));
  }
  return d;
}

}  // namespace

std::vector<std::vector<IntervalSummary>> league_table(const PosteriorSamples& samples,
                                                       const EvidenceNetwork& net, const ParameterSpace& space,
                                                       bool or_scale, double level) {
  auto d = basic_draws(samples, net, space);
  const std::size_t K = d.size();
  const std::size_t n = d[0].size();
  std::vector<std::vector<IntervalSummary>> table(K, std::vector<IntervalSummary>(K));
  std::vector<double> contrast(n);
  for (std::size_t a = 0; a < K; ++a) {
    for (std::size_t b = 0; b < K; ++b) {
      for (std::size_t t = 0; t < n; ++t) {
        double log_or = d[b][t] - d[a][t];
        contrast[t] = or_scale ? std::exp(log_or) : log_or;
      }
      table[a][b] = interval_summary(contrast, level);
    }
  }
  return table;
}

std::vector<CurvePoint> regression_curve(const PosteriorSamples& samples, const EvidenceNetwork& net,
                                         const ParameterSpace& space, int treatment,
                                         const std::vector<double>& grid_raw, double center, double level) {
  int d_idx = space.d[static_cast<std::size_t>(treatment - 1)];
  int b_idx = space.basic_bb[static_cast<std::size_t>(treatment - 1)];
  if (treatment == net.reference_treatment)
    throw std::invalid_argument("regression_curve: treatment is the network reference");
  std::vector<double> d_draws =
      d_idx >= 0 ? samples.merged(static_cast<std::size_t>(d_idx)) : std::vector<double>{};
  if (d_draws.empty()) throw std::invalid_argument("regression_curve: no draws for the requested contrast");
  std::vector<double> b_draws = b_idx >= 0 ? samples.merged(static_cast<std::size_t>(b_idx))
                                           : std::vector<double>(d_draws.size(), 0.0);
  std::vector<CurvePoint> curve;
  std::vector<double> vals(d_draws.size());
  for (double x_raw : grid_raw) {
    double x = x_raw - center;
    for (std::size_t t = 0; t < d_draws.size(); ++t) vals[t] = std::exp(d_draws[t] + b_draws[t] * x);
    CurvePoint pt;
    pt.x_raw = x_raw;
    pt.value = interval_summary(vals, level);
    curve.push_back(pt);
  }
  return curve;
}

BiasSummary bias_report(const PosteriorSamples& samples, const EvidenceNetwork& net, const ParameterSpace& space,
                        double level) {
  BiasSummary out;
  auto exp_summary = [&](int idx, const std::string& name) {
    if (idx < 0) return;
    std::vector<double> draws = samples.merged(static_cast<std::size_t>(idx));
    for (double& v : draws) v = std::exp(v);
    out.exp_g["exp(" + name + ")"] = interval_summary(draws, level);
  };
  exp_summary(space.g_add, "g_add");
  exp_summary(space.g_add_act, "g_add_act");
  exp_summary(space.g_mult, "g_mult");
  exp_summary(space.g_mult_act, "g_mult_act");
  auto tau_summary = [&](int idx) {
    if (idx < 0) return;
    out.tau_gamma[space.params[static_cast<std::size_t>(idx)].name] =
        interval_summary(samples.merged(static_cast<std::size_t>(idx)), level);
  };
  tau_summary(space.tau_gamma_add);
  tau_summary(space.tau_gamma_mult);
  for (std::size_t j = 0; j < net.studies.size(); ++j) {
    int idx = space.r_ind.empty() ? -1 : space.r_ind[j];
    if (idx < 0) continue;
    std::vector<double> draws = samples.merged(static_cast<std::size_t>(idx));
    double mean = 0.0;
    for (double v : draws) mean += v;
    out.prob_biased[net.studies[j].id] = mean / static_cast<double>(draws.size());
  }
  return out;
}

FitReport build_report(const PosteriorSamples& samples, const EvidenceNetwork& net, const ParameterSpace& space,
                       const ModelConfig& cfg, double level, std::vector<double> grid_raw) {
  FitReport report = summarize(samples, level);
  for (const auto& t : net.treatments) report.treatment_labels.push_back(t.label);
  report.reference_treatment = net.reference_treatment;
  report.covariate_centers = net.covariate_centers;
  report.league_or = league_table(samples, net, space, true, level);
  if (cfg.bias) report.bias = bias_report(samples, net, space, level);
  if (cfg.regression.enabled) {
    if (grid_raw.empty())
      for (int age = 20; age <= 60; ++age) grid_raw.push_back(static_cast<double>(age));
    double center = cfg.regression.covariate_index >= 0 &&
                            static_cast<std::size_t>(cfg.regression.covariate_index) < net.covariate_centers.size()
                        ? net.covariate_centers[static_cast<std::size_t>(cfg.regression.covariate_index)]
                        : 0.0;
    for (const auto& t : net.treatments) {
      if (t.id == net.reference_treatment) continue;
      report.curves[t.label] = regression_curve(samples, net, space, t.id, grid_raw, center, level);
    }
  }
  return report;
}

namespace {

void write_forest_svg(const FitReport& report, const std::string& path) {
  // One row per non-reference treatment: OR vs reference with CrI whiskers,
  // log-scaled x axis.
  const auto& labels = report.treatment_labels;
  int ref = report.reference_treatment;
  std::vector<std::pair<std::string, IntervalSummary>> rows;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (static_cast<int>(k + 1) == ref) continue;
    rows.push_back({labels[k], report.league_or[static_cast<std::size_t>(ref - 1)][k]});
  }
  if (rows.empty()) return;
  double lo = 1e300, hi = -1e300;
  for (const auto& [_, iv] : rows) {
    lo = std::min(lo, iv.lo);
    hi = std::max(hi, iv.hi);
  }
  lo = std::min(lo, 1.0) * 0.8;
  hi = std::max(hi, 1.0) * 1.25;
  const double width = 640, height = 40.0 * static_cast<double>(rows.size()) + 60, left = 160, right = 40;
  auto xpos = [&](double v) {
    return left + (std::log(v) - std::log(lo)) / (std::log(hi) - std::log(lo)) * (width - left - right);
  };
  std::ofstream out(path, std::ios::binary);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  out << "<line x1=\"" << xpos(1.0) << "\" y1=\"20\" x2=\"" << xpos(1.0) << "\" y2=\"" << height - 40
      << "\" stroke=\"#888\" stroke-dasharray=\"4 3\"/>\n";
  double y = 40;
  for (const auto& [label, iv] : rows) {
    out << "<text x=\"8\" y=\"" << y + 4 << "\" font-size=\"13\">" << label << "</text>\n";
    out << "<line x1=\"" << xpos(iv.lo) << "\" y1=\"" << y << "\" x2=\"" << xpos(iv.hi) << "\" y2=\"" << y
        << "\" stroke=\"black\" stroke-width=\"1.5\"/>\n";
    out << "<circle cx=\"" << xpos(iv.median) << "\" cy=\"" << y << "\" r=\"4\" fill=\"black\"/>\n";
    y += 40;
  }
  out << "<text x=\"" << xpos(1.0) - 4 << "\" y=\"" << height - 20 << "\" font-size=\"12\">1</text>\n";
  out << "<text x=\"" << left << "\" y=\"" << height - 6 << "\" font-size=\"12\">odds ratio vs "
      << labels[static_cast<std::size_t>(ref - 1)] << " (log scale)</text>\n";
  out << "</svg>\n";
}

void write_curves_svg(const FitReport& report, const std::string& path) {
  if (report.curves.empty()) return;
  const double width = 700, height = 420, left = 60, bottom = 50, top = 20, right = 20;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& [_, curve] : report.curves) {
    for (const auto& pt : curve) {
      xmin = std::min(xmin, pt.x_raw);
      xmax = std::max(xmax, pt.x_raw);
      ymin = std::min(ymin, pt.value.lo);
      ymax = std::max(ymax, pt.value.hi);
    }
  }
  auto xpos = [&](double v) { return left + (v - xmin) / (xmax - xmin) * (width - left - right); };
  auto ypos = [&](double v) {
    return height - bottom - (v - ymin) / (ymax - ymin) * (height - top - bottom);
  };
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  std::ofstream out(path, std::ios::binary);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  std::size_t ci = 0;
  for (const auto& [label, curve] : report.curves) {
    const char* color = colors[ci % 6];
    out << "<polygon fill=\"" << color << "\" fill-opacity=\"0.15\" stroke=\"none\" points=\"";
    for (const auto& pt : curve) out << xpos(pt.x_raw) << "," << ypos(pt.value.lo) << " ";
    for (auto it = curve.rbegin(); it != curve.rend(); ++it)
      out << xpos(it->x_raw) << "," << ypos(it->value.hi) << " ";
    out << "\"/>\n";
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& pt : curve) out << xpos(pt.x_raw) << "," << ypos(pt.value.median) << " ";
    out << "\"/>\n";
    out << "<text x=\"" << width - 150 << "\" y=\"" << top + 16 * static_cast<double>(ci + 1)
        << "\" font-size=\"12\" fill=\"" << color << "\">" << label << "</text>\n";
    ++ci;
  }
  out << "<line x1=\"" << left << "\" y1=\"" << height - bottom << "\" x2=\"" << width - right << "\" y2=\""
      << height - bottom << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << height - bottom
      << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << (left + width - right) / 2 << "\" y=\"" << height - 12
      << "\" font-size=\"12\">covariate (raw scale)</text>\n";
  out << "<text x=\"8\" y=\"" << top + 10 << "\" font-size=\"12\">OR</text>\n";
  out << "</svg>\n";
}

}  // namespace

void export_report(const FitReport& report, const std::string& directory) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(directory, ec);
  if (!fs::is_directory(directory))
    throw DataError(directory, 0, "cannot create output directory");

  {
    std::ofstream out(fs::path(directory) / "summaries.csv", std::ios::binary);
    if (!out) throw DataError(directory + "/summaries.csv", 0, "cannot open for writing");
    out << csv_join({"parameter", "median", "lo", "hi", "mean", "sd", "rhat", "ess"});
    for (const auto& p : report.params) {
      out << csv_join({p.name, format_double(p.median), format_double(p.lo), format_double(p.hi),
                       format_double(p.mean), format_double(p.sd), p.rhat ? format_double(*p.rhat) : "NA",
                       p.ess ? format_double(*p.ess) : "NA"});
    }
  }
  {
    std::ofstream out(fs::path(directory) / "league.csv", std::ios::binary);
    out << csv_join({"treatment_a", "treatment_b", "or_median", "or_lo", "or_hi"});
    for (std::size_t a = 0; a < report.league_or.size(); ++a)
      for (std::size_t b = 0; b < report.league_or.size(); ++b)
        out << csv_join({report.treatment_labels[a], report.treatment_labels[b],
                         format_double(report.league_or[a][b].median), format_double(report.league_or[a][b].lo),
                         format_double(report.league_or[a][b].hi)});
  }
  {
    std::ofstream out(fs::path(directory) / "forest.csv", std::ios::binary);
    out << csv_join({"contrast", "or_median", "or_lo", "or_hi"});
    std::size_t ref = static_cast<std::size_t>(report.reference_treatment - 1);
    for (std::size_t k = 0; k < report.treatment_labels.size(); ++k) {
      if (k == ref) continue;
      const auto& iv = report.league_or[ref][k];
      out << csv_join({report.treatment_labels[k] + " vs " + report.treatment_labels[ref],
                       format_double(iv.median), format_double(iv.lo), format_double(iv.hi)});
    }
  }
  if (!report.curves.empty()) {
    std::ofstream out(fs::path(directory) / "curves.csv", std::ios::binary);
    out << csv_join({"x", "contrast", "or_median", "or_lo", "or_hi"});
    for (const auto& [label, curve] : report.curves)
      for (const auto& pt : curve)
        out << csv_join({format_double(pt.x_raw), label, format_double(pt.value.median),
                         format_double(pt.value.lo), format_double(pt.value.hi)});
    write_curves_svg(report, (fs::path(directory) / "curves.svg").string());
  }
  write_forest_svg(report, (fs::path(directory) / "forest.svg").string());

  json j;
  j["level"] = report.level;
  j["reference_treatment"] = report.reference_treatment;
  j["treatments"] = report.treatment_labels;
  j["covariate_centers"] = report.covariate_centers;
  json params = json::array();
  for (const auto& p : report.params) {
    json e = {{"name", p.name},   {"median", p.median}, {"lo", p.lo},
              {"hi", p.hi},       {"mean", p.mean},     {"sd", p.sd}};
    if (p.rhat) e["rhat"] = *p.rhat;
    if (p.ess) e["ess"] = *p.ess;
    params.push_back(e);
  }
  j["parameters"] = params;
  if (!report.bias.exp_g.empty()) {
    json bias;
    for (const auto& [name, iv] : report.bias.exp_g)
      bias[name] = {{"median", iv.median}, {"lo", iv.lo}, {"hi", iv.hi}};
    for (const auto& [name, iv] : report.bias.tau_gamma)
      bias[name] = {{"median", iv.median}, {"lo", iv.lo}, {"hi", iv.hi}};
    json probs;
    for (const auto& [study, p] : report.bias.prob_biased) probs[study] = p;
    bias["prob_biased"] = probs;
    j["bias"] = bias;
  }
  std::ofstream out(fs::path(directory) / "report.json", std::ios::binary);
  out << j.dump(2) << "\n";
}

std::vector<ParamSummary> read_summaries_csv(const std::string& path) {
  CsvTable t = CsvTable::read_file(path);
  std::vector<ParamSummary> out;
  for (std::size_t r = 0; r < t.rows(); ++r) {
    ParamSummary p;
    p.name = t.get(r, "parameter");
    p.median = t.number(r, t.column("median"));
    p.lo = t.number(r, t.column("lo"));
    p.hi = t.number(r, t.column("hi"));
    p.mean = t.number(r, t.column("mean"));
    p.sd = t.number(r, t.column("sd"));
    if (t.get(r, "rhat") != "NA") p.rhat = t.number(r, t.column("rhat"));
    if (t.get(r, "ess") != "NA") p.ess = t.number(r, t.column("ess"));
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace nmsynth
