#include "nmsynth/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace nmsynth {

std::string to_string(Design d) { return d == Design::rct ? "RCT" : "NRS"; }
std::string to_string(DataFormat f) { return f == DataFormat::ipd ? "IPD" : "AD"; }
std::string to_string(RobLevel r) {
  switch (r) {
    case RobLevel::low: return "low";
    case RobLevel::high: return "high";
    default: return "unclear";
  }
}

std::vector<int> Study::non_reference_arms() const {
  std::vector<int> out;
  for (int a : arms)
    if (a != reference_arm) out.push_back(a);
  return out;
}

const AdArm* Study::ad_arm(int treatment) const {
  for (const auto& a : ad)
    if (a.treatment == treatment) return &a;
  return nullptr;
}

std::vector<double> Study::mean_covariates(std::size_t dim) const {
  std::vector<double> mean(dim, 0.0);
  if (dim == 0) return mean;
  if (format == DataFormat::ipd) {
    if (ipd.empty()) return mean;
    for (const auto& row : ipd)
      for (std::size_t c = 0; c < dim; ++c) mean[c] += row.x[c];
    for (auto& m : mean) m /= static_cast<double>(ipd.size());
  } else {
    double total = 0.0;
    for (const auto& arm : ad) {
      total += static_cast<double>(arm.sample_size);
      for (std::size_t c = 0; c < dim; ++c) mean[c] += static_cast<double>(arm.sample_size) * arm.mean_x[c];
    }
    if (total > 0)
      for (auto& m : mean) m /= total;
  }
  return mean;
}

long Study::total_sample_size() const {
  if (format == DataFormat::ipd) return static_cast<long>(ipd.size());
  long n = 0;
  for (const auto& a : ad) n += a.sample_size;
  return n;
}

const Study* EvidenceNetwork::find_study(const std::string& id) const {
  for (const auto& s : studies)
    if (s.id == id) return &s;
  return nullptr;
}

namespace {

bool parse_bool(const std::string& s) {
  if (s == "1" || s == "true" || s == "TRUE" || s == "yes") return true;
  if (s == "0" || s == "false" || s == "FALSE" || s == "no") return false;
  throw std::invalid_argument("not a boolean: '" + s + "'");
}

Design parse_design(const CsvTable& t, std::size_t row, std::size_t col) {
  const std::string& s = t.cell(row, col);
  if (s == "RCT" || s == "rct") return Design::rct;
  if (s == "NRS" || s == "nrs") return Design::nrs;
  throw DataError(t.source(), t.file_row(row), "design must be RCT or NRS, got '" + s + "'");
}

DataFormat parse_format(const CsvTable& t, std::size_t row, std::size_t col) {
  const std::string& s = t.cell(row, col);
  if (s == "IPD" || s == "ipd") return DataFormat::ipd;
  if (s == "AD" || s == "ad") return DataFormat::ad;
  throw DataError(t.source(), t.file_row(row), "format must be IPD or AD, got '" + s + "'");
}

RobLevel parse_rob(const CsvTable& t, std::size_t row, std::size_t col) {
  const std::string& s = t.cell(row, col);
  if (s == "low") return RobLevel::low;
  if (s == "high") return RobLevel::high;
  if (s == "unclear") return RobLevel::unclear;
  throw DataError(t.source(), t.file_row(row), "rob must be low, high or unclear, got '" + s + "'");
}

}  // namespace

EvidenceNetwork link_network(const CsvTable& treatments, const CsvTable& studies, const CsvTable& ipd,
                             const CsvTable& ad, const CsvTable* directions) {
  EvidenceNetwork net;

  // treatments.csv: id,label,is_active
  {
    std::size_t c_id = treatments.column("id");
    std::size_t c_label = treatments.column("label");
    std::size_t c_active = treatments.column("is_active");
    std::vector<Treatment> parsed;
    std::set<std::string> labels;
    for (std::size_t r = 0; r < treatments.rows(); ++r) {
      Treatment t;
      t.id = static_cast<int>(treatments.integer(r, c_id));
      t.label = treatments.cell(r, c_label);
      try {
        t.is_active = parse_bool(treatments.cell(r, c_active));
      } catch (const std::invalid_argument& e) {
        throw DataError(treatments.source(), treatments.file_row(r), e.what());
      }
      if (!labels.insert(t.label).second)
        throw DataError(treatments.source(), treatments.file_row(r), "duplicate treatment label '" + t.label + "'");
      parsed.push_back(std::move(t));
    }
    if (parsed.empty()) throw DataError(treatments.source(), 1, "no treatments defined");
    std::sort(parsed.begin(), parsed.end(), [](const Treatment& a, const Treatment& b) { return a.id < b.id; });
    for (std::size_t i = 0; i < parsed.size(); ++i) {
      if (parsed[i].id != static_cast<int>(i) + 1)
        throw DataError(treatments.source(), 0, "treatment ids must be dense 1..K; missing or duplicate id near " +
                                                    std::to_string(static_cast<int>(i) + 1));
    }
    net.treatments = std::move(parsed);
  }

  auto check_treatment = [&](const CsvTable& t, std::size_t row, int id, const char* what) {
    if (id < 1 || id > net.treatment_count())
      throw DataError(t.source(), t.file_row(row),
                      std::string(what) + " cites unknown treatment id " + std::to_string(id));
  };

  // studies.csv: id,design,format,rob,ref_arm[,z1..zm][,bias_a1,bias_a2]
  std::map<std::string, std::size_t> study_index;
  {
    std::size_t c_id = studies.column("id");
    std::size_t c_design = studies.column("design");
    std::size_t c_format = studies.column("format");
    std::size_t c_rob = studies.column("rob");
    std::size_t c_ref = studies.column("ref_arm");
    auto z_cols = studies.column_family("z");
    bool has_bias = studies.has_column("bias_a1");
    if (has_bias && !studies.has_column("bias_a2"))
      throw DataError(studies.source(), 1, "bias_a1 present without bias_a2");
    for (std::size_t r = 0; r < studies.rows(); ++r) {
      Study s;
      s.id = studies.cell(r, c_id);
      if (study_index.count(s.id))
        throw DataError(studies.source(), studies.file_row(r), "duplicate study id '" + s.id + "'");
      s.design = parse_design(studies, r, c_design);
      s.format = parse_format(studies, r, c_format);
      s.rob = parse_rob(studies, r, c_rob);
      s.reference_arm = static_cast<int>(studies.integer(r, c_ref));
      check_treatment(studies, r, s.reference_arm, "ref_arm");
      for (std::size_t zc : z_cols) {
        const std::string& cellv = studies.cell(r, zc);
        s.z.push_back(cellv.empty() ? 0.0 : studies.number(r, zc));
      }
      if (has_bias) {
        const std::string& a1 = studies.cell(r, studies.column("bias_a1"));
        const std::string& a2 = studies.cell(r, studies.column("bias_a2"));
        if (!a1.empty() != !a2.empty())
          throw DataError(studies.source(), studies.file_row(r), "bias_a1/bias_a2 must be given together");
        if (!a1.empty()) {
          BetaParams p{studies.number(r, studies.column("bias_a1")), studies.number(r, studies.column("bias_a2"))};
          if (p.a <= 0 || p.b <= 0)
            throw DataError(studies.source(), studies.file_row(r), "beta parameters must be positive");
          s.bias_prior = p;
        }
      }
      study_index.emplace(s.id, net.studies.size());
      net.studies.push_back(std::move(s));
    }
  }

  // ipd.csv: study,treatment,y,x1..xp
  auto ipd_x = ipd.column_family("x");
  {
    std::size_t c_study = ipd.column("study");
    std::size_t c_trt = ipd.column("treatment");
    std::size_t c_y = ipd.column("y");
    for (std::size_t r = 0; r < ipd.rows(); ++r) {
      const std::string& sid = ipd.cell(r, c_study);
      auto it = study_index.find(sid);
      if (it == study_index.end())
        throw DataError(ipd.source(), ipd.file_row(r), "row cites unknown study '" + sid + "'");
      Study& s = net.studies[it->second];
      if (s.format != DataFormat::ipd)
        throw DataError(ipd.source(), ipd.file_row(r), "study '" + sid + "' is declared AD but has IPD rows");
      IpdRecord rec;
      rec.treatment = static_cast<int>(ipd.integer(r, c_trt));
      check_treatment(ipd, r, rec.treatment, "row");
      long y = ipd.integer(r, c_y);
      if (y != 0 && y != 1) throw DataError(ipd.source(), ipd.file_row(r), "y must be 0 or 1");
      rec.outcome = static_cast<int>(y);
      for (std::size_t xc : ipd_x) {
        double v = ipd.number(r, xc);
        if (!std::isfinite(v)) throw DataError(ipd.source(), ipd.file_row(r), "covariate must be finite");
        rec.x.push_back(v);
      }
      s.ipd.push_back(std::move(rec));
    }
  }

  // ad.csv: study,treatment,r,n,xbar1..xbarp
  auto ad_x = ad.column_family("xbar");
  {
    std::size_t c_study = ad.column("study");
    std::size_t c_trt = ad.column("treatment");
    std::size_t c_r = ad.column("r");
    std::size_t c_n = ad.column("n");
    for (std::size_t r = 0; r < ad.rows(); ++r) {
      const std::string& sid = ad.cell(r, c_study);
      auto it = study_index.find(sid);
      if (it == study_index.end())
        throw DataError(ad.source(), ad.file_row(r), "row cites unknown study '" + sid + "'");
      Study& s = net.studies[it->second];
      if (s.format != DataFormat::ad)
        throw DataError(ad.source(), ad.file_row(r), "study '" + sid + "' is declared IPD but has AD rows");
      AdArm arm;
      arm.treatment = static_cast<int>(ad.integer(r, c_trt));
      check_treatment(ad, r, arm.treatment, "row");
      arm.events = ad.integer(r, c_r);
      arm.sample_size = ad.integer(r, c_n);
      if (arm.sample_size < 1) throw DataError(ad.source(), ad.file_row(r), "n must be at least 1");
      if (arm.events < 0 || arm.events > arm.sample_size)
        throw DataError(ad.source(), ad.file_row(r),
                        "r=" + std::to_string(arm.events) + " outside 0..n=" + std::to_string(arm.sample_size) +
                            " for study '" + sid + "'");
      if (s.ad_arm(arm.treatment))
        throw DataError(ad.source(), ad.file_row(r),
                        "duplicate arm for study '" + sid + "', treatment " + std::to_string(arm.treatment));
      for (std::size_t xc : ad_x) arm.mean_x.push_back(ad.number(r, xc));
      s.ad.push_back(std::move(arm));
    }
  }

  // Covariate naming: IPD columns win; AD must agree in dimension when both present.
  if (!ipd_x.empty() && !ad_x.empty() && ipd_x.size() != ad_x.size())
    throw DataError(ad.source(), 1, "ipd x1..xp and ad xbar1..xbarp dimensions differ");
  std::size_t dim = std::max(ipd_x.size(), ad_x.size());
  for (std::size_t c = 1; c <= dim; ++c) net.covariate_names.push_back("x" + std::to_string(c));
  net.covariate_centers.assign(dim, 0.0);
  for (auto& s : net.studies) {
    for (auto& rec : s.ipd) rec.x.resize(dim, 0.0);
    for (auto& arm : s.ad) arm.mean_x.resize(dim, 0.0);
  }

  // Derive arm sets (reference first, then ascending treatment id).
  for (auto& s : net.studies) {
    std::set<int> seen;
    if (s.format == DataFormat::ipd)
      for (const auto& rec : s.ipd) seen.insert(rec.treatment);
    else
      for (const auto& arm : s.ad) seen.insert(arm.treatment);
    if (seen.size() < 2)
      throw DataError(studies.source(), 0, "study '" + s.id + "' has fewer than 2 distinct arms");
    if (!seen.count(s.reference_arm))
      throw DataError(studies.source(), 0,
                      "study '" + s.id + "' ref_arm " + std::to_string(s.reference_arm) + " is not one of its arms");
    s.arms.push_back(s.reference_arm);
    for (int t : seen)
      if (t != s.reference_arm) s.arms.push_back(t);
  }

  // directions.csv: study,treatment_b,treatment_k,dir
  if (directions) {
    const CsvTable& d = *directions;
    std::size_t c_study = d.column("study");
    std::size_t c_b = d.column("treatment_b");
    std::size_t c_k = d.column("treatment_k");
    std::size_t c_dir = d.column("dir");
    for (std::size_t r = 0; r < d.rows(); ++r) {
      const std::string& sid = d.cell(r, c_study);
      auto it = study_index.find(sid);
      if (it == study_index.end())
        throw DataError(d.source(), d.file_row(r), "row cites unknown study '" + sid + "'");
      Study& s = net.studies[it->second];
      int b = static_cast<int>(d.integer(r, c_b));
      int k = static_cast<int>(d.integer(r, c_k));
      check_treatment(d, r, b, "treatment_b");
      check_treatment(d, r, k, "treatment_k");
      const std::string& dv = d.cell(r, c_dir);
      BiasDirection dir;
      if (dv == "0") dir = BiasDirection::favours_b;
      else if (dv == "1") dir = BiasDirection::favours_k;
      else if (dv == "unknown") dir = BiasDirection::unknown;
      else throw DataError(d.source(), d.file_row(r), "dir must be 0, 1 or unknown");
      s.directions[{b, k}] = dir;
    }
  }

  net.reference_treatment = 1;
  for (const auto& t : net.treatments) {
    std::string lower = t.label;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (lower == "placebo") {
      net.reference_treatment = t.id;
      break;
    }
  }
  return net;
}

EvidenceNetwork load_network(const std::string& ipd_file, const std::string& ad_file,
                             const std::string& study_file, const std::string& treatment_file,
                             const std::string& directions_file) {
  CsvTable treatments = CsvTable::read_file(treatment_file);
  CsvTable studies = CsvTable::read_file(study_file);
  CsvTable ipd = ipd_file.empty() ? CsvTable::from_string("study,treatment,y\n", "<empty ipd>")
                                  : CsvTable::read_file(ipd_file);
  CsvTable ad = ad_file.empty() ? CsvTable::from_string("study,treatment,r,n\n", "<empty ad>")
                                : CsvTable::read_file(ad_file);
  std::optional<CsvTable> dirs;
  if (!directions_file.empty()) dirs = CsvTable::read_file(directions_file);
  return link_network(treatments, studies, ipd, ad, dirs ? &*dirs : nullptr);
}

bool ValidationReport::ok() const {
  for (const auto& i : issues)
    if (i.fatal) return false;
  return true;
}

std::string ValidationReport::describe(const EvidenceNetwork& net) const {
  std::ostringstream os;
  os << "treatments: " << net.treatment_count() << ", studies: " << net.studies.size() << "\n";
  os << "connected: " << (connected ? "yes" : "no") << "\n";
  if (!connected) {
    for (std::size_t i = 0; i < components.size(); ++i) {
      os << "  component " << i + 1 << ":";
      for (int t : components[i]) os << " " << net.treatment(t).label;
      os << "\n";
    }
  }
  os << "comparisons:\n";
  for (const auto& [pair, count] : comparison_arms)
    os << "  " << net.treatment(pair.first).label << " vs " << net.treatment(pair.second).label << ": " << count
       << " studies\n";
  os << "risk of bias: low " << (rob_counts.count(RobLevel::low) ? rob_counts.at(RobLevel::low) : 0) << ", high "
     << (rob_counts.count(RobLevel::high) ? rob_counts.at(RobLevel::high) : 0) << ", unclear "
     << (rob_counts.count(RobLevel::unclear) ? rob_counts.at(RobLevel::unclear) : 0) << "\n";
  for (const auto& i : issues) os << (i.fatal ? "error: " : "warning: ") << i.message << "\n";
  return os.str();
}

ValidationReport validate_network(const EvidenceNetwork& net) {
  ValidationReport rep;
  int K = net.treatment_count();

  // Union-find over the treatment co-occurrence graph.
  std::vector<int> parent(static_cast<std::size_t>(K));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int a) {
    while (parent[static_cast<std::size_t>(a)] != a) {
      parent[static_cast<std::size_t>(a)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(a)])];
      a = parent[static_cast<std::size_t>(a)];
    }
    return a;
  };
  auto unite = [&](int a, int b) { parent[static_cast<std::size_t>(find(a))] = find(b); };

  std::set<int> used;
  for (const auto& s : net.studies) {
    if (s.arms.size() < 2) rep.issues.push_back({true, "study '" + s.id + "' has fewer than 2 arms"});
    for (std::size_t i = 0; i < s.arms.size(); ++i) {
      used.insert(s.arms[i]);
      for (std::size_t k = i + 1; k < s.arms.size(); ++k) {
        unite(s.arms[i] - 1, s.arms[k] - 1);
        auto pair = std::minmax(s.arms[i], s.arms[k]);
        rep.comparison_arms[{pair.first, pair.second}] += 1;
      }
    }
    rep.rob_counts[s.rob] += 1;
    bool has_cov = net.covariate_dim() > 0;
    rep.covariates_available[s.id] = has_cov;
    if (s.format == DataFormat::ipd) {
      std::map<int, int> per_arm;
      for (const auto& rec : s.ipd) per_arm[rec.treatment]++;
      for (int a : s.arms)
        if (per_arm[a] == 0) rep.issues.push_back({true, "study '" + s.id + "' arm " + std::to_string(a) + " has no IPD rows"});
    }
  }
  if (net.studies.empty()) rep.issues.push_back({true, "network has no studies"});

  std::map<int, std::vector<int>> groups;
  for (int t : used) groups[find(t - 1)].push_back(t);
  // Treatments never observed in any study each form their own component.
  for (int t = 1; t <= K; ++t)
    if (!used.count(t)) groups[-t].push_back(t);
  for (auto& [root, members] : groups) rep.components.push_back(members);
  std::sort(rep.components.begin(), rep.components.end());
  rep.connected = rep.components.size() <= 1;
  if (!rep.connected) {
    std::ostringstream os;
    os << "treatment network is disconnected (" << rep.components.size() << " components):";
    for (const auto& comp : rep.components) {
      os << " {";
      for (std::size_t i = 0; i < comp.size(); ++i) os << (i ? "," : "") << net.treatment(comp[i]).label;
      os << "}";
    }
    rep.issues.push_back({true, os.str()});
  }
  return rep;
}

void require_valid(const EvidenceNetwork& net) {
  auto rep = validate_network(net);
  if (!rep.ok()) {
    std::string msg;
    for (const auto& i : rep.issues)
      if (i.fatal) msg += (msg.empty() ? "" : "; ") + i.message;
    throw DataError("<network>", 0, msg);
  }
}

EvidenceNetwork center_covariates(const EvidenceNetwork& net, const std::vector<double>& centers) {
  if (centers.size() != net.covariate_dim())
    throw std::invalid_argument("center_covariates: expected " + std::to_string(net.covariate_dim()) +
                                " centers, got " + std::to_string(centers.size()));
  EvidenceNetwork out = net;
  for (auto& s : out.studies) {
    for (auto& rec : s.ipd)
      for (std::size_t c = 0; c < centers.size(); ++c) rec.x[c] -= centers[c];
    for (auto& arm : s.ad)
      for (std::size_t c = 0; c < centers.size(); ++c) arm.mean_x[c] -= centers[c];
  }
  for (std::size_t c = 0; c < centers.size(); ++c) out.covariate_centers[c] += centers[c];
  return out;
}

std::vector<AdArm> aggregate_ipd(const Study& study) {
  if (study.format != DataFormat::ipd)
    throw std::invalid_argument("aggregate_ipd: study '" + study.id + "' is not IPD");
  std::vector<AdArm> arms;
  for (int t : study.arms) {
    AdArm arm;
    arm.treatment = t;
    std::size_t dim = 0;
    for (const auto& rec : study.ipd)
      if (rec.treatment == t) dim = rec.x.size();
    arm.mean_x.assign(dim, 0.0);
    for (const auto& rec : study.ipd) {
      if (rec.treatment != t) continue;
      arm.sample_size += 1;
      arm.events += rec.outcome;
      for (std::size_t c = 0; c < dim; ++c) arm.mean_x[c] += rec.x[c];
    }
    for (auto& m : arm.mean_x) m /= static_cast<double>(arm.sample_size);
    arms.push_back(std::move(arm));
  }
  return arms;
}

void export_network(const EvidenceNetwork& net, const std::string& ipd_file, const std::string& ad_file,
                    const std::string& study_file, const std::string& treatment_file,
                    const std::string& directions_file) {
  auto open = [](const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(path, 0, "cannot open for writing");
    return out;
  };
  std::size_t dim = net.covariate_dim();

  if (!treatment_file.empty()) {
    auto out = open(treatment_file);
    out << csv_join({"id", "label", "is_active"});
    for (const auto& t : net.treatments)
      out << csv_join({std::to_string(t.id), t.label, t.is_active ? "1" : "0"});
  }
  if (!study_file.empty()) {
    auto out = open(study_file);
    std::size_t zdim = 0;
    bool any_bias = false;
    for (const auto& s : net.studies) {
      zdim = std::max(zdim, s.z.size());
      any_bias = any_bias || s.bias_prior.has_value();
    }
    std::vector<std::string> head{"id", "design", "format", "rob", "ref_arm"};
    for (std::size_t c = 1; c <= zdim; ++c) head.push_back("z" + std::to_string(c));
    if (any_bias) {
      head.push_back("bias_a1");
      head.push_back("bias_a2");
    }
    out << csv_join(head);
    for (const auto& s : net.studies) {
      std::vector<std::string> row{s.id, to_string(s.design), to_string(s.format), to_string(s.rob),
                                   std::to_string(s.reference_arm)};
      for (std::size_t c = 0; c < zdim; ++c) row.push_back(c < s.z.size() ? format_double(s.z[c]) : "0");
      if (any_bias) {
        row.push_back(s.bias_prior ? format_double(s.bias_prior->a) : "");
        row.push_back(s.bias_prior ? format_double(s.bias_prior->b) : "");
      }
      out << csv_join(row);
    }
  }
  if (!ipd_file.empty()) {
    auto out = open(ipd_file);
    std::vector<std::string> head{"study", "treatment", "y"};
    for (std::size_t c = 1; c <= dim; ++c) head.push_back("x" + std::to_string(c));
    out << csv_join(head);
    for (const auto& s : net.studies) {
      if (s.format != DataFormat::ipd) continue;
      for (const auto& rec : s.ipd) {
        std::vector<std::string> row{s.id, std::to_string(rec.treatment), std::to_string(rec.outcome)};
        for (std::size_t c = 0; c < dim; ++c) row.push_back(format_double(rec.x[c]));
        out << csv_join(row);
      }
    }
  }
  if (!ad_file.empty()) {
    auto out = open(ad_file);
    std::vector<std::string> head{"study", "treatment", "r", "n"};
    for (std::size_t c = 1; c <= dim; ++c) head.push_back("xbar" + std::to_string(c));
    out << csv_join(head);
    for (const auto& s : net.studies) {
      if (s.format != DataFormat::ad) continue;
      for (const auto& arm : s.ad) {
        std::vector<std::string> row{s.id, std::to_string(arm.treatment), std::to_string(arm.events),
                                     std::to_string(arm.sample_size)};
        for (std::size_t c = 0; c < dim; ++c) row.push_back(format_double(arm.mean_x[c]));
        out << csv_join(row);
      }
    }
  }
  if (!directions_file.empty()) {
    auto out = open(directions_file);
    out << csv_join({"study", "treatment_b", "treatment_k", "dir"});
    for (const auto& s : net.studies) {
      for (const auto& [pair, dir] : s.directions) {
        std::string dv = dir == BiasDirection::unknown ? "unknown" : std::to_string(static_cast<int>(dir));
        out << csv_join({s.id, std::to_string(pair.first), std::to_string(pair.second), dv});
      }
    }
  }
}

}  // namespace nmsynth
