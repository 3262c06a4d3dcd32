#include "hiertmle/serialization.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "hiertmle/errors.hpp"
#include "text_util.hpp"

namespace hiertmle {

using ojson = nlohmann::ordered_json;

namespace {

ojson number(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

ojson interval(const std::pair<double, double>& ci) {
  return ojson::array({number(ci.first), number(ci.second)});
}

ojson selection_json(const SelectionSummary& s) {
  ojson risk = ojson::object();
  for (const auto& [c, r] : s.cv_risk) risk[std::string(to_string(c))] = number(r);
  ojson o;
  o["selected"] = std::string(to_string(s.selected));
  o["cv_risk"] = risk;
  o["fallback"] = s.fallback;
  o["note"] = s.note;
  return o;
}

ojson positivity_json(const PositivitySummary& p) {
  ojson q = ojson::array();
  for (const auto& [level, v] : p.quantiles) q.push_back(ojson::array({level, number(v)}));
  ojson o;
  o["ratio_quantiles"] = q;
  o["max_ratio"] = number(p.max_ratio);
  o["cap"] = p.cap;
  o["n_above_cap"] = p.n_above_cap;
  o["n_low_density"] = p.n_low_density;
  o["n_zero_density"] = p.n_zero_density;
  o["support_violations"] = p.support_violations;
  return o;
}

ojson estimate_json(const EstimateReport& r, bool include_eic) {
  const auto& d = r.diagnostics;
  ojson diag;
  diag["positivity"] = positivity_json(d.positivity);
  diag["n_truncated"] = d.n_truncated;
  diag["n_zero_density"] = d.n_zero_density;
  diag["fluctuation"] = ojson{{"epsilon", number(r.epsilon)},
                              {"converged", d.fluctuation_converged},
                              {"iterations", d.fluctuation_iterations},
                              {"method", d.fluctuation_method},
                              {"score_residual", number(d.score_residual)}};
  diag["max_clever_covariate"] = number(d.max_clever_covariate);
  diag["marginalization_mc_se"] = number(d.marginalization_mc_se);
  diag["warnings"] = d.warnings;

  ojson o;
  o["intervention"] = r.intervention;
  o["level"] = std::string(to_string(r.level));
  o["variant"] = std::string(to_string(r.variant));
  o["communities"] = r.communities;
  o["psi_hat"] = number(r.psi_natural);
  o["se"] = number(r.se_natural);
  o["ci"] = interval(r.ci_natural);
  o["scaled"] = ojson{{"psi_hat", number(r.psi_hat)},
                      {"se", number(r.se)},
                      {"ci", interval(r.ci)},
                      {"sigma2", number(r.sigma2)},
                      {"variance", number(r.variance)}};
  o["diagnostics"] = diag;
  if (include_eic) {
    ojson eic = ojson::array();
    for (double v : r.eic.d) eic.push_back(number(v));
    o["eic"] = eic;
  }
  return o;
}

ojson contrast_json(const ContrastReport& c) {
  ojson o;
  o["name"] = c.name;
  o["first"] = c.first;
  o["second"] = c.second;
  o["delta"] = number(c.delta_natural);
  o["se"] = number(c.se_natural);
  o["ci"] = interval(c.ci_natural);
  o["scaled"] = ojson{{"delta", number(c.delta)},
                      {"se", number(c.se)},
                      {"ci", interval(c.ci)},
                      {"sigma2", number(c.sigma2)},
                      {"variance", number(c.variance)}};
  return o;
}

std::string fixed(double v, int digits = 4) {
  if (!std::isfinite(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

double get(const ojson& j) { return j.is_number() ? j.get<double>() : std::nan(""); }

}  // namespace

std::string report_json(const EstimationResult& result) {
  ojson root;
  root["seed"] = result.seed;
  root["seed_source"] = std::string(to_string(result.seed_source));
  root["dataset"] = ojson{{"fingerprint", result.fingerprint},
                          {"communities", result.communities},
                          {"individuals", result.individuals},
                          {"outcome_bounds", ojson::array({result.bounds.lo, result.bounds.hi})}};
  ojson density;
  density["exposure_type"] = std::string(to_string(result.density.exposure_type));
  density["support_size"] = result.density.support_size;
  density["bin_strategy"] =
      result.density.strategy ? ojson(std::string(to_string(*result.density.strategy))) : ojson();
  density["fixed"] = result.density.fixed;
  density["selection"] = selection_json(result.density.selection);
  root["density"] = density;
  ojson outcome;
  outcome["level"] = std::string(to_string(result.outcome.level));
  outcome["loss"] = std::string(to_string(result.outcome.loss));
  outcome["neighbor_features"] = result.outcome.neighbor_features;
  outcome["selection"] = selection_json(result.outcome.selection);
  root["outcome"] = outcome;
  ojson est = ojson::array();
  for (const auto& r : result.reports) est.push_back(estimate_json(r, result.include_eic));
  root["estimates"] = est;
  ojson con = ojson::array();
  for (const auto& c : result.contrasts) con.push_back(contrast_json(c));
  root["contrasts"] = con;
  root["warnings"] = result.warnings;
  return root.dump(2) + "\n";
}

std::string benchmark_csv(const BenchmarkResult& result) {
  std::ostringstream out;
  out << "intervention,replicate,psi_hat,se,ci_lo,ci_hi,psi0,covered,bias,mc_se\n";
  for (const auto& r : result.rows) {
    out << r.intervention << ',' << r.replicate << ',' << fmt_double(r.psi_hat) << ','
        << fmt_double(r.se) << ',' << fmt_double(r.ci_lo) << ',' << fmt_double(r.ci_hi) << ','
        << fmt_double(r.psi0) << ',' << (r.error.empty() ? (r.covered ? "1" : "0") : "nan") << ','
        << fmt_double(r.bias) << ',' << fmt_double(r.mc_se) << '\n';
  }
  for (const auto& s : result.summaries) {
    out << s.intervention << ",all," << fmt_double(s.mean_psi_hat) << ','
        << fmt_double(s.mean_se) << ",nan,nan," << fmt_double(s.psi0) << ','
        << fmt_double(s.coverage) << ',' << fmt_double(s.bias) << ',' << fmt_double(s.oracle_mc_se)
        << '\n';
  }
  return out.str();
}

std::string format_report_table(const std::string& report_json_text) {
  ojson root;
  try {
    root = ojson::parse(report_json_text);
  } catch (const ojson::parse_error& e) {
    throw ParseError(std::string("report is not valid JSON: ") + e.what());
  }
  if (!root.is_object() || !root.contains("estimates") || !root["estimates"].is_array()) {
    throw SchemaError("report has no 'estimates' array");
  }
  std::ostringstream out;
  char line[256];
  if (root.contains("dataset")) {
    const auto& d = root["dataset"];
    out << "communities: " << d.value("communities", 0) << "  individuals: "
        << d.value("individuals", 0) << "  fingerprint: " << d.value("fingerprint", "") << '\n';
  }
  if (root.contains("seed")) {
    out << "seed: " << root["seed"].get<std::uint64_t>() << " ("
        << root.value("seed_source", "") << ")\n";
  }
  out << '\n';
  std::snprintf(line, sizeof line, "%-24s %-10s %10s %10s %23s %8s\n", "intervention", "level",
                "psi_hat", "se", "95% CI", "max H");
  out << line;
  for (const auto& e : root["estimates"]) {
    std::string ci = "[" + fixed(get(e["ci"][0])) + ", " + fixed(get(e["ci"][1])) + "]";
    double max_h = std::nan("");
    if (e.contains("diagnostics")) max_h = get(e["diagnostics"]["max_clever_covariate"]);
    std::snprintf(line, sizeof line, "%-24s %-10s %10s %10s %23s %8s\n",
                  e.value("intervention", "").c_str(), e.value("level", "").c_str(),
                  fixed(get(e["psi_hat"])).c_str(), fixed(get(e["se"])).c_str(), ci.c_str(),
                  fixed(max_h, 2).c_str());
    out << line;
  }
  if (root.contains("contrasts") && !root["contrasts"].empty()) {
    out << '\n';
    std::snprintf(line, sizeof line, "%-35s %10s %10s %23s\n", "contrast", "delta", "se",
                  "95% CI");
    out << line;
    for (const auto& c : root["contrasts"]) {
      std::string ci = "[" + fixed(get(c["ci"][0])) + ", " + fixed(get(c["ci"][1])) + "]";
      std::snprintf(line, sizeof line, "%-35s %10s %10s %23s\n", c.value("name", "").c_str(),
                    fixed(get(c["delta"])).c_str(), fixed(get(c["se"])).c_str(), ci.c_str());
      out << line;
    }
  }
  if (root.contains("warnings") && !root["warnings"].empty()) {
    out << "\nwarnings:\n";
    for (const auto& w : root["warnings"]) out << "  - " << w.get<std::string>() << '\n';
  }
  return out.str();
}

std::string format_benchmark_table(const BenchmarkResult& result) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-24s %10s %10s %10s %10s %10s %9s %6s\n", "intervention",
                "psi0", "mean", "bias", "emp_sd", "mean_se", "coverage", "fail");
  out << line;
  for (const auto& s : result.summaries) {
    std::snprintf(line, sizeof line, "%-24s %10s %10s %10s %10s %10s %9s %6zu\n",
                  s.intervention.c_str(), fixed(s.psi0).c_str(), fixed(s.mean_psi_hat).c_str(),
                  fixed(s.bias).c_str(), fixed(s.empirical_sd).c_str(), fixed(s.mean_se).c_str(),
                  fixed(s.coverage, 3).c_str(), s.failed);
    out << line;
  }
  return out.str();
}

}  // namespace hiertmle
