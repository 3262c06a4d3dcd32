#include "hiertmle/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>

#include "hiertmle/errors.hpp"

namespace hiertmle {

double EICVector::mean() const {
  if (d.empty()) return 0.0;
  double s = 0.0;
  for (double v : d) s += v;
  return s / static_cast<double>(d.size());
}

std::vector<double> unit_eic_terms(const TargetingProblem& p, const TargetedFit& t,
                                   double psi_hat) {
  std::vector<double> out(p.units.size());
  for (std::size_t u = 0; u < p.units.size(); ++u) {
    const auto& unit = p.units[u];
    out[u] = unit.h * (unit.y - t.q_star[u]) + t.integral[u] - psi_hat;
  }
  return out;
}

EICVector eic_values(const TargetingProblem& p, const TargetedFit& t, double psi_hat) {
  EICVector e;
  e.level = p.config.level;
  e.d_y.assign(p.communities, 0.0);
  e.d_ew.assign(p.communities, 0.0);
  std::vector<double> weight(p.communities, 0.0);
  for (std::size_t u = 0; u < p.units.size(); ++u) {
    const auto& unit = p.units[u];
    e.d_y[unit.community] += unit.weight * unit.h * (unit.y - t.q_star[u]);
    e.d_ew[unit.community] += unit.weight * t.integral[u];
    weight[unit.community] += unit.weight;
  }
  e.d.resize(p.communities);
  for (std::size_t j = 0; j < p.communities; ++j) {
    e.d_ew[j] -= weight[j] * psi_hat;
    e.d[j] = e.d_y[j] + e.d_ew[j];
  }
  return e;
}

WaldSummary variance_and_ci(const std::vector<double>& d, double psi_hat) {
  if (d.size() < 2) throw InsufficientData("variance needs at least two communities");
  WaldSummary w;
  double s = 0.0;
  for (double v : d) s += v * v;
  const double j = static_cast<double>(d.size());
  w.sigma2 = s / j;
  w.variance = w.sigma2 / j;
  w.se = std::sqrt(w.variance);
  w.ci = {psi_hat - kNormalQuantile975 * w.se, psi_hat + kNormalQuantile975 * w.se};
  return w;
}

EstimateReport make_report(const TargetingProblem& p, const TargetedFit& t,
                           const OutcomeBounds& bounds, std::string intervention,
                           std::string fingerprint) {
  EstimateReport r;
  r.intervention = std::move(intervention);
  r.level = p.config.level;
  r.variant = p.config.variant;
  r.communities = p.communities;
  r.fingerprint = std::move(fingerprint);
  r.psi_hat = estimate_psi(p, t);
  r.epsilon = t.fluctuation.epsilon;
  r.eic = eic_values(p, t, r.psi_hat);
  auto w = variance_and_ci(r.eic.d, r.psi_hat);
  r.sigma2 = w.sigma2;
  r.variance = w.variance;
  r.se = w.se;
  r.ci = w.ci;
  r.bounds = bounds;
  auto nat = unscale_estimate(r.psi_hat, r.se, bounds);
  r.psi_natural = nat.psi;
  r.se_natural = nat.se;
  r.ci_natural = {bounds.unscale(r.ci.first), bounds.unscale(r.ci.second)};

  auto& dg = r.diagnostics;
  dg.positivity = summarize_ratios(p.observed_ratios, p.config.ratio_cap);
  dg.n_truncated = p.n_truncated;
  dg.n_zero_density = p.n_zero_density;
  dg.positivity.n_zero_density = p.n_zero_density;
  dg.fluctuation_converged = t.fluctuation.converged;
  dg.fluctuation_iterations = t.fluctuation.iterations;
  dg.fluctuation_method = t.fluctuation.method;
  dg.score_residual = t.score_residual;
  for (const auto& u : p.units) dg.max_clever_covariate = std::max(dg.max_clever_covariate, u.h);
  if (!t.fluctuation.converged) {
    dg.warnings.push_back("fluctuation did not solve the score equation; epsilon from line search");
  }
  if (p.n_truncated > 0) {
    dg.warnings.push_back(std::to_string(p.n_truncated) +
                          " clever covariate values truncated at the ratio cap");
  }
  return r;
}

ContrastReport estimate_contrast(const EstimateReport& first, const EstimateReport& second) {
  if (first.communities != second.communities || first.fingerprint != second.fingerprint ||
      first.eic.size() != second.eic.size()) {
    throw MismatchedRuns("contrast needs two reports from the same dataset");
  }
  if (first.level != second.level) {
    throw MismatchedRuns("contrast needs two reports at the same level");
  }
  ContrastReport c;
  c.first = first.intervention;
  c.second = second.intervention;
  c.name = second.intervention + " - " + first.intervention;
  c.delta = second.psi_hat - first.psi_hat;
  std::vector<double> d(first.eic.size());
  for (std::size_t j = 0; j < d.size(); ++j) d[j] = second.eic.d[j] - first.eic.d[j];
  auto w = variance_and_ci(d, c.delta);
  c.sigma2 = w.sigma2;
  c.variance = w.variance;
  c.se = w.se;
  c.ci = w.ci;
  const double width = first.bounds.width();
  c.delta_natural = width * c.delta;
  c.se_natural = width * c.se;
  c.ci_natural = {width * c.ci.first, width * c.ci.second};
  return c;
}

std::string dataset_fingerprint(const HierarchicalDataset& data) {
  // FNV-1a over the bytes of every stored value.
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t k = 0; k < n; ++k) {
      h ^= b[k];
      h *= 1099511628211ULL;
    }
  };
  auto mix_d = [&mix](double v) { mix(&v, sizeof v); };
  for (const auto& c : data.communities()) {
    mix(c.id.data(), c.id.size());
    mix_d(c.a);
    for (double v : c.e) mix_d(v);
    for (std::size_t i = 0; i < c.size(); ++i) {
      mix_d(c.individuals[i].y);
      mix_d(c.alpha[i]);
      for (double v : c.individuals[i].w) mix_d(v);
    }
  }
  mix_d(data.bounds().lo);
  mix_d(data.bounds().hi);
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace hiertmle
