#include "hiertmle/tmle.hpp"

#include <algorithm>
#include <cmath>

#include "hiertmle/errors.hpp"

namespace hiertmle {

std::string_view to_string(FluctuationVariant v) {
  return v == FluctuationVariant::CleverCovariate ? "clever_covariate" : "weighted_intercept";
}

std::string_view to_string(TargetLevel l) {
  return l == TargetLevel::Community ? "community" : "individual";
}

std::string_view to_string(IntegrationMethod m) {
  return m == IntegrationMethod::BinSum ? "bin_sum" : "monte_carlo";
}

FluctuationVariant fluctuation_variant_from_string(std::string_view s) {
  if (s == "clever_covariate") return FluctuationVariant::CleverCovariate;
  if (s == "weighted_intercept") return FluctuationVariant::WeightedIntercept;
  throw ConfigError("unknown fluctuation variant '" + std::string(s) +
                    "' (expected clever_covariate or weighted_intercept)");
}

TargetLevel target_level_from_string(std::string_view s) {
  if (s == "community") return TargetLevel::Community;
  if (s == "individual") return TargetLevel::Individual;
  throw ConfigError("unknown targeting level '" + std::string(s) +
                    "' (expected community or individual)");
}

IntegrationMethod integration_method_from_string(std::string_view s) {
  if (s == "bin_sum") return IntegrationMethod::BinSum;
  if (s == "monte_carlo") return IntegrationMethod::MonteCarlo;
  throw ConfigError("unknown integration method '" + std::string(s) +
                    "' (expected bin_sum or monte_carlo)");
}

void TargetingConfig::validate() const {
  if (!(ratio_cap > 1.0)) throw ConfigError("ratio_cap must exceed 1");
  if (integration == IntegrationMethod::MonteCarlo && mc_draws < 100) {
    throw ConfigError("monte_carlo integration needs at least 100 draws");
  }
}

CleverValue clever_covariate(double gstar, double ghat, double cap) {
  CleverValue v;
  if (gstar <= 0.0) return v;
  if (!(ghat > 0.0)) {
    v.h = cap;
    v.truncated = true;
    v.zero_density = true;
    return v;
  }
  double r = gstar / ghat;
  if (r > cap) {
    v.h = cap;
    v.truncated = true;
  } else {
    v.h = r;
  }
  return v;
}

namespace {

template <class QFn, class DensityFn>
void fill_nodes(TargetingUnit& u, const InterventionDistribution& g, const TargetingConfig& cfg,
                std::uint64_t stream, QFn&& q_at, DensityFn&& ghat_at) {
  if (cfg.integration == IntegrationMethod::MonteCarlo) {
    Rng rng = make_rng(cfg.mc_seed, stream);
    const double m = 1.0 / static_cast<double>(cfg.mc_draws);
    for (std::size_t d = 0; d < cfg.mc_draws; ++d) {
      double a = g.sample(rng);
      u.node_mass.push_back(m);
      u.node_q.push_back(q_at(a));
      u.node_h.push_back(clever_covariate(g.density_at(a), ghat_at(a), cfg.ratio_cap).h);
    }
    return;
  }
  for (const auto& n : g.nodes) {
    if (n.mass <= 0.0) continue;
    u.node_mass.push_back(n.mass);
    u.node_q.push_back(q_at(n.a));
    u.node_h.push_back(clever_covariate(g.density_at(n.a), ghat_at(n.a), cfg.ratio_cap).h);
  }
}

void record_observed(TargetingProblem& p, TargetingUnit& u, double gs, double gh) {
  auto cv = clever_covariate(gs, gh, p.config.ratio_cap);
  u.h = cv.h;
  if (cv.truncated) ++p.n_truncated;
  if (cv.zero_density) ++p.n_zero_density;
  p.observed_ratios.push_back(gh > 0.0 ? gs / gh : (gs > 0.0 ? p.config.ratio_cap : 0.0));
}

}  // namespace

TargetingProblem prepare_community_targeting(const HierarchicalDataset& data,
                                             const std::vector<CommunityContext>& contexts,
                                             const ConditionalDensityModel& g_hat,
                                             const OutcomeModel& outcome,
                                             const InterventionSpec& gstar,
                                             const TargetingConfig& config) {
  config.validate();
  if (contexts.size() != data.size()) throw DimensionMismatch("one context per community needed");
  TargetingProblem p;
  p.config = config;
  p.communities = data.size();
  p.units.resize(data.size());
  for (std::size_t j = 0; j < data.size(); ++j) {
    const auto& ctx = contexts[j];
    const double a = data.community(j).a;
    auto ref = g_hat.distribution(exposure_features(ctx.e, ctx.w_summary));
    auto g = build_gstar(gstar, g_hat.support(), &ref, ctx.e, ctx.w_summary);
    auto& u = p.units[j];
    u.community = j;
    u.weight = 1.0;
    u.y = data.community_outcomes()[j];
    u.q = outcome.predict_community(ctx, a);
    record_observed(p, u, g.density_at(a), ref.density_at(a));
    fill_nodes(
        u, g, config, j, [&](double x) { return outcome.predict_community(ctx, x); },
        [&](double x) { return ref.density_at(x); });
  }
  return p;
}

TargetingProblem prepare_individual_targeting(const HierarchicalDataset& data,
                                              const std::vector<CommunityContext>& contexts,
                                              const IndividualDensityModel& g_hat_i,
                                              const OutcomeModel& outcome,
                                              const InterventionSpec& gstar,
                                              const TargetingConfig& config) {
  config.validate();
  if (contexts.size() != data.size()) throw DimensionMismatch("one context per community needed");
  if (outcome.level() != OutcomeLevel::PooledIndividual) {
    throw ConfigError("individual-level targeting needs a pooled individual outcome model");
  }
  TargetingProblem p;
  p.config = config;
  p.communities = data.size();
  std::uint64_t stream = 0;
  for (std::size_t j = 0; j < data.size(); ++j) {
    const auto& ctx = contexts[j];
    const double a = data.community(j).a;
    for (std::size_t i = 0; i < ctx.w_rows.size(); ++i, ++stream) {
      auto ref = g_hat_i.distribution(ctx, j, i);
      auto g = build_gstar(gstar, g_hat_i.base().support(), &ref, ctx.e, ctx.w_rows[i]);
      TargetingUnit u;
      u.community = j;
      u.weight = ctx.alpha[i];
      u.y = data.scaled_y(j, i);
      u.q = outcome.predict(a, ctx.e, ctx.outcome_rows[i]);
      record_observed(p, u, g.density_at(a), ref.density_at(a));
      fill_nodes(
          u, g, config, stream, [&](double x) { return outcome.predict(x, ctx.e, ctx.outcome_rows[i]); },
          [&](double x) { return ref.density_at(x); });
      p.units.push_back(std::move(u));
    }
  }
  return p;
}

double fluctuate(double q, double h, double epsilon, FluctuationVariant variant) {
  if (epsilon == 0.0) return q;
  double x = variant == FluctuationVariant::CleverCovariate ? h : 1.0;
  return expit(logit(q) + epsilon * x);
}

double fluctuation_score(const TargetingProblem& p, double epsilon) {
  double s = 0.0;
  for (const auto& u : p.units) {
    double c = u.weight * u.h;
    if (c == 0.0) continue;
    s += c * (u.y - fluctuate(u.q, u.h, epsilon, p.config.variant));
  }
  return s;
}

double fluctuation_loss(const TargetingProblem& p, double epsilon) {
  double l = 0.0;
  const bool wi = p.config.variant == FluctuationVariant::WeightedIntercept;
  for (const auto& u : p.units) {
    double c = wi ? u.weight * u.h : u.weight;
    if (c == 0.0) continue;
    l += c * bernoulli_loss(u.y, fluctuate(u.q, u.h, epsilon, p.config.variant));
  }
  return l;
}

namespace {

double score_derivative(const TargetingProblem& p, double epsilon) {
  double d = 0.0;
  const bool cc = p.config.variant == FluctuationVariant::CleverCovariate;
  for (const auto& u : p.units) {
    double c = u.weight * u.h;
    if (c == 0.0) continue;
    double x = cc ? u.h : 1.0;
    double q = expit(logit(u.q) + epsilon * x);
    d -= c * x * q * (1.0 - q);
  }
  return d;
}

FluctuationFit line_search(const TargetingProblem& p) {
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = -10.0, b = 10.0;
  double c = b - phi * (b - a), d = a + phi * (b - a);
  double fc = fluctuation_loss(p, c), fd = fluctuation_loss(p, d);
  FluctuationFit fit;
  fit.method = "line_search";
  for (int it = 0; it < 200 && b - a > 1e-12; ++it) {
    fit.iterations = it + 1;
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - phi * (b - a);
      fc = fluctuation_loss(p, c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + phi * (b - a);
      fd = fluctuation_loss(p, d);
    }
  }
  fit.epsilon = 0.5 * (a + b);
  fit.converged = false;
  return fit;
}

}  // namespace

FluctuationFit fit_fluctuation(const TargetingProblem& p) {
  double total = 0.0, weight = 0.0;
  for (const auto& u : p.units) {
    if (!std::isfinite(u.h) || u.h < 0.0) throw InvariantError("clever covariate must be finite");
    total += u.weight * u.h;
    weight += u.weight;
  }
  if (!(total > 0.0)) {
    throw AllWeightsZero("every unit has zero clever covariate or weight; the intervention puts "
                         "no mass on observed exposures");
  }
  const double tol = 1e-12 * std::max(1.0, total);
  FluctuationFit fit;
  fit.method = "newton";
  double f0 = fluctuation_score(p, 0.0);
  // An initial fit that already solves the score up to solver noise is left untouched.
  if (std::abs(f0) <= 1e-9 * std::max(1.0, weight)) {
    fit.converged = true;
    return fit;
  }
  // The score is nonincreasing in epsilon; bracket the root on the side f0 points to.
  const double dir = f0 > 0 ? 1.0 : -1.0;
  double lo = 0.0, hi = dir;
  double fhi = fluctuation_score(p, hi);
  while ((fhi > 0) == (f0 > 0) && std::abs(hi) < 1024.0) {
    lo = hi;
    hi *= 2.0;
    fhi = fluctuation_score(p, hi);
  }
  if ((fhi > 0) == (f0 > 0) && std::abs(fhi) > tol) return line_search(p);
  double a = std::min(lo, hi), b = std::max(lo, hi);
  double x = lo;
  for (int it = 1; it <= 200; ++it) {
    fit.iterations = it;
    double fx = fluctuation_score(p, x);
    if (std::abs(fx) <= tol) {
      fit.epsilon = x;
      fit.converged = true;
      return fit;
    }
    if (fx > 0) {
      a = x;
    } else {
      b = x;
    }
    double dfx = score_derivative(p, x);
    double next = dfx < 0 ? x - fx / dfx : 0.5 * (a + b);
    if (!(next > a && next < b)) next = 0.5 * (a + b);
    if (b - a <= 1e-15 * (1.0 + std::abs(x))) {
      fit.epsilon = next;
      fit.converged = std::abs(fluctuation_score(p, next)) <= 1e-8 * std::max(1.0, total);
      return fit;
    }
    x = next;
  }
  fit.epsilon = x;
  fit.converged = std::abs(fluctuation_score(p, x)) <= 1e-8 * std::max(1.0, total);
  return fit;
}

TargetedFit apply_fluctuation(const TargetingProblem& p, const FluctuationFit& fit) {
  TargetedFit t;
  t.fluctuation = fit;
  const auto variant = p.config.variant;
  t.q_star.reserve(p.units.size());
  t.integral.reserve(p.units.size());
  for (const auto& u : p.units) {
    t.q_star.push_back(fluctuate(u.q, u.h, fit.epsilon, variant));
    double integral = 0.0;
    for (std::size_t k = 0; k < u.node_mass.size(); ++k) {
      integral += u.node_mass[k] * fluctuate(u.node_q[k], u.node_h[k], fit.epsilon, variant);
    }
    t.integral.push_back(integral);
  }
  t.score_residual = fluctuation_score(p, fit.epsilon);
  return t;
}

TargetedFit target(const TargetingProblem& p) { return apply_fluctuation(p, fit_fluctuation(p)); }

double estimate_psi(const TargetingProblem& p, const TargetedFit& t) {
  double s = 0.0;
  for (std::size_t u = 0; u < p.units.size(); ++u) s += p.units[u].weight * t.integral[u];
  return s / static_cast<double>(p.communities);
}

}  // namespace hiertmle
