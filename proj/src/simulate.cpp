#include "hiertmle/simulate.hpp"

#include <algorithm>
#include <cmath>

#include "hiertmle/errors.hpp"
#include "hiertmle/glm.hpp"

namespace hiertmle {

namespace {

void check_finite(double v, const std::string& what) {
  if (!std::isfinite(v)) throw SpecError(what + " must be finite");
}

void check_size(std::size_t got, std::size_t want, const std::string& what) {
  if (got != want) {
    throw SpecError(what + " has " + std::to_string(got) + " entries, expected " +
                    std::to_string(want));
  }
}

double dot(const std::vector<double>& c, const std::vector<double>& x, std::size_t offset = 0) {
  double s = 0.0;
  for (std::size_t k = 0; k < c.size(); ++k) s += c[k] * x[k + offset];
  return s;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }
double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }

/// E[min(max(X, lo), hi)] for X ~ N(mu, sd²).
double clipped_normal_mean(double mu, double sd, double lo, double hi) {
  if (sd <= 0.0) return std::clamp(mu, lo, hi);
  double a = (lo - mu) / sd, b = (hi - mu) / sd;
  double pa = normal_cdf(a), pb = normal_cdf(b);
  return lo * pa + hi * (1.0 - pb) + mu * (pb - pa) + sd * (normal_pdf(a) - normal_pdf(b));
}

}  // namespace

void DGPSpec::validate() const {
  if (communities < 2) throw SpecError("a DGP needs at least 2 communities");
  if (n_min < 1 || n_max < n_min) throw SpecError("community size range must satisfy 1 <= n_min <= n_max");
  const std::size_t s = e_laws.size();
  for (const auto& law : e_laws) {
    check_finite(law.p1, "E law parameter");
    check_finite(law.p2, "E law parameter");
    if (law.dist == CovariateDist::Uniform && !(law.p2 > law.p1)) {
      throw SpecError("uniform E law needs hi > lo");
    }
    if (law.dist == CovariateDist::Normal && law.p2 < 0.0) throw SpecError("normal sd must be >= 0");
  }
  check_size(w_intercept.size(), w_dim, "w_intercept");
  check_size(w_gamma.size(), w_dim, "w_gamma");
  check_size(w_sd.size(), w_dim, "w_sd");
  for (std::size_t k = 0; k < w_dim; ++k) {
    check_size(w_gamma[k].size(), s, "w_gamma row");
    check_finite(w_intercept[k], "w_intercept");
    check_finite(w_sd[k], "w_sd");
    if (w_sd[k] < 0.0) throw SpecError("w_sd must be >= 0");
    for (double g : w_gamma[k]) check_finite(g, "w_gamma");
  }
  if (!(rho >= 0.0 && rho < 1.0)) throw SpecError("rho must lie in [0, 1)");
  check_size(a_e.size(), s, "a_e");
  check_size(a_w.size(), w_dim, "a_w");
  check_size(y_e.size(), s, "y_e");
  check_size(y_w.size(), w_dim, "y_w");
  if (!y_interference.empty()) check_size(y_interference.size(), w_dim, "y_interference");
  for (double v : a_e) check_finite(v, "a_e");
  for (double v : a_w) check_finite(v, "a_w");
  for (double v : y_e) check_finite(v, "y_e");
  for (double v : y_w) check_finite(v, "y_w");
  for (double v : y_interference) check_finite(v, "y_interference");
  for (double v : {a_intercept, a_sd, a_confounding, y_intercept, y_a, y_re_sd, y_confounding,
                   y_contagion, y_sd}) {
    check_finite(v, "DGP coefficient");
  }
  if (a_sd < 0.0 || y_sd < 0.0 || y_re_sd < 0.0) throw SpecError("standard deviations must be >= 0");
  if (a_family == ExposureFamily::Binomial && a_trials < 1) throw SpecError("a_trials must be >= 1");
  if (y_family == OutcomeFamily::Bernoulli && (bounds.lo != 0.0 || bounds.hi != 1.0)) {
    throw SpecError("bernoulli outcomes need bounds [0, 1]");
  }
  try {
    bounds.validate();
  } catch (const Error& e) {
    throw SpecError(e.what());
  }
}

DGPSpec dgp_preset(const std::string& name) {
  DGPSpec d;
  d.communities = 200;
  d.n_min = d.n_max = 30;
  d.e_laws = {CovariateLaw{CovariateDist::Normal, 0.0, 1.0}};
  d.w_dim = 1;
  d.w_intercept = {0.0};
  d.w_gamma = {{0.5}};
  d.w_sd = {1.0};
  d.rho = 0.2;
  if (name == "well_specified" || name == "confounded") {
    d.a_family = ExposureFamily::Bernoulli;
    d.a_intercept = -0.2;
    d.a_e = {0.5};
    d.a_w = {0.5};
    d.y_family = OutcomeFamily::Bernoulli;
    d.y_intercept = -0.5;
    d.y_a = 1.0;
    d.y_e = {0.4};
    d.y_w = {0.6};
    if (name == "confounded") {
      d.a_confounding = 1.0;
      d.y_confounding = 1.0;
    }
    return d;
  }
  if (name == "linear") {
    d.e_laws = {CovariateLaw{CovariateDist::Uniform, -1.0, 1.0}};
    d.a_family = ExposureFamily::Bernoulli;
    d.a_e = {0.5};
    d.a_w = {0.3};
    d.y_family = OutcomeFamily::Gaussian;
    d.y_link = OutcomeLink::Identity;
    d.y_intercept = 0.35;
    d.y_a = 0.2;
    d.y_e = {0.1};
    d.y_w = {0.0};
    d.y_sd = 0.05;
    return d;
  }
  if (name == "continuous_shift") {
    d.a_family = ExposureFamily::Normal;
    d.a_intercept = 1.0;
    d.a_e = {0.5};
    d.a_w = {0.3};
    d.a_sd = 1.0;
    d.y_family = OutcomeFamily::Bernoulli;
    d.y_intercept = -1.0;
    d.y_a = 0.5;
    d.y_e = {0.3};
    d.y_w = {0.4};
    return d;
  }
  throw SpecError("unknown DGP preset '" + name + "'");
}

std::vector<std::string> dgp_preset_names() {
  return {"well_specified", "confounded", "linear", "continuous_shift"};
}

SimulatedCommunity simulate_community(const DGPSpec& dgp, Rng& rng,
                                      const InterventionSpec* intervention) {
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const std::size_t n =
      dgp.n_min + static_cast<std::size_t>(rng() % (dgp.n_max - dgp.n_min + 1));
  const double nd = static_cast<double>(n);

  std::vector<double> e{nd};
  for (const auto& law : dgp.e_laws) {
    e.push_back(law.dist == CovariateDist::Normal ? law.p1 + law.p2 * z(rng)
                                                  : law.p1 + (law.p2 - law.p1) * unif(rng));
  }
  const double shared = std::sqrt(dgp.rho), own = std::sqrt(1.0 - dgp.rho);
  std::vector<double> u_shared(dgp.w_dim);
  for (auto& u : u_shared) u = z(rng);
  std::vector<std::vector<double>> w(n, std::vector<double>(dgp.w_dim));
  std::vector<double> w_bar(dgp.w_dim, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < dgp.w_dim; ++k) {
      w[i][k] = dgp.w_intercept[k] + dot(dgp.w_gamma[k], e, 1) +
                dgp.w_sd[k] * (shared * u_shared[k] + own * z(rng));
      w_bar[k] += w[i][k] / nd;
    }
  }
  const double u_c = z(rng);
  const double u_re = dgp.y_re_sd * z(rng);

  double lp_a = dgp.a_intercept + dot(dgp.a_e, e, 1) + dot(dgp.a_w, w_bar) + dgp.a_confounding * u_c;
  double a = 0.0;
  switch (dgp.a_family) {
    case ExposureFamily::Bernoulli:
      a = unif(rng) < expit(lp_a) ? 1.0 : 0.0;
      break;
    case ExposureFamily::Normal:
      a = lp_a + dgp.a_sd * z(rng);
      break;
    case ExposureFamily::Binomial: {
      double p = expit(lp_a);
      for (int t = 0; t < dgp.a_trials; ++t) a += unif(rng) < p ? 1.0 : 0.0;
      break;
    }
  }
  if (intervention) a = apply_intervention(*intervention, a, e, w_bar, rng);

  std::vector<double> lp(n);
  for (std::size_t i = 0; i < n; ++i) {
    double v = dgp.y_intercept + dgp.y_a * a + dot(dgp.y_e, e, 1) + dot(dgp.y_w, w[i]) + u_re +
               dgp.y_confounding * u_c;
    if (!dgp.y_interference.empty() && n > 1) {
      for (std::size_t k = 0; k < dgp.w_dim; ++k) {
        double others = (w_bar[k] * nd - w[i][k]) / (nd - 1.0);
        v += dgp.y_interference[k] * others;
      }
    }
    lp[i] = v;
  }
  const auto& b = dgp.bounds;
  auto mean_of = [&](double eta) {
    if (dgp.y_family == OutcomeFamily::Bernoulli) return expit(eta);
    return dgp.y_link == OutcomeLink::Logit ? b.lo + b.width() * expit(eta) : eta;
  };
  auto draw = [&](double mu) {
    if (dgp.y_family == OutcomeFamily::Bernoulli) return unif(rng) < mu ? 1.0 : 0.0;
    return std::clamp(mu + dgp.y_sd * z(rng), b.lo, b.hi);
  };
  if (dgp.y_contagion != 0.0 && n > 1) {
    std::vector<double> y0(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      y0[i] = draw(mean_of(lp[i]));
      total += y0[i];
    }
    for (std::size_t i = 0; i < n; ++i) lp[i] += dgp.y_contagion * (total - y0[i]) / (nd - 1.0);
  }

  SimulatedCommunity out;
  Community& c = out.community;
  c.e = e;
  c.a = a;
  c.alpha.assign(n, 1.0 / nd);
  double expected = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double mu = mean_of(lp[i]);
    double y = draw(mu);
    c.individuals.push_back(IndividualRecord{w[i], y});
    expected += (dgp.y_family == OutcomeFamily::Bernoulli
                     ? mu
                     : clipped_normal_mean(mu, dgp.y_sd, b.lo, b.hi));
  }
  out.y_c_mean = expected / nd;
  return out;
}

HierarchicalDataset generate(const DGPSpec& dgp) {
  dgp.validate();
  std::vector<Community> cs;
  cs.reserve(dgp.communities);
  for (std::size_t j = 0; j < dgp.communities; ++j) {
    Rng rng = make_rng(dgp.seed, j);
    auto sc = simulate_community(dgp, rng);
    sc.community.id = "c" + std::to_string(j + 1);
    cs.push_back(std::move(sc.community));
  }
  return HierarchicalDataset(std::move(cs), dgp.bounds);
}

OracleResult oracle_psi(const DGPSpec& dgp, const InterventionSpec& intervention, std::size_t m,
                        std::uint64_t seed, std::size_t threads) {
  dgp.validate();
  intervention.validate();
  if (m < 10000) throw SpecError("oracle needs at least 10^4 draws, got " + std::to_string(m));
  if (intervention.kind == InterventionKind::TruncatedShift && !intervention.floor) {
    throw SpecError("truncated shift needs an explicit floor for the oracle");
  }
  constexpr std::size_t kBlock = 4096;
  const std::size_t blocks = (m + kBlock - 1) / kBlock;
  struct Moments {
    double n = 0, mean = 0, m2 = 0;
  };
  std::vector<Moments> parts(blocks);
  const std::uint64_t base = derive_seed(seed, 0x0AC1E);
  parallel_for(blocks, threads, [&](std::size_t b) {
    Rng rng = make_rng(base, b);
    std::size_t count = std::min(kBlock, m - b * kBlock);
    Moments mo;
    for (std::size_t r = 0; r < count; ++r) {
      double v = simulate_community(dgp, rng, &intervention).y_c_mean;
      mo.n += 1.0;
      double delta = v - mo.mean;
      mo.mean += delta / mo.n;
      mo.m2 += delta * (v - mo.mean);
    }
    parts[b] = mo;
  });
  Moments total;
  for (const auto& p : parts) {
    if (p.n == 0) continue;
    double n = total.n + p.n;
    double delta = p.mean - total.mean;
    total.mean += delta * p.n / n;
    total.m2 += p.m2 + delta * delta * total.n * p.n / n;
    total.n = n;
  }
  OracleResult r;
  r.psi0 = total.mean;
  r.draws = m;
  r.mc_se = std::sqrt(total.m2 / (total.n - 1.0) / total.n);
  return r;
}

}  // namespace hiertmle
