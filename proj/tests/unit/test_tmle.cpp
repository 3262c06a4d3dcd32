#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "hiertmle/errors.hpp"
#include "hiertmle/inference.hpp"
#include "hiertmle/simulate.hpp"
#include "hiertmle/tmle.hpp"

using namespace hiertmle;
using testutil::community;

namespace {

struct Fitted {
  HierarchicalDataset data;
  std::vector<CommunityContext> ctx;
  ConditionalDensityModel g;
  OutcomeModel q;
};

Fitted saturated_binary(std::size_t j, std::uint64_t seed) {
  auto d = testutil::binary_cells(j, 5, seed);
  auto ctx = build_contexts(d);
  DensityConfig dcfg;
  dcfg.candidates = {Candidate::MainTerms};
  auto a = d.exposures();
  auto g = fit_density(a, exposure_feature_matrix(d), dcfg);
  OutcomeConfig ocfg;
  ocfg.candidates = {Candidate::Interactions};
  auto q = fit_initial_outcome(d, ctx, ocfg);
  return {d, ctx, g, q};
}

Fitted continuous_fit(std::size_t j, std::size_t k_bins, std::uint64_t seed) {
  auto dgp = dgp_preset("continuous_shift");
  dgp.communities = j;
  dgp.n_min = dgp.n_max = 10;
  dgp.seed = seed;
  auto d = generate(dgp);
  auto ctx = build_contexts(d);
  DensityConfig dcfg;
  dcfg.k_bins = k_bins;
  dcfg.candidates = {Candidate::MainTerms};
  auto a = d.exposures();
  auto g = fit_density(a, exposure_feature_matrix(d), dcfg);
  OutcomeConfig ocfg;
  ocfg.level = OutcomeLevel::PooledIndividual;
  ocfg.candidates = {Candidate::MainTerms};
  auto q = fit_initial_outcome(d, ctx, ocfg);
  return {d, ctx, g, q};
}

double f_q(const OutcomeModel& q, const CommunityContext& ctx, double a) {
  return q.predict_community(ctx, a);
}

}  // namespace

TEST_CASE("clever covariate values") {
  CHECK(clever_covariate(0.3, 0.3, 50).h == 1.0);
  CHECK(clever_covariate(1.0, 0.5, 50).h == 2.0);
  CHECK(clever_covariate(0.0, 0.5, 50).h == 0.0);
  auto capped = clever_covariate(1.0, 1e-4, 50);
  CHECK(capped.h == 50.0);
  CHECK(capped.truncated);
  auto zero = clever_covariate(1.0, 0.0, 50);
  CHECK(zero.zero_density);
  CHECK(zero.h == 50.0);
}

TEST_CASE("static H against a fitted one-half density") {
  auto d = testutil::binary_cells(50, 3, 2);
  auto ctx = build_contexts(d);
  auto support = ExposureSupport::discrete(ExposureType::Binary, {0, 1});
  auto g = ConditionalDensityModel::fixed(support, {0.5, 0.5}, d.e_dim());
  auto q = OutcomeModel::constant(0.4, d.e_dim(), d.w_dim());
  auto p = prepare_community_targeting(d, ctx, g, q, static_intervention(1.0), {});
  for (std::size_t j = 0; j < d.size(); ++j) {
    CHECK(p.units[j].h == doctest::Approx(d.community(j).a == 1.0 ? 2.0 : 0.0).epsilon(1e-12));
  }
}

TEST_CASE("shifted discretized density ratio matches bin lookup") {
  auto f = continuous_fit(300, 10, 3);
  auto spec = shift_intervention(0.5);
  auto p = prepare_community_targeting(f.data, f.ctx, f.g, f.q, spec, {.ratio_cap = 1e12});
  const auto& s = f.g.support();
  for (std::size_t j = 0; j < f.data.size(); ++j) {
    const auto& c = f.data.community(j);
    auto m = f.g.masses(exposure_features(c.e, f.data.w_summary(j)));
    auto own = *s.cell_of(c.a);
    auto src = s.cell_of(c.a - 0.5);
    double expected = src ? (m[*src] / s.width(*src)) / (m[own] / s.width(own)) : 0.0;
    CHECK(std::abs(p.units[j].h - expected) <= 1e-12 * std::max(1.0, expected));
  }
}

TEST_CASE("integration over g*") {
  SUBCASE("static gives Q at a* exactly") {
    auto f = saturated_binary(200, 4);
    auto p = prepare_community_targeting(f.data, f.ctx, f.g, f.q, static_intervention(1.0), {});
    auto t = apply_fluctuation(p, FluctuationFit{});
    for (std::size_t j = 0; j < f.data.size(); ++j) {
      CHECK(t.integral[j] == f.q.predict_community(f.ctx[j], 1.0));
    }
  }
  SUBCASE("two-point sum") {
    std::vector<Community> cs;
    for (int k = 0; k < 20; ++k) {
      double a = k % 2;
      cs.push_back(community("c" + std::to_string(k), a, {}, {}, {a ? 0.8 : 0.2}));
    }
    HierarchicalDataset d(cs, {0, 1});
    auto ctx = build_contexts(d);
    OutcomeConfig ocfg;
    ocfg.loss = OutcomeLoss::SquaredError;
    ocfg.candidates = {Candidate::MainTerms};
    auto q = fit_initial_outcome(d, ctx, ocfg);
    auto support = ExposureSupport::discrete(ExposureType::Binary, {0, 1});
    auto g = ConditionalDensityModel::fixed(support, {0.5, 0.5}, d.e_dim());
    InterventionSpec spec;
    spec.kind = InterventionKind::Table;
    spec.table["*"] = {{0.0, 0.7}, {1.0, 0.3}};
    auto p = prepare_community_targeting(d, ctx, g, q, spec, {});
    auto t = apply_fluctuation(p, FluctuationFit{});
    // Q comes from a least-squares fit with a 1e-8 ridge, hence the tolerance
    CHECK(std::abs(f_q(q, ctx[1], 1.0) - 0.8) <= 1e-8);
    CHECK(std::abs(t.integral[0] - (0.3 * f_q(q, ctx[0], 1.0) + 0.7 * f_q(q, ctx[0], 0.0))) <= 1e-15);
    CHECK(std::abs(t.integral[0] - 0.38) <= 1e-8);
  }
  SUBCASE("bin sum agrees with Monte Carlo") {
    auto f = continuous_fit(200, 20, 5);
    auto spec = shift_intervention(0.5);
    auto pb = prepare_community_targeting(f.data, f.ctx, f.g, f.q, spec, {});
    TargetingConfig mc;
    mc.integration = IntegrationMethod::MonteCarlo;
    mc.mc_draws = 100000;
    mc.mc_seed = 99;
    for (std::size_t j : {0u, 1u, 2u}) {
      std::vector<Community> two{f.data.community(j), f.data.community((j + 1) % f.data.size())};
      HierarchicalDataset sub(two, f.data.bounds());
      auto ctx = build_contexts(sub);
      auto pm = prepare_community_targeting(sub, ctx, f.g, f.q, spec, mc);
      auto tm = apply_fluctuation(pm, FluctuationFit{});
      const auto& nodes = pm.units[0].node_q;
      double mean = 0.0, ss = 0.0;
      for (double v : nodes) mean += v / static_cast<double>(nodes.size());
      for (double v : nodes) ss += (v - mean) * (v - mean);
      double se = std::sqrt(ss / static_cast<double>(nodes.size() - 1) / static_cast<double>(nodes.size()));
      auto tb = apply_fluctuation(pb, FluctuationFit{});
      CHECK(std::abs(tm.integral[0] - tb.integral[j]) <= 3.0 * se);
    }
  }
}

TEST_CASE("fluctuation submodel") {
  CHECK(fluctuate(0.5, 1.0, 0.2, FluctuationVariant::CleverCovariate) ==
        doctest::Approx(0.549834).epsilon(1e-6));
  CHECK(fluctuate(0.5, 3.0, 0.2, FluctuationVariant::WeightedIntercept) ==
        doctest::Approx(0.549834).epsilon(1e-6));
  CHECK(fluctuate(0.37, 2.0, 0.0, FluctuationVariant::CleverCovariate) == 0.37);
}

TEST_CASE("saturated initial fit needs no fluctuation") {
  auto f = saturated_binary(300, 6);
  auto p = prepare_community_targeting(f.data, f.ctx, f.g, f.q, static_intervention(1.0), {});
  auto t = target(p);
  CHECK(t.fluctuation.epsilon == 0.0);
  for (std::size_t j = 0; j < f.data.size(); ++j) CHECK(t.q_star[j] == p.units[j].q);
}

TEST_CASE("targeting solves the score equation") {
  auto f = continuous_fit(200, 8, 7);
  for (auto variant : {FluctuationVariant::CleverCovariate, FluctuationVariant::WeightedIntercept}) {
    for (auto spec : {shift_intervention(0.5), truncated_shift_intervention(0.5), static_intervention(1.0)}) {
      TargetingConfig cfg;
      cfg.variant = variant;
      auto p = prepare_community_targeting(f.data, f.ctx, f.g, f.q, spec, cfg);
      auto t = target(p);
      CHECK(t.fluctuation.converged);
      CHECK(std::abs(t.score_residual) <= 1e-8 * static_cast<double>(f.data.size()));
    }
  }
}

TEST_CASE("constant outcome gives psi equal to the constant") {
  std::vector<Community> cs;
  for (int k = 0; k < 30; ++k) {
    cs.push_back(community("c" + std::to_string(k), 0.1 * k, {0.5 * k}, {}, {0.3, 0.3}));
  }
  HierarchicalDataset d(cs, {0, 1});
  auto ctx = build_contexts(d);
  DensityConfig dcfg;
  dcfg.k_bins = 4;
  auto a = d.exposures();
  auto g = fit_density(a, exposure_feature_matrix(d), dcfg);
  OutcomeConfig ocfg;
  ocfg.candidates = {Candidate::Intercept};
  auto q = fit_initial_outcome(d, ctx, ocfg);
  for (auto spec : {shift_intervention(0.7), static_intervention(1.0), truncated_shift_intervention(1.0)}) {
    auto p = prepare_community_targeting(d, ctx, g, q, spec, {});
    auto t = target(p);
    CHECK(std::abs(estimate_psi(p, t) - 0.3) <= 1e-9);
  }
}

TEST_CASE("g* equal to g-hat with a saturated fit gives the empirical mean") {
  auto f = saturated_binary(400, 8);
  auto p = prepare_community_targeting(f.data, f.ctx, f.g, f.q, shift_intervention(0.0), {});
  auto t = target(p);
  double mean = 0.0;
  for (double y : f.data.community_outcomes()) mean += y / static_cast<double>(f.data.size());
  CHECK(std::abs(estimate_psi(p, t) - mean) <= 1e-6);
}

TEST_CASE("randomized trial recovers the oracle") {
  auto dgp = dgp_preset("well_specified");
  dgp.a_intercept = 0.0;
  dgp.a_e = {0.0};
  dgp.a_w = {0.0};
  dgp.communities = 500;
  dgp.seed = 2024;
  auto d = generate(dgp);
  auto ctx = build_contexts(d);
  auto a = d.exposures();
  DensityConfig dcfg;
  auto g = fit_density(a, exposure_feature_matrix(d), dcfg);
  OutcomeConfig ocfg;
  ocfg.level = OutcomeLevel::PooledIndividual;
  auto q = fit_initial_outcome(d, ctx, ocfg);
  auto spec = static_intervention(1.0);
  auto p = prepare_community_targeting(d, ctx, g, q, spec, {});
  auto t = target(p);
  auto r = make_report(p, t, d.bounds(), "treat", "x");
  auto oracle = oracle_psi(dgp, spec, 200000, 1);
  CHECK(std::abs(r.psi_hat - oracle.psi0) <= 3.0 * std::hypot(r.se, oracle.mc_se));
}

TEST_CASE("targeting errors") {
  auto d = testutil::binary_cells(20, 2, 3);
  auto ctx = build_contexts(d);
  auto support = ExposureSupport::discrete(ExposureType::Binary, {0, 1});
  auto g = ConditionalDensityModel::fixed(support, {0.5, 0.5}, d.e_dim());
  auto q = OutcomeModel::constant(0.4, d.e_dim(), d.w_dim());
  IndividualDensityModel gi(g, ctx);
  CHECK_THROWS_AS(prepare_individual_targeting(d, ctx, gi, q, static_intervention(1.0), {}), ConfigError);
  TargetingConfig bad;
  bad.ratio_cap = 0.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  TargetingProblem empty;
  empty.communities = 2;
  empty.units.resize(2);
  CHECK_THROWS_AS(fit_fluctuation(empty), AllWeightsZero);
}
