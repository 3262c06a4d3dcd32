#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "hiertmle/individual_g.hpp"
#include "hiertmle/tmle.hpp"

using namespace hiertmle;
using testutil::community;

namespace {

// Binary A with P(A=1 | e, w̄) = expit(0.5 e + w̄); W_i iid N(0, 1) inside communities.
HierarchicalDataset binary_mean_w(std::size_t j, std::size_t n, std::uint64_t seed) {
  auto rng = make_rng(seed, 0);
  std::normal_distribution<double> z(0, 1);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<Community> cs;
  for (std::size_t k = 0; k < j; ++k) {
    double e1 = z(rng);
    std::vector<std::vector<double>> w(n);
    double wbar = 0.0;
    for (auto& row : w) {
      row = {z(rng)};
      wbar += row[0] / static_cast<double>(n);
    }
    double a = u(rng) < expit(0.5 * e1 + wbar) ? 1.0 : 0.0;
    std::vector<double> y(n, 0.5);
    cs.push_back(community("c" + std::to_string(k), a, {e1}, w, y));
  }
  return HierarchicalDataset(std::move(cs), {0.0, 1.0});
}

ConditionalDensityModel fit_g(const HierarchicalDataset& d) {
  DensityConfig cfg;
  cfg.candidates = {Candidate::MainTerms};
  auto a = d.exposures();
  return fit_density(a, exposure_feature_matrix(d), cfg);
}

// Continuous A with a shift intervention for the ratio checks.
HierarchicalDataset continuous_a(std::size_t j, std::size_t n, std::uint64_t seed) {
  auto rng = make_rng(seed, 0);
  std::normal_distribution<double> z(0, 1);
  std::vector<Community> cs;
  for (std::size_t k = 0; k < j; ++k) {
    double e1 = z(rng);
    std::vector<std::vector<double>> w(n);
    double wbar = 0.0;
    for (auto& row : w) {
      row = {z(rng)};
      wbar += row[0] / static_cast<double>(n);
    }
    double a = 0.5 * e1 + wbar + z(rng);
    std::vector<double> y(n, 0.5);
    cs.push_back(community("c" + std::to_string(k), a, {e1}, w, y));
  }
  return HierarchicalDataset(std::move(cs), {0.0, 1.0});
}

}  // namespace

TEST_CASE("single individual communities reduce to the community density") {
  auto d = binary_mean_w(150, 1, 4);
  auto g = fit_g(d);
  auto ctx = build_contexts(d);
  IndividualDensityModel gi(g, ctx);
  for (std::size_t j = 0; j < d.size(); ++j) {
    auto mi = gi.masses(ctx[j], j, 0);
    auto mc = g.masses(exposure_features(d.community(j).e, d.w_summary(j)));
    CHECK(mi == mc);
  }
}

TEST_CASE("identical W rows leave the density unchanged") {
  auto base = binary_mean_w(150, 4, 5);
  std::vector<Community> cs = base.communities();
  for (auto& c : cs) {
    for (auto& ind : c.individuals) ind.w = {0.25 * c.e[1]};
  }
  HierarchicalDataset d(cs, {0, 1});
  auto g = fit_g(d);
  auto ctx = build_contexts(d);
  IndividualDensityConfig cfg;
  cfg.plan = MarginalizationPlan::EmpiricalWithin;
  IndividualDensityModel gi(g, ctx, cfg);
  for (std::size_t j = 0; j < d.size(); j += 7) {
    auto mi = gi.masses(ctx[j], j, 2);
    auto mc = g.masses(exposure_features(d.community(j).e, d.w_summary(j)));
    for (std::size_t k = 0; k < mc.size(); ++k) CHECK(std::abs(mi[k] - mc[k]) <= 1e-14);
  }
}

TEST_CASE("pooled marginalization equals brute-force averaging") {
  auto d = binary_mean_w(200, 5, 6);
  auto g = fit_g(d);
  auto ctx = build_contexts(d);
  IndividualDensityConfig cfg;
  cfg.exact_limit = 10'000'000;
  IndividualDensityModel gi(g, ctx, cfg);
  REQUIRE(gi.exact());

  for (std::size_t j : {0u, 17u, 123u}) {
    for (std::size_t i : {0u, 3u}) {
      const double alpha = ctx[j].alpha[i];
      const auto& wi = ctx[j].w_rows[i];
      double brute = 0.0, count = 0.0;
      for (std::size_t l = 0; l < d.size(); ++l) {
        for (std::size_t k = 0; k < ctx[l].w_rows.size(); ++k) {
          double others = 0.0;
          for (std::size_t m = 0; m < ctx[l].w_rows.size(); ++m) {
            if (m != k) others += ctx[l].w_rows[m][0] / 4.0;
          }
          std::vector<double> s{alpha * wi[0] + (1 - alpha) * others};
          brute += g.masses(exposure_features(ctx[j].e, s))[1];
          count += 1.0;
        }
      }
      CHECK(std::abs(gi.masses(ctx[j], j, i)[1] - brute / count) <= 1e-10);

      // Monte Carlo integral of the fitted density over the true law of the other members' W.
      auto rng = make_rng(77, j * 10 + i);
      std::normal_distribution<double> z(0, 1);
      double truth = 0.0;
      const int draws = 20000;
      for (int t = 0; t < draws; ++t) {
        double wbar = wi[0] / 5.0;
        for (int m = 0; m < 4; ++m) wbar += z(rng) / 5.0;
        std::vector<double> s{wbar};
        truth += g.masses(exposure_features(ctx[j].e, s))[1] / draws;
      }
      CHECK(std::abs(gi.masses(ctx[j], j, i)[1] - truth) < 0.02);
    }
  }
}

TEST_CASE("individual clever covariate") {
  auto d = continuous_a(200, 4, 8);
  DensityConfig dcfg;
  dcfg.k_bins = 8;
  dcfg.candidates = {Candidate::MainTerms};
  auto a = d.exposures();
  auto g = fit_density(a, exposure_feature_matrix(d), dcfg);
  auto ctx = build_contexts(d);
  IndividualDensityModel gi(g, ctx);

  SUBCASE("g* equal to the marginal density gives one") {
    auto spec = shift_intervention(0.0);
    for (std::size_t j = 0; j < 20; ++j) {
      auto gs = individual_gstar(spec, gi, ctx[j], j, 1);
      double ghat = gi.density_at(d.community(j).a, ctx[j], j, 1);
      CHECK(clever_covariate(gs.density_at(d.community(j).a), ghat, 1e9).h ==
            doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  SUBCASE("shift ratio equals the ratio of marginalized bin masses") {
    auto spec = shift_intervention(0.3);
    const auto& support = g.support();
    for (std::size_t j = 0; j < 20; ++j) {
      double aj = d.community(j).a;
      auto m = gi.masses(ctx[j], j, 2);
      auto own = support.cell_of(aj);
      auto src = support.cell_of(aj - 0.3);
      REQUIRE(own.has_value());
      double expected = src ? (m[*src] / support.width(*src)) / (m[*own] / support.width(*own)) : 0.0;
      auto gs = individual_gstar(spec, gi, ctx[j], j, 2);
      double h = gs.density_at(aj) / gi.density_at(aj, ctx[j], j, 2);
      CHECK(std::abs(h - expected) <= 1e-12 * std::max(1.0, expected));
    }
  }
}

TEST_CASE("single individual H equals community H") {
  auto d = continuous_a(100, 1, 9);
  DensityConfig dcfg;
  dcfg.k_bins = 6;
  auto a = d.exposures();
  auto g = fit_density(a, exposure_feature_matrix(d), dcfg);
  auto ctx = build_contexts(d);
  IndividualDensityModel gi(g, ctx);
  auto spec = shift_intervention(0.4);
  for (std::size_t j = 0; j < d.size(); ++j) {
    const auto& c = d.community(j);
    double hc = gstar_density(spec, &g, c.a, c.e, d.w_summary(j)) / g.density_at(c.a, exposure_features(c.e, d.w_summary(j)));
    double hi = individual_gstar(spec, gi, ctx[j], j, 0).density_at(c.a) / gi.density_at(c.a, ctx[j], j, 0);
    CHECK(hi == hc);
  }
}

TEST_CASE("varying community size is reported") {
  std::vector<Community> cs{community("a", 0, {}, {{0.0}, {1.0}}, {0, 1}),
                            community("b", 1, {}, {{0.5}}, {1}),
                            community("c", 1, {}, {{0.2}, {0.4}, {0.3}}, {1, 0, 0})};
  HierarchicalDataset d(cs, {0, 1});
  auto support = ExposureSupport::discrete(ExposureType::Binary, {0, 1});
  auto g = ConditionalDensityModel::fixed(support, {0.5, 0.5}, d.e_dim() + d.w_dim());
  IndividualDensityModel gi(g, build_contexts(d));
  REQUIRE(gi.warnings().size() == 1);
  CHECK(gi.warnings()[0].find("constant") != std::string::npos);
}

TEST_CASE("sampled profiles report a Monte Carlo error") {
  auto d = continuous_a(300, 6, 10);
  DensityConfig dcfg;
  dcfg.k_bins = 6;
  auto a = d.exposures();
  auto g = fit_density(a, exposure_feature_matrix(d), dcfg);
  auto ctx = build_contexts(d);
  IndividualDensityConfig cfg;
  cfg.m_profiles = 50;
  IndividualDensityModel gi(g, ctx, cfg);
  CHECK_FALSE(gi.exact());
  CHECK(gi.profiles_per_individual() == 50);
  double sum = 0.0;
  for (double v : gi.masses(ctx[0], 0, 0)) sum += v;
  CHECK(std::abs(sum - 1.0) <= 1e-9);
  CHECK(gi.mc_standard_error(d.community(0).a, ctx[0], 0, 0) > 0.0);
}
