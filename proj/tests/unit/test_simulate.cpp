#include <doctest.h>

#include <cmath>

#include "hiertmle/errors.hpp"
#include "hiertmle/simulate.hpp"
#include "text_util.hpp"

using namespace hiertmle;

TEST_CASE("generation is deterministic in the seed") {
  auto dgp = dgp_preset("well_specified");
  dgp.communities = 40;
  auto a = format_dataset_csv(generate(dgp));
  auto b = format_dataset_csv(generate(dgp));
  CHECK(a == b);
  dgp.seed += 1;
  CHECK(format_dataset_csv(generate(dgp)) != a);
}

TEST_CASE("coin-flip exposure frequency") {
  DGPSpec dgp;
  dgp.communities = 1000;
  dgp.n_min = dgp.n_max = 2;
  dgp.seed = 5;
  auto d = generate(dgp);
  double p = 0.0;
  for (double a : d.exposures()) p += a / 1000.0;
  CHECK(std::abs(p - 0.5) <= 3.0 * std::sqrt(0.25 / 1000.0));
}

TEST_CASE("within-community correlation exceeds between-community correlation") {
  DGPSpec dgp;
  dgp.communities = 300;
  dgp.n_min = dgp.n_max = 6;
  dgp.w_gamma = {{0.0}};
  dgp.rho = 0.9;
  dgp.seed = 6;
  auto d = generate(dgp);
  // pairs of consecutive individuals within a community vs across neighbouring communities
  double within = 0.0, between = 0.0, ss = 0.0;
  std::size_t n = 0;
  for (std::size_t j = 0; j + 1 < d.size(); ++j) {
    const auto& c = d.community(j);
    const auto& next = d.community(j + 1);
    within += c.individuals[0].w[0] * c.individuals[1].w[0];
    between += c.individuals[0].w[0] * next.individuals[0].w[0];
    ss += c.individuals[0].w[0] * c.individuals[0].w[0];
    ++n;
  }
  CHECK(within / ss > between / ss);
  CHECK(within / ss > 0.8);
}

TEST_CASE("deterministic outcome equal to the exposure") {
  DGPSpec dgp;
  dgp.y_family = OutcomeFamily::Gaussian;
  dgp.y_link = OutcomeLink::Identity;
  dgp.y_a = 1.0;
  dgp.y_sd = 0.0;
  auto r = oracle_psi(dgp, static_intervention(1.0), 10000, 3);
  CHECK(r.psi0 == 1.0);
  CHECK(r.mc_se == 0.0);
}

TEST_CASE("oracle under the natural mechanism matches the plain simulation mean") {
  auto dgp = dgp_preset("continuous_shift");
  auto spec = shift_intervention(0.0);
  auto r = oracle_psi(dgp, spec, 40000, 9);
  auto rng = make_rng(123, 0);
  double s = 0.0;
  const int m = 40000;
  for (int t = 0; t < m; ++t) s += simulate_community(dgp, rng).y_c_mean / m;
  CHECK(std::abs(r.psi0 - s) <= 3.0 * std::sqrt(2.0) * r.mc_se);
}

TEST_CASE("linear shift oracle matches the closed form") {
  DGPSpec dgp;
  dgp.a_family = ExposureFamily::Normal;
  dgp.a_intercept = 0.5;
  dgp.a_sd = 0.2;
  dgp.y_family = OutcomeFamily::Gaussian;
  dgp.y_link = OutcomeLink::Identity;
  dgp.y_intercept = 0.2;
  dgp.y_a = 0.3;
  dgp.y_sd = 0.02;
  dgp.seed = 4;
  auto r = oracle_psi(dgp, shift_intervention(0.5), 100000, 4);
  double closed = 0.2 + 0.3 * (0.5 + 0.5);
  CHECK(std::abs(r.psi0 - closed) <= 3.0 * r.mc_se);
}

TEST_CASE("oracle does not depend on the thread count") {
  auto dgp = dgp_preset("well_specified");
  auto a = oracle_psi(dgp, static_intervention(1.0), 20000, 5, 1);
  auto b = oracle_psi(dgp, static_intervention(1.0), 20000, 5, 3);
  CHECK(a.psi0 == b.psi0);
  CHECK(a.mc_se == b.mc_se);
}

TEST_CASE("spec validation") {
  DGPSpec dgp;
  dgp.communities = 1;
  CHECK_THROWS_AS(dgp.validate(), SpecError);
  CHECK_THROWS_AS(dgp_preset("nope"), SpecError);
  CHECK_THROWS_AS(oracle_psi(DGPSpec{}, static_intervention(1.0), 10, 1), SpecError);
  for (const auto& name : dgp_preset_names()) CHECK_NOTHROW(dgp_preset(name).validate());
}

TEST_CASE("community sizes fall in the requested range") {
  DGPSpec dgp;
  dgp.n_min = 3;
  dgp.n_max = 7;
  dgp.communities = 200;
  auto d = generate(dgp);
  std::size_t lo = 100, hi = 0;
  for (const auto& c : d.communities()) {
    lo = std::min(lo, c.size());
    hi = std::max(hi, c.size());
  }
  CHECK(lo == 3);
  CHECK(hi == 7);
  CHECK(d.total_individuals() >= 600);
}
