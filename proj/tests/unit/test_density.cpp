#include <doctest.h>

#include <cmath>
#include <numeric>

#include "hiertmle/density.hpp"
#include "hiertmle/errors.hpp"

using namespace hiertmle;

namespace {

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }

}  // namespace

TEST_CASE("equal width grid on 0..4") {
  std::vector<double> a{0, 1, 2, 3, 4};
  auto g = make_grid(a, 2, BinStrategy::EqualWidth);
  REQUIRE(g.cutoffs.size() == 3);
  CHECK(g.cutoffs[0] == 0.0);
  CHECK(g.cutoffs[1] == 2.0);
  CHECK(g.cutoffs[2] == std::nextafter(4.0, INFINITY));
  CHECK(g.bin_of(4.0) == std::optional<std::size_t>(1));
  CHECK(g.bin_of(1.999) == std::optional<std::size_t>(0));
  CHECK_FALSE(g.bin_of(-0.1).has_value());
}

TEST_CASE("equal mass grid splits a uniform sample evenly") {
  auto rng = make_rng(11, 0);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> a(10000);
  for (auto& v : a) v = u(rng);
  auto g = make_grid(a, 10, BinStrategy::EqualMass);
  REQUIRE(g.bins() == 10);
  std::vector<double> count(10, 0.0);
  for (double v : a) count[*g.bin_of(v)] += 1.0;
  for (double c : count) CHECK(std::abs(c / 1e4 - 0.1) <= 0.015);
}

TEST_CASE("denby-mallows grid is monotone and covers the data") {
  std::vector<double> a{0, 0.1, 0.2, 0.3, 5, 9, 10};
  auto g = make_grid(a, 3, BinStrategy::DenbyMallows);
  CHECK(g.cutoffs.front() == 0.0);
  CHECK(g.cutoffs.back() > 10.0);
  for (std::size_t k = 1; k < g.cutoffs.size(); ++k) CHECK(g.cutoffs[k] > g.cutoffs[k - 1]);
  for (double v : a) CHECK(g.bin_of(v).has_value());
}

TEST_CASE("constant exposure with several bins is degenerate") {
  std::vector<double> a{2, 2, 2};
  CHECK_THROWS_AS(make_grid(a, 3, BinStrategy::EqualWidth), DegenerateSupport);
}

TEST_CASE("hand-set hazards give chain-rule masses") {
  auto m = masses_from_hazards({0.5, 1.0});
  CHECK(m[0] == 0.5);
  CHECK(m[1] == 0.5);
  auto m3 = masses_from_hazards({0.2, 0.5, 0.3});
  CHECK(m3[0] == doctest::Approx(0.2));
  CHECK(m3[1] == doctest::Approx(0.4));
  CHECK(m3[2] == doctest::Approx(0.4));
}

TEST_CASE("single bin density is one over the bandwidth") {
  std::vector<double> a{0.0, 0.5, 1.5, 2.0};
  Eigen::MatrixXd x(4, 1);
  x << 1, 2, 3, 4;
  DensityConfig cfg;
  cfg.k_bins = 1;
  cfg.cv_folds = 2;
  auto g = fit_density(a, x, cfg);
  REQUIRE(g.support().size() == 1);
  double bw = g.support().width(0);
  std::vector<double> f{7.0};
  CHECK(g.density_at(1.0, f) == doctest::Approx(1.0 / bw).epsilon(1e-12));
  CHECK(g.masses(f)[0] == 1.0);
}

TEST_CASE("binary exposure intercept fit recovers the sample proportion") {
  auto rng = make_rng(5, 0);
  std::bernoulli_distribution b(0.5);
  std::vector<double> a(401);
  for (auto& v : a) v = b(rng) ? 1.0 : 0.0;
  double p = sum(a) / static_cast<double>(a.size());
  Eigen::MatrixXd x(a.size(), 0);
  DensityConfig cfg;
  cfg.candidates = {Candidate::Intercept};
  auto g = fit_density(a, x, cfg);
  CHECK(g.exposure_type() == ExposureType::Binary);
  CHECK(std::abs(g.density_at(1.0, {}) - p) <= 1e-9);
  CHECK(std::abs(g.density_at(0.0, {}) - (1.0 - p)) <= 1e-9);
}

TEST_CASE("all exposures in one bin") {
  // Bins without events carry the clip hazard, so "1" holds to within the clip.
  const double clip = 1e-6;
  std::vector<std::size_t> bins(25, 1);
  Eigen::MatrixXd x(25, 0);
  auto h = fit_hazards(x, bins, 3, {Candidate::Intercept}, 5, clip, 1);
  auto hz = h.hazards({});
  CHECK(hz[0] == clip);
  CHECK(hz[1] == 1.0 - clip);
  auto m = masses_from_hazards(hz);
  CHECK(std::abs(m[1] - 1.0) <= 2 * clip);
  CHECK(std::abs(m[0] + m[1] + m[2] - 1.0) <= 1e-15);
}

TEST_CASE("uniform histogram density near one") {
  auto rng = make_rng(21, 0);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> a(10000);
  for (auto& v : a) v = u(rng);
  Eigen::MatrixXd x(a.size(), 0);
  DensityConfig cfg;
  cfg.k_bins = 10;
  cfg.candidates = {Candidate::Intercept};
  auto g = fit_density(a, x, cfg);
  CHECK(std::abs(g.density_at(0.55, {}) - 1.0) < 0.1);
}

TEST_CASE("more bins track a conditional normal better than two") {
  auto rng = make_rng(8, 0);
  std::normal_distribution<double> z(0, 1);
  const std::size_t n = 10000;
  std::vector<double> a(n);
  Eigen::MatrixXd x(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    x(i, 0) = z(rng);
    a[i] = x(i, 0) + z(rng);
  }
  auto mise = [&](std::size_t k) {
    DensityConfig cfg;
    cfg.k_bins = k;
    cfg.candidates = {Candidate::MainTerms};
    auto g = fit_density(a, x, cfg);
    double total = 0.0;
    const double lo = g.support().lower(), hi = g.support().upper();
    const int pts = 800;
    for (double w : {-1.5, -0.5, 0.0, 0.5, 1.5}) {
      std::vector<double> f{w};
      auto dist = g.distribution(f);
      double ise = 0.0;
      for (int t = 0; t < pts; ++t) {
        double av = lo + (hi - lo) * (t + 0.5) / pts;
        double diff = dist.density_at(av) - normal_pdf(av - w);
        ise += diff * diff * (hi - lo) / pts;
      }
      total += ise;
    }
    return total / 5.0;
  };
  CHECK(mise(20) < mise(2));
}

TEST_CASE("fitted masses are normalized over random contexts") {
  auto rng = make_rng(33, 0);
  std::normal_distribution<double> z(0, 1);
  const std::size_t n = 600;
  std::vector<double> a(n);
  Eigen::MatrixXd x(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    x(i, 0) = z(rng);
    x(i, 1) = z(rng);
    a[i] = 0.5 * x(i, 0) - 0.3 * x(i, 1) + z(rng);
  }
  for (auto strategy : {BinStrategy::EqualWidth, BinStrategy::EqualMass, BinStrategy::DenbyMallows}) {
    DensityConfig cfg;
    cfg.k_bins = 8;
    cfg.strategy = strategy;
    auto g = fit_density(a, x, cfg);
    for (int t = 0; t < 100; ++t) {
      std::vector<double> f{3 * z(rng), 3 * z(rng)};
      auto m = g.masses(f);
      CHECK(std::abs(sum(m) - 1.0) <= 1e-9);
      for (double v : m) CHECK(v >= 0.0);
    }
  }
}

TEST_CASE("fixed masses model returns the given masses") {
  auto support = ExposureSupport::discrete(ExposureType::Binary, {0, 1});
  auto g = ConditionalDensityModel::fixed(support, {0.3, 0.7}, 2);
  std::vector<double> f{1.0, -4.0};
  auto m = g.masses(f);
  CHECK(m[0] == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(m[1] == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(g.density_at(1.0, f) == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(g.density_at(0.5, f) == 0.0);
}

TEST_CASE("categorical support and sampling") {
  auto support = ExposureSupport::discrete(ExposureType::Categorical, {0, 1, 2});
  auto g = ConditionalDensityModel::fixed(support, {0.2, 0.5, 0.3}, 0);
  auto d = g.distribution({});
  CHECK(d.mass_between(0.5, 2.5) == doctest::Approx(0.8));
  auto rng = make_rng(1, 1);
  std::vector<double> counts(3, 0.0);
  for (int t = 0; t < 20000; ++t) counts[static_cast<std::size_t>(d.sample(rng))] += 1.0;
  CHECK(std::abs(counts[1] / 20000 - 0.5) < 0.02);
}

TEST_CASE("exposure type detection") {
  std::vector<double> b{0, 1, 1, 0};
  std::vector<double> c{0, 1, 2, 2};
  std::vector<double> r{0.1, 0.7, 2.3};
  CHECK(detect_exposure_type(b) == ExposureType::Binary);
  CHECK(detect_exposure_type(c) == ExposureType::Categorical);
  CHECK(detect_exposure_type(r) == ExposureType::Continuous);
  CHECK(default_bin_count(1000) == 10);
}

TEST_CASE("long format rows stop at the observed bin") {
  std::vector<std::size_t> bins{0, 2};
  auto lf = build_long_format(bins, 3);
  REQUIRE(lf.bin.size() == 4);
  CHECK(lf.event[0] == 1.0);
  CHECK(lf.observation[1] == 1);
  CHECK(lf.event[1] == 0.0);
  CHECK(lf.event[3] == 1.0);
}
