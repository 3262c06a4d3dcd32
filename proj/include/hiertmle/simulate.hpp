#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hiertmle/data_model.hpp"
#include "hiertmle/interventions.hpp"

namespace hiertmle {

enum class CovariateDist { Normal, Uniform };
enum class ExposureFamily { Bernoulli, Normal, Binomial };
enum class OutcomeFamily { Bernoulli, Gaussian };
enum class OutcomeLink { Logit, Identity };

/// Normal(p1 = mean, p2 = sd) or Uniform(p1 = lo, p2 = hi).
struct CovariateLaw {
  CovariateDist dist = CovariateDist::Normal;
  double p1 = 0.0;
  double p2 = 1.0;
};

/// Declarative structural equations for a hierarchical data-generating process.
///   E_s ~ e_laws[s]
///   W_ik = w_intercept[k] + Σ_s w_gamma[k][s] E_s + w_sd[k] (√ρ U_jk + √(1−ρ) U_jik)
///   A    ~ family(a_intercept + a_e·E + a_w·W̄ + confounding·U_c)
///   Y_i  ~ family(link⁻¹(y_intercept + y_a A + y_e·E + y_w·W_i + y_interference·W̄_{−i}
///                        + U_re + y_confounding·U_c + contagion·Ȳ⁰_{−i}))
/// where W̄ is the community mean, U_re ~ N(0, y_re_sd²), U_c ~ N(0, 1) and
/// Ȳ⁰_{−i} is the mean of a first-round outcome draw of the other members.
struct DGPSpec {
  std::size_t communities = 200;
  std::size_t n_min = 30;
  std::size_t n_max = 30;
  std::vector<CovariateLaw> e_laws{CovariateLaw{}};

  std::size_t w_dim = 1;
  std::vector<double> w_intercept{0.0};
  std::vector<std::vector<double>> w_gamma{{0.5}};
  std::vector<double> w_sd{1.0};
  double rho = 0.0;

  ExposureFamily a_family = ExposureFamily::Bernoulli;
  double a_intercept = 0.0;
  std::vector<double> a_e{0.0};
  std::vector<double> a_w{0.0};
  double a_sd = 1.0;
  int a_trials = 3;
  double a_confounding = 0.0;

  OutcomeFamily y_family = OutcomeFamily::Bernoulli;
  OutcomeLink y_link = OutcomeLink::Logit;
  double y_intercept = 0.0;
  double y_a = 0.0;
  std::vector<double> y_e{0.0};
  std::vector<double> y_w{0.0};
  std::vector<double> y_interference{};
  double y_re_sd = 0.0;
  double y_confounding = 0.0;
  double y_contagion = 0.0;
  double y_sd = 0.1;
  OutcomeBounds bounds{0.0, 1.0};

  std::uint64_t seed = 42;

  void validate() const;
};

/// Named presets: "well_specified", "confounded", "linear", "continuous_shift".
DGPSpec dgp_preset(const std::string& name);
std::vector<std::string> dgp_preset_names();

/// Draws a dataset; community j uses its own seeded stream.
HierarchicalDataset generate(const DGPSpec& dgp);

/// Draws one community. With an intervention the natural exposure is
/// replaced by the intervened one before outcomes are generated.
struct SimulatedCommunity {
  Community community;
  double y_c_mean = 0.0;  // E[Y^c | E, W, A, U] when available, else the realized Y^c
};

SimulatedCommunity simulate_community(const DGPSpec& dgp, Rng& rng,
                                      const InterventionSpec* intervention = nullptr);

struct OracleResult {
  double psi0 = 0.0;
  double mc_se = 0.0;
  std::size_t draws = 0;
};

/// Monte Carlo value of E[Y^c] under the intervention, on the natural outcome
/// scale, from the true structural equations. Blocks of communities are
/// seeded by block index and merged in order, so results do not depend on
/// the thread count.
OracleResult oracle_psi(const DGPSpec& dgp, const InterventionSpec& intervention, std::size_t m,
                        std::uint64_t seed, std::size_t threads = 1);

}  // namespace hiertmle
