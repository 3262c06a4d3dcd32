#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hiertmle/density.hpp"
#include "hiertmle/individual_g.hpp"
#include "hiertmle/interventions.hpp"
#include "hiertmle/outcome.hpp"

namespace hiertmle {

enum class FluctuationVariant { CleverCovariate, WeightedIntercept };
enum class TargetLevel { Community, Individual };
enum class IntegrationMethod { BinSum, MonteCarlo };

std::string_view to_string(FluctuationVariant v);
std::string_view to_string(TargetLevel l);
std::string_view to_string(IntegrationMethod m);
FluctuationVariant fluctuation_variant_from_string(std::string_view s);
TargetLevel target_level_from_string(std::string_view s);
IntegrationMethod integration_method_from_string(std::string_view s);

struct TargetingConfig {
  FluctuationVariant variant = FluctuationVariant::CleverCovariate;
  TargetLevel level = TargetLevel::Community;
  IntegrationMethod integration = IntegrationMethod::BinSum;
  std::size_t mc_draws = 1000;
  std::uint64_t mc_seed = 42;
  double ratio_cap = 50.0;

  void validate() const;
};

struct CleverValue {
  double h = 0.0;
  bool truncated = false;
  bool zero_density = false;
};

/// min(g* / ĝ, cap). A vanishing ĝ with positive g* returns the cap and
/// raises the zero-density flag.
CleverValue clever_covariate(double gstar, double ghat, double cap);

/// One row of the fluctuation regression: a community, or an individual
/// within a community for the individual-level parameter.
struct TargetingUnit {
  std::size_t community = 0;
  double weight = 1.0;
  double y = 0.0;
  double q = 0.5;
  double h = 0.0;
  std::vector<double> node_mass;
  std::vector<double> node_q;
  std::vector<double> node_h;
};

struct TargetingProblem {
  TargetingConfig config;
  std::size_t communities = 0;
  std::vector<TargetingUnit> units;
  std::size_t n_truncated = 0;     // observed-point ratios above the cap
  std::size_t n_zero_density = 0;  // observed points with ĝ = 0 and g* > 0
  std::vector<double> observed_ratios;
};

/// Community-level problem: units are communities, ĝ is evaluated at
/// (e_j, W summary_j), Q̄ᶜ is the outcome model's community prediction.
TargetingProblem prepare_community_targeting(const HierarchicalDataset& data,
                                             const std::vector<CommunityContext>& contexts,
                                             const ConditionalDensityModel& g_hat,
                                             const OutcomeModel& outcome,
                                             const InterventionSpec& gstar,
                                             const TargetingConfig& config);

/// Individual-level problem: units are individuals with weight alpha_{j,i},
/// ĝ_I and g*_I at (e_j, w_{j,i}), and the pooled outcome model.
TargetingProblem prepare_individual_targeting(const HierarchicalDataset& data,
                                              const std::vector<CommunityContext>& contexts,
                                              const IndividualDensityModel& g_hat_i,
                                              const OutcomeModel& outcome,
                                              const InterventionSpec& gstar,
                                              const TargetingConfig& config);

struct FluctuationFit {
  double epsilon = 0.0;
  bool converged = false;
  int iterations = 0;
  std::string method;  // "newton" or "line_search"
};

/// Q̄(ε) for the configured submodel.
double fluctuate(double q, double h, double epsilon, FluctuationVariant variant);

/// Σ_u w_u h_u (y_u − Q̄(ε)_u).
double fluctuation_score(const TargetingProblem& p, double epsilon);
/// Loss minimized by ε̂: Σ w ℓ(y, Q̄(ε)) for the clever covariate submodel,
/// Σ w h ℓ(y, Q̄(ε)) for the weighted intercept submodel.
double fluctuation_loss(const TargetingProblem& p, double epsilon);

FluctuationFit fit_fluctuation(const TargetingProblem& p);

struct TargetedFit {
  FluctuationFit fluctuation;
  std::vector<double> q_star;    // per unit, at the observed exposure
  std::vector<double> integral;  // per unit, ∫ Q̄* g* dμ
  double score_residual = 0.0;
};

TargetedFit apply_fluctuation(const TargetingProblem& p, const FluctuationFit& fit);
TargetedFit target(const TargetingProblem& p);

/// (1/J) Σ_j Σ_{u in j} w_u ∫ Q̄*_u g*_u.
double estimate_psi(const TargetingProblem& p, const TargetedFit& t);

}  // namespace hiertmle
