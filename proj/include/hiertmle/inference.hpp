#pragma once

#include <string>
#include <utility>
#include <vector>

#include "hiertmle/data_model.hpp"
#include "hiertmle/interventions.hpp"
#include "hiertmle/tmle.hpp"

namespace hiertmle {

inline constexpr double kNormalQuantile975 = 1.96;

/// Per-community influence curve values with their outcome and (E, W) parts.
struct EICVector {
  TargetLevel level = TargetLevel::Community;
  std::vector<double> d;
  std::vector<double> d_y;
  std::vector<double> d_ew;

  std::size_t size() const { return d.size(); }
  double mean() const;
};

EICVector eic_values(const TargetingProblem& p, const TargetedFit& t, double psi_hat);

/// Per-unit terms h (y − Q̄*) + ∫Q̄*g* − ψ̂ before alpha-averaging.
std::vector<double> unit_eic_terms(const TargetingProblem& p, const TargetedFit& t,
                                   double psi_hat);

struct WaldSummary {
  double sigma2 = 0.0;
  double variance = 0.0;
  double se = 0.0;
  std::pair<double, double> ci{0.0, 0.0};
};

/// σ̂² = (1/J) Σ D_j², variance = σ̂²/J, CI = ψ̂ ± 1.96 √variance.
WaldSummary variance_and_ci(const std::vector<double>& d, double psi_hat);

struct Diagnostics {
  PositivitySummary positivity;
  std::size_t n_truncated = 0;
  std::size_t n_zero_density = 0;
  SelectionSummary density_selection;
  SelectionSummary outcome_selection;
  bool fluctuation_converged = false;
  int fluctuation_iterations = 0;
  std::string fluctuation_method;
  double score_residual = 0.0;
  double max_clever_covariate = 0.0;
  double marginalization_mc_se = 0.0;
  std::vector<std::string> warnings;
};

struct EstimateReport {
  std::string intervention;
  TargetLevel level = TargetLevel::Community;
  FluctuationVariant variant = FluctuationVariant::CleverCovariate;
  std::size_t communities = 0;
  std::string fingerprint;
  double psi_hat = 0.0;
  double epsilon = 0.0;
  double sigma2 = 0.0;
  double variance = 0.0;
  double se = 0.0;
  std::pair<double, double> ci{0.0, 0.0};
  OutcomeBounds bounds;
  double psi_natural = 0.0;
  double se_natural = 0.0;
  std::pair<double, double> ci_natural{0.0, 0.0};
  EICVector eic;
  Diagnostics diagnostics;
};

/// Fills the estimate, EIC and Wald fields of a report from a targeted fit.
EstimateReport make_report(const TargetingProblem& p, const TargetedFit& t,
                           const OutcomeBounds& bounds, std::string intervention,
                           std::string fingerprint);

struct ContrastReport {
  std::string name;
  std::string first;
  std::string second;
  double delta = 0.0;
  double sigma2 = 0.0;
  double variance = 0.0;
  double se = 0.0;
  std::pair<double, double> ci{0.0, 0.0};
  double delta_natural = 0.0;
  double se_natural = 0.0;
  std::pair<double, double> ci_natural{0.0, 0.0};
};

/// ψ̂₂ − ψ̂₁ with variance from the per-community differences D₂ − D₁.
ContrastReport estimate_contrast(const EstimateReport& first, const EstimateReport& second);

/// Stable fingerprint of a dataset (ids, exposures, outcomes, covariates).
std::string dataset_fingerprint(const HierarchicalDataset& data);

}  // namespace hiertmle
