#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hiertmle/density.hpp"
#include "hiertmle/interventions.hpp"
#include "hiertmle/outcome.hpp"

namespace hiertmle {

enum class MarginalizationPlan { EmpiricalPooled, EmpiricalWithin };

std::string_view to_string(MarginalizationPlan p);
MarginalizationPlan marginalization_plan_from_string(std::string_view s);

struct IndividualDensityConfig {
  MarginalizationPlan plan = MarginalizationPlan::EmpiricalPooled;
  std::size_t m_profiles = 200;
  std::size_t exact_limit = 100000;  // base evaluations allowed before sampling profiles
  std::uint64_t seed = 42;
};

/// ĝ_I(a | e, w_i): the community-level density with the W summary rebuilt
/// as alpha_i w_i + (1 - alpha_i) m, averaged over profiles m of the other
/// individuals' covariates. A profile is the leave-one-out alpha-weighted
/// mean of a community's W rows.
class IndividualDensityModel {
 public:
  IndividualDensityModel(ConditionalDensityModel base, const std::vector<CommunityContext>& contexts,
                         IndividualDensityConfig config = {});

  const ConditionalDensityModel& base() const { return base_; }
  const IndividualDensityConfig& config() const { return config_; }
  bool exact() const { return exact_; }
  std::size_t profiles_per_individual() const;
  const std::vector<std::string>& warnings() const { return warnings_; }

  /// Marginalized cell masses for individual i of community j.
  std::vector<double> masses(const CommunityContext& ctx, std::size_t j, std::size_t i) const;
  ExposureDistribution distribution(const CommunityContext& ctx, std::size_t j,
                                    std::size_t i) const;
  double density_at(double a, const CommunityContext& ctx, std::size_t j, std::size_t i) const;
  /// Monte Carlo standard error of ĝ_I(a | ...) when profiles are sampled; 0 when exact.
  double mc_standard_error(double a, const CommunityContext& ctx, std::size_t j,
                           std::size_t i) const;

 private:
  const std::vector<std::vector<double>>& profiles_for(std::size_t j) const;
  std::vector<double> summary(std::span<const double> w_i, double alpha_i,
                              std::span<const double> profile) const;

  ConditionalDensityModel base_;
  IndividualDensityConfig config_;
  bool exact_ = true;
  std::vector<std::vector<double>> pooled_;
  std::vector<std::vector<std::vector<double>>> within_;
  std::vector<std::string> warnings_;
};

/// Leave-one-out alpha-weighted mean of the W rows other than i.
std::vector<double> leave_one_out_mean(const CommunityContext& ctx, std::size_t i);

/// g*_I at individual i: the intervention applied to ĝ_I with (e, w_i) as context.
InterventionDistribution individual_gstar(const InterventionSpec& spec,
                                          const IndividualDensityModel& model,
                                          const CommunityContext& ctx, std::size_t j,
                                          std::size_t i);

}  // namespace hiertmle
