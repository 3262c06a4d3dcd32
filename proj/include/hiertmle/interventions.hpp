#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hiertmle/density.hpp"
#include "hiertmle/random.hpp"

namespace hiertmle {

enum class InterventionKind { Static, Shift, TruncatedShift, Table };

std::string_view to_string(InterventionKind k);
InterventionKind intervention_kind_from_string(std::string_view s);

/// nu(e, w) = intercept + sum_k e_coef[k] * e_{k+1} + sum_k w_coef[k] * w_{k+1}.
/// The e coefficients skip the community size stored in e[0].
struct ShiftFunction {
  double intercept = 0.0;
  std::vector<double> e_coef;
  std::vector<double> w_coef;

  double operator()(std::span<const double> e, std::span<const double> w) const;
  bool is_constant() const { return e_coef.empty() && w_coef.empty(); }
};

struct TableEntry {
  double a = 0.0;
  double prob = 0.0;
};

struct InterventionSpec {
  std::string name;
  InterventionKind kind = InterventionKind::Static;
  double a_star = 0.0;
  ShiftFunction nu;
  /// TruncatedShift lower bound; defaults to the smallest supported exposure.
  std::optional<double> floor;
  /// Stratum key -> distribution; "*" is the fallback stratum.
  std::map<std::string, std::vector<TableEntry>> table;
  /// Index into the stored e vector (0 = n) whose value selects the stratum.
  std::optional<std::size_t> stratum_e_index;

  void validate() const;
  bool needs_reference() const {
    return kind == InterventionKind::Shift || kind == InterventionKind::TruncatedShift;
  }
};

InterventionSpec static_intervention(double a_star, std::string name = {});
InterventionSpec shift_intervention(double nu, std::string name = {});
InterventionSpec truncated_shift_intervention(double nu, std::optional<double> floor = {},
                                              std::string name = {});

/// Reads `stratum_key,a,prob` rows.
std::map<std::string, std::vector<TableEntry>> load_table(const std::filesystem::path& path);
std::map<std::string, std::vector<TableEntry>> parse_table(const std::string& csv_text);

const std::vector<TableEntry>& table_stratum(const InterventionSpec& spec,
                                             std::span<const double> e);

/// Probability placed on a point (hi == lo) or spread uniformly over [lo, hi).
struct GstarAtom {
  double a = 0.0;
  double mass = 0.0;
  double lo = 0.0;
  double hi = 0.0;

  bool is_point() const { return !(hi > lo); }
};

/// g*(.|e, w) at one context. `nodes` give the integration rule and the
/// sampler; `cells` give the density used in clever-covariate ratios.
struct InterventionDistribution {
  bool discrete = false;
  std::vector<GstarAtom> nodes;
  std::vector<GstarAtom> cells;

  double density_at(double a) const;
  double total_mass() const;
  double sample(Rng& rng) const;
};

/// Builds g* at a context. `reference` is the fitted exposure distribution
/// at the same context and is required for shift kinds.
InterventionDistribution build_gstar(const InterventionSpec& spec, const ExposureSupport& support,
                                     const ExposureDistribution* reference,
                                     std::span<const double> e, std::span<const double> w);

/// Community-level g*(a | e, w) using ĝ at features (e, w).
double gstar_density(const InterventionSpec& spec, const ConditionalDensityModel* g_hat, double a,
                     std::span<const double> e, std::span<const double> w);
double gstar_sample(const InterventionSpec& spec, const ConditionalDensityModel* g_hat,
                    std::span<const double> e, std::span<const double> w, Rng& rng);

/// Maps a draw of the natural exposure to the intervened exposure, for
/// generators that know the true mechanism.
double apply_intervention(const InterventionSpec& spec, double a_natural,
                          std::span<const double> e, std::span<const double> w, Rng& rng);

struct PositivitySummary {
  std::vector<std::pair<double, double>> quantiles;  // (level, ratio)
  double max_ratio = 0.0;
  double cap = 50.0;
  std::size_t n_above_cap = 0;
  std::size_t n_low_density = 0;   // ĝ(a_j) < low_density while g*(a_j) > 0
  std::size_t n_zero_density = 0;  // ĝ(a_j) = 0 while g*(a_j) > 0
  std::size_t support_violations = 0;  // g* nodes where ĝ vanishes
  std::vector<double> ratios;
};

PositivitySummary summarize_ratios(std::vector<double> ratios, double cap);

PositivitySummary positivity_diagnostic(const InterventionSpec& spec,
                                        const ConditionalDensityModel& g_hat,
                                        const HierarchicalDataset& data, double cap = 50.0,
                                        double low_density = 1e-4);

}  // namespace hiertmle
