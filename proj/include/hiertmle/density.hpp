#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hiertmle/data_model.hpp"
#include "hiertmle/glm.hpp"
#include "hiertmle/random.hpp"

namespace hiertmle {

enum class ExposureType { Binary, Categorical, Continuous };
enum class BinStrategy { EqualWidth, EqualMass, DenbyMallows };

std::string_view to_string(ExposureType t);
std::string_view to_string(BinStrategy s);
ExposureType exposure_type_from_string(std::string_view s);
BinStrategy bin_strategy_from_string(std::string_view s);

/// Cutoffs delta_1 < ... < delta_{K+1}; bin k is [delta_k, delta_{k+1}).
struct BinGrid {
  std::vector<double> cutoffs;
  BinStrategy strategy = BinStrategy::EqualWidth;

  std::size_t bins() const { return cutoffs.empty() ? 0 : cutoffs.size() - 1; }
  double width(std::size_t k) const { return cutoffs[k + 1] - cutoffs[k]; }
  double midpoint(std::size_t k) const { return 0.5 * (cutoffs[k] + cutoffs[k + 1]); }
  std::optional<std::size_t> bin_of(double a) const;
};

/// Builds K bins spanning the observed values. EqualWidth uses uniform
/// cutoffs over [min, max + ulp]; EqualMass uses empirical quantiles with
/// tied cutoffs collapsed; DenbyMallows cuts the curve that blends the
/// rescaled value and rescaled rank with equal weight.
BinGrid make_grid(std::span<const double> a_values, std::size_t k, BinStrategy strategy);

/// max(2, floor(n^(1/3))) capped at 20.
std::size_t default_bin_count(std::size_t n);

ExposureType detect_exposure_type(std::span<const double> a_values);

/// Cells over which the exposure distribution is represented: bins of a
/// grid for continuous exposures, the observed levels for discrete ones.
class ExposureSupport {
 public:
  static std::shared_ptr<const ExposureSupport> continuous(BinGrid grid);
  static std::shared_ptr<const ExposureSupport> discrete(ExposureType type,
                                                         std::vector<double> levels);

  ExposureType type() const { return type_; }
  bool is_discrete() const { return type_ != ExposureType::Continuous; }
  std::size_t size() const;
  std::optional<std::size_t> cell_of(double a) const;
  /// Bandwidth of a bin; 1 for discrete levels (counting measure).
  double width(std::size_t k) const;
  /// Bin midpoint or level value.
  double point(std::size_t k) const;
  double lower() const;
  double upper() const;
  const BinGrid& grid() const { return grid_; }
  const std::vector<double>& levels() const { return levels_; }

 private:
  ExposureType type_ = ExposureType::Continuous;
  BinGrid grid_;
  std::vector<double> levels_;
};

/// A conditional exposure distribution at one covariate context, as cell
/// masses on a support. Continuous densities are piecewise constant.
struct ExposureDistribution {
  std::shared_ptr<const ExposureSupport> support;
  std::vector<double> mass;

  /// Density w.r.t. Lebesgue (continuous) or counting measure (discrete);
  /// 0 outside the support.
  double density_at(double a) const;
  /// Probability of [lo, hi) (continuous) or of levels in [lo, hi) (discrete).
  double mass_between(double lo, double hi) const;
  double sample(Rng& rng) const;
};

/// Long-format at-risk rows: observation j contributes rows k = 0..S(a_j)
/// with event = 1 only on the last.
struct LongFormat {
  std::vector<std::size_t> observation;
  std::vector<std::size_t> bin;
  std::vector<double> event;
};

LongFormat build_long_format(std::span<const std::size_t> bin_index, std::size_t bins);

/// Pooled hazard regression of the bin-event indicators. Coefficients are
/// laid out as [bin intercepts (K-1)] [covariate slopes] [bin x covariate
/// slopes for bins 2..K-1]. Bins whose risk set is empty or degenerate in
/// the training data carry a fixed hazard instead of a fitted intercept.
struct HazardModel {
  Candidate candidate = Candidate::Intercept;
  std::size_t bins = 1;
  std::size_t feature_dim = 0;
  std::vector<std::size_t> active;           // feature columns entering the model
  Eigen::VectorXd beta;
  std::vector<std::optional<double>> fixed;  // size K-1
  double clip = 1e-6;

  /// K hazards at a context; the last reachable bin has hazard 1.
  std::vector<double> hazards(std::span<const double> features) const;
};

std::vector<double> masses_from_hazards(const std::vector<double>& hazards);

struct SelectionSummary {
  Candidate selected = Candidate::Intercept;
  std::vector<std::pair<Candidate, double>> cv_risk;
  bool fallback = false;
  std::string note;
};

struct DensityConfig {
  std::optional<std::size_t> k_bins;
  BinStrategy strategy = BinStrategy::EqualWidth;
  std::vector<Candidate> candidates = all_candidates();
  std::size_t cv_folds = 5;
  double hazard_clip = 1e-6;
  std::optional<ExposureType> exposure_type;
  std::uint64_t seed = 42;
};

class ConditionalDensityModel {
 public:
  ConditionalDensityModel(std::shared_ptr<const ExposureSupport> support, HazardModel hazard,
                          SelectionSummary selection = {});

  /// Covariate-free model with the given cell masses (e.g. a known design
  /// probability or a deliberately wrong density).
  static ConditionalDensityModel fixed(std::shared_ptr<const ExposureSupport> support,
                                       const std::vector<double>& masses, std::size_t feature_dim,
                                       double clip = 1e-6);

  const ExposureSupport& support() const { return *support_; }
  const std::shared_ptr<const ExposureSupport>& support_ptr() const { return support_; }
  ExposureType exposure_type() const { return support_->type(); }
  std::size_t feature_dim() const { return hazard_.feature_dim; }
  const HazardModel& hazard() const { return hazard_; }
  const SelectionSummary& selection() const { return selection_; }

  std::vector<double> masses(std::span<const double> features) const;
  ExposureDistribution distribution(std::span<const double> features) const;
  /// Piecewise-constant density; 0 outside the support.
  double density_at(double a, std::span<const double> features) const;

 private:
  std::shared_ptr<const ExposureSupport> support_;
  HazardModel hazard_;
  SelectionSummary selection_;
};

/// Fits one hazard candidate on the observations flagged in `use`.
/// Throws SeparationError when the Newton iterations diverge.
HazardModel fit_hazard_candidate(const Eigen::MatrixXd& features,
                                 std::span<const std::size_t> bin_index, std::size_t bins,
                                 Candidate candidate, double clip,
                                 const std::vector<bool>& use);

/// Discrete cross-validated selection over `candidates`, then a refit of
/// the winner on all rows. Falls back to the bin-intercept model if the
/// winner cannot be fitted.
HazardModel fit_hazards(const Eigen::MatrixXd& features, std::span<const std::size_t> bin_index,
                        std::size_t bins, const std::vector<Candidate>& candidates,
                        std::size_t cv_folds, double clip, std::uint64_t seed,
                        SelectionSummary* summary = nullptr);

ConditionalDensityModel fit_density(std::span<const double> a, const Eigen::MatrixXd& features,
                                    const DensityConfig& config);

std::shared_ptr<const ExposureSupport> make_support(std::span<const double> a,
                                                    const DensityConfig& config);

/// Community-level conditioning vector: (e, alpha-weighted W summary).
std::vector<double> exposure_features(std::span<const double> e, std::span<const double> w);
Eigen::MatrixXd exposure_feature_matrix(const HierarchicalDataset& data);

}  // namespace hiertmle
