#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hiertmle {

/// Known range [lo, hi] of individual outcomes. Estimation runs on outcomes
/// mapped to [0, 1]; estimates are mapped back with `unscale_estimate`.
struct OutcomeBounds {
  double lo = 0.0;
  double hi = 1.0;

  double width() const { return hi - lo; }
  double scale(double y) const { return (y - lo) / (hi - lo); }
  double unscale(double v) const { return lo + (hi - lo) * v; }
  void validate() const;
};

struct IndividualRecord {
  std::vector<double> w;  // p individual-level baseline covariates
  double y = 0.0;         // outcome on the natural scale
};

/// One community. `e[0]` always holds the community size n; the remaining
/// entries are the community-level covariates e_1..e_S.
struct Community {
  std::string id;
  std::vector<double> e;
  double a = 0.0;
  std::vector<IndividualRecord> individuals;
  std::vector<double> alpha;

  std::size_t size() const { return individuals.size(); }
};

struct CommunityOutcome {
  double y_c = 0.0;
};

/// Immutable J-community dataset. The constructor enforces every invariant
/// (J >= 2, n in e matches the individual count, shared dimensions, weights
/// nonnegative and summing to one, outcomes finite and within bounds).
class HierarchicalDataset {
 public:
  HierarchicalDataset(std::vector<Community> communities, OutcomeBounds bounds);

  const std::vector<Community>& communities() const { return communities_; }
  const Community& community(std::size_t j) const { return communities_[j]; }
  std::size_t size() const { return communities_.size(); }
  std::size_t e_dim() const { return e_dim_; }
  std::size_t w_dim() const { return w_dim_; }
  const OutcomeBounds& bounds() const { return bounds_; }
  std::size_t total_individuals() const { return total_individuals_; }
  bool constant_community_size() const;

  /// Y^c_j on the [0, 1] scale.
  const std::vector<double>& community_outcomes() const { return y_c_; }
  /// alpha-weighted column means of the W matrix of community j.
  const std::vector<double>& w_summary(std::size_t j) const { return w_summary_[j]; }
  double scaled_y(std::size_t j, std::size_t i) const {
    return bounds_.scale(communities_[j].individuals[i].y);
  }
  std::vector<double> exposures() const;

  HierarchicalDataset with_bounds(OutcomeBounds bounds) const;

 private:
  std::vector<Community> communities_;
  OutcomeBounds bounds_;
  std::size_t e_dim_ = 0;
  std::size_t w_dim_ = 0;
  std::size_t total_individuals_ = 0;
  std::vector<double> y_c_;
  std::vector<std::vector<double>> w_summary_;
};

CommunityOutcome community_outcome(const Community& c, const OutcomeBounds& bounds);

struct NaturalScaleEstimate {
  double psi = 0.0;
  double se = 0.0;
};

NaturalScaleEstimate unscale_estimate(double psi_scaled, double se_scaled,
                                      const OutcomeBounds& bounds);

/// Empirical outcome range with a guard for constant outcomes.
OutcomeBounds empirical_bounds(const std::vector<Community>& communities);

struct DatasetSchema {
  std::optional<OutcomeBounds> bounds;
};

/// Reads the per-individual CSV layout:
///   community_id, a, [n], e_1..e_S, w_1..w_p, y[, alpha]
/// Rows of one community need not be contiguous. A missing alpha column
/// gives alpha = 1/N_j. An `n` column, when present, must match the row count.
HierarchicalDataset load_dataset(const std::filesystem::path& path,
                                 const DatasetSchema& schema = {});
HierarchicalDataset parse_dataset(const std::string& csv_text,
                                  const DatasetSchema& schema = {});

void write_dataset(const std::filesystem::path& path, const HierarchicalDataset& data);
std::string format_dataset_csv(const HierarchicalDataset& data);

/// For single-individual datasets: moves the W columns into E so that
/// (E, W) = E. Throws InvariantError if any community has N_j != 1.
HierarchicalDataset collapse_single_individual(const HierarchicalDataset& data);

}  // namespace hiertmle
