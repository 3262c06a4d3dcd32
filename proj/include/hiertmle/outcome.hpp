#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hiertmle/data_model.hpp"
#include "hiertmle/density.hpp"
#include "hiertmle/glm.hpp"

namespace hiertmle {

enum class OutcomeLevel { Community, PooledIndividual };
enum class OutcomeLoss { Bernoulli, SquaredError };

std::string_view to_string(OutcomeLevel l);
std::string_view to_string(OutcomeLoss l);
OutcomeLevel outcome_level_from_string(std::string_view s);
OutcomeLoss outcome_loss_from_string(std::string_view s);

/// neighbors[j][i] lists the within-community positions of F_i \ {i}.
using NeighborMap = std::vector<std::vector<std::vector<std::size_t>>>;

/// Reads `community_id,i,l` rows (0-based positions in input order) and
/// checks them against the dataset.
NeighborMap load_neighbor_map(const std::filesystem::path& path, const HierarchicalDataset& data);
NeighborMap parse_neighbor_map(const std::string& csv_text, const HierarchicalDataset& data);

/// Everything the outcome and exposure regressions need about one community.
struct CommunityContext {
  std::vector<double> e;
  std::vector<double> w_summary;
  std::vector<std::vector<double>> w_rows;          // W_i as observed
  std::vector<std::vector<double>> outcome_rows;    // W_i, optionally with neighbor means appended
  std::vector<double> alpha;
};

std::vector<CommunityContext> build_contexts(const HierarchicalDataset& data,
                                             const NeighborMap* neighbors = nullptr);

struct OutcomeConfig {
  OutcomeLevel level = OutcomeLevel::Community;
  OutcomeLoss loss = OutcomeLoss::Bernoulli;
  std::vector<Candidate> candidates = all_candidates();
  std::size_t cv_folds = 5;
  std::uint64_t seed = 42;
  double clip = 1e-6;
};

/// Full feature vector before column selection:
///   intercept: [1]
///   main:      [1, a, e, w]
///   interactions: [1, a, e, w, a*e, a*w]
std::vector<double> outcome_features(Candidate c, double a, std::span<const double> e,
                                     std::span<const double> w);

class OutcomeModel {
 public:
  OutcomeModel() = default;

  OutcomeLevel level() const { return level_; }
  OutcomeLoss loss() const { return loss_; }
  Candidate candidate() const { return candidate_; }
  const SelectionSummary& selection() const { return selection_; }
  /// Coefficients on the retained columns, in full-feature order.
  const Eigen::VectorXd& coefficients() const { return beta_; }
  const std::vector<std::size_t>& active_columns() const { return active_; }
  std::size_t e_dim() const { return e_dim_; }
  std::size_t w_dim() const { return w_dim_; }

  /// Single-row prediction: w is the W summary (community level) or one
  /// individual's outcome row (pooled level).
  double predict(double a, std::span<const double> e, std::span<const double> w) const;
  /// Community-level mean: direct at community level, alpha-weighted mean of
  /// individual predictions at pooled level.
  double predict_community(const CommunityContext& ctx, double a) const;
  std::vector<double> predict_individuals(const CommunityContext& ctx, double a) const;

  static OutcomeModel constant(double value, std::size_t e_dim, std::size_t w_dim,
                               OutcomeLevel level = OutcomeLevel::Community);

 private:
  friend OutcomeModel fit_outcome_candidate(const Eigen::MatrixXd&, const Eigen::VectorXd&,
                                            const Eigen::VectorXd&, const std::vector<bool>&,
                                            Candidate, const OutcomeConfig&, std::size_t,
                                            std::size_t);
  friend OutcomeModel fit_initial_outcome(const HierarchicalDataset&,
                                          const std::vector<CommunityContext>&,
                                          const OutcomeConfig&);

  OutcomeLevel level_ = OutcomeLevel::Community;
  OutcomeLoss loss_ = OutcomeLoss::Bernoulli;
  Candidate candidate_ = Candidate::Intercept;
  std::vector<std::size_t> active_;
  Eigen::VectorXd beta_;
  std::size_t e_dim_ = 0;
  std::size_t w_dim_ = 0;
  double clip_ = 1e-6;
  SelectionSummary selection_;
};

/// Fits one candidate on rows with `use` set. `x` holds full feature rows
/// for the interactions layout; narrower candidates read a prefix.
/// Throws NonConvergence if the logistic fit diverges.
OutcomeModel fit_outcome_candidate(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                   const Eigen::VectorXd& weights, const std::vector<bool>& use,
                                   Candidate candidate, const OutcomeConfig& config,
                                   std::size_t e_dim, std::size_t w_dim);

OutcomeModel fit_initial_outcome(const HierarchicalDataset& data,
                                 const std::vector<CommunityContext>& contexts,
                                 const OutcomeConfig& config);

}  // namespace hiertmle
