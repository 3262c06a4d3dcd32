#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace hiertmle {

/// Candidate learners shared by the exposure and outcome regressions. The
/// exact columns each produces are defined by the module that builds the
/// design (bin intercepts for hazards, a global intercept for outcomes).
enum class Candidate { Intercept, MainTerms, Interactions };

std::string_view to_string(Candidate c);
Candidate candidate_from_string(std::string_view s);
std::vector<Candidate> all_candidates();

inline double expit(double x) {
  if (x >= 0) {
    double z = std::exp(-x);
    return 1.0 / (1.0 + z);
  }
  double z = std::exp(x);
  return z / (1.0 + z);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// -[y log p + (1 - y) log(1 - p)], with p kept strictly inside (0, 1).
double bernoulli_loss(double y, double p);

namespace glm {

struct FitOptions {
  double ridge = 1e-8;            // added to the Hessian diagonal of penalized columns
  int max_iterations = 100;
  double tolerance = 1e-12;       // on the max absolute Newton step
  std::vector<bool> unpenalized;  // columns exempt from the ridge (e.g. intercepts)
  std::vector<double> column_ridge;  // per-column override when sized to the design
};

struct Fit {
  Eigen::VectorXd beta;
  bool converged = false;
  int iterations = 0;
};

/// Weighted (quasi-)binomial logistic regression with offset via damped
/// Newton-Raphson. y may be fractional in [0, 1].
Fit fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& weights,
                 const Eigen::VectorXd& offset, const FitOptions& options = {});

/// Weighted least squares (normal equations with optional ridge).
Fit fit_least_squares(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                      const Eigen::VectorXd& weights, const FitOptions& options = {});

/// Deterministic assignment of `n_groups` groups to `folds` folds: a seeded
/// permutation dealt round-robin, so fold sizes differ by at most one.
std::vector<int> assign_folds(std::size_t n_groups, std::size_t folds, std::uint64_t seed);

/// Columns (other than `keep`) whose values are identical over rows with
/// positive weight. They are collinear with the intercept terms.
std::vector<bool> constant_columns(const Eigen::MatrixXd& x, const Eigen::VectorXd& weights);

}  // namespace glm
}  // namespace hiertmle
