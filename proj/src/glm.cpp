#include "hiertmle/glm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hiertmle/errors.hpp"
#include "hiertmle/random.hpp"

namespace hiertmle {

std::string_view to_string(Candidate c) {
  switch (c) {
    case Candidate::Intercept: return "intercept";
    case Candidate::MainTerms: return "main";
    case Candidate::Interactions: return "interactions";
  }
  return "?";
}

Candidate candidate_from_string(std::string_view s) {
  if (s == "intercept") return Candidate::Intercept;
  if (s == "main") return Candidate::MainTerms;
  if (s == "interactions") return Candidate::Interactions;
  throw ConfigError("unknown candidate '" + std::string(s) +
                    "' (expected intercept, main or interactions)");
}

std::vector<Candidate> all_candidates() {
  return {Candidate::Intercept, Candidate::MainTerms, Candidate::Interactions};
}

double bernoulli_loss(double y, double p) {
  constexpr double kEps = 1e-15;
  p = std::clamp(p, kEps, 1.0 - kEps);
  double loss = 0.0;
  if (y > 0.0) loss -= y * std::log(p);
  if (y < 1.0) loss -= (1.0 - y) * std::log1p(-p);
  return loss;
}

namespace glm {

namespace {

Eigen::VectorXd ridge_diagonal(Eigen::Index p, const FitOptions& o) {
  if (static_cast<Eigen::Index>(o.column_ridge.size()) == p) {
    return Eigen::Map<const Eigen::VectorXd>(o.column_ridge.data(), p);
  }
  Eigen::VectorXd d = Eigen::VectorXd::Constant(p, o.ridge);
  for (Eigen::Index k = 0; k < p && k < static_cast<Eigen::Index>(o.unpenalized.size()); ++k) {
    if (o.unpenalized[k]) d[k] = 0.0;
  }
  return d;
}

double penalized_logistic_loss(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                               const Eigen::VectorXd& w, const Eigen::VectorXd& offset,
                               const Eigen::VectorXd& beta, const Eigen::VectorXd& ridge) {
  Eigen::VectorXd eta = x * beta + offset;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    if (w[i] == 0.0) continue;
    // log(1 + e^eta) - y eta, computed stably
    double e = eta[i];
    double softplus = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
    loss += w[i] * (softplus - y[i] * e);
  }
  return loss + 0.5 * beta.dot(ridge.cwiseProduct(beta));
}

}  // namespace

Fit fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& weights,
                 const Eigen::VectorXd& offset, const FitOptions& options) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  if (y.size() != n || weights.size() != n || offset.size() != n) {
    throw DimensionMismatch("logistic design has inconsistent row counts");
  }
  Fit fit;
  fit.beta = Eigen::VectorXd::Zero(p);
  if (p == 0) {
    fit.converged = true;
    return fit;
  }
  const Eigen::VectorXd ridge = ridge_diagonal(p, options);
  double loss = penalized_logistic_loss(x, y, weights, offset, fit.beta, ridge);
  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    fit.iterations = iter;
    Eigen::VectorXd eta = x * fit.beta + offset;
    Eigen::VectorXd resid(n), curv(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      double mu = expit(eta[i]);
      resid[i] = weights[i] * (y[i] - mu);
      curv[i] = weights[i] * mu * (1.0 - mu);
    }
    Eigen::VectorXd grad = x.transpose() * resid - ridge.cwiseProduct(fit.beta);
    Eigen::MatrixXd hess = x.transpose() * curv.asDiagonal() * x;
    hess.diagonal() += ridge;
    // Keep the system solvable when a column has vanishing curvature.
    hess.diagonal().array() += 1e-12 * (1.0 + hess.diagonal().array().abs());
    Eigen::VectorXd step = hess.ldlt().solve(grad);
    if (!step.allFinite()) break;

    double scale = 1.0;
    Eigen::VectorXd candidate = fit.beta + step;
    double cand_loss = penalized_logistic_loss(x, y, weights, offset, candidate, ridge);
    int halvings = 0;
    while (!(cand_loss <= loss + 1e-12 * (1.0 + std::abs(loss))) && halvings < 30) {
      scale *= 0.5;
      candidate = fit.beta + scale * step;
      cand_loss = penalized_logistic_loss(x, y, weights, offset, candidate, ridge);
      ++halvings;
    }
    double max_step = (scale * step).cwiseAbs().maxCoeff();
    fit.beta = candidate;
    loss = cand_loss;
    if (!fit.beta.allFinite() || fit.beta.cwiseAbs().maxCoeff() > 1e8) {
      fit.converged = false;
      return fit;
    }
    if (max_step < options.tolerance * (1.0 + fit.beta.cwiseAbs().maxCoeff()) ||
        grad.cwiseAbs().maxCoeff() < 1e-13 * (1.0 + weights.sum())) {
      fit.converged = true;
      return fit;
    }
  }
  return fit;
}

Fit fit_least_squares(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                      const Eigen::VectorXd& weights, const FitOptions& options) {
  if (y.size() != x.rows() || weights.size() != x.rows()) {
    throw DimensionMismatch("least-squares design has inconsistent row counts");
  }
  Fit fit;
  fit.iterations = 1;
  if (x.cols() == 0) {
    fit.beta = Eigen::VectorXd::Zero(0);
    fit.converged = true;
    return fit;
  }
  Eigen::MatrixXd xtwx = x.transpose() * weights.asDiagonal() * x;
  xtwx.diagonal() += ridge_diagonal(x.cols(), options);
  Eigen::VectorXd xtwy = x.transpose() * weights.cwiseProduct(y);
  fit.beta = xtwx.ldlt().solve(xtwy);
  fit.converged = fit.beta.allFinite();
  return fit;
}

std::vector<int> assign_folds(std::size_t n_groups, std::size_t folds, std::uint64_t seed) {
  std::vector<std::size_t> order(n_groups);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, 0xF01D5));
  // Fisher-Yates with explicit draws keeps the permutation library-independent.
  for (std::size_t i = n_groups; i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  std::vector<int> fold(n_groups, 0);
  for (std::size_t r = 0; r < n_groups; ++r) {
    fold[order[r]] = static_cast<int>(r % std::max<std::size_t>(folds, 1));
  }
  return fold;
}

std::vector<bool> constant_columns(const Eigen::MatrixXd& x, const Eigen::VectorXd& weights) {
  std::vector<bool> constant(x.cols(), true);
  for (Eigen::Index k = 0; k < x.cols(); ++k) {
    bool seen = false;
    double first = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      if (weights[i] <= 0.0) continue;
      if (!seen) {
        first = x(i, k);
        seen = true;
      } else if (x(i, k) != first) {
        constant[k] = false;
        break;
      }
    }
  }
  return constant;
}

}  // namespace glm
}  // namespace hiertmle
