#include "hiertmle/individual_g.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hiertmle/errors.hpp"

namespace hiertmle {

std::string_view to_string(MarginalizationPlan p) {
  return p == MarginalizationPlan::EmpiricalPooled ? "empirical_pooled" : "empirical_within";
}

MarginalizationPlan marginalization_plan_from_string(std::string_view s) {
  if (s == "empirical_pooled") return MarginalizationPlan::EmpiricalPooled;
  if (s == "empirical_within") return MarginalizationPlan::EmpiricalWithin;
  throw ConfigError("unknown marginalization plan '" + std::string(s) +
                    "' (expected empirical_pooled or empirical_within)");
}

std::vector<double> leave_one_out_mean(const CommunityContext& ctx, std::size_t i) {
  const std::size_t n = ctx.w_rows.size();
  const std::size_t p = ctx.w_rows.empty() ? 0 : ctx.w_rows.front().size();
  std::vector<double> m(p, 0.0);
  if (n < 2) return m;
  double rest = 0.0;
  for (std::size_t l = 0; l < n; ++l) {
    if (l != i) rest += ctx.alpha[l];
  }
  for (std::size_t l = 0; l < n; ++l) {
    if (l == i) continue;
    double wt = rest > 0.0 ? ctx.alpha[l] / rest : 1.0 / static_cast<double>(n - 1);
    for (std::size_t k = 0; k < p; ++k) m[k] += wt * ctx.w_rows[l][k];
  }
  return m;
}

namespace {

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t m, std::uint64_t seed,
                                        std::uint64_t stream) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (m >= n) return idx;
  Rng rng = make_rng(seed, stream);
  for (std::size_t k = 0; k < m; ++k) {
    std::size_t r = k + static_cast<std::size_t>(rng() % (n - k));
    std::swap(idx[k], idx[r]);
  }
  idx.resize(m);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

IndividualDensityModel::IndividualDensityModel(ConditionalDensityModel base,
                                               const std::vector<CommunityContext>& contexts,
                                               IndividualDensityConfig config)
    : base_(std::move(base)), config_(config) {
  if (contexts.empty()) throw InsufficientData("individual density needs communities");
  if (config_.m_profiles < 1) throw ConfigError("m_profiles must be at least 1");
  std::size_t n0 = contexts.front().w_rows.size();
  bool constant = std::all_of(contexts.begin(), contexts.end(),
                              [n0](const auto& c) { return c.w_rows.size() == n0; });
  if (!constant) {
    warnings_.push_back(
        "community sizes vary; the individual-level parameter assumes a constant N");
  }

  std::size_t individuals = 0;
  for (const auto& c : contexts) individuals += c.w_rows.size();

  if (config_.plan == MarginalizationPlan::EmpiricalPooled) {
    for (const auto& c : contexts) {
      if (c.w_rows.size() < 2) continue;
      for (std::size_t i = 0; i < c.w_rows.size(); ++i) pooled_.push_back(leave_one_out_mean(c, i));
    }
    if (individuals * pooled_.size() > config_.exact_limit) {
      exact_ = false;
      auto keep = sample_indices(pooled_.size(), config_.m_profiles, config_.seed, 0x9A11);
      std::vector<std::vector<double>> sampled;
      for (auto k : keep) sampled.push_back(std::move(pooled_[k]));
      pooled_ = std::move(sampled);
    }
  } else {
    std::size_t evals = 0;
    for (const auto& c : contexts) evals += c.w_rows.size() * c.w_rows.size();
    exact_ = evals <= config_.exact_limit;
    within_.resize(contexts.size());
    for (std::size_t j = 0; j < contexts.size(); ++j) {
      const auto& c = contexts[j];
      if (c.w_rows.size() < 2) continue;
      std::vector<std::size_t> keep(c.w_rows.size());
      std::iota(keep.begin(), keep.end(), 0);
      if (!exact_) keep = sample_indices(c.w_rows.size(), config_.m_profiles, config_.seed, j);
      for (auto i : keep) within_[j].push_back(leave_one_out_mean(c, i));
    }
  }
}

std::size_t IndividualDensityModel::profiles_per_individual() const {
  if (config_.plan == MarginalizationPlan::EmpiricalPooled) return pooled_.size();
  std::size_t most = 0;
  for (const auto& w : within_) most = std::max(most, w.size());
  return most;
}

const std::vector<std::vector<double>>& IndividualDensityModel::profiles_for(std::size_t j) const {
  if (config_.plan == MarginalizationPlan::EmpiricalPooled) return pooled_;
  if (j >= within_.size()) throw DimensionMismatch("community index outside the fitted data");
  return within_[j];
}

std::vector<double> IndividualDensityModel::summary(std::span<const double> w_i, double alpha_i,
                                                    std::span<const double> profile) const {
  std::vector<double> s(w_i.begin(), w_i.end());
  for (std::size_t k = 0; k < s.size(); ++k) s[k] += (1.0 - alpha_i) * (profile[k] - w_i[k]);
  return s;
}

std::vector<double> IndividualDensityModel::masses(const CommunityContext& ctx, std::size_t j,
                                                   std::size_t i) const {
  const auto& w_i = ctx.w_rows[i];
  const double alpha_i = ctx.alpha[i];
  const auto& profiles = profiles_for(j);
  if (alpha_i >= 1.0 || ctx.w_rows.size() < 2 || profiles.empty()) {
    return base_.masses(exposure_features(ctx.e, w_i));
  }
  std::vector<double> acc(base_.support().size(), 0.0);
  for (const auto& m : profiles) {
    auto part = base_.masses(exposure_features(ctx.e, summary(w_i, alpha_i, m)));
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += part[k];
  }
  for (auto& v : acc) v /= static_cast<double>(profiles.size());
  return acc;
}

ExposureDistribution IndividualDensityModel::distribution(const CommunityContext& ctx,
                                                          std::size_t j, std::size_t i) const {
  return ExposureDistribution{base_.support_ptr(), masses(ctx, j, i)};
}

double IndividualDensityModel::density_at(double a, const CommunityContext& ctx, std::size_t j,
                                          std::size_t i) const {
  return distribution(ctx, j, i).density_at(a);
}

double IndividualDensityModel::mc_standard_error(double a, const CommunityContext& ctx,
                                                 std::size_t j, std::size_t i) const {
  const auto& profiles = profiles_for(j);
  if (exact_ || ctx.alpha[i] >= 1.0 || profiles.size() < 2) return 0.0;
  auto cell = base_.support().cell_of(a);
  if (!cell) return 0.0;
  double width = base_.support().width(*cell);
  double sum = 0.0, sq = 0.0;
  for (const auto& m : profiles) {
    double d = base_.masses(exposure_features(ctx.e, summary(ctx.w_rows[i], ctx.alpha[i], m)))[*cell] /
               width;
    sum += d;
    sq += d * d;
  }
  double n = static_cast<double>(profiles.size());
  double var = std::max(0.0, (sq - sum * sum / n) / (n - 1.0));
  return std::sqrt(var / n);
}

InterventionDistribution individual_gstar(const InterventionSpec& spec,
                                          const IndividualDensityModel& model,
                                          const CommunityContext& ctx, std::size_t j,
                                          std::size_t i) {
  auto ref = model.distribution(ctx, j, i);
  return build_gstar(spec, model.base().support(), &ref, ctx.e, ctx.w_rows[i]);
}

}  // namespace hiertmle
