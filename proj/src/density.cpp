#include "hiertmle/density.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "hiertmle/errors.hpp"

namespace hiertmle {

std::string_view to_string(ExposureType t) {
  switch (t) {
    case ExposureType::Binary: return "binary";
    case ExposureType::Categorical: return "categorical";
    case ExposureType::Continuous: return "continuous";
  }
  return "?";
}

std::string_view to_string(BinStrategy s) {
  switch (s) {
    case BinStrategy::EqualWidth: return "equal_width";
    case BinStrategy::EqualMass: return "equal_mass";
    case BinStrategy::DenbyMallows: return "denby_mallows";
  }
  return "?";
}

ExposureType exposure_type_from_string(std::string_view s) {
  if (s == "binary") return ExposureType::Binary;
  if (s == "categorical") return ExposureType::Categorical;
  if (s == "continuous") return ExposureType::Continuous;
  throw ConfigError("unknown exposure type '" + std::string(s) +
                    "' (expected binary, categorical or continuous)");
}

BinStrategy bin_strategy_from_string(std::string_view s) {
  if (s == "equal_width") return BinStrategy::EqualWidth;
  if (s == "equal_mass") return BinStrategy::EqualMass;
  if (s == "denby_mallows") return BinStrategy::DenbyMallows;
  throw ConfigError("unknown bin strategy '" + std::string(s) +
                    "' (expected equal_width, equal_mass or denby_mallows)");
}

std::optional<std::size_t> BinGrid::bin_of(double a) const {
  if (cutoffs.size() < 2 || !(a >= cutoffs.front()) || !(a < cutoffs.back())) return std::nullopt;
  auto it = std::upper_bound(cutoffs.begin(), cutoffs.end(), a);
  return static_cast<std::size_t>(it - cutoffs.begin()) - 1;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<double> collapse_ties(std::vector<double> cuts) {
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  return cuts;
}

}  // namespace

BinGrid make_grid(std::span<const double> a_values, std::size_t k, BinStrategy strategy) {
  if (a_values.empty()) throw InsufficientData("make_grid needs at least one exposure value");
  if (k < 1) throw ConfigError("number of bins must be at least 1");
  for (double a : a_values) {
    if (!std::isfinite(a)) throw InvariantError("exposure values must be finite");
  }
  std::vector<double> x(a_values.begin(), a_values.end());
  std::sort(x.begin(), x.end());
  const double lo = x.front();
  const double hi = x.back();
  if (lo == hi && k > 1) {
    throw DegenerateSupport("all exposure values equal " + std::to_string(lo) +
                            "; cannot form " + std::to_string(k) + " bins");
  }
  const double top = std::nextafter(hi, kInf);
  BinGrid grid;
  grid.strategy = strategy;
  if (k == 1) {
    grid.cutoffs = {lo, top};
    return grid;
  }
  const std::size_t n = x.size();
  std::vector<double> cuts;
  cuts.reserve(k + 1);
  switch (strategy) {
    case BinStrategy::EqualWidth:
      for (std::size_t i = 0; i < k; ++i) {
        cuts.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(k));
      }
      break;
    case BinStrategy::EqualMass:
      for (std::size_t i = 0; i < k; ++i) cuts.push_back(x[(i * n) / k]);
      break;
    case BinStrategy::DenbyMallows: {
      // t blends the rescaled value and the rescaled rank; cut at equal t steps.
      std::vector<double> t(n);
      for (std::size_t i = 0; i < n; ++i) {
        double rank = n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0;
        t[i] = 0.5 * (x[i] - lo) / (hi - lo) + 0.5 * rank;
      }
      cuts.push_back(lo);
      for (std::size_t i = 1; i < k; ++i) {
        double target = static_cast<double>(i) / static_cast<double>(k);
        auto it = std::lower_bound(t.begin(), t.end(), target);
        std::size_t r = static_cast<std::size_t>(it - t.begin());
        if (r == 0) {
          cuts.push_back(x[0]);
        } else if (r >= n) {
          cuts.push_back(hi);
        } else {
          double frac = (target - t[r - 1]) / (t[r] - t[r - 1]);
          cuts.push_back(x[r - 1] + frac * (x[r] - x[r - 1]));
        }
      }
      break;
    }
  }
  cuts.push_back(top);
  grid.cutoffs = collapse_ties(std::move(cuts));
  return grid;
}

std::size_t default_bin_count(std::size_t n) {
  std::size_t c = 0;
  while ((c + 1) * (c + 1) * (c + 1) <= n) ++c;
  return std::min<std::size_t>(20, std::max<std::size_t>(2, c));
}

ExposureType detect_exposure_type(std::span<const double> a_values) {
  std::set<double> distinct(a_values.begin(), a_values.end());
  bool binary = std::all_of(distinct.begin(), distinct.end(),
                            [](double v) { return v == 0.0 || v == 1.0; });
  if (binary) return ExposureType::Binary;
  bool integral = std::all_of(distinct.begin(), distinct.end(),
                              [](double v) { return std::isfinite(v) && v == std::floor(v); });
  if (integral && distinct.size() <= 10) return ExposureType::Categorical;
  return ExposureType::Continuous;
}

std::shared_ptr<const ExposureSupport> ExposureSupport::continuous(BinGrid grid) {
  if (grid.bins() < 1) throw InvariantError("bin grid needs at least one bin");
  for (std::size_t k = 0; k + 1 < grid.cutoffs.size(); ++k) {
    if (!(grid.cutoffs[k] < grid.cutoffs[k + 1])) {
      throw InvariantError("bin cutoffs must be strictly increasing");
    }
  }
  auto s = std::make_shared<ExposureSupport>();
  s->type_ = ExposureType::Continuous;
  s->grid_ = std::move(grid);
  return s;
}

std::shared_ptr<const ExposureSupport> ExposureSupport::discrete(ExposureType type,
                                                                 std::vector<double> levels) {
  if (type == ExposureType::Continuous) {
    throw InvariantError("discrete support needs a binary or categorical type");
  }
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  if (type == ExposureType::Binary) levels = {0.0, 1.0};
  if (levels.empty()) throw InvariantError("discrete support needs at least one level");
  auto s = std::make_shared<ExposureSupport>();
  s->type_ = type;
  s->levels_ = std::move(levels);
  return s;
}

std::size_t ExposureSupport::size() const {
  return is_discrete() ? levels_.size() : grid_.bins();
}

std::optional<std::size_t> ExposureSupport::cell_of(double a) const {
  if (!is_discrete()) return grid_.bin_of(a);
  auto it = std::lower_bound(levels_.begin(), levels_.end(), a - 1e-9 * (1.0 + std::abs(a)));
  if (it != levels_.end() && std::abs(*it - a) <= 1e-9 * (1.0 + std::abs(a))) {
    return static_cast<std::size_t>(it - levels_.begin());
  }
  return std::nullopt;
}

double ExposureSupport::width(std::size_t k) const {
  return is_discrete() ? 1.0 : grid_.width(k);
}

double ExposureSupport::point(std::size_t k) const {
  return is_discrete() ? levels_[k] : grid_.midpoint(k);
}

double ExposureSupport::lower() const {
  return is_discrete() ? levels_.front() : grid_.cutoffs.front();
}

double ExposureSupport::upper() const {
  return is_discrete() ? levels_.back() : grid_.cutoffs.back();
}

double ExposureDistribution::density_at(double a) const {
  auto k = support->cell_of(a);
  if (!k) return 0.0;
  return mass[*k] / support->width(*k);
}

double ExposureDistribution::mass_between(double lo, double hi) const {
  double total = 0.0;
  if (support->is_discrete()) {
    for (std::size_t k = 0; k < mass.size(); ++k) {
      double v = support->point(k);
      if (v >= lo && v < hi) total += mass[k];
    }
    return total;
  }
  const auto& c = support->grid().cutoffs;
  for (std::size_t k = 0; k < mass.size(); ++k) {
    double overlap = std::min(hi, c[k + 1]) - std::max(lo, c[k]);
    if (overlap > 0) total += mass[k] * overlap / (c[k + 1] - c[k]);
  }
  return total;
}

double ExposureDistribution::sample(Rng& rng) const {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double u = unif(rng);
  double total = std::accumulate(mass.begin(), mass.end(), 0.0);
  double acc = 0.0;
  std::size_t pick = mass.size() - 1;
  for (std::size_t k = 0; k < mass.size(); ++k) {
    acc += mass[k] / total;
    if (u < acc) {
      pick = k;
      break;
    }
  }
  while (mass[pick] <= 0.0 && pick > 0) --pick;
  if (support->is_discrete()) return support->point(pick);
  const auto& c = support->grid().cutoffs;
  double v = c[pick] + unif(rng) * (c[pick + 1] - c[pick]);
  return std::min(v, std::nextafter(c[pick + 1], -kInf));
}

LongFormat build_long_format(std::span<const std::size_t> bin_index, std::size_t bins) {
  LongFormat lf;
  for (std::size_t j = 0; j < bin_index.size(); ++j) {
    if (bin_index[j] >= bins) throw InvariantError("bin index outside the grid");
    for (std::size_t k = 0; k <= bin_index[j]; ++k) {
      lf.observation.push_back(j);
      lf.bin.push_back(k);
      lf.event.push_back(k == bin_index[j] ? 1.0 : 0.0);
    }
  }
  return lf;
}

std::vector<double> masses_from_hazards(const std::vector<double>& hazards) {
  std::vector<double> m(hazards.size());
  double surv = 1.0;
  for (std::size_t k = 0; k < hazards.size(); ++k) {
    double h = k + 1 == hazards.size() ? 1.0 : hazards[k];
    m[k] = surv * h;
    surv *= 1.0 - h;
  }
  return m;
}

namespace {

/// Positions of the fitted (non-fixed) bins among 0..K-2.
std::vector<std::size_t> fitted_bins(const HazardModel& m) {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k + 1 < m.bins; ++k) {
    if (!m.fixed[k]) out.push_back(k);
  }
  return out;
}

std::size_t design_width(const HazardModel& m, std::size_t n_fitted) {
  std::size_t d = m.active.size();
  std::size_t p = n_fitted + d;
  if (m.candidate == Candidate::Interactions && n_fitted > 1) p += (n_fitted - 1) * d;
  return p;
}

/// Fills one design row for fitted-bin position `slot`.
void design_row(const HazardModel& m, std::size_t n_fitted, std::size_t slot,
                std::span<const double> features, Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row) {
  row.setZero();
  row[slot] = 1.0;
  const std::size_t d = m.active.size();
  for (std::size_t c = 0; c < d; ++c) row[n_fitted + c] = features[m.active[c]];
  if (m.candidate == Candidate::Interactions && slot > 0) {
    std::size_t base = n_fitted + d + (slot - 1) * d;
    for (std::size_t c = 0; c < d; ++c) row[base + c] = features[m.active[c]];
  }
}

double log_mass_at(const HazardModel& m, std::size_t bin, std::span<const double> features) {
  auto h = m.hazards(features);
  double lm = 0.0;
  for (std::size_t k = 0; k < bin; ++k) lm += std::log1p(-h[k]);
  if (bin + 1 < m.bins) lm += std::log(h[bin]);
  return lm;
}

}  // namespace

std::vector<double> HazardModel::hazards(std::span<const double> features) const {
  std::vector<double> h(bins, 1.0);
  if (features.size() != feature_dim) {
    throw DimensionMismatch("hazard model expects " + std::to_string(feature_dim) +
                            " features, got " + std::to_string(features.size()));
  }
  auto fitted = fitted_bins(*this);
  const std::size_t p = design_width(*this, fitted.size());
  Eigen::RowVectorXd row(p);
  std::size_t slot = 0;
  for (std::size_t k = 0; k + 1 < bins; ++k) {
    if (fixed[k]) {
      h[k] = *fixed[k];
      continue;
    }
    design_row(*this, fitted.size(), slot, features, row);
    h[k] = std::clamp(expit(row.dot(beta)), clip, 1.0 - clip);
    ++slot;
  }
  return h;
}

HazardModel fit_hazard_candidate(const Eigen::MatrixXd& features,
                                 std::span<const std::size_t> bin_index, std::size_t bins,
                                 Candidate candidate, double clip,
                                 const std::vector<bool>& use) {
  const std::size_t n = bin_index.size();
  if (static_cast<std::size_t>(features.rows()) != n || use.size() != n) {
    throw DimensionMismatch("hazard fit: features, bins and selection differ in length");
  }
  HazardModel m;
  m.candidate = candidate;
  m.bins = bins;
  m.feature_dim = static_cast<std::size_t>(features.cols());
  m.clip = clip;
  m.fixed.assign(bins > 0 ? bins - 1 : 0, std::nullopt);

  std::vector<double> at_risk(bins, 0.0), events(bins, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    if (!use[j]) continue;
    for (std::size_t k = 0; k <= bin_index[j]; ++k) at_risk[k] += 1.0;
    events[bin_index[j]] += 1.0;
  }
  for (std::size_t k = 0; k + 1 < bins; ++k) {
    if (at_risk[k] == 0.0 || events[k] == 0.0) {
      m.fixed[k] = clip;
    } else if (events[k] == at_risk[k]) {
      m.fixed[k] = 1.0 - clip;
    }
  }
  auto fitted = fitted_bins(m);
  if (fitted.empty()) {
    m.beta = Eigen::VectorXd::Zero(0);
    return m;
  }
  std::vector<std::size_t> slot_of(bins, static_cast<std::size_t>(-1));
  for (std::size_t s = 0; s < fitted.size(); ++s) slot_of[fitted[s]] = s;

  // Rows that enter the pooled regression.
  std::vector<std::pair<std::size_t, std::size_t>> rows;
  for (std::size_t j = 0; j < n; ++j) {
    if (!use[j]) continue;
    for (std::size_t k = 0; k <= bin_index[j] && k + 1 < bins; ++k) {
      if (!m.fixed[k]) rows.emplace_back(j, k);
    }
  }

  if (candidate != Candidate::Intercept) {
    Eigen::MatrixXd sub(rows.size(), features.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) sub.row(r) = features.row(rows[r].first);
    auto constant = glm::constant_columns(sub, Eigen::VectorXd::Ones(rows.size()));
    for (std::size_t c = 0; c < constant.size(); ++c) {
      if (!constant[c]) m.active.push_back(c);
    }
  }

  const std::size_t p = design_width(m, fitted.size());
  Eigen::MatrixXd x(rows.size(), p);
  Eigen::VectorXd y(rows.size());
  std::vector<double> f(features.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto [j, k] = rows[r];
    for (Eigen::Index c = 0; c < features.cols(); ++c) f[c] = features(j, c);
    design_row(m, fitted.size(), slot_of[k], f, x.row(r));
    y[r] = k == bin_index[j] ? 1.0 : 0.0;
  }
  glm::FitOptions opts;
  opts.column_ridge.assign(p, 1e-8);
  for (std::size_t s = 0; s < fitted.size(); ++s) opts.column_ridge[s] = 0.0;
  for (std::size_t c = fitted.size() + m.active.size(); c < p; ++c) opts.column_ridge[c] = 1e-3;
  auto fit = glm::fit_logistic(x, y, Eigen::VectorXd::Ones(rows.size()),
                               Eigen::VectorXd::Zero(rows.size()), opts);
  if (!fit.converged) {
    throw SeparationError("hazard regression (" + std::string(to_string(candidate)) +
                          ") did not converge after " + std::to_string(fit.iterations) +
                          " iterations");
  }
  m.beta = fit.beta;
  return m;
}

HazardModel fit_hazards(const Eigen::MatrixXd& features, std::span<const std::size_t> bin_index,
                        std::size_t bins, const std::vector<Candidate>& candidates,
                        std::size_t cv_folds, double clip, std::uint64_t seed,
                        SelectionSummary* summary) {
  if (candidates.empty()) throw ConfigError("density candidate list is empty");
  const std::size_t n = bin_index.size();
  SelectionSummary sel;
  std::vector<bool> all(n, true);

  auto fallback = [&](const std::string& why) {
    sel.fallback = true;
    sel.selected = Candidate::Intercept;
    sel.note = why;
    return fit_hazard_candidate(features, bin_index, bins, Candidate::Intercept, clip, all);
  };

  Candidate winner = candidates.front();
  if (candidates.size() > 1) {
    if (cv_folds < 2) throw ConfigError("cv_folds must be at least 2");
    if (n < cv_folds) {
      throw InsufficientData("density cross-validation needs at least " +
                             std::to_string(cv_folds) + " communities, got " + std::to_string(n));
    }
    auto fold = glm::assign_folds(n, cv_folds, seed);
    double best = kInf;
    std::vector<double> f(features.cols());
    for (Candidate c : candidates) {
      double risk = 0.0;
      try {
        for (std::size_t v = 0; v < cv_folds; ++v) {
          std::vector<bool> train(n);
          for (std::size_t j = 0; j < n; ++j) train[j] = fold[j] != static_cast<int>(v);
          HazardModel m = fit_hazard_candidate(features, bin_index, bins, c, clip, train);
          for (std::size_t j = 0; j < n; ++j) {
            if (train[j]) continue;
            for (Eigen::Index q = 0; q < features.cols(); ++q) f[q] = features(j, q);
            risk -= log_mass_at(m, bin_index[j], f);
          }
        }
        risk /= static_cast<double>(n);
      } catch (const SeparationError&) {
        risk = kInf;
      }
      sel.cv_risk.emplace_back(c, risk);
      if (risk < best) {
        best = risk;
        winner = c;
      }
    }
    if (!std::isfinite(best)) {
      HazardModel m = fallback("every candidate failed during cross-validation");
      if (summary) *summary = sel;
      return m;
    }
  }
  sel.selected = winner;
  HazardModel m;
  try {
    m = fit_hazard_candidate(features, bin_index, bins, winner, clip, all);
  } catch (const SeparationError& e) {
    m = fallback(e.what());
  }
  if (summary) *summary = sel;
  return m;
}

ConditionalDensityModel::ConditionalDensityModel(std::shared_ptr<const ExposureSupport> support,
                                                 HazardModel hazard, SelectionSummary selection)
    : support_(std::move(support)), hazard_(std::move(hazard)), selection_(std::move(selection)) {
  if (!support_) throw InvariantError("density model needs a support");
  if (hazard_.bins != support_->size()) {
    throw DimensionMismatch("hazard model bin count does not match the support");
  }
}

ConditionalDensityModel ConditionalDensityModel::fixed(
    std::shared_ptr<const ExposureSupport> support, const std::vector<double>& masses,
    std::size_t feature_dim, double clip) {
  if (masses.size() != support->size()) {
    throw DimensionMismatch("fixed density has " + std::to_string(masses.size()) +
                            " masses for " + std::to_string(support->size()) + " cells");
  }
  double total = 0.0;
  for (double m : masses) {
    if (!(m >= 0.0) || !std::isfinite(m)) throw InvariantError("fixed masses must be nonnegative");
    total += m;
  }
  if (std::abs(total - 1.0) > 1e-9) throw InvariantError("fixed masses must sum to 1");
  HazardModel h;
  h.candidate = Candidate::Intercept;
  h.bins = masses.size();
  h.feature_dim = feature_dim;
  h.clip = clip;
  h.beta = Eigen::VectorXd::Zero(0);
  h.fixed.assign(h.bins - 1, std::nullopt);
  double remaining = 1.0;
  for (std::size_t k = 0; k + 1 < h.bins; ++k) {
    h.fixed[k] = remaining > 0.0 ? std::clamp(masses[k] / remaining, 0.0, 1.0) : 1.0;
    remaining -= masses[k];
  }
  SelectionSummary sel;
  sel.note = "fixed";
  return ConditionalDensityModel(std::move(support), std::move(h), sel);
}

std::vector<double> ConditionalDensityModel::masses(std::span<const double> features) const {
  return masses_from_hazards(hazard_.hazards(features));
}

ExposureDistribution ConditionalDensityModel::distribution(std::span<const double> features) const {
  return ExposureDistribution{support_, masses(features)};
}

double ConditionalDensityModel::density_at(double a, std::span<const double> features) const {
  auto k = support_->cell_of(a);
  if (!k) return 0.0;
  return masses(features)[*k] / support_->width(*k);
}

std::shared_ptr<const ExposureSupport> make_support(std::span<const double> a,
                                                    const DensityConfig& config) {
  ExposureType type = config.exposure_type.value_or(detect_exposure_type(a));
  if (type == ExposureType::Continuous) {
    std::size_t k = config.k_bins.value_or(default_bin_count(a.size()));
    return ExposureSupport::continuous(make_grid(a, k, config.strategy));
  }
  if (type == ExposureType::Binary) {
    for (double v : a) {
      if (v != 0.0 && v != 1.0) throw InvariantError("binary exposure must take values 0 or 1");
    }
  }
  return ExposureSupport::discrete(type, std::vector<double>(a.begin(), a.end()));
}

ConditionalDensityModel fit_density(std::span<const double> a, const Eigen::MatrixXd& features,
                                    const DensityConfig& config) {
  if (static_cast<std::size_t>(features.rows()) != a.size()) {
    throw DimensionMismatch("density fit: exposure and feature rows differ");
  }
  if (!(config.hazard_clip > 0.0 && config.hazard_clip < 0.5)) {
    throw ConfigError("hazard_clip must lie in (0, 0.5)");
  }
  auto support = make_support(a, config);
  std::vector<std::size_t> bin(a.size());
  for (std::size_t j = 0; j < a.size(); ++j) {
    auto k = support->cell_of(a[j]);
    if (!k) throw InvariantError("exposure value " + std::to_string(a[j]) + " outside support");
    bin[j] = *k;
  }
  SelectionSummary sel;
  HazardModel h = fit_hazards(features, bin, support->size(), config.candidates, config.cv_folds,
                              config.hazard_clip, config.seed, &sel);
  return ConditionalDensityModel(std::move(support), std::move(h), std::move(sel));
}

std::vector<double> exposure_features(std::span<const double> e, std::span<const double> w) {
  std::vector<double> f(e.begin(), e.end());
  f.insert(f.end(), w.begin(), w.end());
  return f;
}

Eigen::MatrixXd exposure_feature_matrix(const HierarchicalDataset& data) {
  const std::size_t d = data.e_dim() + data.w_dim();
  Eigen::MatrixXd x(data.size(), d);
  for (std::size_t j = 0; j < data.size(); ++j) {
    auto f = exposure_features(data.community(j).e, data.w_summary(j));
    for (std::size_t c = 0; c < d; ++c) x(j, c) = f[c];
  }
  return x;
}

}  // namespace hiertmle
