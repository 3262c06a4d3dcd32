#include "hiertmle/outcome.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "hiertmle/errors.hpp"
#include "text_util.hpp"

namespace hiertmle {

std::string_view to_string(OutcomeLevel l) {
  return l == OutcomeLevel::Community ? "community" : "pooled_individual";
}

std::string_view to_string(OutcomeLoss l) {
  return l == OutcomeLoss::Bernoulli ? "bernoulli" : "squared_error";
}

OutcomeLevel outcome_level_from_string(std::string_view s) {
  if (s == "community") return OutcomeLevel::Community;
  if (s == "pooled_individual" || s == "individual") return OutcomeLevel::PooledIndividual;
  throw ConfigError("unknown outcome level '" + std::string(s) +
                    "' (expected community or pooled_individual)");
}

OutcomeLoss outcome_loss_from_string(std::string_view s) {
  if (s == "bernoulli") return OutcomeLoss::Bernoulli;
  if (s == "squared_error") return OutcomeLoss::SquaredError;
  throw ConfigError("unknown outcome loss '" + std::string(s) +
                    "' (expected bernoulli or squared_error)");
}

NeighborMap parse_neighbor_map(const std::string& csv_text, const HierarchicalDataset& data) {
  std::map<std::string, std::size_t> index;
  for (std::size_t j = 0; j < data.size(); ++j) index[data.community(j).id] = j;
  std::vector<std::vector<std::set<std::size_t>>> sets(data.size());
  for (std::size_t j = 0; j < data.size(); ++j) sets[j].resize(data.community(j).size());

  auto lines = split_lines(csv_text);
  if (lines.empty() ||
      split_csv_line(lines[0]) != std::vector<std::string>{"community_id", "i", "l"}) {
    throw SchemaError("neighbor map header must be 'community_id,i,l'");
  }
  for (std::size_t r = 1; r < lines.size(); ++r) {
    if (trim(lines[r]).empty()) continue;
    auto f = split_csv_line(lines[r]);
    if (f.size() != 3) {
      throw ParseError("line " + std::to_string(r + 1) + ": expected 3 fields, got " +
                       std::to_string(f.size()));
    }
    auto it = index.find(f[0]);
    if (it == index.end()) {
      throw InvariantError("line " + std::to_string(r + 1) + ": unknown community '" + f[0] + "'");
    }
    double i = parse_number(f[1], r + 1, "i");
    double l = parse_number(f[2], r + 1, "l");
    std::size_t n = data.community(it->second).size();
    if (i < 0 || l < 0 || i != std::floor(i) || l != std::floor(l) || i >= n || l >= n) {
      throw InvariantError("line " + std::to_string(r + 1) +
                           ": neighbor positions must be integers below the community size");
    }
    if (i != l) sets[it->second][static_cast<std::size_t>(i)].insert(static_cast<std::size_t>(l));
  }
  NeighborMap map(data.size());
  for (std::size_t j = 0; j < data.size(); ++j) {
    for (auto& s : sets[j]) map[j].emplace_back(s.begin(), s.end());
  }
  return map;
}

NeighborMap load_neighbor_map(const std::filesystem::path& path, const HierarchicalDataset& data) {
  return parse_neighbor_map(read_text_file(path), data);
}

std::vector<CommunityContext> build_contexts(const HierarchicalDataset& data,
                                             const NeighborMap* neighbors) {
  if (neighbors && neighbors->size() != data.size()) {
    throw DimensionMismatch("neighbor map does not cover every community");
  }
  std::vector<CommunityContext> out(data.size());
  for (std::size_t j = 0; j < data.size(); ++j) {
    const auto& c = data.community(j);
    auto& ctx = out[j];
    ctx.e = c.e;
    ctx.w_summary = data.w_summary(j);
    ctx.alpha = c.alpha;
    for (const auto& ind : c.individuals) ctx.w_rows.push_back(ind.w);
    if (!neighbors) {
      ctx.outcome_rows = ctx.w_rows;
      continue;
    }
    const auto& nb = (*neighbors)[j];
    if (nb.size() != c.size()) throw DimensionMismatch("neighbor map size differs from community");
    for (std::size_t i = 0; i < c.size(); ++i) {
      std::vector<std::size_t> members{i};
      members.insert(members.end(), nb[i].begin(), nb[i].end());
      double total = 0.0;
      for (auto l : members) total += c.alpha[l];
      std::vector<double> mean(data.w_dim(), 0.0);
      for (auto l : members) {
        double wt = total > 0.0 ? c.alpha[l] / total : 1.0 / static_cast<double>(members.size());
        for (std::size_t k = 0; k < data.w_dim(); ++k) mean[k] += wt * c.individuals[l].w[k];
      }
      auto row = c.individuals[i].w;
      row.insert(row.end(), mean.begin(), mean.end());
      ctx.outcome_rows.push_back(std::move(row));
    }
  }
  return out;
}

std::vector<double> outcome_features(Candidate c, double a, std::span<const double> e,
                                     std::span<const double> w) {
  std::vector<double> f{1.0};
  if (c == Candidate::Intercept) return f;
  f.push_back(a);
  f.insert(f.end(), e.begin(), e.end());
  f.insert(f.end(), w.begin(), w.end());
  if (c == Candidate::Interactions) {
    for (double v : e) f.push_back(a * v);
    for (double v : w) f.push_back(a * v);
  }
  return f;
}

double OutcomeModel::predict(double a, std::span<const double> e, std::span<const double> w) const {
  if (e.size() != e_dim_ || w.size() != w_dim_) {
    throw DimensionMismatch("outcome model expects " + std::to_string(e_dim_) + "+" +
                            std::to_string(w_dim_) + " covariates, got " +
                            std::to_string(e.size()) + "+" + std::to_string(w.size()));
  }
  auto f = outcome_features(candidate_, a, e, w);
  double eta = 0.0;
  for (std::size_t k = 0; k < active_.size(); ++k) eta += beta_[k] * f[active_[k]];
  double p = loss_ == OutcomeLoss::Bernoulli ? expit(eta) : eta;
  return std::clamp(p, clip_, 1.0 - clip_);
}

std::vector<double> OutcomeModel::predict_individuals(const CommunityContext& ctx, double a) const {
  std::vector<double> out;
  out.reserve(ctx.outcome_rows.size());
  for (const auto& row : ctx.outcome_rows) out.push_back(predict(a, ctx.e, row));
  return out;
}

double OutcomeModel::predict_community(const CommunityContext& ctx, double a) const {
  if (level_ == OutcomeLevel::Community) return predict(a, ctx.e, ctx.w_summary);
  double q = 0.0;
  for (std::size_t i = 0; i < ctx.outcome_rows.size(); ++i) {
    q += ctx.alpha[i] * predict(a, ctx.e, ctx.outcome_rows[i]);
  }
  return q;
}

OutcomeModel OutcomeModel::constant(double value, std::size_t e_dim, std::size_t w_dim,
                                    OutcomeLevel level) {
  OutcomeModel m;
  m.level_ = level;
  m.loss_ = OutcomeLoss::SquaredError;
  m.candidate_ = Candidate::Intercept;
  m.active_ = {0};
  m.beta_ = Eigen::VectorXd::Constant(1, value);
  m.e_dim_ = e_dim;
  m.w_dim_ = w_dim;
  m.selection_.note = "constant";
  return m;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<std::size_t> choose_columns(const Eigen::MatrixXd& x, const Eigen::VectorXd& weights,
                                        const std::vector<bool>& use, Candidate c,
                                        std::size_t base_dim) {
  std::vector<std::size_t> cols{0};
  if (c == Candidate::Intercept) return cols;
  Eigen::VectorXd w = weights;
  for (Eigen::Index r = 0; r < w.size(); ++r) {
    if (!use[r]) w[r] = 0.0;
  }
  auto constant = glm::constant_columns(x.leftCols(2 + base_dim), w);
  bool a_varies = !constant[1];
  if (a_varies) cols.push_back(1);
  for (std::size_t k = 0; k < base_dim; ++k) {
    if (!constant[2 + k]) cols.push_back(2 + k);
  }
  if (c == Candidate::Interactions && a_varies) {
    for (std::size_t k = 0; k < base_dim; ++k) {
      if (!constant[2 + k]) cols.push_back(2 + base_dim + k);
    }
  }
  return cols;
}

double row_loss(OutcomeLoss loss, double y, double p) {
  if (loss == OutcomeLoss::Bernoulli) return bernoulli_loss(y, p);
  return (y - p) * (y - p);
}

}  // namespace

OutcomeModel fit_outcome_candidate(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                   const Eigen::VectorXd& weights, const std::vector<bool>& use,
                                   Candidate candidate, const OutcomeConfig& config,
                                   std::size_t e_dim, std::size_t w_dim) {
  OutcomeModel m;
  m.level_ = config.level;
  m.loss_ = config.loss;
  m.candidate_ = candidate;
  m.e_dim_ = e_dim;
  m.w_dim_ = w_dim;
  m.clip_ = config.clip;
  m.active_ = choose_columns(x, weights, use, candidate, e_dim + w_dim);

  std::vector<Eigen::Index> rows;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    if (use[r] && weights[r] > 0.0) rows.push_back(r);
  }
  if (rows.empty()) throw InsufficientData("outcome fit has no rows with positive weight");
  const auto p = static_cast<Eigen::Index>(m.active_.size());
  Eigen::MatrixXd xs(rows.size(), p);
  Eigen::VectorXd ys(rows.size()), ws(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (Eigen::Index k = 0; k < p; ++k) xs(r, k) = x(rows[r], m.active_[k]);
    ys[r] = y[rows[r]];
    ws[r] = weights[rows[r]];
  }
  glm::FitOptions opts;
  opts.unpenalized.assign(p, false);
  opts.unpenalized[0] = true;
  glm::Fit fit = config.loss == OutcomeLoss::Bernoulli
                     ? glm::fit_logistic(xs, ys, ws, Eigen::VectorXd::Zero(rows.size()), opts)
                     : glm::fit_least_squares(xs, ys, ws, opts);
  if (!fit.converged) {
    throw NonConvergence("outcome regression (" + std::string(to_string(candidate)) +
                         ") did not converge after " + std::to_string(fit.iterations) +
                         " iterations");
  }
  m.beta_ = fit.beta;
  return m;
}

OutcomeModel fit_initial_outcome(const HierarchicalDataset& data,
                                 const std::vector<CommunityContext>& contexts,
                                 const OutcomeConfig& config) {
  if (config.candidates.empty()) throw ConfigError("outcome candidate list is empty");
  if (contexts.size() != data.size()) throw DimensionMismatch("one context per community needed");
  const bool pooled = config.level == OutcomeLevel::PooledIndividual;
  const std::size_t e_dim = data.e_dim();
  const std::size_t w_dim = pooled ? contexts.front().outcome_rows.front().size() : data.w_dim();

  std::vector<std::vector<double>> feats;
  std::vector<double> ys, ws;
  std::vector<std::size_t> group;
  for (std::size_t j = 0; j < data.size(); ++j) {
    const auto& ctx = contexts[j];
    double a = data.community(j).a;
    if (!pooled) {
      feats.push_back(outcome_features(Candidate::Interactions, a, ctx.e, ctx.w_summary));
      ys.push_back(data.community_outcomes()[j]);
      ws.push_back(1.0);
      group.push_back(j);
      continue;
    }
    for (std::size_t i = 0; i < ctx.outcome_rows.size(); ++i) {
      feats.push_back(outcome_features(Candidate::Interactions, a, ctx.e, ctx.outcome_rows[i]));
      ys.push_back(data.scaled_y(j, i));
      ws.push_back(ctx.alpha[i]);
      group.push_back(j);
    }
  }
  const std::size_t n = feats.size();
  Eigen::MatrixXd x(n, feats.front().size());
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t k = 0; k < feats[r].size(); ++k) x(r, k) = feats[r][k];
  }
  Eigen::VectorXd y = Eigen::Map<Eigen::VectorXd>(ys.data(), n);
  Eigen::VectorXd w = Eigen::Map<Eigen::VectorXd>(ws.data(), n);

  SelectionSummary sel;
  Candidate winner = config.candidates.front();
  if (config.candidates.size() > 1) {
    if (config.cv_folds < 2) throw ConfigError("cv_folds must be at least 2");
    if (data.size() < config.cv_folds) {
      throw InsufficientData("outcome cross-validation needs at least " +
                             std::to_string(config.cv_folds) + " communities, got " +
                             std::to_string(data.size()));
    }
    auto fold = glm::assign_folds(data.size(), config.cv_folds, config.seed);
    double best = kInf;
    for (Candidate c : config.candidates) {
      double risk = 0.0, total = 0.0;
      try {
        for (std::size_t v = 0; v < config.cv_folds; ++v) {
          std::vector<bool> train(n);
          for (std::size_t r = 0; r < n; ++r) train[r] = fold[group[r]] != static_cast<int>(v);
          auto m = fit_outcome_candidate(x, y, w, train, c, config, e_dim, w_dim);
          for (std::size_t r = 0; r < n; ++r) {
            if (train[r]) continue;
            double eta = 0.0;
            for (std::size_t k = 0; k < m.active_.size(); ++k) {
              eta += m.beta_[k] * x(r, m.active_[k]);
            }
            double pr = config.loss == OutcomeLoss::Bernoulli ? expit(eta) : eta;
            pr = std::clamp(pr, config.clip, 1.0 - config.clip);
            risk += w[r] * row_loss(config.loss, y[r], pr);
            total += w[r];
          }
        }
        risk = total > 0.0 ? risk / total : kInf;
      } catch (const NonConvergence&) {
        risk = kInf;
      } catch (const InsufficientData&) {
        risk = kInf;
      }
      sel.cv_risk.emplace_back(c, risk);
      if (risk < best) {
        best = risk;
        winner = c;
      }
    }
    if (!std::isfinite(best)) {
      winner = Candidate::Intercept;
      sel.fallback = true;
      sel.note = "every candidate failed during cross-validation";
    }
  }
  std::vector<bool> all(n, true);
  OutcomeModel model;
  try {
    model = fit_outcome_candidate(x, y, w, all, winner, config, e_dim, w_dim);
    sel.selected = winner;
  } catch (const NonConvergence& e) {
    model = fit_outcome_candidate(x, y, w, all, Candidate::Intercept, config, e_dim, w_dim);
    sel.selected = Candidate::Intercept;
    sel.fallback = true;
    sel.note = e.what();
  }
  model.selection_ = sel;
  return model;
}

}  // namespace hiertmle
