#include "hiertmle/pipeline.hpp"

#include <cmath>
#include <limits>
#include <map>

#include "hiertmle/errors.hpp"
#include "hiertmle/random.hpp"

namespace hiertmle {

namespace {

constexpr std::uint64_t kDensityStream = 1;
constexpr std::uint64_t kOutcomeStream = 2;
constexpr std::uint64_t kIndividualStream = 3;
constexpr std::uint64_t kIntegrationStream = 4;
constexpr std::uint64_t kOracleStream = 5;

ConditionalDensityModel fit_exposure_model(const HierarchicalDataset& data, const RunConfig& cfg) {
  DensityConfig dcfg = cfg.density;
  dcfg.seed = derive_seed(cfg.seed, kDensityStream);
  auto a = data.exposures();
  Eigen::MatrixXd x = exposure_feature_matrix(data);
  if (cfg.fixed_density_masses) {
    auto support = make_support(a, dcfg);
    if (cfg.fixed_density_masses->size() != support->size()) {
      throw ConfigError("density.fixed_masses has " +
                        std::to_string(cfg.fixed_density_masses->size()) +
                        " entries but the exposure support has " +
                        std::to_string(support->size()) + " cells");
    }
    return ConditionalDensityModel::fixed(support, *cfg.fixed_density_masses,
                                          static_cast<std::size_t>(x.cols()), dcfg.hazard_clip);
  }
  return fit_density(a, x, dcfg);
}

double mean_marginalization_se(const HierarchicalDataset& data,
                               const std::vector<CommunityContext>& contexts,
                               const IndividualDensityModel& model) {
  if (model.exact()) return 0.0;
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t j = 0; j < data.size(); ++j) {
    for (std::size_t i = 0; i < contexts[j].w_rows.size(); ++i) {
      s += model.mc_standard_error(data.community(j).a, contexts[j], j, i);
      ++n;
    }
  }
  return n ? s / static_cast<double>(n) : 0.0;
}

}  // namespace

HierarchicalDataset load_input(const RunConfig& cfg) {
  if (cfg.input) {
    DatasetSchema schema;
    schema.bounds = cfg.outcome_bounds;
    return load_dataset(*cfg.input, schema);
  }
  if (!cfg.dgp) throw ConfigError("no data source: give 'input' or 'dgp'");
  DGPSpec dgp = *cfg.dgp;
  if (cfg.seed_source != SeedSource::Default) dgp.seed = cfg.seed;
  auto data = generate(dgp);
  if (cfg.outcome_bounds) return data.with_bounds(*cfg.outcome_bounds);
  return data;
}

EstimationResult run_estimation(const HierarchicalDataset& data, const RunConfig& cfg) {
  cfg.validate_settings();
  EstimationResult res;
  res.seed = cfg.seed;
  res.seed_source = cfg.seed_source;
  res.fingerprint = dataset_fingerprint(data);
  res.communities = data.size();
  res.individuals = data.total_individuals();
  res.bounds = data.bounds();
  res.include_eic = cfg.include_eic;

  std::optional<NeighborMap> neighbors;
  if (cfg.neighbor_map_path) neighbors = load_neighbor_map(*cfg.neighbor_map_path, data);
  auto contexts = build_contexts(data, neighbors ? &*neighbors : nullptr);

  ConditionalDensityModel g_hat = fit_exposure_model(data, cfg);
  res.density.exposure_type = g_hat.exposure_type();
  res.density.support_size = g_hat.support().size();
  if (!g_hat.support().is_discrete()) res.density.strategy = cfg.density.strategy;
  res.density.fixed = cfg.fixed_density_masses.has_value();
  res.density.selection = g_hat.selection();

  OutcomeConfig ocfg = cfg.outcome;
  ocfg.seed = derive_seed(cfg.seed, kOutcomeStream);
  OutcomeModel q_hat = fit_initial_outcome(data, contexts, ocfg);
  res.outcome.level = q_hat.level();
  res.outcome.loss = q_hat.loss();
  res.outcome.neighbor_features = neighbors.has_value();
  res.outcome.selection = q_hat.selection();
  if (res.density.selection.fallback) {
    res.warnings.push_back("exposure density: " + res.density.selection.note);
  }
  if (res.outcome.selection.fallback) {
    res.warnings.push_back("outcome regression: " + res.outcome.selection.note);
  }

  std::optional<IndividualDensityModel> g_hat_i;
  double marginal_se = 0.0;
  if (cfg.targeting.level == TargetLevel::Individual) {
    IndividualDensityConfig icfg = cfg.individual_g;
    icfg.seed = derive_seed(cfg.seed, kIndividualStream);
    g_hat_i.emplace(g_hat, contexts, icfg);
    for (const auto& w : g_hat_i->warnings()) res.warnings.push_back(w);
    marginal_se = mean_marginalization_se(data, contexts, *g_hat_i);
  }

  TargetingConfig tcfg = cfg.targeting;
  tcfg.mc_seed = derive_seed(cfg.seed, kIntegrationStream);
  for (const auto& spec : cfg.interventions) {
    TargetingProblem problem =
        g_hat_i ? prepare_individual_targeting(data, contexts, *g_hat_i, q_hat, spec, tcfg)
                : prepare_community_targeting(data, contexts, g_hat, q_hat, spec, tcfg);
    TargetedFit fit = target(problem);
    EstimateReport report = make_report(problem, fit, data.bounds(), spec.name, res.fingerprint);
    auto& dg = report.diagnostics;
    if (!g_hat_i) {
      dg.positivity = positivity_diagnostic(spec, g_hat, data, tcfg.ratio_cap);
    }
    dg.density_selection = res.density.selection;
    dg.outcome_selection = res.outcome.selection;
    dg.marginalization_mc_se = marginal_se;
    if (dg.positivity.support_violations > 0) {
      dg.warnings.push_back(std::to_string(dg.positivity.support_violations) +
                            " intervention support points where the fitted exposure density is 0");
    }
    for (const auto& w : dg.warnings) res.warnings.push_back(spec.name + ": " + w);
    res.reports.push_back(std::move(report));
  }

  auto find = [&res](const std::string& name) -> const EstimateReport& {
    for (const auto& r : res.reports) {
      if (r.intervention == name) return r;
    }
    throw ConfigError("contrast refers to unknown intervention '" + name + "'");
  };
  for (const auto& c : cfg.contrasts) {
    res.contrasts.push_back(estimate_contrast(find(c.first), find(c.second)));
  }
  return res;
}

BenchmarkResult run_benchmark(const RunConfig& cfg) {
  cfg.validate();
  if (!cfg.dgp) throw ConfigError("benchmark needs a 'dgp' block");
  DGPSpec base = *cfg.dgp;
  const std::size_t n_int = cfg.interventions.size();

  std::vector<OracleResult> oracles;
  for (std::size_t k = 0; k < n_int; ++k) {
    oracles.push_back(oracle_psi(base, cfg.interventions[k], cfg.oracle_draws,
                                 derive_seed(cfg.seed, kOracleStream), cfg.threads));
  }

  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::vector<BenchmarkRow>> per_rep(cfg.replicates);
  parallel_for(cfg.replicates, cfg.threads, [&](std::size_t r) {
    std::vector<BenchmarkRow> rows(n_int);
    for (std::size_t k = 0; k < n_int; ++k) {
      rows[k].intervention = cfg.interventions[k].name;
      rows[k].replicate = r;
      rows[k].psi0 = oracles[k].psi0;
      rows[k].mc_se = oracles[k].mc_se;
    }
    try {
      DGPSpec dgp = base;
      dgp.seed = derive_seed(cfg.seed, 1000 + r);
      auto data = generate(dgp);
      if (cfg.outcome_bounds) data = data.with_bounds(*cfg.outcome_bounds);
      RunConfig rc = cfg;
      rc.contrasts.clear();
      rc.seed = derive_seed(cfg.seed, 2000 + r);
      auto est = run_estimation(data, rc);
      for (std::size_t k = 0; k < n_int; ++k) {
        const auto& rep = est.reports[k];
        auto& row = rows[k];
        row.psi_hat = rep.psi_natural;
        row.se = rep.se_natural;
        row.ci_lo = rep.ci_natural.first;
        row.ci_hi = rep.ci_natural.second;
        row.covered = row.ci_lo <= row.psi0 && row.psi0 <= row.ci_hi;
        row.bias = row.psi_hat - row.psi0;
      }
    } catch (const Error& e) {
      for (auto& row : rows) {
        row.psi_hat = row.se = row.ci_lo = row.ci_hi = row.bias = nan;
        row.covered = false;
        row.error = e.what();
      }
    }
    per_rep[r] = std::move(rows);
  });

  BenchmarkResult out;
  for (std::size_t k = 0; k < n_int; ++k) {
    BenchmarkSummary s;
    s.intervention = cfg.interventions[k].name;
    s.psi0 = oracles[k].psi0;
    s.oracle_mc_se = oracles[k].mc_se;
    double sum = 0.0, sum_se = 0.0;
    std::size_t covered = 0;
    std::vector<double> ok;
    for (std::size_t r = 0; r < cfg.replicates; ++r) {
      const auto& row = per_rep[r][k];
      out.rows.push_back(row);
      if (!row.error.empty()) {
        ++s.failed;
        continue;
      }
      ok.push_back(row.psi_hat);
      sum += row.psi_hat;
      sum_se += row.se;
      if (row.covered) ++covered;
    }
    s.ok = ok.size();
    if (s.ok > 0) {
      const double n = static_cast<double>(s.ok);
      s.mean_psi_hat = sum / n;
      s.bias = s.mean_psi_hat - s.psi0;
      s.mean_se = sum_se / n;
      s.coverage = static_cast<double>(covered) / n;
      if (s.ok > 1) {
        double ss = 0.0;
        for (double v : ok) ss += (v - s.mean_psi_hat) * (v - s.mean_psi_hat);
        s.empirical_sd = std::sqrt(ss / (n - 1.0));
      }
    } else {
      s.mean_psi_hat = s.bias = s.mean_se = s.coverage = s.empirical_sd = nan;
    }
    out.summaries.push_back(s);
  }
  return out;
}

}  // namespace hiertmle
