#include "hiertmle/interventions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hiertmle/errors.hpp"
#include "text_util.hpp"

namespace hiertmle {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool same_point(double a, double b) { return std::abs(a - b) <= 1e-9 * (1.0 + std::abs(a)); }

void require_finite(double v, const std::string& what) {
  if (!std::isfinite(v)) throw SpecError(what + " must be finite");
}

}  // namespace

std::string_view to_string(InterventionKind k) {
  switch (k) {
    case InterventionKind::Static: return "static";
    case InterventionKind::Shift: return "shift";
    case InterventionKind::TruncatedShift: return "truncated_shift";
    case InterventionKind::Table: return "table";
  }
  return "?";
}

InterventionKind intervention_kind_from_string(std::string_view s) {
  if (s == "static") return InterventionKind::Static;
  if (s == "shift") return InterventionKind::Shift;
  if (s == "truncated_shift") return InterventionKind::TruncatedShift;
  if (s == "table") return InterventionKind::Table;
  throw ConfigError("unknown intervention kind '" + std::string(s) +
                    "' (expected static, shift, truncated_shift or table)");
}

double ShiftFunction::operator()(std::span<const double> e, std::span<const double> w) const {
  if (e_coef.size() + 1 > std::max<std::size_t>(e.size(), 1) || w_coef.size() > w.size()) {
    throw DimensionMismatch("shift function uses more covariates than the context provides");
  }
  double v = intercept;
  for (std::size_t k = 0; k < e_coef.size(); ++k) v += e_coef[k] * e[k + 1];
  for (std::size_t k = 0; k < w_coef.size(); ++k) v += w_coef[k] * w[k];
  return v;
}

void InterventionSpec::validate() const {
  switch (kind) {
    case InterventionKind::Static:
      require_finite(a_star, "a_star");
      break;
    case InterventionKind::Shift:
    case InterventionKind::TruncatedShift:
      require_finite(nu.intercept, "shift amount");
      for (double c : nu.e_coef) require_finite(c, "shift coefficient");
      for (double c : nu.w_coef) require_finite(c, "shift coefficient");
      if (floor) require_finite(*floor, "floor");
      break;
    case InterventionKind::Table:
      if (table.empty()) throw SpecError("table intervention has no strata");
      for (const auto& [key, entries] : table) {
        if (entries.empty()) throw SpecError("table stratum '" + key + "' is empty");
        double total = 0.0;
        for (const auto& t : entries) {
          require_finite(t.a, "table exposure");
          if (!(t.prob >= 0.0) || !std::isfinite(t.prob)) {
            throw SpecError("table stratum '" + key + "' has a negative probability");
          }
          total += t.prob;
        }
        if (std::abs(total - 1.0) > 1e-9) {
          throw SpecError("table stratum '" + key + "' probabilities sum to " + fmt_double(total));
        }
      }
      break;
  }
}

InterventionSpec static_intervention(double a_star, std::string name) {
  InterventionSpec s;
  s.kind = InterventionKind::Static;
  s.a_star = a_star;
  s.name = name.empty() ? "static_" + fmt_double(a_star) : std::move(name);
  return s;
}

InterventionSpec shift_intervention(double nu, std::string name) {
  InterventionSpec s;
  s.kind = InterventionKind::Shift;
  s.nu.intercept = nu;
  s.name = name.empty() ? "shift_" + fmt_double(nu) : std::move(name);
  return s;
}

InterventionSpec truncated_shift_intervention(double nu, std::optional<double> floor,
                                              std::string name) {
  InterventionSpec s;
  s.kind = InterventionKind::TruncatedShift;
  s.nu.intercept = nu;
  s.floor = floor;
  s.name = name.empty() ? "truncated_shift_" + fmt_double(nu) : std::move(name);
  return s;
}

std::map<std::string, std::vector<TableEntry>> parse_table(const std::string& csv_text) {
  auto lines = split_lines(csv_text);
  if (lines.empty()) throw SchemaError("table file is empty");
  auto header = split_csv_line(lines[0]);
  if (header != std::vector<std::string>{"stratum_key", "a", "prob"}) {
    throw SchemaError("table header must be 'stratum_key,a,prob'");
  }
  std::map<std::string, std::vector<TableEntry>> table;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    auto f = split_csv_line(lines[i]);
    if (f.size() != 3) {
      throw ParseError("line " + std::to_string(i + 1) + ": expected 3 fields, got " +
                       std::to_string(f.size()));
    }
    table[f[0]].push_back({parse_number(f[1], i + 1, "a"), parse_number(f[2], i + 1, "prob")});
  }
  return table;
}

std::map<std::string, std::vector<TableEntry>> load_table(const std::filesystem::path& path) {
  return parse_table(read_text_file(path));
}

const std::vector<TableEntry>& table_stratum(const InterventionSpec& spec,
                                             std::span<const double> e) {
  if (spec.stratum_e_index && *spec.stratum_e_index < e.size()) {
    double v = e[*spec.stratum_e_index];
    for (const auto& [key, entries] : spec.table) {
      if (key == "*") continue;
      char* end = nullptr;
      double k = std::strtod(key.c_str(), &end);
      if (end != key.c_str() && *end == '\0' && k == v) return entries;
    }
  }
  auto it = spec.table.find("*");
  if (it == spec.table.end()) {
    throw UnsupportedValue("no table stratum matches this community and no '*' default exists");
  }
  return it->second;
}

double InterventionDistribution::density_at(double a) const {
  double d = 0.0;
  for (const auto& c : cells) {
    if (discrete) {
      if (same_point(a, c.a)) d += c.mass;
    } else if (!c.is_point() && a >= c.lo && a < c.hi) {
      d += c.mass / (c.hi - c.lo);
    }
  }
  return d;
}

double InterventionDistribution::total_mass() const {
  double t = 0.0;
  for (const auto& c : cells) t += c.mass;
  return t;
}

double InterventionDistribution::sample(Rng& rng) const {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double total = 0.0;
  for (const auto& n : nodes) total += n.mass;
  double u = unif(rng) * total;
  std::size_t pick = nodes.size() - 1;
  double acc = 0.0;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    acc += nodes[k].mass;
    if (u < acc) {
      pick = k;
      break;
    }
  }
  while (nodes[pick].mass <= 0.0 && pick > 0) --pick;
  const auto& n = nodes[pick];
  if (n.is_point()) return n.a;
  double v = n.lo + unif(rng) * (n.hi - n.lo);
  return std::min(v, std::nextafter(n.hi, -kInf));
}

namespace {

GstarAtom point(double a, double mass) { return {a, mass, a, a}; }

GstarAtom interval(double lo, double hi, double mass) { return {0.5 * (lo + hi), mass, lo, hi}; }

double resolve_floor(const InterventionSpec& spec, const ExposureSupport& support) {
  double f = spec.floor.value_or(support.lower());
  if (f < support.lower()) {
    throw UnsupportedValue("truncation floor " + fmt_double(f) +
                           " lies below the exposure support");
  }
  return f;
}

void build_truncated_continuous(const ExposureSupport& support, const ExposureDistribution& ref,
                                double nu, double floor, InterventionDistribution& g) {
  const auto& c = support.grid().cutoffs;
  const std::size_t K = support.size();
  double atom = 0.0;
  std::vector<GstarAtom> pieces;
  for (std::size_t k = 0; k < K; ++k) {
    double m = ref.mass[k];
    double lo = c[k] - nu;
    double hi = c[k + 1] - nu;
    double bw = c[k + 1] - c[k];
    if (hi <= floor) {
      atom += m;
      continue;
    }
    if (lo < floor) {
      atom += m * (floor - lo) / bw;
      pieces.push_back(interval(floor, hi, m * (hi - floor) / bw));
    } else {
      pieces.push_back(interval(lo, hi, m));
    }
  }
  g.nodes.push_back(point(floor, atom));
  g.nodes.insert(g.nodes.end(), pieces.begin(), pieces.end());

  // Same-grid representation: the floor atom joins the bin containing it.
  double top = c.back();
  for (const auto& p : pieces) top = std::max(top, p.hi);
  std::vector<double> edges = c;
  if (top > c.back()) edges.push_back(top);
  std::vector<double> mass(edges.size() - 1, 0.0);
  for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
    if (floor >= edges[b] && floor < edges[b + 1]) mass[b] += atom;
    for (const auto& p : pieces) {
      double overlap = std::min(p.hi, edges[b + 1]) - std::max(p.lo, edges[b]);
      if (overlap > 0) mass[b] += p.mass * overlap / (p.hi - p.lo);
    }
  }
  for (std::size_t b = 0; b < mass.size(); ++b) {
    g.cells.push_back(interval(edges[b], edges[b + 1], mass[b]));
  }
}

}  // namespace

InterventionDistribution build_gstar(const InterventionSpec& spec, const ExposureSupport& support,
                                     const ExposureDistribution* reference,
                                     std::span<const double> e, std::span<const double> w) {
  InterventionDistribution g;
  g.discrete = support.is_discrete();
  if (spec.needs_reference() && reference == nullptr) {
    throw UnfittedReference(std::string(to_string(spec.kind)) +
                            " intervention needs a fitted exposure density");
  }
  switch (spec.kind) {
    case InterventionKind::Static: {
      auto k = support.cell_of(spec.a_star);
      if (!k) {
        throw UnsupportedValue("a* = " + fmt_double(spec.a_star) +
                               " is outside the exposure support");
      }
      g.nodes.push_back(point(spec.a_star, 1.0));
      if (g.discrete) {
        g.cells.push_back(point(support.point(*k), 1.0));
      } else {
        const auto& c = support.grid().cutoffs;
        g.cells.push_back(interval(c[*k], c[*k + 1], 1.0));
      }
      break;
    }
    case InterventionKind::Shift: {
      double nu = spec.nu(e, w);
      require_finite(nu, "shift amount");
      for (std::size_t k = 0; k < support.size(); ++k) {
        double m = reference->mass[k];
        if (g.discrete) {
          g.nodes.push_back(point(support.point(k) + nu, m));
        } else {
          const auto& c = support.grid().cutoffs;
          g.nodes.push_back(interval(c[k] + nu, c[k + 1] + nu, m));
        }
      }
      g.cells = g.nodes;
      break;
    }
    case InterventionKind::TruncatedShift: {
      double nu = spec.nu(e, w);
      require_finite(nu, "shift amount");
      double floor = resolve_floor(spec, support);
      if (g.discrete) {
        std::vector<double> mass(support.size(), 0.0);
        for (std::size_t k = 0; k < support.size(); ++k) {
          double v = std::max(support.point(k) - nu, floor);
          auto target = support.cell_of(v);
          if (!target) {
            throw UnsupportedValue("truncated shift maps level " + fmt_double(support.point(k)) +
                                   " to " + fmt_double(v) + ", which is not a level");
          }
          mass[*target] += reference->mass[k];
        }
        for (std::size_t k = 0; k < support.size(); ++k) {
          g.nodes.push_back(point(support.point(k), mass[k]));
        }
        g.cells = g.nodes;
      } else {
        build_truncated_continuous(support, *reference, nu, floor, g);
      }
      break;
    }
    case InterventionKind::Table: {
      const auto& entries = table_stratum(spec, e);
      std::vector<double> mass(support.size(), 0.0);
      for (const auto& t : entries) {
        auto k = support.cell_of(t.a);
        if (!k) {
          throw UnsupportedValue("table exposure " + fmt_double(t.a) +
                                 " is outside the exposure support");
        }
        mass[*k] += t.prob;
        g.nodes.push_back(point(t.a, t.prob));
      }
      for (std::size_t k = 0; k < support.size(); ++k) {
        if (mass[k] == 0.0) continue;
        if (g.discrete) {
          g.cells.push_back(point(support.point(k), mass[k]));
        } else {
          const auto& c = support.grid().cutoffs;
          g.cells.push_back(interval(c[k], c[k + 1], mass[k]));
        }
      }
      break;
    }
  }
  return g;
}

double gstar_density(const InterventionSpec& spec, const ConditionalDensityModel* g_hat, double a,
                     std::span<const double> e, std::span<const double> w) {
  if (g_hat == nullptr) {
    if (spec.needs_reference()) {
      throw UnfittedReference(std::string(to_string(spec.kind)) +
                              " intervention needs a fitted exposure density");
    }
    if (spec.kind == InterventionKind::Static) return same_point(a, spec.a_star) ? 1.0 : 0.0;
    double d = 0.0;
    for (const auto& t : table_stratum(spec, e)) {
      if (same_point(a, t.a)) d += t.prob;
    }
    return d;
  }
  auto features = exposure_features(e, w);
  auto ref = g_hat->distribution(features);
  return build_gstar(spec, g_hat->support(), &ref, e, w).density_at(a);
}

double gstar_sample(const InterventionSpec& spec, const ConditionalDensityModel* g_hat,
                    std::span<const double> e, std::span<const double> w, Rng& rng) {
  if (g_hat == nullptr) {
    if (spec.needs_reference()) {
      throw UnfittedReference(std::string(to_string(spec.kind)) +
                              " intervention needs a fitted exposure density");
    }
    return apply_intervention(spec, 0.0, e, w, rng);
  }
  auto features = exposure_features(e, w);
  auto ref = g_hat->distribution(features);
  return build_gstar(spec, g_hat->support(), &ref, e, w).sample(rng);
}

double apply_intervention(const InterventionSpec& spec, double a_natural,
                          std::span<const double> e, std::span<const double> w, Rng& rng) {
  switch (spec.kind) {
    case InterventionKind::Static:
      return spec.a_star;
    case InterventionKind::Shift:
      return a_natural + spec.nu(e, w);
    case InterventionKind::TruncatedShift:
      if (!spec.floor) {
        throw SpecError("truncated shift needs an explicit floor outside estimation");
      }
      return std::max(a_natural - spec.nu(e, w), *spec.floor);
    case InterventionKind::Table: {
      const auto& entries = table_stratum(spec, e);
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      double u = unif(rng);
      double acc = 0.0;
      for (const auto& t : entries) {
        acc += t.prob;
        if (u < acc) return t.a;
      }
      return entries.back().a;
    }
  }
  return a_natural;
}

PositivitySummary summarize_ratios(std::vector<double> ratios, double cap) {
  PositivitySummary s;
  s.cap = cap;
  s.ratios = ratios;
  std::sort(ratios.begin(), ratios.end());
  for (double q : {0.0, 0.25, 0.5, 0.75, 0.9, 0.99, 1.0}) {
    double v = 0.0;
    if (!ratios.empty()) {
      double pos = q * static_cast<double>(ratios.size() - 1);
      auto lo = static_cast<std::size_t>(std::floor(pos));
      auto hi = std::min(lo + 1, ratios.size() - 1);
      double frac = pos - static_cast<double>(lo);
      v = frac == 0.0 || std::isinf(ratios[hi]) ? (frac == 0.0 ? ratios[lo] : kInf)
                                                : ratios[lo] + frac * (ratios[hi] - ratios[lo]);
    }
    s.quantiles.emplace_back(q, v);
  }
  s.max_ratio = ratios.empty() ? 0.0 : ratios.back();
  s.n_above_cap = static_cast<std::size_t>(
      std::count_if(ratios.begin(), ratios.end(), [cap](double r) { return r > cap; }));
  return s;
}

PositivitySummary positivity_diagnostic(const InterventionSpec& spec,
                                        const ConditionalDensityModel& g_hat,
                                        const HierarchicalDataset& data, double cap,
                                        double low_density) {
  std::vector<double> ratios(data.size());
  std::size_t low = 0, zero = 0, violations = 0;
  for (std::size_t j = 0; j < data.size(); ++j) {
    const auto& c = data.community(j);
    const auto& w = data.w_summary(j);
    auto ref = g_hat.distribution(exposure_features(c.e, w));
    auto g = build_gstar(spec, g_hat.support(), &ref, c.e, w);
    double gs = g.density_at(c.a);
    double gh = ref.density_at(c.a);
    if (gh > 0.0) {
      ratios[j] = gs / gh;
    } else {
      ratios[j] = gs > 0.0 ? kInf : 0.0;
      if (gs > 0.0) ++zero;
    }
    if (gs > 0.0 && gh < low_density) ++low;
    for (const auto& n : g.nodes) {
      if (n.mass > 0.0 && ref.density_at(n.a) == 0.0) ++violations;
    }
  }
  auto s = summarize_ratios(ratios, cap);
  for (auto& r : s.ratios) r = std::min(r, std::numeric_limits<double>::max());
  for (auto& q : s.quantiles) q.second = std::min(q.second, std::numeric_limits<double>::max());
  s.max_ratio = std::min(s.max_ratio, std::numeric_limits<double>::max());
  s.n_low_density = low;
  s.n_zero_density = zero;
  s.support_violations = violations;
  return s;
}

}  // namespace hiertmle
