#include "hiertmle/config.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

#include "hiertmle/errors.hpp"
#include "text_util.hpp"

namespace hiertmle {

using nlohmann::json;

std::string_view to_string(SeedSource s) {
  switch (s) {
    case SeedSource::Default: return "default";
    case SeedSource::Config: return "config";
    case SeedSource::Flag: return "flag";
  }
  return "?";
}

namespace {

std::string strip_prefix(const std::string& what) {
  auto pos = what.find(": ");
  return pos == std::string::npos ? what : what.substr(pos + 2);
}

class Reader {
 public:
  explicit Reader(const std::string& text) : text_(text) {}

  [[noreturn]] void fail(const std::string& path, const std::string& msg) const {
    throw ConfigError(path + ": " + msg + line_hint(path));
  }

 private:
  std::string line_hint(const std::string& path) const {
    auto dot = path.find_last_of('.');
    std::string key = dot == std::string::npos ? path : path.substr(dot + 1);
    auto br = key.find('[');
    if (br != std::string::npos) key = key.substr(0, br);
    if (key.empty() || key == "$") return {};
    auto pos = text_.find("\"" + key + "\"");
    if (pos == std::string::npos) return {};
    auto line = 1 + std::count(text_.begin(), text_.begin() + static_cast<long>(pos), '\n');
    return " (line " + std::to_string(line) + ")";
  }

  const std::string& text_;
};

class Obj {
 public:
  Obj(const Reader& r, const json& j, std::string path) : r_(r), j_(j), path_(std::move(path)) {
    if (!j_.is_object()) r_.fail(path_, "expected an object");
  }

  const json* opt(const std::string& key) {
    used_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  std::string sub(const std::string& key) const { return path_ + "." + key; }
  const std::string& path() const { return path_; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!used_.count(it.key())) r_.fail(sub(it.key()), "unknown key");
    }
  }

 private:
  const Reader& r_;
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

double num(const Reader& r, const json& v, const std::string& path) {
  if (!v.is_number()) r.fail(path, "expected a number");
  double d = v.get<double>();
  if (!std::isfinite(d)) r.fail(path, "must be finite");
  return d;
}

std::uint64_t unsigned_int(const Reader& r, const json& v, const std::string& path) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) {
    return static_cast<std::uint64_t>(v.get<std::int64_t>());
  }
  r.fail(path, "expected a nonnegative integer");
}

std::string str(const Reader& r, const json& v, const std::string& path) {
  if (!v.is_string()) r.fail(path, "expected a string");
  return v.get<std::string>();
}

bool boolean(const Reader& r, const json& v, const std::string& path) {
  if (!v.is_boolean()) r.fail(path, "expected true or false");
  return v.get<bool>();
}

std::vector<double> nums(const Reader& r, const json& v, const std::string& path) {
  if (!v.is_array()) r.fail(path, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t k = 0; k < v.size(); ++k) {
    out.push_back(num(r, v[k], path + "[" + std::to_string(k) + "]"));
  }
  return out;
}

template <class Fn>
auto enum_value(const Reader& r, const json& v, const std::string& path, Fn fn) {
  std::string s = str(r, v, path);
  try {
    return fn(s);
  } catch (const ConfigError& e) {
    r.fail(path, strip_prefix(e.what()));
  }
}

std::vector<Candidate> candidates(const Reader& r, const json& v, const std::string& path) {
  if (!v.is_array() || v.empty()) r.fail(path, "expected a nonempty array of candidate names");
  std::vector<Candidate> out;
  for (std::size_t k = 0; k < v.size(); ++k) {
    out.push_back(enum_value(r, v[k], path + "[" + std::to_string(k) + "]",
                             [](const std::string& s) { return candidate_from_string(s); }));
  }
  return out;
}

OutcomeBounds bounds(const Reader& r, const json& v, const std::string& path) {
  auto b = nums(r, v, path);
  if (b.size() != 2 || !(b[1] > b[0])) r.fail(path, "expected [lo, hi] with lo < hi");
  return {b[0], b[1]};
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_relative() && !base.empty()) return base / path;
  return path;
}

CovariateLaw covariate_law(const Reader& r, const json& v, const std::string& path) {
  Obj o(r, v, path);
  CovariateLaw law;
  if (auto* d = o.opt("dist")) {
    std::string s = str(r, *d, o.sub("dist"));
    if (s == "normal") {
      law.dist = CovariateDist::Normal;
    } else if (s == "uniform") {
      law.dist = CovariateDist::Uniform;
    } else {
      r.fail(o.sub("dist"), "expected normal or uniform");
    }
  }
  if (auto* p = o.opt("p1")) law.p1 = num(r, *p, o.sub("p1"));
  if (auto* p = o.opt("p2")) law.p2 = num(r, *p, o.sub("p2"));
  o.finish();
  return law;
}

DGPSpec dgp_block(const Reader& r, const json& v, const std::string& path) {
  Obj o(r, v, path);
  DGPSpec d;
  if (auto* p = o.opt("preset")) {
    std::string name = str(r, *p, o.sub("preset"));
    try {
      d = dgp_preset(name);
    } catch (const SpecError& e) {
      r.fail(o.sub("preset"), strip_prefix(e.what()));
    }
  }
  auto count = [&](const char* k, std::size_t& dst) {
    if (auto* p = o.opt(k)) dst = unsigned_int(r, *p, o.sub(k));
  };
  auto real = [&](const char* k, double& dst) {
    if (auto* p = o.opt(k)) dst = num(r, *p, o.sub(k));
  };
  auto vec = [&](const char* k, std::vector<double>& dst) {
    if (auto* p = o.opt(k)) dst = nums(r, *p, o.sub(k));
  };
  count("communities", d.communities);
  count("n_min", d.n_min);
  count("n_max", d.n_max);
  if (auto* p = o.opt("n")) d.n_min = d.n_max = unsigned_int(r, *p, o.sub("n"));
  if (auto* p = o.opt("e_laws")) {
    if (!p->is_array()) r.fail(o.sub("e_laws"), "expected an array");
    d.e_laws.clear();
    for (std::size_t k = 0; k < p->size(); ++k) {
      d.e_laws.push_back(covariate_law(r, (*p)[k], o.sub("e_laws") + "[" + std::to_string(k) + "]"));
    }
  }
  count("w_dim", d.w_dim);
  vec("w_intercept", d.w_intercept);
  if (auto* p = o.opt("w_gamma")) {
    if (!p->is_array()) r.fail(o.sub("w_gamma"), "expected an array of arrays");
    d.w_gamma.clear();
    for (std::size_t k = 0; k < p->size(); ++k) {
      d.w_gamma.push_back(nums(r, (*p)[k], o.sub("w_gamma") + "[" + std::to_string(k) + "]"));
    }
  }
  vec("w_sd", d.w_sd);
  real("rho", d.rho);
  if (auto* p = o.opt("a_family")) {
    std::string s = str(r, *p, o.sub("a_family"));
    if (s == "bernoulli") {
      d.a_family = ExposureFamily::Bernoulli;
    } else if (s == "normal") {
      d.a_family = ExposureFamily::Normal;
    } else if (s == "binomial") {
      d.a_family = ExposureFamily::Binomial;
    } else {
      r.fail(o.sub("a_family"), "expected bernoulli, normal or binomial");
    }
  }
  real("a_intercept", d.a_intercept);
  vec("a_e", d.a_e);
  vec("a_w", d.a_w);
  real("a_sd", d.a_sd);
  if (auto* p = o.opt("a_trials")) d.a_trials = static_cast<int>(unsigned_int(r, *p, o.sub("a_trials")));
  real("a_confounding", d.a_confounding);
  if (auto* p = o.opt("y_family")) {
    std::string s = str(r, *p, o.sub("y_family"));
    if (s == "bernoulli") {
      d.y_family = OutcomeFamily::Bernoulli;
    } else if (s == "gaussian") {
      d.y_family = OutcomeFamily::Gaussian;
    } else {
      r.fail(o.sub("y_family"), "expected bernoulli or gaussian");
    }
  }
  if (auto* p = o.opt("y_link")) {
    std::string s = str(r, *p, o.sub("y_link"));
    if (s == "logit") {
      d.y_link = OutcomeLink::Logit;
    } else if (s == "identity") {
      d.y_link = OutcomeLink::Identity;
    } else {
      r.fail(o.sub("y_link"), "expected logit or identity");
    }
  }
  real("y_intercept", d.y_intercept);
  real("y_a", d.y_a);
  vec("y_e", d.y_e);
  vec("y_w", d.y_w);
  vec("y_interference", d.y_interference);
  real("y_re_sd", d.y_re_sd);
  real("y_confounding", d.y_confounding);
  real("y_contagion", d.y_contagion);
  real("y_sd", d.y_sd);
  if (auto* p = o.opt("bounds")) d.bounds = bounds(r, *p, o.sub("bounds"));
  if (auto* p = o.opt("seed")) d.seed = unsigned_int(r, *p, o.sub("seed"));
  o.finish();
  try {
    d.validate();
  } catch (const SpecError& e) {
    r.fail(path, strip_prefix(e.what()));
  }
  return d;
}

InterventionSpec intervention_block(const Reader& r, const json& v, const std::string& path,
                                    const std::filesystem::path& base_dir) {
  Obj o(r, v, path);
  InterventionSpec s;
  auto* kind = o.opt("kind");
  if (!kind) r.fail(path, "missing 'kind'");
  s.kind = enum_value(r, *kind, o.sub("kind"),
                      [](const std::string& x) { return intervention_kind_from_string(x); });
  if (auto* p = o.opt("a_star")) s.a_star = num(r, *p, o.sub("a_star"));
  if (auto* p = o.opt("nu")) {
    if (p->is_number()) {
      s.nu.intercept = num(r, *p, o.sub("nu"));
    } else {
      Obj n(r, *p, o.sub("nu"));
      if (auto* q = n.opt("intercept")) s.nu.intercept = num(r, *q, n.sub("intercept"));
      if (auto* q = n.opt("e")) s.nu.e_coef = nums(r, *q, n.sub("e"));
      if (auto* q = n.opt("w")) s.nu.w_coef = nums(r, *q, n.sub("w"));
      n.finish();
    }
  }
  if (auto* p = o.opt("floor")) s.floor = num(r, *p, o.sub("floor"));
  if (auto* p = o.opt("table_path")) {
    try {
      s.table = load_table(resolve(base_dir, str(r, *p, o.sub("table_path"))));
    } catch (const IoError&) {
      throw;
    } catch (const Error& e) {
      r.fail(o.sub("table_path"), strip_prefix(e.what()));
    }
  }
  if (auto* p = o.opt("table")) {
    Obj t(r, *p, o.sub("table"));
    for (auto it = p->begin(); it != p->end(); ++it) {
      t.opt(it.key());
      std::string tp = t.sub(it.key());
      if (!it->is_array()) r.fail(tp, "expected an array of [a, prob] pairs");
      for (std::size_t k = 0; k < it->size(); ++k) {
        auto pair = nums(r, (*it)[k], tp + "[" + std::to_string(k) + "]");
        if (pair.size() != 2) r.fail(tp + "[" + std::to_string(k) + "]", "expected [a, prob]");
        s.table[it.key()].push_back({pair[0], pair[1]});
      }
    }
  }
  if (auto* p = o.opt("stratum")) {
    std::string col = str(r, *p, o.sub("stratum"));
    if (col == "n") {
      s.stratum_e_index = 0;
    } else if (col.size() > 2 && col.rfind("e_", 0) == 0 &&
               std::all_of(col.begin() + 2, col.end(), ::isdigit)) {
      s.stratum_e_index = std::stoul(col.substr(2));
    } else {
      r.fail(o.sub("stratum"), "expected 'n' or 'e_k'");
    }
  }
  switch (s.kind) {
    case InterventionKind::Static:
      if (!o.opt("a_star") || !v.contains("a_star")) r.fail(path, "static intervention needs 'a_star'");
      break;
    case InterventionKind::Shift:
    case InterventionKind::TruncatedShift:
      if (!v.contains("nu")) r.fail(path, "shift intervention needs 'nu'");
      break;
    case InterventionKind::Table:
      if (s.table.empty()) r.fail(path, "table intervention needs 'table' or 'table_path'");
      break;
  }
  if (auto* p = o.opt("name")) {
    s.name = str(r, *p, o.sub("name"));
  } else {
    switch (s.kind) {
      case InterventionKind::Static: s.name = "static_" + fmt_double(s.a_star); break;
      case InterventionKind::Shift: s.name = "shift_" + fmt_double(s.nu.intercept); break;
      case InterventionKind::TruncatedShift:
        s.name = "truncated_shift_" + fmt_double(s.nu.intercept);
        break;
      case InterventionKind::Table: s.name = "table"; break;
    }
  }
  o.finish();
  try {
    s.validate();
  } catch (const SpecError& e) {
    r.fail(path, strip_prefix(e.what()));
  }
  return s;
}

}  // namespace

void RunConfig::validate() const {
  if (input.has_value() == dgp.has_value()) {
    throw ConfigError("exactly one of 'input' and 'dgp' must be given");
  }
  validate_settings();
}

void RunConfig::validate_settings() const {
  if (interventions.empty()) throw ConfigError("at least one intervention is required");
  std::set<std::string> names;
  for (const auto& s : interventions) {
    if (!names.insert(s.name).second) {
      throw ConfigError("intervention name '" + s.name + "' is used twice");
    }
  }
  for (const auto& c : contrasts) {
    if (!names.count(c.first) || !names.count(c.second)) {
      throw ConfigError("contrast refers to an undeclared intervention ('" + c.first + "', '" +
                        c.second + "')");
    }
  }
  if (density.cv_folds < 2 || outcome.cv_folds < 2) throw ConfigError("cv_folds must be >= 2");
  if (density.k_bins && *density.k_bins < 1) throw ConfigError("k_bins must be >= 1");
  if (!(density.hazard_clip > 0.0 && density.hazard_clip < 0.5)) {
    throw ConfigError("hazard_clip must lie in (0, 0.5)");
  }
  targeting.validate();
  if (targeting.level == TargetLevel::Individual &&
      outcome.level != OutcomeLevel::PooledIndividual) {
    throw ConfigError("targeting.level 'individual' needs outcome.level 'pooled_individual'");
  }
  if (individual_g.m_profiles < 1) throw ConfigError("individual_g.m_profiles must be >= 1");
  if (replicates < 1) throw ConfigError("benchmark.replicates must be >= 1");
  if (oracle_draws < 10000) throw ConfigError("benchmark.oracle_draws must be >= 10000");
  if (threads < 1) throw ConfigError("threads must be >= 1");
}

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t byte = std::min<std::size_t>(e.byte, text.size());
    std::size_t line = 1, col = 1;
    for (std::size_t k = 0; k + 1 < byte; ++k) {
      if (text[k] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    std::string msg = e.what();
    auto pos = msg.find("parse error");
    throw ConfigError("line " + std::to_string(line) + ", column " + std::to_string(col) +
                      ": malformed JSON (" + (pos == std::string::npos ? msg : msg.substr(pos)) +
                      ")");
  }
  Reader r(text);
  Obj o(r, root, "$");
  RunConfig cfg;
  if (auto* p = o.opt("input")) cfg.input = resolve(base_dir, str(r, *p, o.sub("input")));
  if (auto* p = o.opt("dgp")) cfg.dgp = dgp_block(r, *p, o.sub("dgp"));
  if (auto* p = o.opt("seed")) {
    cfg.seed = unsigned_int(r, *p, o.sub("seed"));
    cfg.seed_source = SeedSource::Config;
  }
  if (auto* p = o.opt("outcome_bounds")) cfg.outcome_bounds = bounds(r, *p, o.sub("outcome_bounds"));
  if (auto* p = o.opt("exposure_type")) {
    cfg.density.exposure_type =
        enum_value(r, *p, o.sub("exposure_type"),
                   [](const std::string& s) { return exposure_type_from_string(s); });
  }
  if (auto* p = o.opt("interventions")) {
    if (!p->is_array()) r.fail(o.sub("interventions"), "expected an array");
    for (std::size_t k = 0; k < p->size(); ++k) {
      cfg.interventions.push_back(intervention_block(
          r, (*p)[k], o.sub("interventions") + "[" + std::to_string(k) + "]", base_dir));
    }
  }
  if (auto* p = o.opt("contrasts")) {
    if (!p->is_array()) r.fail(o.sub("contrasts"), "expected an array");
    for (std::size_t k = 0; k < p->size(); ++k) {
      std::string cp = o.sub("contrasts") + "[" + std::to_string(k) + "]";
      const json& c = (*p)[k];
      if (c.is_array() && c.size() == 2) {
        cfg.contrasts.push_back({str(r, c[0], cp), str(r, c[1], cp)});
      } else {
        Obj co(r, c, cp);
        auto* f = co.opt("first");
        auto* s = co.opt("second");
        if (!f || !s) r.fail(cp, "expected {\"first\": ..., \"second\": ...}");
        cfg.contrasts.push_back({str(r, *f, co.sub("first")), str(r, *s, co.sub("second"))});
        co.finish();
      }
    }
  }
  if (auto* p = o.opt("density")) {
    Obj d(r, *p, o.sub("density"));
    if (auto* q = d.opt("k_bins")) cfg.density.k_bins = unsigned_int(r, *q, d.sub("k_bins"));
    if (auto* q = d.opt("strategy")) {
      cfg.density.strategy = enum_value(r, *q, d.sub("strategy"), [](const std::string& s) {
        return bin_strategy_from_string(s);
      });
    }
    if (auto* q = d.opt("candidates")) cfg.density.candidates = candidates(r, *q, d.sub("candidates"));
    if (auto* q = d.opt("cv_folds")) cfg.density.cv_folds = unsigned_int(r, *q, d.sub("cv_folds"));
    if (auto* q = d.opt("hazard_clip")) cfg.density.hazard_clip = num(r, *q, d.sub("hazard_clip"));
    if (auto* q = d.opt("fixed_masses")) cfg.fixed_density_masses = nums(r, *q, d.sub("fixed_masses"));
    d.finish();
  }
  if (auto* p = o.opt("outcome")) {
    Obj d(r, *p, o.sub("outcome"));
    if (auto* q = d.opt("level")) {
      cfg.outcome.level = enum_value(r, *q, d.sub("level"), [](const std::string& s) {
        return outcome_level_from_string(s);
      });
    }
    if (auto* q = d.opt("loss")) {
      cfg.outcome.loss = enum_value(r, *q, d.sub("loss"), [](const std::string& s) {
        return outcome_loss_from_string(s);
      });
    }
    if (auto* q = d.opt("candidates")) cfg.outcome.candidates = candidates(r, *q, d.sub("candidates"));
    if (auto* q = d.opt("cv_folds")) cfg.outcome.cv_folds = unsigned_int(r, *q, d.sub("cv_folds"));
    if (auto* q = d.opt("neighbor_map_path")) {
      cfg.neighbor_map_path = resolve(base_dir, str(r, *q, d.sub("neighbor_map_path")));
    }
    d.finish();
  }
  if (auto* p = o.opt("targeting")) {
    Obj d(r, *p, o.sub("targeting"));
    if (auto* q = d.opt("variant")) {
      cfg.targeting.variant = enum_value(r, *q, d.sub("variant"), [](const std::string& s) {
        return fluctuation_variant_from_string(s);
      });
    }
    if (auto* q = d.opt("level")) {
      cfg.targeting.level = enum_value(r, *q, d.sub("level"), [](const std::string& s) {
        return target_level_from_string(s);
      });
    }
    if (auto* q = d.opt("integration")) {
      if (q->is_string()) {
        cfg.targeting.integration = enum_value(r, *q, d.sub("integration"), [](const std::string& s) {
          return integration_method_from_string(s);
        });
      } else {
        Obj in(r, *q, d.sub("integration"));
        if (auto* m = in.opt("method")) {
          cfg.targeting.integration = enum_value(r, *m, in.sub("method"), [](const std::string& s) {
            return integration_method_from_string(s);
          });
        }
        if (auto* m = in.opt("draws")) cfg.targeting.mc_draws = unsigned_int(r, *m, in.sub("draws"));
        in.finish();
      }
    }
    if (auto* q = d.opt("ratio_cap")) cfg.targeting.ratio_cap = num(r, *q, d.sub("ratio_cap"));
    d.finish();
  }
  if (auto* p = o.opt("individual_g")) {
    Obj d(r, *p, o.sub("individual_g"));
    if (auto* q = d.opt("plan")) {
      cfg.individual_g.plan = enum_value(r, *q, d.sub("plan"), [](const std::string& s) {
        return marginalization_plan_from_string(s);
      });
    }
    if (auto* q = d.opt("m_profiles")) cfg.individual_g.m_profiles = unsigned_int(r, *q, d.sub("m_profiles"));
    d.finish();
  }
  if (auto* p = o.opt("inference")) {
    Obj d(r, *p, o.sub("inference"));
    if (auto* q = d.opt("include_eic")) cfg.include_eic = boolean(r, *q, d.sub("include_eic"));
    d.finish();
  }
  if (auto* p = o.opt("benchmark")) {
    Obj d(r, *p, o.sub("benchmark"));
    if (auto* q = d.opt("replicates")) cfg.replicates = unsigned_int(r, *q, d.sub("replicates"));
    if (auto* q = d.opt("oracle_draws")) cfg.oracle_draws = unsigned_int(r, *q, d.sub("oracle_draws"));
    d.finish();
  }
  if (auto* p = o.opt("threads")) cfg.threads = unsigned_int(r, *p, o.sub("threads"));
  if (auto* p = o.opt("output")) cfg.output = resolve(base_dir, str(r, *p, o.sub("output")));
  o.finish();
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::string text = read_text_file(path);
  try {
    return parse_run_config(text, path.parent_path());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + strip_prefix(e.what()));
  }
}

DGPSpec parse_dgp_spec(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed DGP JSON: ") + e.what());
  }
  Reader r(json_text);
  return dgp_block(r, root, "$");
}

}  // namespace hiertmle
