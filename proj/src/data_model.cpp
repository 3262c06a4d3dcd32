#include "hiertmle/data_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <unordered_map>

#include "hiertmle/errors.hpp"
#include "text_util.hpp"

namespace hiertmle {

namespace {

constexpr double kWeightSumTolerance = 1e-12;
// Weights read from text are accepted within this tolerance and renormalized.
constexpr double kWeightInputTolerance = 1e-6;

// Index suffix of "e_3" / "w_12"; nullopt if malformed.
std::optional<int> column_index(const std::string& name, char prefix) {
  if (name.size() < 3 || name[0] != prefix || name[1] != '_') return std::nullopt;
  int idx = 0;
  auto [ptr, ec] = std::from_chars(name.data() + 2, name.data() + name.size(), idx);
  if (ec != std::errc() || ptr != name.data() + name.size() || idx < 1) return std::nullopt;
  return idx;
}

}  // namespace

void OutcomeBounds::validate() const {
  if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi)) {
    throw InvariantError("outcome bounds must satisfy lo < hi, got (" + fmt_double(lo) + ", " +
                         fmt_double(hi) + ")");
  }
}

CommunityOutcome community_outcome(const Community& c, const OutcomeBounds& bounds) {
  bounds.validate();
  if (c.alpha.size() != c.individuals.size()) {
    throw WeightError("community '" + c.id + "': alpha has " + std::to_string(c.alpha.size()) +
                      " entries for " + std::to_string(c.individuals.size()) + " individuals");
  }
  double sum_alpha = 0.0;
  for (double a : c.alpha) {
    if (!(a >= 0.0) || !std::isfinite(a)) {
      throw WeightError("community '" + c.id + "': negative or non-finite weight");
    }
    sum_alpha += a;
  }
  if (std::abs(sum_alpha - 1.0) > kWeightSumTolerance) {
    throw WeightError("community '" + c.id + "': weights sum to " + fmt_double(sum_alpha));
  }
  double y_c = 0.0;
  for (std::size_t i = 0; i < c.individuals.size(); ++i) {
    double y = c.individuals[i].y;
    if (!std::isfinite(y) || y < bounds.lo || y > bounds.hi) {
      throw OutcomeOutOfBounds("community '" + c.id + "': outcome " + fmt_double(y) +
                               " outside [" + fmt_double(bounds.lo) + ", " +
                               fmt_double(bounds.hi) + "]");
    }
    y_c += c.alpha[i] * bounds.scale(y);
  }
  return {std::clamp(y_c, 0.0, 1.0)};
}

NaturalScaleEstimate unscale_estimate(double psi_scaled, double se_scaled,
                                      const OutcomeBounds& bounds) {
  bounds.validate();
  return {bounds.unscale(psi_scaled), bounds.width() * se_scaled};
}

OutcomeBounds empirical_bounds(const std::vector<Community>& communities) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& c : communities) {
    for (const auto& r : c.individuals) {
      lo = std::min(lo, r.y);
      hi = std::max(hi, r.y);
    }
  }
  if (!std::isfinite(lo)) throw InvariantError("no outcomes to derive bounds from");
  if (!(hi > lo)) hi = lo + 1.0;
  return {lo, hi};
}

HierarchicalDataset::HierarchicalDataset(std::vector<Community> communities, OutcomeBounds bounds)
    : communities_(std::move(communities)), bounds_(bounds) {
  bounds_.validate();
  if (communities_.size() < 2) {
    throw InvariantError("a dataset needs at least 2 communities, got " +
                         std::to_string(communities_.size()));
  }
  e_dim_ = communities_.front().e.size();
  w_dim_ = communities_.front().individuals.empty()
               ? 0
               : communities_.front().individuals.front().w.size();
  if (e_dim_ == 0) throw InvariantError("community covariates must include n");
  y_c_.reserve(communities_.size());
  w_summary_.reserve(communities_.size());
  for (const auto& c : communities_) {
    if (c.individuals.empty()) {
      throw InvariantError("community '" + c.id + "' has no individuals");
    }
    if (c.e.size() != e_dim_) {
      throw InvariantError("community '" + c.id + "' has " + std::to_string(c.e.size()) +
                           " community covariates, expected " + std::to_string(e_dim_));
    }
    if (c.e[0] != static_cast<double>(c.size())) {
      throw InvariantError("community '" + c.id + "': n = " + fmt_double(c.e[0]) +
                           " but " + std::to_string(c.size()) + " individuals");
    }
    if (!std::isfinite(c.a)) throw InvariantError("community '" + c.id + "': exposure not finite");
    for (double v : c.e) {
      if (!std::isfinite(v)) throw InvariantError("community '" + c.id + "': non-finite covariate");
    }
    std::vector<double> summary(w_dim_, 0.0);
    for (std::size_t i = 0; i < c.size(); ++i) {
      const auto& r = c.individuals[i];
      if (r.w.size() != w_dim_) {
        throw InvariantError("community '" + c.id + "': individual covariate dimension mismatch");
      }
      for (std::size_t l = 0; l < w_dim_; ++l) {
        if (!std::isfinite(r.w[l])) {
          throw InvariantError("community '" + c.id + "': non-finite individual covariate");
        }
        if (i < c.alpha.size()) summary[l] += c.alpha[i] * r.w[l];
      }
    }
    y_c_.push_back(community_outcome(c, bounds_).y_c);
    w_summary_.push_back(std::move(summary));
    total_individuals_ += c.size();
  }
}

bool HierarchicalDataset::constant_community_size() const {
  return std::all_of(communities_.begin(), communities_.end(),
                     [&](const Community& c) { return c.size() == communities_.front().size(); });
}

std::vector<double> HierarchicalDataset::exposures() const {
  std::vector<double> a;
  a.reserve(communities_.size());
  for (const auto& c : communities_) a.push_back(c.a);
  return a;
}

HierarchicalDataset HierarchicalDataset::with_bounds(OutcomeBounds bounds) const {
  return HierarchicalDataset(communities_, bounds);
}

HierarchicalDataset parse_dataset(const std::string& csv_text, const DatasetSchema& schema) {
  std::istringstream in(csv_text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split_csv_line(line);
      break;
    }
  }
  if (header.empty()) throw SchemaError("missing header row");
  if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0) header[0] = header[0].substr(3);

  std::optional<std::size_t> col_id, col_a, col_y, col_alpha, col_n;
  std::map<int, std::size_t> e_cols, w_cols;
  for (std::size_t k = 0; k < header.size(); ++k) {
    const auto& name = header[k];
    if (name == "community_id") col_id = k;
    else if (name == "a") col_a = k;
    else if (name == "y") col_y = k;
    else if (name == "alpha") col_alpha = k;
    else if (name == "n") col_n = k;
    else if (auto idx = column_index(name, 'e')) e_cols[*idx] = k;
    else if (auto idx = column_index(name, 'w')) w_cols[*idx] = k;
    else throw SchemaError("unknown column '" + name + "'");
  }
  if (!col_id) throw SchemaError("missing column 'community_id'");
  if (!col_a) throw SchemaError("missing column 'a'");
  if (!col_y) throw SchemaError("missing column 'y'");
  auto check_contiguous = [](const std::map<int, std::size_t>& cols, char prefix) {
    int expected = 1;
    for (const auto& [idx, _] : cols) {
      if (idx != expected) {
        throw SchemaError(std::string("missing column '") + prefix + "_" +
                          std::to_string(expected) + "'");
      }
      ++expected;
    }
  };
  check_contiguous(e_cols, 'e');
  check_contiguous(w_cols, 'w');

  struct Pending {
    Community c;
    std::optional<double> declared_n;
    std::size_t first_line = 0;
  };
  std::vector<Pending> pending;
  std::unordered_map<std::string, std::size_t> index_of;

  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw ParseError("line " + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " fields, got " +
                       std::to_string(fields.size()));
    }
    const std::string& id = fields[*col_id];
    if (id.empty()) throw ParseError("line " + std::to_string(line_no) + ": empty community_id");
    double a = parse_number(fields[*col_a], line_no, "a");
    std::vector<double> e{0.0};
    for (const auto& [idx, k] : e_cols) e.push_back(parse_number(fields[k], line_no, header[k]));
    IndividualRecord rec;
    for (const auto& [idx, k] : w_cols) rec.w.push_back(parse_number(fields[k], line_no, header[k]));
    rec.y = parse_number(fields[*col_y], line_no, "y");

    auto [it, inserted] = index_of.emplace(id, pending.size());
    if (inserted) {
      Pending p;
      p.c.id = id;
      p.c.a = a;
      p.c.e = e;
      p.first_line = line_no;
      pending.push_back(std::move(p));
    }
    Pending& p = pending[it->second];
    if (p.c.a != a) {
      throw InvariantError("line " + std::to_string(line_no) + ": exposure varies within community '" +
                           id + "'");
    }
    for (std::size_t s = 1; s < e.size(); ++s) {
      if (p.c.e[s] != e[s]) {
        throw InvariantError("line " + std::to_string(line_no) +
                             ": community covariate e_" + std::to_string(s) +
                             " varies within community '" + id + "'");
      }
    }
    if (col_n) {
      double n = parse_number(fields[*col_n], line_no, "n");
      if (p.declared_n && *p.declared_n != n) {
        throw InvariantError("line " + std::to_string(line_no) + ": n varies within community '" +
                             id + "'");
      }
      p.declared_n = n;
    }
    if (col_alpha) p.c.alpha.push_back(parse_number(fields[*col_alpha], line_no, "alpha"));
    p.c.individuals.push_back(std::move(rec));
  }

  std::vector<Community> communities;
  communities.reserve(pending.size());
  for (auto& p : pending) {
    const double n = static_cast<double>(p.c.size());
    if (p.declared_n && *p.declared_n != n) {
      throw InvariantError("community '" + p.c.id + "' declares n = " + fmt_double(*p.declared_n) +
                           " but has " + std::to_string(p.c.size()) + " rows");
    }
    p.c.e[0] = n;
    if (col_alpha) {
      double sum = 0.0;
      for (double v : p.c.alpha) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
          throw WeightError("community '" + p.c.id + "': negative or non-finite alpha");
        }
        sum += v;
      }
      if (std::abs(sum - 1.0) > kWeightInputTolerance) {
        throw WeightError("community '" + p.c.id + "': alpha sums to " + fmt_double(sum));
      }
      for (double& v : p.c.alpha) v /= sum;
    } else {
      p.c.alpha.assign(p.c.size(), 1.0 / n);
    }
    communities.push_back(std::move(p.c));
  }
  OutcomeBounds bounds = schema.bounds ? *schema.bounds : empirical_bounds(communities);
  return HierarchicalDataset(std::move(communities), bounds);
}

HierarchicalDataset load_dataset(const std::filesystem::path& path, const DatasetSchema& schema) {
  return parse_dataset(read_text_file(path), schema);
}

std::string format_dataset_csv(const HierarchicalDataset& data) {
  std::ostringstream out;
  out << "community_id,a,n";
  for (std::size_t s = 1; s < data.e_dim(); ++s) out << ",e_" << s;
  for (std::size_t l = 0; l < data.w_dim(); ++l) out << ",w_" << (l + 1);
  out << ",y,alpha\n";
  for (const auto& c : data.communities()) {
    for (std::size_t i = 0; i < c.size(); ++i) {
      out << c.id << ',' << fmt_double(c.a) << ',' << c.size();
      for (std::size_t s = 1; s < c.e.size(); ++s) out << ',' << fmt_double(c.e[s]);
      for (double w : c.individuals[i].w) out << ',' << fmt_double(w);
      out << ',' << fmt_double(c.individuals[i].y) << ',' << fmt_double(c.alpha[i]) << '\n';
    }
  }
  return out.str();
}

void write_dataset(const std::filesystem::path& path, const HierarchicalDataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << format_dataset_csv(data);
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

HierarchicalDataset collapse_single_individual(const HierarchicalDataset& data) {
  std::vector<Community> out;
  out.reserve(data.size());
  for (const auto& c : data.communities()) {
    if (c.size() != 1) {
      throw InvariantError("community '" + c.id + "' has " + std::to_string(c.size()) +
                           " individuals; collapsing requires N = 1");
    }
    Community k = c;
    k.e.insert(k.e.end(), c.individuals[0].w.begin(), c.individuals[0].w.end());
    k.individuals[0].w.clear();
    out.push_back(std::move(k));
  }
  return HierarchicalDataset(std::move(out), data.bounds());
}

}  // namespace hiertmle
