#pragma once

#include <string>
#include <vector>

#include "hiertmle/data_model.hpp"
#include "hiertmle/random.hpp"

namespace testutil {

using hiertmle::Community;
using hiertmle::HierarchicalDataset;

// e_rest excludes the community size; alpha defaults to 1/N.
inline Community community(std::string id, double a, std::vector<double> e_rest,
                           std::vector<std::vector<double>> w, std::vector<double> y,
                           std::vector<double> alpha = {}) {
  Community c;
  c.id = std::move(id);
  c.a = a;
  c.e.push_back(static_cast<double>(y.size()));
  c.e.insert(c.e.end(), e_rest.begin(), e_rest.end());
  for (std::size_t i = 0; i < y.size(); ++i) {
    c.individuals.push_back({w.empty() ? std::vector<double>{} : w[i], y[i]});
  }
  if (alpha.empty()) alpha.assign(y.size(), 1.0 / static_cast<double>(y.size()));
  c.alpha = std::move(alpha);
  return c;
}

// J communities with binary E, binary A and a constant-in-community binary W.
// Outcomes are deterministic functions of the cell so fits can be saturated.
inline HierarchicalDataset binary_cells(std::size_t j, std::size_t n, std::uint64_t seed) {
  auto rng = hiertmle::make_rng(seed, 0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Community> cs;
  for (std::size_t k = 0; k < j; ++k) {
    double e1 = u(rng) < 0.5 ? 1.0 : 0.0;
    double a = u(rng) < 0.3 + 0.4 * e1 ? 1.0 : 0.0;
    std::vector<double> y(n);
    for (auto& v : y) v = u(rng) < 0.2 + 0.3 * a + 0.2 * e1 ? 1.0 : 0.0;
    cs.push_back(community("c" + std::to_string(k), a, {e1}, {}, y));
  }
  return HierarchicalDataset(std::move(cs), {0.0, 1.0});
}

}  // namespace testutil
