#pragma once

// Independent oracles used by the tests. These deliberately recompute results
// through different algorithms than the library (finite differences, dense
// matrix methods, exhaustive enumeration) so agreement is meaningful.

#include <algorithm>
#include <bitset>
#include <cmath>
#include <functional>
#include <vector>

#include "netrecon/gravity.hpp"

namespace oracle {

// Central finite difference of value_at(params) along one fit coordinate:
// 0 = log z, 1 = alpha, 2 = kappa, 3 + j = log lambda_j.
inline double central_fd(const std::function<double(const netrecon::GravityParams&)>& value_at,
                         const netrecon::GravityParams& base, int coord, double h = 1e-6) {
  auto shifted = [&](double sign) {
    netrecon::GravityParams p = base;
    if (coord == 0)
      p.z = base.z * std::exp(sign * h);
    else if (coord == 1)
      p.alpha = base.alpha + sign * h;
    else if (coord == 2)
      p.kappa = base.kappa + sign * h;
    else
      p.lambda[coord - 3] = base.lambda[coord - 3] * std::exp(sign * h);
    return value_at(p);
  };
  return (shifted(1.0) - shifted(-1.0)) / (2.0 * h);
}

// Mixed absolute/relative agreement at unit scale.
inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

// Reachability closure by repeated squaring over bitset rows; mutual
// reachability gives the SCC partition to compare against Tarjan.
template <std::size_t MaxN>
std::vector<int> scc_by_transitive_closure(std::size_t n,
                                           const std::vector<std::pair<int, int>>& edges) {
  std::vector<std::bitset<MaxN>> reach(n);
  for (std::size_t v = 0; v < n; ++v) reach[v][v] = 1;
  for (auto [a, b] : edges) reach[a][b] = 1;
  // Floyd-Warshall over bitset rows.
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t v = 0; v < n; ++v)
      if (reach[v][k]) reach[v] |= reach[k];
  std::vector<int> comp(n, -1);
  int c = 0;
  for (std::size_t v = 0; v < n; ++v) {
    if (comp[v] != -1) continue;
    for (std::size_t w = v; w < n; ++w)
      if (reach[v][w] && reach[w][v]) comp[w] = c;
    ++c;
  }
  return comp;
}

}  // namespace oracle
