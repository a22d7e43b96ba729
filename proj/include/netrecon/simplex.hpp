#pragma once

// Exact projection onto the capped simplex {w : Σw = target, lo ≤ w ≤ hi} and
// its diagonally weighted generalization, via breakpoint sweep. The rowwise
// subproblems of the weighting QP all reduce to this shape.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "netrecon/common.hpp"

namespace netrecon {

// Minimizes Σ_j q_j (w_j − y_j)² subject to Σ_j w_j = target, lo ≤ w_j ≤ hi,
// with every q_j > 0. KKT gives w_j(ν) = clip(y_j + ν/(2 q_j), lo, hi) for a
// scalar multiplier ν; the sum is piecewise linear and nondecreasing in ν, so
// the exact ν is found by sorting the 2n breakpoints where a coordinate
// enters or leaves a bound and walking the segments. O(n log n).
//
// QAt must be indexable: qat(j) -> q_j. Writes the solution into w[0..n).
template <class QAt>
inline void capped_simplex_project_core(std::size_t n, QAt&& qat, const double* y, double lo,
                                        double hi, double target, double* w) {
  if (n == 0) fail("BadArgument", "simplex projection: empty row");
  if (!(lo <= hi)) fail("BadArgument", "simplex projection: lo > hi");
  const double nd = static_cast<double>(n);
  if (target < nd * lo - 1e-12 || target > nd * hi + 1e-12)
    fail("Infeasible", "simplex projection: target " + format_double(target) +
                           " outside [" + format_double(nd * lo) + ", " + format_double(nd * hi) +
                           "]");

  // Breakpoints: coordinate j is at `lo` for ν ≤ 2q_j(lo − y_j), free on the
  // middle interval with slope 1/(2q_j), and at `hi` past 2q_j(hi − y_j).
  struct Event {
    double nu;
    double dslope;  // change in dΣ/dν at this breakpoint
    double dconst;  // change in the ν-free part of Σ
  };
  std::vector<Event> ev;
  ev.reserve(2 * n);
  for (std::size_t j = 0; j < n; ++j) {
    const double q2 = 2.0 * qat(j);
    const double inv = 1.0 / q2;
    ev.push_back({q2 * (lo - y[j]), inv, y[j] - lo});
    ev.push_back({q2 * (hi - y[j]), -inv, hi - y[j]});
  }
  std::sort(ev.begin(), ev.end(), [](const Event& a, const Event& b) { return a.nu < b.nu; });

  // Sweep: before the first breakpoint every coordinate sits at lo. Σ(ν) is
  // continuous and nondecreasing, so the answer lies in the first segment
  // whose right endpoint reaches the target; clamping ν into the segment
  // absorbs rounding at the breakpoints.
  double sum_const = nd * lo;
  double slope = 0.0;
  double nu = ev.back().nu;  // target at/above the saturated sum
  for (std::size_t e = 0; e < ev.size(); ++e) {
    sum_const += ev[e].dconst;
    slope += ev[e].dslope;
    const double seg_lo = ev[e].nu;
    const double seg_hi = e + 1 < ev.size() ? ev[e + 1].nu : seg_lo;
    const double sum_end = sum_const + slope * seg_hi;
    if (sum_end >= target || e + 1 == ev.size()) {
      nu = slope > 0.0 ? (target - sum_const) / slope : seg_lo;
      nu = std::min(seg_hi, std::max(seg_lo, nu));
      if (sum_end >= target) break;
    }
  }

  auto value = [&](double v) {
    double s = 0;
    for (std::size_t j = 0; j < n; ++j) s += std::min(hi, std::max(lo, y[j] + v / (2.0 * qat(j))));
    return s;
  };
  // The breakpoint sweep is exact in real arithmetic; guard the floating-
  // point corner cases with a monotone bisection polish.
  if (std::abs(value(nu) - target) > 1e-12 * std::max(1.0, std::abs(target))) {
    // value(front) = n·lo ≤ target ≤ n·hi = value(back) up to the pre-check
    // slack, so [front, back] brackets the root.
    double a = ev.front().nu, b = ev.back().nu;
    for (int it = 0; it < 200 && b - a > 0; ++it) {
      const double mid = 0.5 * (a + b);
      if (value(mid) < target)
        a = mid;
      else
        b = mid;
      if (mid == a || mid == b) break;  // no representable midpoint left
    }
    nu = 0.5 * (a + b);
  }

  for (std::size_t j = 0; j < n; ++j)
    w[j] = std::min(hi, std::max(lo, y[j] + nu / (2.0 * qat(j))));
}

// Euclidean projection of y onto {w : Σw = target, lo ≤ w ≤ hi}.
inline void capped_simplex_project(std::size_t n, const double* y, double lo, double hi,
                                   double target, double* w) {
  capped_simplex_project_core(n, [](std::size_t) { return 1.0; }, y, lo, hi, target, w);
}

// Weighted projection: minimizes Σ q_j (w_j − y_j)² under the same set.
inline void capped_simplex_project_weighted(std::size_t n, const double* q, const double* y,
                                            double lo, double hi, double target, double* w) {
  for (std::size_t j = 0; j < n; ++j)
    if (!(q[j] > 0)) fail("BadArgument", "simplex projection: weights must be positive");
  capped_simplex_project_core(n, [q](std::size_t j) { return q[j]; }, y, lo, hi, target, w);
}

}  // namespace netrecon
