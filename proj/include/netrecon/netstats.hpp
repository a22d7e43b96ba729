#pragma once

// Summary statistics and degree-distribution CCDFs for reconstructed
// networks. All statistics work on the simple directed graph obtained by
// deduplicating stored edges; self-loops are excluded by default and can be
// included with a flag (clustering always ignores them — a self-loop closes
// no triangle). Degenerate inputs yield NaN markers, never silent zeros.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "netrecon/common.hpp"
#include "netrecon/digraph.hpp"

namespace netrecon {

enum class DegreeKind { in, out, total };

inline const char* degree_kind_name(DegreeKind k) {
  switch (k) {
    case DegreeKind::in: return "in";
    case DegreeKind::out: return "out";
    case DegreeKind::total: return "total";
  }
  return "?";
}

struct NetworkSummary {
  std::size_t nodes = 0;
  std::size_t edges = 0;       // stored directed edges, self-loops included
  std::size_t self_loops = 0;  // stored edges with src == dst
  std::size_t simple_edges = 0;  // deduplicated edges entering the statistics
  double density = std::numeric_limits<double>::quiet_NaN();
  double reciprocity = std::numeric_limits<double>::quiet_NaN();
  double clustering = std::numeric_limits<double>::quiet_NaN();
  double assort_in_in = std::numeric_limits<double>::quiet_NaN();
  double assort_in_out = std::numeric_limits<double>::quiet_NaN();
  double assort_out_in = std::numeric_limits<double>::quiet_NaN();
  double assort_out_out = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

// Deduplicated directed edge list, sorted by (src, dst). Self-loops are
// dropped unless include_self is set.
inline std::vector<std::pair<std::uint32_t, std::uint32_t>> simple_edges(
    const SparseDigraph& g, bool include_self) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> es;
  es.reserve(g.m());
  for (const auto& e : g.edges)
    if (include_self || e.src != e.dst) es.emplace_back(e.src, e.dst);
  std::sort(es.begin(), es.end());
  es.erase(std::unique(es.begin(), es.end()), es.end());
  return es;
}

// Pearson correlation over paired samples; NaN when either side has no
// variance. Accumulation order is the caller's edge order.
inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  if (x.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    syy += y[i] * y[i];
    sxy += x[i] * y[i];
  }
  const double vx = n * sxx - sx * sx;
  const double vy = n * syy - sy * sy;
  const double scale = std::max(n * sxx, n * syy);
  if (vx <= 1e-12 * scale || vy <= 1e-12 * scale)
    return std::numeric_limits<double>::quiet_NaN();
  return std::clamp((n * sxy - sx * sy) / std::sqrt(vx * vy), -1.0, 1.0);
}

}  // namespace detail

inline NetworkSummary summarize(const SparseDigraph& g, bool include_self = false,
                                int threads = 1) {
  NetworkSummary sum;
  sum.nodes = g.n();
  sum.edges = g.m();
  for (const auto& e : g.edges)
    if (e.src == e.dst) ++sum.self_loops;

  const auto es = detail::simple_edges(g, include_self);
  sum.simple_edges = es.size();
  const std::size_t N = g.n();
  if (N < 2 || es.empty()) return sum;  // NaN markers untouched

  const double pairs = include_self ? static_cast<double>(N) * static_cast<double>(N)
                                    : static_cast<double>(N) * static_cast<double>(N - 1);
  sum.density = static_cast<double>(es.size()) / pairs;

  // Reciprocity: fraction of edges whose reverse exists (a self-loop is its
  // own reverse, so it only matters under include_self).
  std::size_t recip = 0;
  for (const auto& e : es)
    if (std::binary_search(es.begin(), es.end(), std::make_pair(e.second, e.first)))
      ++recip;
  sum.reciprocity = static_cast<double>(recip) / static_cast<double>(es.size());

  // Degrees on the simple graph (a self-loop adds 1 to both when included).
  std::vector<double> din(N, 0.0), dout(N, 0.0);
  for (const auto& e : es) {
    dout[e.first] += 1.0;
    din[e.second] += 1.0;
  }

  // Assortativities: endpoint-degree correlations over directed edges.
  {
    std::vector<double> xs(es.size()), ys(es.size());
    auto corr = [&](const std::vector<double>& src_deg, const std::vector<double>& dst_deg) {
      for (std::size_t i = 0; i < es.size(); ++i) {
        xs[i] = src_deg[es[i].first];
        ys[i] = dst_deg[es[i].second];
      }
      return detail::pearson(xs, ys);
    };
    sum.assort_in_in = corr(din, din);
    sum.assort_in_out = corr(din, dout);
    sum.assort_out_in = corr(dout, din);
    sum.assort_out_out = corr(dout, dout);
  }

  // Average local clustering on the undirected simple projection (self-loops
  // never contribute). Nodes of projected degree < 2 contribute 0.
  {
    std::vector<std::vector<std::uint32_t>> adj(N);
    for (const auto& e : es) {
      if (e.first == e.second) continue;
      adj[e.first].push_back(e.second);
      adj[e.second].push_back(e.first);
    }
    for (auto& nb : adj) {
      std::sort(nb.begin(), nb.end());
      nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
    }
    std::vector<double> local(N, 0.0);
    parallel_for(N, threads, [&](std::size_t u) {
      const auto& nu = adj[u];
      const std::size_t k = nu.size();
      if (k < 2) return;
      // Links among neighbours via sorted-list intersections; every triangle
      // at u is counted once from each of its two other corners.
      std::size_t links2 = 0;
      for (const std::uint32_t v : nu) {
        const auto& nv = adj[v];
        std::size_t a = 0, b = 0;
        while (a < nu.size() && b < nv.size()) {
          if (nu[a] < nv[b]) {
            ++a;
          } else if (nv[b] < nu[a]) {
            ++b;
          } else {
            ++links2;
            ++a;
            ++b;
          }
        }
      }
      local[u] = static_cast<double>(links2) / (static_cast<double>(k) * static_cast<double>(k - 1));
    });
    double acc = 0;
    for (const double c : local) acc += c;
    sum.clustering = acc / static_cast<double>(N);
  }
  return sum;
}

struct CcdfPoint {
  std::uint64_t degree = 0;
  double ccdf = 0;  // P(D >= degree)
};

// Sorted (degree, P(D >= degree)) pairs over all nodes, one point per
// distinct degree value; the first point always has probability 1.
inline std::vector<CcdfPoint> degree_ccdf(const SparseDigraph& g, DegreeKind which,
                                          bool include_self = false) {
  const std::size_t N = g.n();
  std::vector<CcdfPoint> out;
  if (N == 0) return out;
  const auto es = detail::simple_edges(g, include_self);
  std::vector<std::uint64_t> deg(N, 0);
  for (const auto& e : es) {
    if (which == DegreeKind::out || which == DegreeKind::total) ++deg[e.first];
    if (which == DegreeKind::in || which == DegreeKind::total) ++deg[e.second];
  }
  std::sort(deg.begin(), deg.end());
  std::size_t i = 0;
  while (i < N) {
    std::size_t j = i;
    while (j < N && deg[j] == deg[i]) ++j;
    out.push_back({deg[i], static_cast<double>(N - i) / static_cast<double>(N)});
    i = j;
  }
  return out;
}

struct LogLogFit {
  bool ok = false;      // a window satisfying the span/point minima exists
  double slope = std::numeric_limits<double>::quiet_NaN();
  double intercept = std::numeric_limits<double>::quiet_NaN();
  double r2 = std::numeric_limits<double>::quiet_NaN();
  double lo_degree = 0;  // fitted window, inclusive
  double hi_degree = 0;
  std::size_t points = 0;
};

// Best straight-line fit of log10(ccdf) against log10(degree) over any
// contiguous window of points spanning at least min_decades decades; "best"
// maximizes R². Degree-0 points cannot enter a log fit and are skipped.
inline LogLogFit best_loglog_window(const std::vector<CcdfPoint>& pts,
                                    double min_decades = 1.0, std::size_t min_points = 5) {
  std::vector<double> x, y;
  for (const auto& p : pts) {
    if (p.degree == 0 || p.ccdf <= 0) continue;
    x.push_back(std::log10(static_cast<double>(p.degree)));
    y.push_back(std::log10(p.ccdf));
  }
  const std::size_t n = x.size();
  LogLogFit best;
  if (n < min_points) return best;

  // Prefix sums make every candidate window O(1).
  std::vector<double> sx(n + 1, 0), sy(n + 1, 0), sxx(n + 1, 0), syy(n + 1, 0), sxy(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    sx[i + 1] = sx[i] + x[i];
    sy[i + 1] = sy[i] + y[i];
    sxx[i + 1] = sxx[i] + x[i] * x[i];
    syy[i + 1] = syy[i] + y[i] * y[i];
    sxy[i + 1] = sxy[i] + x[i] * y[i];
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + min_points - 1; j < n; ++j) {
      if (x[j] - x[i] < min_decades) continue;
      const double m = static_cast<double>(j - i + 1);
      const double vx = m * (sxx[j + 1] - sxx[i]) - (sx[j + 1] - sx[i]) * (sx[j + 1] - sx[i]);
      const double vy = m * (syy[j + 1] - syy[i]) - (sy[j + 1] - sy[i]) * (sy[j + 1] - sy[i]);
      const double cxy = m * (sxy[j + 1] - sxy[i]) - (sx[j + 1] - sx[i]) * (sy[j + 1] - sy[i]);
      if (vx <= 0) continue;
      const double r2 = vy <= 1e-30 ? 1.0 : std::min(1.0, (cxy * cxy) / (vx * vy));
      if (!best.ok || r2 > best.r2) {
        best.ok = true;
        best.r2 = r2;
        best.slope = cxy / vx;
        best.intercept = ((sy[j + 1] - sy[i]) - best.slope * (sx[j + 1] - sx[i])) / m;
        best.lo_degree = std::pow(10.0, x[i]);
        best.hi_degree = std::pow(10.0, x[j]);
        best.points = j - i + 1;
      }
    }
  }
  return best;
}

}  // namespace netrecon
