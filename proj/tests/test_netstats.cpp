#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "netrecon/netstats.hpp"
#include "netrecon/rng.hpp"

using namespace netrecon;

namespace {

SparseDigraph make_graph(std::size_t n,
                         const std::vector<std::pair<std::uint32_t, std::uint32_t>>& edges) {
  SparseDigraph g;
  g.n_sectors = 1;
  for (std::size_t i = 0; i < n; ++i) {
    g.firm_id.push_back(i);
    g.sector.push_back(0);
    g.size.push_back(1.0);
  }
  for (const auto& [s, d] : edges) g.edges.push_back({s, d, EdgeTag::sampled});
  g.sort_edges();
  return g;
}

SparseDigraph er_digraph(std::size_t n, double p, std::uint64_t seed, bool self_loops) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> es;
  Rng rng = Rng(seed).key(0x6e657473ull);
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t j = 0; j < n; ++j) {
      if (i == j && !self_loops) continue;
      if (rng.next_double() < p) es.emplace_back(i, j);
    }
  return make_graph(n, es);
}

// Independent Pearson oracle: two-pass mean/covariance form.
double pearson_oracle(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double cxy = 0, vx = 0, vy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    cxy += (x[i] - mx) * (y[i] - my);
    vx += (x[i] - mx) * (x[i] - mx);
    vy += (y[i] - my) * (y[i] - my);
  }
  if (vx <= 0 || vy <= 0) return std::numeric_limits<double>::quiet_NaN();
  return cxy / std::sqrt(vx * vy);
}

}  // namespace

TEST_CASE("complete triad has unit density reciprocity and clustering") {
  const SparseDigraph g =
      make_graph(3, {{0, 1}, {1, 0}, {0, 2}, {2, 0}, {1, 2}, {2, 1}});
  const NetworkSummary s = summarize(g);
  REQUIRE(s.nodes == 3);
  REQUIRE(s.simple_edges == 6);
  REQUIRE(s.density == 1.0);
  REQUIRE(s.reciprocity == 1.0);
  REQUIRE(s.clustering == 1.0);
  // Every node has identical degrees: the correlations are undefined.
  REQUIRE(std::isnan(s.assort_in_in));
  REQUIRE(std::isnan(s.assort_out_out));
}

TEST_CASE("a directed three-cycle has zero reciprocity and unit clustering") {
  const SparseDigraph g = make_graph(3, {{0, 1}, {1, 2}, {2, 0}});
  const NetworkSummary s = summarize(g);
  REQUIRE(s.density == Catch::Approx(0.5).margin(1e-15));
  REQUIRE(s.reciprocity == 0.0);
  REQUIRE(s.clustering == 1.0);  // the undirected projection is a triangle
}

TEST_CASE("local clustering matches hand counts on small fixtures") {
  SECTION("a path projects to no triangles") {
    const SparseDigraph g = make_graph(3, {{0, 1}, {1, 2}});
    REQUIRE(summarize(g).clustering == 0.0);
  }
  SECTION("a square with one diagonal averages five sixths") {
    const SparseDigraph g = make_graph(4, {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {0, 2}});
    REQUIRE(summarize(g).clustering == Catch::Approx(5.0 / 6.0).margin(1e-12));
  }
}

TEST_CASE("self-loops are excluded by default and included on request") {
  const SparseDigraph g = make_graph(2, {{0, 0}, {0, 1}, {1, 0}});
  const NetworkSummary off = summarize(g);
  REQUIRE(off.self_loops == 1);
  REQUIRE(off.simple_edges == 2);
  REQUIRE(off.density == 1.0);  // 2 of 2 ordered pairs
  REQUIRE(off.reciprocity == 1.0);

  const NetworkSummary on = summarize(g, true);
  REQUIRE(on.simple_edges == 3);
  REQUIRE(on.density == Catch::Approx(0.75).margin(1e-15));  // 3 of 4 pairs
  REQUIRE(on.reciprocity == 1.0);  // a self-loop is its own reverse
}

TEST_CASE("duplicate stored edges do not change any statistic") {
  SparseDigraph g = make_graph(4, {{0, 1}, {1, 2}, {2, 0}, {0, 3}});
  SparseDigraph dup = g;
  dup.edges.insert(dup.edges.end(), g.edges.begin(), g.edges.end());
  dup.sort_edges();
  const NetworkSummary a = summarize(g), b = summarize(dup);
  REQUIRE(a.simple_edges == b.simple_edges);
  REQUIRE(a.density == b.density);
  REQUIRE(a.reciprocity == b.reciprocity);
  REQUIRE(a.clustering == b.clustering);
  const auto ca = degree_ccdf(g, DegreeKind::total), cb = degree_ccdf(dup, DegreeKind::total);
  REQUIRE(ca.size() == cb.size());
  for (std::size_t i = 0; i < ca.size(); ++i) {
    REQUIRE(ca[i].degree == cb[i].degree);
    REQUIRE(ca[i].ccdf == cb[i].ccdf);
  }
}

TEST_CASE("degenerate graphs report undefined markers not zeros") {
  const NetworkSummary empty = summarize(make_graph(5, {}));
  REQUIRE(std::isnan(empty.density));
  REQUIRE(std::isnan(empty.reciprocity));
  REQUIRE(std::isnan(empty.clustering));
  const NetworkSummary lone = summarize(make_graph(1, {{0, 0}}));
  REQUIRE(lone.self_loops == 1);
  REQUIRE(std::isnan(lone.density));
}

TEST_CASE("reciprocity is one on symmetric graphs and zero on dags") {
  Rng rng = Rng(5).key(0x726563ull);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 4 + rng.uniform_u64(20);
    std::vector<std::pair<std::uint32_t, std::uint32_t>> sym, dag;
    for (std::uint32_t i = 0; i < n; ++i)
      for (std::uint32_t j = i + 1; j < n; ++j)
        if (rng.next_double() < 0.3) {
          sym.emplace_back(i, j);
          sym.emplace_back(j, i);
          dag.emplace_back(i, j);
        }
    if (sym.empty()) continue;
    REQUIRE(summarize(make_graph(n, sym)).reciprocity == 1.0);
    REQUIRE(summarize(make_graph(n, dag)).reciprocity == 0.0);
  }
}

TEST_CASE("summary statistics stay in their defined ranges") {
  Rng rng = Rng(11).key(0x72616e67ull);
  for (int trial = 0; trial < 25; ++trial) {
    const SparseDigraph g =
        er_digraph(5 + rng.uniform_u64(40), 0.02 + 0.3 * rng.next_double(),
                   1000 + trial, trial % 2 == 0);
    const NetworkSummary s = summarize(g);
    if (s.simple_edges == 0) continue;
    REQUIRE(s.density >= 0.0);
    REQUIRE(s.density <= 1.0);
    REQUIRE(s.reciprocity >= 0.0);
    REQUIRE(s.reciprocity <= 1.0);
    REQUIRE(s.clustering >= 0.0);
    REQUIRE(s.clustering <= 1.0);
    for (double a : {s.assort_in_in, s.assort_in_out, s.assort_out_in, s.assort_out_out})
      if (!std::isnan(a)) {
        REQUIRE(a >= -1.0);
        REQUIRE(a <= 1.0);
      }
  }
}

TEST_CASE("assortativities match an independent pearson oracle") {
  Rng rng = Rng(21).key(0x6f7261ull);
  for (int trial = 0; trial < 15; ++trial) {
    const SparseDigraph g = er_digraph(8 + rng.uniform_u64(30), 0.15, 4000 + trial, false);
    const NetworkSummary s = summarize(g);
    // Rebuild the deduplicated edge list and degree vectors independently.
    std::vector<std::pair<std::uint32_t, std::uint32_t>> es;
    for (const auto& e : g.edges)
      if (e.src != e.dst) es.emplace_back(e.src, e.dst);
    std::sort(es.begin(), es.end());
    es.erase(std::unique(es.begin(), es.end()), es.end());
    if (es.size() < 2) continue;
    std::vector<double> din(g.n(), 0), dout(g.n(), 0);
    for (const auto& e : es) {
      ++dout[e.first];
      ++din[e.second];
    }
    auto gather = [&](const std::vector<double>& sd, const std::vector<double>& dd) {
      std::vector<double> xs, ys;
      for (const auto& e : es) {
        xs.push_back(sd[e.first]);
        ys.push_back(dd[e.second]);
      }
      return pearson_oracle(xs, ys);
    };
    const double oii = gather(din, din), oio = gather(din, dout);
    const double ooi = gather(dout, din), ooo = gather(dout, dout);
    auto close = [](double a, double b) {
      return (std::isnan(a) && std::isnan(b)) || std::abs(a - b) < 1e-9;
    };
    REQUIRE(close(s.assort_in_in, oii));
    REQUIRE(close(s.assort_in_out, oio));
    REQUIRE(close(s.assort_out_in, ooi));
    REQUIRE(close(s.assort_out_out, ooo));
  }
}

TEST_CASE("summaries are invariant under node relabeling") {
  Rng rng = Rng(31).key(0x70657268ull);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 6 + rng.uniform_u64(30);
    const SparseDigraph g = er_digraph(n, 0.2, 7000 + trial, false);
    std::vector<std::uint32_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = static_cast<std::uint32_t>(i);
    for (std::size_t i = n; i > 1; --i)
      std::swap(perm[i - 1], perm[rng.uniform_u64(i)]);
    std::vector<std::pair<std::uint32_t, std::uint32_t>> es;
    for (const auto& e : g.edges) es.emplace_back(perm[e.src], perm[e.dst]);
    const NetworkSummary a = summarize(g), b = summarize(make_graph(n, es));
    REQUIRE(a.density == b.density);
    REQUIRE(a.reciprocity == b.reciprocity);
    REQUIRE(a.clustering == Catch::Approx(b.clustering).margin(1e-12));
    auto close = [](double p, double q) {
      return (std::isnan(p) && std::isnan(q)) || std::abs(p - q) < 1e-9;
    };
    REQUIRE(close(a.assort_in_in, b.assort_in_in));
    REQUIRE(close(a.assort_out_out, b.assort_out_out));
  }
}

TEST_CASE("summaries are identical across thread counts") {
  const SparseDigraph g = er_digraph(60, 0.12, 99, false);
  const NetworkSummary a = summarize(g, false, 1);
  const NetworkSummary b = summarize(g, false, 4);
  REQUIRE(a.clustering == b.clustering);
  REQUIRE(a.assort_in_in == b.assort_in_in);
  REQUIRE(a.density == b.density);
}

TEST_CASE("degree ccdf reproduces hand counts") {
  SECTION("a regular graph is a single step") {
    const SparseDigraph g = make_graph(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 0}});
    const auto out = degree_ccdf(g, DegreeKind::out);
    REQUIRE(out.size() == 1);
    REQUIRE(out[0].degree == 1);
    REQUIRE(out[0].ccdf == 1.0);
    const auto tot = degree_ccdf(g, DegreeKind::total);
    REQUIRE(tot.size() == 1);
    REQUIRE(tot[0].degree == 2);
  }
  SECTION("total degrees one one two four") {
    const SparseDigraph g = make_graph(4, {{0, 1}, {0, 3}, {2, 0}, {3, 0}});
    const auto pts = degree_ccdf(g, DegreeKind::total);
    REQUIRE(pts.size() == 3);
    REQUIRE(pts[0].degree == 1);
    REQUIRE(pts[0].ccdf == 1.0);
    REQUIRE(pts[1].degree == 2);
    REQUIRE(pts[1].ccdf == 0.5);
    REQUIRE(pts[2].degree == 4);
    REQUIRE(pts[2].ccdf == 0.25);
  }
}

TEST_CASE("degree ccdf is nonincreasing and starts at one") {
  Rng rng = Rng(41).key(0x63636466ull);
  for (int trial = 0; trial < 15; ++trial) {
    const SparseDigraph g =
        er_digraph(5 + rng.uniform_u64(50), 0.1 + 0.2 * rng.next_double(), 300 + trial,
                   trial % 3 == 0);
    for (DegreeKind k : {DegreeKind::in, DegreeKind::out, DegreeKind::total}) {
      const auto pts = degree_ccdf(g, k);
      REQUIRE_FALSE(pts.empty());
      REQUIRE(pts.front().ccdf == 1.0);
      for (std::size_t i = 0; i < pts.size(); ++i) {
        REQUIRE(pts[i].ccdf > 0.0);
        REQUIRE(pts[i].ccdf <= 1.0);
        if (i > 0) {
          REQUIRE(pts[i].degree > pts[i - 1].degree);
          REQUIRE(pts[i].ccdf < pts[i - 1].ccdf);
        }
      }
    }
  }
}

TEST_CASE("the log-log fit recovers an exact power law and rejects curvature") {
  std::vector<CcdfPoint> power;
  for (std::uint64_t d = 1; d <= 1000; ++d)
    power.push_back({d, std::pow(static_cast<double>(d), -1.5)});
  const LogLogFit pf = best_loglog_window(power);
  REQUIRE(pf.ok);
  REQUIRE(pf.slope == Catch::Approx(-1.5).margin(1e-9));
  REQUIRE(pf.r2 == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(pf.hi_degree >= 10.0 * pf.lo_degree);

  // An exponential tail is convex in log-log; no one-decade window of it is
  // straight (its best R² is scale-invariant, about 0.925).
  std::vector<CcdfPoint> expo;
  for (std::uint64_t d = 1; d <= 100; ++d)
    expo.push_back({d, std::exp(-(static_cast<double>(d) - 1.0) / 3.0)});
  const LogLogFit ef = best_loglog_window(expo);
  REQUIRE(ef.ok);
  REQUIRE(ef.r2 < 0.95);
}

TEST_CASE("the log-log fit reports failure when no window qualifies") {
  std::vector<CcdfPoint> narrow;
  for (std::uint64_t d = 1; d <= 5; ++d)
    narrow.push_back({d, std::pow(static_cast<double>(d), -2.0)});
  REQUIRE_FALSE(best_loglog_window(narrow).ok);  // spans under one decade
  REQUIRE_FALSE(best_loglog_window({}).ok);
}
