#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "fixtures.hpp"
#include "netrecon/concentration.hpp"
#include "netrecon/sampler.hpp"

using namespace netrecon;

namespace {

// Scales z so the exact expected edge count lands near `target`. Starts in
// the near-linear regime (p ~ x), so one proportional correction suffices;
// the tests compare against exact moments afterwards, not against `target`.
GravityParams tuned_params(const FirmPopulation& pop, const IOTable& io, std::uint64_t seed,
                           double target) {
  GravityParams par = fixtures::random_params(io, seed);
  par.z = 1e-4;
  EnsembleStats st = ensemble_stats(pop, io, par);
  REQUIRE(st.mu_E > 0);
  par.z *= target / st.mu_E;
  return par;
}

// Exact mean isolation probability: iso_i = prod_{j != i} (1-p_ij)(1-p_ji).
double mean_isolation(const FirmPopulation& pop, const IOTable& io, const GravityParams& par) {
  const std::size_t n = pop.n();
  std::vector<double> log_iso(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      double p = link_probability(
          intensity(pop.size[i], pop.size[j], pop.sector[i], pop.sector[j], par, io));
      double l = std::log1p(-p);
      log_iso[i] += l;
      log_iso[j] += l;
    }
  double acc = 0;
  for (double l : log_iso) acc += std::exp(l);
  return acc / static_cast<double>(n);
}

bool same_edges(const SparseDigraph& a, const SparseDigraph& b) {
  if (a.m() != b.m()) return false;
  for (std::size_t e = 0; e < a.m(); ++e)
    if (a.edges[e].src != b.edges[e].src || a.edges[e].dst != b.edges[e].dst ||
        a.edges[e].tag != b.edges[e].tag)
      return false;
  return true;
}

}  // namespace

TEST_CASE("zero intensity yields an empty graph over the full population") {
  FirmPopulation pop = fixtures::random_population(200, 3, 11);
  IOTable io = fixtures::random_io(3, 12);
  GravityParams par = fixtures::random_params(io, 13);
  par.z = 0.0;
  SparseDigraph g = draw_backbone(pop, io, par, 99);
  REQUIRE(g.n() == pop.n());
  REQUIRE(g.m() == 0);
}

TEST_CASE("unit probabilities realize exactly the two cross edges") {
  FirmPopulation pop;
  pop.n_sectors = 1;
  pop.sector = {0, 0};
  pop.size = {1.0, 1.0};
  IOTable io = IOTable::from_flows({"A"}, {3.0});
  GravityParams par = GravityParams::init(io);
  par.z = std::numeric_limits<double>::infinity();

  for (std::uint64_t seed : {1ull, 2ull, 77ull}) {
    SparseDigraph g = draw_backbone(pop, io, par, seed);
    REQUIRE(g.m() == 2);
    REQUIRE(g.edges[0].src == 0);
    REQUIRE(g.edges[0].dst == 1);
    REQUIRE(g.edges[1].src == 1);
    REQUIRE(g.edges[1].dst == 0);
    REQUIRE(g.edges[0].tag == EdgeTag::sampled);
  }
}

TEST_CASE("no edge crosses a sector pair without flows") {
  std::vector<double> flows = {5, 2, 0,   // S_02 = 0: no 0 -> 2 links allowed
                               1, 4, 2, 3, 1, 6};
  IOTable io = IOTable::from_flows({"A", "B", "C"}, flows);
  FirmPopulation pop = fixtures::random_population(400, 3, 21);
  GravityParams par = tuned_params(pop, io, 22, 3000.0);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SparseDigraph g = draw_backbone(pop, io, par, seed);
    for (const auto& e : g.edges) {
      REQUIRE_FALSE((g.sector[e.src] == 0 && g.sector[e.dst] == 2));
      REQUIRE(e.src != e.dst);
    }
  }
}

TEST_CASE("same seed gives bit-identical draws across runs and thread counts") {
  FirmPopulation pop = fixtures::random_population(600, 4, 31);
  IOTable io = fixtures::random_io(4, 32);
  GravityParams par = tuned_params(pop, io, 33, 2500.0);

  SampleConfig one, four;
  four.threads = 4;
  SparseDigraph a = draw_backbone(pop, io, par, 424242, one);
  SparseDigraph b = draw_backbone(pop, io, par, 424242, one);
  SparseDigraph c = draw_backbone(pop, io, par, 424242, four);
  REQUIRE(a.m() > 100);
  REQUIRE(same_edges(a, b));
  REQUIRE(same_edges(a, c));
  SparseDigraph d = draw_backbone(pop, io, par, 424243, one);
  REQUIRE_FALSE(same_edges(a, d));
}

TEST_CASE("per-pair edge frequencies match the model over ten thousand draws") {
  const std::size_t n = 20;
  // One decade of sizes keeps every admissible probability well inside (0,1),
  // so the binomial three-sigma band is meaningful for each pair.
  FirmPopulation pop = fixtures::random_population(n, 2, 41, 1.0);
  IOTable io = fixtures::random_io(2, 42);
  GravityParams par = tuned_params(pop, io, 43, 60.0);

  std::vector<double> p(n * n, 0.0);
  double p_min = 1.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      p[i * n + j] = link_probability(
          intensity(pop.size[i], pop.size[j], pop.sector[i], pop.sector[j], par, io));
      p_min = std::min(p_min, p[i * n + j]);
    }
  REQUIRE(p_min > 5e-3);  // fixture sanity: no near-degenerate pairs

  const int draws = 10000;
  std::vector<int> hits(n * n, 0);
  SampleConfig sc;
  sc.bins = 4;
  for (int u = 0; u < draws; ++u) {
    SparseDigraph g = draw_backbone(pop, io, par, 1000 + static_cast<std::uint64_t>(u), sc);
    for (const auto& e : g.edges) ++hits[static_cast<std::size_t>(e.src) * n + e.dst];
  }
  for (std::size_t ij = 0; ij < n * n; ++ij) {
    double freq = static_cast<double>(hits[ij]) / draws;
    double band = 3.0 * std::sqrt(p[ij] * (1.0 - p[ij]) / draws);
    REQUIRE(std::abs(freq - p[ij]) <= band);
  }
}

TEST_CASE("mean realized edge count over 200 seeds matches the exact ensemble mean") {
  FirmPopulation pop = fixtures::random_population(1000, 3, 51);
  IOTable io = fixtures::random_io(3, 52);
  GravityParams par = tuned_params(pop, io, 53, 3000.0);
  EnsembleStats st = ensemble_stats(pop, io, par);

  const int draws = 200;
  double total = 0;
  for (int u = 0; u < draws; ++u)
    total += static_cast<double>(draw_backbone(pop, io, par, 7000 + u).m());
  double mean = total / draws;
  double tol = 3.0 * std::sqrt(st.sigma2_E) / std::sqrt(static_cast<double>(draws));
  REQUIRE(std::abs(mean - st.mu_E) <= tol);
}

TEST_CASE("ensemble moments match a direct pair enumeration") {
  FirmPopulation pop = fixtures::random_population(40, 3, 61);
  IOTable io = fixtures::random_io(3, 62);
  GravityParams par = fixtures::random_params(io, 63);
  EnsembleStats st = ensemble_stats(pop, io, par);

  double mu_E = 0, s2_E = 0;
  for (std::size_t i = 0; i < pop.n(); ++i) {
    double mu_i = 0, s2_i = 0;
    for (std::size_t j = 0; j < pop.n(); ++j) {
      if (i == j) continue;
      double p = link_probability(
          intensity(pop.size[i], pop.size[j], pop.sector[i], pop.sector[j], par, io));
      mu_i += p;
      s2_i += p * (1.0 - p);
    }
    REQUIRE(st.mu[i] == Catch::Approx(mu_i).margin(1e-12));
    REQUIRE(st.sigma2[i] == Catch::Approx(s2_i).margin(1e-12));
    mu_E += mu_i;
    s2_E += s2_i;
  }
  REQUIRE(st.mu_E == Catch::Approx(mu_E).margin(1e-9));
  REQUIRE(st.sigma2_E == Catch::Approx(s2_E).margin(1e-9));
  REQUIRE(st.sigma2_E <= st.mu_E);
}

TEST_CASE("pruning keeps graphs without isolates intact") {
  FirmPopulation pop;
  pop.n_sectors = 1;
  pop.sector = {0, 0, 0};
  pop.size = {1.0, 0.5, 0.25};
  SparseDigraph g;
  g.n_sectors = 1;
  g.firm_id = {10, 11, 12};
  g.sector = pop.sector;
  g.size = pop.size;
  g.edges = {{0, 1, EdgeTag::sampled}, {1, 2, EdgeTag::sampled}, {2, 0, EdgeTag::closure}};

  PruneResult pr = prune_isolates(g);
  REQUIRE(pr.removed == 0);
  REQUIRE(pr.graph.n() == 3);
  REQUIRE(same_edges(pr.graph, g));
  REQUIRE(pr.graph.firm_id == g.firm_id);
}

TEST_CASE("pruning removes exactly the isolated firms of a star") {
  SparseDigraph g;
  g.n_sectors = 2;
  g.firm_id = {100, 101, 102, 103, 104, 105, 106};
  g.sector = {0, 0, 1, 1, 0, 1, 0};
  g.size = {1, .9, .8, .7, .6, .5, .4};
  // star centred on node 1; nodes 4, 5, 6 isolated
  g.edges = {{1, 0, EdgeTag::sampled}, {1, 2, EdgeTag::sampled}, {3, 1, EdgeTag::sampled}};

  PruneResult pr = prune_isolates(g);
  REQUIRE(pr.removed == 3);
  REQUIRE(pr.graph.n() == 4);
  REQUIRE(pr.graph.firm_id == std::vector<std::uint64_t>{100, 101, 102, 103});
  REQUIRE(pr.graph.m() == 3);
  REQUIRE(pr.graph.edges[0].src == 1);
  REQUIRE(pr.graph.edges[0].dst == 0);
  // sector sums shrink to the surviving firms only
  std::vector<double> s = pr.graph.sector_sizes();
  REQUIRE(s[0] == Catch::Approx(1.9));
  REQUIRE(s[1] == Catch::Approx(1.5));
}

TEST_CASE("realized isolate fraction tracks the exact isolation probabilities") {
  FirmPopulation pop = fixtures::random_population(300, 3, 71);
  IOTable io = fixtures::random_io(3, 72);
  GravityParams par = fixtures::random_params(io, 73);

  // Bisect a z multiplier until the exact expected isolate share is ~7%.
  double lo = -12, hi = 12;
  const double z0 = par.z;
  for (int it = 0; it < 60; ++it) {
    double mid = 0.5 * (lo + hi);
    par.z = z0 * std::exp(mid);
    (mean_isolation(pop, io, par) > 0.07 ? lo : hi) = mid;
  }
  double exact = mean_isolation(pop, io, par);
  REQUIRE(exact == Catch::Approx(0.07).margin(0.005));

  const int draws = 50;
  double mean_removed = 0;
  for (int u = 0; u < draws; ++u) {
    PruneResult pr = prune_isolates(draw_backbone(pop, io, par, 300 + u));
    mean_removed += static_cast<double>(pr.removed) / static_cast<double>(pop.n());
  }
  mean_removed /= draws;
  REQUIRE(std::abs(mean_removed - exact) < 0.02);
}

TEST_CASE("degenerate ensembles produce silent diagnostics") {
  FirmPopulation pop;
  pop.n_sectors = 1;
  pop.sector = {0, 0};
  pop.size = {1.0, 1.0};
  IOTable io = IOTable::from_flows({"A"}, {3.0});
  GravityParams par = GravityParams::init(io);
  par.z = std::numeric_limits<double>::infinity();  // both cross probabilities exactly 1

  EnsembleStats st = ensemble_stats(pop, io, par);
  REQUIRE(st.mu_E == 2.0);
  REQUIRE(st.sigma2_E == 0.0);

  std::vector<SparseDigraph> draws;
  for (std::uint64_t s = 0; s < 3; ++s) draws.push_back(draw_backbone(pop, io, par, s));
  ConcentrationReport rep = concentration_report(draws, pop, io, par, st);
  REQUIRE(rep.theta_exact);
  REQUIRE(rep.theta_bar[1] == Catch::Approx(1.0).margin(1e-15));
  for (const auto& d : rep.per_draw) {
    REQUIRE(d.edge_z == 0.0);
    REQUIRE(d.bernstein_violation_fraction == 0.0);
    REQUIRE(d.pmf_sup_dev == Catch::Approx(0.0).margin(1e-15));
  }
}

TEST_CASE("the exact degree pmf matches a binomial benchmark") {
  // Three identical firms in one sector with p = 1/2 per ordered pair: each
  // out-degree is Binomial(2, 1/2).
  FirmPopulation pop;
  pop.n_sectors = 1;
  pop.sector = {0, 0, 0};
  pop.size = {1.0, 1.0, 1.0};
  IOTable io = IOTable::from_flows({"A"}, {9.0});
  GravityParams par = GravityParams::init(io);  // z = 1, sizes 1 -> x = 1, p = 1/2

  EnsembleStats st = ensemble_stats(pop, io, par);
  ConcentrationConfig cfg;
  cfg.pmf_h_max = 5;
  std::vector<SparseDigraph> draws = {draw_backbone(pop, io, par, 5)};
  ConcentrationReport rep = concentration_report(draws, pop, io, par, st, cfg);
  REQUIRE(rep.theta_exact);
  REQUIRE(rep.theta_bar[0] == Catch::Approx(0.25).margin(1e-12));
  REQUIRE(rep.theta_bar[1] == Catch::Approx(0.50).margin(1e-12));
  REQUIRE(rep.theta_bar[2] == Catch::Approx(0.25).margin(1e-12));
  REQUIRE(rep.theta_bar[3] == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("aggregated draws reproduce the dp degree pmf") {
  FirmPopulation pop = fixtures::random_population(500, 3, 81);
  IOTable io = fixtures::random_io(3, 82);
  GravityParams par = tuned_params(pop, io, 83, 1200.0);

  EnsembleStats st = ensemble_stats(pop, io, par);
  ConcentrationConfig cfg;
  std::vector<SparseDigraph> probe = {draw_backbone(pop, io, par, 1)};
  ConcentrationReport rep = concentration_report(probe, pop, io, par, st, cfg);
  REQUIRE(rep.theta_exact);

  const int draws = 2000;
  SampleConfig sc;
  sc.bins = 8;
  std::vector<double> mean_pmf(cfg.pmf_h_max, 0.0);
  for (int u = 0; u < draws; ++u) {
    SparseDigraph g = draw_backbone(pop, io, par, 40000 + u, sc);
    for (std::uint32_t d : g.out_degree(false))
      if (d < static_cast<std::size_t>(cfg.pmf_h_max)) mean_pmf[d] += 1.0;
  }
  double sup = 0;
  for (int h = 0; h < cfg.pmf_h_max; ++h) {
    mean_pmf[h] /= static_cast<double>(draws) * static_cast<double>(pop.n());
    sup = std::max(sup, std::abs(mean_pmf[h] - rep.theta_bar[h]));
  }
  // Monte Carlo error of the aggregate is ~= sqrt(theta / (n * draws)) ~ 7e-4.
  REQUIRE(sup < 5e-3);
}

TEST_CASE("bernstein bands hold at the stated confidence on 500 firms") {
  FirmPopulation pop = fixtures::random_population(500, 3, 91);
  IOTable io = fixtures::random_io(3, 92);
  GravityParams par = tuned_params(pop, io, 93, 1500.0);
  EnsembleStats st = ensemble_stats(pop, io, par);

  std::vector<SparseDigraph> draws;
  for (std::uint64_t s = 0; s < 100; ++s) draws.push_back(draw_backbone(pop, io, par, 600 + s));

  ConcentrationConfig cfg;
  cfg.delta = 0.05;
  ConcentrationReport rep = concentration_report(draws, pop, io, par, st, cfg);
  int draws_with_violation = 0;
  for (const auto& d : rep.per_draw)
    if (d.bernstein_violation_fraction > 0) ++draws_with_violation;
  REQUIRE(draws_with_violation <= 5);  // union bound guarantees <= 5 in expectation
}

TEST_CASE("monte carlo pmf reference tracks draws at ten thousand firms") {
  FirmPopulation pop = fixtures::random_population(10000, 3, 101);
  IOTable io = fixtures::random_io(3, 102);
  GravityParams par = tuned_params(pop, io, 103, 30000.0);
  EnsembleStats st = ensemble_stats(pop, io, par, 4);

  std::vector<SparseDigraph> draws;
  for (std::uint64_t s = 0; s < 10; ++s) draws.push_back(draw_backbone(pop, io, par, 900 + s));

  ConcentrationConfig cfg;
  cfg.threads = 4;
  ConcentrationReport rep = concentration_report(draws, pop, io, par, st, cfg);
  REQUIRE_FALSE(rep.theta_exact);
  double probe = 0;
  for (double t : rep.theta_bar) probe += t;
  REQUIRE(probe > 0.5);  // most firms have out-degree below the grid cap
  for (const auto& d : rep.per_draw) REQUIRE(d.pmf_sup_dev < 0.05);
}

TEST_CASE("concentration report rejects mismatched draws") {
  FirmPopulation pop = fixtures::random_population(30, 2, 111);
  IOTable io = fixtures::random_io(2, 112);
  GravityParams par = fixtures::random_params(io, 113);
  EnsembleStats st = ensemble_stats(pop, io, par);
  REQUIRE_THROWS_AS(concentration_report({}, pop, io, par, st), Error);
  SparseDigraph g = draw_backbone(pop, io, par, 1);
  PruneResult pr = prune_isolates(g);
  if (pr.removed > 0)
    REQUIRE_THROWS_AS(concentration_report({pr.graph}, pop, io, par, st), Error);
}
