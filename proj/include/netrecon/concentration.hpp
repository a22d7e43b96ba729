#pragma once

// Ensemble concentration diagnostics for backbone draws: per-firm Bernstein
// degree bands at a union-bound confidence level, the sup-distance between
// each draw's out-degree PMF and its model-implied counterpart, and
// edge-count z-scores. The model PMF is an average of per-firm
// Poisson-binomial laws, computed exactly by dynamic programming on small
// populations and by Monte Carlo reference draws at scale.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "netrecon/common.hpp"
#include "netrecon/digraph.hpp"
#include "netrecon/firms.hpp"
#include "netrecon/gravity.hpp"
#include "netrecon/io_table.hpp"
#include "netrecon/rng.hpp"
#include "netrecon/sampler.hpp"

namespace netrecon {

struct ConcentrationConfig {
  double delta = 0.05;           // confidence level for the degree bands
  int pmf_h_max = 10;            // PMF compared on thresholds h = 0..pmf_h_max-1
  std::size_t exact_pmf_limit = 600;  // largest population for the exact DP
  int reference_draws = 64;      // Monte Carlo fallback beyond the DP limit
  std::uint64_t seed = 0x726566u;     // stream for the reference draws
  int bins = 16;
  int threads = 1;
};

struct DrawDiagnostics {
  std::size_t edges = 0;
  double edge_z = 0;                       // (E_u - mu_E) / sigma_E, 0 if degenerate
  double bernstein_violation_fraction = 0; // firms outside their degree band
  double pmf_sup_dev = 0;                  // sup_h |empirical pmf - theta_bar|
  std::vector<double> degree_pmf;          // empirical out-degree pmf on the h grid
};

struct ConcentrationReport {
  double delta = 0;
  std::vector<double> theta_bar;  // model-implied mean out-degree pmf on the h grid
  bool theta_exact = true;        // DP (exact) vs Monte Carlo reference
  std::vector<double> band;       // per-firm Bernstein band half-widths
  std::vector<DrawDiagnostics> per_draw;
};

namespace detail {

// Mean Poisson-binomial out-degree PMF over firms, truncated at h_max.
// Truncation is exact for h < h_max: successes only accumulate, so mass that
// leaves the window never returns.
inline std::vector<double> mean_degree_pmf_exact(const FirmPopulation& pop, const IOTable& io,
                                                 const GravityParams& par, int h_max,
                                                 int threads) {
  const std::size_t n = pop.n();
  const int S = io.n();
  std::vector<double> C(static_cast<std::size_t>(S) * S, 0.0);
  for (std::size_t j = 0; j < par.lambda.size(); ++j) {
    int k = par.cell[j] / S, l = par.cell[j] % S;
    C[par.cell[j]] = par.z * par.lambda[j] * std::pow(io.s(k, l), par.kappa);
  }
  std::vector<double> pw(n);
  for (std::size_t i = 0; i < n; ++i) pw[i] = std::pow(pop.size[i], par.alpha);

  std::vector<std::vector<double>> partial(n);
  parallel_for(n, threads, [&](std::size_t i) {
    std::vector<double> dp(h_max, 0.0);
    dp[0] = 1.0;
    const double* row = &C[static_cast<std::size_t>(pop.sector[i]) * S];
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double c = row[pop.sector[j]];
      if (c <= 0) continue;
      double p = link_probability(c * pw[i] * pw[j]);
      if (p == 0.0) continue;
      for (int h = h_max - 1; h > 0; --h) dp[h] = dp[h] * (1.0 - p) + dp[h - 1] * p;
      dp[0] *= 1.0 - p;
    }
    partial[i] = std::move(dp);
  });

  std::vector<double> theta(h_max, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (int h = 0; h < h_max; ++h) theta[h] += partial[i][h];
  for (int h = 0; h < h_max; ++h) theta[h] /= static_cast<double>(n);
  return theta;
}

inline std::vector<double> empirical_degree_pmf(const SparseDigraph& g, int h_max) {
  std::vector<double> pmf(h_max, 0.0);
  std::vector<std::uint32_t> deg = g.out_degree(false);
  for (std::size_t d : deg)
    if (d < static_cast<std::size_t>(h_max)) pmf[d] += 1.0;
  for (int h = 0; h < h_max; ++h) pmf[h] /= static_cast<double>(g.n());
  return pmf;
}

inline std::vector<double> mean_degree_pmf_mc(const FirmPopulation& pop, const IOTable& io,
                                              const GravityParams& par,
                                              const ConcentrationConfig& cfg) {
  std::vector<double> theta(cfg.pmf_h_max, 0.0);
  SampleConfig sc;
  sc.bins = cfg.bins;
  sc.threads = cfg.threads;
  for (int r = 0; r < cfg.reference_draws; ++r) {
    std::uint64_t s = Rng(cfg.seed).key(0x7265666472ull).key(static_cast<std::uint64_t>(r)).next_u64();
    SparseDigraph g = draw_backbone(pop, io, par, s, sc);
    std::vector<double> pmf = empirical_degree_pmf(g, cfg.pmf_h_max);
    for (int h = 0; h < cfg.pmf_h_max; ++h) theta[h] += pmf[h];
  }
  for (int h = 0; h < cfg.pmf_h_max; ++h) theta[h] /= static_cast<double>(cfg.reference_draws);
  return theta;
}

}  // namespace detail

inline ConcentrationReport concentration_report(const std::vector<SparseDigraph>& draws,
                                                const FirmPopulation& pop, const IOTable& io,
                                                const GravityParams& par,
                                                const EnsembleStats& stats,
                                                const ConcentrationConfig& cfg = {}) {
  if (draws.empty()) fail("BadArgument", "concentration: need at least one draw");
  const std::size_t n = pop.n();
  for (const auto& g : draws)
    if (g.n() != n)
      fail("BadArgument", "concentration: draw has " + std::to_string(g.n()) +
                              " firms, population has " + std::to_string(n));

  ConcentrationReport rep;
  rep.delta = cfg.delta;

  // Band solving 2 exp(-t^2 / (2 sigma_i^2 + (2/3) t)) <= delta / n; the
  // closed form sqrt(2 sigma^2 L) + (2/3) L with L = log(2 n / delta)
  // dominates the exact root, so the coverage guarantee is preserved.
  const double L = std::log(2.0 * static_cast<double>(n) / cfg.delta);
  rep.band.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    rep.band[i] = std::sqrt(2.0 * stats.sigma2[i] * L) + (2.0 / 3.0) * L;

  rep.theta_exact = n <= cfg.exact_pmf_limit;
  rep.theta_bar = rep.theta_exact
                      ? detail::mean_degree_pmf_exact(pop, io, par, cfg.pmf_h_max, cfg.threads)
                      : detail::mean_degree_pmf_mc(pop, io, par, cfg);

  const double sigma_E = std::sqrt(std::max(stats.sigma2_E, 0.0));
  rep.per_draw.resize(draws.size());
  for (std::size_t u = 0; u < draws.size(); ++u) {
    const SparseDigraph& g = draws[u];
    DrawDiagnostics& d = rep.per_draw[u];
    d.edges = g.m();
    d.edge_z = sigma_E > 0 ? (static_cast<double>(g.m()) - stats.mu_E) / sigma_E : 0.0;

    std::vector<std::uint32_t> deg = g.out_degree(false);
    std::size_t bad = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (std::abs(static_cast<double>(deg[i]) - stats.mu[i]) > rep.band[i]) ++bad;
    d.bernstein_violation_fraction = static_cast<double>(bad) / static_cast<double>(n);

    d.degree_pmf = detail::empirical_degree_pmf(g, cfg.pmf_h_max);
    double sup = 0;
    for (int h = 0; h < cfg.pmf_h_max; ++h)
      sup = std::max(sup, std::abs(d.degree_pmf[h] - rep.theta_bar[h]));
    d.pmf_sup_dev = sup;
  }
  return rep;
}

}  // namespace netrecon
