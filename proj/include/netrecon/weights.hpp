#pragma once

// Minimum-energy weighting of the closed backbone: minimize Σ w_ij² over
// row-stochastic matrices supported on the graph, subject to an edge-weight
// floor, per-firm relative inflow bands, per-sector total bands, and caps on
// the mean and mean-square self-weight. Solved by dual ascent: for fixed
// multipliers the Lagrangian splits by row into weighted capped-simplex
// projections (exact, O(deg log deg)); the multipliers then take a
// preconditioned projected-gradient step. The stationary check certifies
// that the stationary distribution of the resulting chain stays within
// ‖μ−ν‖₁ ≤ δ/γ of the normalized size vector.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "netrecon/closure.hpp"
#include "netrecon/common.hpp"
#include "netrecon/digraph.hpp"
#include "netrecon/rng.hpp"
#include "netrecon/simplex.hpp"

namespace netrecon {

struct WeightProgram {
  SparseDigraph support;  // strongly connected, self-loop on every node
  double delta = 0.10;    // firm-level relative inflow band
  double eps_w = 0.10;    // sector-total relative band
  double eta1 = 0.10;     // cap on mean self-weight
  double eta2 = 0.10;     // cap on mean squared self-weight
  double eps0 = 1e-6;     // weight floor on support edges
};

struct FeasibilityReport {
  bool feasible = true;             // necessary conditions only
  std::vector<std::string> issues;  // violation plus suggested minimal fix
};

// Cheap necessary conditions checked before any solve. Passing the probe
// does not guarantee feasibility; failing it proves infeasibility.
inline FeasibilityReport feasibility_probe(const WeightProgram& prog) {
  FeasibilityReport rep;
  auto flag = [&](const std::string& s) {
    rep.feasible = false;
    rep.issues.push_back(s);
  };
  if (!(prog.delta > 0) || !(prog.eps_w > 0) || !(prog.eta1 > 0) || !(prog.eta2 > 0))
    flag("all band tolerances must be positive");
  if (!(prog.eps0 > 0) || !(prog.eps0 <= 1))
    flag("edge weight floor must lie in (0, 1]");
  const auto deg = prog.support.out_degree(true);
  std::uint32_t max_deg = 0;
  for (auto d : deg) max_deg = std::max(max_deg, d);
  if (max_deg > 0 && prog.eps0 * max_deg > 1.0)
    flag("row of out-degree " + std::to_string(max_deg) + " cannot sum to 1 with floor " +
         format_double(prog.eps0) + "; lower the floor below " +
         format_double(1.0 / max_deg));
  if (prog.eta1 < prog.eps0)
    flag("mean self-weight cap " + format_double(prog.eta1) +
         " is below the floor every self-loop must carry; raise it to at least " +
         format_double(prog.eps0));
  if (prog.eta2 < prog.eps0 * prog.eps0)
    flag("mean squared self-weight cap " + format_double(prog.eta2) +
         " is below the floor squared; raise it to at least " +
         format_double(prog.eps0 * prog.eps0));
  return rep;
}

struct WeightedNetwork {
  SparseDigraph graph;         // support with canonical edge order
  std::vector<double> weight;  // aligned with graph.edges; row i is contiguous
  std::vector<double> s_hat;   // model sector totals Σ_i m_i Σ_{j∈ℱ_l} w_ij
  int iterations = 0;
  double primal_residual = 0;  // max |w − w_prev| at exit
  double band_violation = 0;   // worst normalized band excess at exit (≤ 0 ok)
};

struct WeightSolveConfig {
  int max_iterations = 30000;
  double tol = 1e-8;             // primal-residual target
  std::uint64_t start_seed = 0;  // randomizes initial multipliers; 0 = cold
  int threads = 1;
  bool diagnose_infeasibility = true;  // on failure, bisect a band inflation
};

namespace detail {

// One dual-ascent solve against bands scaled by `inflate`. Returns true and
// fills `out` when the true (inflated) bands hold and the primal settled.
inline bool solve_weights_attempt(const WeightProgram& prog, const WeightSolveConfig& cfg,
                                  double inflate, int max_iterations, WeightedNetwork& out,
                                  double& worst_excess, std::string& worst_family) {
  const SparseDigraph& g = prog.support;
  const std::size_t N = g.n();
  const std::size_t E = g.m();
  const int S = g.n_sectors;
  const std::vector<double>& m = g.size;

  const double delta = prog.delta * inflate;
  const double eps_w = prog.eps_w * inflate;
  const double eta1 = prog.eta1 * inflate;
  const double eta2 = prog.eta2 * inflate;
  // The dual targets sit a hair inside the bands so that a finite solve can
  // satisfy the true bands strictly; the perturbation is far below every
  // comparison tolerance used downstream.
  const double shrink = 1.0 - 1e-9;

  // Row offsets over the canonical (src, dst) edge order.
  std::vector<std::size_t> off(N + 1, 0);
  for (const auto& e : g.edges) ++off[e.src + 1];
  for (std::size_t i = 0; i < N; ++i) off[i + 1] += off[i];

  std::vector<double> s(S, 0.0);
  for (std::size_t j = 0; j < N; ++j) s[g.sector[j]] += m[j];

  // Constraint-gradient row norms for diagonal preconditioning.
  std::vector<double> firm_norm2(N, 0.0), sector_norm2(S, 0.0);
  for (const auto& e : g.edges) {
    const double mi2 = m[e.src] * m[e.src];
    firm_norm2[e.dst] += mi2;
    sector_norm2[g.sector[e.dst]] += mi2;
  }
  const double Nd = static_cast<double>(N);
  const double mean_norm2 = 1.0 / Nd;      // gradient 1/N on each diagonal
  const double sq_norm2 = 4.0 / Nd;        // gradient 2w_ii/N, |w| ≤ 1

  // Multipliers (all ≥ 0): firm upper/lower, sector upper/lower, self caps.
  std::vector<double> af_up(N, 0.0), af_lo(N, 0.0), as_up(S, 0.0), as_lo(S, 0.0);
  double t1 = 0.0, t2 = 0.0;
  if (cfg.start_seed != 0) {
    Rng rng = Rng(cfg.start_seed).key(0x77737461ull);
    for (std::size_t j = 0; j < N; ++j) af_up[j] = 0.1 * rng.next_double();
    for (std::size_t j = 0; j < N; ++j) af_lo[j] = 0.1 * rng.next_double();
    for (int l = 0; l < S; ++l) as_up[l] = 0.1 * rng.next_double();
    for (int l = 0; l < S; ++l) as_lo[l] = 0.1 * rng.next_double();
    t1 = 0.1 * rng.next_double();
    t2 = 0.1 * rng.next_double();
  }

  std::vector<double> w(E, 0.0), w_prev(E, 0.0);
  std::vector<double> inflow(N, 0.0), shat(S, 0.0);

  double sigma = 1.0;  // global dual step scale, adapted on restarts
  double best_metric = std::numeric_limits<double>::infinity();
  std::vector<double> best_af_up = af_up, best_af_lo = af_lo, best_as_up = as_up,
                      best_as_lo = as_lo;
  double best_t1 = t1, best_t2 = t2;
  int best_it = 0;

  int it = 0;
  double primal_res = std::numeric_limits<double>::infinity();
  double band_excess = std::numeric_limits<double>::infinity();
  std::string band_family = "firm";

  for (it = 1; it <= max_iterations; ++it) {
    // Primal: per-row weighted capped-simplex projection.
    std::swap(w, w_prev);
    parallel_for(N, cfg.threads, [&](std::size_t i) {
      const std::size_t lo = off[i], hi = off[i + 1];
      const std::size_t deg = hi - lo;
      std::vector<double> q(deg), y(deg);
      for (std::size_t e = lo; e < hi; ++e) {
        const std::uint32_t j = g.edges[e].dst;
        const bool diag = (static_cast<std::size_t>(j) == i);
        const double qe = 1.0 + (diag ? t2 / Nd : 0.0);
        const double ce = m[i] * (af_up[j] - af_lo[j] + as_up[g.sector[j]] - as_lo[g.sector[j]]) +
                          (diag ? t1 / Nd : 0.0);
        q[e - lo] = qe;
        y[e - lo] = -ce / (2.0 * qe);
      }
      capped_simplex_project_weighted(deg, q.data(), y.data(), prog.eps0, 1.0, 1.0, w.data() + lo);
    });

    // Constraint values, fixed order for bitwise determinism.
    std::fill(inflow.begin(), inflow.end(), 0.0);
    std::fill(shat.begin(), shat.end(), 0.0);
    double self_sum = 0.0, self_sq = 0.0;
    for (std::size_t e = 0; e < E; ++e) {
      const auto& ed = g.edges[e];
      const double v = m[ed.src] * w[e];
      inflow[ed.dst] += v;
      shat[g.sector[ed.dst]] += v;
      if (ed.src == ed.dst) {
        self_sum += w[e];
        self_sq += w[e] * w[e];
      }
    }

    // Violations normalized by their band scale; > 0 means violated.
    band_excess = -std::numeric_limits<double>::infinity();
    band_family = "firm";
    for (std::size_t j = 0; j < N; ++j) {
      const double ex = (std::abs(inflow[j] - m[j]) - delta * m[j]) / m[j];
      if (ex > band_excess) {
        band_excess = ex;
        band_family = "firm";
      }
    }
    for (int l = 0; l < S; ++l) {
      if (s[l] <= 0) continue;
      const double ex = (std::abs(shat[l] - s[l]) - eps_w * s[l]) / s[l];
      if (ex > band_excess) {
        band_excess = ex;
        band_family = "sector";
      }
    }
    {
      const double ex1 = (self_sum / Nd - eta1) / eta1;
      if (ex1 > band_excess) {
        band_excess = ex1;
        band_family = "self-weight mean";
      }
      const double ex2 = (self_sq / Nd - eta2) / eta2;
      if (ex2 > band_excess) {
        band_excess = ex2;
        band_family = "self-weight square";
      }
    }

    primal_res = 0.0;
    for (std::size_t e = 0; e < E; ++e)
      primal_res = std::max(primal_res, std::abs(w[e] - w_prev[e]));

    if (band_excess <= 0.0 && primal_res < cfg.tol && it > 1) break;

    // Restart on residual increase: restore the best multipliers seen and
    // shrink the dual step.  The metric is not monotone even on convergent
    // runs, so only clear divergence (well above the best) or a long stall
    // triggers a restart; reacting to every transient rise can freeze the
    // step scale before the duals reach their fixed point.
    const double metric = std::max(band_excess, 0.0) + primal_res;
    if (metric < best_metric) {
      best_metric = metric;
      best_it = it;
      best_af_up = af_up;
      best_af_lo = af_lo;
      best_as_up = as_up;
      best_as_lo = as_lo;
      best_t1 = t1;
      best_t2 = t2;
    } else if ((metric > best_metric * 1.5 || it - best_it > 400) && sigma > 1e-12) {
      sigma *= 0.7;
      best_it = it;
      af_up = best_af_up;
      af_lo = best_af_lo;
      as_up = best_as_up;
      as_lo = best_as_lo;
      t1 = best_t1;
      t2 = best_t2;
    }

    // Dual ascent, diagonally preconditioned by constraint row norms.
    for (std::size_t j = 0; j < N; ++j) {
      const double step = sigma / std::max(firm_norm2[j], 1e-300);
      af_up[j] = std::max(0.0, af_up[j] + step * (inflow[j] - (1.0 + delta * shrink) * m[j]));
      af_lo[j] = std::max(0.0, af_lo[j] + step * ((1.0 - delta * shrink) * m[j] - inflow[j]));
    }
    for (int l = 0; l < S; ++l) {
      if (s[l] <= 0) continue;
      const double step = sigma / std::max(sector_norm2[l], 1e-300);
      as_up[l] = std::max(0.0, as_up[l] + step * (shat[l] - (1.0 + eps_w * shrink) * s[l]));
      as_lo[l] = std::max(0.0, as_lo[l] + step * ((1.0 - eps_w * shrink) * s[l] - shat[l]));
    }
    t1 = std::max(0.0, t1 + sigma / mean_norm2 * (self_sum / Nd - eta1 * shrink));
    t2 = std::max(0.0, t2 + sigma / sq_norm2 * (self_sq / Nd - eta2 * shrink));
  }

  worst_excess = band_excess;
  worst_family = band_family;
  const bool ok = band_excess <= 0.0 && primal_res < cfg.tol;
  if (ok) {
    out.graph = g;
    out.weight = std::move(w);
    out.s_hat = std::move(shat);
    out.iterations = std::min(it, max_iterations);
    out.primal_residual = primal_res;
    out.band_violation = band_excess;
  }
  return ok;
}

}  // namespace detail

// Solves the weighting QP. The objective is strictly convex, so the returned
// weights are the unique optimum regardless of the multiplier start.
inline WeightedNetwork solve_weights(const WeightProgram& prog,
                                     const WeightSolveConfig& cfg = {}) {
  const SparseDigraph& g = prog.support;
  if (g.n() == 0) fail("BadArgument", "weights: empty support");
  for (double mi : g.size)
    if (!(mi > 0)) fail("BadArgument", "weights: firm sizes must be positive");

  FeasibilityReport probe = feasibility_probe(prog);
  if (!probe.feasible) {
    std::string msg = "weighting program fails necessary conditions:";
    for (const auto& s : probe.issues) msg += " " + s + ";";
    fail("Infeasible", msg);
  }

  // Pre: strongly connected with a self-loop on every node (aperiodicity).
  {
    std::vector<char> has_self(g.n(), 0);
    for (const auto& e : g.edges)
      if (e.src == e.dst) has_self[e.src] = 1;
    for (std::size_t i = 0; i < g.n(); ++i)
      if (!has_self[i]) fail("BadArgument", "weights: node without self-loop");
    Condensation cond = tarjan_scc(g);
    if (cond.n_components() != 1)
      fail("BadArgument", "weights: support is not strongly connected (" +
                              std::to_string(cond.n_components()) + " components)");
  }

  WeightedNetwork out;
  double excess = 0;
  std::string family;
  if (detail::solve_weights_attempt(prog, cfg, 1.0, cfg.max_iterations, out, excess, family))
    return out;

  std::string msg = "weighting bands unsatisfiable; most violated family: " + family +
                    " (normalized excess " + format_double(excess) + ")";
  if (cfg.diagnose_infeasibility) {
    // Minimal common inflation of (δ, ε, η₁, η₂) restoring feasibility,
    // located by doubling then bisection. Reported, never applied.
    const int probe_iters = std::max(500, cfg.max_iterations / 8);
    double lo = 1.0, hi = 1.0;
    bool found = false;
    for (int d = 0; d < 20; ++d) {
      hi *= 2.0;
      WeightedNetwork tmp;
      double e2;
      std::string f2;
      if (detail::solve_weights_attempt(prog, cfg, hi, probe_iters, tmp, e2, f2)) {
        found = true;
        break;
      }
      lo = hi;
    }
    if (found) {
      for (int b = 0; b < 30 && hi - lo > 1e-3 * lo; ++b) {
        const double mid = 0.5 * (lo + hi);
        WeightedNetwork tmp;
        double e2;
        std::string f2;
        if (detail::solve_weights_attempt(prog, cfg, mid, probe_iters, tmp, e2, f2))
          hi = mid;
        else
          lo = mid;
      }
      msg += "; inflating all bands by " + format_double(hi) + " restores feasibility";
    } else {
      msg += "; no common band inflation up to 2^20 restores feasibility";
    }
  }
  fail("Infeasible", msg);
}

struct StationaryCheck {
  std::vector<double> mu;        // m / Σm
  std::vector<double> nu;        // stationary distribution of W
  std::vector<double> residual;  // μ − Wᵀμ
  double l1_residual = 0;        // ‖μ − Wᵀμ‖₁, ≤ δ by the firm bands
  double l1_mu_nu = 0;           // ‖μ − ν‖₁
  double gamma = 0;              // spectral gap 1 − |λ₂|
  bool gamma_lower_bound_only = false;  // |λ₂| within 1e-8 of 1
  double bound = 0;              // δ / γ
  bool pass = false;
  int power_iterations = 0;
};

// Certifies ‖μ − ν‖₁ ≤ δ/γ: ν by power iteration to ‖ν_{t+1} − ν_t‖₁ < 1e-12,
// γ by power iteration on Wᵀ restricted to the zero-sum subspace (the
// invariant complement of the stationary direction).
inline StationaryCheck stationary_check(const WeightedNetwork& net, const std::vector<double>& m,
                                        double delta, int max_power_iterations = 100000) {
  const SparseDigraph& g = net.graph;
  const std::size_t N = g.n();
  if (m.size() != N) fail("BadArgument", "stationary check: size vector mismatch");
  StationaryCheck chk;

  double M = 0;
  for (double v : m) M += v;
  if (!(M > 0)) fail("BadArgument", "stationary check: total size must be positive");
  chk.mu.resize(N);
  for (std::size_t j = 0; j < N; ++j) chk.mu[j] = m[j] / M;

  auto apply_wt = [&](const std::vector<double>& x, std::vector<double>& y) {
    std::fill(y.begin(), y.end(), 0.0);
    for (std::size_t e = 0; e < g.m(); ++e)
      y[g.edges[e].dst] += x[g.edges[e].src] * net.weight[e];
  };

  // One-step residual r = μ − Wᵀμ; the firm bands give ‖r‖₁ ≤ δ.
  std::vector<double> tmp(N, 0.0);
  apply_wt(chk.mu, tmp);
  chk.residual.resize(N);
  for (std::size_t j = 0; j < N; ++j) {
    chk.residual[j] = chk.mu[j] - tmp[j];
    chk.l1_residual += std::abs(chk.residual[j]);
  }

  // Stationary vector by power iteration from μ.
  chk.nu = chk.mu;
  double diff = std::numeric_limits<double>::infinity(), prev_diff = diff;
  int it = 0;
  for (it = 1; it <= max_power_iterations; ++it) {
    apply_wt(chk.nu, tmp);
    double total = 0;
    for (double v : tmp) total += v;
    diff = 0;
    for (std::size_t j = 0; j < N; ++j) {
      const double v = tmp[j] / total;
      diff += std::abs(v - chk.nu[j]);
      chk.nu[j] = v;
    }
    if (diff < 1e-12) break;
    prev_diff = diff;
  }
  chk.power_iterations = it;
  if (diff >= 1e-12) {
    const double ratio = prev_diff > 0 ? std::min(1.0, diff / prev_diff) : 1.0;
    fail("PowerIterationStalled",
         "stationary vector not converged after " + std::to_string(max_power_iterations) +
             " iterations (last step " + format_double(diff) + "); partial spectral-gap lower bound " +
             format_double(1.0 - ratio));
  }

  for (std::size_t j = 0; j < N; ++j) chk.l1_mu_nu += std::abs(chk.mu[j] - chk.nu[j]);

  // Spectral gap: power iteration on the zero-sum subspace, which Wᵀ maps to
  // itself; the trailing-window maximum of the decay ratios upper-bounds
  // |λ₂| against oscillation from complex pairs, keeping γ conservative.
  {
    std::vector<double> v(N), vn(N);
    Rng rng(0x67616d6d61ull);
    double mean = 0;
    for (std::size_t j = 0; j < N; ++j) {
      v[j] = rng.next_double() - 0.5;
      mean += v[j];
    }
    mean /= static_cast<double>(N);
    double norm = 0;
    for (std::size_t j = 0; j < N; ++j) {
      v[j] -= mean;
      norm += std::abs(v[j]);
    }
    for (auto& x : v) x /= norm;

    std::vector<double> ratios;
    double prev_lam = -1;
    int stable = 0;
    bool collapsed = false;
    for (int t = 0; t < 50; ++t) {
      apply_wt(v, vn);
      double dot = 0;
      for (std::size_t j = 0; j < N; ++j) dot += vn[j];
      double nn = 0;
      for (std::size_t j = 0; j < N; ++j) {
        vn[j] -= dot * chk.nu[j];  // re-project onto the zero-sum subspace
        nn += std::abs(vn[j]);
      }
      if (nn <= 1e-30) {
        collapsed = true;  // λ₂ numerically zero
        break;
      }
      const double lam = nn;  // decay ratio, since v was L1-normalized
      ratios.push_back(lam);
      for (std::size_t j = 0; j < N; ++j) v[j] = vn[j] / nn;
      if (std::abs(lam - prev_lam) < 1e-10) {
        if (++stable >= 3) break;
      } else {
        stable = 0;
      }
      prev_lam = lam;
    }
    double lam2 = 0;
    if (!collapsed && !ratios.empty()) {
      const std::size_t k0 = ratios.size() > 10 ? ratios.size() - 10 : 0;
      for (std::size_t i = k0; i < ratios.size(); ++i) lam2 = std::max(lam2, ratios[i]);
      lam2 = std::min(1.0, lam2);
    }
    chk.gamma = 1.0 - lam2;
    chk.gamma_lower_bound_only = lam2 > 1.0 - 1e-8;
  }

  chk.bound = chk.gamma > 0 ? delta / chk.gamma : std::numeric_limits<double>::infinity();
  chk.pass = chk.l1_residual <= delta && chk.l1_mu_nu <= chk.bound * (1.0 + 1e-6);
  return chk;
}

}  // namespace netrecon
