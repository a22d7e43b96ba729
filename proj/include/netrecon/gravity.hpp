#pragma once

// Link-probability model and its evaluator.
//
//   x_ij = z * lambda_kl * S_kl^kappa * (m_i * m_j)^alpha,  p_ij = x/(1+x)
//
// evaluate() returns the expected link count, expected sector inflows, the
// relative sector violations, and analytic gradients in the optimization
// coordinates (log z, alpha, kappa, log lambda_kl). Firms are aggregated into
// cells; exact mode uses one cell per firm, binned mode uses equal-width
// log-size bins per sector (sizes span decades, and the pair score is linear
// in log size, so uniform log-width keeps the within-bin spread O(1/B)) with
// the cell size centroid as representative, so the binned gradient is the
// exact gradient of the binned surrogate.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "netrecon/common.hpp"
#include "netrecon/firms.hpp"
#include "netrecon/io_table.hpp"

namespace netrecon {

struct GravityBounds {
  double z_lo = 1e-8, z_hi = 1e4;
  double alpha_lo = 0.05, alpha_hi = 0.95;
  double kappa_lo = 0.01, kappa_hi = 0.99;
  double lambda_lo = 1e-6, lambda_hi = 1e3;
};

struct GravityParams {
  double z = 1.0;
  double alpha = 0.5;
  double kappa = 0.5;
  std::vector<double> lambda;            // one multiplier per positive S cell
  std::vector<std::int32_t> cell;        // k * n_sectors + l for each lambda
  std::vector<std::int32_t> cell_to_lambda;  // n^2 -> lambda index or -1
  int n_sectors = 0;

  static GravityParams init(const IOTable& io, double lambda0 = 1.0) {
    GravityParams p;
    p.n_sectors = io.n();
    p.cell_to_lambda.assign(static_cast<std::size_t>(io.n()) * io.n(), -1);
    for (int k = 0; k < io.n(); ++k)
      for (int l = 0; l < io.n(); ++l)
        if (io.s(k, l) > 0) {
          p.cell_to_lambda[static_cast<std::size_t>(k) * io.n() + l] =
              static_cast<std::int32_t>(p.lambda.size());
          p.cell.push_back(k * io.n() + l);
          p.lambda.push_back(lambda0);
        }
    return p;
  }

  int lambda_index(int k, int l) const {
    return cell_to_lambda[static_cast<std::size_t>(k) * n_sectors + l];
  }
  double lambda_at(int k, int l) const {
    int ix = lambda_index(k, l);
    if (ix < 0)
      fail("MissingLambda", "no multiplier for sector pair (" + std::to_string(k) + "," +
                                std::to_string(l) + ") with positive flow share");
    return lambda[ix];
  }
};

// p = x/(1+x), stable for huge x.
inline double link_probability(double x) {
  if (!(x >= 0)) fail("BadArgument", "link_probability: intensity must be nonnegative");
  if (x > 1.0) return 1.0 / (1.0 + 1.0 / x);
  return x / (1.0 + x);
}

inline double intensity(double m_i, double m_j, int k, int l, const GravityParams& p,
                        const IOTable& io) {
  double s = io.s(k, l);
  if (s <= 0) return 0.0;
  return p.z * p.lambda_at(k, l) * std::pow(s, p.kappa) * std::pow(m_i * m_j, p.alpha);
}

// Firms aggregated into per-sector cells. Exact mode: one singleton cell per
// firm. Binned mode: equal-width bins over the sector's observed log-size
// range, which keeps within-bin score spread O(1/bins) for heavy-tailed
// populations because the score is linear in log size.
struct GravityWorkspace {
  int n_sectors = 0;
  std::size_t n_firms = 0;
  int bins = 0;  // 0 = exact
  std::vector<double> sector_size;     // s_l = sum of sizes per sector
  std::vector<std::size_t> cell_off;   // per sector: cells in [off[k], off[k+1])
  std::vector<double> rep;             // representative size (centroid)
  std::vector<double> lrep;            // log rep (0 for rep == 0; contributions vanish)
  std::vector<double> cnt;             // firms in cell
  std::vector<double> mass;            // sum of sizes in cell

  static GravityWorkspace build(const FirmPopulation& pop, const IOTable& io, int bins) {
    GravityWorkspace ws;
    ws.n_sectors = io.n();
    ws.n_firms = pop.n();
    ws.bins = bins;
    ws.sector_size = pop.sector_sizes();
    ws.cell_off.assign(io.n() + 1, 0);

    std::vector<std::vector<std::size_t>> by_sector(io.n());
    for (std::size_t i = 0; i < pop.n(); ++i) by_sector[pop.sector[i]].push_back(i);

    for (int k = 0; k < io.n(); ++k) {
      const auto& firms = by_sector[k];
      if (bins <= 0) {
        for (std::size_t i : firms) {
          double m = pop.size[i];
          ws.rep.push_back(m);
          ws.lrep.push_back(m > 0 ? std::log(m) : 0.0);
          ws.cnt.push_back(1.0);
          ws.mass.push_back(m);
        }
      } else if (!firms.empty()) {
        double lo = std::log(pop.size[firms[0]]), hi = lo;
        for (std::size_t i : firms) {
          double lm = std::log(pop.size[i]);
          lo = std::min(lo, lm);
          hi = std::max(hi, lm);
        }
        double width = (hi - lo) / bins;
        std::vector<double> c_cnt(bins, 0.0), c_mass(bins, 0.0);
        for (std::size_t i : firms) {
          int b = width > 0
                      ? std::min(bins - 1, static_cast<int>((std::log(pop.size[i]) - lo) / width))
                      : 0;
          c_cnt[b] += 1.0;
          c_mass[b] += pop.size[i];
        }
        for (int b = 0; b < bins; ++b) {
          if (c_cnt[b] == 0) continue;
          double centroid = c_mass[b] / c_cnt[b];
          ws.rep.push_back(centroid);
          ws.lrep.push_back(centroid > 0 ? std::log(centroid) : 0.0);
          ws.cnt.push_back(c_cnt[b]);
          ws.mass.push_back(c_mass[b]);
        }
      }
      ws.cell_off[k + 1] = ws.rep.size();
    }
    return ws;
  }
};

// Parameter vector layout used by the fitter and the gradient:
//   [0] zeta = log z, [1] alpha, [2] kappa, [3 + j] log lambda_j.
struct GravityEval {
  double sum_p = 0;                // expected links (ordered pairs, no diagonal)
  double objective = 0;            // (sum_p - target)^2
  std::vector<double> F;           // expected inflow per seller sector
  std::vector<double> violation;   // |F_l - s_l| / s_l, 0 where s_l == 0
  std::vector<double> d_sum_p;     // gradient of sum_p
  std::vector<double> obj_grad;    // gradient of objective
  std::vector<double> jac_F;       // n_sectors rows x dim, row-major
  int dim = 0;
};

inline GravityEval evaluate(const GravityWorkspace& ws, const IOTable& io,
                            const GravityParams& par, double target_links, bool want_grad,
                            int threads = 1) {
  const int S = ws.n_sectors;
  const int dim = 3 + static_cast<int>(par.lambda.size());
  GravityEval ev;
  ev.dim = dim;
  ev.F.assign(S, 0.0);
  ev.violation.assign(S, 0.0);
  if (want_grad) {
    ev.d_sum_p.assign(dim, 0.0);
    ev.obj_grad.assign(dim, 0.0);
    ev.jac_F.assign(static_cast<std::size_t>(S) * dim, 0.0);
  }

  // Cache rep^alpha once per evaluation.
  std::vector<double> pw(ws.rep.size());
  for (std::size_t c = 0; c < ws.rep.size(); ++c) pw[c] = std::pow(ws.rep[c], par.alpha);

  struct BlockSums {
    double p = 0, q = 0, qlm = 0, mp = 0, mq = 0, mqlm = 0;
  };
  const std::size_t n_blocks = par.lambda.size();
  std::vector<BlockSums> sums(n_blocks);

  parallel_for(n_blocks, threads, [&](std::size_t bix) {
    int k = par.cell[bix] / S, l = par.cell[bix] % S;
    double C = par.z * par.lambda[bix] * std::pow(io.s(k, l), par.kappa);
    BlockSums acc;
    std::size_t a0 = ws.cell_off[k], a1 = ws.cell_off[k + 1];
    std::size_t b0 = ws.cell_off[l], b1 = ws.cell_off[l + 1];
    for (std::size_t a = a0; a < a1; ++a) {
      double Cta = C * pw[a];
      double P = 0, Q = 0, QL = 0;
      for (std::size_t b = b0; b < b1; ++b) {
        double v = Cta * pw[b];
        double p = v > 1.0 ? 1.0 / (1.0 + 1.0 / v) : v / (1.0 + v);
        double q = p - p * p;
        P += ws.cnt[b] * p;
        Q += ws.cnt[b] * q;
        QL += ws.cnt[b] * q * ws.lrep[b];
      }
      double QLa = Q * ws.lrep[a] + QL;
      acc.p += ws.cnt[a] * P;
      acc.q += ws.cnt[a] * Q;
      acc.qlm += ws.cnt[a] * QLa;
      acc.mp += ws.mass[a] * P;
      acc.mq += ws.mass[a] * Q;
      acc.mqlm += ws.mass[a] * QLa;
    }
    if (k == l) {
      // Remove the i == j diagonal counted once per cell.
      for (std::size_t a = a0; a < a1; ++a) {
        double v = C * pw[a] * pw[a];
        double p = v > 1.0 ? 1.0 / (1.0 + 1.0 / v) : v / (1.0 + v);
        double q = p - p * p;
        acc.p -= ws.cnt[a] * p;
        acc.q -= ws.cnt[a] * q;
        acc.qlm -= ws.cnt[a] * q * 2.0 * ws.lrep[a];
        acc.mp -= ws.mass[a] * p;
        acc.mq -= ws.mass[a] * q;
        acc.mqlm -= ws.mass[a] * q * 2.0 * ws.lrep[a];
      }
    }
    sums[bix] = acc;
  });

  // Fixed-order combine: results identical for every thread count.
  for (std::size_t bix = 0; bix < n_blocks; ++bix) {
    int k = par.cell[bix] / S, l = par.cell[bix] % S;
    const BlockSums& a = sums[bix];
    double I = io.i(k, l);
    double lS = std::log(io.s(k, l));
    ev.sum_p += a.p;
    ev.F[l] += I * a.mp;
    if (want_grad) {
      ev.d_sum_p[0] += a.q;
      ev.d_sum_p[1] += a.qlm;
      ev.d_sum_p[2] += a.q * lS;
      ev.d_sum_p[3 + bix] = a.q;
      double* row = &ev.jac_F[static_cast<std::size_t>(l) * dim];
      row[0] += I * a.mq;
      row[1] += I * a.mqlm;
      row[2] += I * a.mq * lS;
      row[3 + bix] = I * a.mq;
    }
  }

  for (int l = 0; l < S; ++l)
    ev.violation[l] = ws.sector_size[l] > 0 ? std::abs(ev.F[l] - ws.sector_size[l]) / ws.sector_size[l]
                                            : 0.0;
  double diff = ev.sum_p - target_links;
  ev.objective = diff * diff;
  if (want_grad)
    for (int d = 0; d < dim; ++d) ev.obj_grad[d] = 2.0 * diff * ev.d_sum_p[d];
  return ev;
}

}  // namespace netrecon
