#pragma once

// Synthetic economies. Two generators: a small fixed toy (three sectors, a
// few hundred firms, sizes within one decade so the weighting bands are
// comfortably feasible) used for demos and end-to-end determinism checks,
// and a configurable "US-shaped" economy (24 sectors, 173 positive IO flows,
// nine decade-wide size bins with geometrically decaying counts) that
// reproduces the qualitative texture of the real inputs at desk scale.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "netrecon/common.hpp"
#include "netrecon/factory.hpp"
#include "netrecon/firms.hpp"
#include "netrecon/gravity.hpp"
#include "netrecon/io_table.hpp"
#include "netrecon/rng.hpp"

namespace netrecon {

struct SyntheticEconomy {
  IOTable io;
  FirmSizeBinTable bins;
};

// Gravity parameters made self-consistent with a population: at the given
// (alpha, kappa) the multipliers are raked and z bisected until every sector
// inflow matches its sector size, so the band constraints hold at the truth
// and the implied expected link count is a reachable fit target. The sector
// identities pin the absolute scale of the intensities, which means the link
// count is a *consequence* of the economy, not a free knob; targets far from
// the implied value are unattainable within tight bands.
struct SyntheticTruth {
  GravityParams params;
  double target_links = 0;   // expected links at the truth
  double max_violation = 0;  // residual relative sector violation after raking
};

inline SyntheticTruth consistent_truth(const FirmPopulation& pop, const IOTable& io, double alpha,
                                       double kappa, int bins = 0) {
  GravityWorkspace ws = GravityWorkspace::build(pop, io, bins);
  SyntheticTruth t;
  t.params = GravityParams::init(io);
  t.params.alpha = alpha;
  t.params.kappa = kappa;

  double s_tot = 0;
  for (double s : ws.sector_size) s_tot += s;
  auto total_inflow = [&](double zeta) {
    t.params.z = std::exp(zeta);
    GravityEval ev = evaluate(ws, io, t.params, 0.0, false);
    double f = 0;
    for (double v : ev.F) f += v;
    return f;
  };
  // Bisect z so the total inflow matches, then rake each lambda column to its
  // sector size; alternate a few rounds until the violations are negligible.
  for (int round = 0; round < 12; ++round) {
    double a = std::log(1e-8), b = std::log(1e4);
    for (int step = 0; step < 60; ++step) {
      double m = 0.5 * (a + b);
      (total_inflow(m) < s_tot ? a : b) = m;
    }
    t.params.z = std::exp(0.5 * (a + b));
    GravityEval ev = evaluate(ws, io, t.params, 0.0, false);
    for (std::size_t j = 0; j < t.params.lambda.size(); ++j) {
      int l = t.params.cell[j] % io.n();
      if (ev.F[l] > 0 && ws.sector_size[l] > 0)
        t.params.lambda[j] =
            std::min(std::max(t.params.lambda[j] * ws.sector_size[l] / ev.F[l], 1e-6), 1e3);
    }
  }

  GravityEval at_truth = evaluate(ws, io, t.params, 0.0, false);
  t.target_links = at_truth.sum_p;
  for (double v : at_truth.violation) t.max_violation = std::max(t.max_violation, v);
  return t;
}

// Square IO table with exactly n_positive positive cells: the full diagonal
// (every sector buys from itself) plus random off-diagonal cells, values
// log-uniform over three decades.
inline IOTable synth_io(int n_sectors, int n_positive, std::uint64_t seed) {
  const int total = n_sectors * n_sectors;
  if (n_positive < n_sectors || n_positive > total)
    fail("BadArgument", "synth_io: need n_sectors <= n_positive <= n_sectors^2");
  Rng rng = Rng(seed).key(0x73696f00ull);
  std::vector<char> on(total, 0);
  for (int k = 0; k < n_sectors; ++k) on[k * n_sectors + k] = 1;
  int placed = n_sectors;
  while (placed < n_positive) {
    const int cell = static_cast<int>(rng.uniform_u64(total));
    if (!on[cell]) {
      on[cell] = 1;
      ++placed;
    }
  }
  std::vector<double> flows(total, 0.0);
  for (int c = 0; c < total; ++c)
    if (on[c]) flows[c] = std::pow(10.0, rng.uniform(0.0, 3.0));
  std::vector<std::string> ids;
  for (int k = 0; k < n_sectors; ++k) ids.push_back("S" + std::to_string(k));
  return IOTable::from_flows(std::move(ids), std::move(flows));
}

// Size-bin table with `decades` decade-wide bins per sector starting at
// scale 1.0 and counts decaying by 10^-tail per decade. Sector totals share
// firms_target with mild random variation.
inline FirmSizeBinTable synth_bins(int n_sectors, int decades, double firms_target,
                                   double tail, std::uint64_t seed) {
  if (n_sectors < 1 || decades < 1) fail("BadArgument", "synth_bins: bad shape");
  Rng rng = Rng(seed).key(0x7362696eull);
  std::vector<double> share(n_sectors);
  double total = 0;
  for (int k = 0; k < n_sectors; ++k) {
    share[k] = rng.uniform(0.5, 1.5);
    total += share[k];
  }
  double norm = 0;
  for (int b = 0; b < decades; ++b) norm += std::pow(10.0, -tail * b);

  FirmSizeBinTable table;
  for (int k = 0; k < n_sectors; ++k) {
    const double sector_firms = firms_target * share[k] / total;
    for (int b = 0; b < decades; ++b) {
      FirmSizeBin bin;
      bin.sector = k;
      bin.lo = std::pow(10.0, static_cast<double>(b));
      bin.hi = std::pow(10.0, static_cast<double>(b + 1));
      bin.count = static_cast<std::uint64_t>(
          std::llround(sector_firms * std::pow(10.0, -tail * b) / norm));
      if (b == 0 && bin.count == 0) bin.count = 1;  // keep every sector populated
      table.bins.push_back(bin);
    }
  }
  return table;
}

// Desk-scale stand-in for the production inputs: 24 sectors, 173 positive
// flows, nine decade bins per sector, about firms_target firms at full
// retention.
inline SyntheticEconomy us_shaped_economy(double firms_target, std::uint64_t seed) {
  SyntheticEconomy eco;
  eco.io = synth_io(24, 173, seed);
  eco.bins = synth_bins(24, 9, firms_target, 0.8, seed);
  return eco;
}

// Fixed toy economy: three sectors, every flow positive, three bins per
// sector, a few hundred firms at full retention. The flows are deliberately
// even (row shares near 1/3) and the size spread narrow (2.2x): the sector
// identities pin the expected link count near n/⟨row share⟩, and on the
// resulting sparse support the default weighting bands stay comfortably
// feasible only when buyers and sellers are of comparable size.
inline SyntheticEconomy toy_economy() {
  SyntheticEconomy eco;
  eco.io = IOTable::from_flows({"AGR", "MFG", "SRV"},
                               {40.0, 30.0, 30.0,  //
                                30.0, 40.0, 30.0,  //
                                30.0, 30.0, 40.0});
  auto add = [&](int sector, double lo, double hi, std::uint64_t count) {
    FirmSizeBin b;
    b.sector = sector;
    b.lo = lo;
    b.hi = hi;
    b.count = count;
    eco.bins.bins.push_back(b);
  };
  for (int k = 0; k < 3; ++k) {
    add(k, 1.0, 1.3, 40);
    add(k, 1.3, 1.7, 24);
    add(k, 1.7, 2.2, 8);
  }
  return eco;
}

// Clustered factory geography for a firm population: every firm gets a home
// location in a continental box and 1..max_per_firm factories scattered a
// few degrees around it. Firm ids are positional (0..n-1), matching the
// ids under which populations and graphs are persisted.
inline FactoryTable synth_factories(std::size_t n_firms, std::size_t max_per_firm,
                                    std::uint64_t seed) {
  if (max_per_firm < 1) fail("BadArgument", "synth_factories: max_per_firm must be >= 1");
  constexpr double kPi = 3.14159265358979323846;
  Rng rng = Rng(seed).key(0x7366616355ull);
  FactoryTable table;
  std::uint64_t next_id = 1;
  for (std::size_t i = 0; i < n_firms; ++i) {
    const double home_lat = rng.uniform(32.0, 48.0);
    const double home_lon = rng.uniform(-118.0, -72.0);
    const std::size_t k = 1 + rng.uniform_u64(max_per_firm);
    for (std::size_t a = 0; a < k; ++a) {
      Factory f;
      f.firm_id = i;
      f.factory_id = next_id++;
      f.lat = (home_lat + rng.uniform(-3.0, 3.0)) * kPi / 180.0;
      f.lon = (home_lon + rng.uniform(-3.0, 3.0)) * kPi / 180.0;
      table.rows.push_back(f);
    }
  }
  return table;
}

}  // namespace netrecon
