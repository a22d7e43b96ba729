#pragma once

// Deterministic synthetic fixtures shared across the test suite.

#include <cmath>
#include <vector>

#include "netrecon/firms.hpp"
#include "netrecon/gravity.hpp"
#include "netrecon/gravity_fit.hpp"
#include "netrecon/io_table.hpp"
#include "netrecon/rng.hpp"
#include "netrecon/synth.hpp"

namespace fixtures {

// Random all-positive flow table.
inline netrecon::IOTable random_io(int n_sectors, std::uint64_t seed) {
  netrecon::Rng rng = netrecon::Rng(seed).key(0x696f);
  std::vector<std::string> ids;
  for (int k = 0; k < n_sectors; ++k) ids.push_back("S" + std::to_string(k));
  std::vector<double> flows(static_cast<std::size_t>(n_sectors) * n_sectors);
  for (auto& f : flows) f = std::exp(rng.uniform(-1.5, 1.5));
  return netrecon::IOTable::from_flows(ids, flows);
}

// Population with log-uniform sizes spread over `decades` orders of magnitude.
inline netrecon::FirmPopulation random_population(std::size_t n, int n_sectors, std::uint64_t seed,
                                                  double decades = 3.0) {
  netrecon::Rng rng = netrecon::Rng(seed).key(0x706f70);
  netrecon::FirmPopulation pop;
  pop.n_sectors = n_sectors;
  for (std::size_t i = 0; i < n; ++i) {
    pop.sector.push_back(static_cast<int>(rng.uniform_u64(n_sectors)));
    pop.size.push_back(std::pow(10.0, rng.uniform(-decades, 0.0)));
  }
  netrecon::normalize_sizes(pop.size);
  return pop;
}

// Random interior model parameters for gradient checks.
inline netrecon::GravityParams random_params(const netrecon::IOTable& io, std::uint64_t seed) {
  netrecon::Rng rng = netrecon::Rng(seed).key(0x706172);
  netrecon::GravityParams p = netrecon::GravityParams::init(io);
  p.z = std::exp(rng.uniform(-2.0, 2.0));
  p.alpha = rng.uniform(0.15, 0.85);
  p.kappa = rng.uniform(0.1, 0.9);
  for (double& l : p.lambda) l = std::exp(rng.uniform(-1.0, 1.0));
  return p;
}

// Ground-truth instance for parameter recovery. The truth is made
// self-consistent by construction: z is bisected so total expected inflow
// matches total sector size, then the lambda columns are raked until every
// sector inflow equals its sector size, so all violations vanish at the truth
// and tight bands around them identify (alpha, kappa). Refits pin lambda at
// the raked values (the full problem is under-determined; see README on
// identifiability).
struct RecoveryFixture {
  netrecon::FirmPopulation pop;
  netrecon::IOTable io;
  netrecon::GravityParams truth;
  netrecon::FitConfig cfg;  // ready for fit(): lambda_fix set, tight band
};

// Shared truth builder: a population and flow table with gravity parameters
// that satisfy every sector identity exactly, plus the implied link target.
inline RecoveryFixture make_consistent(std::size_t n_firms, int n_sectors, double alpha_true,
                                       double kappa_true, std::uint64_t seed) {
  RecoveryFixture fx;
  fx.io = random_io(n_sectors, seed);
  fx.pop = random_population(n_firms, n_sectors, seed + 1, 2.5);
  netrecon::SyntheticTruth truth =
      netrecon::consistent_truth(fx.pop, fx.io, alpha_true, kappa_true, 0);
  fx.truth = truth.params;
  fx.cfg.target_links = truth.target_links;
  fx.cfg.band = std::max(2e-3, truth.max_violation * 1.2);
  fx.cfg.max_outer = 40;
  return fx;
}

inline RecoveryFixture make_recovery(std::size_t n_firms, int n_sectors, double alpha_true,
                                     double kappa_true, std::uint64_t seed) {
  RecoveryFixture fx = make_consistent(n_firms, n_sectors, alpha_true, kappa_true, seed);
  fx.cfg.lambda_fix = fx.truth.lambda;
  return fx;
}

}  // namespace fixtures
