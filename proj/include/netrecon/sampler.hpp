#pragma once

// Bernoulli backbone sampler. Firms are grouped into per-sector log-size bins
// and every admissible sector block (S_kl > 0) is split into bin-pair blocks.
// Within a block the sampler skips through candidate pairs geometrically at
// the block's probability ceiling and accepts each candidate at its exact
// probability, so realized edges follow Bernoulli(p_ij) precisely while the
// expected work stays proportional to the number of candidates.
//
// Every block draws from its own RNG stream keyed by (seed, k, l, bin_i,
// bin_j); block results are concatenated in fixed order and sorted, so a draw
// is bit-identical for any thread count.

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

namespace netrecon {

struct SampleConfig {
  int bins = 16;  // log-size bins per sector for the skipping blocks
  int threads = 1;
};

// Per-sector log-size grid. The layout is fixed at n_sectors * bins cells
// (empty cells allowed) so cell coordinates, and therefore RNG streams, do
// not depend on which cells happen to be occupied.
struct SamplerGrid {
  int n_sectors = 0;
  int bins = 0;
  std::vector<std::vector<std::uint32_t>> members;  // sector * bins + bin
  std::vector<double> max_size;                     // ceiling per cell

  static SamplerGrid build(const FirmPopulation& pop, int bins) {
    if (bins < 1) fail("BadArgument", "sampler: bins must be >= 1");
    SamplerGrid grid;
    grid.n_sectors = pop.n_sectors;
    grid.bins = bins;
    grid.members.assign(static_cast<std::size_t>(pop.n_sectors) * bins, {});
    grid.max_size.assign(grid.members.size(), 0.0);

    std::vector<double> lo(pop.n_sectors, 0.0), hi(pop.n_sectors, 0.0);
    std::vector<bool> seen(pop.n_sectors, false);
    for (std::size_t i = 0; i < pop.n(); ++i) {
      double lm = std::log(pop.size[i]);
      int k = pop.sector[i];
      if (!seen[k]) {
        lo[k] = hi[k] = lm;
        seen[k] = true;
      } else {
        lo[k] = std::min(lo[k], lm);
        hi[k] = std::max(hi[k], lm);
      }
    }
    for (std::size_t i = 0; i < pop.n(); ++i) {
      int k = pop.sector[i];
      double width = (hi[k] - lo[k]) / bins;
      int b = width > 0 ? std::min(bins - 1,
                                   static_cast<int>((std::log(pop.size[i]) - lo[k]) / width))
                        : 0;
      std::size_t cell = static_cast<std::size_t>(k) * bins + b;
      grid.members[cell].push_back(static_cast<std::uint32_t>(i));
      grid.max_size[cell] = std::max(grid.max_size[cell], pop.size[i]);
    }
    return grid;
  }
};

inline SparseDigraph draw_backbone(const FirmPopulation& pop, const IOTable& io,
                                   const GravityParams& par, std::uint64_t seed,
                                   const SampleConfig& cfg = {}) {
  SamplerGrid grid = SamplerGrid::build(pop, cfg.bins);
  const int S = io.n(), B = cfg.bins;

  struct Block {
    std::int32_t k, l, a, b;
    std::size_t lam;
  };
  std::vector<Block> blocks;
  for (std::size_t j = 0; j < par.lambda.size(); ++j) {
    int k = par.cell[j] / S, l = par.cell[j] % S;
    for (int a = 0; a < B; ++a) {
      if (grid.members[static_cast<std::size_t>(k) * B + a].empty()) continue;
      for (int b = 0; b < B; ++b) {
        if (grid.members[static_cast<std::size_t>(l) * B + b].empty()) continue;
        blocks.push_back({k, l, a, b, j});
      }
    }
  }

  Rng root = Rng(seed).key(0x65646765ull);
  std::vector<std::vector<DirectedEdge>> buf(blocks.size());
  parallel_for(blocks.size(), cfg.threads, [&](std::size_t t) {
    const Block& blk = blocks[t];
    const auto& rows = grid.members[static_cast<std::size_t>(blk.k) * B + blk.a];
    const auto& cols = grid.members[static_cast<std::size_t>(blk.l) * B + blk.b];
    double C = par.z * par.lambda[blk.lam] * std::pow(io.s(blk.k, blk.l), par.kappa);
    double ceiling = grid.max_size[static_cast<std::size_t>(blk.k) * B + blk.a] *
                     grid.max_size[static_cast<std::size_t>(blk.l) * B + blk.b];
    double p_max = link_probability(C * std::pow(ceiling, par.alpha));
    if (!(p_max > 0)) return;

    Rng rng = root.key2(static_cast<std::uint64_t>(blk.k), static_cast<std::uint64_t>(blk.l))
                  .key2(static_cast<std::uint64_t>(blk.a), static_cast<std::uint64_t>(blk.b));
    const std::uint64_t total =
        static_cast<std::uint64_t>(rows.size()) * static_cast<std::uint64_t>(cols.size());
    std::uint64_t pos = rng.geometric_skips(p_max);
    while (pos < total) {
      std::uint32_t i = rows[pos / cols.size()];
      std::uint32_t j = cols[pos % cols.size()];
      if (i != j) {
        double p = link_probability(C * std::pow(pop.size[i] * pop.size[j], par.alpha));
        if (rng.next_double() * p_max < p) buf[t].push_back({i, j, EdgeTag::sampled});
      }
      pos += 1 + rng.geometric_skips(p_max);
    }
  });

  SparseDigraph g;
  g.n_sectors = pop.n_sectors;
  g.firm_id.resize(pop.n());
  for (std::size_t i = 0; i < pop.n(); ++i) g.firm_id[i] = i;
  g.sector.assign(pop.sector.begin(), pop.sector.end());
  g.size = pop.size;
  std::size_t m = 0;
  for (const auto& v : buf) m += v.size();
  g.edges.reserve(m);
  for (const auto& v : buf) g.edges.insert(g.edges.end(), v.begin(), v.end());
  g.sort_edges();
  return g;
}

struct PruneResult {
  SparseDigraph graph;
  std::size_t removed = 0;
};

// Drops firms with neither an incoming nor an outgoing edge. The index remap
// is monotone, so edge order stays canonical.
inline PruneResult prune_isolates(const SparseDigraph& g) {
  std::vector<char> keep(g.n(), 0);
  for (const auto& e : g.edges) {
    keep[e.src] = 1;
    keep[e.dst] = 1;
  }
  PruneResult out;
  std::vector<std::uint32_t> remap(g.n(), 0);
  SparseDigraph& h = out.graph;
  h.n_sectors = g.n_sectors;
  for (std::size_t i = 0; i < g.n(); ++i) {
    if (!keep[i]) continue;
    remap[i] = static_cast<std::uint32_t>(h.firm_id.size());
    h.firm_id.push_back(g.firm_id[i]);
    h.sector.push_back(g.sector[i]);
    h.size.push_back(g.size[i]);
  }
  out.removed = g.n() - h.n();
  h.edges.reserve(g.m());
  for (const auto& e : g.edges) h.edges.push_back({remap[e.src], remap[e.dst], e.tag});
  return out;
}

// Exact first and second moments of the Bernoulli ensemble: expected edge
// count, its variance, and per-firm expected out-degrees and variances.
// O(N^2); intended for diagnostics at fixture scale.
struct EnsembleStats {
  double mu_E = 0;
  double sigma2_E = 0;
  std::vector<double> mu;      // expected out-degree per firm
  std::vector<double> sigma2;  // out-degree variance per firm
};

inline EnsembleStats ensemble_stats(const FirmPopulation& pop, const IOTable& io,
                                    const GravityParams& par, int threads = 1) {
  const std::size_t n = pop.n();
  const int S = io.n();
  EnsembleStats st;
  st.mu.assign(n, 0.0);
  st.sigma2.assign(n, 0.0);

  std::vector<double> C(static_cast<std::size_t>(S) * S, 0.0);
  for (std::size_t j = 0; j < par.lambda.size(); ++j) {
    int k = par.cell[j] / S, l = par.cell[j] % S;
    C[par.cell[j]] = par.z * par.lambda[j] * std::pow(io.s(k, l), par.kappa);
  }
  std::vector<double> pw(n);
  for (std::size_t i = 0; i < n; ++i) pw[i] = std::pow(pop.size[i], par.alpha);

  parallel_for(n, threads, [&](std::size_t i) {
    const double* row = &C[static_cast<std::size_t>(pop.sector[i]) * S];
    double m = 0, v = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double c = row[pop.sector[j]];
      if (c <= 0) continue;
      double p = link_probability(c * pw[i] * pw[j]);
      m += p;
      v += p - p * p;
    }
    st.mu[i] = m;
    st.sigma2[i] = v;
  });
  for (std::size_t i = 0; i < n; ++i) {
    st.mu_E += st.mu[i];
    st.sigma2_E += st.sigma2[i];
  }
  return st;
}

}  // namespace netrecon
