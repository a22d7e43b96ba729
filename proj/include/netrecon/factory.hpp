#pragma once

// Geographic factory-level extension. A weighted firm network is expanded
// into a factory network: every firm-level edge is decomposed into factory
// edges whose weights aggregate back to the firm weight exactly. Allocation
// is distance-driven through an exponential kernel and runs in two passes:
// first every factory draws once (so no factory of an out-connected firm is
// left isolated), then the remaining firm links are placed by drawing the
// source factory from the firm's prominence vector. Firm self-loop weights
// stay at firm level: intra-firm factory edges are never created.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "netrecon/common.hpp"
#include "netrecon/csv.hpp"
#include "netrecon/rng.hpp"
#include "netrecon/weights.hpp"

namespace netrecon {

constexpr double kEarthRadiusKm = 6371.0;

// Great-circle distance between two (lat, lon) points given in radians.
inline double haversine_km(double lat_a, double lon_a, double lat_b, double lon_b) {
  const double sp = std::sin(0.5 * (lat_b - lat_a));
  const double sl = std::sin(0.5 * (lon_b - lon_a));
  const double h = sp * sp + std::cos(lat_a) * std::cos(lat_b) * sl * sl;
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

// Exponentially decaying distance kernel; tau is the decay scale in km.
inline double distance_kernel(double d_km, double tau_km) {
  return std::exp(-d_km / tau_km);
}

struct Factory {
  std::uint64_t firm_id = 0;
  std::uint64_t factory_id = 0;
  double lat = 0;  // radians
  double lon = 0;  // radians
};

struct FactoryTable {
  std::vector<Factory> rows;  // sorted by (firm_id, factory_id)
};

// factories.csv: firm_id,factory_id,lat_deg,lon_deg. Coordinates are degrees
// on disk and radians in memory.
inline FactoryTable load_factories(const std::string& path) {
  const CsvFile csv = read_csv(path);
  if (csv.rows.empty()) fail("BadHeader", path + ": empty factory table");
  const auto& hdr = csv.rows[0];
  if (hdr.size() != 4 || hdr[0] != "firm_id" || hdr[1] != "factory_id" ||
      hdr[2] != "lat_deg" || hdr[3] != "lon_deg")
    fail("BadHeader", path + ": expected firm_id,factory_id,lat_deg,lon_deg");
  constexpr double kDegToRad = 3.14159265358979323846 / 180.0;
  FactoryTable table;
  for (std::size_t r = 1; r < csv.rows.size(); ++r) {
    const auto& row = csv.rows[r];
    if (row.size() != 4) fail("BadRow", path + ": row " + std::to_string(r) + " needs 4 fields");
    Factory f;
    f.firm_id = parse_u64(row[0], path + " firm_id");
    f.factory_id = parse_u64(row[1], path + " factory_id");
    const double lat_deg = parse_double(row[2], path + " lat_deg");
    const double lon_deg = parse_double(row[3], path + " lon_deg");
    if (std::abs(lat_deg) > 90.0)
      fail("BadRow", path + ": row " + std::to_string(r) + " latitude out of [-90, 90]");
    if (std::abs(lon_deg) > 180.0)
      fail("BadRow", path + ": row " + std::to_string(r) + " longitude out of [-180, 180]");
    f.lat = lat_deg * kDegToRad;
    f.lon = lon_deg * kDegToRad;
    table.rows.push_back(f);
  }
  std::sort(table.rows.begin(), table.rows.end(), [](const Factory& a, const Factory& b) {
    return a.firm_id != b.firm_id ? a.firm_id < b.firm_id : a.factory_id < b.factory_id;
  });
  for (std::size_t i = 1; i < table.rows.size(); ++i)
    if (table.rows[i].firm_id == table.rows[i - 1].firm_id &&
        table.rows[i].factory_id == table.rows[i - 1].factory_id)
      fail("BadRow", path + ": duplicate factory " + std::to_string(table.rows[i].factory_id) +
                         " for firm " + std::to_string(table.rows[i].firm_id));
  return table;
}

inline void save_factories(const FactoryTable& table, const std::string& path,
                           const std::vector<std::string>& comments = {}) {
  constexpr double kRadToDeg = 180.0 / 3.14159265358979323846;
  CsvWriter w(path);
  for (const auto& c : comments) w.comment(c);
  w.row({"firm_id", "factory_id", "lat_deg", "lon_deg"});
  for (const Factory& f : table.rows)
    w.row({std::to_string(f.firm_id), std::to_string(f.factory_id),
           format_double(f.lat * kRadToDeg), format_double(f.lon * kRadToDeg)});
  w.close();
}

// Prominence: within-firm probability of each factory, proportional to its
// summed kernel affinity to every other firm's factories. Aligned with
// table.rows; each firm's block sums to 1.
inline std::vector<double> prominence(const FactoryTable& table, double tau_km,
                                      int threads = 1) {
  if (tau_km <= 0) fail("BadArgument", "tau must be positive");
  const std::size_t F = table.rows.size();
  std::size_t firms = 0;
  for (std::size_t i = 0; i < F; ++i)
    if (i == 0 || table.rows[i].firm_id != table.rows[i - 1].firm_id) ++firms;
  if (firms < 2) fail("BadArgument", "prominence needs at least two firms");

  std::vector<double> L(F, 0.0);
  parallel_for(F, threads, [&](std::size_t a) {
    const Factory& fa = table.rows[a];
    double acc = 0;
    for (std::size_t b = 0; b < F; ++b) {
      if (table.rows[b].firm_id == fa.firm_id) continue;
      acc += distance_kernel(
          haversine_km(fa.lat, fa.lon, table.rows[b].lat, table.rows[b].lon), tau_km);
    }
    L[a] = acc;
  });

  std::size_t lo = 0;
  while (lo < F) {
    std::size_t hi = lo;
    while (hi < F && table.rows[hi].firm_id == table.rows[lo].firm_id) ++hi;
    double total = 0;
    for (std::size_t a = lo; a < hi; ++a) total += L[a];
    if (total <= 0)
      fail("IsolatedGeometry",
           "firm " + std::to_string(table.rows[lo].firm_id) + " has zero total affinity");
    for (std::size_t a = lo; a < hi; ++a) L[a] /= total;
    lo = hi;
  }
  return L;
}

struct FactoryEdge {
  std::size_t src_factory = 0;  // indices into FactoryGraph::factories
  std::size_t dst_factory = 0;
  std::uint32_t src_firm = 0;  // node indices in the firm graph
  std::uint32_t dst_firm = 0;
  double weight = 0;
  std::size_t firm_edge = 0;  // index of the decomposed edge in graph.edges
};

struct FactoryGraph {
  std::vector<Factory> factories;        // grouped by firm node, stable order
  std::vector<std::size_t> firm_offset;  // factories of node i: [off[i], off[i+1])
  std::vector<double> psi;               // prominence, aligned with factories
  std::vector<FactoryEdge> edges;
  std::vector<double> self_weight;  // firm-level w_ii, kept at firm level
  double tau_km = 0;
  std::uint64_t seed = 0;
};

// Decompose a weighted firm network into factory edges. Every firm of the
// network must own at least one factory. Factories of firms absent from the
// network are ignored (the population sampler may have dropped their firms).
inline FactoryGraph allocate_factories(const WeightedNetwork& net, const FactoryTable& table,
                                       double tau_km, std::uint64_t seed, int threads = 1) {
  if (tau_km <= 0) fail("BadArgument", "tau must be positive");
  const SparseDigraph& g = net.graph;
  const std::size_t N = g.n();
  if (N == 0) fail("BadArgument", "empty network");
  if (net.weight.size() != g.m()) fail("BadArgument", "weight vector does not match edges");

  std::map<std::uint64_t, std::uint32_t> node_of;
  for (std::size_t i = 0; i < N; ++i) node_of[g.firm_id[i]] = static_cast<std::uint32_t>(i);

  FactoryGraph out;
  out.tau_km = tau_km;
  out.seed = seed;
  out.self_weight.assign(N, 0.0);

  // Group factories by firm node; table order is (firm_id, factory_id), so
  // blocks stay sorted by factory id.
  std::vector<std::vector<Factory>> owned(N);
  for (const Factory& f : table.rows) {
    auto it = node_of.find(f.firm_id);
    if (it != node_of.end()) owned[it->second].push_back(f);
  }
  out.firm_offset.assign(N + 1, 0);
  for (std::size_t i = 0; i < N; ++i) {
    if (owned[i].empty())
      fail("BadArgument", "firm " + std::to_string(g.firm_id[i]) + " has no factories");
    out.firm_offset[i + 1] = out.firm_offset[i] + owned[i].size();
    out.factories.insert(out.factories.end(), owned[i].begin(), owned[i].end());
  }
  const std::size_t F = out.factories.size();

  // Prominence over the grouped layout (kernel affinity to other firms).
  out.psi.assign(F, 1.0);
  if (N >= 2) {
    parallel_for(F, threads, [&](std::size_t a) {
      const Factory& fa = out.factories[a];
      double acc = 0;
      for (std::size_t b = 0; b < F; ++b) {
        if (out.factories[b].firm_id == fa.firm_id) continue;
        acc += distance_kernel(
            haversine_km(fa.lat, fa.lon, out.factories[b].lat, out.factories[b].lon), tau_km);
      }
      out.psi[a] = acc;
    });
  }
  for (std::size_t i = 0; i < N; ++i) {
    double total = 0;
    for (std::size_t a = out.firm_offset[i]; a < out.firm_offset[i + 1]; ++a)
      total += out.psi[a];
    if (total <= 0)
      fail("IsolatedGeometry", "firm " + std::to_string(g.firm_id[i]) + " has zero total affinity");
    for (std::size_t a = out.firm_offset[i]; a < out.firm_offset[i + 1]; ++a)
      out.psi[a] /= total;
  }

  // Per-firm outgoing links (non-self). Each firm edge is one capacity slot;
  // live[i] lists the still-unassigned targets of firm i.
  struct Link {
    std::uint32_t dst;
    double weight;
    std::size_t edge;
  };
  std::vector<std::vector<Link>> live(N);
  for (std::size_t e = 0; e < g.m(); ++e) {
    const auto& ed = g.edges[e];
    if (ed.src == ed.dst) {
      out.self_weight[ed.src] += net.weight[e];
      continue;
    }
    live[ed.src].push_back({ed.dst, net.weight[e], e});
  }

  Rng rng = Rng(seed).key(0x666163746full);

  // Draw a destination factory for source factory a over all live targets,
  // weighted by the distance kernel (the lazily materialized Q row).
  std::vector<double> cum;
  auto draw_destination = [&](std::size_t a, const std::vector<Link>& targets,
                              std::size_t& link_ix, std::size_t& b_ix) {
    const Factory& fa = out.factories[a];
    cum.clear();
    double total = 0;
    for (const Link& t : targets)
      for (std::size_t b = out.firm_offset[t.dst]; b < out.firm_offset[t.dst + 1]; ++b) {
        total += distance_kernel(
            haversine_km(fa.lat, fa.lon, out.factories[b].lat, out.factories[b].lon), tau_km);
        cum.push_back(total);
      }
    if (!(total > 0)) fail("IsolatedGeometry", "empty allocation row");
    const double u = rng.next_double() * total;
    std::size_t pick = std::lower_bound(cum.begin(), cum.end(), u) - cum.begin();
    if (pick >= cum.size()) pick = cum.size() - 1;
    std::size_t seen = 0;
    for (std::size_t ti = 0; ti < targets.size(); ++ti) {
      const std::size_t kt = out.firm_offset[targets[ti].dst + 1] - out.firm_offset[targets[ti].dst];
      if (pick < seen + kt) {
        link_ix = ti;
        b_ix = out.firm_offset[targets[ti].dst] + (pick - seen);
        return;
      }
      seen += kt;
    }
    fail("Internal", "allocation draw out of range");
  };

  // Step 1: one pass over each firm's factories, ascending ids. With enough
  // links each draw consumes one; with fewer links than factories the draws
  // share links and the weights split evenly across the sharing edges.
  for (std::uint32_t i = 0; i < N; ++i) {
    if (live[i].empty()) continue;
    const std::size_t k_i = out.firm_offset[i + 1] - out.firm_offset[i];
    if (live[i].size() >= k_i) {
      for (std::size_t a = out.firm_offset[i]; a < out.firm_offset[i + 1]; ++a) {
        std::size_t li = 0, b = 0;
        draw_destination(a, live[i], li, b);
        const Link lk = live[i][li];
        out.edges.push_back({a, b, i, lk.dst, lk.weight, lk.edge});
        live[i].erase(live[i].begin() + li);  // capacity exhausted: Q drops it
      }
    } else {
      std::vector<std::size_t> draws_of(live[i].size(), 0);
      std::vector<std::pair<std::size_t, std::size_t>> picks;  // (factory, link)
      for (std::size_t a = out.firm_offset[i]; a < out.firm_offset[i + 1]; ++a) {
        std::size_t li = 0, b = 0;
        draw_destination(a, live[i], li, b);
        picks.emplace_back(b, li);
        ++draws_of[li];
        out.edges.push_back({a, b, i, live[i][li].dst, 0.0, live[i][li].edge});
      }
      // Split each drawn link's weight evenly across its sharing edges.
      const std::size_t base = out.edges.size() - picks.size();
      for (std::size_t p = 0; p < picks.size(); ++p)
        out.edges[base + p].weight = live[i][picks[p].second].weight /
                                     static_cast<double>(draws_of[picks[p].second]);
      std::vector<Link> rest;
      for (std::size_t li = 0; li < live[i].size(); ++li)
        if (draws_of[li] == 0) rest.push_back(live[i][li]);
      live[i] = std::move(rest);
    }
  }

  // Step 2: remaining links by prominence-drawn source, kernel-drawn target.
  for (std::uint32_t i = 0; i < N; ++i) {
    while (!live[i].empty()) {
      const double u = rng.next_double();
      double acc = 0;
      std::size_t a = out.firm_offset[i];
      for (std::size_t c = out.firm_offset[i]; c < out.firm_offset[i + 1]; ++c) {
        acc += out.psi[c];
        a = c;
        if (u < acc) break;
      }
      std::size_t li = 0, b = 0;
      draw_destination(a, live[i], li, b);
      const Link lk = live[i][li];
      out.edges.push_back({a, b, i, lk.dst, lk.weight, lk.edge});
      live[i].erase(live[i].begin() + li);
    }
  }

  std::sort(out.edges.begin(), out.edges.end(), [](const FactoryEdge& x, const FactoryEdge& y) {
    if (x.src_factory != y.src_factory) return x.src_factory < y.src_factory;
    if (x.dst_factory != y.dst_factory) return x.dst_factory < y.dst_factory;
    return x.firm_edge < y.firm_edge;
  });

  // Internal audit: every firm edge's decomposition must aggregate back to
  // its weight, and no intra-firm or unsupported edge may exist.
  std::vector<double> agg(g.m(), 0.0);
  for (const FactoryEdge& e : out.edges) {
    if (e.src_firm == e.dst_firm) fail("CapacityMismatch", "intra-firm factory edge");
    const auto& fe = g.edges[e.firm_edge];
    if (fe.src != e.src_firm || fe.dst != e.dst_firm)
      fail("CapacityMismatch", "factory edge references the wrong firm edge");
    agg[e.firm_edge] += e.weight;
  }
  for (std::size_t e = 0; e < g.m(); ++e) {
    if (g.edges[e].src == g.edges[e].dst) continue;
    if (std::abs(agg[e] - net.weight[e]) > 1e-12)
      fail("CapacityMismatch", "firm edge " + std::to_string(e) + " aggregates to " +
                                   format_double(agg[e]) + " instead of " +
                                   format_double(net.weight[e]));
  }
  return out;
}

// factory_edges.csv: src_factory,dst_factory,src_firm,dst_firm,weight, using
// the original factory and firm identifiers.
inline void save_factory_edges(const FactoryGraph& fg, const SparseDigraph& g,
                               const std::string& path,
                               const std::vector<std::string>& comments = {}) {
  CsvWriter wr(path);
  for (const auto& c : comments) wr.comment(c);
  wr.row({"src_factory", "dst_factory", "src_firm", "dst_firm", "weight"});
  for (const FactoryEdge& e : fg.edges)
    wr.row({std::to_string(fg.factories[e.src_factory].factory_id),
            std::to_string(fg.factories[e.dst_factory].factory_id),
            std::to_string(g.firm_id[e.src_firm]), std::to_string(g.firm_id[e.dst_firm]),
            format_double(e.weight)});
  wr.close();
}

}  // namespace netrecon
