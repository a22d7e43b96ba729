#pragma once

// Sparse directed graph over the firm population. Nodes carry the firm
// metadata needed downstream (original id, sector, size); edges carry a
// provenance tag. Edge order is canonical (src, then dst) after construction.

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "netrecon/common.hpp"
#include "netrecon/csv.hpp"
#include "netrecon/firms.hpp"
#include "netrecon/io_table.hpp"

namespace netrecon {

enum class EdgeTag : std::uint8_t { sampled = 0, closure = 1, selfloop = 2 };

inline const char* edge_tag_name(EdgeTag t) {
  switch (t) {
    case EdgeTag::sampled: return "sampled";
    case EdgeTag::closure: return "closure";
    case EdgeTag::selfloop: return "selfloop";
  }
  return "?";
}

inline EdgeTag edge_tag_from(const std::string& s) {
  if (s == "sampled") return EdgeTag::sampled;
  if (s == "closure") return EdgeTag::closure;
  if (s == "selfloop") return EdgeTag::selfloop;
  fail("BadRow", "unknown edge provenance '" + s + "'");
}

struct DirectedEdge {
  std::uint32_t src = 0;
  std::uint32_t dst = 0;
  EdgeTag tag = EdgeTag::sampled;
};

struct SparseDigraph {
  // Node metadata (parallel arrays).
  std::vector<std::uint64_t> firm_id;
  std::vector<std::int32_t> sector;
  std::vector<double> size;
  int n_sectors = 0;

  std::vector<DirectedEdge> edges;  // canonical (src, dst) order

  std::size_t n() const { return size.size(); }
  std::size_t m() const { return edges.size(); }

  void sort_edges() {
    std::sort(edges.begin(), edges.end(), [](const DirectedEdge& a, const DirectedEdge& b) {
      return a.src != b.src ? a.src < b.src : a.dst < b.dst;
    });
  }

  std::vector<double> sector_sizes() const {
    std::vector<double> s(n_sectors, 0.0);
    for (std::size_t i = 0; i < n(); ++i) s[sector[i]] += size[i];
    return s;
  }

  std::vector<std::uint32_t> out_degree(bool include_self = true) const {
    std::vector<std::uint32_t> d(n(), 0);
    for (const auto& e : edges)
      if (include_self || e.src != e.dst) ++d[e.src];
    return d;
  }
  std::vector<std::uint32_t> in_degree(bool include_self = true) const {
    std::vector<std::uint32_t> d(n(), 0);
    for (const auto& e : edges)
      if (include_self || e.src != e.dst) ++d[e.dst];
    return d;
  }
};

// Row-compressed adjacency over the edge array: offsets[i]..offsets[i+1] index
// edge positions. by_src=false compresses by destination instead.
struct EdgeIndex {
  std::vector<std::size_t> offsets;
  std::vector<std::uint32_t> edge_pos;

  static EdgeIndex build(const SparseDigraph& g, bool by_src) {
    EdgeIndex ix;
    ix.offsets.assign(g.n() + 1, 0);
    for (const auto& e : g.edges) ++ix.offsets[(by_src ? e.src : e.dst) + 1];
    for (std::size_t i = 1; i < ix.offsets.size(); ++i) ix.offsets[i] += ix.offsets[i - 1];
    ix.edge_pos.resize(g.m());
    std::vector<std::size_t> cur(ix.offsets.begin(), ix.offsets.end() - 1);
    for (std::uint32_t pos = 0; pos < g.m(); ++pos) {
      const auto& e = g.edges[pos];
      ix.edge_pos[cur[by_src ? e.src : e.dst]++] = pos;
    }
    return ix;
  }
};

// edges.csv. Backbone stage writes src,dst; the closure stage rewrites the
// file with a provenance column covering all rows.
inline void save_edges(const SparseDigraph& g, const std::string& path, bool with_provenance,
                       const std::string& fingerprint = "") {
  CsvWriter w(path);
  if (!fingerprint.empty()) w.comment(fingerprint);
  if (with_provenance)
    w.row({"src", "dst", "provenance"});
  else
    w.row({"src", "dst"});
  for (const auto& e : g.edges) {
    std::string src = std::to_string(g.firm_id[e.src]);
    std::string dst = std::to_string(g.firm_id[e.dst]);
    if (with_provenance)
      w.row({src, dst, edge_tag_name(e.tag)});
    else
      w.row({src, dst});
  }
  w.close();
}

// nodes.csv: the node set a graph is defined over (post-prune this is a
// subset of the sampled population). id,sector,size with original firm ids.
inline void save_nodes(const SparseDigraph& g, const IOTable& io, const std::string& path,
                       const std::string& fingerprint = "") {
  CsvWriter w(path);
  if (!fingerprint.empty()) w.comment(fingerprint);
  w.row({"id", "sector", "size"});
  for (std::size_t i = 0; i < g.n(); ++i)
    w.row({std::to_string(g.firm_id[i]), io.sectors[g.sector[i]], format_double(g.size[i])});
  w.close();
}

// Loads a graph from nodes.csv + edges.csv; edges reference original firm ids.
inline SparseDigraph load_graph(const std::string& nodes_path, const std::string& edges_path,
                                const IOTable& io) {
  CsvFile nodes = read_csv(nodes_path);
  if (nodes.rows.empty() || nodes.rows[0] != std::vector<std::string>{"id", "sector", "size"})
    fail("BadHeader", nodes_path + ": expected header id,sector,size");
  SparseDigraph g;
  g.n_sectors = io.n();
  std::vector<std::uint64_t> ids;
  for (std::size_t r = 1; r < nodes.rows.size(); ++r) {
    const auto& row = nodes.rows[r];
    if (row.size() != 3) fail("BadRow", nodes_path + ": row " + std::to_string(r));
    int sec = io.sector_index(row[1]);
    if (sec < 0) fail("UnknownSector", nodes_path + ": unknown sector '" + row[1] + "'");
    g.firm_id.push_back(parse_u64(row[0], nodes_path));
    g.sector.push_back(sec);
    g.size.push_back(parse_double(row[2], nodes_path));
  }
  std::map<std::uint64_t, std::uint32_t> pos;
  for (std::uint32_t i = 0; i < g.n(); ++i) {
    if (!pos.emplace(g.firm_id[i], i).second)
      fail("BadRow", nodes_path + ": duplicate firm id " + std::to_string(g.firm_id[i]));
  }
  CsvFile csv = read_csv(edges_path);
  if (csv.rows.empty()) fail("BadHeader", edges_path + ": missing header");
  bool with_prov = csv.rows[0].size() == 3;
  for (std::size_t r = 1; r < csv.rows.size(); ++r) {
    const auto& row = csv.rows[r];
    if (row.size() != (with_prov ? 3u : 2u))
      fail("BadRow", edges_path + ": row " + std::to_string(r) + " has wrong arity");
    auto is = pos.find(parse_u64(row[0], edges_path));
    auto id = pos.find(parse_u64(row[1], edges_path));
    if (is == pos.end() || id == pos.end())
      fail("BadRow", edges_path + ": edge references firm absent from " + nodes_path);
    DirectedEdge e;
    e.src = is->second;
    e.dst = id->second;
    e.tag = with_prov ? edge_tag_from(row[2]) : EdgeTag::sampled;
    g.edges.push_back(e);
  }
  g.sort_edges();
  return g;
}

// Loads edges.csv onto an existing population (firm id -> node position).
inline SparseDigraph load_edges(const std::string& path, const FirmPopulation& pop) {
  CsvFile csv = read_csv(path);
  SparseDigraph g;
  g.n_sectors = pop.n_sectors;
  g.firm_id.resize(pop.n());
  for (std::size_t i = 0; i < pop.n(); ++i) g.firm_id[i] = i;
  g.sector.assign(pop.sector.begin(), pop.sector.end());
  g.size = pop.size;
  if (csv.rows.empty()) fail("BadHeader", path + ": missing header");
  bool with_prov = csv.rows[0].size() == 3;
  if (csv.rows[0] != std::vector<std::string>{"src", "dst"} &&
      csv.rows[0] != std::vector<std::string>{"src", "dst", "provenance"})
    fail("BadHeader", path + ": expected src,dst[,provenance]");
  for (std::size_t r = 1; r < csv.rows.size(); ++r) {
    const auto& row = csv.rows[r];
    if (row.size() != (with_prov ? 3u : 2u))
      fail("BadRow", path + ": row " + std::to_string(r) + " has wrong arity");
    DirectedEdge e;
    std::uint64_t s = parse_u64(row[0], path), d = parse_u64(row[1], path);
    if (s >= pop.n() || d >= pop.n())
      fail("BadRow", path + ": edge references unknown firm id");
    e.src = static_cast<std::uint32_t>(s);
    e.dst = static_cast<std::uint32_t>(d);
    e.tag = with_prov ? edge_tag_from(row[2]) : EdgeTag::sampled;
    g.edges.push_back(e);
  }
  g.sort_edges();
  return g;
}

}  // namespace netrecon
