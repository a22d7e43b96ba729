#pragma once

// Strongly connected components (iterative Tarjan) and the condensation DAG
// with the source/sink bookkeeping the closure step needs.

#include <algorithm>
#include <cstdint>
#include <unordered_set>
#include <vector>

#include "netrecon/digraph.hpp"

namespace netrecon {

// comp[v] for every node; components are numbered 0..count-1 in Tarjan
// completion order (reverse topological order of the condensation).
struct SccResult {
  std::vector<std::int32_t> comp;
  std::int32_t count = 0;
};

inline SccResult tarjan_scc(std::size_t n, const std::vector<DirectedEdge>& edges) {
  // Adjacency as CSR over node out-edges.
  std::vector<std::size_t> off(n + 1, 0);
  for (const auto& e : edges) ++off[e.src + 1];
  for (std::size_t i = 1; i <= n; ++i) off[i] += off[i - 1];
  std::vector<std::uint32_t> adj(edges.size());
  {
    std::vector<std::size_t> cur(off.begin(), off.end() - 1);
    for (const auto& e : edges) adj[cur[e.src]++] = e.dst;
  }

  SccResult res;
  res.comp.assign(n, -1);
  std::vector<std::int32_t> index(n, -1), low(n, 0);
  std::vector<std::uint8_t> on_stack(n, 0);
  std::vector<std::uint32_t> stack;
  // Explicit DFS stack: (node, next out-edge offset).
  std::vector<std::pair<std::uint32_t, std::size_t>> dfs;
  std::int32_t next_index = 0;

  for (std::uint32_t root = 0; root < n; ++root) {
    if (index[root] != -1) continue;
    dfs.emplace_back(root, off[root]);
    index[root] = low[root] = next_index++;
    stack.push_back(root);
    on_stack[root] = 1;
    while (!dfs.empty()) {
      auto& [v, it] = dfs.back();
      if (it < off[v + 1]) {
        std::uint32_t w = adj[it++];
        if (index[w] == -1) {
          index[w] = low[w] = next_index++;
          stack.push_back(w);
          on_stack[w] = 1;
          dfs.emplace_back(w, off[w]);
        } else if (on_stack[w]) {
          low[v] = std::min(low[v], index[w]);
        }
      } else {
        if (low[v] == index[v]) {
          for (;;) {
            std::uint32_t w = stack.back();
            stack.pop_back();
            on_stack[w] = 0;
            res.comp[w] = res.count;
            if (w == v) break;
          }
          ++res.count;
        }
        std::uint32_t child = v;
        dfs.pop_back();
        if (!dfs.empty()) {
          auto& [p, _] = dfs.back();
          low[p] = std::min(low[p], low[child]);
        }
      }
    }
  }
  return res;
}

inline SccResult tarjan_scc(const SparseDigraph& g) { return tarjan_scc(g.n(), g.edges); }

struct Condensation {
  std::int32_t count = 0;
  std::vector<std::int32_t> comp_of;                 // per node
  std::vector<std::vector<std::uint32_t>> members;   // per component, ascending
  std::vector<std::vector<std::int32_t>> dag_adj;    // deduplicated DAG edges
  std::vector<std::int32_t> indeg, outdeg;           // in the DAG
  std::vector<std::int32_t> sources, sinks;          // ascending component id
  std::vector<std::int32_t> topo;                    // topological order
  std::vector<std::int32_t> topo_pos;                // position of each component

  std::int32_t required_arcs() const {  // R = max(#sources, #sinks), 0 if already strong
    if (count <= 1) return 0;
    return static_cast<std::int32_t>(std::max(sources.size(), sinks.size()));
  }
};

inline Condensation condense(const SparseDigraph& g) {
  SccResult scc = tarjan_scc(g);
  Condensation c;
  c.count = scc.count;
  c.comp_of = std::move(scc.comp);
  c.members.resize(c.count);
  for (std::uint32_t v = 0; v < g.n(); ++v) c.members[c.comp_of[v]].push_back(v);
  c.dag_adj.resize(c.count);
  c.indeg.assign(c.count, 0);
  c.outdeg.assign(c.count, 0);
  std::unordered_set<std::uint64_t> seen;
  for (const auto& e : g.edges) {
    std::int32_t a = c.comp_of[e.src], b = c.comp_of[e.dst];
    if (a == b) continue;
    std::uint64_t key = (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b);
    if (!seen.insert(key).second) continue;
    c.dag_adj[a].push_back(b);
    ++c.outdeg[a];
    ++c.indeg[b];
  }
  for (auto& v : c.dag_adj) std::sort(v.begin(), v.end());
  for (std::int32_t i = 0; i < c.count; ++i) {
    if (c.indeg[i] == 0) c.sources.push_back(i);
    if (c.outdeg[i] == 0) c.sinks.push_back(i);
  }
  // Kahn topological order, smallest component id first among ready nodes.
  std::vector<std::int32_t> indeg = c.indeg;
  std::vector<std::int32_t> ready = c.sources;
  std::make_heap(ready.begin(), ready.end(), std::greater<>());
  c.topo.reserve(c.count);
  while (!ready.empty()) {
    std::pop_heap(ready.begin(), ready.end(), std::greater<>());
    std::int32_t a = ready.back();
    ready.pop_back();
    c.topo.push_back(a);
    for (std::int32_t b : c.dag_adj[a])
      if (--indeg[b] == 0) {
        ready.push_back(b);
        std::push_heap(ready.begin(), ready.end(), std::greater<>());
      }
  }
  c.topo_pos.assign(c.count, 0);
  for (std::size_t i = 0; i < c.topo.size(); ++i) c.topo_pos[c.topo[i]] = static_cast<std::int32_t>(i);
  return c;
}

}  // namespace netrecon
