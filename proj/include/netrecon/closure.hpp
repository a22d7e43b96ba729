#pragma once

// Markov regularity for backbone draws. The draw usually splits into many
// strongly connected components; this module condenses them (iterative
// Tarjan), pairs condensation sinks with sources so that one arc per pair
// strongly connects the DAG, sizes the number of firm-level arcs per pair on
// a saturating schedule, thins the candidate pairs, and places the arcs by a
// 0-1 quadratic program that minimizes relative sectoral-inflow distortion.
// Self-loops added afterwards make the chain aperiodic.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "netrecon/common.hpp"
#include "netrecon/digraph.hpp"
#include "netrecon/io_table.hpp"
#include "netrecon/rng.hpp"

namespace netrecon {

struct ClosureHyper {
  double theta = 0.5;    // plateau of the per-pair link fraction, in (0, 1)
  double eta = 0.05;     // saturation speed of the link fraction
  double gamma_bar = 0.2;  // plateau of the candidate fraction
  int n0 = 50;             // half-saturation size of the candidate fraction
  double eta_g = 1.0;      // exponent of the candidate fraction
};

// Fraction of the smaller component that becomes new cross links.
inline double closure_link_fraction(double theta, double eta, double n) {
  return theta * (1.0 - std::exp(-eta * n));
}

// Fraction of the smaller component kept as optimization candidates.
inline double closure_candidate_fraction(double gamma_bar, int n0, double eta_g, double n) {
  return gamma_bar * std::pow(n / (static_cast<double>(n0) + n), eta_g);
}

struct Condensation {
  std::vector<std::int32_t> scc_id;                 // node -> component
  std::vector<std::vector<std::uint32_t>> comp;     // component -> nodes
  std::vector<std::pair<std::int32_t, std::int32_t>> dag_edges;  // unique, loop-free
  std::vector<std::int32_t> sources;                // in-degree 0
  std::vector<std::int32_t> sinks;                  // out-degree 0

  std::size_t n_components() const { return comp.size(); }
  std::size_t r() const {
    return comp.size() <= 1 ? 0 : std::max(sources.size(), sinks.size());
  }
};

// Iterative Tarjan; component ids come out in reverse topological order
// (every component's id is larger than the ids of components it reaches).
inline Condensation tarjan_scc(const SparseDigraph& g) {
  const std::size_t n = g.n();
  EdgeIndex ix = EdgeIndex::build(g, true);

  Condensation cond;
  cond.scc_id.assign(n, -1);
  constexpr std::uint32_t kUnvisited = 0xffffffffu;
  std::vector<std::uint32_t> index(n, kUnvisited), lowlink(n, 0);
  std::vector<char> on_stack(n, 0);
  std::vector<std::uint32_t> stack;
  std::uint32_t next_index = 0;

  struct Frame {
    std::uint32_t v;
    std::size_t edge;
  };
  std::vector<Frame> frames;

  for (std::uint32_t root = 0; root < n; ++root) {
    if (index[root] != kUnvisited) continue;
    frames.push_back({root, ix.offsets[root]});
    index[root] = lowlink[root] = next_index++;
    stack.push_back(root);
    on_stack[root] = 1;
    while (!frames.empty()) {
      Frame& f = frames.back();
      if (f.edge < ix.offsets[f.v + 1]) {
        std::uint32_t w = g.edges[ix.edge_pos[f.edge]].dst;
        ++f.edge;
        if (w == f.v) continue;  // self-loop: irrelevant for SCC structure
        if (index[w] == kUnvisited) {
          index[w] = lowlink[w] = next_index++;
          stack.push_back(w);
          on_stack[w] = 1;
          frames.push_back({w, ix.offsets[w]});
        } else if (on_stack[w]) {
          lowlink[f.v] = std::min(lowlink[f.v], index[w]);
        }
      } else {
        std::uint32_t v = f.v;
        frames.pop_back();
        if (!frames.empty())
          lowlink[frames.back().v] = std::min(lowlink[frames.back().v], lowlink[v]);
        if (lowlink[v] == index[v]) {
          std::int32_t c = static_cast<std::int32_t>(cond.comp.size());
          cond.comp.emplace_back();
          for (;;) {
            std::uint32_t w = stack.back();
            stack.pop_back();
            on_stack[w] = 0;
            cond.scc_id[w] = c;
            cond.comp[c].push_back(w);
            if (w == v) break;
          }
        }
      }
    }
  }

  for (const auto& e : g.edges) {
    std::int32_t a = cond.scc_id[e.src], b = cond.scc_id[e.dst];
    if (a != b) cond.dag_edges.emplace_back(a, b);
  }
  std::sort(cond.dag_edges.begin(), cond.dag_edges.end());
  cond.dag_edges.erase(std::unique(cond.dag_edges.begin(), cond.dag_edges.end()),
                       cond.dag_edges.end());

  std::vector<char> has_in(cond.comp.size(), 0), has_out(cond.comp.size(), 0);
  for (const auto& de : cond.dag_edges) {
    has_out[de.first] = 1;
    has_in[de.second] = 1;
  }
  if (cond.comp.size() > 1)
    for (std::int32_t c = 0; c < static_cast<std::int32_t>(cond.comp.size()); ++c) {
      if (!has_in[c]) cond.sources.push_back(c);
      if (!has_out[c]) cond.sinks.push_back(c);
    }
  return cond;
}

struct ClosurePair {
  std::int32_t a = 0, b = 0;  // arcs go from sink component a to source component b
  std::int64_t n_ab = 0;      // size of the smaller component
  std::int64_t k_ab = 0;      // arcs to add
  std::int64_t l_ab = 0;      // candidate budget
  std::vector<std::pair<std::uint32_t, std::uint32_t>> omega;  // candidate firm pairs
};

struct ClosurePlan {
  std::vector<ClosurePair> pairs;
  std::size_t r = 0;
  std::int64_t k_total() const {
    std::int64_t k = 0;
    for (const auto& p : pairs) k += p.k_ab;
    return k;
  }
  std::size_t omega_total() const {
    std::size_t m = 0;
    for (const auto& p : pairs) m += p.omega.size();
    return m;
  }
};

// Chooses the sink->source pairing and samples candidate firm pairs.
//
// Pairing: walk the sources in component-id order; from each, follow the DAG
// to a sink (preferring unmatched sinks). Chaining each source's sink to the
// next source produces one closed walk through every source; leftover sinks
// attach to the first source. One arc per pair then strongly connects the
// condensation: every component is reachable from some source and reaches
// some sink, and all sources and sinks lie on the walk.
//
// Candidates: pairs (a, b) always have a empty of outgoing edges (a is a
// sink), so the absent cross pairs are the full product V(a) x V(b); an
// L_ab-subset is drawn uniformly without replacement by Floyd's algorithm on
// a stream keyed by (seed, a, b).
inline ClosurePlan build_plan(const SparseDigraph& g, const Condensation& cond,
                              const ClosureHyper& hyper, std::uint64_t seed) {
  if (!(hyper.theta > 0) || !(hyper.theta < 1) || !(hyper.eta > 0) || !(hyper.gamma_bar > 0) ||
      hyper.n0 < 1 || !(hyper.eta_g > 0))
    fail("BadArgument", "closure: hyperparameters out of range");

  ClosurePlan plan;
  plan.r = cond.r();
  if (cond.n_components() <= 1) return plan;

  const std::size_t nc = cond.n_components();
  std::vector<std::size_t> off(nc + 1, 0);
  for (const auto& de : cond.dag_edges) ++off[de.first + 1];
  for (std::size_t c = 1; c <= nc; ++c) off[c] += off[c - 1];
  std::vector<std::int32_t> adj(cond.dag_edges.size());
  {
    std::vector<std::size_t> cur(off.begin(), off.end() - 1);
    for (const auto& de : cond.dag_edges) adj[cur[de.first]++] = de.second;
  }

  std::vector<char> matched(nc, 0);
  // Depth-first walk from a source towards sinks, preferring unmatched ones.
  auto find_sink = [&](std::int32_t from) {
    std::int32_t fallback = -1;
    std::vector<std::int32_t> st = {from};
    std::vector<char> seen(nc, 0);
    seen[from] = 1;
    while (!st.empty()) {
      std::int32_t c = st.back();
      st.pop_back();
      if (off[c + 1] == off[c]) {  // sink
        if (!matched[c]) return c;
        if (fallback < 0) fallback = c;
        continue;
      }
      for (std::size_t e = off[c]; e < off[c + 1]; ++e)
        if (!seen[adj[e]]) {
          seen[adj[e]] = 1;
          st.push_back(adj[e]);
        }
    }
    return fallback;
  };

  std::vector<std::pair<std::int32_t, std::int32_t>> arcs;  // (sink, source)
  std::vector<std::int32_t> chain_sink(cond.sources.size(), -1);
  for (std::size_t s = 0; s < cond.sources.size(); ++s) {
    std::int32_t u = find_sink(cond.sources[s]);
    if (u < 0) fail("Internal", "closure: source without reachable sink in a DAG");
    matched[u] = 1;
    chain_sink[s] = u;
  }
  for (std::size_t s = 0; s < cond.sources.size(); ++s)
    arcs.emplace_back(chain_sink[s], cond.sources[(s + 1) % cond.sources.size()]);
  for (std::int32_t u : cond.sinks)
    if (!matched[u]) arcs.emplace_back(u, cond.sources[0]);
  std::sort(arcs.begin(), arcs.end());
  arcs.erase(std::unique(arcs.begin(), arcs.end()), arcs.end());

  Rng root = Rng(seed).key(0x636c6f73ull);
  for (const auto& [a, b] : arcs) {
    ClosurePair pr;
    pr.a = a;
    pr.b = b;
    const auto& va = cond.comp[a];
    const auto& vb = cond.comp[b];
    pr.n_ab = static_cast<std::int64_t>(std::min(va.size(), vb.size()));
    double n = static_cast<double>(pr.n_ab);
    pr.k_ab = static_cast<std::int64_t>(
        std::ceil(closure_link_fraction(hyper.theta, hyper.eta, n) * n));
    pr.k_ab = std::max<std::int64_t>(pr.k_ab, 1);
    pr.l_ab = std::max(pr.k_ab, static_cast<std::int64_t>(std::ceil(
                                    closure_candidate_fraction(hyper.gamma_bar, hyper.n0,
                                                               hyper.eta_g, n) *
                                    n)));

    const std::uint64_t space = static_cast<std::uint64_t>(va.size()) * vb.size();
    std::uint64_t want = std::min<std::uint64_t>(static_cast<std::uint64_t>(pr.l_ab), space);
    if (want < static_cast<std::uint64_t>(pr.k_ab))
      fail("InsufficientCandidates", "closure: pair (" + std::to_string(a) + "," +
                                         std::to_string(b) + ") has " + std::to_string(space) +
                                         " candidates for k=" + std::to_string(pr.k_ab));
    // Floyd's uniform subset over the product space.
    Rng rng = root.key2(static_cast<std::uint64_t>(a), static_cast<std::uint64_t>(b));
    std::unordered_set<std::uint64_t> seen_pos;
    std::vector<std::uint64_t> chosen;
    chosen.reserve(want);
    for (std::uint64_t t = space - want; t < space; ++t) {
      std::uint64_t rpos = rng.uniform_u64(t + 1);
      std::uint64_t pos = seen_pos.insert(rpos).second ? rpos : t;
      if (pos != rpos) seen_pos.insert(pos);
      chosen.push_back(pos);
    }
    std::sort(chosen.begin(), chosen.end());
    for (std::uint64_t pos : chosen)
      pr.omega.emplace_back(va[pos / vb.size()], vb[pos % vb.size()]);
    plan.pairs.push_back(std::move(pr));
  }
  return plan;
}

// Baseline sectoral inflows of the graph: B_l sums m_i * I_{sector(i) l} over
// edges i -> j with j in sector l; E_l = B_l - s_l.
struct SectorInflowState {
  std::vector<double> baseline;  // B_l
  std::vector<double> error;     // E_l
  std::vector<double> s;         // realized sector sizes on this node set
};

inline SectorInflowState build_inflow_state(const SparseDigraph& g, const IOTable& io) {
  SectorInflowState st;
  st.s = g.sector_sizes();
  st.baseline.assign(io.n(), 0.0);
  for (const auto& e : g.edges) {
    if (e.src == e.dst) continue;
    int k = g.sector[e.src], l = g.sector[e.dst];
    st.baseline[l] += g.size[e.src] * io.i(k, l);
  }
  st.error.resize(io.n());
  for (int l = 0; l < io.n(); ++l) st.error[l] = st.baseline[l] - st.s[l];
  return st;
}

struct ClosureSolution {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  double objective_before = 0;
  double objective_after = 0;
  bool exact = false;  // solved by exhaustive enumeration
};

namespace detail {

// Flattened candidate: sector it perturbs and the inflow it adds there.
struct Candidate {
  std::uint32_t i, j;
  std::int32_t sector;
  double value;
};

struct ClosureProblem {
  std::vector<Candidate> cand;
  std::vector<std::size_t> pair_off;  // candidates of pair p: [off[p], off[p+1])
  std::vector<std::int64_t> k;
  std::vector<double> weight;  // 1 / s_l^2 (0 for empty sectors)
  std::vector<double> err0;    // E_l baseline

  double objective(const std::vector<double>& err) const {
    double f = 0;
    for (std::size_t l = 0; l < err.size(); ++l) f += weight[l] * err[l] * err[l];
    return f;
  }
};

inline ClosureProblem make_problem(const ClosurePlan& plan, const SectorInflowState& state,
                                   const SparseDigraph& g, const IOTable& io) {
  ClosureProblem pb;
  pb.err0 = state.error;
  pb.weight.assign(io.n(), 0.0);
  for (int l = 0; l < io.n(); ++l)
    if (state.s[l] > 0) pb.weight[l] = 1.0 / (state.s[l] * state.s[l]);
  pb.pair_off.push_back(0);
  for (const auto& pr : plan.pairs) {
    if (static_cast<std::int64_t>(pr.omega.size()) < pr.k_ab)
      fail("InsufficientCandidates", "closure: pair has fewer candidates than required links");
    for (const auto& [i, j] : pr.omega) {
      Candidate c;
      c.i = i;
      c.j = j;
      c.sector = g.sector[j];
      c.value = g.size[i] * io.i(g.sector[i], g.sector[j]);
      pb.cand.push_back(c);
    }
    pb.pair_off.push_back(pb.cand.size());
    pb.k.push_back(pr.k_ab);
  }
  return pb;
}

// Exhaustive search over per-pair k-subsets with incremental objective
// updates; feasible only for small candidate totals.
struct ExactSolver {
  const ClosureProblem& pb;
  std::vector<double> err;
  double obj;
  std::vector<char> pick, best_pick;
  double best = 0;
  bool have_best = false;

  explicit ExactSolver(const ClosureProblem& p)
      : pb(p), err(p.err0), obj(p.objective(p.err0)), pick(p.cand.size(), 0),
        best_pick(p.cand.size(), 0) {}

  void toggle(std::size_t c, double sign) {
    const Candidate& cd = pb.cand[c];
    double w = pb.weight[cd.sector];
    double e = err[cd.sector];
    double e2 = e + sign * cd.value;
    obj += w * (e2 * e2 - e * e);
    err[cd.sector] = e2;
  }

  void solve_pair(std::size_t p) {
    if (p == pb.k.size()) {
      if (!have_best || obj < best) {
        best = obj;
        best_pick = pick;
        have_best = true;
      }
      return;
    }
    std::size_t lo = pb.pair_off[p], hi = pb.pair_off[p + 1];
    choose(p, lo, hi, pb.k[p]);
  }

  void choose(std::size_t p, std::size_t next, std::size_t hi, std::int64_t left) {
    if (left == 0) {
      solve_pair(p + 1);
      return;
    }
    if (static_cast<std::int64_t>(hi - next) < left) return;
    // take candidate `next`
    pick[next] = 1;
    toggle(next, +1.0);
    choose(p, next + 1, hi, left - 1);
    toggle(next, -1.0);
    pick[next] = 0;
    // or skip it
    choose(p, next + 1, hi, left);
  }
};

}  // namespace detail

inline ClosureSolution solve_closure(const ClosurePlan& plan, const SectorInflowState& state,
                                     const SparseDigraph& g, const IOTable& io,
                                     std::size_t exact_limit = 25) {
  detail::ClosureProblem pb = detail::make_problem(plan, state, g, io);
  ClosureSolution sol;
  sol.objective_before = pb.objective(pb.err0);
  if (pb.cand.empty()) {
    sol.objective_after = sol.objective_before;
    sol.exact = true;
    return sol;
  }

  std::vector<char> pick(pb.cand.size(), 0);
  if (pb.cand.size() <= exact_limit) {
    detail::ExactSolver ex(pb);
    ex.solve_pair(0);
    pick = ex.best_pick;
    sol.objective_after = ex.best;
    sol.exact = true;
  } else {
    // Greedy fill plus deterministic random restarts. Each start descends by
    // first-improving single swaps, then by exact re-optimization of one and
    // of two pairs at a time under an enumeration budget (pairs couple only
    // through shared sector errors, so two-pair moves capture the dominant
    // interactions); the best local optimum wins and the returned selection
    // admits no improving single swap.
    auto descend = [&](std::vector<char>& pk, std::vector<double>& err) {
      for (int sweep = 0; sweep < 200; ++sweep) {
        bool improved = false;
        for (std::size_t p = 0; p < pb.k.size(); ++p) {
          for (std::size_t cin = pb.pair_off[p]; cin < pb.pair_off[p + 1]; ++cin) {
            if (!pk[cin]) continue;
            for (std::size_t cout = pb.pair_off[p]; cout < pb.pair_off[p + 1]; ++cout) {
              if (pk[cout]) continue;
              const detail::Candidate& a = pb.cand[cin];
              const detail::Candidate& b = pb.cand[cout];
              double d;
              if (a.sector == b.sector) {
                double w = pb.weight[a.sector], e = err[a.sector];
                double e2 = e - a.value + b.value;
                d = w * (e2 * e2 - e * e);
              } else {
                double wa = pb.weight[a.sector], ea = err[a.sector];
                double wb = pb.weight[b.sector], eb = err[b.sector];
                d = wa * ((ea - a.value) * (ea - a.value) - ea * ea) +
                    wb * ((eb + b.value) * (eb + b.value) - eb * eb);
              }
              if (d < -1e-15) {
                pk[cin] = 0;
                pk[cout] = 1;
                err[a.sector] -= a.value;
                err[b.sector] += b.value;
                improved = true;
                break;  // cin no longer selected
              }
            }
          }
        }
        if (!improved) return;
      }
    };

    // Exactly re-optimize one pair's subset with all other pairs held
    // fixed. Only attempted while C(L, k) stays within a small enumeration
    // budget; returns whether the objective improved.
    auto resolve_pair = [&](std::size_t p, std::vector<char>& pk,
                            std::vector<double>& err) {
      const std::size_t lo = pb.pair_off[p], hi = pb.pair_off[p + 1];
      const std::size_t width = hi - lo;
      const std::int64_t k = pb.k[p];
      if (k == 0 || static_cast<std::size_t>(k) == width) return false;
      double combos = 1;
      for (std::int64_t c = 0; c < k && combos <= 20000.0; ++c)
        combos *= static_cast<double>(width - static_cast<std::size_t>(c)) /
                  static_cast<double>(c + 1);
      if (combos > 20000.0) return false;
      const double f_before = pb.objective(err);
      for (std::size_t c = lo; c < hi; ++c) {
        if (!pk[c]) continue;
        err[pb.cand[c].sector] -= pb.cand[c].value;
        pk[c] = 0;
      }
      double f = pb.objective(err);
      double best_f = std::numeric_limits<double>::infinity();
      std::vector<std::size_t> cur, best_ix;
      std::function<void(std::size_t, std::int64_t)> choose =
          [&](std::size_t c, std::int64_t need) {
            if (need == 0) {
              if (f < best_f) {
                best_f = f;
                best_ix = cur;
              }
              return;
            }
            if (hi - c < static_cast<std::size_t>(need)) return;
            choose(c + 1, need);  // skip c
            const detail::Candidate& cd = pb.cand[c];
            const double w = pb.weight[cd.sector];
            const double e = err[cd.sector];
            f += w * ((e + cd.value) * (e + cd.value) - e * e);
            err[cd.sector] = e + cd.value;
            cur.push_back(c);
            choose(c + 1, need - 1);
            cur.pop_back();
            err[cd.sector] = e;
            f -= w * ((e + cd.value) * (e + cd.value) - e * e);
          };
      choose(lo, k);
      for (std::size_t c : best_ix) {
        pk[c] = 1;
        err[pb.cand[c].sector] += pb.cand[c].value;
      }
      return best_f < f_before - 1e-15;
    };

    // Jointly re-optimize two pairs, all others fixed, when the product of
    // their subset counts stays within the enumeration budget.
    auto resolve_two = [&](std::size_t p, std::size_t q, std::vector<char>& pk,
                           std::vector<double>& err) {
      double combos = 1;
      for (std::size_t pp : {p, q}) {
        const std::size_t width = pb.pair_off[pp + 1] - pb.pair_off[pp];
        for (std::int64_t c = 0; c < pb.k[pp] && combos <= 20000.0; ++c)
          combos *= static_cast<double>(width - static_cast<std::size_t>(c)) /
                    static_cast<double>(c + 1);
      }
      if (combos > 20000.0) return false;
      const double f_before = pb.objective(err);
      for (std::size_t pp : {p, q})
        for (std::size_t c = pb.pair_off[pp]; c < pb.pair_off[pp + 1]; ++c) {
          if (!pk[c]) continue;
          err[pb.cand[c].sector] -= pb.cand[c].value;
          pk[c] = 0;
        }
      double f = pb.objective(err);
      double best_f = std::numeric_limits<double>::infinity();
      std::vector<std::size_t> cur, best_ix;
      std::function<void(int, std::size_t, std::int64_t)> choose =
          [&](int which, std::size_t c, std::int64_t need) {
            const std::size_t hi = pb.pair_off[(which == 0 ? p : q) + 1];
            if (need == 0) {
              if (which == 0) {
                choose(1, pb.pair_off[q], pb.k[q]);
              } else if (f < best_f) {
                best_f = f;
                best_ix = cur;
              }
              return;
            }
            if (hi - c < static_cast<std::size_t>(need)) return;
            choose(which, c + 1, need);  // skip c
            const detail::Candidate& cd = pb.cand[c];
            const double w = pb.weight[cd.sector];
            const double e = err[cd.sector];
            f += w * ((e + cd.value) * (e + cd.value) - e * e);
            err[cd.sector] = e + cd.value;
            cur.push_back(c);
            choose(which, c + 1, need - 1);
            cur.pop_back();
            err[cd.sector] = e;
            f -= w * ((e + cd.value) * (e + cd.value) - e * e);
          };
      choose(0, pb.pair_off[p], pb.k[p]);
      for (std::size_t c : best_ix) {
        pk[c] = 1;
        err[pb.cand[c].sector] += pb.cand[c].value;
      }
      return best_f < f_before - 1e-15;
    };

    double best = 0;
    bool have_best = false;
    const int restarts = pb.cand.size() <= 1024 ? 16 : 4;
    for (int start = 0; start < restarts; ++start) {
      std::vector<char> pk(pb.cand.size(), 0);
      std::vector<double> err = pb.err0;
      if (start == 0) {
        // Greedy: per pair, repeatedly take the candidate whose addition
        // lowers the objective most.
        for (std::size_t p = 0; p < pb.k.size(); ++p) {
          for (std::int64_t round = 0; round < pb.k[p]; ++round) {
            std::size_t pick_c = 0;
            double pick_d = 0;
            bool found = false;
            for (std::size_t c = pb.pair_off[p]; c < pb.pair_off[p + 1]; ++c) {
              if (pk[c]) continue;
              const detail::Candidate& cd = pb.cand[c];
              double w = pb.weight[cd.sector], e = err[cd.sector];
              double d = w * ((e + cd.value) * (e + cd.value) - e * e);
              if (!found || d < pick_d) {
                found = true;
                pick_d = d;
                pick_c = c;
              }
            }
            pk[pick_c] = 1;
            err[pb.cand[pick_c].sector] += pb.cand[pick_c].value;
          }
        }
      } else {
        // Random feasible start (keyed, so the solve stays deterministic).
        Rng rng = Rng(0x68657572ull).key(static_cast<std::uint64_t>(start));
        for (std::size_t p = 0; p < pb.k.size(); ++p) {
          std::size_t lo = pb.pair_off[p], width = pb.pair_off[p + 1] - lo;
          std::vector<std::size_t> ix(width);
          for (std::size_t c = 0; c < width; ++c) ix[c] = lo + c;
          for (std::int64_t c = 0; c < pb.k[p]; ++c) {
            std::size_t r = static_cast<std::size_t>(c) +
                            rng.uniform_u64(width - static_cast<std::size_t>(c));
            std::swap(ix[c], ix[r]);
            pk[ix[c]] = 1;
            err[pb.cand[ix[c]].sector] += pb.cand[ix[c]].value;
          }
        }
      }
      descend(pk, err);
      for (int sweep = 0; sweep < 50; ++sweep) {
        bool improved = false;
        for (std::size_t p = 0; p < pb.k.size(); ++p)
          improved = resolve_pair(p, pk, err) || improved;
        if (pb.k.size() <= 64)
          for (std::size_t p = 0; p < pb.k.size(); ++p)
            for (std::size_t q = p + 1; q < pb.k.size(); ++q)
              improved = resolve_two(p, q, pk, err) || improved;
        if (!improved) break;
        descend(pk, err);
      }
      descend(pk, err);  // exit with no improving single swap
      double f = pb.objective(err);
      if (!have_best || f < best) {
        best = f;
        pick = pk;
        have_best = true;
      }
    }
    sol.objective_after = best;
    sol.exact = false;
  }

  for (std::size_t c = 0; c < pb.cand.size(); ++c)
    if (pick[c]) sol.edges.emplace_back(pb.cand[c].i, pb.cand[c].j);
  return sol;
}

// Adds (i, i) for every node that lacks one; idempotent.
inline SparseDigraph add_self_loops(const SparseDigraph& g) {
  SparseDigraph h = g;
  std::vector<char> has(g.n(), 0);
  for (const auto& e : g.edges)
    if (e.src == e.dst) has[e.src] = 1;
  for (std::uint32_t i = 0; i < g.n(); ++i)
    if (!has[i]) h.edges.push_back({i, i, EdgeTag::selfloop});
  h.sort_edges();
  return h;
}

struct ClosureReport {
  std::size_t components_before = 0;
  std::size_t components_after = 0;
  std::size_t r = 0;
  std::int64_t k_total = 0;
  std::size_t omega_total = 0;
  std::vector<std::int64_t> k_ab;  // aligned with the plan's pairs
  double objective_before = 0;
  double objective_after = 0;
  bool exact = false;
  std::size_t self_loops_added = 0;
};

struct ClosureResult {
  SparseDigraph graph;
  ClosureReport report;
};

inline ClosureResult close_graph(const SparseDigraph& g, const IOTable& io,
                                 const ClosureHyper& hyper = {}, std::uint64_t seed = 0,
                                 std::size_t exact_limit = 25) {
  Condensation cond = tarjan_scc(g);
  ClosurePlan plan = build_plan(g, cond, hyper, seed);
  SectorInflowState state = build_inflow_state(g, io);
  ClosureSolution sol = solve_closure(plan, state, g, io, exact_limit);

  ClosureResult out;
  out.graph = g;
  for (const auto& [i, j] : sol.edges) out.graph.edges.push_back({i, j, EdgeTag::closure});
  out.graph.sort_edges();

  Condensation check = tarjan_scc(out.graph);
  if (check.n_components() != 1)
    fail("Internal", "closure: graph not strongly connected after augmentation");

  std::size_t m_before_loops = out.graph.m();
  out.graph = add_self_loops(out.graph);

  out.report.components_before = cond.n_components();
  out.report.components_after = check.n_components();
  out.report.r = plan.r;
  out.report.k_total = plan.k_total();
  out.report.omega_total = plan.omega_total();
  for (const auto& pr : plan.pairs) out.report.k_ab.push_back(pr.k_ab);
  out.report.objective_before = sol.objective_before;
  out.report.objective_after = sol.objective_after;
  out.report.exact = sol.exact;
  out.report.self_loops_added = out.graph.m() - m_before_loops;
  return out;
}

}  // namespace netrecon
