#pragma once

// Run configuration and artifact serialization. A run is described by one
// key/value config (file + command-line overrides); its canonical
// serialization is hashed (FNV-1a) into a fingerprint that every artifact
// embeds, so a set of artifacts can be checked for provenance without
// re-running anything. Thread count is deliberately excluded from the
// fingerprint: results are identical for every thread count, and artifacts
// produced under different `--threads` must compare byte-identical.

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "netrecon/closure.hpp"
#include "netrecon/common.hpp"
#include "netrecon/csv.hpp"
#include "netrecon/digraph.hpp"
#include "netrecon/gravity_fit.hpp"
#include "netrecon/io_table.hpp"
#include "netrecon/netstats.hpp"
#include "netrecon/weights.hpp"

namespace netrecon {

using ordered_json = nlohmann::ordered_json;

struct RunConfig {
  // Input files. Paths from a config file are resolved against its directory.
  std::string io_table;
  std::string firm_bins;
  std::string concordance;  // optional
  std::string factories;    // optional

  // Global.
  std::uint64_t seed = 42;
  int threads = 1;  // excluded from the fingerprint
  double retention = 1.0;

  // fit.*
  double fit_target_links = -1.0;
  double fit_band = 0.05;
  int fit_bins = 16;
  int fit_max_outer = 30;
  int fit_max_inner = 150;

  // sample.*
  int sample_bins = 16;
  std::uint64_t sample_ensemble_limit = 2000;  // O(N^2) diagnostics cutoff

  // close.*
  ClosureHyper close_hyper;
  std::uint64_t close_exact_limit = 25;

  // weight.*
  double weight_delta = 0.10;
  double weight_eps_w = 0.10;
  double weight_eta1 = 0.10;
  double weight_eta2 = 0.10;
  double weight_eps0 = 1e-6;
  double weight_tol = 1e-8;
  int weight_max_iterations = 30000;

  // factory.*
  double factory_tau_km = 500.0;

  // bootstrap.*
  int bootstrap_replicates = 20;
  double bootstrap_keep = 0.7;

  FitConfig fit_config() const {
    FitConfig fc;
    fc.target_links = fit_target_links;
    fc.band = fit_band;
    fc.bins = fit_bins;
    fc.max_outer = fit_max_outer;
    fc.max_inner = fit_max_inner;
    fc.threads = threads;
    return fc;
  }

  WeightProgram weight_program(SparseDigraph support) const {
    WeightProgram prog;
    prog.support = std::move(support);
    prog.delta = weight_delta;
    prog.eps_w = weight_eps_w;
    prog.eta1 = weight_eta1;
    prog.eta2 = weight_eta2;
    prog.eps0 = weight_eps0;
    return prog;
  }
};

namespace detail {

// Canonical key order; also the complete set of accepted config keys.
template <class Fn>
void each_config_key(RunConfig& c, Fn&& fn) {
  fn("io_table", &c.io_table);
  fn("firm_bins", &c.firm_bins);
  fn("concordance", &c.concordance);
  fn("factories", &c.factories);
  fn("seed", &c.seed);
  fn("retention", &c.retention);
  fn("fit.target_links", &c.fit_target_links);
  fn("fit.band", &c.fit_band);
  fn("fit.bins", &c.fit_bins);
  fn("fit.max_outer", &c.fit_max_outer);
  fn("fit.max_inner", &c.fit_max_inner);
  fn("sample.bins", &c.sample_bins);
  fn("sample.ensemble_limit", &c.sample_ensemble_limit);
  fn("close.theta", &c.close_hyper.theta);
  fn("close.eta", &c.close_hyper.eta);
  fn("close.gamma_bar", &c.close_hyper.gamma_bar);
  fn("close.n0", &c.close_hyper.n0);
  fn("close.eta_g", &c.close_hyper.eta_g);
  fn("close.exact_limit", &c.close_exact_limit);
  fn("weight.delta", &c.weight_delta);
  fn("weight.eps_w", &c.weight_eps_w);
  fn("weight.eta1", &c.weight_eta1);
  fn("weight.eta2", &c.weight_eta2);
  fn("weight.eps0", &c.weight_eps0);
  fn("weight.tol", &c.weight_tol);
  fn("weight.max_iterations", &c.weight_max_iterations);
  fn("factory.tau_km", &c.factory_tau_km);
  fn("bootstrap.replicates", &c.bootstrap_replicates);
  fn("bootstrap.keep", &c.bootstrap_keep);
}

inline std::string config_value_to_string(const std::string* v) { return *v; }
inline std::string config_value_to_string(const double* v) { return format_double(*v); }
inline std::string config_value_to_string(const int* v) { return std::to_string(*v); }
inline std::string config_value_to_string(const std::uint64_t* v) { return std::to_string(*v); }

inline void config_value_from_string(std::string* v, const std::string& s, const std::string&) {
  *v = s;
}
inline void config_value_from_string(double* v, const std::string& s, const std::string& key) {
  *v = parse_double(s, "config key " + key);
}
inline void config_value_from_string(int* v, const std::string& s, const std::string& key) {
  *v = static_cast<int>(parse_double(s, "config key " + key));
}
inline void config_value_from_string(std::uint64_t* v, const std::string& s,
                                     const std::string& key) {
  *v = parse_u64(s, "config key " + key);
}

}  // namespace detail

// Canonical one-line-per-key serialization; the fingerprint hashes exactly
// these bytes. Empty optional paths are omitted.
inline std::string serialize_config(const RunConfig& cfg) {
  std::string out;
  detail::each_config_key(const_cast<RunConfig&>(cfg), [&](const char* key, auto* slot) {
    std::string v = detail::config_value_to_string(slot);
    if (v.empty()) return;
    out += key;
    out += " = ";
    out += v;
    out += '\n';
  });
  return out;
}

inline std::string config_fingerprint(const RunConfig& cfg) {
  std::uint64_t h = fnv1a64(serialize_config(cfg));
  char buf[17];
  static const char* hex = "0123456789abcdef";
  for (int i = 0; i < 16; ++i) buf[15 - i] = hex[(h >> (4 * i)) & 0xf];
  buf[16] = '\0';
  return std::string(buf);
}

// TOML-style config: full-line # comments, optional [section] headers that
// prefix the keys that follow, `key = value` lines, optional double quotes
// around values. Unknown keys are rejected.
inline void apply_config_line(RunConfig& cfg, const std::string& key, const std::string& value,
                              const std::string& where) {
  bool matched = false;
  detail::each_config_key(cfg, [&](const char* k, auto* slot) {
    if (matched || key != k) return;
    detail::config_value_from_string(slot, value, key);
    matched = true;
  });
  if (!matched) {
    if (key == "threads") {  // accepted in files for convenience, never hashed
      cfg.threads = static_cast<int>(parse_u64(value, "config key threads"));
      return;
    }
    fail("BadArgument", where + ": unknown config key '" + key + "'");
  }
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("MissingInput", "cannot open config " + path);
  RunConfig cfg;
  std::string line, section;
  int lineno = 0;
  auto trim = [](std::string s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    std::size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    const std::string where = path + ":" + std::to_string(lineno);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']') fail("BadArgument", where + ": unterminated section header");
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    std::size_t eq = t.find('=');
    if (eq == std::string::npos) fail("BadArgument", where + ": expected key = value");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);
    if (!section.empty()) key = section + "." + key;
    apply_config_line(cfg, key, value, where);
  }
  // Resolve input paths relative to the config file's directory.
  std::filesystem::path base = std::filesystem::path(path).parent_path();
  auto resolve = [&](std::string& p) {
    if (!p.empty() && std::filesystem::path(p).is_relative()) p = (base / p).string();
  };
  resolve(cfg.io_table);
  resolve(cfg.firm_bins);
  resolve(cfg.concordance);
  resolve(cfg.factories);
  return cfg;
}

inline void save_config(const RunConfig& cfg, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("WriteFailed", "cannot open " + path + " for writing");
  out << serialize_config(cfg);
  out.close();
  if (!out) fail("WriteFailed", "error writing " + path);
}

inline void write_json(const ordered_json& j, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("WriteFailed", "cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
  out.close();
  if (!out) fail("WriteFailed", "error writing " + path);
}

inline ordered_json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("MissingInput", "cannot open " + path);
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    fail("BadRow", path + ": invalid JSON: " + e.what());
  }
  return j;
}

// params.json: {config, z, alpha, kappa, lambda:[{k,l,value}], bounds,
// fit_report}. Wall time never appears: artifacts are byte-reproducible.
inline void save_params(const GravityParams& par, const GravityBounds& bounds,
                        const FitReport& report, const std::string& path,
                        const std::string& config_hex) {
  ordered_json j;
  j["config"] = config_hex;
  j["z"] = par.z;
  j["alpha"] = par.alpha;
  j["kappa"] = par.kappa;
  ordered_json lam = ordered_json::array();
  for (std::size_t ix = 0; ix < par.lambda.size(); ++ix) {
    ordered_json cell;
    cell["k"] = par.cell[ix] / par.n_sectors;
    cell["l"] = par.cell[ix] % par.n_sectors;
    cell["value"] = par.lambda[ix];
    lam.push_back(cell);
  }
  j["lambda"] = lam;
  j["bounds"] = {{"z_lo", bounds.z_lo},         {"z_hi", bounds.z_hi},
                 {"alpha_lo", bounds.alpha_lo}, {"alpha_hi", bounds.alpha_hi},
                 {"kappa_lo", bounds.kappa_lo}, {"kappa_hi", bounds.kappa_hi},
                 {"lambda_lo", bounds.lambda_lo}, {"lambda_hi", bounds.lambda_hi}};
  j["fit_report"] = {{"status", report.status},
                     {"outer_iters", report.outer_iters},
                     {"inner_iters", report.inner_iters},
                     {"n_evals", report.n_evals},
                     {"objective", report.objective},
                     {"sum_p", report.sum_p},
                     {"max_violation", report.max_violation},
                     {"band", report.band}};
  write_json(j, path);
}

inline GravityParams load_params(const std::string& path, const IOTable& io,
                                 std::string* config_hex = nullptr) {
  ordered_json j = read_json(path);
  GravityParams par = GravityParams::init(io);
  try {
    if (config_hex) *config_hex = j.at("config").get<std::string>();
    par.z = j.at("z").get<double>();
    par.alpha = j.at("alpha").get<double>();
    par.kappa = j.at("kappa").get<double>();
    std::vector<char> seen(par.lambda.size(), 0);
    for (const auto& cell : j.at("lambda")) {
      int k = cell.at("k").get<int>();
      int l = cell.at("l").get<int>();
      if (k < 0 || k >= io.n() || l < 0 || l >= io.n())
        fail("BadRow", path + ": lambda cell out of range");
      int ix = par.lambda_index(k, l);
      if (ix < 0)
        fail("MissingLambda", path + ": lambda for zero-flow cell (" + std::to_string(k) + "," +
                                  std::to_string(l) + ")");
      if (seen[ix]) fail("BadRow", path + ": duplicate lambda cell");
      seen[ix] = 1;
      par.lambda[ix] = cell.at("value").get<double>();
    }
    for (std::size_t ix = 0; ix < seen.size(); ++ix)
      if (!seen[ix])
        fail("MissingLambda", path + ": no lambda for positive flow cell index " +
                                  std::to_string(ix));
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    fail("BadRow", path + ": " + e.what());
  }
  if (!(par.z > 0) || !(par.alpha > 0) || !(par.kappa > 0))
    fail("BadRow", path + ": parameters must be positive");
  return par;
}

// weighted_edges.csv: src,dst,weight,provenance with original firm ids.
inline void save_weighted_edges(const WeightedNetwork& net, const std::string& path,
                                const std::string& config_hex) {
  CsvWriter w(path);
  if (!config_hex.empty()) w.comment("config=" + config_hex);
  w.row({"src", "dst", "weight", "provenance"});
  for (std::size_t e = 0; e < net.graph.edges.size(); ++e) {
    const auto& ed = net.graph.edges[e];
    w.row({std::to_string(net.graph.firm_id[ed.src]), std::to_string(net.graph.firm_id[ed.dst]),
           format_double(net.weight[e]), edge_tag_name(ed.tag)});
  }
  w.close();
}

// Loads weighted_edges.csv against a node set (from nodes.csv). The support
// is re-sorted into canonical order with weights kept aligned.
inline WeightedNetwork load_weighted_edges(const std::string& path, const SparseDigraph& nodes) {
  CsvFile csv = read_csv(path);
  if (csv.rows.empty() ||
      csv.rows[0] != std::vector<std::string>{"src", "dst", "weight", "provenance"})
    fail("BadHeader", path + ": expected header src,dst,weight,provenance");
  std::map<std::uint64_t, std::uint32_t> pos;
  for (std::uint32_t i = 0; i < nodes.n(); ++i) pos.emplace(nodes.firm_id[i], i);

  struct Row {
    DirectedEdge e;
    double w;
  };
  std::vector<Row> rows;
  for (std::size_t r = 1; r < csv.rows.size(); ++r) {
    const auto& row = csv.rows[r];
    if (row.size() != 4) fail("BadRow", path + ": row " + std::to_string(r) + " needs 4 fields");
    auto is = pos.find(parse_u64(row[0], path));
    auto id = pos.find(parse_u64(row[1], path));
    if (is == pos.end() || id == pos.end())
      fail("BadRow", path + ": edge references a firm absent from the node set");
    Row out;
    out.e.src = is->second;
    out.e.dst = id->second;
    out.e.tag = edge_tag_from(row[3]);
    out.w = parse_double(row[2], path);
    rows.push_back(out);
  }
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return a.e.src != b.e.src ? a.e.src < b.e.src : a.e.dst < b.e.dst;
  });
  WeightedNetwork net;
  net.graph = nodes;
  net.graph.edges.clear();
  for (const Row& r : rows) {
    net.graph.edges.push_back(r.e);
    net.weight.push_back(r.w);
  }
  return net;
}

inline void write_closure_report(const ClosureReport& rep, const std::string& path,
                                 const std::string& config_hex) {
  ordered_json j;
  j["config"] = config_hex;
  j["components_before"] = rep.components_before;
  j["components_after"] = rep.components_after;
  j["r"] = rep.r;
  j["k_total"] = rep.k_total;
  j["omega_total"] = rep.omega_total;
  j["k_ab"] = rep.k_ab;
  j["objective_before"] = rep.objective_before;
  j["objective_after"] = rep.objective_after;
  j["exact"] = rep.exact;
  j["self_loops_added"] = rep.self_loops_added;
  write_json(j, path);
}

inline void write_stationary_report(const StationaryCheck& chk, double delta,
                                    const std::string& path, const std::string& config_hex) {
  ordered_json j;
  j["config"] = config_hex;
  j["l1_residual"] = chk.l1_residual;
  j["l1_mu_nu"] = chk.l1_mu_nu;
  j["gamma"] = chk.gamma;
  j["gamma_lower_bound_only"] = chk.gamma_lower_bound_only;
  j["bound_delta_over_gamma"] = chk.bound;
  j["delta"] = delta;
  j["power_iterations"] = chk.power_iterations;
  j["pass"] = chk.pass;
  write_json(j, path);
}

inline ordered_json loglog_fit_json(const LogLogFit& f) {
  ordered_json j;
  j["ok"] = f.ok;
  j["slope"] = f.slope;
  j["intercept"] = f.intercept;
  j["r2"] = f.r2;
  j["lo_degree"] = f.lo_degree;
  j["hi_degree"] = f.hi_degree;
  j["points"] = f.points;
  return j;
}

inline void write_stats(const NetworkSummary& s, const LogLogFit& fit_in, const LogLogFit& fit_out,
                        const LogLogFit& fit_total, const std::string& path,
                        const std::string& config_hex) {
  ordered_json j;
  j["config"] = config_hex;
  j["nodes"] = s.nodes;
  j["edges"] = s.edges;
  j["self_loops"] = s.self_loops;
  j["simple_edges"] = s.simple_edges;
  j["density"] = s.density;
  j["reciprocity"] = s.reciprocity;
  j["clustering"] = s.clustering;
  j["assortativity"] = {{"in_in", s.assort_in_in},
                        {"in_out", s.assort_in_out},
                        {"out_in", s.assort_out_in},
                        {"out_out", s.assort_out_out}};
  j["ccdf_fit"] = {{"in", loglog_fit_json(fit_in)},
                   {"out", loglog_fit_json(fit_out)},
                   {"total", loglog_fit_json(fit_total)}};
  write_json(j, path);
}

inline void write_ccdf(const std::vector<CcdfPoint>& pts, const std::string& path,
                       const std::string& config_hex) {
  CsvWriter w(path);
  if (!config_hex.empty()) w.comment("config=" + config_hex);
  w.row({"degree", "ccdf"});
  for (const auto& p : pts) w.row({std::to_string(p.degree), format_double(p.ccdf)});
  w.close();
}

// manifest.json: the provenance record for a run directory.
struct Manifest {
  std::string config_hex;
  std::uint64_t seed = 0;
  std::vector<std::string> stages;     // execution order
  std::vector<std::string> artifacts;  // sorted unique file names
};

inline void save_manifest(const Manifest& m, const std::string& path) {
  ordered_json j;
  j["config"] = m.config_hex;
  j["seed"] = m.seed;
  j["stages"] = m.stages;
  j["artifacts"] = m.artifacts;
  write_json(j, path);
}

inline Manifest load_manifest(const std::string& path) {
  ordered_json j = read_json(path);
  Manifest m;
  try {
    m.config_hex = j.at("config").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.stages = j.at("stages").get<std::vector<std::string>>();
    m.artifacts = j.at("artifacts").get<std::vector<std::string>>();
  } catch (const std::exception& e) {
    fail("BadRow", path + ": " + e.what());
  }
  return m;
}

// Registers a completed stage. The first stage creates the manifest; later
// stages must carry the same fingerprint, otherwise the directory would mix
// artifacts from different configurations.
inline void update_manifest(const std::string& dir, const RunConfig& cfg,
                            const std::string& config_hex, const std::string& stage,
                            const std::vector<std::string>& new_artifacts) {
  std::string path = (std::filesystem::path(dir) / "manifest.json").string();
  Manifest m;
  if (std::filesystem::exists(path)) {
    m = load_manifest(path);
    if (m.config_hex != config_hex)
      fail("MixedProvenance", "manifest in " + dir + " was produced by config " + m.config_hex +
                                  ", refusing to add stage '" + stage + "' from config " +
                                  config_hex);
  } else {
    m.config_hex = config_hex;
    m.seed = cfg.seed;
  }
  bool have_stage = false;
  for (const auto& s : m.stages) have_stage = have_stage || s == stage;
  if (!have_stage) m.stages.push_back(stage);
  for (const auto& a : new_artifacts) {
    bool have = false;
    for (const auto& b : m.artifacts) have = have || b == a;
    if (!have) m.artifacts.push_back(a);
  }
  std::sort(m.artifacts.begin(), m.artifacts.end());
  save_manifest(m, path);
}

}  // namespace netrecon
