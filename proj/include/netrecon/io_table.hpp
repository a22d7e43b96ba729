#pragma once

// Inter-sector flow table and its two derived normalizations:
//   S = flows scaled by the largest entry   (drives link intensities)
//   I = row shares, each buyer row sums to 1 (weights sector inflows)
// Rows index the buying sector, columns the selling sector.

#include <algorithm>
#include <string>
#include <vector>

#include "netrecon/common.hpp"
#include "netrecon/csv.hpp"

namespace netrecon {

struct IOTable {
  std::vector<std::string> sectors;  // ids from the header row
  std::vector<double> flows;         // row-major n x n
  std::vector<double> S;             // flows / max entry
  std::vector<double> I;             // row-normalized shares; zero rows stay zero

  int n() const { return static_cast<int>(sectors.size()); }
  double flow(int k, int l) const { return flows[static_cast<std::size_t>(k) * sectors.size() + l]; }
  double s(int k, int l) const { return S[static_cast<std::size_t>(k) * sectors.size() + l]; }
  double i(int k, int l) const { return I[static_cast<std::size_t>(k) * sectors.size() + l]; }

  int sector_index(const std::string& id) const {
    for (int k = 0; k < n(); ++k)
      if (sectors[k] == id) return k;
    return -1;
  }

  int positive_cells() const {
    int c = 0;
    for (double v : flows) c += v > 0 ? 1 : 0;
    return c;
  }

  static IOTable from_flows(std::vector<std::string> sector_ids, std::vector<double> flow_values) {
    IOTable t;
    t.sectors = std::move(sector_ids);
    t.flows = std::move(flow_values);
    std::size_t n = t.sectors.size();
    if (n == 0) fail("NonSquare", "io table: no sectors");
    if (t.flows.size() != n * n)
      fail("NonSquare", "io table: " + std::to_string(t.flows.size()) + " entries for " +
                            std::to_string(n) + " sectors");
    double mx = 0;
    for (std::size_t idx = 0; idx < t.flows.size(); ++idx) {
      double v = t.flows[idx];
      if (!(v >= 0) || !std::isfinite(v))
        fail("NegativeEntry", "io table: bad entry at row " + std::to_string(idx / n) +
                                  ", col " + std::to_string(idx % n));
      mx = std::max(mx, v);
    }
    if (mx <= 0) fail("AllZero", "io table: all entries are zero");
    t.S.resize(n * n);
    t.I.resize(n * n);
    for (std::size_t idx = 0; idx < t.flows.size(); ++idx) t.S[idx] = t.flows[idx] / mx;
    for (std::size_t k = 0; k < n; ++k) {
      double row = 0;
      for (std::size_t l = 0; l < n; ++l) row += t.flows[k * n + l];
      for (std::size_t l = 0; l < n; ++l) t.I[k * n + l] = row > 0 ? t.flows[k * n + l] / row : 0.0;
    }
    return t;
  }
};

// File format: header row of sector ids, then one numeric row per buying sector.
inline IOTable load_io_table(const std::string& path) {
  CsvFile csv = read_csv(path);
  if (csv.rows.empty()) fail("AllZero", path + ": empty io table");
  std::vector<std::string> ids = csv.rows[0];
  std::size_t n = ids.size();
  if (csv.rows.size() != n + 1)
    fail("NonSquare", path + ": " + std::to_string(csv.rows.size() - 1) + " rows for " +
                          std::to_string(n) + " sectors");
  std::vector<double> flows;
  flows.reserve(n * n);
  for (std::size_t k = 1; k <= n; ++k) {
    if (csv.rows[k].size() != n)
      fail("NonSquare", path + ": row " + std::to_string(k - 1) + " has " +
                            std::to_string(csv.rows[k].size()) + " columns");
    for (const auto& f : csv.rows[k]) flows.push_back(parse_double(f, path));
  }
  return IOTable::from_flows(std::move(ids), std::move(flows));
}

inline void save_io_table(const IOTable& t, const std::string& path,
                          const std::string& fingerprint = "") {
  CsvWriter w(path);
  if (!fingerprint.empty()) w.comment(fingerprint);
  w.row(t.sectors);
  std::size_t n = t.sectors.size();
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<std::string> row(n);
    for (std::size_t l = 0; l < n; ++l) row[l] = format_double(t.flows[k * n + l]);
    w.row(row);
  }
  w.close();
}

}  // namespace netrecon
