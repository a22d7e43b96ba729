#pragma once

// Firm-side inputs: size-bin count tables, the sampled firm population, and
// classification concordances. Sizes are relative: after sampling or mapping,
// the largest firm has size exactly 1.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "netrecon/common.hpp"
#include "netrecon/csv.hpp"
#include "netrecon/io_table.hpp"
#include "netrecon/rng.hpp"

namespace netrecon {

struct FirmSizeBin {
  int sector = 0;       // index into IOTable::sectors
  double lo = 0;        // inclusive lower size bound (raw units)
  double hi = 0;        // exclusive upper bound; must be finite and > lo
  std::uint64_t count = 0;
};

struct FirmSizeBinTable {
  std::vector<FirmSizeBin> bins;  // sorted by (sector, lo)

  std::uint64_t total_count() const {
    std::uint64_t t = 0;
    for (const auto& b : bins) t += b.count;
    return t;
  }
};

// File format: sector,bin_low,bin_high,count. Sector must match an io-table id
// (or a concordance source code resolved upstream). Open-ended or degenerate
// bins are rejected; bins within a sector must not overlap.
inline FirmSizeBinTable load_firm_bins(const std::string& path, const IOTable& io) {
  CsvFile csv = read_csv(path);
  if (csv.rows.empty()) fail("BadBin", path + ": empty bin table");
  std::size_t start = 0;
  if (!csv.rows[0].empty() && csv.rows[0][0] == "sector") start = 1;
  FirmSizeBinTable t;
  for (std::size_t r = start; r < csv.rows.size(); ++r) {
    const auto& row = csv.rows[r];
    if (row.size() != 4) fail("BadBin", path + ": row " + std::to_string(r) + " needs 4 fields");
    FirmSizeBin b;
    b.sector = io.sector_index(row[0]);
    if (b.sector < 0) fail("UnknownSector", path + ": unknown sector '" + row[0] + "'");
    b.lo = parse_double(row[1], path);
    b.hi = parse_double(row[2], path);
    b.count = parse_u64(row[3], path);
    if (!std::isfinite(b.lo) || !std::isfinite(b.hi) || !(b.lo >= 0) || !(b.hi > b.lo))
      fail("BadBin", path + ": row " + std::to_string(r) +
                         ": bounds must be finite with bin_low < bin_high");
    t.bins.push_back(b);
  }
  std::stable_sort(t.bins.begin(), t.bins.end(), [](const FirmSizeBin& a, const FirmSizeBin& b) {
    return a.sector != b.sector ? a.sector < b.sector : a.lo < b.lo;
  });
  for (std::size_t i = 1; i < t.bins.size(); ++i) {
    const auto& a = t.bins[i - 1];
    const auto& b = t.bins[i];
    if (a.sector == b.sector && b.lo < a.hi)
      fail("BadBin", path + ": overlapping bins in sector '" + io.sectors[a.sector] + "'");
  }
  return t;
}

struct FirmPopulation {
  std::vector<int> sector;    // per firm
  std::vector<double> size;   // per firm, max == 1 when nonempty
  int n_sectors = 0;

  std::size_t n() const { return size.size(); }

  std::vector<double> sector_sizes() const {
    std::vector<double> s(n_sectors, 0.0);
    for (std::size_t i = 0; i < size.size(); ++i) s[sector[i]] += size[i];
    return s;
  }
};

inline void normalize_sizes(std::vector<double>& size) {
  double mx = 0;
  for (double v : size) mx = std::max(mx, v);
  if (mx > 0)
    for (double& v : size) v /= mx;
}

// Draws the firm population cell by cell. Each (sector, bin) cell keeps
// round(count * r) firms in expectation: floor plus a Bernoulli on the
// fractional part, sizes uniform within the bin. Every cell uses its own
// keyed stream, so the draw is independent of evaluation order.
inline FirmPopulation sample_firms(const FirmSizeBinTable& bins, double r, std::uint64_t seed,
                                   int n_sectors) {
  if (!(r >= 0.0) || !(r <= 1.0)) fail("BadArgument", "sample_firms: retention must be in [0, 1]");
  FirmPopulation pop;
  pop.n_sectors = n_sectors;
  Rng root = Rng(seed).key(0x66697273);  // stream domain: firm sampling
  for (std::size_t c = 0; c < bins.bins.size(); ++c) {
    const auto& b = bins.bins[c];
    Rng cell = root.key2(static_cast<std::uint64_t>(b.sector), c);
    double rc = r * static_cast<double>(b.count);
    std::uint64_t keep = static_cast<std::uint64_t>(std::floor(rc));
    double frac = rc - static_cast<double>(keep);
    if (frac > 0 && cell.bernoulli(frac)) ++keep;
    for (std::uint64_t j = 0; j < keep; ++j) {
      pop.sector.push_back(b.sector);
      pop.size.push_back(cell.uniform(b.lo, b.hi));
    }
  }
  normalize_sizes(pop.size);
  return pop;
}

// Classification concordance: source code -> target sector id. An empty
// target means the code is dropped.
struct Concordance {
  std::map<std::string, std::string> map;  // source -> target ("" = drop)
};

inline Concordance load_concordance(const std::string& path) {
  CsvFile csv = read_csv(path);
  Concordance c;
  std::size_t start = 0;
  if (!csv.rows.empty() && !csv.rows[0].empty() && csv.rows[0][0] == "source_code") start = 1;
  for (std::size_t r = start; r < csv.rows.size(); ++r) {
    const auto& row = csv.rows[r];
    if (row.empty() || row.size() > 2)
      fail("BadConcordance", path + ": row " + std::to_string(r) + " needs 1-2 fields");
    c.map[row[0]] = row.size() == 2 ? row[1] : "";
  }
  return c;
}

// A firm table still carrying source classification codes.
struct RawFirmTable {
  std::vector<std::string> code;
  std::vector<double> size;
};

struct ConcordanceReport {
  std::size_t kept = 0;
  std::size_t dropped = 0;  // unmapped codes and codes mapped to ""
};

// Maps source codes to sectors, drops unmapped rows, and renormalizes sizes
// so the largest retained firm has size 1.
inline FirmPopulation apply_concordance(const RawFirmTable& raw, const Concordance& conc,
                                        const IOTable& io, ConcordanceReport* report = nullptr) {
  FirmPopulation pop;
  pop.n_sectors = io.n();
  ConcordanceReport rep;
  for (std::size_t i = 0; i < raw.code.size(); ++i) {
    auto it = conc.map.find(raw.code[i]);
    if (it == conc.map.end() || it->second.empty()) {
      ++rep.dropped;
      continue;
    }
    int sec = io.sector_index(it->second);
    if (sec < 0) fail("UnknownSector", "concordance targets unknown sector '" + it->second + "'");
    pop.sector.push_back(sec);
    pop.size.push_back(raw.size[i]);
    ++rep.kept;
  }
  normalize_sizes(pop.size);
  if (report) *report = rep;
  return pop;
}

// firms.csv: id,sector,size. Ids are the 0-based positions assigned at
// sampling time; sizes round-trip bit-exactly.
inline void save_firms(const FirmPopulation& pop, const IOTable& io, const std::string& path,
                       const std::string& fingerprint = "") {
  CsvWriter w(path);
  if (!fingerprint.empty()) w.comment(fingerprint);
  w.row({"id", "sector", "size"});
  for (std::size_t i = 0; i < pop.n(); ++i)
    w.row({std::to_string(i), io.sectors[pop.sector[i]], format_double(pop.size[i])});
  w.close();
}

inline FirmPopulation load_firms(const std::string& path, const IOTable& io) {
  CsvFile csv = read_csv(path);
  FirmPopulation pop;
  pop.n_sectors = io.n();
  if (csv.rows.empty() || csv.rows[0] != std::vector<std::string>{"id", "sector", "size"})
    fail("BadHeader", path + ": expected header id,sector,size");
  for (std::size_t r = 1; r < csv.rows.size(); ++r) {
    const auto& row = csv.rows[r];
    if (row.size() != 3) fail("BadRow", path + ": row " + std::to_string(r) + " needs 3 fields");
    if (parse_u64(row[0], path) != r - 1)
      fail("BadRow", path + ": firm ids must be consecutive from 0");
    int sec = io.sector_index(row[1]);
    if (sec < 0) fail("UnknownSector", path + ": unknown sector '" + row[1] + "'");
    pop.sector.push_back(sec);
    pop.size.push_back(parse_double(row[2], path));
  }
  return pop;
}

}  // namespace netrecon
