#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <fstream>

#include "netrecon/firms.hpp"
#include "netrecon/io_table.hpp"
#include "test_util.hpp"

using namespace netrecon;

TEST_CASE("io table normalizations on a 1x1 table") {
  IOTable t = IOTable::from_flows({"A"}, {5.0});
  REQUIRE(t.s(0, 0) == 1.0);
  REQUIRE(t.i(0, 0) == 1.0);
}

TEST_CASE("io table normalizations on the 2x2 worked example") {
  IOTable t = IOTable::from_flows({"A", "B"}, {4, 2, 0, 1});
  REQUIRE(t.s(0, 0) == 1.0);
  REQUIRE(t.s(0, 1) == 0.5);
  REQUIRE(t.s(1, 0) == 0.0);
  REQUIRE(t.s(1, 1) == 0.25);
  REQUIRE(t.i(0, 0) == Catch::Approx(2.0 / 3.0).epsilon(1e-15));
  REQUIRE(t.i(0, 1) == Catch::Approx(1.0 / 3.0).epsilon(1e-15));
  REQUIRE(t.i(1, 0) == 0.0);
  REQUIRE(t.i(1, 1) == 1.0);
}

TEST_CASE("io table rows with zero sum stay zero in I") {
  IOTable t = IOTable::from_flows({"A", "B"}, {0, 0, 3, 1});
  REQUIRE(t.i(0, 0) == 0.0);
  REQUIRE(t.i(0, 1) == 0.0);
  REQUIRE(t.i(1, 0) == 0.75);
}

TEST_CASE("io table rejects malformed input with typed codes") {
  auto code_of = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return std::string("no-error");
  };
  REQUIRE(code_of([] { IOTable::from_flows({"A", "B"}, {1, 2, 3}); }) == "NonSquare");
  REQUIRE(code_of([] { IOTable::from_flows({"A", "B"}, {1, -2, 3, 4}); }) == "NegativeEntry");
  REQUIRE(code_of([] { IOTable::from_flows({"A"}, {0.0}); }) == "AllZero");
  // The offending cell is identified.
  try {
    IOTable::from_flows({"A", "B"}, {1, -2, 3, 4});
  } catch (const Error& e) {
    REQUIRE(std::string(e.what()).find("row 0") != std::string::npos);
    REQUIRE(std::string(e.what()).find("col 1") != std::string::npos);
  }
}

TEST_CASE("io table csv round trip is bit exact") {
  testutil::TempDir dir("io_rt");
  IOTable t = IOTable::from_flows({"A", "B", "C"}, {1.25, 0.1, 3, 0, 7.5e-3, 2, 9, 0, 0.333333333333333314829616256247});
  save_io_table(t, dir.file("io_table.csv"));
  IOTable u = load_io_table(dir.file("io_table.csv"));
  REQUIRE(u.sectors == t.sectors);
  REQUIRE(u.flows == t.flows);
  REQUIRE(u.S == t.S);
  REQUIRE(u.I == t.I);
}

TEST_CASE("missing io table reports MissingInput") {
  try {
    load_io_table("/nonexistent/io_table.csv");
    FAIL("expected error");
  } catch (const Error& e) {
    REQUIRE(e.code() == "MissingInput");
  }
}

static FirmSizeBinTable one_cell(int sector, double lo, double hi, std::uint64_t count) {
  FirmSizeBinTable t;
  t.bins.push_back({sector, lo, hi, count});
  return t;
}

TEST_CASE("cell retention is floor plus a Bernoulli on the fraction") {
  // count 7, r = 0.3: kept count is 2 or 3 with P(3) = 0.1.
  FirmSizeBinTable bins = one_cell(0, 1.0, 2.0, 7);
  double sum = 0;
  int n3 = 0;
  const int reps = 1000000;
  for (int s = 0; s < reps; ++s) {
    FirmPopulation p = sample_firms(bins, 0.3, s, 1);
    REQUIRE((p.n() == 2 || p.n() == 3));
    sum += static_cast<double>(p.n());
    n3 += p.n() == 3;
  }
  REQUIRE(sum / reps == Catch::Approx(2.1).margin(0.01));
  REQUIRE(static_cast<double>(n3) / reps == Catch::Approx(0.1).margin(0.005));
}

TEST_CASE("r = 1 keeps every firm and zero-count cells contribute nothing") {
  FirmSizeBinTable bins;
  bins.bins.push_back({0, 1.0, 2.0, 5});
  bins.bins.push_back({0, 2.0, 4.0, 0});
  bins.bins.push_back({1, 1.0, 3.0, 4});
  FirmPopulation p = sample_firms(bins, 1.0, 99, 2);
  REQUIRE(p.n() == 9);
  int sec1 = 0;
  for (int s : p.sector) sec1 += s == 1;
  REQUIRE(sec1 == 4);
}

TEST_CASE("sampled sizes live in their bins (up to the global rescale) and max is exactly 1") {
  FirmSizeBinTable bins;
  bins.bins.push_back({0, 10.0, 20.0, 50});
  bins.bins.push_back({0, 100.0, 200.0, 3});
  FirmPopulation p = sample_firms(bins, 1.0, 7, 1);
  REQUIRE(p.n() == 53);
  double mx = 0;
  for (double m : p.size) mx = std::max(mx, m);
  REQUIRE(mx == 1.0);
  // Ratios preserved: small-bin firms at most 20/100 of the largest.
  std::sort(p.size.begin(), p.size.end());
  REQUIRE(p.size[49] <= 0.2);
  REQUIRE(p.size[50] >= 0.5);
}

TEST_CASE("sampling is deterministic in the seed") {
  FirmSizeBinTable bins = one_cell(0, 1.0, 5.0, 40);
  FirmPopulation a = sample_firms(bins, 0.8, 1234, 1);
  FirmPopulation b = sample_firms(bins, 0.8, 1234, 1);
  FirmPopulation c = sample_firms(bins, 0.8, 1235, 1);
  REQUIRE(a.size == b.size);
  REQUIRE(a.sector == b.sector);
  REQUIRE(a.size != c.size);
}

TEST_CASE("expected retained count matches count * r over many seeds") {
  FirmSizeBinTable bins = one_cell(0, 1.0, 2.0, 13);
  const double r = 0.47;
  const int reps = 20000;
  double sum = 0;
  for (int s = 0; s < reps; ++s) sum += static_cast<double>(sample_firms(bins, r, 1000 + s, 1).n());
  double want = 13 * r;
  double se = std::sqrt(0.25 / reps) * 3;  // Bernoulli fraction part, 3 sigma
  REQUIRE(sum / reps == Catch::Approx(want).margin(3 * se + 0.01));
}

TEST_CASE("retention outside [0,1] is rejected") {
  FirmSizeBinTable bins = one_cell(0, 1.0, 2.0, 3);
  REQUIRE_THROWS_AS(sample_firms(bins, 1.5, 1, 1), Error);
  REQUIRE_THROWS_AS(sample_firms(bins, -0.1, 1, 1), Error);
}

TEST_CASE("bin table validation") {
  testutil::TempDir dir("bins");
  IOTable io = IOTable::from_flows({"A", "B"}, {1, 1, 1, 1});
  auto write = [&](const std::string& body) {
    std::ofstream f(dir.file("firm_bins.csv"));
    f << "sector,bin_low,bin_high,count\n" << body;
  };
  write("A,1,2,5\nA,2,4,3\nB,1,2,2\n");
  FirmSizeBinTable t = load_firm_bins(dir.file("firm_bins.csv"), io);
  REQUIRE(t.bins.size() == 3);
  REQUIRE(t.total_count() == 10);

  write("A,1,inf,5\n");  // open-ended
  REQUIRE_THROWS_AS(load_firm_bins(dir.file("firm_bins.csv"), io), Error);
  write("A,2,2,5\n");  // degenerate
  REQUIRE_THROWS_AS(load_firm_bins(dir.file("firm_bins.csv"), io), Error);
  write("A,1,3,5\nA,2,4,1\n");  // overlap
  REQUIRE_THROWS_AS(load_firm_bins(dir.file("firm_bins.csv"), io), Error);
  write("Z,1,2,5\n");  // unknown sector
  try {
    load_firm_bins(dir.file("firm_bins.csv"), io);
    FAIL("expected error");
  } catch (const Error& e) {
    REQUIRE(e.code() == "UnknownSector");
  }
}

TEST_CASE("concordance drops unmapped rows and reports counts") {
  IOTable io = IOTable::from_flows({"A", "B"}, {1, 1, 1, 1});
  Concordance conc;
  conc.map["111"] = "A";
  conc.map["222"] = "B";
  conc.map["333"] = "";  // explicit drop
  RawFirmTable raw;
  raw.code = {"111", "222", "333", "444", "111"};
  raw.size = {10, 20, 30, 40, 5};
  ConcordanceReport rep;
  FirmPopulation pop = apply_concordance(raw, conc, io, &rep);
  REQUIRE(rep.kept == 3);
  REQUIRE(rep.dropped == 2);
  REQUIRE(pop.n() == 3);
  // Sizes renormalized to the retained maximum (20).
  REQUIRE(pop.size[0] == 0.5);
  REQUIRE(pop.size[1] == 1.0);
  REQUIRE(pop.size[2] == 0.25);
  REQUIRE(pop.sector == std::vector<int>{0, 1, 0});
}

TEST_CASE("firm population csv round trip is bit exact") {
  testutil::TempDir dir("firms_rt");
  IOTable io = IOTable::from_flows({"A", "B"}, {1, 1, 1, 1});
  FirmSizeBinTable bins;
  bins.bins.push_back({0, 0.5, 2.0, 20});
  bins.bins.push_back({1, 1.0, 9.0, 15});
  FirmPopulation pop = sample_firms(bins, 0.9, 42, 2);
  save_firms(pop, io, dir.file("firms.csv"));
  FirmPopulation back = load_firms(dir.file("firms.csv"), io);
  REQUIRE(back.sector == pop.sector);
  REQUIRE(back.size == pop.size);
  REQUIRE(back.sector_sizes() == pop.sector_sizes());
}
