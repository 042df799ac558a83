#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <string>

#include "oracles.hpp"
#include "stbp/io.hpp"

using namespace stbp;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("/tmp/stbp_test_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

void write_csv(const std::string& path, const std::string& body) {
  std::ofstream out(path);
  out << body;
}

GridSpec small_grid() {
  GridSpec grid;
  grid.lat_min = 0.0;
  grid.lat_max = 2.0;
  grid.lon_min = 0.0;
  grid.lon_max = 2.0;
  grid.rows = 2;
  grid.cols = 2;
  grid.bin_seconds = 60.0;
  grid.categories = {{"theft", 1}, {"assault", 2}};
  return grid;
}

}  // namespace

TEST_CASE("event panels round-trip through the binary format") {
  oracle::Rng rng(600);
  for (int d : {0, 2}) {
    ModelSpec spec(3, 2, d);
    IntMatrix omega(50 + d, 3);
    for (Index r = 0; r < omega.rows(); ++r)
      for (Index c = 0; c < omega.cols(); ++c) omega(r, c) = rng.uniform_int(0, spec.M);
    EventPanel panel(spec, omega);
    TempFile f("panel_" + std::to_string(d) + ".bin");
    serialize_panel(panel, f.path);
    EventPanel back = load_panel(f.path);
    CHECK(back.spec == spec);
    CHECK(back.N == panel.N);
    CHECK((back.omega.array() == panel.omega.array()).all());
  }
}

TEST_CASE("panel loading rejects corrupted headers") {
  TempFile f("panel_bad.bin");
  write_csv(f.path, "XXXX garbage");
  CHECK_THROWS_AS(load_panel(f.path), std::runtime_error);
  CHECK_THROWS_AS(load_panel("/tmp/stbp_does_not_exist.bin"), std::runtime_error);
}

TEST_CASE("parameter vectors round-trip through JSON") {
  oracle::Rng rng(601);
  ModelSpec spec(2, 2, 1);
  ParamVector beta(spec);
  for (Index i = 0; i < beta.values.size(); ++i) beta.values[i] = rng.uniform(-0.5, 0.5);
  TempFile f("params.json");
  serialize_params(beta, f.path);
  ParamVector back = load_params(f.path);
  CHECK(back.spec == spec);
  CHECK((back.values - beta.values).lpNorm<Eigen::Infinity>() == 0.0);
  // the checked overload names the mismatch
  ModelSpec other(2, 2, 2);
  CHECK_THROWS_AS(load_params(f.path, other), std::runtime_error);
  CHECK_NOTHROW(load_params(f.path, spec));
}

TEST_CASE("grid cells map coordinates row-major and reject outsiders") {
  GridSpec grid = small_grid();
  grid.validate();
  CHECK(grid.K() == 4);
  CHECK(grid.M() == 2);
  CHECK(grid.cell_of(0.5, 0.5) == 0);
  CHECK(grid.cell_of(0.5, 1.5) == 1);
  CHECK(grid.cell_of(1.5, 0.5) == 2);
  CHECK(grid.cell_of(1.5, 1.5) == 3);
  CHECK(grid.cell_of(2.5, 0.5) == -1);
  CHECK(grid.cell_of(0.5, -0.1) == -1);

  GridSpec bad = grid;
  bad.categories = {{"theft", 1}, {"assault", 3}};  // ids must be dense 1..M
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad.categories.clear();
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("timestamps parse as epoch numbers or civil UTC strings") {
  CHECK(parse_timestamp("12345") == doctest::Approx(12345.0));
  CHECK(parse_timestamp("1970-01-01T00:00:00Z") == doctest::Approx(0.0));
  CHECK(parse_timestamp("1970-01-02 00:00:30") == doctest::Approx(86430.0));
  CHECK(parse_timestamp("2020-01-01T00:00:00Z") == doctest::Approx(1577836800.0));
  CHECK_THROWS_AS(parse_timestamp("yesterday"), std::invalid_argument);
}

TEST_CASE("ingest bins events, earliest wins, and the report conserves rows") {
  GridSpec grid = small_grid();
  TempFile f("events.csv");
  write_csv(f.path,
            "timestamp,lat,lon,category\n"
            "60,0.5,0.5,theft\n"       // bin 1, cell 0
            "70,0.6,0.4,assault\n"     // same bin+cell: dropped (later)
            "65,1.5,1.5,assault\n"     // bin 1, cell 3
            "130,0.5,1.5,theft\n"      // bin 2, cell 1
            "10,9.9,0.5,theft\n");     // outside the box
  IngestReport report;
  EventPanel panel = ingest_events(f.path, grid, 1, report);
  CHECK(report.total_rows == 5);
  CHECK(report.kept == 3);
  CHECK(report.collisions == 1);
  CHECK(report.out_of_box == 1);
  CHECK(report.kept + report.collisions + report.out_of_box == report.total_rows);
  CHECK(panel.spec.K == 4);
  CHECK(panel.spec.M == 2);
  CHECK(panel.spec.d == 1);
  // bins start at the earliest kept event; d zero rows of history lead
  CHECK(report.N == 2);
  CHECK(panel.omega.rows() == 3);
  CHECK((panel.omega.row(0).array() == 0).all());
  CHECK(panel.omega(1, 0) == 1);  // theft at t=60 beats assault at t=70
  CHECK(panel.omega(1, 3) == 2);
  CHECK(panel.omega(2, 1) == 1);
  CHECK(panel.omega(1, 1) == 0);
  CHECK(panel.omega(2, 0) == 0);
}

TEST_CASE("ingest diagnoses malformed rows with their line numbers") {
  GridSpec grid = small_grid();
  IngestReport report;
  TempFile f("bad_events.csv");

  write_csv(f.path, "timestamp,lat,lon,category\n60,0.5,0.5,arson\n");
  CHECK_THROWS_WITH_AS(ingest_events(f.path, grid, 0, report),
                       doctest::Contains("arson"), std::runtime_error);

  write_csv(f.path, "60,0.5,0.5\n");
  CHECK_THROWS_WITH_AS(ingest_events(f.path, grid, 0, report),
                       doctest::Contains("line 1"), std::runtime_error);

  CHECK_THROWS_AS(ingest_events("/tmp/stbp_missing.csv", grid, 0, report), std::runtime_error);
}

TEST_CASE("ingesting no usable events yields an all-quiet panel") {
  GridSpec grid = small_grid();
  TempFile f("empty.csv");
  write_csv(f.path, "timestamp,lat,lon,category\n");
  IngestReport report;
  EventPanel panel = ingest_events(f.path, grid, 2, report);
  CHECK(report.total_rows == 0);
  CHECK(panel.N == 1);
  CHECK((panel.omega.array() == 0).all());
}

TEST_CASE("a simulated panel survives a round trip through CSV ingestion") {
  // write one event row per nonzero panel entry, then re-bin it
  oracle::Rng rng(602);
  GridSpec grid = small_grid();
  ModelSpec spec(4, 2, 1);
  IntMatrix omega(30, 4);
  for (Index r = 0; r < omega.rows(); ++r)
    for (Index c = 0; c < omega.cols(); ++c) omega(r, c) = rng.uniform_int(0, 2);
  omega(0, 0) = 1;   // anchor the first bin so the offset is deterministic
  omega(29, 0) = 1;  // anchor the last bin so no trailing bins are trimmed
  std::string body = "timestamp,lat,lon,category\n";
  const double cell_lat[] = {0.5, 0.5, 1.5, 1.5};
  const double cell_lon[] = {0.5, 1.5, 0.5, 1.5};
  for (Index r = 0; r < omega.rows(); ++r)
    for (Index c = 0; c < omega.cols(); ++c) {
      if (omega(r, c) == 0) continue;
      const std::string cat = omega(r, c) == 1 ? "theft" : "assault";
      body += std::to_string(r * 60.0 + 5.0) + "," + std::to_string(cell_lat[c]) + "," +
              std::to_string(cell_lon[c]) + "," + cat + "\n";
    }
  TempFile f("roundtrip.csv");
  write_csv(f.path, body);
  IngestReport report;
  EventPanel panel = ingest_events(f.path, grid, 1, report);
  CHECK(report.collisions == 0);
  CHECK(report.out_of_box == 0);
  REQUIRE(panel.omega.rows() == omega.rows() + 1);  // one zero history row
  CHECK((panel.omega.bottomRows(omega.rows()).array() == omega.array()).all());
}

TEST_CASE("SVG builders emit well-formed documents") {
  std::vector<std::pair<std::string, std::vector<double>>> series{
      {"alpha", {1.0, 2.0, 1.5}}, {"beta", {0.5, 0.25, 0.75}}};
  const std::string chart = svg_line_chart(series, "objective");
  CHECK(chart.find("<svg") != std::string::npos);
  CHECK(chart.find("</svg>") != std::string::npos);
  CHECK(chart.find("alpha") != std::string::npos);

  const std::string hist = svg_histogram({0.1, 0.2, 0.2, 0.9}, 4, "support", 0.5);
  CHECK(hist.find("<svg") != std::string::npos);
  CHECK(hist.find("</svg>") != std::string::npos);

  const std::string bars = svg_paired_bars({0.1, 0.4}, {0.12, 0.38}, "fit");
  CHECK(bars.find("</svg>") != std::string::npos);

  TempFile f("figure.svg");
  write_text_file(f.path, chart);
  std::ifstream in(f.path);
  std::string back((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(back == chart);
}
