#pragma once

#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "stbp/model.hpp"

namespace stbp {

void serialize_panel(const EventPanel& panel, const std::string& path);
EventPanel load_panel(const std::string& path, Link link = Link::Identity);

void serialize_params(const ParamVector& beta, const std::string& path);
ParamVector load_params(const std::string& path);
/// Throws if the stored spec differs from `expected`, naming both.
ParamVector load_params(const std::string& path, const ModelSpec& expected);

struct GridSpec {
  double lat_min = 0.0, lat_max = 1.0;
  double lon_min = 0.0, lon_max = 1.0;
  int rows = 1, cols = 1;
  double bin_seconds = 3600.0;
  std::map<std::string, int> categories;  // dense ids 1..M

  int K() const { return rows * cols; }
  int M() const;
  void validate() const;
  /// Cell index for a point inside the box; -1 if outside.
  int cell_of(double lat, double lon) const;
};

struct IngestReport {
  long long total_rows = 0;
  long long kept = 0;
  long long collisions = 0;  // later events dropped from an occupied (bin, cell)
  long long out_of_box = 0;
  Index N = 0;
};

/// Bins `timestamp,lat,lon,category` rows onto the grid. Earliest event wins
/// a (bin, cell) collision. Timestamps are ISO-8601 UTC or epoch seconds.
EventPanel ingest_events(const std::string& csv_path, const GridSpec& grid, int d,
                         IngestReport& report);

/// Epoch seconds from "YYYY-MM-DD[ T]HH:MM:SS[Z]" or a plain number.
double parse_timestamp(const std::string& text);

void write_text_file(const std::string& path, const std::string& content);

/// Minimal SVG 1.1 builders for the report figures.
std::string svg_line_chart(const std::vector<std::pair<std::string, std::vector<double>>>& series,
                           const std::string& title);
std::string svg_histogram(const std::vector<double>& values, int bins, const std::string& title,
                          double marker = std::numeric_limits<double>::quiet_NaN());
std::string svg_paired_bars(const std::vector<double>& truth, const std::vector<double>& estimate,
                            const std::string& title);

}  // namespace stbp
