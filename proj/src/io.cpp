#include "stbp/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

namespace stbp {

namespace {

using ordered_json = nlohmann::ordered_json;

void write_u16(std::ostream& os, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 2);
}
void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}
std::uint16_t read_u16(std::istream& is) {
  unsigned char b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}
std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::string spec_string(const ModelSpec& s) {
  std::ostringstream os;
  os << "{K=" << s.K << ", M=" << s.M << ", d=" << s.d << ", link=" << link_name(s.link) << "}";
  return os.str();
}

}  // namespace

void serialize_panel(const EventPanel& panel, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("serialize_panel: cannot open " + path);
  os.write("BPNL", 4);
  write_u16(os, 1);
  const ModelSpec& spec = panel.spec;
  write_u32(os, static_cast<std::uint32_t>(spec.K));
  write_u32(os, static_cast<std::uint32_t>(spec.M));
  write_u32(os, static_cast<std::uint32_t>(spec.d));
  write_u32(os, static_cast<std::uint32_t>(panel.N));
  for (Index r = 0; r < panel.omega.rows(); ++r)
    for (Index c = 0; c < panel.omega.cols(); ++c) {
      const unsigned char v = static_cast<unsigned char>(panel.omega(r, c));
      os.write(reinterpret_cast<const char*>(&v), 1);
    }
  if (!os) throw std::runtime_error("serialize_panel: write failed for " + path);
}

EventPanel load_panel(const std::string& path, Link link) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_panel: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "BPNL", 4) != 0)
    throw std::runtime_error("load_panel: bad magic in " + path);
  const std::uint16_t version = read_u16(is);
  if (version != 1)
    throw std::runtime_error("load_panel: unsupported version " + std::to_string(version));
  const int K = static_cast<int>(read_u32(is));
  const int M = static_cast<int>(read_u32(is));
  const int d = static_cast<int>(read_u32(is));
  const int N = static_cast<int>(read_u32(is));
  ModelSpec spec(K, M, d, link);
  IntMatrix omega(N + d, K);
  for (Index r = 0; r < omega.rows(); ++r)
    for (Index c = 0; c < omega.cols(); ++c) {
      unsigned char v;
      is.read(reinterpret_cast<char*>(&v), 1);
      if (!is) throw std::runtime_error("load_panel: truncated file " + path);
      if (v > M) throw std::runtime_error("load_panel: state out of range in " + path);
      omega(r, c) = v;
    }
  return EventPanel(spec, std::move(omega));
}

void serialize_params(const ParamVector& beta, const std::string& path) {
  ordered_json j;
  j["schema_version"] = 1;
  j["K"] = beta.spec.K;
  j["M"] = beta.spec.M;
  j["d"] = beta.spec.d;
  j["link"] = link_name(beta.spec.link);
  j["values"] = std::vector<double>(beta.values.data(), beta.values.data() + beta.values.size());
  write_text_file(path, j.dump(2) + "\n");
}

ParamVector load_params(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_params: cannot open " + path);
  ordered_json j = ordered_json::parse(is);
  ModelSpec spec(j.at("K").get<int>(), j.at("M").get<int>(), j.at("d").get<int>(),
                 link_from_name(j.at("link").get<std::string>()));
  ParamVector beta(spec);
  const auto values = j.at("values").get<std::vector<double>>();
  if (static_cast<Index>(values.size()) != spec.param_count())
    throw std::runtime_error("load_params: value count does not match spec in " + path);
  beta.values = Eigen::Map<const Vector>(values.data(), values.size());
  return beta;
}

ParamVector load_params(const std::string& path, const ModelSpec& expected) {
  ParamVector beta = load_params(path);
  if (!(beta.spec == expected))
    throw std::runtime_error("load_params: stored spec " + spec_string(beta.spec) +
                             " does not match expected " + spec_string(expected));
  return beta;
}

int GridSpec::M() const { return static_cast<int>(categories.size()); }

void GridSpec::validate() const {
  if (rows < 1 || cols < 1) throw std::invalid_argument("GridSpec: rows/cols must be >= 1");
  if (!(lat_max > lat_min) || !(lon_max > lon_min))
    throw std::invalid_argument("GridSpec: bounding box is empty");
  if (!(bin_seconds > 0)) throw std::invalid_argument("GridSpec: bin width must be positive");
  std::vector<int> ids;
  for (const auto& [name, id] : categories) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i] != static_cast<int>(i) + 1)
      throw std::invalid_argument("GridSpec: category ids must be dense 1..M");
  if (categories.empty()) throw std::invalid_argument("GridSpec: category dictionary is empty");
}

int GridSpec::cell_of(double lat, double lon) const {
  if (lat < lat_min || lat > lat_max || lon < lon_min || lon > lon_max) return -1;
  int r = static_cast<int>((lat - lat_min) / (lat_max - lat_min) * rows);
  int c = static_cast<int>((lon - lon_min) / (lon_max - lon_min) * cols);
  r = std::min(r, rows - 1);
  c = std::min(c, cols - 1);
  return r * cols + c;
}

double parse_timestamp(const std::string& text) {
  // epoch seconds if the string is plain numeric
  if (text.find_first_not_of("0123456789+-.eE") == std::string::npos && !text.empty()) {
    std::size_t pos = 0;
    const double v = std::stod(text, &pos);
    if (pos == text.size()) return v;
  }
  int Y, Mo, D, h, mi;
  double sec;
  char sep;
  if (std::sscanf(text.c_str(), "%d-%d-%d%c%d:%d:%lf", &Y, &Mo, &D, &sep, &h, &mi, &sec) != 7 ||
      (sep != 'T' && sep != ' '))
    throw std::invalid_argument("parse_timestamp: cannot parse '" + text + "'");
  // days since epoch, civil-from-days algorithm
  const int y = Y - (Mo <= 2);
  const int era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * (Mo + (Mo > 2 ? -3 : 9)) + 2) / 5 + D - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  const long long days = era * 146097LL + static_cast<long long>(doe) - 719468LL;
  return days * 86400.0 + h * 3600.0 + mi * 60.0 + sec;
}

EventPanel ingest_events(const std::string& csv_path, const GridSpec& grid, int d,
                         IngestReport& report) {
  grid.validate();
  if (d < 0) throw std::invalid_argument("ingest_events: d must be >= 0");
  std::ifstream is(csv_path);
  if (!is) throw std::runtime_error("ingest_events: cannot open " + csv_path);
  report = IngestReport{};

  struct Row {
    double ts;
    int cell;
    int category;
  };
  std::vector<Row> rows;
  std::string line;
  long long line_no = 0;
  bool header_skipped = false;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header_skipped) {
      header_skipped = true;
      if (line.rfind("timestamp", 0) == 0) continue;  // header row
    }
    std::istringstream ls(line);
    std::string ts_s, lat_s, lon_s, cat_s;
    if (!std::getline(ls, ts_s, ',') || !std::getline(ls, lat_s, ',') ||
        !std::getline(ls, lon_s, ',') || !std::getline(ls, cat_s))
      throw std::runtime_error("ingest_events: malformed row at line " + std::to_string(line_no));
    ++report.total_rows;
    double ts, lat, lon;
    try {
      ts = parse_timestamp(ts_s);
      lat = std::stod(lat_s);
      lon = std::stod(lon_s);
    } catch (const std::exception&) {
      throw std::runtime_error("ingest_events: unparseable row at line " + std::to_string(line_no));
    }
    auto it = grid.categories.find(cat_s);
    if (it == grid.categories.end()) {
      std::string known;
      for (const auto& [name, id] : grid.categories) known += (known.empty() ? "" : ", ") + name;
      throw std::runtime_error("ingest_events: unknown category '" + cat_s + "' at line " +
                               std::to_string(line_no) + "; dictionary: " + known);
    }
    const int cell = grid.cell_of(lat, lon);
    if (cell < 0) {
      ++report.out_of_box;
      continue;
    }
    rows.push_back({ts, cell, it->second});
  }

  ModelSpec spec(grid.K(), grid.M(), d, Link::Identity);
  if (rows.empty()) {
    report.N = 1;
    return EventPanel(spec, IntMatrix::Zero(1 + d, spec.K));
  }
  double t0 = rows.front().ts;
  for (const Row& r : rows) t0 = std::min(t0, r.ts);
  Index N = 0;
  for (const Row& r : rows)
    N = std::max(N, static_cast<Index>(std::floor((r.ts - t0) / grid.bin_seconds)) + 1);
  report.N = N;
  IntMatrix omega = IntMatrix::Zero(N + d, spec.K);
  std::vector<double> first_ts(static_cast<std::size_t>(N) * spec.K,
                               std::numeric_limits<double>::infinity());
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.ts < b.ts; });
  for (const Row& r : rows) {
    const Index bin = static_cast<Index>(std::floor((r.ts - t0) / grid.bin_seconds));
    double& slot = first_ts[static_cast<std::size_t>(bin) * spec.K + r.cell];
    if (std::isinf(slot)) {
      slot = r.ts;
      omega(bin + d, r.cell) = r.category;
      ++report.kept;
    } else {
      ++report.collisions;
    }
  }
  return EventPanel(spec, std::move(omega));
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_text_file: cannot open " + path);
  os << content;
  if (!os) throw std::runtime_error("write_text_file: write failed for " + path);
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

const char* kPalette[] = {"#1f6fb4", "#d1495b", "#3a9e5f", "#8e6cb8", "#e0873a", "#4a4a4a"};

std::string svg_header(const std::string& title) {
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"640\" "
        "height=\"420\" viewBox=\"0 0 640 420\">\n"
     << "<rect width=\"640\" height=\"420\" fill=\"white\"/>\n"
     << "<text x=\"320\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        "font-size=\"15\">"
     << title << "</text>\n"
     << "<rect x=\"60\" y=\"40\" width=\"540\" height=\"330\" fill=\"none\" stroke=\"#999\"/>\n";
  return os.str();
}

}  // namespace

std::string svg_line_chart(const std::vector<std::pair<std::string, std::vector<double>>>& series,
                           const std::string& title) {
  double lo = 0.0, hi = 1e-12;
  std::size_t n = 1;
  for (const auto& [name, ys] : series)
    for (double v : ys) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  for (const auto& [name, ys] : series) n = std::max(n, ys.size());
  const double span = std::max(hi - lo, 1e-12);
  std::ostringstream os;
  os << svg_header(title);
  int si = 0;
  for (const auto& [name, ys] : series) {
    const char* color = kPalette[si % 6];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < ys.size(); ++i) {
      const double x = 60.0 + 540.0 * (n > 1 ? static_cast<double>(i) / (n - 1) : 0.5);
      const double y = 370.0 - 330.0 * (ys[i] - lo) / span;
      os << fmt(x) << "," << fmt(y) << " ";
    }
    os << "\"/>\n<text x=\"70\" y=\"" << 56 + 16 * si << "\" font-family=\"sans-serif\" "
       << "font-size=\"12\" fill=\"" << color << "\">" << name << "</text>\n";
    ++si;
  }
  os << "</svg>\n";
  return os.str();
}

std::string svg_histogram(const std::vector<double>& values, int bins, const std::string& title,
                          double marker) {
  std::ostringstream os;
  os << svg_header(title);
  if (!values.empty() && bins > 0) {
    double lo = values[0], hi = values[0];
    for (double v : values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const double span = std::max(hi - lo, 1e-12);
    std::vector<int> counts(bins, 0);
    for (double v : values)
      ++counts[std::min(bins - 1, static_cast<int>((v - lo) / span * bins))];
    const int cmax = *std::max_element(counts.begin(), counts.end());
    const double w = 540.0 / bins;
    for (int b = 0; b < bins; ++b) {
      const double h = 330.0 * counts[b] / std::max(cmax, 1);
      os << "<rect x=\"" << fmt(60.0 + b * w) << "\" y=\"" << fmt(370.0 - h) << "\" width=\""
         << fmt(w * 0.92) << "\" height=\"" << fmt(h) << "\" fill=\"" << kPalette[0] << "\"/>\n";
    }
    if (!std::isnan(marker)) {
      const double x = 60.0 + 540.0 * (marker - lo) / span;
      os << "<line x1=\"" << fmt(x) << "\" y1=\"40\" x2=\"" << fmt(x)
         << "\" y2=\"370\" stroke=\"" << kPalette[1] << "\" stroke-dasharray=\"4,3\"/>\n";
    }
  }
  os << "</svg>\n";
  return os.str();
}

std::string svg_paired_bars(const std::vector<double>& truth, const std::vector<double>& estimate,
                            const std::string& title) {
  const std::size_t n = std::max(truth.size(), estimate.size());
  double lo = 0.0, hi = 1e-12;
  for (double v : truth) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  for (double v : estimate) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double span = std::max(hi - lo, 1e-12);
  const double zero_y = 370.0 - 330.0 * (0.0 - lo) / span;
  std::ostringstream os;
  os << svg_header(title);
  const double w = n > 0 ? 540.0 / n : 540.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double tv = i < truth.size() ? truth[i] : 0.0;
    const double ev = i < estimate.size() ? estimate[i] : 0.0;
    const double ty = 370.0 - 330.0 * (tv - lo) / span;
    const double ey = 370.0 - 330.0 * (ev - lo) / span;
    os << "<rect x=\"" << fmt(60.0 + i * w) << "\" y=\"" << fmt(std::min(ty, zero_y))
       << "\" width=\"" << fmt(w * 0.42) << "\" height=\"" << fmt(std::abs(zero_y - ty))
       << "\" fill=\"" << kPalette[0] << "\"/>\n"
       << "<rect x=\"" << fmt(60.0 + i * w + w * 0.46) << "\" y=\"" << fmt(std::min(ey, zero_y))
       << "\" width=\"" << fmt(w * 0.42) << "\" height=\"" << fmt(std::abs(zero_y - ey))
       << "\" fill=\"" << kPalette[1] << "\"/>\n";
  }
  os << "<text x=\"70\" y=\"56\" font-family=\"sans-serif\" font-size=\"12\" fill=\""
     << kPalette[0] << "\">true</text>\n"
     << "<text x=\"70\" y=\"72\" font-family=\"sans-serif\" font-size=\"12\" fill=\""
     << kPalette[1] << "\">estimate</text>\n</svg>\n";
  return os.str();
}

}  // namespace stbp
