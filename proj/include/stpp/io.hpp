#ifndef STPP_IO_HPP
#define STPP_IO_HPP

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "stpp/core.hpp"

namespace stpp {

// ---------------------------------------------------------------------------
// Numbers and times

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"')) s.remove_suffix(1);
  return s;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

/// Days since 1970-01-01 of a proleptic Gregorian date.
constexpr long long days_from_civil(long long y, unsigned m, unsigned d) noexcept {
  y -= m <= 2;
  const long long era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<long long>(doe) - 719468;
}

/// Seconds since the Unix epoch from epoch seconds or ISO-8601
/// (YYYY-MM-DD[THH:MM[:SS[.fff]]][Z|+HH:MM|-HH:MM]; a space may replace T).
inline std::optional<double> parse_time(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (auto v = parse_double(s)) return v;
  auto num = [&](std::size_t pos, std::size_t len) -> std::optional<long long> {
    if (pos + len > s.size()) return std::nullopt;
    long long v = 0;
    for (std::size_t i = pos; i < pos + len; ++i) {
      if (s[i] < '0' || s[i] > '9') return std::nullopt;
      v = v * 10 + (s[i] - '0');
    }
    return v;
  };
  const auto y = num(0, 4), mo = num(5, 2), d = num(8, 2);
  if (!y || !mo || !d || s.size() < 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  if (*mo < 1 || *mo > 12 || *d < 1 || *d > 31) return std::nullopt;
  double secs = 0.0;
  std::size_t pos = 10;
  if (pos < s.size() && (s[pos] == 'T' || s[pos] == ' ')) {
    const auto hh = num(pos + 1, 2), mm = num(pos + 4, 2);
    if (!hh || !mm || s[pos + 3] != ':' || *hh > 23 || *mm > 59) return std::nullopt;
    secs = static_cast<double>(*hh * 3600 + *mm * 60);
    pos += 6;
    if (pos < s.size() && s[pos] == ':') {
      const auto ss = num(pos + 1, 2);
      if (!ss || *ss > 60) return std::nullopt;
      secs += static_cast<double>(*ss);
      pos += 3;
      if (pos < s.size() && (s[pos] == '.' || s[pos] == ',')) {
        std::size_t e = pos + 1;
        while (e < s.size() && s[e] >= '0' && s[e] <= '9') ++e;
        if (e == pos + 1) return std::nullopt;
        std::string frac = "0." + std::string(s.substr(pos + 1, e - pos - 1));
        secs += *parse_double(frac);
        pos = e;
      }
    }
  }
  if (pos < s.size()) {
    if (s[pos] == 'Z' && pos + 1 == s.size()) {
      ++pos;
    } else if ((s[pos] == '+' || s[pos] == '-') && pos + 6 == s.size() && s[pos + 3] == ':') {
      const auto oh = num(pos + 1, 2), om = num(pos + 4, 2);
      if (!oh || !om) return std::nullopt;
      const double off = static_cast<double>(*oh * 3600 + *om * 60);
      secs -= s[pos] == '+' ? off : -off;
      pos = s.size();
    } else {
      return std::nullopt;
    }
  }
  return static_cast<double>(days_from_civil(*y, static_cast<unsigned>(*mo), static_cast<unsigned>(*d))) * 86400.0 +
         secs;
}

// ---------------------------------------------------------------------------
// Projection and ingestion

enum class ProjectionMode { equirectangular, degrees };

/// lon/lat (degrees) to planar coordinates. Equirectangular uses
/// x1 = R cos(lat0) lon, x2 = R lat (radians); degrees mode keeps raw degrees.
struct Projection {
  ProjectionMode mode = ProjectionMode::equirectangular;
  double radius = 6371.0;  // km
  double lat0 = 0.0;       // degrees

  Vec2 apply(double lon, double lat) const noexcept {
    if (mode == ProjectionMode::degrees) return {lon, lat};
    constexpr double rad = std::numbers::pi / 180.0;
    return {radius * std::cos(lat0 * rad) * lon * rad, radius * lat * rad};
  }
};

/// Declared observation window in input units (degrees or planar) and times
/// in seconds since the epoch (geographic) or raw time units (planar).
struct InputWindow {
  double lo1 = 0.0, hi1 = 1.0, lo2 = 0.0, hi2 = 1.0;
  double t0 = 0.0, t1 = 1.0;
};

struct IngestOptions {
  Projection projection{};
  std::optional<InputWindow> window;  // bounding box of the data when absent
  double time_unit = 1.0;             // input seconds per output time unit (geographic input)
  bool skip_bad = false;
  DuplicatePolicy duplicates = DuplicatePolicy::reject;
  std::uint64_t jitter_seed = 0;
};

struct IngestResult {
  SpaceTimePattern pattern;
  bool geographic = false;
  std::size_t skipped = 0;
  std::vector<std::string> warnings;
};

namespace detail {
inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i)
    if (i == line.size() || line[i] == ',') {
      out.push_back(trim(line.substr(start, i - start)));
      start = i + 1;
    }
  return out;
}
}  // namespace detail

/// Reads `lon,lat,time` (geographic) or `x1,x2,t` (planar) CSV. Geographic
/// input is projected at the window's mid-latitude and times are shifted so
/// the window starts at 0 and divided by time_unit. Planar input is taken
/// as is.
inline IngestResult ingest(std::istream& in, const IngestOptions& opts) {
  if (!(opts.time_unit > 0.0)) throw Error("ingest: time_unit must be positive");
  std::string line;
  std::size_t lineno = 0;
  IngestResult res;
  if (!std::getline(in, line)) throw Error("ingest: missing header line");
  ++lineno;
  auto header = detail::split_csv(line);
  for (auto& h : header)
    if (!h.empty() && static_cast<unsigned char>(h.front()) == 0xEF && h.size() >= 3) h.remove_prefix(3);  // BOM
  auto col = [&](std::initializer_list<std::string_view> names) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i)
      for (auto n : names)
        if (header[i] == n) return i;
    return std::nullopt;
  };
  std::size_t c1, c2, ct;
  if (auto a = col({"lon", "longitude"}), b = col({"lat", "latitude"}), c = col({"time", "t"}); a && b && c) {
    res.geographic = true;
    c1 = *a, c2 = *b, ct = *c;
  } else if (auto x = col({"x1"}), y = col({"x2"}), t = col({"t"}); x && y && t) {
    c1 = *x, c2 = *y, ct = *t;
  } else {
    throw Error("ingest: header must contain lon,lat,time or x1,x2,t");
  }
  const std::size_t need = std::max({c1, c2, ct}) + 1;

  struct Raw {
    double a, b, t;
    std::size_t line;
  };
  std::vector<Raw> rows;
  auto bad = [&](const std::string& why) {
    const std::string msg = "ingest: line " + std::to_string(lineno) + ": " + why;
    if (!opts.skip_bad) throw Error(msg);
    ++res.skipped;
    if (res.skipped <= 20) res.warnings.push_back(msg);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto f = detail::split_csv(line);
    if (f.size() < need) {
      bad("expected at least " + std::to_string(need) + " fields");
      continue;
    }
    const auto a = parse_double(f[c1]), b = parse_double(f[c2]);
    const auto t = res.geographic ? parse_time(f[ct]) : parse_double(f[ct]);
    if (!a || !b || !t) {
      bad("unparseable value");
      continue;
    }
    rows.push_back({*a, *b, *t, lineno});
  }
  if (res.skipped > 20) res.warnings.push_back(std::to_string(res.skipped) + " malformed rows skipped in total");

  InputWindow iw;
  if (opts.window) {
    iw = *opts.window;
  } else {
    if (rows.empty()) throw Error("ingest: empty input needs a declared window");
    iw = {rows[0].a, rows[0].a, rows[0].b, rows[0].b, rows[0].t, rows[0].t};
    for (const auto& r : rows) {
      iw.lo1 = std::min(iw.lo1, r.a), iw.hi1 = std::max(iw.hi1, r.a);
      iw.lo2 = std::min(iw.lo2, r.b), iw.hi2 = std::max(iw.hi2, r.b);
      iw.t0 = std::min(iw.t0, r.t), iw.t1 = std::max(iw.t1, r.t);
    }
    auto pad = [](double& lo, double& hi) {
      const double d = hi > lo ? 1e-9 * (hi - lo) : 1e-9 * std::max(1.0, std::abs(lo));
      lo -= d;
      hi += d;
    };
    pad(iw.lo1, iw.hi1);
    pad(iw.lo2, iw.hi2);
    pad(iw.t0, iw.t1);
  }
  if (!(iw.hi1 > iw.lo1) || !(iw.hi2 > iw.lo2) || !(iw.t1 > iw.t0)) throw Error("ingest: degenerate window");

  Projection proj = opts.projection;
  Window window;
  std::vector<SpaceTimePoint> pts;
  pts.reserve(rows.size());
  if (res.geographic) {
    proj.lat0 = 0.5 * (iw.lo2 + iw.hi2);
    const Vec2 lo = proj.apply(iw.lo1, iw.lo2), hi = proj.apply(iw.hi1, iw.hi2);
    window = Window(Rect{lo.x1, hi.x1, lo.x2, hi.x2}, Interval{0.0, (iw.t1 - iw.t0) / opts.time_unit});
  } else {
    window = Window(Rect{iw.lo1, iw.hi1, iw.lo2, iw.hi2}, Interval{iw.t0, iw.t1});
  }
  for (const auto& r : rows) {
    const bool inside = r.a >= iw.lo1 && r.a <= iw.hi1 && r.b >= iw.lo2 && r.b <= iw.hi2 && r.t >= iw.t0 && r.t <= iw.t1;
    SpaceTimePoint y;
    if (res.geographic) {
      const Vec2 x = proj.apply(r.a, r.b);
      y = {x.x1, x.x2, (r.t - iw.t0) / opts.time_unit};
    } else {
      y = {r.a, r.b, r.t};
    }
    if (!inside || !window.contains(y) || y.t < 0.0) {
      lineno = r.line;
      bad("row outside the declared window");
      continue;
    }
    pts.push_back(y);
  }
  if (pts.empty()) res.warnings.push_back("input contains no events");
  res.pattern = SpaceTimePattern(std::move(pts), window, PatternOptions{opts.duplicates, opts.jitter_seed});
  return res;
}

inline IngestResult ingest(const std::string& path, const IngestOptions& opts) {
  std::ifstream in(path);
  if (!in) throw Error("ingest: cannot open " + path);
  return ingest(in, opts);
}

// ---------------------------------------------------------------------------
// Emission

inline void write_pattern_csv(std::ostream& out, const SpaceTimePattern& pattern) {
  out << "x1,x2,t\n";
  for (const auto& y : pattern.points())
    out << format_double(y.x1) << ',' << format_double(y.x2) << ',' << format_double(y.t) << '\n';
}

inline void write_pattern_csv(std::ostream& out, const SpatialPattern& pattern) {
  out << "x1,x2\n";
  for (const auto& x : pattern.points) out << format_double(x.x1) << ',' << format_double(x.x2) << '\n';
}

/// In-mask cells of a field: `t,value`, `x1,x2,value` or `x1,x2,t,value` at
/// cell centres.
inline void write_field_csv(std::ostream& out, const ScalarField& field) {
  const GridSpec& g = field.grid();
  switch (g.kind) {
    case GridKind::temporal: out << "t,value\n"; break;
    case GridKind::spatial: out << "x1,x2,value\n"; break;
    case GridKind::spacetime: out << "x1,x2,t,value\n"; break;
  }
  for (std::size_t it = 0; it < g.nt(); ++it)
    for (std::size_t iy = 0; iy < g.ny(); ++iy)
      for (std::size_t ix = 0; ix < g.nx(); ++ix) {
        if (!g.in_mask_spatial(ix, iy)) continue;
        const double v = field[g.flat(ix, iy, it)];
        if (g.kind != GridKind::temporal)
          out << format_double(g.x1.center(ix)) << ',' << format_double(g.x2.center(iy)) << ',';
        if (g.kind != GridKind::spatial) out << format_double(g.t.center(it)) << ',';
        out << format_double(v) << '\n';
      }
}

}  // namespace stpp

#endif  // STPP_IO_HPP
