#include "tlmn/ingest.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <mutex>
#include <numbers>
#include <optional>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "tlmn/error.hpp"
#include "tlmn/random.hpp"

namespace tlmn {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

[[noreturn]] void parse_fail(std::size_t line_no, const std::string& what) {
  throw ParseError("line " + std::to_string(line_no) + ": " + what);
}

double to_double(std::string_view field, std::size_t line_no) {
  const std::string s(field);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v)) {
    parse_fail(line_no, "not a number: '" + s + "'");
  }
  return v;
}

int to_int(std::string_view field, std::size_t line_no) {
  const double v = to_double(field, line_no);
  if (v != std::floor(v) || std::abs(v) > 1e6) parse_fail(line_no, "not an integer: '" + std::string(field) + "'");
  return static_cast<int>(v);
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string yyyymmdd(std::chrono::sys_days d) {
  const std::chrono::year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d%02u%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

class HttplibTransport final : public HttpTransport {
 public:
  HttpResponse get(const std::string& host, const std::string& target) override {
    httplib::Client client("https://" + host);
    client.set_connection_timeout(30);
    client.set_read_timeout(300);
    client.set_follow_location(true);
    auto res = client.Get(target);
    if (!res) throw FetchError("no response from " + host + ": " + httplib::to_string(res.error()));
    return {res->status, res->body};
  }
};

std::mutex& key_mutex(const std::string& key) {
  static std::mutex registry_mutex;
  static std::map<std::string, std::unique_ptr<std::mutex>> registry;
  std::lock_guard lock(registry_mutex);
  auto& m = registry[key];
  if (!m) m = std::make_unique<std::mutex>();
  return *m;
}

// Data rows after the column header line; nullopt when there is no header.
std::optional<std::size_t> count_data_rows(const std::string& body) {
  std::istringstream in(body);
  std::string line;
  bool in_preamble = false;
  bool header_seen = false;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    const auto t = trim(line);
    if (t == "-BEGIN HEADER-") {
      in_preamble = true;
      continue;
    }
    if (in_preamble) {
      if (t == "-END HEADER-") in_preamble = false;
      continue;
    }
    if (t.empty()) continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    ++rows;
  }
  if (!header_seen) return std::nullopt;
  return rows;
}

double seasonal_angle(const CivilTime& c) { return 2.0 * std::numbers::pi * (c.day_of_year - 1) / 365.25; }

}  // namespace

double irradiance_scale(IrradianceUnit unit) {
  switch (unit) {
    case IrradianceUnit::wh_per_m2:
    case IrradianceUnit::w_per_m2:
      return 1.0;
    case IrradianceUnit::kwh_per_m2:
      return 1000.0;
  }
  return 1.0;
}

IrradianceUnit irradiance_unit_from_string(const std::string& s) {
  if (s == "Wh/m2" || s == "Wh/m^2") return IrradianceUnit::wh_per_m2;
  if (s == "W/m2" || s == "W/m^2") return IrradianceUnit::w_per_m2;
  if (s == "kWh/m2" || s == "kWh/m^2") return IrradianceUnit::kwh_per_m2;
  throw ConfigError("unknown irradiance unit '" + s + "' (expected Wh/m2, W/m2 or kWh/m2)");
}

std::string to_string(IrradianceUnit unit) {
  switch (unit) {
    case IrradianceUnit::wh_per_m2:
      return "Wh/m2";
    case IrradianceUnit::w_per_m2:
      return "W/m2";
    case IrradianceUnit::kwh_per_m2:
      return "kWh/m2";
  }
  return "Wh/m2";
}

std::array<std::string, 7> PowerColumnMap::columns() const { return {ghi, dni, dhi, t2m, rh, ws, ps}; }

void PowerColumnMap::validate() const {
  auto cols = columns();
  for (const auto& c : cols) {
    if (c.empty()) throw ConfigError("column map has an empty source name");
    if (c == "timestamp" || c == "YEAR" || c == "MO" || c == "DY" || c == "HR") {
      throw ConfigError("column map uses reserved name '" + c + "'");
    }
  }
  std::sort(cols.begin(), cols.end());
  if (const auto dup = std::adjacent_find(cols.begin(), cols.end()); dup != cols.end()) {
    throw ConfigError("column '" + *dup + "' mapped to more than one field");
  }
  if (!std::isfinite(sentinel)) throw ConfigError("sentinel must be finite");
}

std::vector<GapRun> find_gaps(std::span<const MeteoRecord> records) {
  std::vector<GapRun> gaps;
  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto delta = records[i].timestamp - records[i - 1].timestamp;
    if (delta > kHour) {
      gaps.push_back({records[i - 1].timestamp + kHour, static_cast<std::size_t>(delta / kHour) - 1});
    }
  }
  return gaps;
}

ParsedPower parse_power_csv(std::istream& in, const PowerColumnMap& map) {
  map.validate();
  const auto mapped = map.columns();

  std::string line;
  std::size_t line_no = 0;
  bool in_preamble = false;
  std::optional<std::vector<std::string>> header;

  // Column index for each MeteoRecord field, then the time columns.
  std::array<std::size_t, 7> field_col{};
  std::optional<std::size_t> ts_col, year_col, month_col, day_col, hour_col;

  struct Row {
    MeteoRecord record;
    std::size_t line_no;
  };
  std::vector<Row> rows;
  ParsedPower out;

  while (std::getline(in, line)) {
    ++line_no;
    const auto t = trim(line);
    if (!header && t == "-BEGIN HEADER-") {
      in_preamble = true;
      continue;
    }
    if (in_preamble) {
      if (t == "-END HEADER-") in_preamble = false;
      continue;
    }
    if (t.empty()) continue;

    const auto fields = split_csv(t);
    if (!header) {
      header.emplace();
      std::map<std::string, std::size_t> index;
      for (std::size_t i = 0; i < fields.size(); ++i) {
        const std::string name(fields[i]);
        if (!index.emplace(name, i).second) parse_fail(line_no, "duplicate column '" + name + "'");
        header->push_back(name);
      }
      for (const auto& [name, i] : index) {
        if (name == "timestamp") {
          ts_col = i;
        } else if (name == "YEAR") {
          year_col = i;
        } else if (name == "MO") {
          month_col = i;
        } else if (name == "DY") {
          day_col = i;
        } else if (name == "HR") {
          hour_col = i;
        } else if (std::find(mapped.begin(), mapped.end(), name) == mapped.end()) {
          parse_fail(line_no, "unknown column '" + name + "'");
        }
      }
      for (std::size_t f = 0; f < mapped.size(); ++f) {
        const auto it = index.find(mapped[f]);
        if (it == index.end()) parse_fail(line_no, "missing column '" + mapped[f] + "'");
        field_col[f] = it->second;
      }
      const bool calendar = year_col && month_col && day_col && hour_col;
      const bool any_calendar = year_col || month_col || day_col || hour_col;
      if (ts_col && any_calendar) parse_fail(line_no, "both 'timestamp' and YEAR/MO/DY/HR columns present");
      if (!ts_col && !calendar) parse_fail(line_no, "need a 'timestamp' column or all of YEAR, MO, DY, HR");
      continue;
    }

    if (fields.size() != header->size()) {
      parse_fail(line_no, "expected " + std::to_string(header->size()) + " fields, found " +
                              std::to_string(fields.size()));
    }
    Row row{{}, line_no};
    try {
      if (ts_col) {
        row.record.timestamp = parse_iso8601(fields[*ts_col]);
      } else {
        row.record.timestamp =
            make_utc(to_int(fields[*year_col], line_no), static_cast<unsigned>(to_int(fields[*month_col], line_no)),
                     static_cast<unsigned>(to_int(fields[*day_col], line_no)), to_int(fields[*hour_col], line_no));
      }
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      parse_fail(line_no, e.what());
    }
    if (unix_seconds(row.record.timestamp) % 3600 != 0) {
      parse_fail(line_no, "timestamp " + format_iso8601(row.record.timestamp) + " is not on the hourly grid");
    }
    std::array<double, 7> v{};
    bool missing = false;
    for (std::size_t f = 0; f < v.size(); ++f) {
      v[f] = to_double(fields[field_col[f]], line_no);
      if (v[f] == map.sentinel) missing = true;
    }
    if (missing) {
      ++out.sentinel_rows;
      continue;
    }
    const double scale = irradiance_scale(map.irradiance_unit);
    row.record.ghi = v[0] * scale;
    row.record.dni = v[1] * scale;
    row.record.dhi = v[2] * scale;
    row.record.t2m = v[3];
    row.record.rh = v[4];
    row.record.ws = v[5];
    row.record.ps = v[6];
    try {
      validate_record(row.record);
    } catch (const DataError& e) {
      parse_fail(line_no, e.what());
    }
    rows.push_back(row);
  }
  if (!header) throw ParseError("line " + std::to_string(line_no) + ": no header row");

  std::stable_sort(rows.begin(), rows.end(),
                   [](const Row& a, const Row& b) { return a.record.timestamp < b.record.timestamp; });
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].record.timestamp == rows[i - 1].record.timestamp) {
      parse_fail(rows[i].line_no, "duplicate timestamp " + format_iso8601(rows[i].record.timestamp) +
                                      " (also on line " + std::to_string(rows[i - 1].line_no) + ")");
    }
    if ((rows[i].record.timestamp - rows[i - 1].record.timestamp) % kHour != std::chrono::seconds{0}) {
      parse_fail(rows[i].line_no, "timestamp off the hourly grid");
    }
  }
  out.records.reserve(rows.size());
  for (const auto& r : rows) out.records.push_back(r.record);
  out.gaps = find_gaps(out.records);
  return out;
}

ParsedPower parse_power_csv(const std::filesystem::path& path, const PowerColumnMap& map) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  try {
    return parse_power_csv(in, map);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_records_csv(std::ostream& out, std::span<const MeteoRecord> records, const PowerColumnMap& map) {
  map.validate();
  const double scale = irradiance_scale(map.irradiance_unit);
  out << "timestamp";
  for (const auto& c : map.columns()) out << ',' << c;
  out << '\n';
  for (const auto& r : records) {
    out << format_iso8601(r.timestamp);
    for (double v : {r.ghi / scale, r.dni / scale, r.dhi / scale, r.t2m, r.rh, r.ws, r.ps}) {
      out << ',' << format_double(v);
    }
    out << '\n';
  }
}

void write_records_csv(const std::filesystem::path& path, std::span<const MeteoRecord> records,
                       const PowerColumnMap& map) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  write_records_csv(out, records, map);
  if (!out) throw DataError("write failed: " + path.string());
}

std::unique_ptr<HttpTransport> make_https_transport() { return std::make_unique<HttplibTransport>(); }

std::string power_request_target(const FetchRequest& request) {
  std::string params;
  for (const auto& c : request.columns.columns()) {
    if (!params.empty()) params += ',';
    params += c;
  }
  char coords[96];
  std::snprintf(coords, sizeof coords, "&latitude=%.4f&longitude=%.4f", request.location.latitude(),
                request.location.longitude());
  return "/api/temporal/hourly/point?parameters=" + params + "&community=RE" + coords +
         "&start=" + yyyymmdd(request.start) + "&end=" + yyyymmdd(request.end) +
         "&format=CSV&time-standard=UTC&header=true";
}

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw FetchError("sha256 digest failed");
  }
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

std::filesystem::path cache_path(const FetchRequest& request) {
  return request.cache_dir / ("power-" + sha256_hex(power_request_target(request)) + ".csv");
}

std::filesystem::path fetch_power(const FetchRequest& request, HttpTransport& transport) {
  if (request.end < request.start) throw DomainError("fetch range ends before it starts");
  request.columns.validate();
  const auto target = power_request_target(request);
  const auto path = cache_path(request);

  std::lock_guard lock(key_mutex(path.string()));
  if (std::filesystem::exists(path)) return path;

  const HttpResponse res = transport.get(kPowerHost, target);
  if (res.status != 200) {
    throw FetchError("HTTP " + std::to_string(res.status) + " from " + std::string(kPowerHost) + target);
  }
  const auto expected = static_cast<std::size_t>((request.end - request.start).count() + 1) * 24;
  const auto rows = count_data_rows(res.body);
  if (!rows) throw IntegrityError("response has no CSV header row");
  if (*rows != expected) {
    throw IntegrityError("response has " + std::to_string(*rows) + " data rows, expected " +
                         std::to_string(expected));
  }

  std::filesystem::create_directories(request.cache_dir);
  std::ostringstream suffix;
  suffix << ".tmp-" << std::this_thread::get_id();
  auto tmp = path;
  tmp += suffix.str();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FetchError("cannot write cache file " + tmp.string());
    out << res.body;
    if (!out) throw FetchError("cache write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
  return path;
}

void SyntheticConfig::validate() const {
  if (first_year > last_year) throw ConfigError("synthetic year span is inverted");
  for (std::size_t i = 0; i < transition.size(); ++i) {
    double sum = 0.0;
    for (double p : transition[i]) {
      if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("transition probabilities must lie in [0, 1]");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw ConfigError("transition row " + std::to_string(i) + " sums to " + format_double(sum));
    }
  }
  for (const auto& r : regimes) {
    if (!(r.mean >= kMinTransmissivity && r.mean <= kMaxTransmissivity)) {
      throw ConfigError("regime mean transmissivity outside [0.05, 1.1]");
    }
    if (!(r.volatility >= 0.0)) throw ConfigError("regime volatility must be non-negative");
  }
  if (!(ar_coefficient >= 0.0 && ar_coefficient < 1.0)) throw ConfigError("ar_coefficient must lie in [0, 1)");
  const auto& t = transients;
  if (t.min_hours < 1 || t.max_hours < t.min_hours) throw ConfigError("transient duration range is invalid");
  if (!(t.transmissivity >= kMinTransmissivity && t.transmissivity <= kMaxTransmissivity)) {
    throw ConfigError("transient transmissivity outside [0.05, 1.1]");
  }
  if (!(t.precursor_wind >= 0.0)) throw ConfigError("precursor_wind must be non-negative");
  clear_sky.validate();
}

SyntheticConfig all_clear_config(int first_year, int last_year) {
  SyntheticConfig cfg;
  cfg.first_year = first_year;
  cfg.last_year = last_year;
  cfg.transition = {{{1.0, 0.0, 0.0}, {1.0, 0.0, 0.0}, {1.0, 0.0, 0.0}}};
  cfg.regimes = {{{1.0, 0.0}, {1.0, 0.0}, {1.0, 0.0}}};
  cfg.transients = {};
  return cfg;
}

SyntheticSeries synth_generate(const SyntheticConfig& cfg) {
  cfg.validate();
  const Timestamp begin = make_utc(cfg.first_year, 1, 1);
  const Timestamp end = make_utc(cfg.last_year + 1, 1, 1);
  const auto hours = static_cast<std::size_t>((end - begin) / kHour);
  const auto& loc = cfg.location;

  std::vector<double> clear(hours);
  for (std::size_t i = 0; i < hours; ++i) clear[i] = hourly_clear_sky_ghi(loc, begin + i * kHour, cfg.clear_sky);

  // Transient events use their own stream so the weather does not depend on them.
  Rng rng(cfg.seed);
  Rng event_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

  std::vector<char> in_transient(hours, 0), gust(hours, 0);
  SyntheticSeries out;
  const auto& tc = cfg.transients;
  for (int year = cfg.first_year; year <= cfg.last_year; ++year) {
    const auto y0 = static_cast<std::size_t>((make_utc(year, 1, 1) - begin) / kHour);
    const auto yn = static_cast<std::size_t>(days_in_year(year)) * 24;
    for (std::size_t n = 0, attempts = 0; n < tc.per_year && attempts < 1000 * (tc.per_year + 1); ++attempts) {
      const std::size_t onset = y0 + event_rng.below(yn);
      const std::size_t len = tc.min_hours + event_rng.below(tc.max_hours - tc.min_hours + 1);
      const std::size_t lead = tc.precursor_hours;
      if (onset < lead + 24 || onset + len + 24 >= hours) continue;
      // Both edges in strong daylight, so they register as ramps.
      if (clear[onset] < 400.0 || clear[onset + len] < 400.0) continue;
      bool clash = false;
      for (std::size_t i = onset - lead - 24; i < onset + len + 24; ++i) clash = clash || in_transient[i] || gust[i];
      if (clash) continue;
      for (std::size_t i = onset; i < onset + len; ++i) in_transient[i] = 1;
      for (std::size_t i = onset - lead; i < onset + len - lead; ++i) gust[i] = 1;
      out.transient_edges.push_back(begin + onset * kHour);
      out.transient_edges.push_back(begin + (onset + len) * kHour);
      ++n;
    }
  }
  std::sort(out.transient_edges.begin(), out.transient_edges.end());

  out.records.reserve(hours);
  out.transmissivity.reserve(hours);
  out.regimes.reserve(hours);
  auto regime = SkyRegime::clear;
  double anomaly = 0.0;
  const double phi = cfg.ar_coefficient;
  const double innovation = std::sqrt(1.0 - phi * phi);
  constexpr double kTwoPi = 2.0 * std::numbers::pi;

  for (std::size_t i = 0; i < hours; ++i) {
    const Timestamp t = begin + i * kHour;
    if (i > 0) {
      const auto& row = cfg.transition[static_cast<std::size_t>(regime)];
      const double u = rng.uniform();
      std::size_t next = 0;
      double acc = row[0];
      while (next < 2 && u >= acc) acc += row[++next];
      regime = static_cast<SkyRegime>(next);
    }
    const auto& rp = cfg.regimes[static_cast<std::size_t>(regime)];
    anomaly = phi * anomaly + innovation * rng.normal();
    double tau = std::clamp(rp.mean + rp.volatility * anomaly, kMinTransmissivity, kMaxTransmissivity);
    if (in_transient[i]) tau = tc.transmissivity;

    MeteoRecord r;
    r.timestamp = t;
    r.ghi = tau * clear[i];
    const double diffuse = std::clamp(1.05 - tau, 0.1, 1.0);
    r.dhi = diffuse * r.ghi;
    const double cosz = solar_position(loc, interval_midpoint(t)).cos_zenith;
    r.dni = cosz > 0.05 ? (r.ghi - r.dhi) / cosz : 0.0;

    const CivilTime c = to_civil(t);
    const double season = seasonal_angle(c);
    const double solar_hour = c.hour + 0.5 + loc.longitude() / 15.0;
    const double diurnal = std::sin(kTwoPi * (solar_hour - 9.0) / 24.0);
    const double cloud = 1.0 - std::min(tau, 1.0);
    r.t2m = 29.0 + 6.0 * std::sin(season - 1.2) + 6.0 * diurnal - 3.0 * cloud + 0.5 * rng.normal();
    r.rh = std::clamp(25.0 + 15.0 * std::sin(season - 3.6) - 8.0 * diurnal + 10.0 * cloud + 2.0 * rng.normal(),
                      2.0, 100.0);
    const double regime_wind = regime == SkyRegime::overcast ? 2.0 : (regime == SkyRegime::partly ? 0.5 : 0.0);
    r.ws = std::max(0.0, 3.0 + std::sin(kTwoPi * (solar_hour - 10.0) / 24.0) + regime_wind +
                             0.5 * rng.normal() + (gust[i] ? tc.precursor_wind : 0.0));
    r.ps = 96.8 + 0.3 * std::cos(season) - 0.1 * std::sin(kTwoPi * (solar_hour - 4.0) / 12.0) +
           0.03 * rng.normal();

    out.records.push_back(r);
    out.transmissivity.push_back(tau);
    out.regimes.push_back(regime);
  }
  return out;
}

}  // namespace tlmn
