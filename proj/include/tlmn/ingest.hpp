#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tlmn/features.hpp"
#include "tlmn/solar_geometry.hpp"
#include "tlmn/time.hpp"

namespace tlmn {

/// Irradiance unit of the source file. Hourly means in W/m^2 equal hourly
/// energies in Wh/m^2, so only kWh/m^2 needs scaling.
enum class IrradianceUnit { wh_per_m2, w_per_m2, kwh_per_m2 };

double irradiance_scale(IrradianceUnit unit);
IrradianceUnit irradiance_unit_from_string(const std::string& s);
std::string to_string(IrradianceUnit unit);

/// Source column for every MeteoRecord field.
struct PowerColumnMap {
  std::string ghi = "ALLSKY_SFC_SW_DWN";
  std::string dni = "ALLSKY_SFC_SW_DNI";
  std::string dhi = "ALLSKY_SFC_SW_DIFF";
  std::string t2m = "T2M";
  std::string rh = "RH2M";
  std::string ws = "WS2M";
  std::string ps = "PS";
  double sentinel = -999.0;
  IrradianceUnit irradiance_unit = IrradianceUnit::wh_per_m2;

  /// Column names in MeteoRecord field order.
  std::array<std::string, 7> columns() const;
  /// Throws ConfigError for empty or duplicate names.
  void validate() const;
  bool operator==(const PowerColumnMap&) const = default;
};

struct GapRun {
  Timestamp first{};  ///< first missing hour
  std::size_t hours = 0;

  bool operator==(const GapRun&) const = default;
};

struct ParsedPower {
  std::vector<MeteoRecord> records;  ///< sorted, valid rows only
  std::vector<GapRun> gaps;          ///< missing hours between first and last record
  std::size_t sentinel_rows = 0;
};

/// Hourly CSV with either YEAR,MO,DY,HR columns or an ISO-8601 `timestamp`
/// column, plus every mapped field. An optional -BEGIN HEADER- ... -END HEADER-
/// preamble is skipped. Rows holding the sentinel in any field become gaps.
ParsedPower parse_power_csv(std::istream& in, const PowerColumnMap& map = {});
ParsedPower parse_power_csv(const std::filesystem::path& path, const PowerColumnMap& map = {});

/// Missing-hour runs in a sorted record sequence.
std::vector<GapRun> find_gaps(std::span<const MeteoRecord> records);

/// `timestamp` plus the mapped columns, full precision; parse_power_csv reads
/// it back unchanged.
void write_records_csv(std::ostream& out, std::span<const MeteoRecord> records,
                       const PowerColumnMap& map = {});
void write_records_csv(const std::filesystem::path& path, std::span<const MeteoRecord> records,
                       const PowerColumnMap& map = {});

struct HttpResponse {
  int status = 0;
  std::string body;
};

class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  /// `target` is the path plus query string. Throws FetchError when no
  /// response was received at all.
  virtual HttpResponse get(const std::string& host, const std::string& target) = 0;
};

std::unique_ptr<HttpTransport> make_https_transport();

inline constexpr const char* kPowerHost = "power.larc.nasa.gov";

struct FetchRequest {
  GeoLocation location = omdurman();
  std::chrono::sys_days start{};
  std::chrono::sys_days end{};  ///< inclusive
  PowerColumnMap columns{};
  std::filesystem::path cache_dir = ".tlmn-cache";
};

/// Path and query of the hourly point request.
std::string power_request_target(const FetchRequest& request);

/// Lowercase hex SHA-256 of the request target.
std::string sha256_hex(const std::string& data);

std::filesystem::path cache_path(const FetchRequest& request);

/// Returns the cached file, downloading it first on a miss. Calls for the
/// same cache key are serialized; the file appears atomically.
std::filesystem::path fetch_power(const FetchRequest& request, HttpTransport& transport);

enum class SkyRegime : std::size_t { clear, partly, overcast };

struct RegimeParams {
  double mean = 0.95;
  double volatility = 0.03;

  bool operator==(const RegimeParams&) const = default;
};

/// Abrupt dust or cloud events. The wind-speed anomaly leads the
/// transmissivity drop and recovery by `precursor_hours`, as a gust front would.
struct TransientConfig {
  std::size_t per_year = 0;
  std::size_t min_hours = 2;
  std::size_t max_hours = 6;
  double transmissivity = 0.15;
  std::size_t precursor_hours = 1;
  double precursor_wind = 8.0;  ///< m/s added to ws

  bool operator==(const TransientConfig&) const = default;
};

inline constexpr double kMinTransmissivity = 0.05;
inline constexpr double kMaxTransmissivity = 1.1;

struct SyntheticConfig {
  GeoLocation location = omdurman();
  int first_year = 2020;
  int last_year = 2022;
  std::uint64_t seed = 42;
  /// Hourly transition probabilities, rows indexed by the current regime.
  std::array<std::array<double, 3>, 3> transition{{{0.97, 0.025, 0.005},
                                                   {0.06, 0.90, 0.04},
                                                   {0.03, 0.07, 0.90}}};
  std::array<RegimeParams, 3> regimes{{{0.95, 0.03}, {0.65, 0.08}, {0.30, 0.08}}};
  double ar_coefficient = 0.8;
  ClearSkyParams clear_sky{};
  TransientConfig transients{};

  /// Throws ConfigError.
  void validate() const;
  bool operator==(const SyntheticConfig&) const = default;
};

/// Single regime, transmissivity exactly 1, no noise and no transients.
SyntheticConfig all_clear_config(int first_year, int last_year);

struct SyntheticSeries {
  std::vector<MeteoRecord> records;
  std::vector<double> transmissivity;
  std::vector<SkyRegime> regimes;
  std::vector<Timestamp> transient_edges;  ///< onset and recovery hours
};

SyntheticSeries synth_generate(const SyntheticConfig& cfg);

}  // namespace tlmn
