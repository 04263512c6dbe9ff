#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tlmn/matrix.hpp"
#include "tlmn/solar_geometry.hpp"
#include "tlmn/time.hpp"

namespace tlmn {

/// One hourly row of measured or reanalysis weather. Irradiances are hourly
/// energies (Wh/m^2); `timestamp` marks the start of the hour in UTC.
struct MeteoRecord {
  Timestamp timestamp{};
  double ghi = 0.0;
  double dni = 0.0;
  double dhi = 0.0;
  double t2m = 0.0;  ///< degC
  double rh = 0.0;   ///< percent
  double ws = 0.0;   ///< m/s
  double ps = 0.0;   ///< kPa

  bool operator==(const MeteoRecord&) const = default;
};

/// Throws DataError naming the offending field.
void validate_record(const MeteoRecord& r);

// Column order of the 22-wide feature vector. This order is part of the
// checkpoint contract; bump kFeatureOrderVersion when it changes.
enum class Feature : std::size_t {
  ghi, kt, sza, dni, dhi, t2m, rh, ws, ps,
  d_t2m, d_rh, d_ws, d_ps,
  mean_dni_24h, mean_dhi_24h, tsi,
  sin_m, cos_m, sin_d, cos_d, sin_h, cos_h,
};

inline constexpr std::size_t kFeatureCount = 22;
inline constexpr std::string_view kFeatureOrderVersion = "tlmn-features-v1";
inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames{
    "ghi", "kt", "sza", "dni", "dhi", "t2m", "rh", "ws", "ps",
    "d_t2m", "d_rh", "d_ws", "d_ps",
    "mean_dni_24h", "mean_dhi_24h", "tsi",
    "sin_m", "cos_m", "sin_d", "cos_d", "sin_h", "cos_h"};

constexpr std::size_t index_of(Feature f) { return static_cast<std::size_t>(f); }

using FeatureVector = std::array<double, kFeatureCount>;

inline constexpr double kKtMax = 1.2;

/// Kt = ghi / ghi_clear clamped to [0, 1.2]; 0 when ghi_clear < 1.
double clearness_index(double ghi, double ghi_clear);

struct TemporalEmbedding {
  double sin_m, cos_m, sin_d, cos_d, sin_h, cos_h;
};

/// Month, day-of-year (period 365.25) and hour on the unit circle. Takes a
/// local-time instant (see to_local).
TemporalEmbedding temporal_embedding(Timestamp local_time);

/// out[0] = 0, out[i] = x[i] - x[i-1]. Throws DomainError when empty.
std::vector<double> first_difference(std::span<const double> series);

/// Trailing mean over the last min(i+1, window) values.
std::vector<double> rolling_mean(std::span<const double> series, std::size_t window);

struct FeatureOptions {
  double utc_offset_hours = 2.0;  ///< local standard time for the embeddings
  std::size_t memory_window = 24;

  bool operator==(const FeatureOptions&) const = default;
};

/// One FeatureVector per record. Records must be hourly and gap-free;
/// otherwise throws DataError naming the first gap.
std::vector<FeatureVector> build_features(std::span<const MeteoRecord> records,
                                          const GeoLocation& loc,
                                          const ClearSkyParams& params,
                                          const FeatureOptions& options = {});

/// Per-feature z-score statistics. `exempt` features (kt and the six
/// sin/cos embeddings) pass through unchanged.
struct NormStats {
  std::array<double, kFeatureCount> mean{};
  std::array<double, kFeatureCount> stddev{};
  std::array<bool, kFeatureCount> exempt{};

  FeatureVector apply(const FeatureVector& fv) const;
  FeatureVector invert(const FeatureVector& fv) const;

  bool operator==(const NormStats&) const = default;
};

/// Identity statistics (mean 0, std 1) with the standard exemptions.
NormStats identity_norm_stats();

/// Fit on the training partition only. Needs at least 100 vectors. A
/// zero-variance feature gets std 1 and a message appended to `warnings`.
NormStats fit_normalization(std::span<const FeatureVector> features,
                            std::vector<std::string>* warnings = nullptr);

inline FeatureVector apply_normalization(const FeatureVector& fv, const NormStats& stats) {
  return stats.apply(fv);
}

struct YearRange {
  int first = 0;
  int last = 0;

  bool contains(int year) const noexcept { return year >= first && year <= last; }
  bool operator==(const YearRange&) const = default;
};

/// Chronological partition by UTC calendar year.
struct SplitSpec {
  YearRange train{2010, 2015};
  YearRange test{2020, 2024};

  /// Throws ConfigError for inverted or overlapping ranges.
  void validate() const;
  bool operator==(const SplitSpec&) const = default;
};

/// Celestial inputs per window row: cos(SZA), GHI_clear / S0, Kt.
inline constexpr std::size_t kCelestialDim = 3;

struct FeatureWindow {
  Matrix features;   ///< window_len x 22, normalized
  Matrix celestial;  ///< window_len x 3, raw physical values
  Timestamp target_time{};
  double target_ghi = 0.0;
  double target_ghi_clear = 0.0;
};

/// Records with their raw features and hourly clear-sky anchors, aligned by
/// index. May contain gaps between contiguous segments.
struct FeatureSeries {
  std::vector<MeteoRecord> records;
  std::vector<FeatureVector> features;
  std::vector<double> ghi_clear;
  double solar_constant = 1361.0;
};

/// Splits `records` (sorted) into gap-free runs, builds features per run and
/// concatenates. Rolling memory and differences restart after every gap.
FeatureSeries build_feature_series(std::span<const MeteoRecord> records,
                                   const GeoLocation& loc, const ClearSkyParams& params,
                                   const FeatureOptions& options = {});

/// Raw feature rows whose timestamps fall inside `years`.
std::vector<FeatureVector> features_in_range(const FeatureSeries& series, YearRange years);

/// Every gap-free window of `window_len` hours followed by its one-hour-ahead
/// target, normalized with `stats`.
std::vector<FeatureWindow> make_windows(const FeatureSeries& series, const NormStats& stats,
                                        std::size_t window_len = 24);

struct WindowSets {
  std::vector<FeatureWindow> train;
  std::vector<FeatureWindow> test;
};

/// As above, then assigns each window to the partition containing all of its
/// timestamps; windows touching both (or neither) are dropped.
WindowSets make_windows(const FeatureSeries& series, const NormStats& stats,
                        const SplitSpec& split, std::size_t window_len = 24);

}  // namespace tlmn
