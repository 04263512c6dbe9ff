#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tlmn/time.hpp"

namespace tlmn {

struct ForecastRecord {
  Timestamp timestamp{};
  double ghi_pred = 0.0;
  double ghi_meas = 0.0;
  double ghi_clear = 0.0;
  double alpha = 0.0;

  bool operator==(const ForecastRecord&) const = default;
};

double rmse(std::span<const ForecastRecord> records);
double mae(std::span<const ForecastRecord> records);
/// Throws EvaluationError with fewer than two records or zero variance.
double pearson(std::span<const ForecastRecord> records);

/// Records with ghi_clear > 0.
std::vector<ForecastRecord> daylight_only(std::span<const ForecastRecord> records);

struct MetricSet {
  std::size_t count = 0;
  double rmse = 0.0;
  double mae = 0.0;
  std::optional<double> pearson;  ///< empty when undefined
};

MetricSet compute_metrics(std::span<const ForecastRecord> records);

struct NightNoise {
  std::size_t night_hours = 0;
  std::size_t violating_hours = 0;
  double max_night_pred = 0.0;
};

/// Hours with ghi_clear == 0 whose prediction is not exactly zero.
NightNoise night_noise_audit(std::span<const ForecastRecord> records);

struct PhaseLagOptions {
  double ramp_threshold = 150.0;  ///< Wh/m^2 per hour
  int search_window = 6;          ///< hours either side
  int correlation_window = 12;    ///< hours, centered on the event
  std::vector<Timestamp> only_at;  ///< when non-empty, score only ramps at these hours
};

struct LagEvent {
  Timestamp time{};
  double ramp = 0.0;
  int lag = 0;
  double correlation = 0.0;
};

struct PhaseLagResult {
  bool events_found = false;
  double median_lag_hours = 0.0;
  std::vector<LagEvent> events;
};

/// Ramp events are |meas[t] - meas[t-1]| > threshold. For each, the lag l
/// maximizing corr(pred[t+l], meas[t]) over the window is reported; ties go
/// to the smaller |l|. Positive lag means the forecast trails the measurement.
/// Events whose full scan would leave a contiguous run are skipped.
PhaseLagResult phase_lag(std::span<const ForecastRecord> records, const PhaseLagOptions& options = {});

enum class SkyClass { clear, partly_cloudy, overcast };

struct StratumRow {
  std::string name;
  std::string kt_range;
  std::size_t days = 0;
  double day_fraction = 0.0;
  std::size_t hours = 0;
  std::optional<double> rmse;  ///< daylight RMSE; empty when no days
};

/// Daily KT = sum(meas) / sum(clear) over local days; >0.70 clear,
/// [0.30, 0.70] partly cloudy, <0.30 overcast.
SkyClass classify_day(double daily_kt);
std::vector<StratumRow> kt_stratified_rmse(std::span<const ForecastRecord> records,
                                           double utc_offset_hours = 2.0);

struct DiurnalRow {
  int hour = 0;
  std::size_t count = 0;
  double mean_pred = 0.0;
  double mean_meas = 0.0;
};

struct DiurnalEnvelope {
  std::array<DiurnalRow, 24> rows{};
  double max_abs_difference = 0.0;
};

DiurnalEnvelope diurnal_envelope(std::span<const ForecastRecord> records,
                                 double utc_offset_hours = 2.0);

struct CumulativePoint {
  Timestamp time{};
  double cumulative_abs_error = 0.0;
};

/// Running sum of |pred - meas|; records must be chronological.
std::vector<CumulativePoint> cumulative_abs_error(std::span<const ForecastRecord> records);

struct YearRmse {
  int year = 0;
  std::size_t count = 0;
  double rmse = 0.0;
};

/// RMSE grouped by calendar year (UTC).
std::vector<YearRmse> yearly_rmse(std::span<const ForecastRecord> records);

/// pred(t) = meas(t - 1h). Records without a predecessor exactly one hour
/// earlier are dropped.
std::vector<ForecastRecord> persistence_forecast(std::span<const ForecastRecord> records);

/// pred(t) = Kt(t - 1h) * clear(t), with the nocturnal Kt guard.
std::vector<ForecastRecord> smart_persistence_forecast(std::span<const ForecastRecord> records);

struct HistogramBin {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
};

/// Daylight residuals (pred - meas) in fixed-width bins.
std::vector<HistogramBin> residual_histogram(std::span<const ForecastRecord> records,
                                             double bin_width = 10.0);

struct EvalOptions {
  double utc_offset_hours = 2.0;
  PhaseLagOptions phase{};
};

struct EvalReport {
  MetricSet all_hours;
  MetricSet daylight;
  NightNoise night_noise;
  PhaseLagResult phase_lag;
  std::vector<StratumRow> kt_strata;
  DiurnalEnvelope diurnal;
  std::vector<CumulativePoint> cumulative;
  std::vector<YearRmse> yearly;
  MetricSet persistence_all_hours;
  MetricSet persistence_daylight;
  MetricSet smart_persistence_all_hours;
  MetricSet smart_persistence_daylight;
};

/// Sorts by timestamp and computes every metric.
EvalReport evaluate(std::vector<ForecastRecord> records, const EvalOptions& options = {});

nlohmann::json report_to_json(const EvalReport& report);

/// envelope.csv, cumulative.csv, yearly_rmse.csv, residual_histogram.csv and
/// forecasts.csv in `dir`.
void write_figure_csvs(const EvalReport& report, std::span<const ForecastRecord> records,
                       const std::filesystem::path& dir);

}  // namespace tlmn
