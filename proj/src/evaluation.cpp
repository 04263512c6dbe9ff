#include "tlmn/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "tlmn/error.hpp"
#include "tlmn/features.hpp"

namespace tlmn {

namespace {

using nlohmann::json;

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json metrics_json(const MetricSet& m) {
  return {{"count", m.count}, {"rmse", m.rmse}, {"mae", m.mae}, {"pearson_r", optional_number(m.pearson)}};
}

// Pearson correlation of two equally long sequences; empty when undefined.
std::optional<double> correlation(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  if (n < 2) return std::nullopt;
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) return std::nullopt;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

bool by_time(const ForecastRecord& a, const ForecastRecord& b) { return a.timestamp < b.timestamp; }

void open_csv(std::ofstream& out, const std::filesystem::path& path) {
  out.open(path, std::ios::trunc);
  if (!out) throw EvaluationError("cannot write " + path.string());
}

}  // namespace

double rmse(std::span<const ForecastRecord> records) {
  if (records.empty()) throw EvaluationError("rmse of an empty record set");
  double ss = 0.0;
  for (const auto& r : records) ss += (r.ghi_pred - r.ghi_meas) * (r.ghi_pred - r.ghi_meas);
  return std::sqrt(ss / static_cast<double>(records.size()));
}

double mae(std::span<const ForecastRecord> records) {
  if (records.empty()) throw EvaluationError("mae of an empty record set");
  double s = 0.0;
  for (const auto& r : records) s += std::abs(r.ghi_pred - r.ghi_meas);
  return s / static_cast<double>(records.size());
}

double pearson(std::span<const ForecastRecord> records) {
  if (records.size() < 2) throw EvaluationError("pearson needs at least two records");
  std::vector<double> p, m;
  p.reserve(records.size());
  m.reserve(records.size());
  for (const auto& r : records) {
    p.push_back(r.ghi_pred);
    m.push_back(r.ghi_meas);
  }
  const auto c = correlation(p, m);
  if (!c) throw EvaluationError("pearson undefined: zero variance series");
  return *c;
}

std::vector<ForecastRecord> daylight_only(std::span<const ForecastRecord> records) {
  std::vector<ForecastRecord> out;
  for (const auto& r : records) {
    if (r.ghi_clear > 0.0) out.push_back(r);
  }
  return out;
}

MetricSet compute_metrics(std::span<const ForecastRecord> records) {
  MetricSet m;
  m.count = records.size();
  if (records.empty()) return m;
  m.rmse = rmse(records);
  m.mae = mae(records);
  try {
    m.pearson = pearson(records);
  } catch (const EvaluationError&) {
    m.pearson.reset();
  }
  return m;
}

NightNoise night_noise_audit(std::span<const ForecastRecord> records) {
  NightNoise n;
  for (const auto& r : records) {
    if (r.ghi_clear != 0.0) continue;
    ++n.night_hours;
    if (r.ghi_pred != 0.0) {
      ++n.violating_hours;
      n.max_night_pred = std::max(n.max_night_pred, std::abs(r.ghi_pred));
    }
  }
  return n;
}

PhaseLagResult phase_lag(std::span<const ForecastRecord> records, const PhaseLagOptions& options) {
  if (options.search_window < 0 || options.correlation_window < 2) {
    throw EvaluationError("phase lag needs search_window >= 0 and correlation_window >= 2");
  }
  PhaseLagResult result;
  const std::size_t n = records.size();
  const long half = options.correlation_window / 2;
  const long w = options.search_window;

  // run_start[i]: first index of the contiguous hourly run containing i.
  std::vector<std::size_t> run_start(n, 0), run_end(n, n);
  for (std::size_t i = 1; i < n; ++i) {
    run_start[i] = records[i].timestamp - records[i - 1].timestamp == kHour ? run_start[i - 1] : i;
  }
  for (std::size_t i = n; i-- > 0;) {
    run_end[i] = (i + 1 < n && run_start[i + 1] == run_start[i]) ? run_end[i + 1] : i + 1;
  }

  std::vector<double> pred(static_cast<std::size_t>(options.correlation_window));
  std::vector<double> meas(pred.size());
  for (std::size_t e = 1; e < n; ++e) {
    if (run_start[e] != run_start[e - 1]) continue;
    const double ramp = records[e].ghi_meas - records[e - 1].ghi_meas;
    if (!(std::abs(ramp) > options.ramp_threshold)) continue;
    if (!options.only_at.empty() &&
        std::find(options.only_at.begin(), options.only_at.end(), records[e].timestamp) ==
            options.only_at.end()) {
      continue;
    }
    const long first = static_cast<long>(e) - half;
    const long last = first + options.correlation_window - 1;
    if (first - w < static_cast<long>(run_start[e]) || last + w >= static_cast<long>(run_end[e])) {
      continue;
    }
    for (long i = first; i <= last; ++i) meas[static_cast<std::size_t>(i - first)] = records[static_cast<std::size_t>(i)].ghi_meas;

    std::optional<int> best_lag;
    double best_corr = 0.0;
    // Scan 0, +1, -1, +2, -2, ... so ties keep the smallest |lag|.
    for (long step = 0; step <= 2 * w; ++step) {
      const long lag = step == 0 ? 0 : (step % 2 == 1 ? (step + 1) / 2 : -(step / 2));
      for (long i = first; i <= last; ++i) {
        pred[static_cast<std::size_t>(i - first)] = records[static_cast<std::size_t>(i + lag)].ghi_pred;
      }
      const auto c = correlation(pred, meas);
      if (c && (!best_lag || *c > best_corr)) {
        best_corr = *c;
        best_lag = static_cast<int>(lag);
      }
    }
    if (best_lag) result.events.push_back({records[e].timestamp, ramp, *best_lag, best_corr});
  }

  result.events_found = !result.events.empty();
  if (result.events_found) {
    std::vector<int> lags;
    for (const auto& ev : result.events) lags.push_back(ev.lag);
    std::sort(lags.begin(), lags.end());
    const std::size_t m = lags.size();
    result.median_lag_hours =
        m % 2 == 1 ? lags[m / 2] : 0.5 * (static_cast<double>(lags[m / 2 - 1]) + lags[m / 2]);
  }
  return result;
}

SkyClass classify_day(double daily_kt) {
  if (daily_kt > 0.70) return SkyClass::clear;
  if (daily_kt >= 0.30) return SkyClass::partly_cloudy;
  return SkyClass::overcast;
}

std::vector<StratumRow> kt_stratified_rmse(std::span<const ForecastRecord> records,
                                           double utc_offset_hours) {
  struct Day {
    double meas = 0.0;
    double clear = 0.0;
    std::vector<const ForecastRecord*> daylight;
  };
  std::map<long long, Day> days;
  for (const auto& r : records) {
    if (!(r.ghi_clear > 0.0)) continue;
    const auto local = to_local(r.timestamp, utc_offset_hours);
    const long long key = std::chrono::floor<std::chrono::days>(local).time_since_epoch().count();
    Day& d = days[key];
    d.meas += r.ghi_meas;
    d.clear += r.ghi_clear;
    d.daylight.push_back(&r);
  }

  std::vector<StratumRow> rows(3);
  rows[0].name = "Clear Sky";
  rows[0].kt_range = "KT > 0.70";
  rows[1].name = "Partly Cloudy";
  rows[1].kt_range = "0.30 <= KT <= 0.70";
  rows[2].name = "Overcast/Dust";
  rows[2].kt_range = "KT < 0.30";
  std::array<double, 3> ss{};
  for (const auto& [_, d] : days) {
    auto& row = rows[static_cast<std::size_t>(classify_day(d.meas / d.clear))];
    const auto idx = static_cast<std::size_t>(&row - rows.data());
    ++row.days;
    for (const auto* r : d.daylight) {
      ss[idx] += (r->ghi_pred - r->ghi_meas) * (r->ghi_pred - r->ghi_meas);
      ++row.hours;
    }
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!days.empty()) rows[i].day_fraction = static_cast<double>(rows[i].days) / static_cast<double>(days.size());
    if (rows[i].hours > 0) rows[i].rmse = std::sqrt(ss[i] / static_cast<double>(rows[i].hours));
  }
  return rows;
}

DiurnalEnvelope diurnal_envelope(std::span<const ForecastRecord> records, double utc_offset_hours) {
  DiurnalEnvelope env;
  std::array<double, 24> sum_pred{}, sum_meas{};
  for (std::size_t h = 0; h < 24; ++h) env.rows[h].hour = static_cast<int>(h);
  for (const auto& r : records) {
    const auto h = static_cast<std::size_t>(to_civil(to_local(r.timestamp, utc_offset_hours)).hour);
    ++env.rows[h].count;
    sum_pred[h] += r.ghi_pred;
    sum_meas[h] += r.ghi_meas;
  }
  for (std::size_t h = 0; h < 24; ++h) {
    auto& row = env.rows[h];
    if (row.count == 0) continue;
    row.mean_pred = sum_pred[h] / static_cast<double>(row.count);
    row.mean_meas = sum_meas[h] / static_cast<double>(row.count);
    env.max_abs_difference = std::max(env.max_abs_difference, std::abs(row.mean_pred - row.mean_meas));
  }
  return env;
}

std::vector<CumulativePoint> cumulative_abs_error(std::span<const ForecastRecord> records) {
  std::vector<CumulativePoint> out;
  out.reserve(records.size());
  double total = 0.0;
  for (const auto& r : records) {
    total += std::abs(r.ghi_pred - r.ghi_meas);
    out.push_back({r.timestamp, total});
  }
  return out;
}

std::vector<YearRmse> yearly_rmse(std::span<const ForecastRecord> records) {
  std::map<int, std::pair<double, std::size_t>> acc;
  for (const auto& r : records) {
    auto& [ss, n] = acc[to_civil(r.timestamp).year];
    ss += (r.ghi_pred - r.ghi_meas) * (r.ghi_pred - r.ghi_meas);
    ++n;
  }
  std::vector<YearRmse> out;
  for (const auto& [year, v] : acc) {
    out.push_back({year, v.second, std::sqrt(v.first / static_cast<double>(v.second))});
  }
  return out;
}

std::vector<ForecastRecord> persistence_forecast(std::span<const ForecastRecord> records) {
  std::vector<ForecastRecord> out;
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].timestamp - records[i - 1].timestamp != kHour) continue;
    ForecastRecord f = records[i];
    f.ghi_pred = records[i - 1].ghi_meas;
    f.alpha = clearness_index(f.ghi_pred, f.ghi_clear);
    out.push_back(f);
  }
  return out;
}

std::vector<ForecastRecord> smart_persistence_forecast(std::span<const ForecastRecord> records) {
  std::vector<ForecastRecord> out;
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].timestamp - records[i - 1].timestamp != kHour) continue;
    ForecastRecord f = records[i];
    f.alpha = clearness_index(records[i - 1].ghi_meas, records[i - 1].ghi_clear);
    f.ghi_pred = f.alpha * f.ghi_clear;
    out.push_back(f);
  }
  return out;
}

std::vector<HistogramBin> residual_histogram(std::span<const ForecastRecord> records,
                                             double bin_width) {
  if (!(bin_width > 0.0)) throw EvaluationError("histogram bin width must be positive");
  std::map<long long, std::size_t> bins;
  for (const auto& r : records) {
    if (!(r.ghi_clear > 0.0)) continue;
    ++bins[static_cast<long long>(std::floor((r.ghi_pred - r.ghi_meas) / bin_width))];
  }
  std::vector<HistogramBin> out;
  for (const auto& [k, c] : bins) {
    out.push_back({static_cast<double>(k) * bin_width, static_cast<double>(k + 1) * bin_width, c});
  }
  return out;
}

EvalReport evaluate(std::vector<ForecastRecord> records, const EvalOptions& options) {
  if (records.empty()) throw EvaluationError("no forecast records to evaluate");
  std::sort(records.begin(), records.end(), by_time);
  const auto day = daylight_only(records);

  EvalReport rep;
  rep.all_hours = compute_metrics(records);
  rep.daylight = compute_metrics(day);
  rep.night_noise = night_noise_audit(records);
  rep.phase_lag = phase_lag(records, options.phase);
  rep.kt_strata = kt_stratified_rmse(records, options.utc_offset_hours);
  rep.diurnal = diurnal_envelope(records, options.utc_offset_hours);
  rep.cumulative = cumulative_abs_error(records);
  rep.yearly = yearly_rmse(records);

  const auto naive = persistence_forecast(records);
  const auto smart = smart_persistence_forecast(records);
  rep.persistence_all_hours = compute_metrics(naive);
  rep.persistence_daylight = compute_metrics(daylight_only(naive));
  rep.smart_persistence_all_hours = compute_metrics(smart);
  rep.smart_persistence_daylight = compute_metrics(daylight_only(smart));
  return rep;
}

nlohmann::json report_to_json(const EvalReport& r) {
  json strata = json::array();
  for (const auto& s : r.kt_strata) {
    strata.push_back({{"class", s.name},
                      {"kt_range", s.kt_range},
                      {"days", s.days},
                      {"day_fraction", s.day_fraction},
                      {"hours", s.hours},
                      {"rmse", optional_number(s.rmse)}});
  }
  json events = json::array();
  for (const auto& e : r.phase_lag.events) {
    events.push_back({{"time", format_iso8601(e.time)},
                      {"ramp", e.ramp},
                      {"lag_hours", e.lag},
                      {"correlation", e.correlation}});
  }
  json envelope = json::array();
  for (const auto& row : r.diurnal.rows) {
    envelope.push_back({{"hour", row.hour},
                        {"count", row.count},
                        {"mean_pred", row.mean_pred},
                        {"mean_meas", row.mean_meas}});
  }
  json yearly = json::array();
  for (const auto& y : r.yearly) yearly.push_back({{"year", y.year}, {"count", y.count}, {"rmse", y.rmse}});

  return {{"all_hours", metrics_json(r.all_hours)},
          {"daylight", metrics_json(r.daylight)},
          {"night_noise",
           {{"night_hours", r.night_noise.night_hours},
            {"violating_hours", r.night_noise.violating_hours},
            {"max_night_pred", r.night_noise.max_night_pred}}},
          {"phase_lag",
           {{"events_found", r.phase_lag.events_found},
            {"event_count", r.phase_lag.events.size()},
            {"median_lag_hours", r.phase_lag.median_lag_hours},
            {"events", events}}},
          {"kt_strata", strata},
          {"diurnal_envelope", {{"max_abs_difference", r.diurnal.max_abs_difference}, {"hours", envelope}}},
          {"cumulative_abs_error_total",
           r.cumulative.empty() ? 0.0 : r.cumulative.back().cumulative_abs_error},
          {"yearly_rmse", yearly},
          {"baselines",
           {{"persistence", {{"all_hours", metrics_json(r.persistence_all_hours)},
                             {"daylight", metrics_json(r.persistence_daylight)}}},
            {"smart_persistence", {{"all_hours", metrics_json(r.smart_persistence_all_hours)},
                                   {"daylight", metrics_json(r.smart_persistence_daylight)}}}}}};
}

void write_figure_csvs(const EvalReport& report, std::span<const ForecastRecord> records,
                       const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  char line[256];
  std::ofstream out;

  open_csv(out, dir / "envelope.csv");
  out << "hour,count,mean_pred,mean_meas\n";
  for (const auto& row : report.diurnal.rows) {
    std::snprintf(line, sizeof line, "%d,%zu,%.10g,%.10g\n", row.hour, row.count, row.mean_pred, row.mean_meas);
    out << line;
  }
  out.close();

  open_csv(out, dir / "cumulative.csv");
  out << "timestamp,cumulative_abs_error\n";
  for (const auto& p : report.cumulative) {
    std::snprintf(line, sizeof line, ",%.10g\n", p.cumulative_abs_error);
    out << format_iso8601(p.time) << line;
  }
  out.close();

  open_csv(out, dir / "yearly_rmse.csv");
  out << "year,count,rmse\n";
  for (const auto& y : report.yearly) {
    std::snprintf(line, sizeof line, "%d,%zu,%.10g\n", y.year, y.count, y.rmse);
    out << line;
  }
  out.close();

  open_csv(out, dir / "residual_histogram.csv");
  out << "lower,upper,count\n";
  for (const auto& b : residual_histogram(records)) {
    std::snprintf(line, sizeof line, "%.10g,%.10g,%zu\n", b.lower, b.upper, b.count);
    out << line;
  }
  out.close();

  open_csv(out, dir / "forecasts.csv");
  out << "timestamp,ghi_pred,ghi_meas,ghi_clear,alpha\n";
  for (const auto& r : records) {
    std::snprintf(line, sizeof line, ",%.10g,%.10g,%.10g,%.10g\n", r.ghi_pred, r.ghi_meas, r.ghi_clear, r.alpha);
    out << format_iso8601(r.timestamp) << line;
  }
}

}  // namespace tlmn
