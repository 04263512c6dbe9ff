#include "tlmn/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "tlmn/error.hpp"

namespace tlmn {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

bool is_exempt(std::size_t i) {
  return i == index_of(Feature::kt) || i >= index_of(Feature::sin_m);
}

}  // namespace

void validate_record(const MeteoRecord& r) {
  auto fail = [&](const char* what) {
    throw DataError(std::string(what) + " at " + format_iso8601(r.timestamp));
  };
  if (!(r.ghi >= 0.0) || !(r.dni >= 0.0) || !(r.dhi >= 0.0)) fail("negative irradiance");
  if (!(r.rh >= 0.0 && r.rh <= 100.0)) fail("relative humidity outside [0, 100]");
  if (!(r.ws >= 0.0)) fail("negative wind speed");
  if (!(r.ps > 0.0)) fail("non-positive surface pressure");
  if (!std::isfinite(r.t2m) || !std::isfinite(r.ghi) || !std::isfinite(r.dni) ||
      !std::isfinite(r.dhi) || !std::isfinite(r.ws) || !std::isfinite(r.ps)) {
    fail("non-finite value");
  }
}

double clearness_index(double ghi, double ghi_clear) {
  if (!(ghi_clear >= 1.0)) return 0.0;
  return std::clamp(ghi / ghi_clear, 0.0, kKtMax);
}

TemporalEmbedding temporal_embedding(Timestamp local_time) {
  const CivilTime c = to_civil(local_time);
  const double month_angle = kTwoPi * (c.month - 1) / 12.0;
  const double day_angle = kTwoPi * (c.day_of_year - 1) / 365.25;
  const double hour_angle = kTwoPi * c.hour / 24.0;
  return {std::sin(month_angle), std::cos(month_angle), std::sin(day_angle),
          std::cos(day_angle),   std::sin(hour_angle),  std::cos(hour_angle)};
}

std::vector<double> first_difference(std::span<const double> series) {
  if (series.empty()) throw DomainError("first_difference of an empty series");
  std::vector<double> out(series.size(), 0.0);
  for (std::size_t i = 1; i < series.size(); ++i) out[i] = series[i] - series[i - 1];
  return out;
}

std::vector<double> rolling_mean(std::span<const double> series, std::size_t window) {
  if (window < 1) throw DomainError("rolling_mean window must be >= 1");
  std::vector<double> out(series.size());
  // Direct summation per output keeps the result independent of history
  // length; windows are small.
  for (std::size_t i = 0; i < series.size(); ++i) {
    const std::size_t first = i + 1 >= window ? i + 1 - window : 0;
    double sum = 0.0;
    for (std::size_t j = first; j <= i; ++j) sum += series[j];
    out[i] = sum / static_cast<double>(i - first + 1);
  }
  return out;
}

std::vector<FeatureVector> build_features(std::span<const MeteoRecord> records,
                                          const GeoLocation& loc,
                                          const ClearSkyParams& params,
                                          const FeatureOptions& options) {
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].timestamp - records[i - 1].timestamp != kHour) {
      throw DataError("non-contiguous records: gap after " +
                      format_iso8601(records[i - 1].timestamp) + " (next record " +
                      format_iso8601(records[i].timestamp) + ")");
    }
  }
  const std::size_t n = records.size();
  std::vector<FeatureVector> out(n);
  if (n == 0) return out;

  auto column = [&](auto member) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = records[i].*member;
    return v;
  };
  const auto d_t2m = first_difference(column(&MeteoRecord::t2m));
  const auto d_rh = first_difference(column(&MeteoRecord::rh));
  const auto d_ws = first_difference(column(&MeteoRecord::ws));
  const auto d_ps = first_difference(column(&MeteoRecord::ps));
  const auto mean_dni = rolling_mean(column(&MeteoRecord::dni), options.memory_window);
  const auto mean_dhi = rolling_mean(column(&MeteoRecord::dhi), options.memory_window);

  for (std::size_t i = 0; i < n; ++i) {
    const MeteoRecord& r = records[i];
    const Timestamp mid = interval_midpoint(r.timestamp);
    const SolarPosition pos = solar_position(loc, mid);
    const double clear = clear_sky_ghi(loc, mid, params);
    const TemporalEmbedding emb =
        temporal_embedding(to_local(r.timestamp, options.utc_offset_hours));

    FeatureVector& f = out[i];
    f[index_of(Feature::ghi)] = r.ghi;
    f[index_of(Feature::kt)] = clearness_index(r.ghi, clear);
    f[index_of(Feature::sza)] = pos.zenith;
    f[index_of(Feature::dni)] = r.dni;
    f[index_of(Feature::dhi)] = r.dhi;
    f[index_of(Feature::t2m)] = r.t2m;
    f[index_of(Feature::rh)] = r.rh;
    f[index_of(Feature::ws)] = r.ws;
    f[index_of(Feature::ps)] = r.ps;
    f[index_of(Feature::d_t2m)] = d_t2m[i];
    f[index_of(Feature::d_rh)] = d_rh[i];
    f[index_of(Feature::d_ws)] = d_ws[i];
    f[index_of(Feature::d_ps)] = d_ps[i];
    f[index_of(Feature::mean_dni_24h)] = mean_dni[i];
    f[index_of(Feature::mean_dhi_24h)] = mean_dhi[i];
    f[index_of(Feature::tsi)] = extraterrestrial_horizontal(loc, mid, params.solar_constant);
    f[index_of(Feature::sin_m)] = emb.sin_m;
    f[index_of(Feature::cos_m)] = emb.cos_m;
    f[index_of(Feature::sin_d)] = emb.sin_d;
    f[index_of(Feature::cos_d)] = emb.cos_d;
    f[index_of(Feature::sin_h)] = emb.sin_h;
    f[index_of(Feature::cos_h)] = emb.cos_h;
  }
  return out;
}

FeatureVector NormStats::apply(const FeatureVector& fv) const {
  FeatureVector out = fv;
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    if (!exempt[i]) out[i] = (fv[i] - mean[i]) / stddev[i];
  }
  return out;
}

FeatureVector NormStats::invert(const FeatureVector& fv) const {
  FeatureVector out = fv;
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    if (!exempt[i]) out[i] = fv[i] * stddev[i] + mean[i];
  }
  return out;
}

NormStats identity_norm_stats() {
  NormStats s;
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    s.mean[i] = 0.0;
    s.stddev[i] = 1.0;
    s.exempt[i] = is_exempt(i);
  }
  return s;
}

NormStats fit_normalization(std::span<const FeatureVector> features,
                            std::vector<std::string>* warnings) {
  if (features.size() < 100) {
    throw DomainError("fit_normalization needs at least 100 vectors, got " +
                      std::to_string(features.size()));
  }
  NormStats s = identity_norm_stats();
  const double n = static_cast<double>(features.size());
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    if (s.exempt[i]) continue;
    double sum = 0.0;
    for (const auto& f : features) sum += f[i];
    const double mean = sum / n;
    double ss = 0.0;
    for (const auto& f : features) ss += (f[i] - mean) * (f[i] - mean);
    double sd = std::sqrt(ss / n);
    if (!(sd > 1e-12)) {
      if (warnings) {
        warnings->push_back("feature '" + std::string(kFeatureNames[i]) +
                            "' has zero variance; using std 1");
      }
      sd = 1.0;
    }
    s.mean[i] = mean;
    s.stddev[i] = sd;
  }
  return s;
}

void SplitSpec::validate() const {
  if (train.first > train.last || test.first > test.last) {
    throw ConfigError("split year ranges must satisfy first <= last");
  }
  if (!(train.last < test.first)) {
    throw ConfigError("train range " + std::to_string(train.first) + "-" +
                      std::to_string(train.last) + " must end before test range " +
                      std::to_string(test.first) + "-" + std::to_string(test.last));
  }
}

FeatureSeries build_feature_series(std::span<const MeteoRecord> records,
                                   const GeoLocation& loc, const ClearSkyParams& params,
                                   const FeatureOptions& options) {
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].timestamp <= records[i - 1].timestamp) {
      throw DataError("records not strictly increasing at " +
                      format_iso8601(records[i].timestamp));
    }
  }
  FeatureSeries series;
  series.solar_constant = params.solar_constant;
  series.records.assign(records.begin(), records.end());
  series.features.reserve(records.size());
  series.ghi_clear.reserve(records.size());

  std::size_t begin = 0;
  while (begin < records.size()) {
    std::size_t end = begin + 1;
    while (end < records.size() && records[end].timestamp - records[end - 1].timestamp == kHour) {
      ++end;
    }
    const auto run = records.subspan(begin, end - begin);
    auto feats = build_features(run, loc, params, options);
    series.features.insert(series.features.end(), feats.begin(), feats.end());
    for (const auto& r : run) series.ghi_clear.push_back(hourly_clear_sky_ghi(loc, r.timestamp, params));
    begin = end;
  }
  return series;
}

std::vector<FeatureVector> features_in_range(const FeatureSeries& series, YearRange years) {
  std::vector<FeatureVector> out;
  for (std::size_t i = 0; i < series.records.size(); ++i) {
    if (years.contains(to_civil(series.records[i].timestamp).year)) {
      out.push_back(series.features[i]);
    }
  }
  return out;
}

std::vector<FeatureWindow> make_windows(const FeatureSeries& series, const NormStats& stats,
                                        std::size_t window_len) {
  if (window_len < 1) throw DomainError("window length must be >= 1");
  const std::size_t n = series.records.size();
  if (series.features.size() != n || series.ghi_clear.size() != n) {
    throw ShapeError("feature series columns are not aligned");
  }
  std::vector<FeatureWindow> out;
  if (n <= window_len) return out;

  std::vector<FeatureVector> normalized(n);
  for (std::size_t i = 0; i < n; ++i) normalized[i] = stats.apply(series.features[i]);

  const auto span_hours = kHour * static_cast<long long>(window_len);
  out.reserve(n - window_len);
  for (std::size_t start = 0; start + window_len < n; ++start) {
    const std::size_t target = start + window_len;
    if (series.records[target].timestamp - series.records[start].timestamp != span_hours) {
      continue;  // straddles a gap
    }
    FeatureWindow w;
    w.features = Matrix(window_len, kFeatureCount);
    w.celestial = Matrix(window_len, kCelestialDim);
    for (std::size_t r = 0; r < window_len; ++r) {
      const std::size_t src = start + r;
      std::copy(normalized[src].begin(), normalized[src].end(), w.features.row(r).begin());
      const FeatureVector& raw = series.features[src];
      w.celestial(r, 0) = std::cos(raw[index_of(Feature::sza)] * std::numbers::pi / 180.0);
      w.celestial(r, 1) = series.ghi_clear[src] / series.solar_constant;
      w.celestial(r, 2) = raw[index_of(Feature::kt)];
    }
    w.target_time = series.records[target].timestamp;
    w.target_ghi = series.records[target].ghi;
    w.target_ghi_clear = series.ghi_clear[target];
    out.push_back(std::move(w));
  }
  return out;
}

WindowSets make_windows(const FeatureSeries& series, const NormStats& stats,
                        const SplitSpec& split, std::size_t window_len) {
  split.validate();
  WindowSets sets;
  for (auto& w : make_windows(series, stats, window_len)) {
    const int first_year =
        to_civil(w.target_time - kHour * static_cast<long long>(window_len)).year;
    const int last_year = to_civil(w.target_time).year;
    if (split.train.contains(first_year) && split.train.contains(last_year)) {
      sets.train.push_back(std::move(w));
    } else if (split.test.contains(first_year) && split.test.contains(last_year)) {
      sets.test.push_back(std::move(w));
    }
  }
  return sets;
}

}  // namespace tlmn
