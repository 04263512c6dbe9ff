#include "tlmn/solar_geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "tlmn/error.hpp"

namespace tlmn {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kDegToRad = kPi / 180.0;
constexpr double kRadToDeg = 180.0 / kPi;

void check_day(int day_of_year) {
  if (day_of_year < 1 || day_of_year > 366) {
    throw DomainError("day_of_year " + std::to_string(day_of_year) + " outside [1, 366]");
  }
}

double day_angle(int day_of_year) {
  return 2.0 * kPi * (day_of_year - 1) / 365.0;
}

double wrap_degrees(double deg) {
  deg = std::fmod(deg, 360.0);
  if (deg < 0.0) deg += 360.0;
  return deg;
}

// (-180, 180]
double wrap_signed_degrees(double deg) {
  deg = wrap_degrees(deg);
  return deg > 180.0 ? deg - 360.0 : deg;
}

struct Ephemeris {
  double declination;      // rad
  double right_ascension;  // deg
  double mean_longitude;   // deg
  double gmst_deg;
};

Ephemeris ephemeris(Timestamp t) {
  // Days from J2000.0 (UT; Delta-T is below the model accuracy).
  const double n = static_cast<double>(unix_seconds(t)) / 86400.0 + 2440587.5 - 2451545.0;
  const double mean_lon = wrap_degrees(280.460 + 0.9856474 * n);
  const double mean_anom = wrap_degrees(357.528 + 0.9856003 * n) * kDegToRad;
  const double ecl_lon =
      (mean_lon + 1.915 * std::sin(mean_anom) + 0.020 * std::sin(2.0 * mean_anom)) * kDegToRad;
  const double obliquity = (23.439 - 4.0e-7 * n) * kDegToRad;

  Ephemeris e;
  e.right_ascension =
      wrap_degrees(std::atan2(std::cos(obliquity) * std::sin(ecl_lon), std::cos(ecl_lon)) * kRadToDeg);
  e.declination = std::asin(std::sin(obliquity) * std::sin(ecl_lon));
  e.mean_longitude = mean_lon;
  e.gmst_deg = wrap_degrees((18.697374558 + 24.06570982441908 * n) * 15.0);
  return e;
}

}  // namespace

GeoLocation::GeoLocation(double latitude_deg, double longitude_deg, double altitude_m)
    : latitude_(latitude_deg), longitude_(longitude_deg), altitude_(altitude_m) {
  if (!(latitude_deg >= -90.0 && latitude_deg <= 90.0)) {
    throw DomainError("latitude " + std::to_string(latitude_deg) + " outside [-90, 90]");
  }
  if (!(longitude_deg >= -180.0 && longitude_deg <= 180.0)) {
    throw DomainError("longitude " + std::to_string(longitude_deg) + " outside [-180, 180]");
  }
  if (!(altitude_m >= -430.0) || !std::isfinite(altitude_m)) {
    throw DomainError("altitude " + std::to_string(altitude_m) + " below -430 m");
  }
}

void ClearSkyParams::validate() const {
  auto check_tl = [](double tl) {
    if (!(tl >= 1.0 && tl <= 10.0)) {
      throw DomainError("Linke turbidity " + std::to_string(tl) + " outside [1, 10]");
    }
  };
  check_tl(linke_turbidity);
  if (monthly_turbidity) {
    for (double tl : *monthly_turbidity) check_tl(tl);
  }
  if (!(solar_constant > 0.0) || !std::isfinite(solar_constant)) {
    throw DomainError("solar constant must be positive");
  }
}

double ClearSkyParams::turbidity_for_month(unsigned month) const {
  if (monthly_turbidity && month >= 1 && month <= 12) {
    return (*monthly_turbidity)[month - 1];
  }
  return linke_turbidity;
}

double solar_declination(int day_of_year) {
  check_day(day_of_year);
  const double g = day_angle(day_of_year);
  return 0.006918 - 0.399912 * std::cos(g) + 0.070257 * std::sin(g) -
         0.006758 * std::cos(2.0 * g) + 0.000907 * std::sin(2.0 * g) -
         0.002697 * std::cos(3.0 * g) + 0.00148 * std::sin(3.0 * g);
}

double eccentricity_correction(int day_of_year) {
  check_day(day_of_year);
  const double g = day_angle(day_of_year);
  return 1.000110 + 0.034221 * std::cos(g) + 0.001280 * std::sin(g) +
         0.000719 * std::cos(2.0 * g) + 0.000077 * std::sin(2.0 * g);
}

SolarPosition solar_position(const GeoLocation& loc, Timestamp t) {
  const Ephemeris e = ephemeris(t);
  const double hour_angle_deg =
      wrap_signed_degrees(e.gmst_deg + loc.longitude() - e.right_ascension);

  SolarPosition p;
  p.declination = e.declination;
  p.hour_angle = hour_angle_deg * kDegToRad;
  const double lat = loc.latitude() * kDegToRad;
  const double cz = std::clamp(std::sin(lat) * std::sin(p.declination) +
                                   std::cos(lat) * std::cos(p.declination) * std::cos(p.hour_angle),
                               -1.0, 1.0);
  p.zenith = std::acos(cz) * kRadToDeg;
  // Recompute from the rounded angle so the pair agrees to machine precision.
  p.cos_zenith = std::cos(p.zenith * kDegToRad);
  return p;
}

double equation_of_time(Timestamp t) {
  const Ephemeris e = ephemeris(t);
  return 4.0 * wrap_signed_degrees(e.mean_longitude - 0.0057183 - e.right_ascension);
}

Timestamp true_solar_noon(const GeoLocation& loc, Timestamp near) {
  Timestamp t = near;
  for (int i = 0; i < 6; ++i) {
    const double ha_deg = solar_position(loc, t).hour_angle * kRadToDeg;
    const auto step = std::chrono::seconds{std::llround(-ha_deg / 15.0 * 3600.0)};
    if (step.count() == 0) break;
    t += step;
  }
  return t;
}

double relative_air_mass(double zenith_deg) {
  if (!(zenith_deg < 90.0)) return kNightAirMass;
  const double z = std::max(zenith_deg, 0.0);
  return 1.0 / (std::cos(z * kDegToRad) + 0.50572 * std::pow(96.07995 - z, -1.6364));
}

double ineichen_perez_ghi(double zenith_deg, double altitude_m, double linke_turbidity,
                          double dni_extra) {
  if (!(zenith_deg < 90.0)) return 0.0;
  const double cos_z = std::cos(zenith_deg * kDegToRad);
  const double air_mass = relative_air_mass(zenith_deg) * std::exp(-altitude_m / 8434.5);
  const double fh1 = std::exp(-altitude_m / 8000.0);
  const double fh2 = std::exp(-altitude_m / 1250.0);
  const double cg1 = 5.09e-5 * altitude_m + 0.868;
  const double cg2 = 3.92e-5 * altitude_m + 0.0387;
  const double ghi =
      cg1 * dni_extra * cos_z * std::exp(-cg2 * air_mass * (fh1 + fh2 * (linke_turbidity - 1.0)));
  return std::max(ghi, 0.0);
}

double clear_sky_ghi(const GeoLocation& loc, Timestamp t, const ClearSkyParams& params) {
  const SolarPosition pos = solar_position(loc, t);
  if (pos.zenith >= 90.0) return 0.0;
  const CivilTime c = to_civil(t);
  const double dni_extra = params.solar_constant * eccentricity_correction(c.day_of_year);
  const double ghi = ineichen_perez_ghi(pos.zenith, loc.altitude(),
                                        params.turbidity_for_month(c.month), dni_extra);
  // cg1 exceeds 1 above ~2.6 km; keep the top-of-atmosphere ceiling.
  return std::min(ghi, dni_extra * std::max(pos.cos_zenith, 0.0));
}

double extraterrestrial_horizontal(const GeoLocation& loc, Timestamp t, double solar_constant) {
  const SolarPosition pos = solar_position(loc, t);
  if (pos.zenith >= 90.0) return 0.0;
  const CivilTime c = to_civil(t);
  return solar_constant * eccentricity_correction(c.day_of_year) * std::max(pos.cos_zenith, 0.0);
}

}  // namespace tlmn
