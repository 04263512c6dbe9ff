#pragma once

#include <array>
#include <limits>
#include <optional>

#include "tlmn/time.hpp"

namespace tlmn {

/// Observer position. Construction validates the ranges.
class GeoLocation {
 public:
  GeoLocation(double latitude_deg, double longitude_deg, double altitude_m = 0.0);

  double latitude() const noexcept { return latitude_; }
  double longitude() const noexcept { return longitude_; }
  double altitude() const noexcept { return altitude_; }

  bool operator==(const GeoLocation&) const = default;

 private:
  double latitude_;
  double longitude_;
  double altitude_;
};

/// Omdurman, Sudan.
inline GeoLocation omdurman() { return GeoLocation(15.65, 32.48, 380.0); }

struct SolarPosition {
  double declination = 0.0;  ///< radians
  double hour_angle = 0.0;   ///< radians, zero at true solar noon, positive afternoon
  double zenith = 0.0;       ///< degrees in [0, 180]
  double cos_zenith = 1.0;
};

/// Ineichen-Perez inputs. `monthly_turbidity`, when present, overrides the
/// constant turbidity by calendar month (UTC).
struct ClearSkyParams {
  double linke_turbidity = 3.5;
  double solar_constant = 1361.0;
  std::optional<std::array<double, 12>> monthly_turbidity;

  void validate() const;
  double turbidity_for_month(unsigned month) const;

  bool operator==(const ClearSkyParams&) const = default;
};

inline constexpr double kNightAirMass = std::numeric_limits<double>::infinity();

/// Spencer series, day angle 2*pi*(day-1)/365. Radians.
double solar_declination(int day_of_year);

/// Spencer series for (r0/r)^2.
double eccentricity_correction(int day_of_year);

/// Low-precision solar ephemeris (Astronomical Almanac), accurate to about
/// 0.01 degrees in zenith for 1950-2100. Refraction is not applied.
SolarPosition solar_position(const GeoLocation& loc, Timestamp t);

/// Equation of time in minutes (apparent minus mean solar time).
double equation_of_time(Timestamp t);

/// The instant of upper transit closest to `near` (within one second).
Timestamp true_solar_noon(const GeoLocation& loc, Timestamp near);

/// Kasten-Young (1989). Returns kNightAirMass for zenith >= 90 degrees.
double relative_air_mass(double zenith_deg);

/// Ineichen-Perez global clear-sky irradiance for an explicit geometry.
/// Returns exactly 0.0 for zenith >= 90.
double ineichen_perez_ghi(double zenith_deg, double altitude_m,
                          double linke_turbidity, double dni_extra);

/// Instantaneous clear-sky GHI at `t` (W/m^2). Exactly 0.0 below the horizon
/// and never above extraterrestrial_horizontal at the same instant.
double clear_sky_ghi(const GeoLocation& loc, Timestamp t, const ClearSkyParams& params);

/// S0 * E0 * max(cos(zenith), 0).
double extraterrestrial_horizontal(const GeoLocation& loc, Timestamp t,
                                   double solar_constant);

/// Hourly values are stamped at the start of the hour and evaluated at the
/// interval midpoint; Wh/m^2 over the hour equals the midpoint W/m^2.
inline Timestamp interval_midpoint(Timestamp hour_start) {
  return hour_start + std::chrono::minutes{30};
}

inline double hourly_clear_sky_ghi(const GeoLocation& loc, Timestamp hour_start,
                                   const ClearSkyParams& params) {
  return clear_sky_ghi(loc, interval_midpoint(hour_start), params);
}

inline double hourly_extraterrestrial_horizontal(const GeoLocation& loc,
                                                 Timestamp hour_start,
                                                 double solar_constant) {
  return extraterrestrial_horizontal(loc, interval_midpoint(hour_start), solar_constant);
}

}  // namespace tlmn
