#pragma once

// Circular two-body orbit, orbital frame, low-precision Sun ephemeris,
// cylindrical Earth shadow and Greenwich mean sidereal time.

#include "geoadcs/math.hpp"

#include <charconv>
#include <cstdio>
#include <cstdint>
#include <string>
#include <string_view>

namespace geoadcs {

inline constexpr double kMuEarth = 3.986004418e14;  // m^3/s^2
inline constexpr double kEarthRadius = 6378137.0;    // m, equatorial (orbit geometry, shadow)
inline constexpr double kSecondsPerDay = 86400.0;
inline constexpr double kJ2000 = 2451545.0;

/// A UTC instant stored as a Julian date split into day and fraction to
/// keep sub-second resolution. Leap seconds are ignored.
struct Epoch {
    double jd_day = kJ2000;  // integer-or-half Julian day number
    double day_fraction = 0.0;

    double jd() const { return jd_day + day_fraction; }

    /// Julian date `seconds` after this epoch.
    double jd_after(double seconds) const { return jd_day + (day_fraction + seconds / kSecondsPerDay); }

    /// Julian centuries since J2000.0 at `seconds` after this epoch.
    double centuries_after(double seconds) const {
        return ((jd_day - kJ2000) + (day_fraction + seconds / kSecondsPerDay)) / 36525.0;
    }

    /// Decimal year at `seconds` after this epoch, as used for Gauss
    /// coefficient interpolation.
    double decimal_year_after(double seconds) const;

    static Epoch from_calendar(int year, int month, int day, int hour, int minute, double second);

    /// Parses "YYYY-MM-DDThh:mm:ssZ" (fractional seconds allowed).
    static Epoch parse(std::string_view iso);

    std::string iso() const;
};

namespace detail {

// Howard Hinnant's days_from_civil.
constexpr std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const auto yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m > 2 ? m - 3 : m + 9) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

struct Civil {
    std::int64_t y;
    unsigned m, d;
};

constexpr Civil civil_from_days(std::int64_t z) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const auto doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp < 10 ? mp + 3 : mp - 9;
    return {y + (m <= 2), m, d};
}

// Unix day 0 (1970-01-01T00:00) is JD 2440587.5.
inline constexpr double kJdUnixEpoch = 2440587.5;

inline int parse_int(std::string_view s, std::string_view what) {
    int v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) {
        throw Error("orbit_env", "bad " + std::string(what) + " field in epoch");
    }
    return v;
}

}  // namespace detail

inline Epoch Epoch::from_calendar(int year, int month, int day, int hour, int minute, double second) {
    if (month < 1 || month > 12 || day < 1 || day > 31 || hour < 0 || hour > 23 || minute < 0 ||
        minute > 59 || second < 0.0 || second >= 61.0) {
        throw Error("orbit_env", "calendar field out of range");
    }
    const auto days = detail::days_from_civil(year, static_cast<unsigned>(month), static_cast<unsigned>(day));
    Epoch e;
    e.jd_day = detail::kJdUnixEpoch + static_cast<double>(days);
    e.day_fraction = (hour * 3600.0 + minute * 60.0 + second) / kSecondsPerDay;
    return e;
}

inline Epoch Epoch::parse(std::string_view s) {
    // YYYY-MM-DDThh:mm:ss[.fff]Z
    if (s.size() < 20 || s[4] != '-' || s[7] != '-' || (s[10] != 'T' && s[10] != 't') || s[13] != ':' ||
        s[16] != ':' || (s.back() != 'Z' && s.back() != 'z')) {
        throw Error("orbit_env", "epoch must look like YYYY-MM-DDThh:mm:ssZ, got '" + std::string(s) + "'");
    }
    const int y = detail::parse_int(s.substr(0, 4), "year");
    const int mo = detail::parse_int(s.substr(5, 2), "month");
    const int d = detail::parse_int(s.substr(8, 2), "day");
    const int h = detail::parse_int(s.substr(11, 2), "hour");
    const int mi = detail::parse_int(s.substr(14, 2), "minute");
    const std::string_view sec_str = s.substr(17, s.size() - 18);
    double sec = 0.0;
    auto [p, ec] = std::from_chars(sec_str.data(), sec_str.data() + sec_str.size(), sec);
    if (ec != std::errc{} || p != sec_str.data() + sec_str.size()) {
        throw Error("orbit_env", "bad seconds field in epoch");
    }
    return from_calendar(y, mo, d, h, mi, sec);
}

inline std::string Epoch::iso() const {
    const double days_since_unix = jd_day - detail::kJdUnixEpoch;
    auto whole = static_cast<std::int64_t>(std::floor(days_since_unix));
    double sod = (days_since_unix - static_cast<double>(whole) + day_fraction) * kSecondsPerDay;
    whole += static_cast<std::int64_t>(std::floor(sod / kSecondsPerDay));
    sod = std::fmod(sod, kSecondsPerDay);
    if (sod < 0) sod += kSecondsPerDay;
    const auto c = detail::civil_from_days(whole);
    const int h = static_cast<int>(sod / 3600.0);
    const int m = static_cast<int>((sod - h * 3600.0) / 60.0);
    const double s = sod - h * 3600.0 - m * 60.0;
    char buf[40];
    std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02d:%02d:%02dZ", static_cast<long long>(c.y), c.m, c.d,
                  h, m, static_cast<int>(std::lround(std::floor(s))));
    return buf;
}

inline double Epoch::decimal_year_after(double seconds) const {
    const double jd_now = jd_after(seconds);
    const auto unix_day = static_cast<std::int64_t>(std::floor(jd_now - detail::kJdUnixEpoch));
    const auto c = detail::civil_from_days(unix_day);
    const auto y = c.y;
    const double jd_y0 = detail::kJdUnixEpoch + static_cast<double>(detail::days_from_civil(y, 1, 1));
    const double jd_y1 = detail::kJdUnixEpoch + static_cast<double>(detail::days_from_civil(y + 1, 1, 1));
    return static_cast<double>(y) + (jd_now - jd_y0) / (jd_y1 - jd_y0);
}

struct OrbitConfig {
    double altitude = 550e3;          // m
    double inclination = 97.0 * kDeg;  // rad
    double raan = 0.0;                // rad
    double u0 = 0.0;                  // rad, argument of latitude at t = 0
    Epoch epoch = Epoch::parse("2023-03-21T00:00:00Z");

    double semi_major_axis() const { return kEarthRadius + altitude; }
    double mean_motion() const {
        const double a = semi_major_axis();
        return std::sqrt(kMuEarth / (a * a * a));
    }
    double period() const { return 2.0 * kPi / mean_motion(); }

    void validate() const {
        if (!(altitude > 0.0)) throw Error("orbit_env", "altitude must be positive");
        if (!(inclination >= 0.0 && inclination <= kPi)) throw Error("orbit_env", "inclination must be in [0, pi]");
    }
};

struct OrbitState {
    Vec3 r_eci = Vec3::Zero();  // m
    Vec3 v_eci = Vec3::Zero();  // m/s
    double u = 0.0;             // rad, wrapped to [0, 2π)
    double n = 0.0;             // rad/s
    double t = 0.0;             // s
};

inline double wrap_two_pi(double a) {
    double r = std::fmod(a, 2.0 * kPi);
    if (r < 0.0) r += 2.0 * kPi;
    return r;
}

inline OrbitState propagate_circular(const OrbitConfig& cfg, double t) {
    if (t < 0.0) throw Error("orbit_env", "propagation time must be >= 0");
    const double a = cfg.semi_major_axis();
    const double n = cfg.mean_motion();
    const double u = cfg.u0 + n * t;
    const double cu = std::cos(u), su = std::sin(u);
    const double cO = std::cos(cfg.raan), sO = std::sin(cfg.raan);
    const double ci = std::cos(cfg.inclination), si = std::sin(cfg.inclination);
    // Perifocal-like in-plane unit vectors: node line and its in-plane normal.
    const Vec3 p(cO, sO, 0.0);
    const Vec3 q(-sO * ci, cO * ci, si);
    OrbitState s;
    s.r_eci = a * (cu * p + su * q);
    s.v_eci = a * n * (-su * p + cu * q);
    s.u = wrap_two_pi(u);
    s.n = n;
    s.t = t;
    return s;
}

/// Attitude of the orbital frame (x along velocity, z radial outward,
/// y = z × x) relative to ECI.
inline Quaternion orbital_frame_quaternion(const OrbitState& st) {
    const double rn = st.r_eci.norm(), vn = st.v_eci.norm();
    if (!(rn > 0.0) || !(vn > 0.0)) throw Error("orbit_env", "zero position or velocity");
    const Vec3 z = st.r_eci / rn;
    Vec3 y = z.cross(st.v_eci / vn);
    if (y.norm() < 1e-12) throw Error("orbit_env", "position parallel to velocity");
    y.normalize();
    const Vec3 x = y.cross(z);
    Mat3 R;
    R.col(0) = x;
    R.col(1) = y;
    R.col(2) = z;
    return Quaternion::from_dcm(R);
}

/// Unit Sun vector in ECI from the low-precision solar ephemeris (mean
/// longitude, mean anomaly, ecliptic longitude and obliquity). Good to
/// about 0.01 deg between 1950 and 2050.
inline Vec3 sun_direction_eci(const Epoch& epoch, double t) {
    const double T = epoch.centuries_after(t);
    const double lambda_m = (280.460 + 36000.771 * T) * kDeg;
    const double M = (357.5291092 + 35999.05034 * T) * kDeg;
    const double lambda_ecl = lambda_m + (1.914666471 * std::sin(M) + 0.019994643 * std::sin(2.0 * M)) * kDeg;
    const double eps = (23.439291 - 0.0130042 * T) * kDeg;
    const Vec3 s(std::cos(lambda_ecl), std::cos(eps) * std::sin(lambda_ecl), std::sin(eps) * std::sin(lambda_ecl));
    return s.normalized();
}

/// True when sunlit. Cylindrical shadow: eclipsed iff behind the Earth and
/// within one Earth radius of the anti-solar axis.
inline bool eclipse_state(const Vec3& r_sat, const Vec3& sun_dir) {
    const double along = r_sat.dot(sun_dir);
    if (along >= 0.0) return true;
    const double perp = (r_sat - along * sun_dir).norm();
    return perp >= kEarthRadius;
}

/// Greenwich mean sidereal time (IAU 1982 polynomial), in [0, 2π).
inline double gmst(const Epoch& epoch, double t) {
    const double T = epoch.centuries_after(t);
    // Seconds of sidereal time; split the large linear coefficient to keep
    // the product well conditioned.
    const double days = (epoch.jd_day - kJ2000) + (epoch.day_fraction + t / kSecondsPerDay);
    double sec = 67310.54841 + 8640184.812866 * T + 0.093104 * T * T - 6.2e-6 * T * T * T;
    // 876600 h * 3600 s/h * T == 86400 * 36525 * T == 86400 * days
    sec += 86400.0 * std::fmod(days, 1.0);
    sec = std::fmod(sec, kSecondsPerDay);
    if (sec < 0.0) sec += kSecondsPerDay;
    return wrap_two_pi(sec * (2.0 * kPi / kSecondsPerDay));
}

}  // namespace geoadcs
