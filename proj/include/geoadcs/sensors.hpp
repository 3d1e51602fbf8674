#pragma once

// Three-axis magnetometer and five-head sun-sensor array.

#include "geoadcs/math.hpp"
#include "geoadcs/random.hpp"

#include <array>
#include <optional>

namespace geoadcs {

struct MagnetometerSpec {
    double sigma_env = 2e-6;  // T, environmental noise deviation
    double mu_env = 0.0;      // T
    double sigma_mtm = 1e-7;  // T, sensor noise deviation
    double mu_mtm = 0.0;      // T

    void validate() const {
        if (sigma_env < 0.0 || sigma_mtm < 0.0) throw Error("sensors", "negative magnetometer deviation");
    }
};

struct SunSensorArraySpec {
    std::array<Vec3, 5> boresights{Vec3::UnitX(), -Vec3::UnitX(), Vec3::UnitY(), -Vec3::UnitY(), Vec3::UnitZ()};
    double fov_half_angle = 60.0 * kDeg;  // rad
    double sigma = 0.5 * kDeg;            // rad

    void validate() const {
        for (const auto& b : boresights) {
            if (std::abs(b.norm() - 1.0) > 1e-9) throw Error("sensors", "sun sensor boresight must be a unit vector");
        }
        if (!(fov_half_angle > 0.0 && fov_half_angle < kPi / 2.0)) {
            throw Error("sensors", "sun sensor half-angle must lie in (0, pi/2)");
        }
        if (sigma < 0.0) throw Error("sensors", "negative sun sensor deviation");
    }
};

struct SunReading {
    bool valid = false;
    Vec3 r_ss = Vec3::Zero();  // unit, body frame; meaningful only when valid
    std::optional<int> active_sensor;
};

struct SensorReadout {
    Vec3 b_mtm = Vec3::Zero();  // T
    Vec3 b_env = Vec3::Zero();  // T, the physical field acting on the torquers
    SunReading sun;
};

/// Physical field at the spacecraft: model plus environmental noise.
inline Vec3 environment_field(const Vec3& B_body_model, const MagnetometerSpec& spec, Rng& env_rng) {
    if (spec.sigma_env == 0.0 && spec.mu_env == 0.0) return B_body_model;
    return B_body_model + env_rng.normal3(spec.mu_env, spec.sigma_env);
}

/// Magnetometer output for a given environment field.
inline Vec3 magnetometer_reading(const Vec3& B_env, const MagnetometerSpec& spec, Rng& mtm_rng) {
    if (spec.sigma_mtm == 0.0 && spec.mu_mtm == 0.0) return B_env;
    return B_env + mtm_rng.normal3(spec.mu_mtm, spec.sigma_mtm);
}

/// Both noise layers in sequence, drawn from one generator.
inline Vec3 measure_magnetic_field(const Vec3& B_body_model, const MagnetometerSpec& spec, Rng& rng) {
    return magnetometer_reading(environment_field(B_body_model, spec, rng), spec, rng);
}

inline double sun_incidence(const Vec3& boresight, const Vec3& sun_body) {
    return std::acos(std::clamp(boresight.dot(sun_body), -1.0, 1.0));
}

/// Head with the smallest incidence angle inside its field of view.
inline std::optional<int> sun_sensor_in_view(const Vec3& sun_body, const SunSensorArraySpec& spec) {
    std::optional<int> best;
    double best_angle = spec.fov_half_angle;
    for (int i = 0; i < static_cast<int>(spec.boresights.size()); ++i) {
        const double a = sun_incidence(spec.boresights[static_cast<std::size_t>(i)], sun_body);
        if (a < best_angle) {
            best_angle = a;
            best = i;
        }
    }
    return best;
}

/// Sun direction rotated by a N(0, σ) angle about a uniformly distributed
/// axis perpendicular to it. Invalid in eclipse or when no head sees the Sun.
inline SunReading measure_sun(const Vec3& sun_body_true, bool sunlit, const SunSensorArraySpec& spec, Rng& rng) {
    SunReading out;
    if (!sunlit) return out;
    out.active_sensor = sun_sensor_in_view(sun_body_true, spec);
    if (!out.active_sensor) return out;
    out.valid = true;
    if (spec.sigma == 0.0) {
        out.r_ss = sun_body_true.normalized();
        return out;
    }
    const Vec3 s = sun_body_true.normalized();
    // Orthonormal pair spanning the plane perpendicular to s.
    const Vec3 helper = std::abs(s.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    const Vec3 e1 = s.cross(helper).normalized();
    const Vec3 e2 = s.cross(e1);
    const double psi = 2.0 * kPi * rng.uniform();
    const Vec3 axis = std::cos(psi) * e1 + std::sin(psi) * e2;
    const double theta = rng.normal(0.0, spec.sigma);
    out.r_ss = quat_rotate(Quaternion::from_axis_angle(axis, theta), s).normalized();
    return out;
}

}  // namespace geoadcs
