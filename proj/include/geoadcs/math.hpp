#pragma once

// Quaternion, vector and matrix helpers shared by every other module.
//
// Convention: Hamilton product, scalar-first storage. A quaternion q that
// describes the attitude of frame B relative to frame A has R(q) whose
// columns are B's axes written in A. Components of a vector therefore
// transform as v_B = conj(q) ∘ v_A ∘ q (see to_frame()).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>

namespace geoadcs {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kDeg = kPi / 180.0;

/// Base class for every error raised by the library. `module()` names the
/// component that failed so that diagnostics can point at it.
class Error : public std::runtime_error {
public:
    Error(std::string module, const std::string& what)
        : std::runtime_error(module + ": " + what), module_(std::move(module)) {}
    const std::string& module() const noexcept { return module_; }

private:
    std::string module_;
};

struct Quaternion {
    double q0 = 1.0;
    Vec3 qv = Vec3::Zero();

    Quaternion() = default;
    Quaternion(double w, const Vec3& v) : q0(w), qv(v) {}
    Quaternion(double w, double x, double y, double z) : q0(w), qv(x, y, z) {}

    static Quaternion identity() { return {}; }

    /// Rotation by `angle` radians about `axis` (need not be unit).
    static Quaternion from_axis_angle(const Vec3& axis, double angle) {
        const Vec3 u = axis.normalized();
        return {std::cos(angle / 2.0), std::sin(angle / 2.0) * u};
    }

    static Quaternion from_vec4(const Vec4& c) { return {c[0], c[1], c[2], c[3]}; }
    Vec4 vec4() const { return {q0, qv.x(), qv.y(), qv.z()}; }

    Quaternion conj() const { return {q0, -qv}; }
    double norm() const { return std::sqrt(q0 * q0 + qv.squaredNorm()); }

    Quaternion normalized() const {
        const double n = norm();
        return {q0 / n, qv / n};
    }

    /// Sign flip so that q0 >= 0; same rotation.
    Quaternion canonical() const { return q0 < 0.0 ? Quaternion{-q0, -qv} : *this; }

    bool finite() const { return std::isfinite(q0) && qv.allFinite(); }

    /// Rotation angle in [0, π].
    double angle() const {
        return 2.0 * std::atan2(qv.norm(), std::abs(q0));
    }

    Mat3 to_dcm() const;
    static Quaternion from_dcm(const Mat3& R);
};

/// Hamilton product a ∘ b.
inline Quaternion operator*(const Quaternion& a, const Quaternion& b) {
    return {a.q0 * b.q0 - a.qv.dot(b.qv), a.q0 * b.qv + b.q0 * a.qv + a.qv.cross(b.qv)};
}

inline Quaternion quat_multiply(const Quaternion& a, const Quaternion& b) { return a * b; }

/// Vector part of q ∘ (0, v) ∘ conj(q).
inline Vec3 quat_rotate(const Quaternion& q, const Vec3& v) {
    const Vec3 t = 2.0 * q.qv.cross(v);
    return v + q.q0 * t + q.qv.cross(t);
}

/// Components in frame B of a vector given in frame A, where q is the
/// attitude of B relative to A.
inline Vec3 to_frame(const Quaternion& q, const Vec3& v) { return quat_rotate(q.conj(), v); }

/// Inverse of to_frame().
inline Vec3 from_frame(const Quaternion& q, const Vec3& v) { return quat_rotate(q, v); }

inline Mat3 Quaternion::to_dcm() const {
    const double w = q0, x = qv.x(), y = qv.y(), z = qv.z();
    Mat3 R;
    R << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return R;
}

// Shepperd's method: pick the largest of the four diagonal combinations
// to avoid dividing by a small number.
inline Quaternion Quaternion::from_dcm(const Mat3& R) {
    const double tr = R.trace();
    const double d[4] = {tr, R(0, 0), R(1, 1), R(2, 2)};
    const int k = static_cast<int>(std::max_element(d, d + 4) - d);
    Quaternion q;
    switch (k) {
    case 0: {
        const double s = 2.0 * std::sqrt(1.0 + tr);
        q = {0.25 * s, (R(2, 1) - R(1, 2)) / s, (R(0, 2) - R(2, 0)) / s, (R(1, 0) - R(0, 1)) / s};
        break;
    }
    case 1: {
        const double s = 2.0 * std::sqrt(1.0 + R(0, 0) - R(1, 1) - R(2, 2));
        q = {(R(2, 1) - R(1, 2)) / s, 0.25 * s, (R(0, 1) + R(1, 0)) / s, (R(0, 2) + R(2, 0)) / s};
        break;
    }
    case 2: {
        const double s = 2.0 * std::sqrt(1.0 - R(0, 0) + R(1, 1) - R(2, 2));
        q = {(R(0, 2) - R(2, 0)) / s, (R(0, 1) + R(1, 0)) / s, 0.25 * s, (R(1, 2) + R(2, 1)) / s};
        break;
    }
    default: {
        const double s = 2.0 * std::sqrt(1.0 - R(0, 0) - R(1, 1) + R(2, 2));
        q = {(R(1, 0) - R(0, 1)) / s, (R(0, 2) + R(2, 0)) / s, (R(1, 2) + R(2, 1)) / s, 0.25 * s};
        break;
    }
    }
    return q.normalized().canonical();
}

inline Mat3 skew(const Vec3& v) {
    Mat3 S;
    S << 0.0, -v.z(), v.y(),
        v.z(), 0.0, -v.x(),
        -v.y(), v.x(), 0.0;
    return S;
}

/// q̇ = ½ Ξ(q) (0, ω), i.e. ½ q ∘ (0, ω), with ω expressed in the rotated
/// frame.
inline Vec4 quat_derivative(const Quaternion& q, const Vec3& omega) {
    Eigen::Matrix4d Xi;
    Xi << q.q0, -q.qv.x(), -q.qv.y(), -q.qv.z(),
        q.qv.x(), q.q0, -q.qv.z(), q.qv.y(),
        q.qv.y(), q.qv.z(), q.q0, -q.qv.x(),
        q.qv.z(), -q.qv.y(), q.qv.x(), q.q0;
    return 0.5 * Xi * Vec4(0.0, omega.x(), omega.y(), omega.z());
}

/// Rebuilds the scalar part from the vector part (q0 >= 0). Vector parts
/// longer than one beyond round-off mean the estimator has diverged.
inline Quaternion scalar_recover(const Vec3& qv) {
    const double n2 = qv.squaredNorm();
    if (!std::isfinite(n2) || std::sqrt(n2) > 1.0 + 1e-6) {
        throw Error("math_core", "quaternion vector part has norm " + std::to_string(std::sqrt(n2)) +
                                     " > 1 (estimator divergence)");
    }
    return Quaternion{std::sqrt(std::max(0.0, 1.0 - n2)), qv}.normalized();
}

/// 3-2-1 (yaw, pitch, roll) Euler angles of q, returned as (roll, pitch, yaw).
inline Vec3 euler_321(const Quaternion& q) {
    const double w = q.q0, x = q.qv.x(), y = q.qv.y(), z = q.qv.z();
    const double roll = std::atan2(2.0 * (w * x + y * z), 1.0 - 2.0 * (x * x + y * y));
    const double pitch = std::asin(std::clamp(2.0 * (w * y - z * x), -1.0, 1.0));
    const double yaw = std::atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z));
    return {roll, pitch, yaw};
}

/// One classical fourth-order Runge-Kutta step of ẋ = f(t, x). State must
/// behave like an Eigen vector. A non-finite stage derivative aborts.
template <class State, class F>
State rk4_step(F&& f, const State& x, double t, double dt) {
    if (!(dt > 0.0)) throw Error("math_core", "rk4_step requires dt > 0");
    auto checked = [&](double ts, const State& xs) {
        State d = f(ts, xs);
        if (!d.allFinite()) {
            throw Error("math_core", "non-finite derivative at t=" + std::to_string(ts));
        }
        return d;
    };
    const State k1 = checked(t, x);
    const State k2 = checked(t + 0.5 * dt, State(x + 0.5 * dt * k1));
    const State k3 = checked(t + 0.5 * dt, State(x + 0.5 * dt * k2));
    const State k4 = checked(t + dt, State(x + dt * k3));
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace geoadcs
