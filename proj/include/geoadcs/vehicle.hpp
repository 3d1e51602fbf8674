#pragma once

// Rigid-body attitude dynamics and kinematics of the spacecraft bus.
//
// ω is the inertial angular rate expressed in body axes. The attitude
// q_o2b is relative to the orbital frame, which itself turns at the mean
// motion n about its +y axis, so the kinematics use the relative rate
// ω − n·ŷ_orbital (expressed in body).

#include "geoadcs/math.hpp"
#include "geoadcs/random.hpp"

#include <Eigen/Dense>

namespace geoadcs {

class InertiaTensor {
public:
    InertiaTensor() : InertiaTensor(Mat3::Identity()) {}

    explicit InertiaTensor(const Mat3& J) : J_(J) {
        if (!J.allFinite()) throw Error("vehicle", "inertia tensor has non-finite entries");
        if ((J - J.transpose()).cwiseAbs().maxCoeff() > 1e-12) throw Error("vehicle", "inertia tensor not symmetric");
        Eigen::LLT<Mat3> llt(J);
        if (llt.info() != Eigen::Success) throw Error("vehicle", "inertia tensor not positive definite");
        J_inv_ = llt.solve(Mat3::Identity());
    }

    const Mat3& matrix() const { return J_; }
    const Mat3& inverse() const { return J_inv_; }

private:
    Mat3 J_;
    Mat3 J_inv_;
};

/// Bus inertia of the reference 3U spacecraft, kg m^2.
inline InertiaTensor reference_inertia() {
    Mat3 J;
    J << 0.05466, -0.00004, -0.00006,
        -0.00004, 0.05531, 0.00029,
        -0.00006, 0.00029, 0.01201;
    return InertiaTensor(J);
}

struct RigidBodyState {
    Quaternion q_o2b;
    Vec3 omega = Vec3::Zero();  // rad/s, inertial rate in body axes
    double t = 0.0;
};

/// Torques acting on the bus, N m, body axes. `control` is the reaction
/// of the wheels on the bus, so the wheel momentum changes at −control.
struct TorqueSet {
    Vec3 control = Vec3::Zero();
    Vec3 disturbance = Vec3::Zero();
    Vec3 unloading = Vec3::Zero();

    Vec3 total() const { return control + disturbance + unloading; }
};

/// Orbital-frame angular rate seen in body axes.
inline Vec3 orbital_rate_in_body(const Quaternion& q_o2b, double mean_motion) {
    return to_frame(q_o2b, Vec3(0.0, mean_motion, 0.0));
}

struct StateDerivative {
    Vec4 q_dot;
    Vec3 omega_dot;
};

/// ω̇ = J⁻¹(−ω × (Jω + h) + ΣM), q̇ = ½ q ∘ (ω − ω_orbital).
inline StateDerivative dynamics_derivative(const RigidBodyState& s, const InertiaTensor& J, const Vec3& h_wheels,
                                           const TorqueSet& M, double mean_motion) {
    const Vec3 Jw = J.matrix() * s.omega;
    StateDerivative d;
    d.omega_dot = J.inverse() * (-s.omega.cross(Jw + h_wheels) + M.total());
    d.q_dot = quat_derivative(s.q_o2b, s.omega - orbital_rate_in_body(s.q_o2b, mean_motion));
    return d;
}

namespace detail {

using Vec10 = Eigen::Matrix<double, 10, 1>;

inline Vec10 pack(const RigidBodyState& s, const Vec3& h) {
    Vec10 x;
    x << s.q_o2b.vec4(), s.omega, h;
    return x;
}

}  // namespace detail

/// One RK4 step of the coupled attitude/rate equations. The wheel momentum
/// evolves inside the step as h(τ) = h − M.control·τ, consistent with the
/// wheel reaction torque. The quaternion is renormalised after the step.
inline RigidBodyState step_truth(const RigidBodyState& s, const InertiaTensor& J, const Vec3& h_wheels,
                                 const TorqueSet& M, double mean_motion, double dt) {
    auto f = [&](double, const detail::Vec10& x) {
        RigidBodyState xs;
        xs.q_o2b = Quaternion::from_vec4(x.head<4>());
        xs.omega = x.segment<3>(4);
        const Vec3 h = x.tail<3>();
        const StateDerivative d = dynamics_derivative(xs, J, h, M, mean_motion);
        detail::Vec10 dx;
        dx << d.q_dot, d.omega_dot, -M.control;
        return dx;
    };
    const detail::Vec10 x1 = rk4_step(f, detail::pack(s, h_wheels), s.t, dt);
    RigidBodyState out;
    out.q_o2b = Quaternion::from_vec4(x1.head<4>()).normalized();
    out.omega = x1.segment<3>(4);
    out.t = s.t + dt;
    return out;
}

/// Zero-mean Gaussian disturbance torque, independent per axis.
inline Vec3 disturbance_torque(Rng& rng, double sigma) {
    if (sigma < 0.0) throw Error("vehicle", "disturbance deviation must be >= 0");
    if (sigma == 0.0) return Vec3::Zero();
    return rng.normal3(0.0, sigma);
}

}  // namespace geoadcs
