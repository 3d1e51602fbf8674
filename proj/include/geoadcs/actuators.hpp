#pragma once

// Reaction-wheel array (tetrahedron by default) and magnetorquer coils.

#include "geoadcs/math.hpp"

#include <Eigen/Dense>

#include <array>

namespace geoadcs {

using Vec4w = Eigen::Vector4d;  // one entry per wheel
using Mat34 = Eigen::Matrix<double, 3, 4>;
using Mat4 = Eigen::Matrix4d;

/// Installation matrix of four wheels in a tetrahedron; columns are the
/// spin axes in body coordinates.
inline Mat34 tetrahedron_installation() {
    Mat34 W;
    W << std::sqrt(8.0 / 9.0), -std::sqrt(2.0 / 9.0), -std::sqrt(2.0 / 9.0), 0.0,
        0.0, std::sqrt(2.0 / 3.0), -std::sqrt(2.0 / 3.0), 0.0,
        -1.0 / 3.0, -1.0 / 3.0, -1.0 / 3.0, 1.0;
    return W;
}

struct WheelArraySpec {
    Mat34 W = tetrahedron_installation();
    Mat4 A = Mat4::Identity();  // weight of the allocation quadratic form
    double M_max = 1e-3;        // N m per wheel
    double h_max = 1e-2;        // N m s per wheel

    void validate() const {
        if (!W.allFinite() || !A.allFinite()) throw Error("actuators", "wheel matrices must be finite");
        if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-12) throw Error("actuators", "allocation weight not symmetric");
        if (Eigen::LLT<Mat4>(A).info() != Eigen::Success) throw Error("actuators", "allocation weight not positive definite");
        if (std::abs((W * W.transpose()).determinant()) < 1e-12) throw Error("actuators", "installation matrix rank deficient");
        if (!(M_max > 0.0) || !(h_max > 0.0)) throw Error("actuators", "wheel limits must be positive");
    }
};

struct WheelArrayState {
    Vec4w h_wheel = Vec4w::Zero();  // N m s

    Vec3 h_body(const WheelArraySpec& spec) const { return spec.W * h_wheel; }
};

/// A-weighted minimum-norm wheel torques τ with W τ = M:
/// τ = A⁻¹ Wᵀ (W A⁻¹ Wᵀ)⁻¹ M.
inline Vec4w allocate_wheel_torques(const Vec3& M, const WheelArraySpec& spec) {
    const Mat4 A_inv = spec.A.inverse();
    const Mat3 S = spec.W * A_inv * spec.W.transpose();
    Eigen::FullPivLU<Mat3> lu(S);
    if (!lu.isInvertible()) throw Error("actuators", "singular allocation matrix W A^-1 W^T");
    return A_inv * spec.W.transpose() * lu.solve(M);
}

struct WheelStepResult {
    WheelArrayState state;
    Vec4w tau_applied = Vec4w::Zero();  // average torque over the step, N m
    Vec3 body_torque = Vec3::Zero();     // reaction on the bus, −W τ
    bool torque_clamped = false;
    bool momentum_clamped = false;
};

/// Torque clamp, then momentum integration with the final torque
/// truncated so that |h_i| never exceeds h_max.
inline WheelStepResult apply_wheel_step(const WheelArrayState& state, const Vec4w& tau_cmd, double dt,
                                        const WheelArraySpec& spec) {
    if (!(dt > 0.0)) throw Error("actuators", "wheel step needs dt > 0");
    WheelStepResult r;
    for (int i = 0; i < 4; ++i) {
        double tau = std::clamp(tau_cmd[i], -spec.M_max, spec.M_max);
        if (tau != tau_cmd[i]) r.torque_clamped = true;
        const double h0 = state.h_wheel[i];
        double h1 = h0 + tau * dt;
        if (h1 > spec.h_max || h1 < -spec.h_max) {
            h1 = std::clamp(h1, -spec.h_max, spec.h_max);
            tau = (h1 - h0) / dt;
            r.momentum_clamped = true;
        }
        r.state.h_wheel[i] = h1;
        r.tau_applied[i] = tau;
    }
    r.body_torque = -spec.W * r.tau_applied;
    return r;
}

struct MagnetorquerSpec {
    std::array<Vec3, 3> axes{Vec3::UnitX(), Vec3::UnitY(), Vec3::UnitZ()};
    double n_turns = 200.0;
    double coil_area = 0.0025;  // m^2
    double resistance = 25.0;   // ohm
    double v_max = 5.0;         // V

    void validate() const {
        if (!(resistance > 0.0)) throw Error("actuators", "coil resistance must be positive");
        for (std::size_t i = 0; i < 3; ++i) {
            if (std::abs(axes[i].norm() - 1.0) > 1e-9) throw Error("actuators", "torquer axis must be unit");
            for (std::size_t j = i + 1; j < 3; ++j) {
                if (std::abs(axes[i].dot(axes[j])) > 1e-9) throw Error("actuators", "torquer axes must be orthogonal");
            }
        }
    }
};

/// Largest dipole one coil can produce: (V_max / Res) · n · A_coil.
inline double magnetorquer_max_moment(const MagnetorquerSpec& spec) {
    if (!(spec.resistance > 0.0)) throw Error("actuators", "coil resistance must be positive");
    return spec.v_max / spec.resistance * spec.n_turns * spec.coil_area;
}

inline Vec3 magnetorquer_torque(const Vec3& m_actual, const Vec3& B_env) { return m_actual.cross(B_env); }

}  // namespace geoadcs
