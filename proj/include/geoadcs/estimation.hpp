#pragma once

// TRIAD initialisation and the extended Kalman filter on the reduced state
// [q1 q2 q3 ω1 ω2 ω3]. Prediction integrates the full nonlinear model;
// correction adds the 6-vector update to the quaternion vector part and
// rebuilds the scalar part.

#include "geoadcs/math.hpp"
#include "geoadcs/vehicle.hpp"

#include <Eigen/Dense>

#include <functional>
#include <vector>

namespace geoadcs {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

struct EkfState {
    Quaternion q;                   // orbital -> body estimate, q0 >= 0
    Vec3 omega = Vec3::Zero();      // rad/s
    Mat6 P = Mat6::Identity();
    double t = 0.0;

    Vec6 reduced() const {
        Vec6 x;
        x << q.qv, omega;
        return x;
    }
};

struct EkfConfig {
    double sigma_dist = 3e-7;       // N m
    double sigma_mag = 1e-7;        // T; divided by |B_model| for the unit-vector block
    double sigma_ss = 0.5 * kDeg;   // rad
    double k_q = 0.115;
    double k_w = 0.245;
    double dt = 1.0;                // s, filter period
    int substeps = 10;              // RK4 steps per period
    double mean_motion = 0.0;       // rad/s
    bool closed_loop_jacobian = true;  // F with the −k_q, −k_ω gain blocks

    void validate() const {
        if (!(dt > 0.0)) throw Error("estimation", "filter period must be positive");
        if (substeps < 1) throw Error("estimation", "need at least one integration substep");
        if (!(sigma_dist >= 0.0) || !(sigma_mag > 0.0) || !(sigma_ss > 0.0)) {
            throw Error("estimation", "measurement deviations must be positive");
        }
    }
};

/// Unit measurement directions in body axes; blocks are used only when valid.
struct ObservationBundle {
    Vec3 mag = Vec3::Zero();
    bool mag_valid = false;
    Vec3 sun = Vec3::Zero();
    bool sun_valid = false;
};

/// Model directions in the orbital frame, and the model field magnitude (T)
/// used to express the magnetometer deviation in unit-vector terms.
struct ReferenceVectors {
    Vec3 mag_orbital = Vec3::UnitX();
    double mag_norm = 1.0;
    Vec3 sun_orbital = Vec3::UnitZ();
};

/// Initial covariance diag(1² I, 0.1² I).
inline Mat6 initial_covariance(double sigma_q = 1.0, double sigma_w = 0.1) {
    Mat6 P = Mat6::Zero();
    P.topLeftCorner<3, 3>() = sigma_q * sigma_q * Mat3::Identity();
    P.bottomRightCorner<3, 3>() = sigma_w * sigma_w * Mat3::Identity();
    return P;
}

/// Attitude of the body relative to the reference frame from two vector
/// pairs (classic TRIAD, first vector trusted exactly).
inline Quaternion triad_attitude(const Vec3& b_body, const Vec3& s_body, const Vec3& b_ref, const Vec3& s_ref) {
    auto triad = [](const Vec3& a, const Vec3& b) {
        const Vec3 t1 = a.normalized();
        Vec3 t2 = a.cross(b);
        if (t2.norm() < 1e-6 * a.norm() * b.norm()) throw Error("estimation", "TRIAD vectors are (nearly) parallel");
        t2.normalize();
        Mat3 M;
        M.col(0) = t1;
        M.col(1) = t2;
        M.col(2) = t1.cross(t2);
        return M;
    };
    const Mat3 Mb = triad(b_body, s_body);
    const Mat3 Mr = triad(b_ref, s_ref);
    return Quaternion::from_dcm(Mr * Mb.transpose());
}

/// Linearised dynamics matrix. With `closed_loop_jacobian` this is the
/// controlled-system form F = [−W_ω, ½I; −k_q I, −k_ω I]. Otherwise the rate
/// block is the linearised free rigid body with wheel momentum h,
/// ∂ω̇/∂ω = J⁻¹(skew(Jω + h) − skew(ω) J), and the coupling block is zero.
inline Mat6 ekf_dynamics_matrix(const Vec3& omega, const EkfConfig& cfg, const InertiaTensor& J = InertiaTensor{},
                                const Vec3& h_body = Vec3::Zero()) {
    Mat6 F;
    F.topLeftCorner<3, 3>() = -skew(omega);
    F.topRightCorner<3, 3>() = 0.5 * Mat3::Identity();
    if (cfg.closed_loop_jacobian) {
        F.bottomLeftCorner<3, 3>() = -cfg.k_q * Mat3::Identity();
        F.bottomRightCorner<3, 3>() = -cfg.k_w * Mat3::Identity();
    } else {
        F.bottomLeftCorner<3, 3>().setZero();
        F.bottomRightCorner<3, 3>() =
            J.inverse() * (skew(J.matrix() * omega + h_body) - skew(omega) * J.matrix());
    }
    return F;
}

/// Q = Γ D Γᵀ with Γ = G Δt + F G Δt²/2, G = [0; J⁻¹], D = σ_dist² I.
inline Mat6 ekf_process_noise(const Mat6& F, const InertiaTensor& J, const EkfConfig& cfg) {
    Eigen::Matrix<double, 6, 3> G = Eigen::Matrix<double, 6, 3>::Zero();
    G.bottomRows<3>() = J.inverse();
    const Eigen::Matrix<double, 6, 3> Gamma = G * cfg.dt + F * G * (cfg.dt * cfg.dt / 2.0);
    const Mat3 D = cfg.sigma_dist * cfg.sigma_dist * Mat3::Identity();
    return Gamma * D * Gamma.transpose();
}

inline Mat6 symmetrized(const Mat6& P) { return 0.5 * (P + P.transpose()); }

inline double min_eigenvalue(const Mat6& P) {
    return Eigen::SelfAdjointEigenSolver<Mat6>(P, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
}

/// Torque law evaluated on the propagated estimate; returns the wheel
/// reaction on the bus for the attitude and rate passed in.
using ControlLaw = std::function<Vec3(const Quaternion&, const Vec3&)>;

/// Propagates the estimate over one filter period with the same integrator
/// as the truth model. `M_known` holds the torques the filter knows about;
/// when `law` is set, the control part is recomputed from the propagated
/// state at every substep (the closed-loop model the covariance assumes).
/// h_body is the wheel momentum at the start of the period.
inline EkfState ekf_predict(const EkfState& s, const EkfConfig& cfg, const InertiaTensor& J, const Vec3& h_body,
                            const TorqueSet& M_known, const ControlLaw& law = {}) {
    cfg.validate();
    const Mat6 F = ekf_dynamics_matrix(s.omega, cfg, J, h_body);
    const Mat6 Phi = Mat6::Identity() + F * cfg.dt;
    const Mat6 Q = ekf_process_noise(F, J, cfg);

    RigidBodyState x{s.q, s.omega, s.t};
    Vec3 h = h_body;
    TorqueSet M = M_known;
    const double h_step = cfg.dt / cfg.substeps;
    for (int i = 0; i < cfg.substeps; ++i) {
        if (law) M.control = law(x.q_o2b, x.omega);
        x = step_truth(x, J, h, M, cfg.mean_motion, h_step);
        h -= M.control * h_step;
    }

    EkfState out;
    out.q = x.q_o2b.canonical();
    out.omega = x.omega;
    out.t = s.t + cfg.dt;
    out.P = symmetrized(Phi * s.P * Phi.transpose() + Q);
    if (!out.P.allFinite()) throw Error("estimation", "covariance became non-finite (estimator divergence)");
    return out;
}

/// Predicted measurements and observation Jacobian for the valid blocks.
struct LinearisedObservation {
    Eigen::VectorXd z;
    Eigen::VectorXd h;
    Eigen::MatrixXd H;
    Eigen::MatrixXd R;
};

inline LinearisedObservation linearise_observation(const EkfState& s, const ObservationBundle& obs,
                                                   const ReferenceVectors& ref, const EkfConfig& cfg) {
    const int blocks = (obs.mag_valid ? 1 : 0) + (obs.sun_valid ? 1 : 0);
    LinearisedObservation L;
    L.z.resize(3 * blocks);
    L.h.resize(3 * blocks);
    L.H = Eigen::MatrixXd::Zero(3 * blocks, 6);
    L.R = Eigen::MatrixXd::Zero(3 * blocks, 3 * blocks);
    int row = 0;
    auto add = [&](const Vec3& z, const Vec3& ref_orbital, double sigma) {
        const Vec3 pred = to_frame(s.q, ref_orbital);
        L.z.segment<3>(row) = z;
        L.h.segment<3>(row) = pred;
        L.H.block<3, 3>(row, 0) = 2.0 * skew(pred);
        L.R.block<3, 3>(row, row) = sigma * sigma * Mat3::Identity();
        row += 3;
    };
    if (obs.mag_valid) {
        if (!(ref.mag_norm > 0.0)) throw Error("estimation", "model field magnitude must be positive");
        add(obs.mag, ref.mag_orbital.normalized(), cfg.sigma_mag / ref.mag_norm);
    }
    if (obs.sun_valid) add(obs.sun, ref.sun_orbital.normalized(), cfg.sigma_ss);
    return L;
}

/// Measurement update: K = P Hᵀ (H P Hᵀ + R)⁻¹, x̃ += K (z − h), P = (I − K H) P.
/// `R_scale` multiplies R (used by tests to probe the gain limit).
inline EkfState ekf_correct(const EkfState& s, const ObservationBundle& obs, const ReferenceVectors& ref,
                            const EkfConfig& cfg, double R_scale = 1.0) {
    if (!obs.mag_valid && !obs.sun_valid) throw Error("estimation", "correction needs at least one valid block");
    const LinearisedObservation L = linearise_observation(s, obs, ref, cfg);
    const Eigen::MatrixXd S = L.H * s.P * L.H.transpose() + R_scale * L.R;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(S);
    if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-14)) {
        throw Error("estimation", "innovation covariance is singular");
    }
    const Eigen::MatrixXd K = s.P * L.H.transpose() * ldlt.solve(Eigen::MatrixXd::Identity(S.rows(), S.cols()));
    const Vec6 dx = K * (L.z - L.h);

    EkfState out = s;
    out.q = scalar_recover(s.q.qv + dx.head<3>());
    out.omega = s.omega + dx.tail<3>();
    out.P = symmetrized((Mat6::Identity() - K * L.H) * s.P);
    if (!out.P.allFinite()) throw Error("estimation", "covariance became non-finite (estimator divergence)");
    return out;
}

/// One filter cycle: predict over the period, then correct with whichever
/// blocks are valid (magnetometer only in eclipse).
inline EkfState ekf_step(const EkfState& s, const ObservationBundle& obs, const ReferenceVectors& ref,
                         const EkfConfig& cfg, const InertiaTensor& J, const Vec3& h_body, const TorqueSet& M_known,
                         const ControlLaw& law = {}) {
    const EkfState predicted = ekf_predict(s, cfg, J, h_body, M_known, law);
    if (!obs.mag_valid && !obs.sun_valid) return predicted;
    return ekf_correct(predicted, obs, ref, cfg);
}

}  // namespace geoadcs
