#pragma once

// PD attitude control, B-dot wheel-momentum unloading and the scheduler
// that decides where along the orbit the magnetorquers may run.

#include "geoadcs/actuators.hpp"
#include "geoadcs/estimation.hpp"
#include "geoadcs/geomag.hpp"
#include "geoadcs/math.hpp"
#include "geoadcs/orbit.hpp"
#include "geoadcs/vehicle.hpp"

#include <utility>
#include <vector>

namespace geoadcs {

/// Reference rate used in the derivative term. `zero` regulates the
/// inertial rate to zero; `orbital` regulates it to the orbital-frame rate,
/// which removes the steady pitch offset of the `zero` variant.
enum class RateReference { zero, orbital };

struct ControlGains {
    double k_q = 0.115;  // 1/s^2
    double k_w = 0.245;  // 1/s
    Quaternion q_req = Quaternion::identity();
    RateReference rate_reference = RateReference::orbital;

    void validate() const {
        if (!(k_q > 0.0) || !(k_w > 0.0)) throw Error("control", "gains must be positive");
        if (std::abs(q_req.norm() - 1.0) > 1e-9) throw Error("control", "required quaternion must be unit");
    }
};

/// Vector part of conj(q_req) ∘ q_est, sign fixed so the scalar part is >= 0.
inline Vec3 error_quaternion(const Quaternion& q_est, const Quaternion& q_req) {
    return (q_req.conj() * q_est).canonical().qv;
}

/// M = −M_ext − k_ω J ω_err − k_q J q_err.
inline Vec3 pd_control(const Vec3& q_err_v, const Vec3& omega_err, const InertiaTensor& J, const ControlGains& gains,
                       const Vec3& M_ext = Vec3::Zero()) {
    return -M_ext - gains.k_w * (J.matrix() * omega_err) - gains.k_q * (J.matrix() * q_err_v);
}

/// How the requested moment h × B is mapped into the coil limits.
///  - normalize_to_max: divide by max_i |m_req,i| / m_max, so the largest
///    component always sits at the limit (the literal ratio rule).
///  - scale_down_only: divide by max(ratio, 1), leaving small requests as-is.
enum class MomentScaling { normalize_to_max, scale_down_only };

inline Vec3 bdot_unloading_moment(const Vec3& h_body, const Vec3& B_mtm, double m_max,
                                  MomentScaling scaling = MomentScaling::normalize_to_max) {
    if (!(m_max > 0.0)) throw Error("control", "maximum torquer moment must be positive");
    const Vec3 m_req = h_body.cross(B_mtm);
    const double ratio = m_req.cwiseAbs().maxCoeff() / m_max;
    if (ratio == 0.0) return Vec3::Zero();
    const double divisor = scaling == MomentScaling::normalize_to_max ? ratio : std::max(ratio, 1.0);
    Vec3 m = m_req / divisor;
    // Round-off can leave a component a few ulps above the limit.
    for (int i = 0; i < 3; ++i) m[i] = std::clamp(m[i], -m_max, m_max);
    return m;
}

struct UnloadingPlan {
    std::vector<std::pair<double, double>> windows;  // [t_start, t_end], s
    double threshold_angle = 20.0 * kDeg;           // rad
    double h_target = 5e-6;                         // N m s; unloading pauses below this

    bool active_at(double t) const {
        for (const auto& [a, b] : windows) {
            if (t >= a && t <= b) return true;
        }
        return false;
    }
};

struct PlannerOptions {
    double earliest_start = 300.0;  // s; lets the attitude transient settle first
    double sample_step = 1.0;       // s
    double field_floor = 1e-5;      // T; IGRF windows need at least this field
    double h_target = 5e-6;         // N m s
};

/// Geomagnetic latitude of the spacecraft for a dipole with moment along
/// k_hat (the north geomagnetic pole lies along −k_hat).
inline double geomagnetic_latitude(const Vec3& r_eci, const Vec3& k_hat) {
    return std::asin(std::clamp(-k_hat.dot(r_eci.normalized()), -1.0, 1.0));
}

/// Dipole: arcs whose geomagnetic latitude magnitude lies in
/// [threshold, 90° − threshold], i.e. away from both the geomagnetic poles
/// and the geomagnetic equator. IGRF: one window wherever the field exceeds
/// the floor.
inline UnloadingPlan plan_unloading_windows(const OrbitConfig& orbit, const GeomagModel& model, double horizon,
                                            double threshold, const PlannerOptions& opt = {}) {
    if (!(horizon > 0.0)) throw Error("control", "planning horizon must be positive");
    if (threshold < 0.0 || threshold > kPi / 4.0) throw Error("control", "threshold angle must lie in [0, 45 deg]");
    UnloadingPlan plan;
    plan.threshold_angle = threshold;
    plan.h_target = opt.h_target;

    const Vec3 k_hat = model.effective_dipole_axis();
    auto admissible = [&](double t) {
        const OrbitState st = propagate_circular(orbit, t);
        if (model.kind() == FieldModelKind::dipole) {
            const double lat = std::abs(geomagnetic_latitude(st.r_eci, k_hat));
            return lat >= threshold && lat <= kPi / 2.0 - threshold;
        }
        return model.orbital(st).norm() >= opt.field_floor;
    };

    const double t0 = std::min(opt.earliest_start, horizon);
    bool open = false;
    double start = 0.0, last = 0.0;
    for (double t = t0;; t += opt.sample_step) {
        const double tc = std::min(t, horizon);
        const bool ok = admissible(tc);
        if (ok && !open) {
            open = true;
            start = tc;
        }
        if (!ok && open) {
            open = false;
            plan.windows.emplace_back(start, last);
        }
        last = tc;
        if (tc >= horizon) break;
    }
    if (open) plan.windows.emplace_back(start, last);
    // Drop degenerate single-sample windows.
    std::erase_if(plan.windows, [](const auto& w) { return !(w.second > w.first); });
    if (plan.windows.empty()) throw Error("control", "no admissible unloading window within the horizon");
    return plan;
}

enum class ControlMode { stabilize, unload };

struct ControlCommand {
    Vec3 M_ctrl = Vec3::Zero();     // desired torque on the bus, N m
    Vec4w tau_wheels = Vec4w::Zero();  // commanded wheel torques (dh/dt), N m
    Vec3 m_mtq = Vec3::Zero();      // commanded torquer dipole, A m^2
    bool unloading_active = false;
};

struct ControllerContext {
    const InertiaTensor& J;
    const ControlGains& gains;
    const WheelArraySpec& wheels;
    double m_max = 0.1;
    double mean_motion = 0.0;
    MomentScaling scaling = MomentScaling::normalize_to_max;
};

/// PD torque from the estimate, allocated to the wheels so that the bus
/// receives M_ctrl; inside an unloading window the torquers are driven by
/// the B-dot law on the sensed field.
inline ControlCommand controller_step(ControlMode mode, const EkfState& est, const Vec3& B_mtm,
                                      const WheelArrayState& wheels, const UnloadingPlan* plan, double t,
                                      const ControllerContext& ctx) {
    ControlCommand cmd;
    const Vec3 q_err = error_quaternion(est.q, ctx.gains.q_req);
    const Vec3 omega_req = ctx.gains.rate_reference == RateReference::orbital
                               ? orbital_rate_in_body(est.q, ctx.mean_motion)
                               : Vec3::Zero();
    cmd.M_ctrl = pd_control(q_err, est.omega - omega_req, ctx.J, ctx.gains);
    // The bus feels −W τ, so the wheels are asked for −M_ctrl.
    cmd.tau_wheels = allocate_wheel_torques(-cmd.M_ctrl, ctx.wheels);

    if (mode == ControlMode::unload && plan != nullptr && plan->active_at(t)) {
        const Vec3 h_body = wheels.h_body(ctx.wheels);
        if (h_body.norm() > plan->h_target) {
            cmd.m_mtq = bdot_unloading_moment(h_body, B_mtm, ctx.m_max, ctx.scaling);
            cmd.unloading_active = true;
        }
    }
    return cmd;
}

}  // namespace geoadcs
