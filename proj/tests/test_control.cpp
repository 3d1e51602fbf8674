#include "geoadcs/control.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace geoadcs;

namespace {

Vec3 random_vec(std::mt19937_64& g, double scale) {
    std::normal_distribution<double> n(0.0, scale);
    return {n(g), n(g), n(g)};
}

std::shared_ptr<const GaussCoefficients> igrf13() {
    static auto gc = std::make_shared<const GaussCoefficients>(load_igrf_coefficients(std::string(GEOADCS_DATA_DIR) + "/igrf13coeffs.txt"));
    return gc;
}

}  // namespace

TEST(ErrorQuaternion, Examples) {
    const Quaternion q = Quaternion{0.8, 0.1, -0.3, 0.5}.normalized();
    EXPECT_LT(error_quaternion(q, q).norm(), 1e-15);
    const Vec3 e = error_quaternion(Quaternion::from_axis_angle(Vec3::UnitX(), kPi), Quaternion::identity());
    EXPECT_NEAR(std::abs(e.x()), 1.0, 1e-15);
    EXPECT_NEAR(e.tail<2>().norm(), 0.0, 1e-15);
}

TEST(ErrorQuaternion, SmallAngleIsHalfTheRotation) {
    for (double deg = 0.5; deg < 10.0; deg += 0.5) {
        const Quaternion req = Quaternion::from_axis_angle(Vec3(0, 1, 0), 0.3);
        const Quaternion est = req * Quaternion::from_axis_angle(Vec3(1, 2, -1).normalized(), deg * kDeg);
        EXPECT_NEAR(2.0 * error_quaternion(est, req).norm() / (deg * kDeg), 1.0, 0.01);
    }
}

TEST(ErrorQuaternion, SignIsCanonical) {
    const Quaternion q = Quaternion::from_axis_angle(Vec3::UnitZ(), 0.2);
    const Quaternion neg{-q.q0, -q.qv};
    EXPECT_LT((error_quaternion(neg, Quaternion::identity()) - q.qv).norm(), 1e-15);
}

TEST(PdControl, ZeroErrorsGiveZeroTorque) {
    EXPECT_EQ(pd_control(Vec3::Zero(), Vec3::Zero(), reference_inertia(), ControlGains{}), Vec3::Zero());
}

TEST(PdControl, MatrixOracle) {
    const double J[3][3] = {{0.05466, -0.00004, -0.00006}, {-0.00004, 0.05531, 0.00029}, {-0.00006, 0.00029, 0.01201}};
    const double qe[3] = {0.01, 0.0, 0.0};
    const Vec3 M = pd_control(Vec3(0.01, 0, 0), Vec3::Zero(), reference_inertia(), ControlGains{});
    for (int i = 0; i < 3; ++i) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += J[i][k] * qe[k];
        EXPECT_NEAR(M[i], -0.115 * s, 1e-18);
    }
    EXPECT_NEAR(M.x(), -6.2859e-5, 1e-9);
    EXPECT_NEAR(M.y(), 4.6e-8, 1e-12);
    EXPECT_NEAR(M.z(), 6.9e-8, 1e-12);
}

TEST(PdControl, LinearAndOpposingForDiagonalInertia) {
    const InertiaTensor J(Vec3(2, 3, 4).asDiagonal().toDenseMatrix());
    const ControlGains g;
    const Vec3 q(0.01, -0.02, 0.03), w(-1e-3, 2e-3, 5e-4);
    EXPECT_LT((pd_control(2 * q, 2 * w, J, g) - 2 * pd_control(q, w, J, g)).norm(), 1e-18);
    const Vec3 Mq = pd_control(q, Vec3::Zero(), J, g);
    const Vec3 Mw = pd_control(Vec3::Zero(), w, J, g);
    for (int i = 0; i < 3; ++i) {
        EXPECT_LT(Mq[i] * q[i], 0.0);
        EXPECT_LT(Mw[i] * w[i], 0.0);
    }
    EXPECT_EQ(pd_control(Vec3::Zero(), Vec3::Zero(), J, g, Vec3(1, 2, 3)), Vec3(-1, -2, -3));
}

TEST(Bdot, ParallelFieldGivesZero) {
    EXPECT_EQ(bdot_unloading_moment(Vec3(0, 0, 1e-3), Vec3(0, 0, 3e-5), 0.1), Vec3::Zero());
    EXPECT_THROW(bdot_unloading_moment(Vec3(0, 0, 1e-3), Vec3(1e-5, 0, 0), 0.0), Error);
}

TEST(Bdot, ScaleDownOnlyLeavesSmallRequests) {
    const Vec3 m = bdot_unloading_moment(Vec3(0, 0, 1e-3), Vec3(2e-5, 0, 0), 0.1, MomentScaling::scale_down_only);
    EXPECT_NEAR(m.y(), 2e-8, 1e-22);
    EXPECT_EQ(m.x(), 0.0);
    EXPECT_EQ(m.z(), 0.0);
}

TEST(Bdot, NormaliseToMaxPutsLargestComponentOnTheLimit) {
    const Vec3 m = bdot_unloading_moment(Vec3(0, 0, 1e-3), Vec3(2e-5, 1e-5, 0), 0.1);
    EXPECT_DOUBLE_EQ(m.cwiseAbs().maxCoeff(), 0.1);
    const Vec3 req = Vec3(0, 0, 1e-3).cross(Vec3(2e-5, 1e-5, 0));
    EXPECT_LT((m.normalized() - req.normalized()).norm(), 1e-15);
}

TEST(Bdot, OversizedRequestIsHalved) {
    // h × B = [-0.2, -0.1, 0] needs a factor of two to fit under 0.1.
    const Vec3 h(0, 0, 1.0), B(-0.1, 0.2, 0.0);
    for (auto s : {MomentScaling::scale_down_only, MomentScaling::normalize_to_max}) {
        const Vec3 m = bdot_unloading_moment(h, B, 0.1, s);
        EXPECT_LT((m - 0.5 * h.cross(B)).norm(), 1e-16);
    }
}

TEST(Bdot, BoundedAndPerpendicular) {
    std::mt19937_64 g(59);
    for (int i = 0; i < 10000; ++i) {
        const Vec3 h = random_vec(g, 1e-3), B = random_vec(g, 3e-5);
        for (auto s : {MomentScaling::scale_down_only, MomentScaling::normalize_to_max}) {
            const Vec3 m = bdot_unloading_moment(h, B, 0.1, s);
            ASSERT_LE(m.cwiseAbs().maxCoeff(), 0.1);
            EXPECT_LT(std::abs(m.normalized().dot(h.normalized())), 1e-12);
            EXPECT_LT(std::abs(m.normalized().dot(B.normalized())), 1e-12);
            // The resulting torque m × B never adds to h.
            EXPECT_LE(m.cross(B).dot(h), 1e-30);
        }
    }
}

TEST(Planner, ZeroThresholdIsOneWindow) {
    OrbitConfig orbit;
    const GeomagModel m = GeomagModel::dipole(DipoleParams{}, orbit.inclination);
    PlannerOptions opt;
    opt.earliest_start = 0.0;
    const UnloadingPlan plan = plan_unloading_windows(orbit, m, 3000.0, 0.0, opt);
    ASSERT_EQ(plan.windows.size(), 1u);
    EXPECT_EQ(plan.windows[0].first, 0.0);
    EXPECT_EQ(plan.windows[0].second, 3000.0);
}

TEST(Planner, DipoleGivesDisjointArcsEachOrbit) {
    OrbitConfig orbit;
    const GeomagModel m = GeomagModel::dipole(DipoleParams{}, orbit.inclination);
    PlannerOptions opt;
    opt.earliest_start = 0.0;
    const UnloadingPlan plan = plan_unloading_windows(orbit, m, orbit.period(), 20.0 * kDeg, opt);
    EXPECT_GE(plan.windows.size(), 2u);
    for (std::size_t i = 0; i < plan.windows.size(); ++i) {
        EXPECT_LT(plan.windows[i].first, plan.windows[i].second);
        if (i > 0) {
            EXPECT_LT(plan.windows[i - 1].second, plan.windows[i].first);
        }
        for (double t = plan.windows[i].first; t <= plan.windows[i].second; t += 10.0) {
            const double lat = std::abs(geomagnetic_latitude(propagate_circular(orbit, t).r_eci, DipoleParams{}.k_hat));
            EXPECT_GE(lat, 20.0 * kDeg - 1e-3);
            EXPECT_LE(lat, 70.0 * kDeg + 1e-3);
        }
    }
    EXPECT_FALSE(plan.active_at(0.0));
    EXPECT_TRUE(plan.active_at(plan.windows[0].first));
}

TEST(Planner, IgrfGivesSingleWindow) {
    OrbitConfig orbit;
    const GeomagModel m = GeomagModel::igrf(igrf13(), orbit.epoch);
    const UnloadingPlan plan = plan_unloading_windows(orbit, m, 3000.0, 20.0 * kDeg);
    ASSERT_EQ(plan.windows.size(), 1u);
    EXPECT_EQ(plan.windows[0].first, 300.0);
}

TEST(Planner, NoAdmissibleArcIsAnError) {
    OrbitConfig orbit;
    orbit.inclination = 0.0;
    const GeomagModel m = GeomagModel::dipole(DipoleParams{}, orbit.inclination);
    EXPECT_THROW(plan_unloading_windows(orbit, m, 3000.0, 20.0 * kDeg), Error);
    EXPECT_THROW(plan_unloading_windows(OrbitConfig{}, m, 0.0, 20.0 * kDeg), Error);
    EXPECT_THROW(plan_unloading_windows(OrbitConfig{}, m, 100.0, 50.0 * kDeg), Error);
}

TEST(Controller, ZeroErrorGivesZeroCommands) {
    const InertiaTensor J = reference_inertia();
    const ControlGains gains;
    const WheelArraySpec wheels;
    const double n = 1.0947e-3;
    const ControllerContext ctx{J, gains, wheels, 0.1, n};
    EkfState est;
    est.omega = Vec3(0, n, 0);
    const ControlCommand cmd = controller_step(ControlMode::stabilize, est, Vec3(2e-5, 0, 1e-5), WheelArrayState{}, nullptr, 0.0, ctx);
    EXPECT_LT(cmd.tau_wheels.norm(), 1e-20);
    EXPECT_EQ(cmd.m_mtq, Vec3::Zero());
    EXPECT_FALSE(cmd.unloading_active);
}

TEST(Controller, WheelsDeliverTheRequestedTorque) {
    const InertiaTensor J = reference_inertia();
    const ControlGains gains;
    const WheelArraySpec wheels;
    const ControllerContext ctx{J, gains, wheels, 0.1, 1.0947e-3};
    EkfState est;
    est.q = Quaternion::from_axis_angle(Vec3(1, 0, 1).normalized(), 0.1);
    est.omega = Vec3(0.01, 0, -0.02);
    const ControlCommand cmd = controller_step(ControlMode::stabilize, est, Vec3::Zero(), WheelArrayState{}, nullptr, 0.0, ctx);
    EXPECT_LT((-wheels.W * cmd.tau_wheels - cmd.M_ctrl).norm(), 1e-12 * cmd.M_ctrl.norm());
}

TEST(Controller, TorquersRunOnlyInsideWindowsAboveTarget) {
    const InertiaTensor J = reference_inertia();
    const ControlGains gains;
    const WheelArraySpec wheels;
    const ControllerContext ctx{J, gains, wheels, 0.1, 1.0947e-3};
    UnloadingPlan plan;
    plan.windows = {{100.0, 200.0}};
    WheelArrayState h;
    h.h_wheel = allocate_wheel_torques(Vec3(1e-4, -2e-4, 5e-5), wheels);
    const Vec3 B(2e-5, 1e-5, -3e-5);
    const EkfState est;
    EXPECT_EQ(controller_step(ControlMode::unload, est, B, h, &plan, 50.0, ctx).m_mtq, Vec3::Zero());
    EXPECT_EQ(controller_step(ControlMode::unload, est, B, h, &plan, 250.0, ctx).m_mtq, Vec3::Zero());
    EXPECT_EQ(controller_step(ControlMode::stabilize, est, B, h, &plan, 150.0, ctx).m_mtq, Vec3::Zero());
    const ControlCommand on = controller_step(ControlMode::unload, est, B, h, &plan, 150.0, ctx);
    EXPECT_TRUE(on.unloading_active);
    EXPECT_GT(on.m_mtq.norm(), 0.0);
    WheelArrayState tiny;
    tiny.h_wheel = allocate_wheel_torques(Vec3(1e-6, 0, 0), wheels);
    EXPECT_EQ(controller_step(ControlMode::unload, est, B, tiny, &plan, 150.0, ctx).m_mtq, Vec3::Zero());
}
