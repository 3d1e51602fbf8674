#include "geoadcs/estimation.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace geoadcs;

namespace {

Quaternion random_unit(std::mt19937_64& g) {
    std::normal_distribution<double> n;
    return Quaternion{n(g), n(g), n(g), n(g)}.normalized();
}

double attitude_error(const Quaternion& a, const Quaternion& b) { return (a.conj() * b).canonical().angle(); }

Vec3 perturb_direction(const Vec3& v, double sigma, std::mt19937_64& g) {
    std::normal_distribution<double> n(0.0, sigma);
    return (v + Vec3(n(g), n(g), n(g))).normalized();
}

EkfConfig open_loop_config(double n = 0.0) {
    EkfConfig cfg;
    cfg.closed_loop_jacobian = false;
    cfg.mean_motion = n;
    return cfg;
}

const ReferenceVectors kRef{Vec3(0.6, -0.1, 0.79).normalized(), 3e-5, Vec3(0.2, 0.9, -0.3).normalized()};

ObservationBundle observe(const Quaternion& q_true, bool sun, const ReferenceVectors& ref = kRef) {
    ObservationBundle o;
    o.mag = to_frame(q_true, ref.mag_orbital.normalized());
    o.mag_valid = true;
    o.sun = to_frame(q_true, ref.sun_orbital.normalized());
    o.sun_valid = sun;
    return o;
}

}  // namespace

// ---------------------------------------------------------------------------
// TRIAD

TEST(Triad, IdentityForMatchingVectors) {
    const Vec3 b(0.3, 0.5, 0.8), s(1, 0, 0.1);
    EXPECT_LT(attitude_error(triad_attitude(b, s, b, s), Quaternion::identity()), 1e-12);
}

TEST(Triad, RecoversRandomAttitudes) {
    std::mt19937_64 g(43);
    for (int i = 0; i < 1000; ++i) {
        const Quaternion q = random_unit(g);
        const Quaternion est = triad_attitude(to_frame(q, kRef.mag_orbital), to_frame(q, kRef.sun_orbital), kRef.mag_orbital,
                                              kRef.sun_orbital);
        EXPECT_LT(attitude_error(est, q), 1e-9);
    }
}

TEST(Triad, SmallNoiseGivesSmallError) {
    std::mt19937_64 g(47);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const Quaternion q = random_unit(g);
        const Vec3 b = perturb_direction(to_frame(q, kRef.mag_orbital), 0.5 * kDeg / std::sqrt(2.0), g);
        const Vec3 s = perturb_direction(to_frame(q, kRef.sun_orbital), 0.5 * kDeg / std::sqrt(2.0), g);
        worst = std::max(worst, attitude_error(triad_attitude(b, s, kRef.mag_orbital, kRef.sun_orbital), q));
    }
    EXPECT_LT(worst, 2.0 * kDeg);
}

TEST(Triad, RejectsParallelVectors) {
    EXPECT_THROW(triad_attitude(Vec3::UnitX(), Vec3::UnitX(), Vec3::UnitX(), Vec3::UnitY()), Error);
    EXPECT_THROW(triad_attitude(Vec3::UnitX(), Vec3::UnitY(), Vec3::UnitZ(), -Vec3::UnitZ()), Error);
}

// ---------------------------------------------------------------------------
// Model matrices

TEST(DynamicsMatrix, GainForm) {
    EkfConfig cfg;
    cfg.closed_loop_jacobian = true;
    const Vec3 w(0.01, -0.02, 0.03);
    const Mat6 F = ekf_dynamics_matrix(w, cfg);
    EXPECT_EQ(Mat3(F.topLeftCorner<3, 3>()), Mat3(-skew(w)));
    EXPECT_EQ(Mat3(F.topRightCorner<3, 3>()), Mat3(0.5 * Mat3::Identity()));
    EXPECT_EQ(Mat3(F.bottomLeftCorner<3, 3>()), Mat3(-0.115 * Mat3::Identity()));
    EXPECT_EQ(Mat3(F.bottomRightCorner<3, 3>()), Mat3(-0.245 * Mat3::Identity()));
}

TEST(DynamicsMatrix, OpenLoopRateBlockMatchesFiniteDifference) {
    const InertiaTensor J = reference_inertia();
    const Vec3 w(0.01, -0.02, 0.03), h(1e-4, -3e-4, 2e-4);
    const Mat6 F = ekf_dynamics_matrix(w, open_loop_config(), J, h);
    auto wdot = [&](const Vec3& x) { return Vec3(J.inverse() * (-x.cross(J.matrix() * x + h))); };
    Mat3 fd;
    const double d = 1e-7;
    for (int k = 0; k < 3; ++k) {
        Vec3 e = Vec3::Zero();
        e[k] = d;
        fd.col(k) = (wdot(w + e) - wdot(w - e)) / (2 * d);
    }
    EXPECT_LT((Mat3(F.bottomRightCorner<3, 3>()) - fd).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_EQ(Mat3(F.bottomLeftCorner<3, 3>()), Mat3::Zero());
}

TEST(ProcessNoise, MatchesDiscretisedInput) {
    const InertiaTensor J = reference_inertia();
    EkfConfig cfg;
    const Mat6 F = ekf_dynamics_matrix(Vec3(0.01, 0, 0), cfg, J);
    Eigen::Matrix<double, 6, 3> G = Eigen::Matrix<double, 6, 3>::Zero();
    G.bottomRows<3>() = J.inverse();
    const Eigen::Matrix<double, 6, 3> Gamma = G + 0.5 * F * G;
    const Mat6 expected = Gamma * (9e-14 * Mat3::Identity()) * Gamma.transpose();
    const Mat6 Q = ekf_process_noise(F, J, cfg);
    EXPECT_LT((Q - expected).cwiseAbs().maxCoeff(), 1e-12 * expected.cwiseAbs().maxCoeff());
    EXPECT_LT((Q - Q.transpose()).cwiseAbs().maxCoeff(), 1e-25);
    EXPECT_GE(min_eigenvalue(Q), -1e-25);
    cfg.sigma_dist = 0.0;
    EXPECT_EQ(ekf_process_noise(F, J, cfg), Mat6::Zero());
}

TEST(Predict, ZeroCovarianceGrowsByProcessNoise) {
    EkfState s;
    s.P.setZero();
    const EkfConfig cfg = open_loop_config();
    const InertiaTensor J = reference_inertia();
    const EkfState p = ekf_predict(s, cfg, J, Vec3::Zero(), TorqueSet{});
    EXPECT_LT((p.P - ekf_process_noise(ekf_dynamics_matrix(s.omega, cfg, J), J, cfg)).norm(), 1e-25);
}

TEST(Predict, FollowsTruthModelExactly) {
    const InertiaTensor J = reference_inertia();
    const double n = 1.0947e-3;
    EkfConfig cfg = open_loop_config(n);
    RigidBodyState truth;
    truth.q_o2b = Quaternion{0.95, 0.1, -0.2, 0.2}.normalized().canonical();
    truth.omega = Vec3(0.002, n, -0.001);
    EkfState est{truth.q_o2b, truth.omega, initial_covariance(), 0.0};
    Vec3 h(1e-4, -2e-4, 3e-4);
    TorqueSet M;
    M.control = Vec3(1e-6, 0, -2e-6);
    M.unloading = Vec3(0, 3e-7, 0);
    for (int k = 0; k < 100; ++k) {
        est = ekf_predict(est, cfg, J, h, M);
        for (int i = 0; i < cfg.substeps; ++i) {
            truth = step_truth(truth, J, h, M, n, 0.1);
            h -= M.control * 0.1;
        }
    }
    EXPECT_LT(attitude_error(est.q, truth.q_o2b), 1e-12);
    EXPECT_LT((est.omega - truth.omega).norm(), 1e-15);
    EXPECT_NEAR(est.t, 100.0, 1e-12);
}

// ---------------------------------------------------------------------------
// Correction

TEST(Correct, NeedsAtLeastOneBlock) {
    EXPECT_THROW(ekf_correct(EkfState{}, ObservationBundle{}, kRef, EkfConfig{}), Error);
    const EkfState p = ekf_step(EkfState{}, ObservationBundle{}, kRef, open_loop_config(), reference_inertia(), Vec3::Zero(),
                                TorqueSet{});
    EXPECT_EQ(p.t, 1.0);
}

TEST(Correct, ObservationJacobianAtIdentity) {
    // Perturb the vector part and rebuild the scalar: the predicted
    // direction changes by 2 skew(pred) δq.
    const Vec3 ref = kRef.mag_orbital;
    const double d = 1e-7;
    Mat3 fd;
    for (int k = 0; k < 3; ++k) {
        Vec3 e = Vec3::Zero();
        e[k] = d;
        fd.col(k) = (to_frame(scalar_recover(e), ref) - to_frame(scalar_recover(-e), ref)) / (2 * d);
    }
    EkfState s;
    const LinearisedObservation L = linearise_observation(s, observe(Quaternion::identity(), true), kRef, EkfConfig{});
    EXPECT_LT((Mat3(L.H.block<3, 3>(0, 0)) - fd).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_EQ(L.H.rows(), 6);
    EXPECT_DOUBLE_EQ(L.R(0, 0), std::pow(EkfConfig{}.sigma_mag / kRef.mag_norm, 2));
    EXPECT_DOUBLE_EQ(L.R(5, 5), std::pow(0.5 * kDeg, 2));
}

TEST(Correct, ZeroInnovationKeepsStateAndShrinksCovariance) {
    EkfState s;
    s.q = Quaternion{0.9, 0.2, -0.1, 0.3}.normalized().canonical();
    s.omega = Vec3(0.001, 0.002, 0.0);
    s.P = initial_covariance();
    const EkfState c = ekf_correct(s, observe(s.q, true), kRef, EkfConfig{});
    EXPECT_LT(attitude_error(c.q, s.q), 1e-14);
    EXPECT_EQ(c.omega, s.omega);
    EXPECT_LT(c.P.trace(), s.P.trace());
}

TEST(Correct, HugeNoiseGivesNegligibleGain) {
    EkfState s;
    s.P = initial_covariance();
    const Quaternion q_true = Quaternion::from_axis_angle(Vec3(1, 2, 3).normalized(), 0.2);
    const EkfState c = ekf_correct(s, observe(q_true, true), kRef, EkfConfig{}, 1e12);
    EXPECT_LT(c.q.qv.norm(), 1e-6);
    EXPECT_LT((c.P - s.P).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Correct, ScalarOracle) {
    // Identity estimate, field along x: the z component of the innovation
    // drives only q2, with the scalar Kalman gain 2 P / (4 P + R).
    EkfState s;
    s.P = 0.04 * Mat6::Identity();
    EkfConfig cfg;
    cfg.sigma_mag = 3e-7;
    ReferenceVectors ref;
    ref.mag_orbital = Vec3::UnitX();
    ref.mag_norm = 3e-5;
    ObservationBundle o;
    o.mag = Vec3(1.0, 0.0, 0.01);
    o.mag_valid = true;
    const EkfState c = ekf_correct(s, o, ref, cfg);
    const double R = std::pow(cfg.sigma_mag / ref.mag_norm, 2);
    EXPECT_NEAR(c.q.qv.y(), 2.0 * 0.04 / (4.0 * 0.04 + R) * 0.01, 1e-15);
    EXPECT_EQ(c.q.qv.x(), 0.0);
    EXPECT_EQ(c.q.qv.z(), 0.0);
    EXPECT_NEAR(c.P(1, 1), 0.04 * R / (4.0 * 0.04 + R), 1e-15);
    EXPECT_EQ(c.P(0, 0), 0.04);
}

TEST(Correct, AgreesWithJosephForm) {
    EkfState s;
    s.q = Quaternion::from_axis_angle(Vec3(0, 1, 1).normalized(), 0.1);
    s.omega = Vec3(1e-3, 0, 0);
    s.P = initial_covariance(0.1, 0.01);
    s.P(0, 3) = s.P(3, 0) = 1e-4;
    const ObservationBundle o = observe(Quaternion::from_axis_angle(Vec3(0, 1, 1).normalized(), 0.12), true);
    const EkfConfig cfg;
    const LinearisedObservation L = linearise_observation(s, o, kRef, cfg);
    const Eigen::MatrixXd S = L.H * s.P * L.H.transpose() + L.R;
    const Eigen::MatrixXd K = s.P * L.H.transpose() * S.inverse();
    const Eigen::MatrixXd IKH = Eigen::MatrixXd::Identity(6, 6) - K * L.H;
    const Eigen::MatrixXd joseph = IKH * s.P * IKH.transpose() + K * L.R * K.transpose();
    const EkfState c = ekf_correct(s, o, kRef, cfg);
    EXPECT_LT((c.P - joseph).cwiseAbs().maxCoeff(), 1e-10 * s.P.cwiseAbs().maxCoeff());
}

TEST(Correct, NonFiniteCovarianceIsDivergence) {
    EkfState s;
    s.P(2, 2) = std::numeric_limits<double>::infinity();
    EXPECT_THROW(ekf_predict(s, open_loop_config(), reference_inertia(), Vec3::Zero(), TorqueSet{}), Error);
    EkfState t;
    t.P(0, 0) = std::nan("");
    EXPECT_THROW(ekf_correct(t, observe(Quaternion::identity(), true), kRef, EkfConfig{}), Error);
}

// ---------------------------------------------------------------------------
// Filter behaviour

TEST(Filter, ConvergesWithNoiselessMeasurements) {
    const InertiaTensor J = reference_inertia();
    const double n = 1.0947e-3;
    const EkfConfig cfg = open_loop_config(n);
    RigidBodyState truth;
    truth.q_o2b = Quaternion::from_axis_angle(Vec3(1, -1, 2).normalized(), 0.3);
    truth.omega = Vec3(0.001, n, -0.0005);
    EkfState est{Quaternion::from_axis_angle(Vec3(1, 0, 0), 0.1) * truth.q_o2b, Vec3::Zero(), initial_covariance(), 0.0};
    est.q = est.q.canonical();
    for (int k = 0; k < 100; ++k) {
        for (int i = 0; i < cfg.substeps; ++i) truth = step_truth(truth, J, Vec3::Zero(), TorqueSet{}, n, 0.1);
        est = ekf_step(est, observe(truth.q_o2b, true), kRef, cfg, J, Vec3::Zero(), TorqueSet{});
        ASSERT_LT((est.P - est.P.transpose()).cwiseAbs().maxCoeff(), 1e-18);
        ASSERT_GE(min_eigenvalue(est.P), -1e-15);
    }
    EXPECT_LT(attitude_error(est.q, truth.q_o2b), 0.05 * kDeg);
    EXPECT_LT((est.omega - truth.omega).norm(), 1e-4);
}

TEST(Filter, MagnetometerOnlyStaysBounded) {
    const InertiaTensor J = reference_inertia();
    const double n = 1.0947e-3;
    const EkfConfig cfg = open_loop_config(n);
    RigidBodyState truth;
    truth.omega = Vec3(0, n, 0);
    EkfState est{Quaternion::from_axis_angle(Vec3(0, 0, 1), 0.5 * kDeg), truth.omega, initial_covariance(0.01, 1e-4), 0.0};
    double worst = 0.0;
    for (int k = 0; k < 2000; ++k) {
        for (int i = 0; i < cfg.substeps; ++i) truth = step_truth(truth, J, Vec3::Zero(), TorqueSet{}, n, 0.1);
        est = ekf_step(est, observe(truth.q_o2b, false), kRef, cfg, J, Vec3::Zero(), TorqueSet{});
        worst = std::max(worst, attitude_error(est.q, truth.q_o2b));
    }
    EXPECT_LT(worst, 1.0 * kDeg);
    EXPECT_TRUE(est.P.allFinite());
}

TEST(Filter, InnovationsAreConsistentAndWhite) {
    const InertiaTensor J = reference_inertia();
    const double n = 1.0947e-3;
    EkfConfig cfg = open_loop_config(n);
    cfg.sigma_mag = 3e-7;
    cfg.sigma_dist = 1e-9;
    std::mt19937_64 g(53);
    std::normal_distribution<double> nd;
    RigidBodyState truth;
    truth.q_o2b = Quaternion::from_axis_angle(Vec3(0, 1, 0), 0.2);
    truth.omega = Vec3(0.0005, n, 0.0);
    EkfState est{truth.q_o2b, truth.omega, initial_covariance(0.01, 1e-3), 0.0};
    std::vector<Eigen::VectorXd> innov;
    double nis = 0.0;
    int count = 0;
    for (int k = 0; k < 3000; ++k) {
        for (int i = 0; i < cfg.substeps; ++i) truth = step_truth(truth, J, Vec3::Zero(), TorqueSet{}, n, 0.1);
        ObservationBundle o = observe(truth.q_o2b, true);
        const double sm = cfg.sigma_mag / kRef.mag_norm;
        o.mag += Vec3(nd(g), nd(g), nd(g)) * sm;
        o.sun += Vec3(nd(g), nd(g), nd(g)) * cfg.sigma_ss;
        const EkfState pred = ekf_predict(est, cfg, J, Vec3::Zero(), TorqueSet{});
        const LinearisedObservation L = linearise_observation(pred, o, kRef, cfg);
        const Eigen::MatrixXd S = L.H * pred.P * L.H.transpose() + L.R;
        const Eigen::VectorXd y = L.z - L.h;
        est = ekf_correct(pred, o, kRef, cfg);
        if (k >= 500) {
            // The unit-vector residual has no component along the
            // direction, so each block contributes two degrees of freedom.
            nis += y.dot(S.completeOrthogonalDecomposition().solve(y));
            innov.push_back(y);
            ++count;
        }
    }
    const double mean_nis = nis / count;
    EXPECT_GT(mean_nis, 0.5 * 4.0);
    EXPECT_LT(mean_nis, 2.0 * 6.0);
    // Lag-one autocorrelation of each innovation component.
    for (int c = 0; c < 6; ++c) {
        double m = 0.0;
        for (const auto& y : innov) m += y[c];
        m /= innov.size();
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < innov.size(); ++i) {
            den += (innov[i][c] - m) * (innov[i][c] - m);
            if (i > 0) num += (innov[i][c] - m) * (innov[i - 1][c] - m);
        }
        EXPECT_LT(std::abs(num / den), 0.15) << "component " << c;
    }
}
