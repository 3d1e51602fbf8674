#include "geoadcs/sensors.hpp"

#include <gtest/gtest.h>

using namespace geoadcs;

TEST(Magnetometer, NoiselessReadsModel) {
    MagnetometerSpec spec;
    spec.sigma_env = 0.0;
    spec.sigma_mtm = 0.0;
    Rng rng(1);
    const Vec3 B(2e-5, -1e-5, 3e-5);
    EXPECT_EQ(measure_magnetic_field(B, spec, rng), B);
}

TEST(Magnetometer, CombinedDeviation) {
    MagnetometerSpec spec;
    Rng rng(2, NoiseStream::magnetometer);
    const Vec3 B(2e-5, -1e-5, 3e-5);
    const int N = 50000;
    Vec3 sum = Vec3::Zero(), sq = Vec3::Zero();
    for (int i = 0; i < N; ++i) {
        const Vec3 e = measure_magnetic_field(B, spec, rng) - B;
        sum += e;
        sq += e.cwiseProduct(e);
    }
    const double expected = std::hypot(spec.sigma_env, spec.sigma_mtm);
    for (int k = 0; k < 3; ++k) {
        EXPECT_NEAR(std::sqrt(sq[k] / N), expected, 0.02 * expected);
        EXPECT_LT(std::abs(sum[k] / N), 4.0 * expected / std::sqrt(N));
    }
}

TEST(Magnetometer, LayersAreSeparable) {
    MagnetometerSpec spec;
    spec.mu_env = 1e-6;
    spec.sigma_env = 0.0;
    spec.sigma_mtm = 0.0;
    spec.mu_mtm = -3e-7;
    Rng rng(3);
    const Vec3 env = environment_field(Vec3::Zero(), spec, rng);
    EXPECT_EQ(env, Vec3::Constant(1e-6));
    EXPECT_LT((magnetometer_reading(env, spec, rng) - Vec3::Constant(7e-7)).norm(), 1e-20);
}

TEST(Magnetometer, SameSeedSameReadings) {
    MagnetometerSpec spec;
    Rng a(8), b(8);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(measure_magnetic_field(Vec3::Zero(), spec, a), measure_magnetic_field(Vec3::Zero(), spec, b));
}

TEST(SunSensor, IncidenceExamples) {
    EXPECT_EQ(sun_incidence(Vec3::UnitX(), Vec3::UnitX()), 0.0);
    EXPECT_NEAR(sun_incidence(Vec3::UnitX(), Vec3::UnitY()), kPi / 2.0, 1e-15);
    EXPECT_NEAR(sun_incidence(Vec3::UnitZ(), Vec3(0, std::sin(0.5), std::cos(0.5))), 0.5, 1e-15);
}

TEST(SunSensor, HeadSelection) {
    SunSensorArraySpec spec;
    EXPECT_EQ(sun_sensor_in_view(Vec3::UnitX(), spec), 0);
    EXPECT_EQ(sun_sensor_in_view(-Vec3::UnitY(), spec), 3);
    EXPECT_EQ(sun_sensor_in_view(Vec3(0.1, 0.2, 1.0).normalized(), spec), 4);
    EXPECT_FALSE(sun_sensor_in_view(-Vec3::UnitZ(), spec).has_value());
    // Just inside and just outside a 60° cone that no other head sees.
    const Vec3 near_edge = Vec3(std::cos(59.0 * kDeg), 0, -std::sin(59.0 * kDeg));
    EXPECT_EQ(sun_sensor_in_view(near_edge, spec), 0);
    const Vec3 past_edge = Vec3(std::cos(61.0 * kDeg), 0, -std::sin(61.0 * kDeg));
    EXPECT_FALSE(sun_sensor_in_view(past_edge, spec).has_value());
}

TEST(SunSensor, FieldOfViewIsMonotone) {
    SunSensorArraySpec narrow, wide;
    narrow.fov_half_angle = 30.0 * kDeg;
    wide.fov_half_angle = 80.0 * kDeg;
    for (double a = 0.0; a < kPi; a += 0.05) {
        const Vec3 s(std::cos(a), 0, -std::sin(a));
        if (sun_sensor_in_view(s, narrow)) {
            EXPECT_TRUE(sun_sensor_in_view(s, wide).has_value());
        }
    }
}

TEST(SunSensor, EclipseAndBlindSpotAreInvalid) {
    SunSensorArraySpec spec;
    Rng rng(4);
    EXPECT_FALSE(measure_sun(Vec3::UnitX(), false, spec, rng).valid);
    EXPECT_FALSE(measure_sun(-Vec3::UnitZ(), true, spec, rng).valid);
    const SunReading r = measure_sun(Vec3::UnitX(), true, spec, rng);
    EXPECT_TRUE(r.valid);
    EXPECT_EQ(r.active_sensor, 0);
}

TEST(SunSensor, NoiselessIsExact) {
    SunSensorArraySpec spec;
    spec.sigma = 0.0;
    Rng rng(4);
    const Vec3 s = Vec3(1, 0.2, 0.3).normalized();
    EXPECT_LT((measure_sun(s, true, spec, rng).r_ss - s).norm(), 1e-15);
}

TEST(SunSensor, AngularErrorDeviation) {
    SunSensorArraySpec spec;
    Rng rng(5, NoiseStream::sun_sensor);
    const Vec3 s = Vec3(0.3, 0.1, 0.9).normalized();
    const int N = 50000;
    double sq = 0.0;
    Vec3 mean_offset = Vec3::Zero();
    for (int i = 0; i < N; ++i) {
        const SunReading r = measure_sun(s, true, spec, rng);
        ASSERT_TRUE(r.valid);
        ASSERT_NEAR(r.r_ss.norm(), 1.0, 1e-12);
        const double a = std::acos(std::clamp(r.r_ss.dot(s), -1.0, 1.0));
        sq += a * a;
        mean_offset += r.r_ss - s;
    }
    EXPECT_NEAR(std::sqrt(sq / N), spec.sigma, 0.03 * spec.sigma);
    EXPECT_LT((mean_offset / N - s * (s.dot(mean_offset / N))).norm(), 1e-4);
}

TEST(SunSensor, SpecValidation) {
    SunSensorArraySpec spec;
    EXPECT_NO_THROW(spec.validate());
    spec.fov_half_angle = kPi / 2.0;
    EXPECT_THROW(spec.validate(), Error);
    spec = SunSensorArraySpec{};
    spec.boresights[1] = Vec3(2, 0, 0);
    EXPECT_THROW(spec.validate(), Error);
    MagnetometerSpec m;
    m.sigma_mtm = -1.0;
    EXPECT_THROW(m.validate(), Error);
}
