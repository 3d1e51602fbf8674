#pragma once

// Scenario configuration (JSON), the closed-loop run and the field survey
// used by the command-line tool.

#include "geoadcs/actuators.hpp"
#include "geoadcs/control.hpp"
#include "geoadcs/estimation.hpp"
#include "geoadcs/geomag.hpp"
#include "geoadcs/math.hpp"
#include "geoadcs/orbit.hpp"
#include "geoadcs/random.hpp"
#include "geoadcs/sensors.hpp"
#include "geoadcs/telemetry.hpp"
#include "geoadcs/vehicle.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <string>

namespace geoadcs {

struct InitialConditions {
    Vec3 attitude_axis = Vec3(1.0, 1.0, 1.0).normalized();
    double attitude_angle = 20.0 * kDeg;  // rad, rotation of the body away from the orbital frame
    Vec3 rate = Vec3(1.0, -1.0, 1.0).normalized() * (1.0 * kDeg);  // rad/s, relative to the orbital frame
    Vec3 wheel_momentum = Vec3::Zero();   // N m s, body axes
};

struct UnloadingConfig {
    double threshold = 20.0 * kDeg;  // rad
    PlannerOptions planner{};
    MomentScaling scaling = MomentScaling::normalize_to_max;
};

struct ScenarioConfig {
    std::uint64_t seed = 1;
    double duration = 3000.0;   // s
    double dt_truth = 0.1;      // s
    double dt_control = 1.0;    // s
    ControlMode mode = ControlMode::stabilize;

    FieldModelKind field_model = FieldModelKind::dipole;
    std::string igrf_path = "data/igrf13coeffs.txt";
    DipoleForm dipole_form = DipoleForm::orbital;
    double dipole_tilt = 9.6 * kDeg;  // rad, inertial form only
    double dipole_ra = 0.0;     // rad, inertial form only

    OrbitConfig orbit{};
    Mat3 inertia = reference_inertia().matrix();
    ControlGains gains{};
    MagnetometerSpec magnetometer{};
    SunSensorArraySpec sun_sensors{};
    WheelArraySpec wheels{};
    MagnetorquerSpec magnetorquer{};
    double sigma_dist = 3e-7;   // N m
    double ekf_sigma_mag = 2.0025e-6;  // T, environment and instrument combined
    int ekf_substeps = 10;
    bool closed_loop_prediction = false;  // re-evaluate the control law inside the prediction
    bool closed_loop_jacobian = false;    // include the gain blocks in the covariance Jacobian
    double P0_q = 1.0;
    double P0_w = 0.1;
    UnloadingConfig unloading{};
    InitialConditions initial{};
    std::string output = "telemetry.csv";

    void validate() const {
        if (!(duration >= 0.0) || !std::isfinite(duration)) throw Error("simcli", "duration must be >= 0");
        if (!(dt_truth > 0.0) || !(dt_control > 0.0)) throw Error("simcli", "time steps must be positive");
        const double ratio = dt_control / dt_truth;
        if (std::abs(ratio - std::round(ratio)) > 1e-9 * ratio) {
            throw Error("simcli", "dt_control must be an integer multiple of dt_truth");
        }
        const double steps = duration / dt_control;
        if (std::abs(steps - std::round(steps)) > 1e-9 * std::max(1.0, steps)) {
            throw Error("simcli", "duration must be a whole number of control periods");
        }
        orbit.validate();
        InertiaTensor{inertia};
        gains.validate();
        magnetometer.validate();
        sun_sensors.validate();
        wheels.validate();
        magnetorquer.validate();
        if (!(sigma_dist >= 0.0)) throw Error("simcli", "sigma_dist must be >= 0");
        if (!(ekf_sigma_mag > 0.0)) throw Error("simcli", "ekf sigma_mag must be positive");
        if (ekf_substeps < 1) throw Error("simcli", "ekf substeps must be >= 1");
        if (!(P0_q > 0.0) || !(P0_w > 0.0)) throw Error("simcli", "initial covariance deviations must be positive");
        if (unloading.threshold < 0.0 || unloading.threshold > kPi / 4.0) {
            throw Error("simcli", "unloading threshold must lie in [0, 45] deg");
        }
        if (!(initial.attitude_axis.norm() > 0.0)) throw Error("simcli", "initial attitude axis must be non-zero");
        if (!initial.rate.allFinite() || !initial.wheel_momentum.allFinite()) {
            throw Error("simcli", "initial conditions must be finite");
        }
    }
};

// ---------------------------------------------------------------------------
// JSON

namespace detail {

using nlohmann::json;

inline json vec3_to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

inline Vec3 vec3_from_json(const json& j, const std::string& key) {
    if (!j.is_array() || j.size() != 3) throw Error("simcli", "'" + key + "' must be an array of 3 numbers");
    Vec3 v;
    for (int i = 0; i < 3; ++i) {
        if (!j[static_cast<std::size_t>(i)].is_number()) throw Error("simcli", "'" + key + "' must hold numbers");
        v[i] = j[static_cast<std::size_t>(i)].get<double>();
    }
    return v;
}

template <int R, int C>
json mat_to_json(const Eigen::Matrix<double, R, C>& m) {
    json a = json::array();
    for (int r = 0; r < R; ++r) {
        json row = json::array();
        for (int c = 0; c < C; ++c) row.push_back(m(r, c));
        a.push_back(row);
    }
    return a;
}

template <int R, int C>
Eigen::Matrix<double, R, C> mat_from_json(const json& j, const std::string& key) {
    Eigen::Matrix<double, R, C> m;
    if (!j.is_array() || j.size() != R) throw Error("simcli", "'" + key + "' must have " + std::to_string(R) + " rows");
    for (int r = 0; r < R; ++r) {
        const json& row = j[static_cast<std::size_t>(r)];
        if (!row.is_array() || row.size() != C) {
            throw Error("simcli", "'" + key + "' rows must have " + std::to_string(C) + " entries");
        }
        for (int c = 0; c < C; ++c) {
            if (!row[static_cast<std::size_t>(c)].is_number()) throw Error("simcli", "'" + key + "' must hold numbers");
            m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
        }
    }
    return m;
}

/// Reads the keys of one JSON object, rejecting anything not consumed.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw Error("simcli", where() + " must be an object");
    }

    ~ObjectReader() noexcept(false) {
        if (std::uncaught_exceptions() > 0) return;
        for (const auto& [k, v] : j_.items()) {
            if (!seen_.count(k)) throw Error("simcli", "unknown config key '" + qualified(k) + "'");
        }
    }

    const json* get(const std::string& key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void number(const std::string& key, double& out, double scale = 1.0) {
        if (const json* v = get(key)) {
            if (!v->is_number()) throw Error("simcli", "'" + qualified(key) + "' must be a number");
            out = v->get<double>() * scale;
        }
    }

    void integer(const std::string& key, int& out) {
        if (const json* v = get(key)) {
            if (!v->is_number_integer()) throw Error("simcli", "'" + qualified(key) + "' must be an integer");
            out = v->get<int>();
        }
    }

    void text(const std::string& key, std::string& out) {
        if (const json* v = get(key)) {
            if (!v->is_string()) throw Error("simcli", "'" + qualified(key) + "' must be a string");
            out = v->get<std::string>();
        }
    }

    void boolean(const std::string& key, bool& out) {
        if (const json* v = get(key)) {
            if (!v->is_boolean()) throw Error("simcli", "'" + qualified(key) + "' must be true or false");
            out = v->get<bool>();
        }
    }

    void vec3(const std::string& key, Vec3& out, double scale = 1.0) {
        if (const json* v = get(key)) out = vec3_from_json(*v, qualified(key)) * scale;
    }

    std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

private:
    std::string where() const { return path_.empty() ? "config" : "'" + path_ + "'"; }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

template <class E>
E parse_enum(const std::string& s, const std::string& key, std::initializer_list<std::pair<const char*, E>> opts) {
    std::string names;
    for (const auto& [name, value] : opts) {
        if (s == name) return value;
        names += names.empty() ? name : std::string("|") + name;
    }
    throw Error("simcli", "'" + key + "' must be one of " + names + ", got '" + s + "'");
}

}  // namespace detail

inline std::string to_string(ControlMode m) { return m == ControlMode::stabilize ? "stabilize" : "unload"; }
inline std::string to_string(FieldModelKind k) { return k == FieldModelKind::dipole ? "dipole" : "igrf"; }

inline ControlMode parse_control_mode(const std::string& s) {
    return detail::parse_enum<ControlMode>(s, "mode", {{"stabilize", ControlMode::stabilize}, {"unload", ControlMode::unload}});
}

inline FieldModelKind parse_field_model(const std::string& s) {
    return detail::parse_enum<FieldModelKind>(s, "field_model",
                                              {{"dipole", FieldModelKind::dipole}, {"igrf", FieldModelKind::igrf}});
}

/// Angles are given in degrees in the file.
inline nlohmann::json config_to_json(const ScenarioConfig& c) {
    using nlohmann::json;
    using detail::vec3_to_json;
    json j;
    j["seed"] = c.seed;
    j["duration"] = c.duration;
    j["dt_truth"] = c.dt_truth;
    j["dt_control"] = c.dt_control;
    j["mode"] = to_string(c.mode);
    j["field_model"] = to_string(c.field_model);
    j["igrf_path"] = c.igrf_path;
    j["dipole"] = {{"form", c.dipole_form == DipoleForm::orbital ? "orbital" : "inertial"},
                   {"tilt_deg", c.dipole_tilt / kDeg},
                   {"right_ascension_deg", c.dipole_ra / kDeg}};
    j["orbit"] = {{"altitude_m", c.orbit.altitude},
                  {"inclination_deg", c.orbit.inclination / kDeg},
                  {"raan_deg", c.orbit.raan / kDeg},
                  {"u0_deg", c.orbit.u0 / kDeg},
                  {"epoch", c.orbit.epoch.iso()}};
    j["inertia"] = detail::mat_to_json<3, 3>(c.inertia);
    j["gains"] = {{"k_q", c.gains.k_q},
                  {"k_w", c.gains.k_w},
                  {"q_req", json::array({c.gains.q_req.q0, c.gains.q_req.qv.x(), c.gains.q_req.qv.y(), c.gains.q_req.qv.z()})},
                  {"rate_reference", c.gains.rate_reference == RateReference::zero ? "zero" : "orbital"}};
    j["magnetometer"] = {{"sigma_env", c.magnetometer.sigma_env},
                         {"mu_env", c.magnetometer.mu_env},
                         {"sigma_mtm", c.magnetometer.sigma_mtm},
                         {"mu_mtm", c.magnetometer.mu_mtm}};
    json bores = json::array();
    for (const auto& b : c.sun_sensors.boresights) bores.push_back(vec3_to_json(b));
    j["sun_sensors"] = {{"boresights", bores},
                        {"fov_half_angle_deg", c.sun_sensors.fov_half_angle / kDeg},
                        {"sigma_deg", c.sun_sensors.sigma / kDeg}};
    j["wheels"] = {{"installation", detail::mat_to_json<3, 4>(c.wheels.W)},
                   {"weight", detail::mat_to_json<4, 4>(c.wheels.A)},
                   {"torque_max", c.wheels.M_max},
                   {"momentum_max", c.wheels.h_max}};
    j["magnetorquer"] = {{"turns", c.magnetorquer.n_turns},
                         {"coil_area", c.magnetorquer.coil_area},
                         {"resistance", c.magnetorquer.resistance},
                         {"voltage_max", c.magnetorquer.v_max}};
    j["sigma_dist"] = c.sigma_dist;
    j["ekf"] = {{"sigma_mag", c.ekf_sigma_mag}, {"substeps", c.ekf_substeps}, {"P0_q", c.P0_q}, {"P0_w", c.P0_w},
                {"closed_loop_prediction", c.closed_loop_prediction}, {"closed_loop_jacobian", c.closed_loop_jacobian}};
    j["unloading"] = {{"threshold_deg", c.unloading.threshold / kDeg},
                      {"earliest_start", c.unloading.planner.earliest_start},
                      {"sample_step", c.unloading.planner.sample_step},
                      {"field_floor", c.unloading.planner.field_floor},
                      {"h_target", c.unloading.planner.h_target},
                      {"scaling", c.unloading.scaling == MomentScaling::normalize_to_max ? "normalize_to_max"
                                                                                         : "scale_down_only"}};
    j["initial"] = {{"attitude_axis", vec3_to_json(c.initial.attitude_axis)},
                    {"attitude_angle_deg", c.initial.attitude_angle / kDeg},
                    {"rate_deg_s", vec3_to_json(c.initial.rate / kDeg)},
                    {"wheel_momentum", vec3_to_json(c.initial.wheel_momentum)}};
    j["output"] = c.output;
    return j;
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline ScenarioConfig config_from_json(const nlohmann::json& j) {
    using detail::ObjectReader;
    ScenarioConfig c;
    ObjectReader r(j, "");
    if (const auto* v = r.get("seed")) {
        if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<std::int64_t>() >= 0)) {
            throw Error("simcli", "'seed' must be a non-negative integer");
        }
        c.seed = v->get<std::uint64_t>();
    }
    r.number("duration", c.duration);
    r.number("dt_truth", c.dt_truth);
    r.number("dt_control", c.dt_control);
    std::string s;
    if (r.get("mode")) {
        r.text("mode", s);
        c.mode = parse_control_mode(s);
    }
    if (r.get("field_model")) {
        r.text("field_model", s);
        c.field_model = parse_field_model(s);
    }
    r.text("igrf_path", c.igrf_path);
    if (const auto* v = r.get("dipole")) {
        ObjectReader d(*v, "dipole");
        if (d.get("form")) {
            d.text("form", s);
            c.dipole_form = detail::parse_enum<DipoleForm>(s, "dipole.form",
                                                           {{"orbital", DipoleForm::orbital}, {"inertial", DipoleForm::inertial}});
        }
        d.number("tilt_deg", c.dipole_tilt, kDeg);
        d.number("right_ascension_deg", c.dipole_ra, kDeg);
    }
    if (const auto* v = r.get("orbit")) {
        ObjectReader o(*v, "orbit");
        o.number("altitude_m", c.orbit.altitude);
        o.number("inclination_deg", c.orbit.inclination, kDeg);
        o.number("raan_deg", c.orbit.raan, kDeg);
        o.number("u0_deg", c.orbit.u0, kDeg);
        if (o.get("epoch")) {
            o.text("epoch", s);
            try {
                c.orbit.epoch = Epoch::parse(s);
            } catch (const Error& e) {
                throw Error("simcli", std::string("'orbit.epoch': ") + e.what());
            }
        }
    }
    if (const auto* v = r.get("inertia")) c.inertia = detail::mat_from_json<3, 3>(*v, "inertia");
    if (const auto* v = r.get("gains")) {
        ObjectReader g(*v, "gains");
        g.number("k_q", c.gains.k_q);
        g.number("k_w", c.gains.k_w);
        if (const auto* q = g.get("q_req")) {
            if (!q->is_array() || q->size() != 4) throw Error("simcli", "'gains.q_req' must be an array of 4 numbers");
            Vec4 qv;
            for (int i = 0; i < 4; ++i) qv[i] = (*q)[static_cast<std::size_t>(i)].get<double>();
            c.gains.q_req = Quaternion::from_vec4(qv);
        }
        if (g.get("rate_reference")) {
            g.text("rate_reference", s);
            c.gains.rate_reference = detail::parse_enum<RateReference>(
                s, "gains.rate_reference", {{"zero", RateReference::zero}, {"orbital", RateReference::orbital}});
        }
    }
    if (const auto* v = r.get("magnetometer")) {
        ObjectReader m(*v, "magnetometer");
        m.number("sigma_env", c.magnetometer.sigma_env);
        m.number("mu_env", c.magnetometer.mu_env);
        m.number("sigma_mtm", c.magnetometer.sigma_mtm);
        m.number("mu_mtm", c.magnetometer.mu_mtm);
    }
    if (const auto* v = r.get("sun_sensors")) {
        ObjectReader m(*v, "sun_sensors");
        if (const auto* b = m.get("boresights")) {
            if (!b->is_array() || b->size() != c.sun_sensors.boresights.size()) {
                throw Error("simcli", "'sun_sensors.boresights' must list exactly 5 vectors");
            }
            for (std::size_t i = 0; i < b->size(); ++i) {
                c.sun_sensors.boresights[i] = detail::vec3_from_json((*b)[i], "sun_sensors.boresights");
            }
        }
        m.number("fov_half_angle_deg", c.sun_sensors.fov_half_angle, kDeg);
        m.number("sigma_deg", c.sun_sensors.sigma, kDeg);
    }
    if (const auto* v = r.get("wheels")) {
        ObjectReader w(*v, "wheels");
        if (const auto* m = w.get("installation")) c.wheels.W = detail::mat_from_json<3, 4>(*m, "wheels.installation");
        if (const auto* m = w.get("weight")) c.wheels.A = detail::mat_from_json<4, 4>(*m, "wheels.weight");
        w.number("torque_max", c.wheels.M_max);
        w.number("momentum_max", c.wheels.h_max);
    }
    if (const auto* v = r.get("magnetorquer")) {
        ObjectReader m(*v, "magnetorquer");
        m.number("turns", c.magnetorquer.n_turns);
        m.number("coil_area", c.magnetorquer.coil_area);
        m.number("resistance", c.magnetorquer.resistance);
        m.number("voltage_max", c.magnetorquer.v_max);
    }
    r.number("sigma_dist", c.sigma_dist);
    if (const auto* v = r.get("ekf")) {
        ObjectReader e(*v, "ekf");
        e.number("sigma_mag", c.ekf_sigma_mag);
        e.integer("substeps", c.ekf_substeps);
        e.number("P0_q", c.P0_q);
        e.number("P0_w", c.P0_w);
        e.boolean("closed_loop_prediction", c.closed_loop_prediction);
        e.boolean("closed_loop_jacobian", c.closed_loop_jacobian);
    }
    if (const auto* v = r.get("unloading")) {
        ObjectReader u(*v, "unloading");
        u.number("threshold_deg", c.unloading.threshold, kDeg);
        u.number("earliest_start", c.unloading.planner.earliest_start);
        u.number("sample_step", c.unloading.planner.sample_step);
        u.number("field_floor", c.unloading.planner.field_floor);
        u.number("h_target", c.unloading.planner.h_target);
        if (u.get("scaling")) {
            u.text("scaling", s);
            c.unloading.scaling = detail::parse_enum<MomentScaling>(
                s, "unloading.scaling",
                {{"normalize_to_max", MomentScaling::normalize_to_max}, {"scale_down_only", MomentScaling::scale_down_only}});
        }
    }
    if (const auto* v = r.get("initial")) {
        ObjectReader i(*v, "initial");
        i.vec3("attitude_axis", c.initial.attitude_axis);
        i.number("attitude_angle_deg", c.initial.attitude_angle, kDeg);
        i.vec3("rate_deg_s", c.initial.rate, kDeg);
        i.vec3("wheel_momentum", c.initial.wheel_momentum);
    }
    r.text("output", c.output);
    return c;
}

inline ScenarioConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("simcli", "cannot open config file '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error("simcli", path + ": " + e.what());
    }
    ScenarioConfig c = config_from_json(j);
    // A relative coefficient path written in the file is relative to the file.
    if (j.contains("igrf_path") && std::filesystem::path(c.igrf_path).is_relative()) {
        c.igrf_path = (std::filesystem::path(path).parent_path() / c.igrf_path).lexically_normal().string();
    }
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Run

inline GeomagModel make_field_model(const ScenarioConfig& cfg, std::shared_ptr<const GaussCoefficients> coeffs = nullptr) {
    if (cfg.field_model == FieldModelKind::igrf) {
        if (!coeffs) coeffs = std::make_shared<const GaussCoefficients>(load_igrf_coefficients(cfg.igrf_path));
        return GeomagModel::igrf(std::move(coeffs), cfg.orbit.epoch);
    }
    const DipoleParams p = cfg.dipole_form == DipoleForm::inertial ? DipoleParams::tilted(cfg.dipole_tilt, cfg.dipole_ra)
                                                                   : DipoleParams{};
    return GeomagModel::dipole(p, cfg.orbit.inclination, cfg.dipole_form);
}

struct RunResult {
    Telemetry telemetry;
    RunReport report;
    std::optional<UnloadingPlan> plan;
};

/// Closed-loop run. Truth advances at dt_truth; sensing, estimation and
/// control run every dt_control and hold their commands in between. One
/// telemetry record is produced per control step (at the start of the
/// step) and, when `sink` is given, written to it as it is produced.
inline RunResult run_scenario(const ScenarioConfig& cfg, std::ostream* sink = nullptr,
                              std::shared_ptr<const GaussCoefficients> coeffs = nullptr) {
    cfg.validate();
    const GeomagModel model = make_field_model(cfg, std::move(coeffs));
    const InertiaTensor J(cfg.inertia);
    const double n = cfg.orbit.mean_motion();
    const double m_max = magnetorquer_max_moment(cfg.magnetorquer);

    RunResult result;
    if (cfg.mode == ControlMode::unload && cfg.duration > 0.0) {
        result.plan = plan_unloading_windows(cfg.orbit, model, cfg.duration, cfg.unloading.threshold, cfg.unloading.planner);
    }
    const UnloadingPlan* plan = result.plan ? &*result.plan : nullptr;

    Rng rng_env(cfg.seed, NoiseStream::environment);
    Rng rng_mtm(cfg.seed, NoiseStream::magnetometer);
    Rng rng_sun(cfg.seed, NoiseStream::sun_sensor);
    Rng rng_dist(cfg.seed, NoiseStream::disturbance);

    EkfConfig ekf_cfg;
    ekf_cfg.sigma_dist = cfg.sigma_dist;
    ekf_cfg.sigma_mag = cfg.ekf_sigma_mag;
    ekf_cfg.sigma_ss = cfg.sun_sensors.sigma > 0.0 ? cfg.sun_sensors.sigma : 1e-6;
    ekf_cfg.k_q = cfg.gains.k_q;
    ekf_cfg.k_w = cfg.gains.k_w;
    ekf_cfg.dt = cfg.dt_control;
    ekf_cfg.substeps = cfg.ekf_substeps;
    ekf_cfg.mean_motion = n;
    ekf_cfg.closed_loop_jacobian = cfg.closed_loop_jacobian;

    const ControllerContext ctx{J, cfg.gains, cfg.wheels, m_max, n, cfg.unloading.scaling};

    RigidBodyState truth;
    truth.q_o2b = Quaternion::from_axis_angle(cfg.initial.attitude_axis.normalized(), cfg.initial.attitude_angle);
    truth.omega = orbital_rate_in_body(truth.q_o2b, n) + cfg.initial.rate;
    WheelArrayState wheels;
    wheels.h_wheel = allocate_wheel_torques(cfg.initial.wheel_momentum, cfg.wheels);

    const ControlLaw law = [&](const Quaternion& q, const Vec3& w) {
        const Vec3 w_req = cfg.gains.rate_reference == RateReference::orbital ? orbital_rate_in_body(q, n) : Vec3::Zero();
        return pd_control(error_quaternion(q, cfg.gains.q_req), w - w_req, J, cfg.gains);
    };

    std::optional<EkfState> est;
    TorqueSet known;  // torques the filter is told about over the last period
    Vec3 h_body_prev = wheels.h_body(cfg.wheels);

    const auto steps = static_cast<long>(std::llround(cfg.duration / cfg.dt_control));
    const auto substeps = static_cast<int>(std::lround(cfg.dt_control / cfg.dt_truth));
    if (sink) write_telemetry_header(*sink);
    result.telemetry.reserve(static_cast<std::size_t>(steps));

    for (long k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) * cfg.dt_control;
        try {
            truth.t = t;
            const OrbitState orbit = propagate_circular(cfg.orbit, t);
            const Quaternion q_e2o = orbital_frame_quaternion(orbit);
            const Vec3 B_orb = model.orbital(orbit);
            const Vec3 B_body = to_frame(truth.q_o2b, B_orb);
            const Vec3 B_env = environment_field(B_body, cfg.magnetometer, rng_env);
            const Vec3 B_mtm = magnetometer_reading(B_env, cfg.magnetometer, rng_mtm);
            const Vec3 sun_eci = sun_direction_eci(cfg.orbit.epoch, t);
            const bool sunlit = eclipse_state(orbit.r_eci, sun_eci);
            const Vec3 sun_orb = to_frame(q_e2o, sun_eci);
            const SunReading sun = measure_sun(to_frame(truth.q_o2b, sun_orb), sunlit, cfg.sun_sensors, rng_sun);

            ObservationBundle obs;
            obs.mag = B_mtm.normalized();
            obs.mag_valid = B_mtm.norm() > 0.0;
            obs.sun = sun.r_ss;
            obs.sun_valid = sun.valid;
            const ReferenceVectors ref{B_orb, B_orb.norm(), sun_orb};

            if (!est) {
                if (sun.valid) {
                    EkfState s;
                    s.q = triad_attitude(B_mtm, sun.r_ss, B_orb, sun_orb);
                    s.omega = Vec3::Zero();
                    s.P = initial_covariance(cfg.P0_q, cfg.P0_w);
                    s.t = t;
                    est = s;
                }
            } else {
                est = ekf_step(*est, obs, ref, ekf_cfg, J, h_body_prev, known, cfg.closed_loop_prediction ? law : ControlLaw{});
                est->t = t;
            }

            ControlCommand cmd;
            if (est) cmd = controller_step(cfg.mode, *est, B_mtm, wheels, plan, t, ctx);
            const Vec3 M_unload = magnetorquer_torque(cmd.m_mtq, B_env);
            const Vec3 M_dist = disturbance_torque(rng_dist, cfg.sigma_dist);

            TelemetryRecord rec;
            rec.t = t;
            rec.q_true = truth.q_o2b.canonical().vec4();
            rec.q_est = est ? est->q.vec4() : Quaternion::identity().vec4();
            rec.w_true = truth.omega / kDeg;
            rec.w_est = est ? Vec3(est->omega / kDeg) : Vec3::Zero();
            const Quaternion q_err = cfg.gains.q_req.conj() * truth.q_o2b;
            rec.euler_err = euler_321(q_err.canonical()) / kDeg;
            rec.rate_err = (truth.omega - orbital_rate_in_body(truth.q_o2b, n)) / kDeg;
            rec.pointing_err = q_err.angle() / kDeg;
            rec.B_body = B_body;
            rec.h_wheel = wheels.h_wheel;
            rec.h_body = wheels.h_body(cfg.wheels);
            rec.m_mtq = cmd.m_mtq;
            rec.M_control = cmd.M_ctrl;
            rec.M_disturbance = M_dist;
            rec.M_unloading = M_unload;
            rec.sunlit = sunlit;
            rec.sun_valid = sun.valid;
            rec.in_window = plan != nullptr && plan->active_at(t);
            rec.unloading_active = cmd.unloading_active;
            if (est) {
                rec.P_min_eig = min_eigenvalue(est->P);
                rec.P_asym = (est->P - est->P.transpose()).cwiseAbs().maxCoeff();
            } else {
                const Mat6 P0 = initial_covariance(cfg.P0_q, cfg.P0_w);
                rec.P_min_eig = min_eigenvalue(P0);
            }
            if (sink) write_telemetry_row(*sink, rec);
            result.telemetry.push_back(rec);

            // Truth over one control period with the commands held.
            h_body_prev = wheels.h_body(cfg.wheels);
            const double dt = cfg.dt_control / substeps;
            for (int i = 0; i < substeps; ++i) {
                const WheelStepResult ws = apply_wheel_step(wheels, cmd.tau_wheels, dt, cfg.wheels);
                TorqueSet M;
                M.control = ws.body_torque;
                M.disturbance = M_dist;
                M.unloading = M_unload;
                truth.t = t + i * dt;
                truth = step_truth(truth, J, wheels.h_body(cfg.wheels), M, n, dt);
                wheels = ws.state;
            }
            // Wheel tachometers give the applied reaction exactly; the torquer
            // torque is known only through the sensed field.
            known.control = -(wheels.h_body(cfg.wheels) - h_body_prev) / cfg.dt_control;
            known.disturbance = Vec3::Zero();
            known.unloading = magnetorquer_torque(cmd.m_mtq, B_mtm);
        } catch (const Error& e) {
            throw Error(e.module(), "at t = " + std::to_string(t) + " s: " + e.what());
        }
    }
    result.report = result.telemetry.empty() ? RunReport{} : compute_report(result.telemetry);
    return result;
}

// ---------------------------------------------------------------------------
// Field survey

struct FieldSampleRow {
    double t = 0.0;
    double u = 0.0;         // rad
    double latitude = 0.0;  // rad, geocentric
    double longitude = 0.0; // rad, Earth-fixed
    Vec3 B_eci = Vec3::Zero();
    Vec3 B_orbital = Vec3::Zero();
};

/// Field along the orbit, sampled every `step` seconds over [0, duration].
inline std::vector<FieldSampleRow> field_along_orbit(const OrbitConfig& orbit, const GeomagModel& model,
                                                     double duration, double step) {
    if (!(step > 0.0) || !(duration >= 0.0)) throw Error("simcli", "field survey needs step > 0 and duration >= 0");
    std::vector<FieldSampleRow> rows;
    const auto count = static_cast<long>(std::floor(duration / step + 1e-9));
    for (long k = 0; k <= count; ++k) {
        const double t = static_cast<double>(k) * step;
        const OrbitState st = propagate_circular(orbit, t);
        FieldSampleRow r;
        r.t = t;
        r.u = st.u;
        r.latitude = std::asin(st.r_eci.z() / st.r_eci.norm());
        const Vec3 r_ecef = rot_z(-gmst(orbit.epoch, t)) * st.r_eci;
        r.longitude = std::atan2(r_ecef.y(), r_ecef.x());
        r.B_eci = model.eci(st);
        r.B_orbital = model.orbital(st);
        rows.push_back(r);
    }
    return rows;
}

}  // namespace geoadcs
