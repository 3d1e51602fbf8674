#pragma once

// Per-control-step telemetry, its CSV representation and the metrics
// computed from it (settling time, RMSE, unloading reductions).

#include "geoadcs/math.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace geoadcs {

struct TelemetryRecord {
    double t = 0.0;                    // s
    Vec4 q_true = Vec4(1, 0, 0, 0);
    Vec4 q_est = Vec4(1, 0, 0, 0);
    Vec3 w_true = Vec3::Zero();        // deg/s
    Vec3 w_est = Vec3::Zero();         // deg/s
    Vec3 euler_err = Vec3::Zero();     // deg (roll, pitch, yaw) of the true attitude w.r.t. the target
    Vec3 rate_err = Vec3::Zero();      // deg/s, true rate relative to the orbital frame
    double pointing_err = 0.0;         // deg
    Vec3 B_body = Vec3::Zero();        // T, model field in body axes
    Vec4 h_wheel = Vec4::Zero();       // N m s
    Vec3 h_body = Vec3::Zero();        // N m s
    Vec3 m_mtq = Vec3::Zero();         // A m^2
    Vec3 M_control = Vec3::Zero();     // N m
    Vec3 M_disturbance = Vec3::Zero(); // N m
    Vec3 M_unloading = Vec3::Zero();   // N m
    bool sunlit = false;
    bool sun_valid = false;
    bool in_window = false;
    bool unloading_active = false;
    double P_min_eig = 0.0;
    double P_asym = 0.0;
};

using Telemetry = std::vector<TelemetryRecord>;

namespace detail {

inline const std::vector<std::string>& telemetry_columns() {
    static const std::vector<std::string> cols = {
        "t",
        "q_true0", "q_true1", "q_true2", "q_true3",
        "q_est0", "q_est1", "q_est2", "q_est3",
        "w_true_x", "w_true_y", "w_true_z",
        "w_est_x", "w_est_y", "w_est_z",
        "roll_err", "pitch_err", "yaw_err",
        "rate_err_x", "rate_err_y", "rate_err_z",
        "pointing_err",
        "B_x", "B_y", "B_z",
        "h_w1", "h_w2", "h_w3", "h_w4",
        "h_x", "h_y", "h_z",
        "m_x", "m_y", "m_z",
        "Mc_x", "Mc_y", "Mc_z",
        "Md_x", "Md_y", "Md_z",
        "Mu_x", "Mu_y", "Mu_z",
        "sunlit", "sun_valid", "in_window", "unloading_active",
        "P_min_eig", "P_asym",
    };
    return cols;
}

inline void put(std::string& line, double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    line.append(buf, p);
    line.push_back(',');
}

template <int N>
void put(std::string& line, const Eigen::Matrix<double, N, 1>& v) {
    for (int i = 0; i < N; ++i) put(line, v[i]);
}

}  // namespace detail

inline constexpr const char* kTelemetryUnits =
    "# units: t s; q dimensionless; w deg/s; *_err deg or deg/s; B T; h N m s; m A m^2; M N m; flags 0/1";

inline void write_telemetry_header(std::ostream& os) {
    os << kTelemetryUnits << '\n';
    const auto& cols = detail::telemetry_columns();
    for (std::size_t i = 0; i < cols.size(); ++i) os << cols[i] << (i + 1 < cols.size() ? ',' : '\n');
}

/// Shortest round-trip decimal form, so that reading the file back gives
/// the same doubles bit for bit.
inline void write_telemetry_row(std::ostream& os, const TelemetryRecord& r) {
    std::string line;
    line.reserve(900);
    detail::put(line, r.t);
    detail::put(line, r.q_true);
    detail::put(line, r.q_est);
    detail::put(line, r.w_true);
    detail::put(line, r.w_est);
    detail::put(line, r.euler_err);
    detail::put(line, r.rate_err);
    detail::put(line, r.pointing_err);
    detail::put(line, r.B_body);
    detail::put(line, r.h_wheel);
    detail::put(line, r.h_body);
    detail::put(line, r.m_mtq);
    detail::put(line, r.M_control);
    detail::put(line, r.M_disturbance);
    detail::put(line, r.M_unloading);
    for (bool f : {r.sunlit, r.sun_valid, r.in_window, r.unloading_active}) line += f ? "1," : "0,";
    detail::put(line, r.P_min_eig);
    detail::put(line, r.P_asym);
    line.back() = '\n';
    os << line;
}

inline void write_telemetry(std::ostream& os, const Telemetry& tel) {
    write_telemetry_header(os);
    for (const auto& r : tel) write_telemetry_row(os, r);
}

inline Telemetry read_telemetry(std::istream& is, const std::string& source = "<stream>") {
    const auto& cols = detail::telemetry_columns();
    Telemetry out;
    std::string line;
    int line_no = 0;
    bool header_seen = false;
    std::vector<double> v(cols.size());
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            std::string expected;
            for (std::size_t i = 0; i < cols.size(); ++i) expected += cols[i] + (i + 1 < cols.size() ? "," : "");
            if (line != expected) throw Error("simcli", source + ": unexpected telemetry header");
            header_seen = true;
            continue;
        }
        const char* p = line.data();
        const char* end = line.data() + line.size();
        for (std::size_t i = 0; i < cols.size(); ++i) {
            auto [q, ec] = std::from_chars(p, end, v[i]);
            if (ec != std::errc{}) {
                throw Error("simcli", source + ":" + std::to_string(line_no) + ": bad value in column " + cols[i]);
            }
            p = q;
            if (i + 1 < cols.size()) {
                if (p == end || *p != ',') throw Error("simcli", source + ":" + std::to_string(line_no) + ": too few columns");
                ++p;
            }
        }
        if (p != end) throw Error("simcli", source + ":" + std::to_string(line_no) + ": too many columns");
        TelemetryRecord r;
        std::size_t k = 0;
        auto take = [&](auto& vec) {
            for (int i = 0; i < vec.size(); ++i) vec[i] = v[k++];
        };
        r.t = v[k++];
        take(r.q_true);
        take(r.q_est);
        take(r.w_true);
        take(r.w_est);
        take(r.euler_err);
        take(r.rate_err);
        r.pointing_err = v[k++];
        take(r.B_body);
        take(r.h_wheel);
        take(r.h_body);
        take(r.m_mtq);
        take(r.M_control);
        take(r.M_disturbance);
        take(r.M_unloading);
        r.sunlit = v[k++] != 0.0;
        r.sun_valid = v[k++] != 0.0;
        r.in_window = v[k++] != 0.0;
        r.unloading_active = v[k++] != 0.0;
        r.P_min_eig = v[k++];
        r.P_asym = v[k++];
        if (!out.empty() && !(r.t > out.back().t)) {
            throw Error("simcli", source + ":" + std::to_string(line_no) + ": time not increasing");
        }
        out.push_back(r);
    }
    if (!header_seen) throw Error("simcli", source + ": missing telemetry header");
    return out;
}

inline Telemetry read_telemetry_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("simcli", "cannot open telemetry file '" + path + "'");
    return read_telemetry(in, path);
}

// ---------------------------------------------------------------------------
// Metrics

struct UnloadingEvent {
    double t_start = 0.0, t_end = 0.0;
    Vec3 h_before = Vec3::Zero();
    Vec3 h_after = Vec3::Zero();
    Vec3 percent_reduction = Vec3::Zero();
};

struct RunReport {
    Vec3 rmse_euler = Vec3::Zero();  // deg
    Vec3 rmse_rates = Vec3::Zero();  // deg/s
    double settle_time = 0.0;        // s
    bool settled = false;
    double window_start = 0.0, window_end = 0.0;
    Vec3 mean_rate = Vec3::Zero();   // deg/s, mean true body rate over the window
    double max_pointing_after_settle = 0.0;  // deg
    double max_moment = 0.0;         // A m^2, largest commanded torquer component
    double min_P_eig = 0.0;
    double max_P_asym = 0.0;
    std::vector<UnloadingEvent> unloading_events;
    std::optional<UnloadingEvent> unloading_combined;  // first window start to last window end
};

inline constexpr double kSettleThresholdDeg = 1.0;
inline constexpr double kSettleHoldSeconds = 60.0;

/// First time after which the pointing error stays below 1 deg for 60 s.
inline std::optional<double> settle_time(const Telemetry& tel, double threshold_deg = kSettleThresholdDeg,
                                         double hold = kSettleHoldSeconds) {
    // next_bad[i]: index of the first sample at or after i that violates the threshold.
    std::vector<std::size_t> next_bad(tel.size() + 1, tel.size());
    for (std::size_t i = tel.size(); i-- > 0;) {
        next_bad[i] = tel[i].pointing_err < threshold_deg ? next_bad[i + 1] : i;
    }
    std::size_t j = 0;  // first index with t > t_i + hold
    for (std::size_t i = 0; i < tel.size(); ++i) {
        if (tel.back().t < tel[i].t + hold) break;
        j = std::max(j, i);
        while (j < tel.size() && tel[j].t <= tel[i].t + hold) ++j;
        if (next_bad[i] >= j) return tel[i].t;
    }
    return std::nullopt;
}

/// Time after the last sample whose pointing error reaches `threshold_deg`
/// (0 if none does).
inline double time_after_last_exceedance(const Telemetry& tel, double threshold_deg) {
    double t = 0.0;
    for (std::size_t i = 0; i < tel.size(); ++i) {
        if (!(tel[i].pointing_err < threshold_deg)) t = i + 1 < tel.size() ? tel[i + 1].t : tel[i].t;
    }
    return t;
}

struct RmseResult {
    Vec3 euler = Vec3::Zero();
    Vec3 rates = Vec3::Zero();
    std::size_t samples = 0;
};

inline RmseResult compute_rmse(const Telemetry& tel, double t0, double t1) {
    RmseResult r;
    for (const auto& rec : tel) {
        if (rec.t < t0 || rec.t > t1) continue;
        r.euler += rec.euler_err.cwiseAbs2();
        r.rates += rec.rate_err.cwiseAbs2();
        ++r.samples;
    }
    if (r.samples == 0) throw Error("simcli", "RMSE window contains no samples");
    r.euler = (r.euler / static_cast<double>(r.samples)).cwiseSqrt();
    r.rates = (r.rates / static_cast<double>(r.samples)).cwiseSqrt();
    return r;
}

inline Vec3 percent_reduction(const Vec3& before, const Vec3& after) {
    Vec3 p;
    for (int i = 0; i < 3; ++i) {
        p[i] = before[i] == 0.0 ? (after[i] == 0.0 ? 0.0 : -std::numeric_limits<double>::infinity())
                                : 100.0 * (1.0 - std::abs(after[i]) / std::abs(before[i]));
    }
    return p;
}

/// One event per contiguous run of samples inside a planned window.
inline std::vector<UnloadingEvent> compute_unloading_report(const Telemetry& tel) {
    std::vector<UnloadingEvent> events;
    std::size_t i = 0;
    while (i < tel.size()) {
        if (!tel[i].in_window) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j + 1 < tel.size() && tel[j + 1].in_window) ++j;
        UnloadingEvent e;
        e.t_start = tel[i].t;
        e.t_end = tel[j].t;
        e.h_before = tel[i].h_body;
        e.h_after = tel[j].h_body;
        e.percent_reduction = percent_reduction(e.h_before, e.h_after);
        events.push_back(e);
        i = j + 1;
    }
    return events;
}

/// Report over [t0, t1]; without an explicit window the RMSE runs from the
/// settling time to the end of the run.
inline RunReport compute_report(const Telemetry& tel, std::optional<std::pair<double, double>> window = std::nullopt) {
    RunReport rep;
    if (tel.empty()) return rep;
    const auto ts = settle_time(tel);
    rep.settled = ts.has_value();
    rep.settle_time = ts.value_or(tel.back().t);
    if (window) {
        rep.window_start = window->first;
        rep.window_end = window->second;
    } else {
        rep.window_start = rep.settle_time;
        rep.window_end = tel.back().t;
    }
    const RmseResult rm = compute_rmse(tel, rep.window_start, rep.window_end);
    rep.rmse_euler = rm.euler;
    rep.rmse_rates = rm.rates;
    std::size_t n = 0;
    rep.min_P_eig = std::numeric_limits<double>::infinity();
    for (const auto& r : tel) {
        rep.max_moment = std::max(rep.max_moment, r.m_mtq.cwiseAbs().maxCoeff());
        rep.min_P_eig = std::min(rep.min_P_eig, r.P_min_eig);
        rep.max_P_asym = std::max(rep.max_P_asym, r.P_asym);
        if (r.t >= rep.window_start && r.t <= rep.window_end) {
            rep.mean_rate += r.w_true;
            rep.max_pointing_after_settle = std::max(rep.max_pointing_after_settle, r.pointing_err);
            ++n;
        }
    }
    if (n > 0) rep.mean_rate /= static_cast<double>(n);
    rep.unloading_events = compute_unloading_report(tel);
    if (!rep.unloading_events.empty()) {
        UnloadingEvent c;
        c.t_start = rep.unloading_events.front().t_start;
        c.t_end = rep.unloading_events.back().t_end;
        c.h_before = rep.unloading_events.front().h_before;
        c.h_after = rep.unloading_events.back().h_after;
        c.percent_reduction = percent_reduction(c.h_before, c.h_after);
        rep.unloading_combined = c;
    }
    return rep;
}

namespace detail {
inline nlohmann::json vec_json(const Vec3& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); }

// JSON has no infinity; non-finite percentages are written as null.
inline nlohmann::json pct_json(const Vec3& v) {
    nlohmann::json a = nlohmann::json::array();
    for (int i = 0; i < 3; ++i) a.push_back(std::isfinite(v[i]) ? nlohmann::json(v[i]) : nlohmann::json(nullptr));
    return a;
}

inline nlohmann::json event_json(const UnloadingEvent& e) {
    return {{"t_start", e.t_start},
            {"t_end", e.t_end},
            {"h_before", vec_json(e.h_before)},
            {"h_after", vec_json(e.h_after)},
            {"percent_reduction", pct_json(e.percent_reduction)}};
}
}  // namespace detail

inline nlohmann::json report_to_json(const RunReport& r) {
    nlohmann::json j;
    j["rmse_euler_deg"] = detail::vec_json(r.rmse_euler);
    j["rmse_rates_deg_s"] = detail::vec_json(r.rmse_rates);
    j["settle_time_s"] = r.settle_time;
    j["settled"] = r.settled;
    j["window_s"] = {r.window_start, r.window_end};
    j["mean_rate_deg_s"] = detail::vec_json(r.mean_rate);
    j["max_pointing_err_in_window_deg"] = r.max_pointing_after_settle;
    j["max_torquer_moment_Am2"] = r.max_moment;
    j["min_covariance_eigenvalue"] = r.min_P_eig;
    j["max_covariance_asymmetry"] = r.max_P_asym;
    j["unloading_events"] = nlohmann::json::array();
    for (const auto& e : r.unloading_events) j["unloading_events"].push_back(detail::event_json(e));
    j["unloading_combined"] = r.unloading_combined ? detail::event_json(*r.unloading_combined) : nlohmann::json(nullptr);
    return j;
}

}  // namespace geoadcs
