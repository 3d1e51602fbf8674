#pragma once

// Geomagnetic field models: the tilted direct dipole (inertial and
// orbital-frame forms) and the IGRF spherical-harmonic synthesis, plus the
// frame chain that brings either into the satellite body frame.

#include "geoadcs/math.hpp"
#include "geoadcs/orbit.hpp"

#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace geoadcs {

inline constexpr double kIgrfReferenceRadius = 6371200.0;  // m
inline constexpr double kNanoTesla = 1e-9;

enum class Frame { eci, ecef, local_spherical, orbital, body };

struct FieldSample {
    Vec3 B = Vec3::Zero();  // T
    Frame frame = Frame::eci;
};

// ---------------------------------------------------------------------------
// Direct dipole

struct DipoleParams {
    double mu_e = 7.94e22;   // A m^2
    double mu_0 = 1.257e-6;  // N A^-2
    Vec3 k_hat = -Vec3::UnitZ();  // unit dipole-moment direction, ECI (points geographic south)

    /// Dipole whose north geomagnetic pole sits `tilt` away from the ECI +z
    /// axis at right ascension `ra`; the moment points the other way.
    static DipoleParams tilted(double tilt, double ra) {
        DipoleParams p;
        p.k_hat = -Vec3(std::sin(tilt) * std::cos(ra), std::sin(tilt) * std::sin(ra), std::cos(tilt));
        return p;
    }

    /// μ_e μ_0 / 4π, the field scale in T·m^3.
    double strength() const { return mu_e * mu_0 / (4.0 * kPi); }

    void validate() const {
        if (!(mu_e > 0.0)) throw Error("geomag", "dipole moment must be positive");
        if (std::abs(k_hat.norm() - 1.0) > 1e-9) throw Error("geomag", "dipole axis must be a unit vector");
    }
};

/// Dipole induction at an inertial position:
/// B = −(μ_e μ_0 / 4π|r|^5) (k|r|^2 − 3(k·r) r).
inline FieldSample dipole_field_inertial(const Vec3& r_sat, const DipoleParams& p) {
    const double r2 = r_sat.squaredNorm();
    if (!(r2 > 0.0)) throw Error("geomag", "dipole field undefined at the origin");
    const double r = std::sqrt(r2);
    const double r5 = r2 * r2 * r;
    return {-(p.strength() / r5) * (p.k_hat * r2 - 3.0 * p.k_hat.dot(r_sat) * r_sat), Frame::eci};
}

/// Orbital-frame dipole induction for a circular orbit of radius r,
/// argument of latitude u and inclination i (axial, non-rotating dipole).
inline FieldSample dipole_field_orbital(double u, double inclination, double r, const DipoleParams& p) {
    if (!(r > 0.0)) throw Error("geomag", "orbit radius must be positive");
    const double b0 = p.strength() / (r * r * r);
    const double si = std::sin(inclination);
    return {b0 * Vec3(std::cos(u) * si, std::cos(inclination), -2.0 * std::sin(u) * si), Frame::orbital};
}

// ---------------------------------------------------------------------------
// Gauss coefficients

/// Flat index of degree n, order m (0 <= m <= n) in triangular storage.
constexpr std::size_t nm_index(int n, int m) {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(n + 1) / 2 + static_cast<std::size_t>(m);
}

/// Coefficient set at one instant, in nT.
struct SphericalHarmonicCoeffs {
    int n_max = 0;
    std::vector<double> g, h;  // triangular storage via nm_index

    explicit SphericalHarmonicCoeffs(int nmax = 0)
        : n_max(nmax), g(nm_index(nmax + 1, 0), 0.0), h(nm_index(nmax + 1, 0), 0.0) {}

    double& G(int n, int m) { return g[nm_index(n, m)]; }
    double& H(int n, int m) { return h[nm_index(n, m)]; }
    double G(int n, int m) const { return g[nm_index(n, m)]; }
    double H(int n, int m) const { return h[nm_index(n, m)]; }
};

struct GaussCoefficients {
    int n_max = 0;
    std::vector<double> epochs;                 // decimal years
    std::vector<SphericalHarmonicCoeffs> main;  // one per epoch, nT
    SphericalHarmonicCoeffs sv;                 // nT/yr after the last epoch

    double first_epoch() const { return epochs.front(); }
    double last_epoch() const { return epochs.back(); }
};

namespace detail {

inline std::vector<std::string> split_ws(const std::string& line) {
    std::istringstream is(line);
    std::vector<std::string> out;
    for (std::string tok; is >> tok;) out.push_back(tok);
    return out;
}

inline std::optional<double> to_double(const std::string& s) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
    return v;
}

}  // namespace detail

/// Parses an IAGA IGRF coefficient table ("igrfNNcoeffs.txt" layout):
/// '#' comments, a header row whose columns after "g/h n m" (or "c/s deg
/// ord") are epoch years followed by the secular-variation label, then one
/// row per coefficient: g|h, n, m, one value per epoch, SV.
inline GaussCoefficients parse_igrf_coefficients(std::istream& in, const std::string& source = "<stream>") {
    auto fail = [&](int line, const std::string& msg) -> Error {
        return Error("geomag", source + ":" + std::to_string(line) + ": " + msg);
    };

    struct Row {
        bool is_g;
        int n, m;
        std::vector<double> values;
        int line;
    };
    std::vector<double> epochs;
    std::vector<Row> rows;
    int line_no = 0;
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') continue;
        const auto tok = detail::split_ws(line);
        if (tok[0] == "g" || tok[0] == "h") {
            if (epochs.empty()) throw fail(line_no, "coefficient row before the epoch header");
            if (tok.size() != epochs.size() + 4) {
                throw fail(line_no, "expected " + std::to_string(epochs.size() + 4) + " columns, found " +
                                        std::to_string(tok.size()));
            }
            Row r{tok[0] == "g", 0, 0, {}, line_no};
            const auto n = detail::to_double(tok[1]);
            const auto m = detail::to_double(tok[2]);
            if (!n || !m || *n != std::floor(*n) || *m != std::floor(*m)) throw fail(line_no, "bad degree/order");
            r.n = static_cast<int>(*n);
            r.m = static_cast<int>(*m);
            if (r.n < 1 || r.m < 0 || r.m > r.n) throw fail(line_no, "degree/order out of range");
            if (!r.is_g && r.m == 0) throw fail(line_no, "h coefficient with m = 0");
            for (std::size_t i = 3; i < tok.size(); ++i) {
                const auto v = detail::to_double(tok[i]);
                if (!v) throw fail(line_no, "non-numeric value '" + tok[i] + "'");
                r.values.push_back(*v);
            }
            rows.push_back(std::move(r));
            continue;
        }
        // Header rows. The one carrying numeric epochs defines the columns.
        if (tok.size() < 5) throw fail(line_no, "unrecognised row");
        std::vector<double> ep;
        bool numeric = true;
        for (std::size_t i = 3; i + 1 < tok.size(); ++i) {
            const auto v = detail::to_double(tok[i]);
            if (!v) {
                numeric = false;
                break;
            }
            ep.push_back(*v);
        }
        if (numeric) {
            if (!epochs.empty()) throw fail(line_no, "duplicate epoch header");
            for (std::size_t i = 1; i < ep.size(); ++i) {
                if (!(ep[i] > ep[i - 1])) throw fail(line_no, "epochs not increasing");
            }
            epochs = std::move(ep);
        }
    }
    if (epochs.empty()) throw Error("geomag", source + ": no epoch header found");
    if (rows.empty()) throw Error("geomag", source + ": no coefficient rows");

    int n_max = 0;
    for (const auto& r : rows) n_max = std::max(n_max, r.n);

    GaussCoefficients gc;
    gc.n_max = n_max;
    gc.epochs = epochs;
    gc.main.assign(epochs.size(), SphericalHarmonicCoeffs(n_max));
    gc.sv = SphericalHarmonicCoeffs(n_max);
    std::vector<char> seen_g(nm_index(n_max + 1, 0), 0), seen_h(nm_index(n_max + 1, 0), 0);
    for (const auto& r : rows) {
        auto& seen = r.is_g ? seen_g : seen_h;
        if (seen[nm_index(r.n, r.m)]) throw fail(r.line, "duplicate coefficient");
        seen[nm_index(r.n, r.m)] = 1;
        for (std::size_t e = 0; e < epochs.size(); ++e) {
            (r.is_g ? gc.main[e].G(r.n, r.m) : gc.main[e].H(r.n, r.m)) = r.values[e];
        }
        (r.is_g ? gc.sv.G(r.n, r.m) : gc.sv.H(r.n, r.m)) = r.values.back();
    }
    for (int n = 1; n <= n_max; ++n) {
        for (int m = 0; m <= n; ++m) {
            if (!seen_g[nm_index(n, m)]) {
                throw Error("geomag", source + ": missing g(" + std::to_string(n) + "," + std::to_string(m) + ")");
            }
            if (m > 0 && !seen_h[nm_index(n, m)]) {
                throw Error("geomag", source + ": missing h(" + std::to_string(n) + "," + std::to_string(m) + ")");
            }
        }
    }
    return gc;
}

inline GaussCoefficients load_igrf_coefficients(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("geomag", "cannot open coefficient file '" + path + "'");
    return parse_igrf_coefficients(in, path);
}

/// Coefficients at a decimal year: linear between tabulated epochs, linear
/// secular-variation extrapolation for up to five years past the last one.
inline SphericalHarmonicCoeffs coefficients_at(const GaussCoefficients& gc, double year) {
    if (!(year >= gc.first_epoch() && year <= gc.last_epoch() + 5.0)) {
        throw Error("geomag", "date " + std::to_string(year) + " outside coefficient validity [" +
                                  std::to_string(gc.first_epoch()) + ", " + std::to_string(gc.last_epoch() + 5.0) +
                                  "]");
    }
    SphericalHarmonicCoeffs out(gc.n_max);
    if (year >= gc.last_epoch()) {
        const double dt = year - gc.last_epoch();
        const auto& last = gc.main.back();
        for (std::size_t i = 0; i < out.g.size(); ++i) {
            out.g[i] = last.g[i] + dt * gc.sv.g[i];
            out.h[i] = last.h[i] + dt * gc.sv.h[i];
        }
        return out;
    }
    std::size_t k = 0;
    while (k + 1 < gc.epochs.size() && gc.epochs[k + 1] <= year) ++k;
    const double w = (year - gc.epochs[k]) / (gc.epochs[k + 1] - gc.epochs[k]);
    const auto& a = gc.main[k];
    const auto& b = gc.main[k + 1];
    for (std::size_t i = 0; i < out.g.size(); ++i) {
        out.g[i] = a.g[i] + w * (b.g[i] - a.g[i]);
        out.h[i] = a.h[i] + w * (b.h[i] - a.h[i]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Schmidt semi-normalised associated Legendre functions of cos θ

struct LegendreTable {
    int n_max = 0;
    std::vector<double> P;       // P_n^m(cos θ)
    std::vector<double> dP;      // dP_n^m / dθ
    std::vector<double> P_sin;   // P_n^m / sin θ for m >= 1, finite at the poles

    double p(int n, int m) const { return P[nm_index(n, m)]; }
    double dp(int n, int m) const { return dP[nm_index(n, m)]; }
    double p_over_sin(int n, int m) const { return P_sin[nm_index(n, m)]; }
};

/// Sectoral seeds P_m^m = c_m sin^m θ start the standard three-term
/// recursion in n. P_n^m / sin θ obeys the same recursion seeded with
/// c_m sin^(m-1) θ, so it never divides by sin θ.
inline LegendreTable schmidt_legendre(int n_max, double theta) {
    if (n_max < 0) throw Error("geomag", "negative Legendre degree");
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    const std::size_t size = nm_index(n_max + 1, 0);
    LegendreTable t;
    t.n_max = n_max;
    t.P.assign(size, 0.0);
    t.dP.assign(size, 0.0);
    t.P_sin.assign(size, 0.0);

    t.P[nm_index(0, 0)] = 1.0;
    double cm = 1.0;        // c_m
    double sin_pow = 1.0;   // sin^(m-1) θ for the current m >= 1
    for (int m = 0; m <= n_max; ++m) {
        if (m >= 1) {
            cm = (m == 1) ? 1.0 : cm * std::sqrt((2.0 * m - 1.0) / (2.0 * m));
            if (m >= 2) sin_pow *= s;
            const std::size_t mm = nm_index(m, m);
            t.P_sin[mm] = cm * sin_pow;
            t.P[mm] = t.P_sin[mm] * s;
            // d/dθ (c_m sin^m θ) = m c_m sin^(m-1) θ cos θ
            t.dP[mm] = m * cm * sin_pow * c;
        }
        for (int n = m + 1; n <= n_max; ++n) {
            const double k1 = 2.0 * n - 1.0;
            const double k2 = std::sqrt(static_cast<double>((n - 1) * (n - 1) - m * m));
            const double den = std::sqrt(static_cast<double>(n * n - m * m));
            const std::size_t i = nm_index(n, m);
            const std::size_t i1 = nm_index(n - 1, m);
            const double p2 = (n - 2 >= m) ? t.P[nm_index(n - 2, m)] : 0.0;
            const double dp2 = (n - 2 >= m) ? t.dP[nm_index(n - 2, m)] : 0.0;
            const double ps2 = (n - 2 >= m) ? t.P_sin[nm_index(n - 2, m)] : 0.0;
            t.P[i] = (k1 * c * t.P[i1] - k2 * p2) / den;
            t.dP[i] = (k1 * (c * t.dP[i1] - s * t.P[i1]) - k2 * dp2) / den;
            if (m >= 1) t.P_sin[i] = (k1 * c * t.P_sin[i1] - k2 * ps2) / den;
        }
    }
    return t;
}

// ---------------------------------------------------------------------------
// IGRF synthesis

/// Field from B = −∇V at geocentric (r, colatitude θ, longitude φ), returned
/// as (B_r, B_θ, B_φ) in tesla.
inline FieldSample igrf_field(double r, double theta, double phi, const SphericalHarmonicCoeffs& coeffs) {
    if (!(r >= 0.9 * kIgrfReferenceRadius)) throw Error("geomag", "radius below the IGRF validity floor");
    const int N = coeffs.n_max;
    const LegendreTable L = schmidt_legendre(N, theta);
    const double ratio = kIgrfReferenceRadius / r;
    double Br = 0.0, Bt = 0.0, Bp = 0.0;
    double rpow = ratio * ratio;  // (R/r)^(n+2), starts at n = 0
    std::vector<double> cos_m(N + 1), sin_m(N + 1);
    for (int m = 0; m <= N; ++m) {
        cos_m[m] = std::cos(m * phi);
        sin_m[m] = std::sin(m * phi);
    }
    for (int n = 1; n <= N; ++n) {
        rpow *= ratio;
        double sr = 0.0, st = 0.0, sp = 0.0;
        for (int m = 0; m <= n; ++m) {
            const double g = coeffs.G(n, m), h = coeffs.H(n, m);
            const double a = g * cos_m[m] + h * sin_m[m];
            sr += L.p(n, m) * a;
            st += L.dp(n, m) * a;
            if (m > 0) sp += m * L.p_over_sin(n, m) * (g * sin_m[m] - h * cos_m[m]);
        }
        Br += (n + 1) * rpow * sr;
        Bt -= rpow * st;
        Bp += rpow * sp;
    }
    return {Vec3(Br, Bt, Bp) * kNanoTesla, Frame::local_spherical};
}

inline FieldSample igrf_field(double r, double theta, double phi, double year, const GaussCoefficients& gc) {
    return igrf_field(r, theta, phi, coefficients_at(gc, year));
}

/// Earth-fixed Cartesian field at an Earth-fixed position.
inline Vec3 igrf_field_ecef(const Vec3& r_ecef, const SphericalHarmonicCoeffs& coeffs) {
    const double r = r_ecef.norm();
    const double theta = std::acos(std::clamp(r_ecef.z() / r, -1.0, 1.0));
    const double phi = std::atan2(r_ecef.y(), r_ecef.x());
    const Vec3 b = igrf_field(r, theta, phi, coeffs).B;
    const double st = std::sin(theta), ct = std::cos(theta), sp = std::sin(phi), cp = std::cos(phi);
    const Vec3 e_r(st * cp, st * sp, ct);
    const Vec3 e_t(ct * cp, ct * sp, -st);
    const Vec3 e_p(-sp, cp, 0.0);
    return b.x() * e_r + b.y() * e_t + b.z() * e_p;
}

/// Rotation about +z by angle a (ECEF -> ECI for a = GMST).
inline Mat3 rot_z(double a) {
    Mat3 R;
    R << std::cos(a), -std::sin(a), 0.0, std::sin(a), std::cos(a), 0.0, 0.0, 0.0, 1.0;
    return R;
}

// ---------------------------------------------------------------------------
// Model selection and frame chain

enum class FieldModelKind { dipole, igrf };

/// The direct dipole can be evaluated through the orbital-frame closed form
/// (axial dipole; the default) or through the inertial vector form with a
/// tilted axis.
enum class DipoleForm { orbital, inertial };

class GeomagModel {
public:
    GeomagModel() = default;

    static GeomagModel dipole(DipoleParams p, double inclination, DipoleForm form = DipoleForm::orbital) {
        p.validate();
        GeomagModel m;
        m.kind_ = FieldModelKind::dipole;
        m.dipole_ = p;
        m.form_ = form;
        m.inclination_ = inclination;
        return m;
    }

    static GeomagModel igrf(std::shared_ptr<const GaussCoefficients> gc, Epoch epoch) {
        if (!gc) throw Error("geomag", "IGRF model needs coefficients");
        GeomagModel m;
        m.kind_ = FieldModelKind::igrf;
        m.gc_ = std::move(gc);
        m.epoch_ = epoch;
        return m;
    }

    FieldModelKind kind() const { return kind_; }
    DipoleForm dipole_form() const { return form_; }
    const DipoleParams& dipole_params() const { return dipole_; }
    const GaussCoefficients* coefficients() const { return gc_.get(); }

    /// Axis of the dipole the model actually uses; for the orbital form
    /// that is the axial dipole.
    Vec3 effective_dipole_axis() const {
        return form_ == DipoleForm::orbital ? Vec3(-Vec3::UnitZ()) : dipole_.k_hat;
    }

    /// Field in ECI at the orbit state.
    Vec3 eci(const OrbitState& st) const {
        if (kind_ == FieldModelKind::dipole) {
            if (form_ == DipoleForm::inertial) return dipole_field_inertial(st.r_eci, dipole_).B;
            return from_frame(orbital_frame_quaternion(st), orbital(st));
        }
        return igrf_eci(st.r_eci, st.t);
    }

    /// Field in the orbital frame at the orbit state.
    Vec3 orbital(const OrbitState& st) const {
        if (kind_ == FieldModelKind::dipole && form_ == DipoleForm::orbital) {
            return dipole_field_orbital(st.u, inclination_, st.r_eci.norm(), dipole_).B;
        }
        return to_frame(orbital_frame_quaternion(st), eci(st));
    }

    Vec3 igrf_eci(const Vec3& r_eci, double t) const {
        const double theta_g = gmst(epoch_, t);
        const Vec3 r_ecef = rot_z(-theta_g) * r_eci;
        const auto coeffs = coefficients_at(*gc_, epoch_.decimal_year_after(t));
        return rot_z(theta_g) * igrf_field_ecef(r_ecef, coeffs);
    }

private:
    FieldModelKind kind_ = FieldModelKind::dipole;
    DipoleParams dipole_{};
    DipoleForm form_ = DipoleForm::orbital;
    double inclination_ = 0.0;
    std::shared_ptr<const GaussCoefficients> gc_;
    Epoch epoch_{};
};

/// Model field in the body frame for the attitude q_o2b.
inline FieldSample field_in_body(const GeomagModel& model, const OrbitState& orbit, const Quaternion& q_o2b) {
    return {to_frame(q_o2b, model.orbital(orbit)), Frame::body};
}

}  // namespace geoadcs
