// geoadcs: scenario runner, field survey and telemetry report tool.

#include "geoadcs/geoadcs.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace {

using namespace geoadcs;

std::optional<std::pair<double, double>> parse_window(const std::string& s) {
    if (s.empty()) return std::nullopt;
    const auto colon = s.find(':');
    if (colon == std::string::npos) throw Error("simcli", "window must be given as t0:t1");
    double a = 0.0, b = 0.0;
    try {
        std::size_t pa = 0, pb = 0;
        a = std::stod(s.substr(0, colon), &pa);
        b = std::stod(s.substr(colon + 1), &pb);
        if (pa != colon || pb != s.size() - colon - 1) throw std::invalid_argument(s);
    } catch (const std::logic_error&) {
        throw Error("simcli", "cannot parse window '" + s + "'");
    }
    if (!(b >= a)) throw Error("simcli", "window end must not precede its start");
    return std::make_pair(a, b);
}

std::string report_path_for(const std::string& csv) {
    std::filesystem::path p(csv);
    p.replace_extension();
    return p.string() + ".report.json";
}

void write_json(const nlohmann::json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("simcli", "cannot write '" + path + "'");
    out << j.dump(2) << '\n';
}

struct RunOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string model;
    std::string igrf_coeffs;
    std::optional<double> duration;
    std::string mode;
    std::string window;
};

ScenarioConfig resolve_config(const RunOptions& o) {
    ScenarioConfig cfg = o.config.empty() ? ScenarioConfig{} : load_config(o.config);
    if (o.seed) cfg.seed = *o.seed;
    if (!o.out.empty()) cfg.output = o.out;
    if (!o.model.empty()) cfg.field_model = parse_field_model(o.model);
    if (!o.igrf_coeffs.empty()) cfg.igrf_path = o.igrf_coeffs;
    if (o.duration) cfg.duration = *o.duration;
    if (!o.mode.empty()) cfg.mode = parse_control_mode(o.mode);
    cfg.validate();
    return cfg;
}

int cmd_run(const RunOptions& o) {
    const ScenarioConfig cfg = resolve_config(o);
    std::ofstream csv(cfg.output);
    if (!csv) throw Error("simcli", "cannot write '" + cfg.output + "'");
    RunResult r = run_scenario(cfg, &csv);
    csv.close();
    const auto window = parse_window(o.window);
    const RunReport rep = (window && !r.telemetry.empty()) ? compute_report(r.telemetry, window) : r.report;
    nlohmann::json j = report_to_json(rep);
    if (r.plan) {
        j["planned_windows"] = nlohmann::json::array();
        for (const auto& [a, b] : r.plan->windows) j["planned_windows"].push_back({a, b});
    }
    const std::string rp = report_path_for(cfg.output);
    write_json(j, rp);
    std::cout << "telemetry: " << cfg.output << " (" << r.telemetry.size() << " records)\n"
              << "report: " << rp << '\n';
    if (!r.telemetry.empty()) {
        std::cout << "settle time: " << rep.settle_time << " s" << (rep.settled ? "" : " (not settled)") << '\n'
                  << "RMSE roll/pitch/yaw [deg]: " << rep.rmse_euler.transpose() << '\n';
    }
    return 0;
}

struct FieldOptions {
    std::string config;
    std::string model = "both";
    std::string igrf_coeffs;
    std::optional<double> duration;
    double step = 10.0;
    std::string out = "field.csv";
};

int cmd_field(const FieldOptions& o) {
    ScenarioConfig cfg = o.config.empty() ? ScenarioConfig{} : load_config(o.config);
    if (!o.igrf_coeffs.empty()) cfg.igrf_path = o.igrf_coeffs;
    const double duration = o.duration.value_or(cfg.duration);

    std::vector<std::pair<std::string, GeomagModel>> models;
    auto add = [&](FieldModelKind k) {
        ScenarioConfig c = cfg;
        c.field_model = k;
        models.emplace_back(to_string(k), make_field_model(c));
    };
    if (o.model == "both") {
        add(FieldModelKind::dipole);
        add(FieldModelKind::igrf);
    } else {
        add(parse_field_model(o.model));
    }

    std::vector<std::vector<FieldSampleRow>> rows;
    for (const auto& [name, m] : models) rows.push_back(field_along_orbit(cfg.orbit, m, duration, o.step));

    std::ofstream out(o.out);
    if (!out) throw Error("simcli", "cannot write '" + o.out + "'");
    out << "# units: t s; angles deg; B T (ECI and orbital frame)\n";
    out << "t,u,lat,lon";
    for (const auto& [name, m] : models) {
        for (const char* f : {"eci", "orb"}) {
            for (const char* a : {"x", "y", "z"}) out << ',' << name << "_B_" << f << '_' << a;
        }
    }
    out << '\n';
    out.precision(17);
    for (std::size_t i = 0; i < rows.front().size(); ++i) {
        const auto& r0 = rows.front()[i];
        out << r0.t << ',' << r0.u / kDeg << ',' << r0.latitude / kDeg << ',' << r0.longitude / kDeg;
        for (const auto& rs : rows) {
            for (const Vec3* v : {&rs[i].B_eci, &rs[i].B_orbital}) out << ',' << v->x() << ',' << v->y() << ',' << v->z();
        }
        out << '\n';
    }
    std::cout << "field: " << o.out << " (" << rows.front().size() << " samples)\n";
    return 0;
}

int cmd_report(const std::string& csv, const std::string& window, const std::string& out) {
    const Telemetry tel = read_telemetry_file(csv);
    if (tel.empty()) throw Error("simcli", "telemetry file '" + csv + "' has no records");
    const nlohmann::json j = report_to_json(compute_report(tel, parse_window(window)));
    if (out.empty()) {
        std::cout << j.dump(2) << '\n';
    } else {
        write_json(j, out);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Satellite attitude control simulation with dipole and IGRF geomagnetic models"};
    app.require_subcommand(0, 1);
    bool print_defaults = false;
    app.add_flag("--print-defaults", print_defaults, "Print the default scenario configuration as JSON");

    RunOptions ro;
    auto* run = app.add_subcommand("run", "Run a closed-loop scenario");
    run->add_option("--config", ro.config, "Scenario JSON file")->check(CLI::ExistingFile);
    run->add_option("--seed", ro.seed, "Random seed");
    run->add_option("--out", ro.out, "Telemetry CSV path (report JSON is written next to it)");
    run->add_option("--model", ro.model, "Field model")->check(CLI::IsMember({"dipole", "igrf"}));
    run->add_option("--igrf-coeffs", ro.igrf_coeffs, "IGRF coefficient file")->check(CLI::ExistingFile);
    run->add_option("--duration", ro.duration, "Simulated time, s");
    run->add_option("--mode", ro.mode, "Control mode")->check(CLI::IsMember({"stabilize", "unload"}));
    run->add_option("--window", ro.window, "RMSE window t0:t1 in s (default: settle time to end)");

    FieldOptions fo;
    auto* field = app.add_subcommand("field", "Evaluate field models along the orbit");
    field->add_option("--config", fo.config, "Scenario JSON file (orbit and epoch)")->check(CLI::ExistingFile);
    field->add_option("--model", fo.model, "Field model")->check(CLI::IsMember({"dipole", "igrf", "both"}));
    field->add_option("--igrf-coeffs,--coeffs", fo.igrf_coeffs, "IGRF coefficient file")->check(CLI::ExistingFile);
    field->add_option("--duration", fo.duration, "Survey length, s");
    field->add_option("--step", fo.step, "Sample spacing, s");
    field->add_option("--out", fo.out, "Output CSV path");

    std::string report_csv, report_window, report_out;
    auto* report = app.add_subcommand("report", "Recompute metrics from saved telemetry");
    report->add_option("telemetry", report_csv, "Telemetry CSV")->required()->check(CLI::ExistingFile);
    report->add_option("--window", report_window, "RMSE window t0:t1 in s");
    report->add_option("--out", report_out, "Write the report JSON here instead of stdout");

    std::string validate_path;
    auto* validate = app.add_subcommand("validate-config", "Check a scenario configuration file");
    validate->add_option("config", validate_path, "Scenario JSON file")->required()->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);

    try {
        if (print_defaults) {
            std::cout << config_to_json(ScenarioConfig{}).dump(2) << '\n';
            return 0;
        }
        if (*run) return cmd_run(ro);
        if (*field) return cmd_field(fo);
        if (*report) return cmd_report(report_csv, report_window, report_out);
        if (*validate) {
            load_config(validate_path);
            std::cout << validate_path << ": ok\n";
            return 0;
        }
        std::cout << app.help();
        return 0;
    } catch (const geoadcs::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
