#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sfwm/circuit.hpp"
#include "sfwm/errors.hpp"
#include "sfwm/spectral.hpp"
#include "sfwm/units.hpp"

namespace sfwm {

/// Everything a run needs besides command parameters: the circuit, the pump,
/// how to build the grid, and the analysis conventions bundled with the
/// document.
struct SimulationSetup {
    CircuitModel circuit;
    PumpPulse pulse;
    int grid_points = 257;
    double grid_span_pump_fwhm = 6.0;
    double signal_center = 0.0;  // rad/s
    double idler_center = 0.0;   // rad/s

    std::string cut_before;      // stage id the per-source analyses stop at
    int analysis_port = 0;       // rail whose photons the purity analyses use
    int reference_rail = 0;      // rail of the second (comparison) source
    double filter_width = 0.0;        // rad/s, detection filter default
    double source_bandwidth = 0.0;    // rad/s, reference linewidth for filter sweeps

    std::shared_ptr<const SpectralGrid> make_grid(int points_override = 0) const {
        const int n = points_override > 0 ? points_override : grid_points;
        const double half = grid_span_pump_fwhm * pulse.fwhm_omega();
        return SpectralGrid::make(signal_center, idler_center, half, n);
    }

    int cut_stage_index() const {
        if (cut_before.empty()) return -1;
        const int idx = circuit.stage_index(cut_before);
        if (idx < 0) throw ConfigError("analysis cut stage '" + cut_before + "' not found");
        return idx;
    }

    SpectralFilter signal_filter(double width = 0.0) const {
        return SpectralFilter(signal_center, width > 0.0 ? width : filter_width,
                              FilterShape::rectangular, FilterTarget::signal);
    }
    SpectralFilter idler_filter(double width = 0.0) const {
        return SpectralFilter(idler_center, width > 0.0 ? width : filter_width,
                              FilterShape::rectangular, FilterTarget::idler);
    }
};

namespace parse_detail {

using nlohmann::json;

inline const json& require(const json& j, const std::string& key, const std::string& where) {
    const auto it = j.find(key);
    if (it == j.end()) throw ConfigError(where + ": missing field '" + key + "'");
    return *it;
}

inline double require_number(const json& j, const std::string& key, const std::string& where) {
    const json& v = require(j, key, where);
    if (!v.is_number()) throw ConfigError(where + ": field '" + key + "' must be a number");
    return v.get<double>();
}

inline double number_or(const json& j, const std::string& key, double fallback,
                        const std::string& where) {
    const auto it = j.find(key);
    if (it == j.end()) return fallback;
    if (!it->is_number()) throw ConfigError(where + ": field '" + key + "' must be a number");
    return it->get<double>();
}

inline int require_int(const json& j, const std::string& key, const std::string& where) {
    const json& v = require(j, key, where);
    if (!v.is_number_integer()) throw ConfigError(where + ": field '" + key + "' must be an integer");
    return v.get<int>();
}

inline bool flag_or(const json& j, const std::string& key, bool fallback, const std::string& where) {
    const auto it = j.find(key);
    if (it == j.end()) return fallback;
    if (!it->is_boolean()) throw ConfigError(where + ": field '" + key + "' must be a boolean");
    return it->get<bool>();
}

inline int rail_of(const json& j, const std::string& where) {
    const auto it = j.find("rail");
    if (it == j.end()) throw ConfigError(where + ": missing field 'rail'");
    if (!it->is_number_integer()) throw ConfigError(where + ": 'rail' must be an integer");
    return it->get<int>();
}

inline std::pair<int, int> rail_pair_of(const json& j, const std::string& where) {
    const json& v = require(j, "rails", where);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() || !v[1].is_number_integer())
        throw ConfigError(where + ": 'rails' must be a pair of integers");
    return {v[0].get<int>(), v[1].get<int>()};
}

inline std::vector<int> rail_list_of(const json& j, const std::string& where) {
    const json& v = require(j, "rails", where);
    if (!v.is_array() || v.empty()) throw ConfigError(where + ": 'rails' must be a non-empty array");
    std::vector<int> out;
    for (const auto& e : v) {
        if (!e.is_number_integer()) throw ConfigError(where + ": 'rails' entries must be integers");
        out.push_back(e.get<int>());
    }
    return out;
}

}  // namespace parse_detail

/// Parses and validates a circuit description document. Every structural or
/// numeric violation is reported with the offending stage id and field.
inline SimulationSetup parse_circuit_document(const nlohmann::json& doc) {
    using namespace parse_detail;
    if (!doc.is_object()) throw ConfigError("circuit document: top level must be an object");

    const json pump = doc.contains("pump") ? doc.at("pump") : json::object();
    const double pump_nm = number_or(pump, "wavelength_nm", 1550.0, "pump");
    const double pump_bw_pm = number_or(pump, "bandwidth_pm", 260.0, "pump");
    PumpShape shape = PumpShape::gaussian;
    if (pump.contains("shape")) {
        const std::string s = pump.at("shape").get<std::string>();
        if (s == "gaussian") shape = PumpShape::gaussian;
        else if (s == "sech") shape = PumpShape::sech;
        else throw ConfigError("pump: unknown shape '" + s + "'");
    }
    SimulationSetup setup{
        CircuitModel{}, PumpPulse(pump_nm * 1e-9, pump_bw_pm * 1e-12, shape), 257, 6.0};

    setup.circuit.n_rails = require_int(doc, "rails", "document");
    setup.circuit.pump_input = require_int(doc, "pump_input", "document");
    if (doc.contains("reference_source"))
        setup.circuit.reference_source = doc.at("reference_source").get<std::string>();
    setup.circuit.n_eff = number_or(doc, "n_eff", 2.35, "document");

    const double omega_p = setup.pulse.center_omega();
    double sig_off = 2.0 * 3.14159265358979323846 * 400e9;
    double idl_off = -sig_off;
    if (doc.contains("channels")) {
        const json& ch = doc.at("channels");
        sig_off = 2.0 * 3.14159265358979323846 * number_or(ch, "signal_offset_ghz", 400.0, "channels") * 1e9;
        idl_off = 2.0 * 3.14159265358979323846 * number_or(ch, "idler_offset_ghz", -400.0, "channels") * 1e9;
    }
    setup.signal_center = omega_p + sig_off;
    setup.idler_center = omega_p + idl_off;

    if (doc.contains("grid")) {
        const json& g = doc.at("grid");
        setup.grid_points = static_cast<int>(number_or(g, "points", 257, "grid"));
        setup.grid_span_pump_fwhm = number_or(g, "span_pump_fwhm", 6.0, "grid");
    }

    double filter_pm = 1300.0;
    double source_bw_pm = 60.0;
    if (doc.contains("analysis")) {
        const json& a = doc.at("analysis");
        if (a.contains("cut_before")) setup.cut_before = a.at("cut_before").get<std::string>();
        setup.analysis_port = static_cast<int>(number_or(a, "port", 0, "analysis"));
        setup.reference_rail = static_cast<int>(number_or(a, "reference_rail", 0, "analysis"));
        filter_pm = number_or(a, "filter_pm", 1300.0, "analysis");
        source_bw_pm = number_or(a, "source_bandwidth_pm", 60.0, "analysis");
    }
    const double lambda_s = units::wavelength_from_omega(setup.signal_center);
    setup.filter_width = units::omega_width_from_wavelength_width(filter_pm * 1e-12, lambda_s);
    setup.source_bandwidth = units::omega_width_from_wavelength_width(source_bw_pm * 1e-12, lambda_s);

    const json& stages = require(doc, "stages", "document");
    if (!stages.is_array()) throw ConfigError("document: 'stages' must be an array");

    int index = 0;
    for (const auto& s : stages) {
        const std::string id = s.contains("id") ? s.at("id").get<std::string>()
                                                : "stage_" + std::to_string(index);
        const std::string where = "stage[" + std::to_string(index) + "] '" + id + "'";
        const std::string kind = require(s, "kind", where).get<std::string>();
        Stage stage;
        stage.id = id;

        if (kind == "waveguide" || kind == "spiral") {
            StraightWaveguide wg;
            wg.rail = rail_of(s, where);
            wg.length = require_number(s, "length_um", where) * 1e-6;
            wg.power_transmission = number_or(s, "t2", 1.0, where);
            wg.is_source = flag_or(s, "source", kind == "spiral", where);
            wg.generation_scale = number_or(s, "generation_scale", 1.0, where);
            stage.spec = wg;
        } else if (kind == "ring") {
            const double bw_pm = number_or(s, "bandwidth_pm", 60.0, where);
            const double res_s = setup.signal_center +
                units::omega_width_from_wavelength_width(number_or(s, "signal_offset_pm", 0.0, where) * 1e-12, lambda_s);
            const double res_i = setup.idler_center +
                units::omega_width_from_wavelength_width(number_or(s, "idler_offset_pm", 0.0, where) * 1e-12, lambda_s);
            RingSource ring{rail_of(s, where),
                            RingParams(res_s, res_i, omega_p, bw_pm * 1e-12),
                            require_number(s, "length_um", where) * 1e-6,
                            number_or(s, "t2", 1.0, where),
                            number_or(s, "generation_scale", 1.0, where)};
            stage.spec = ring;
        } else if (kind == "mzi") {
            Mzi m;
            std::tie(m.rail_a, m.rail_b) = rail_pair_of(s, where);
            m.theta = number_or(s, "theta_rad", 0.0, where);
            m.length1 = number_or(s, "length1_um", 0.0, where) * 1e-6;
            m.length2 = number_or(s, "length2_um", 0.0, where) * 1e-6;
            m.r = require_number(s, "r", where);
            m.kappa = require_number(s, "kappa", where);
            m.coupler_power_transmission = number_or(s, "t2_split", 1.0, where);
            m.arm1_power_transmission = number_or(s, "arm1_t2", 1.0, where);
            m.arm2_power_transmission = number_or(s, "arm2_t2", 1.0, where);
            m.generation_scale = number_or(s, "generation_scale", 1.0, where);
            m.scan = flag_or(s, "scan", false, where);
            stage.spec = m;
        } else if (kind == "phase") {
            PhaseShift p;
            p.rails = rail_list_of(s, where);
            p.phi = number_or(s, "phi_rad", 0.0, where);
            p.scan = flag_or(s, "scan", false, where);
            stage.spec = p;
        } else if (kind == "coupler") {
            Coupler c;
            std::tie(c.rail_a, c.rail_b) = rail_pair_of(s, where);
            c.r = require_number(s, "r", where);
            c.kappa = require_number(s, "kappa", where);
            c.coupler_power_transmission = number_or(s, "t2_split", 1.0, where);
            stage.spec = c;
        } else if (kind == "pump_dump") {
            PumpDump d;
            d.rails = rail_list_of(s, where);
            stage.spec = d;
        } else {
            throw ConfigError(where + ": unknown component kind '" + kind + "'");
        }
        setup.circuit.stages.push_back(std::move(stage));
        ++index;
    }

    try {
        setup.circuit.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("circuit document: ") + e.what());
    }
    return setup;
}

inline SimulationSetup load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config '" + path + "': " + e.what());
    }
    return parse_circuit_document(doc);
}

}  // namespace sfwm
