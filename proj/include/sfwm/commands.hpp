#pragma once

#include <chrono>
#include <cmath>
#include <complex>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sfwm/analysis.hpp"
#include "sfwm/circuit.hpp"
#include "sfwm/errors.hpp"
#include "sfwm/io.hpp"
#include "sfwm/oracle.hpp"
#include "sfwm/parse.hpp"
#include "sfwm/rng.hpp"
#include "sfwm/spectral.hpp"

namespace sfwm::cli {

inline constexpr const char* tool_version = "1.0.0";

struct CommonOptions {
    std::string config_path;
    std::string out_dir = "out";
    int grid_points = 0;  // 0 = config default
    int threads = 0;
    bool exclude_antibunched_noise = false;
    bool heralded = false;
    bool zero_noise = false;
    double filter_pm = 0.0;  // 0 = config default
};

inline std::vector<double> linspace(double lo, double hi, int n) {
    if (n < 1) throw ConfigError("range: needs at least one sample");
    std::vector<double> v(static_cast<std::size_t>(n));
    if (n == 1) {
        v[0] = lo;
        return v;
    }
    for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
    return v;
}

struct Session {
    SimulationSetup setup;
    std::shared_ptr<const SpectralGrid> grid;
    CommonOptions opts;

    static Session open(const CommonOptions& o) {
        Session s{load_config(o.config_path), nullptr, o};
        if (o.zero_noise) s.setup.circuit = s.setup.circuit.with_noise_lengths_zeroed();
        s.grid = s.setup.make_grid(o.grid_points);
        return s;
    }

    double filter_width() const {
        if (opts.filter_pm > 0.0)
            return units::omega_width_from_wavelength_width(
                opts.filter_pm * 1e-12, units::wavelength_from_omega(setup.signal_center));
        return setup.filter_width;
    }

    PortOptions port_options() const {
        PortOptions p;
        p.cut_stage = setup.cut_stage_index();
        p.port = setup.analysis_port;
        p.exclude_cross = opts.exclude_antibunched_noise;
        p.heralded = opts.heralded;
        if (opts.heralded)
            p.idler_filter = SpectralFilter(setup.idler_center, filter_width(),
                                            FilterShape::rectangular, FilterTarget::idler);
        return p;
    }

    nlohmann::json manifest(const std::string& command, nlohmann::json parameters,
                            std::vector<std::uint64_t> seeds = {}) const {
        parameters["grid_points"] = grid->n_signal();
        parameters["grid_span_pump_fwhm"] = setup.grid_span_pump_fwhm;
        parameters["pump_wavelength_m"] = setup.pulse.center_wavelength;
        parameters["pump_bandwidth_m"] = setup.pulse.fwhm_bandwidth;
        parameters["exclude_antibunched_noise"] = opts.exclude_antibunched_noise;
        parameters["heralded"] = opts.heralded;
        parameters["zero_noise"] = opts.zero_noise;
        return nlohmann::json{{"command", command},
                              {"config", opts.config_path},
                              {"parameters", std::move(parameters)},
                              {"tool_version", tool_version},
                              {"seeds", seeds}};
    }

    std::filesystem::path out(const std::string& name) const {
        return std::filesystem::path(opts.out_dir) / name;
    }
};

// ---------------------------------------------------------------------------
// fringe
// ---------------------------------------------------------------------------

inline int cmd_fringe(const CommonOptions& opts, int phi_steps, double phi_min, double phi_max) {
    Session s = Session::open(opts);
    const auto phis = linspace(phi_min, phi_max, phi_steps);
    const FringeScan scan = hom_fringe(s.setup.circuit, phis, s.setup.pulse, s.grid);
    const FringeAsymmetry asym = fringe_asymmetry(s.setup.circuit, s.setup.pulse, s.grid);

    io::write_csv(s.out("fringe.csv"), {"phi_rad", "bunched", "anti_bunched"},
                  {scan.phi, scan.bunched, scan.anti_bunched});
    io::write_json(s.out("fringe.json"),
                   {{"visibility_bunched", scan.visibility_bunched},
                    {"visibility_anti_bunched", scan.visibility_anti_bunched},
                    {"asymmetry_bunched", asym.bunched},
                    {"asymmetry_anti_bunched", asym.anti_bunched},
                    {"asymmetry_phase_origin_rad", asym.phase_origin}});
    io::write_json(s.out("manifest.json"),
                   s.manifest("fringe", {{"phi_steps", phi_steps},
                                         {"phi_min_rad", phi_min},
                                         {"phi_max_rad", phi_max}}));
    return 0;
}

// ---------------------------------------------------------------------------
// map
// ---------------------------------------------------------------------------

inline int cmd_map(const CommonOptions& opts, int theta_steps, int phi_steps) {
    Session s = Session::open(opts);
    const double pi = 3.14159265358979323846;
    const auto thetas = linspace(0.0, pi, theta_steps);
    const auto phis = linspace(-pi, pi, phi_steps);
    const FringeMap map =
        fringe_map(s.setup.circuit, thetas, phis, s.setup.pulse, s.grid, opts.threads);

    io::write_matrix_csv(s.out("map_bunched.csv"), map.theta, map.phi, map.bunched);
    io::write_matrix_csv(s.out("map_antibunched.csv"), map.theta, map.phi, map.anti_bunched);

    std::vector<double> vis_b, vis_a;
    for (int r = 0; r < map.bunched.rows(); ++r) {
        const Eigen::VectorXd rb = map.bunched.row(r);
        const Eigen::VectorXd ra = map.anti_bunched.row(r);
        vis_b.push_back(visibility(std::span<const double>(rb.data(), static_cast<std::size_t>(rb.size()))));
        vis_a.push_back(visibility(std::span<const double>(ra.data(), static_cast<std::size_t>(ra.size()))));
    }
    io::write_json(s.out("map.json"), {{"theta_rad", map.theta},
                                       {"phi_rad", map.phi},
                                       {"visibility_bunched_per_theta", vis_b},
                                       {"visibility_anti_bunched_per_theta", vis_a}});
    io::write_json(s.out("manifest.json"),
                   s.manifest("map", {{"theta_steps", theta_steps}, {"phi_steps", phi_steps}}));
    return 0;
}

// ---------------------------------------------------------------------------
// purity-sweep
// ---------------------------------------------------------------------------

inline int cmd_purity_sweep(const CommonOptions& opts, const std::string& component,
                            std::vector<double> brightness) {
    Session s = Session::open(opts);
    if (component.empty()) throw ConfigError("purity-sweep: --component is required");
    if (brightness.empty()) brightness = linspace(0.0, 1.5, 31);
    const SpectralFilter fs = s.setup.signal_filter(s.filter_width());
    const auto curve = purity_sweep(s.setup.circuit, component, brightness, fs, s.setup.pulse,
                                    s.grid, s.port_options());

    std::vector<double> xs, purities, g2s;
    for (const auto& p : curve) {
        xs.push_back(p.x);
        purities.push_back(p.purity);
        g2s.push_back(p.g2);
    }
    io::write_csv(s.out("purity_sweep.csv"), {"relative_brightness", "purity", "g2"},
                  {xs, purities, g2s});
    io::write_json(s.out("purity_sweep.json"),
                   {{"component", component},
                    {"filter_width_rad_per_s", fs.full_width},
                    {"port_rail", s.setup.analysis_port},
                    {"purity_at_zero_brightness", purities.front()}});
    io::write_json(s.out("manifest.json"),
                   s.manifest("purity-sweep",
                              {{"component", component}, {"brightness", brightness},
                               {"filter_pm", opts.filter_pm}}));
    return 0;
}

// ---------------------------------------------------------------------------
// filter-sweep
// ---------------------------------------------------------------------------

inline int cmd_filter_sweep(const CommonOptions& opts, std::vector<double> widths) {
    Session s = Session::open(opts);
    const double dwdm_relative = s.setup.filter_width / s.setup.source_bandwidth;
    if (widths.empty())
        widths = {1.0, 1.25, 1.5, 2.0, 3.0, 5.0, 8.0, 13.0, dwdm_relative, 35.0, 60.0, 100.0, 200.0};
    const auto curve = filter_sweep(s.setup.circuit, widths, s.setup.source_bandwidth,
                                    s.setup.signal_center, s.setup.pulse, s.grid,
                                    s.port_options(), s.setup.idler_center);

    const TwoPhotonState state =
        assemble_state(s.setup.circuit, s.setup.pulse, s.grid, s.setup.cut_stage_index());
    const PurityReport unfiltered = unheralded_g2(state, s.setup.analysis_port, nullptr,
                                                  opts.exclude_antibunched_noise);

    std::vector<double> xs, widths_pm, purities, g2s;
    const double source_bw_pm = s.setup.source_bandwidth /
                                units::omega_width_from_wavelength_width(
                                    1e-12, units::wavelength_from_omega(s.setup.signal_center));
    for (const auto& p : curve) {
        xs.push_back(p.x);
        widths_pm.push_back(p.x * source_bw_pm);
        purities.push_back(p.purity);
        g2s.push_back(p.g2);
    }
    io::write_csv(s.out("filter_sweep.csv"), {"width_relative", "width_pm", "purity", "g2"},
                  {xs, widths_pm, purities, g2s});
    io::write_json(s.out("filter_sweep.json"),
                   {{"default_dwdm_relative_width", dwdm_relative},
                    {"source_bandwidth_rad_per_s", s.setup.source_bandwidth},
                    {"unfiltered_purity", unfiltered.purity},
                    {"unfiltered_g2", unfiltered.g2}});
    io::write_json(s.out("manifest.json"), s.manifest("filter-sweep", {{"widths", widths}}));
    return 0;
}

// ---------------------------------------------------------------------------
// jsa
// ---------------------------------------------------------------------------

inline int cmd_jsa(const CommonOptions& opts, const std::string& kind, int signal_rail,
                   int idler_rail) {
    Session s = Session::open(opts);
    BiphotonAmplitude amp;
    double weight = 1.0;
    if (kind == "waveguide") {
        amp = waveguide_jsa(s.setup.pulse, s.grid);
    } else if (kind == "ring") {
        const RingSource* ring = nullptr;
        for (const auto& st : s.setup.circuit.stages)
            if (const auto* r = std::get_if<RingSource>(&st.spec)) ring = r;
        if (!ring) throw ConfigError("jsa: circuit has no ring source");
        amp = ring_jsa(s.setup.pulse, ring->ring, s.grid);
    } else if (kind == "port") {
        const TwoPhotonState state =
            assemble_state(s.setup.circuit, s.setup.pulse, s.grid, s.setup.cut_stage_index());
        const int sr = signal_rail >= 0 ? signal_rail : s.setup.analysis_port;
        const int ir = idler_rail >= 0 ? idler_rail : s.setup.analysis_port;
        PortJsa pj = port_jsa(state, sr, ir);
        if (pj.zero_state) throw ZeroStateError("jsa: the port amplitude vanished");
        amp = std::move(pj.amplitude);
        weight = pj.weight;
    } else {
        throw ConfigError("jsa: unknown kind '" + kind + "' (waveguide|ring|port)");
    }

    std::vector<double> srow(amp.grid->signal_axis().data(),
                             amp.grid->signal_axis().data() + amp.grid->n_signal());
    std::vector<double> icol(amp.grid->idler_axis().data(),
                             amp.grid->idler_axis().data() + amp.grid->n_idler());
    Eigen::MatrixXd magnitude(amp.values.rows(), amp.values.cols());
    Eigen::MatrixXd phase(amp.values.rows(), amp.values.cols());
    for (Eigen::Index r = 0; r < amp.values.rows(); ++r)
        for (Eigen::Index c = 0; c < amp.values.cols(); ++c) {
            magnitude(r, c) = std::abs(amp.values(r, c));
            phase(r, c) = std::arg(amp.values(r, c));
        }
    io::write_matrix_csv(s.out("jsa_magnitude.csv"), srow, icol, magnitude);
    io::write_matrix_csv(s.out("jsa_phase.csv"), srow, icol, phase);
    const PurityReport rep = schmidt(amp);
    io::write_json(s.out("jsa.json"), {{"kind", kind},
                                       {"weight_m", weight},
                                       {"purity", rep.purity},
                                       {"schmidt_number", rep.schmidt_number},
                                       {"g2", rep.g2},
                                       {"warning", amp.warning}});
    io::write_json(s.out("manifest.json"),
                   s.manifest("jsa", {{"kind", kind},
                                      {"signal_rail", signal_rail},
                                      {"idler_rail", idler_rail}}));
    return 0;
}

// ---------------------------------------------------------------------------
// bell
// ---------------------------------------------------------------------------

namespace bell_detail {

inline nlohmann::json report_to_json(const BellReport& r) {
    nlohmann::json re = nlohmann::json::array(), im = nlohmann::json::array();
    for (int i = 0; i < 4; ++i) {
        nlohmann::json rrow = nlohmann::json::array(), irow = nlohmann::json::array();
        for (int j = 0; j < 4; ++j) {
            rrow.push_back(r.rho(i, j).real());
            irow.push_back(r.rho(i, j).imag());
        }
        re.push_back(rrow);
        im.push_back(irow);
    }
    return {{"overlap", r.overlap},
            {"success_probability", r.success_probability},
            {"postselect_probability", r.postselect_probability},
            {"bunching_probability", r.bunching_probability},
            {"triplet_probability", r.triplet_probability},
            {"rho_real", re},
            {"rho_imag", im},
            {"rho_eigenvalues", {r.rho_eigenvalues[0], r.rho_eigenvalues[1], r.rho_eigenvalues[2],
                                 r.rho_eigenvalues[3]}}};
}

inline BellReport bell_from_circuit(const CircuitModel& circuit, const SimulationSetup& setup,
                                    std::shared_ptr<const SpectralGrid> grid, double filter_width,
                                    bool exclude_cross) {
    const TwoPhotonState state =
        assemble_state(circuit, setup.pulse, grid, setup.cut_stage_index());
    const SpectralFilter fs = setup.signal_filter(filter_width);
    const SpectralFilter fi = setup.idler_filter(filter_width);
    const Eigen::MatrixXcd rho_a =
        heralded_density(state, setup.reference_rail, &fs, &fi, exclude_cross);
    const Eigen::MatrixXcd rho_b =
        heralded_density(state, setup.analysis_port, &fs, &fi, exclude_cross);
    return bell_analysis(rho_a, rho_b);
}

}  // namespace bell_detail

inline int cmd_bell(const CommonOptions& opts) {
    Session s = Session::open(opts);
    const BellReport model = bell_detail::bell_from_circuit(
        s.setup.circuit, s.setup, s.grid, s.filter_width(), opts.exclude_antibunched_noise);
    const BellReport sources_only = bell_detail::bell_from_circuit(
        s.setup.circuit.with_noise_lengths_zeroed(), s.setup, s.grid, s.filter_width(),
        opts.exclude_antibunched_noise);

    // textbook anchors: identical pure photons and fully distinguishable ones
    const int n = s.grid->n_signal();
    Eigen::MatrixXcd pure = Eigen::MatrixXcd::Zero(n, n), ortho = Eigen::MatrixXcd::Zero(n, n);
    pure(0, 0) = 1.0;
    ortho(1, 1) = 1.0;
    const BellReport ref_pure = bell_analysis(pure, pure);
    const BellReport ref_mixed = bell_analysis(pure, ortho);

    io::write_json(s.out("bell.json"),
                   {{"model", bell_detail::report_to_json(model)},
                    {"sources_only", bell_detail::report_to_json(sources_only)},
                    {"reference_pure", bell_detail::report_to_json(ref_pure)},
                    {"reference_mixed", bell_detail::report_to_json(ref_mixed)}});
    io::write_json(s.out("manifest.json"), s.manifest("bell", {{"filter_pm", opts.filter_pm}}));
    return 0;
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

/// Brute-force cross checks of the closed-form model. Returns 0 when every
/// comparison lands inside 1e-10, 4 otherwise.
inline int cmd_validate(const CommonOptions& opts, int n_seeds = 100) {
    Session s = Session::open(opts);
    const double tol = 1e-10;
    std::vector<std::uint64_t> seeds;
    for (int i = 1; i <= n_seeds; ++i) seeds.push_back(static_cast<std::uint64_t>(i));

    const PumpPulse& pulse = s.setup.pulse;
    const auto small_grid = SpectralGrid::make(s.setup.signal_center, s.setup.idler_center,
                                               3.0 * pulse.fwhm_omega(), 17);

    // 1) closed-form interferometer terms vs primitive composition
    double max_pair_dev = 0.0, max_trans_dev = 0.0;
    for (const std::uint64_t seed : seeds) {
        Rng rng(seed);
        Mzi m;
        m.theta = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
        const double t2_split = rng.uniform(0.8, 1.0);
        const double split = rng.uniform(0.05, 0.95);
        m.r = std::sqrt(split * t2_split);
        m.kappa = std::sqrt((1.0 - split) * t2_split);
        m.coupler_power_transmission = m.r * m.r + m.kappa * m.kappa;
        m.length1 = rng.uniform(0.0, 500e-6);
        m.length2 = rng.uniform(0.0, 500e-6);
        m.arm1_power_transmission = rng.uniform(0.7, 1.0);
        m.arm2_power_transmission = rng.uniform(0.7, 1.0);

        CircuitModel c;
        c.n_rails = 2;
        c.pump_input = 0;
        c.n_eff = s.setup.circuit.n_eff;
        c.stages.push_back({"mzi", m});

        const Bands bands = bands_for(c, pulse, *small_grid);
        const DiscreteTwoPhotonTensor t = fock_propagate(c, pulse, small_grid);
        const TwoPhotonState closed = assemble_state(c, pulse, small_grid);
        const DiscreteTwoPhotonTensor tc = to_tensor(closed);
        const double scale = t.amp.cwiseAbs().maxCoeff();
        max_pair_dev = std::max(max_pair_dev, (t.amp - tc.amp).cwiseAbs().maxCoeff() / scale);

        // transmissions: closed form vs coupler·arms·coupler product
        const Eigen::Matrix2cd closed_m = mzi_transfer(m, bands.k_pump);
        Eigen::Matrix2cd arms = Eigen::Matrix2cd::Zero();
        arms(0, 0) = std::sqrt(m.arm1_power_transmission) *
                     std::exp(Complex(0.0, bands.k_pump * m.length1 + m.theta));
        arms(1, 1) = std::sqrt(m.arm2_power_transmission) *
                     std::exp(Complex(0.0, bands.k_pump * m.length2));
        const Eigen::Matrix2cd composed =
            coupler_matrix(m.r, m.kappa) * arms * coupler_matrix(m.r, m.kappa);
        max_trans_dev =
            std::max(max_trans_dev, (closed_m - composed).cwiseAbs().maxCoeff() /
                                        composed.cwiseAbs().maxCoeff());
    }

    // 2) the configured circuit vs brute-force propagation on a coarse grid
    const auto coarse = SpectralGrid::make(s.setup.signal_center, s.setup.idler_center,
                                           1.0 * pulse.fwhm_omega(), 33);
    const DiscreteTwoPhotonTensor oracle_t = fock_propagate(s.setup.circuit, pulse, coarse);
    const DiscreteTwoPhotonTensor model_t = to_tensor(assemble_state(s.setup.circuit, pulse, coarse));
    const double circuit_dev = (oracle_t.amp - model_t.amp).cwiseAbs().maxCoeff() /
                               oracle_t.amp.cwiseAbs().maxCoeff();

    // 3) g² from photon-number moments vs 1 + Schmidt purity
    double max_g2_dev = 0.0;
    for (int i = 0; i < 20; ++i) {
        Rng rng(1000 + static_cast<std::uint64_t>(i));
        TwoPhotonState state;
        state.n_rails = 2;
        auto random_jsa = [&]() {
            BiphotonAmplitude a;
            a.grid = small_grid;
            a.values.resize(small_grid->n_signal(), small_grid->n_idler());
            for (int r = 0; r < a.values.rows(); ++r)
                for (int cidx = 0; cidx < a.values.cols(); ++cidx)
                    a.values(r, cidx) = rng.complex_in_disc();
            a.normalize();
            return std::make_shared<const BiphotonAmplitude>(std::move(a));
        };
        for (int b = 0; b < 3; ++b) {
            PairBlock blk;
            blk.origin = "random_" + std::to_string(b);
            blk.jsa = random_jsa();
            blk.weights = Eigen::MatrixXcd::Zero(2, 2);
            for (int p = 0; p < 2; ++p)
                for (int q = 0; q < 2; ++q) blk.weights(p, q) = rng.complex_in_disc(1e-3);
            state.blocks.push_back(std::move(blk));
        }
        const DiscreteTwoPhotonTensor t = to_tensor(state);
        for (int port = 0; port < 2; ++port) {
            const double direct = g2_moment(t, port);
            const double schmidt_route = unheralded_g2(state, port).g2;
            max_g2_dev = std::max(max_g2_dev, std::abs(direct - schmidt_route));
        }
    }

    const bool pass = max_pair_dev < tol && max_trans_dev < tol && circuit_dev < tol &&
                      max_g2_dev < tol;
    std::cout << "pair-term closed form vs composition: max dev " << max_pair_dev
              << (max_pair_dev < tol ? "  PASS" : "  FAIL") << "\n"
              << "transmission closed form vs composition: max dev " << max_trans_dev
              << (max_trans_dev < tol ? "  PASS" : "  FAIL") << "\n"
              << "circuit assembly vs brute-force tensor: max dev " << circuit_dev
              << (circuit_dev < tol ? "  PASS" : "  FAIL") << "\n"
              << "g2 moments vs 1 + purity: max dev " << max_g2_dev
              << (max_g2_dev < tol ? "  PASS" : "  FAIL") << "\n";

    io::write_json(s.out("validate.json"), {{"tolerance", tol},
                                            {"max_pair_term_deviation", max_pair_dev},
                                            {"max_transmission_deviation", max_trans_dev},
                                            {"max_circuit_deviation", circuit_dev},
                                            {"max_g2_deviation", max_g2_dev},
                                            {"pass", pass}});
    io::write_json(s.out("manifest.json"), s.manifest("validate", {{"n_seeds", n_seeds}}, seeds));
    return pass ? 0 : 4;
}

}  // namespace sfwm::cli
