// Command-line front end: nonlinear-noise simulation of pump-carrying
// photonic circuits. Subcommands mirror the analyses the library provides;
// every run writes CSV/JSON artifacts plus a manifest into --out.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sfwm/commands.hpp"
#include "sfwm/errors.hpp"

namespace {

void add_common(CLI::App* cmd, sfwm::cli::CommonOptions& opts) {
    cmd->add_option("--config", opts.config_path, "circuit description document (JSON)")
        ->required();
    cmd->add_option("--out", opts.out_dir, "output directory (default: out)");
    cmd->add_option("--grid", opts.grid_points, "override grid points per axis");
    cmd->add_option("--threads", opts.threads, "worker threads for sweeps (0 = hardware)");
    cmd->add_flag("--exclude-antibunched-noise", opts.exclude_antibunched_noise,
                  "drop spurious pairs born split across two rails");
    cmd->add_flag("--heralded", opts.heralded, "also filter the undetected idler photon");
    cmd->add_flag("--zero-noise", opts.zero_noise,
                  "zero every non-source interaction length before simulating");
    cmd->add_option("--filter-pm", opts.filter_pm, "detection filter width in pm");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"spontaneous four-wave-mixing noise simulator"};
    app.require_subcommand(1);

    sfwm::cli::CommonOptions opts;
    int phi_steps = 73, theta_steps = 41, map_phi_steps = 41, seeds = 100;
    double phi_min = -3.14159265358979323846, phi_max = 3.14159265358979323846;
    std::string component, jsa_kind = "port";
    int signal_rail = -1, idler_rail = -1;
    std::vector<double> brightness, widths;

    CLI::App* fringe = app.add_subcommand("fringe", "biphoton interference fringe over the phase shifter");
    add_common(fringe, opts);
    fringe->add_option("--phi-steps", phi_steps, "samples across the phase range");
    fringe->add_option("--phi-min", phi_min, "range start (rad)");
    fringe->add_option("--phi-max", phi_max, "range end (rad)");

    CLI::App* map = app.add_subcommand("map", "fringes for a range of input splitting ratios");
    add_common(map, opts);
    map->add_option("--theta-steps", theta_steps, "splitting samples");
    map->add_option("--phi-steps", map_phi_steps, "phase samples");

    CLI::App* psweep = app.add_subcommand("purity-sweep", "port purity vs one component's relative brightness");
    add_common(psweep, opts);
    psweep->add_option("--component", component, "component id to scale")->required();
    psweep->add_option("--brightness", brightness, "relative brightness values");

    CLI::App* fsweep = app.add_subcommand("filter-sweep", "port purity vs detection filter width");
    add_common(fsweep, opts);
    fsweep->add_option("--widths", widths, "filter widths relative to the source bandwidth");

    CLI::App* jsa = app.add_subcommand("jsa", "dump a joint spectral amplitude as magnitude/phase CSV");
    add_common(jsa, opts);
    jsa->add_option("--kind", jsa_kind, "waveguide|ring|port");
    jsa->add_option("--signal-rail", signal_rail, "signal rail for kind=port");
    jsa->add_option("--idler-rail", idler_rail, "idler rail for kind=port");

    CLI::App* bell = app.add_subcommand("bell", "post-selected Bell-state report from the two heralded sources");
    add_common(bell, opts);

    CLI::App* validate = app.add_subcommand("validate", "brute-force cross-check of the closed-form model");
    add_common(validate, opts);
    validate->add_option("--seeds", seeds, "number of randomized comparisons");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    }

    try {
        if (fringe->parsed()) return sfwm::cli::cmd_fringe(opts, phi_steps, phi_min, phi_max);
        if (map->parsed()) return sfwm::cli::cmd_map(opts, theta_steps, map_phi_steps);
        if (psweep->parsed()) return sfwm::cli::cmd_purity_sweep(opts, component, brightness);
        if (fsweep->parsed()) return sfwm::cli::cmd_filter_sweep(opts, widths);
        if (jsa->parsed()) return sfwm::cli::cmd_jsa(opts, jsa_kind, signal_rail, idler_rail);
        if (bell->parsed()) return sfwm::cli::cmd_bell(opts);
        if (validate->parsed()) return sfwm::cli::cmd_validate(opts, seeds);
    } catch (const sfwm::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const sfwm::ValidationError& e) {
        std::cerr << "validation failure: " << e.what() << "\n";
        return 4;
    } catch (const sfwm::ZeroStateError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const sfwm::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    }
    return 2;
}
