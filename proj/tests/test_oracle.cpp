#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "sfwm/analysis.hpp"
#include "sfwm/oracle.hpp"
#include "sfwm/parse.hpp"
#include "sfwm/rng.hpp"
#include "support.hpp"

using namespace sfwm;
using test_support::default_pulse;
using test_support::degenerate_grid;

namespace {

CircuitModel single_mzi(Rng& rng) {
    Mzi m;
    m.theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double t2 = rng.uniform(0.8, 1.0);
    const double split = rng.uniform(0.05, 0.95);
    m.r = std::sqrt(split * t2);
    m.kappa = std::sqrt((1.0 - split) * t2);
    m.coupler_power_transmission = m.r * m.r + m.kappa * m.kappa;
    m.length1 = rng.uniform(0.0, 500e-6);
    m.length2 = rng.uniform(0.0, 500e-6);
    m.arm1_power_transmission = rng.uniform(0.7, 1.0);
    m.arm2_power_transmission = rng.uniform(0.7, 1.0);
    CircuitModel c;
    c.n_rails = 2;
    c.pump_input = 0;
    c.stages.push_back({"mzi", m});
    return c;
}

}  // namespace

TEST_CASE("brute-force propagation of a single waveguide reproduces the pair term") {
    const PumpPulse pulse = default_pulse();
    const auto grid = degenerate_grid(17, 3.0);
    StraightWaveguide wg;
    wg.rail = 0;
    wg.length = 700e-6;
    wg.power_transmission = 0.85;
    CircuitModel c;
    c.n_rails = 1;
    c.pump_input = 0;
    c.stages.push_back({"wg", wg});

    const DiscreteTwoPhotonTensor oracle = fock_propagate(c, pulse, grid);
    const DiscreteTwoPhotonTensor model = to_tensor(assemble_state(c, pulse, grid));
    REQUIRE((oracle.amp - model.amp).cwiseAbs().maxCoeff() <
            1e-14 * oracle.amp.cwiseAbs().maxCoeff());
}

TEST_CASE("closed-form interferometer terms match the primitive composition") {
    const PumpPulse pulse = default_pulse();
    const auto grid = degenerate_grid(17, 3.0);
    Rng rng(101);
    for (int seed = 0; seed < 10; ++seed) {
        const CircuitModel c = single_mzi(rng);
        const DiscreteTwoPhotonTensor oracle = fock_propagate(c, pulse, grid);
        const DiscreteTwoPhotonTensor model = to_tensor(assemble_state(c, pulse, grid));
        REQUIRE((oracle.amp - model.amp).cwiseAbs().maxCoeff() <
                1e-10 * oracle.amp.cwiseAbs().maxCoeff());
    }
}

TEST_CASE("the reference circuit matches the brute-force tensor on a coarse grid") {
    const SimulationSetup setup = load_config(test_support::config_path("fig3_reference.json"));
    const auto grid = SpectralGrid::make(setup.signal_center, setup.idler_center,
                                         1.0 * setup.pulse.fwhm_omega(), 33);
    const DiscreteTwoPhotonTensor oracle = fock_propagate(setup.circuit, setup.pulse, grid);
    const DiscreteTwoPhotonTensor model =
        to_tensor(assemble_state(setup.circuit, setup.pulse, grid));
    REQUIRE((oracle.amp - model.amp).cwiseAbs().maxCoeff() <
            1e-10 * oracle.amp.cwiseAbs().maxCoeff());
}

TEST_CASE("oracle refuses oversized problems") {
    const PumpPulse pulse = default_pulse();
    CircuitModel c;
    c.n_rails = 5;
    c.pump_input = 0;
    REQUIRE_THROWS_AS(fock_propagate(c, pulse, degenerate_grid(17, 3.0)), ConfigError);
    c.n_rails = 2;
    REQUIRE_THROWS_AS(fock_propagate(c, pulse, degenerate_grid(65, 6.0)), ConfigError);
}

TEST_CASE("photon-number moments give 2.0 for a separable pure state") {
    const auto grid = degenerate_grid(17, 3.0);
    TwoPhotonState s;
    s.n_rails = 1;
    BiphotonAmplitude sep;
    sep.grid = grid;
    Eigen::VectorXcd f(grid->n_signal()), g(grid->n_idler());
    for (int j = 0; j < f.size(); ++j) f[j] = std::exp(-0.1 * (j - 8.0) * (j - 8.0));
    for (int k = 0; k < g.size(); ++k) g[k] = std::exp(-0.07 * (k - 6.0) * (k - 6.0));
    sep.values = f * g.transpose();
    sep.normalize();
    PairBlock b;
    b.origin = "src";
    b.jsa = std::make_shared<const BiphotonAmplitude>(std::move(sep));
    b.weights = Eigen::MatrixXcd::Constant(1, 1, Complex(1e-3, 0.0));
    s.blocks.push_back(std::move(b));
    REQUIRE(g2_moment(to_tensor(s), 0) == Catch::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("photon-number moments give 1.5 for two balanced spectral modes") {
    const auto grid = degenerate_grid(17, 3.0);
    TwoPhotonState s;
    s.n_rails = 1;
    BiphotonAmplitude two_modes;
    two_modes.grid = grid;
    two_modes.values = Eigen::MatrixXcd::Zero(grid->n_signal(), grid->n_idler());
    two_modes.values(3, 4) = 1.0;
    two_modes.values(9, 11) = 1.0;
    two_modes.normalize();
    PairBlock b;
    b.origin = "src";
    b.jsa = std::make_shared<const BiphotonAmplitude>(std::move(two_modes));
    b.weights = Eigen::MatrixXcd::Constant(1, 1, Complex(1e-3, 0.0));
    s.blocks.push_back(std::move(b));
    REQUIRE(g2_moment(to_tensor(s), 0) == Catch::Approx(1.5).epsilon(1e-9));
}

TEST_CASE("moments and Schmidt purity agree on random multi-rail states") {
    Rng rng(301);
    const auto grid = degenerate_grid(13, 3.0);
    for (int trial = 0; trial < 10; ++trial) {
        TwoPhotonState s;
        s.n_rails = 2;
        for (int nb = 0; nb < 3; ++nb) {
            PairBlock b;
            b.origin = "b" + std::to_string(nb);
            b.cross_origin = nb == 2;
            b.jsa = test_support::random_jsa(rng, grid);
            b.weights = Eigen::MatrixXcd(2, 2);
            for (int p = 0; p < 2; ++p)
                for (int q = 0; q < 2; ++q) b.weights(p, q) = rng.complex_in_disc(1e-3);
            s.blocks.push_back(std::move(b));
        }
        const DiscreteTwoPhotonTensor t = to_tensor(s);
        for (int port = 0; port < 2; ++port) {
            const double direct = g2_moment(t, port);
            const double via_purity = unheralded_g2(s, port).g2;
            REQUIRE(std::abs(direct - via_purity) < 1e-10);
        }
    }
}

TEST_CASE("moments agree with the coherent port spectrum when one idler rail carries everything") {
    Rng rng(401);
    const auto grid = degenerate_grid(13, 3.0);
    TwoPhotonState s;
    s.n_rails = 2;
    for (int nb = 0; nb < 2; ++nb) {
        PairBlock b;
        b.origin = "b" + std::to_string(nb);
        b.jsa = test_support::random_jsa(rng, grid);
        b.weights = Eigen::MatrixXcd::Zero(2, 2);
        b.weights(0, 1) = rng.complex_in_disc(1e-3);  // signal on 0, idler on 1 only
        s.blocks.push_back(std::move(b));
    }
    const double direct = g2_moment(to_tensor(s), 0);
    const PortJsa pj = port_jsa(s, 0, 1);
    REQUIRE_FALSE(pj.zero_state);
    REQUIRE(direct == Catch::Approx(1.0 + schmidt(pj.amplitude).purity).epsilon(1e-10));
}

TEST_CASE("moments respect the detection filter") {
    const SimulationSetup setup = load_config(test_support::config_path("fig3_reference.json"));
    const auto grid = SpectralGrid::make(setup.signal_center, setup.idler_center,
                                         1.0 * setup.pulse.fwhm_omega(), 33);
    const TwoPhotonState s = assemble_state(setup.circuit, setup.pulse, grid,
                                            setup.cut_stage_index());
    const DiscreteTwoPhotonTensor t = to_tensor(s);
    const SpectralFilter f(setup.signal_center, 2.0 * setup.source_bandwidth);
    const double direct = g2_moment(t, 1, &f);
    const double via_purity = unheralded_g2(s, 1, &f).g2;
    REQUIRE(std::abs(direct - via_purity) < 1e-10);
}
