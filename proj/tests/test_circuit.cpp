#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>

#include "sfwm/circuit.hpp"
#include "sfwm/parse.hpp"
#include "sfwm/rng.hpp"
#include "support.hpp"

using namespace sfwm;
using test_support::default_pulse;
using test_support::degenerate_grid;

namespace {

Mzi random_mzi(Rng& rng, bool lossless = false) {
    Mzi m;
    m.theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double t2 = lossless ? 1.0 : rng.uniform(0.8, 1.0);
    const double split = rng.uniform(0.05, 0.95);
    m.r = std::sqrt(split * t2);
    m.kappa = std::sqrt((1.0 - split) * t2);
    m.coupler_power_transmission = m.r * m.r + m.kappa * m.kappa;
    m.length1 = rng.uniform(0.0, 500e-6);
    m.length2 = rng.uniform(0.0, 500e-6);
    m.arm1_power_transmission = lossless ? 1.0 : rng.uniform(0.7, 1.0);
    m.arm2_power_transmission = lossless ? 1.0 : rng.uniform(0.7, 1.0);
    return m;
}

CircuitModel single_stage(ComponentSpec spec, int n_rails = 2) {
    CircuitModel c;
    c.n_rails = n_rails;
    c.pump_input = 0;
    c.stages.push_back({"stage", std::move(spec)});
    return c;
}

}  // namespace

TEST_CASE("effective length is the product of length and power transmission") {
    REQUIRE(EffectiveLength(0.0123, 0.5).value == 0.0123 * 0.5);
    REQUIRE_THROWS_AS(EffectiveLength(-1.0, 0.5), ConfigError);
    REQUIRE_THROWS_AS(EffectiveLength(1.0, 1.5), ConfigError);
}

TEST_CASE("coupling invariant is enforced") {
    Mzi m;
    m.r = 0.8;
    m.kappa = 0.8;
    m.coupler_power_transmission = 1.0;  // 0.64 + 0.64 != 1
    REQUIRE_THROWS_AS(mzi_transfer(m, 1e6), ConfigError);
}

TEST_CASE("balanced lossless interferometer is fully cross coupled") {
    Mzi m;  // defaults: r = kappa = 1/sqrt(2), equal zero-length arms
    m.length1 = m.length2 = 200e-6;
    const Eigen::Matrix2cd t = mzi_transfer(m, 9.5e6);
    REQUIRE(t(0, 0) == Complex(0.0, 0.0));  // exact cancellation, same bits
    REQUIRE(std::abs(std::abs(t(1, 0)) - 1.0) < 1e-15);
}

TEST_CASE("decoupled interferometer reduces to a phased bar path") {
    Mzi m;
    m.r = 0.9;
    m.kappa = 0.0;
    m.coupler_power_transmission = 0.81;
    m.length1 = 150e-6;
    m.length2 = 40e-6;
    m.theta = 0.7;
    const double k = 9.5e6;
    const Eigen::Matrix2cd t = mzi_transfer(m, k);
    const Complex expected = 0.81 * std::exp(Complex(0.0, k * m.length1 + m.theta));
    REQUIRE(std::abs(t(0, 0) - expected) < 1e-15);
    REQUIRE(t(1, 0) == Complex(0.0, 0.0));
}

TEST_CASE("lossless interferometer transfers are unitary and match the primitive product") {
    Rng rng(21);
    for (int i = 0; i < 40; ++i) {
        const Mzi m = random_mzi(rng, true);
        const double k = rng.uniform(8e6, 1e7);
        const Eigen::Matrix2cd t = mzi_transfer(m, k);
        const Eigen::Matrix2cd gram = t.adjoint() * t;
        REQUIRE((gram - Eigen::Matrix2cd::Identity()).cwiseAbs().maxCoeff() < 1e-12);

        Eigen::Matrix2cd arms = Eigen::Matrix2cd::Zero();
        arms(0, 0) = std::exp(Complex(0.0, k * m.length1 + m.theta));
        arms(1, 1) = std::exp(Complex(0.0, k * m.length2));
        const Eigen::Matrix2cd product =
            coupler_matrix(m.r, m.kappa) * arms * coupler_matrix(m.r, m.kappa);
        REQUIRE((t - product).cwiseAbs().maxCoeff() < 1e-15);
    }
}

TEST_CASE("pump through a lossless waveguide only acquires phase") {
    StraightWaveguide wg;
    wg.rail = 0;
    wg.length = 450e-6;
    const CircuitModel c = single_stage(wg, 1);
    const double k = 9.3e6;
    const auto trace = propagate_pump(c, PumpState::input(c), k);
    REQUIRE(trace.size() == 2);
    const Complex out = trace.back().alpha[0];
    REQUIRE(std::abs(out - std::exp(Complex(0.0, k * wg.length))) < 1e-15);
    REQUIRE(std::abs(std::abs(out) - 1.0) < 1e-15);
}

TEST_CASE("a balanced lossless interferometer extinguishes the bar output") {
    Mzi m;
    m.length1 = m.length2 = 120e-6;
    const CircuitModel c = single_stage(m);
    const auto trace = propagate_pump(c, PumpState::input(c), 9.5e6);
    REQUIRE(std::abs(trace.back().alpha[0]) < 1e-14);
    REQUIRE(std::abs(std::abs(trace.back().alpha[1]) - 1.0) < 1e-14);
}

TEST_CASE("pump propagation equals the stage-matrix chain") {
    Rng rng(33);
    for (int trial = 0; trial < 5; ++trial) {
        CircuitModel c;
        c.n_rails = 3;
        c.pump_input = static_cast<int>(rng.uniform(0.0, 3.0));
        StraightWaveguide wg;
        wg.rail = 1;
        wg.length = rng.uniform(0.0, 1e-3);
        wg.power_transmission = rng.uniform(0.5, 1.0);
        c.stages.push_back({"wg", wg});
        Mzi m = random_mzi(rng);
        m.rail_a = 0;
        m.rail_b = 2;
        c.stages.push_back({"mzi", m});
        PhaseShift p;
        p.rails = {2};
        p.phi = rng.uniform(0.0, 6.0);
        c.stages.push_back({"phi", p});
        Coupler cp;
        cp.rail_a = 1;
        cp.rail_b = 2;
        cp.r = 0.6;
        cp.kappa = 0.8;
        cp.coupler_power_transmission = 1.0;
        c.stages.push_back({"coupler", cp});
        PumpDump d;
        d.rails = {0};
        c.stages.push_back({"dump", d});

        const double k = 9.5e6;
        const auto trace = propagate_pump(c, PumpState::input(c), k);
        Eigen::VectorXcd expected = PumpState::input(c).alpha;
        for (std::size_t i = 0; i < c.stages.size(); ++i) {
            REQUIRE((trace[i].alpha - expected).cwiseAbs().maxCoeff() < 1e-12);
            expected = stage_transfer_matrix(c, c.stages[i], k, true) * expected;
        }
        REQUIRE((trace.back().alpha - expected).cwiseAbs().maxCoeff() < 1e-12);

        // total pump power never grows stage to stage
        for (std::size_t i = 0; i + 1 < trace.size(); ++i)
            REQUIRE(trace[i + 1].total_power() <= trace[i].total_power() + 1e-12);
    }
}

TEST_CASE("pump power is conserved through lossless stages") {
    Mzi m;
    m.length1 = 80e-6;
    m.length2 = 50e-6;
    m.theta = 1.1;
    CircuitModel c = single_stage(m);
    PhaseShift p;
    p.rails = {0, 1};
    p.phi = 0.4;
    c.stages.push_back({"phi", p});
    const auto trace = propagate_pump(c, PumpState::input(c), 9.5e6);
    for (const auto& s : trace) REQUIRE(s.total_power() == Catch::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("interferometer pair terms reduce correctly in closed form") {
    const double k = 9.5e6;

    SECTION("decoupled device collapses to the single-waveguide term") {
        Mzi m;
        m.r = 1.0;
        m.kappa = 0.0;
        m.length1 = 300e-6;
        m.length2 = 123e-6;
        m.theta = 0.9;
        const MziPairTerms t = mzi_pair_weights(m, Complex(1.0, 0.0), Complex(0.0, 0.0), k);
        const Complex expected = std::exp(Complex(0.0, 2.0 * (k * m.length1 + m.theta))) *
                                 m.length1 / std::sqrt(2.0);
        REQUIRE(std::abs(t.both_a - expected) < 1e-15 * std::abs(expected));
        REQUIRE(t.both_b == Complex(0.0, 0.0));
        REQUIRE(t.cross == Complex(0.0, 0.0));
    }

    SECTION("balanced symmetric device cancels the split term") {
        Mzi m;
        m.length1 = m.length2 = 200e-6;
        const MziPairTerms t = mzi_pair_weights(m, Complex(1.0, 0.0), Complex(0.0, 0.0), k);
        REQUIRE(std::abs(t.cross) < 1e-14 * std::abs(t.both_a));
        const double lp = 200e-6 / std::sqrt(2.0);
        REQUIRE(std::abs(t.both_a) == Catch::Approx(0.5 * lp).epsilon(1e-12));
        REQUIRE(std::abs(t.both_b) == Catch::Approx(0.5 * lp).epsilon(1e-12));
    }

    SECTION("general coefficients match the direct arm-interference expressions") {
        Rng rng(5);
        for (int i = 0; i < 30; ++i) {
            const Mzi m = random_mzi(rng);
            const Complex alpha = rng.complex_in_disc();
            const MziPairTerms t = mzi_pair_weights(m, alpha, Complex(0.0, 0.0), k);
            const double l1 = m.length1 * m.arm1_power_transmission;
            const double l2 = m.length2 * m.arm2_power_transmission;
            const Complex p1 = std::exp(Complex(0.0, 2.0 * (k * m.length1 + m.theta)));
            const Complex p2 = std::exp(Complex(0.0, 2.0 * k * m.length2));
            const double r2 = m.r * m.r, k2 = m.kappa * m.kappa;
            const Complex pref = alpha * alpha / std::sqrt(2.0);
            const Complex both_a = (l1 * p1 * r2 * r2 + l2 * p2 * k2 * k2) * pref;
            const Complex both_b = -r2 * k2 * (l1 * p1 + l2 * p2) * pref;
            const Complex cross =
                Complex(0.0, 1.0) * m.kappa * m.r * (l1 * p1 * r2 - l2 * p2 * k2) * pref;
            REQUIRE(std::abs(t.both_a - both_a) <= 1e-14 * std::abs(both_a));
            REQUIRE(std::abs(t.both_b - both_b) <= 1e-14 * std::abs(both_b));
            REQUIRE(std::abs(t.cross - cross) <= 1e-14 * std::abs(cross));
        }
    }
}

TEST_CASE("a decoupled interferometer behaves bit-identically to a straight waveguide") {
    // exact powers of two keep every product exactly representable
    const PumpPulse pulse = default_pulse();
    const auto grid = degenerate_grid(17, 3.0);

    Mzi m;
    m.r = 0.5;
    m.kappa = 0.0;
    m.coupler_power_transmission = 0.25;
    m.length1 = 0.0625;
    m.length2 = 0.0;
    m.theta = 0.0;
    const CircuitModel mzi_circuit = single_stage(m);

    StraightWaveguide wg;
    wg.rail = 0;
    wg.length = 0.0625;
    wg.power_transmission = 0.0625;  // r^4 for the two couplers
    const CircuitModel wg_circuit = single_stage(wg);

    const TwoPhotonState a = assemble_state(mzi_circuit, pulse, grid);
    const TwoPhotonState b = assemble_state(wg_circuit, pulse, grid);
    const Complex wa = a.blocks.front().weights(0, 0);
    const Complex wb = b.blocks.front().weights(0, 0);
    REQUIRE(wa.real() == wb.real());
    REQUIRE(wa.imag() == wb.imag());

    const Bands bands = bands_for(mzi_circuit, pulse, *grid);
    const auto ta = propagate_pump(mzi_circuit, PumpState::input(mzi_circuit), bands.k_pump);
    const auto tb = propagate_pump(wg_circuit, PumpState::input(wg_circuit), bands.k_pump);
    REQUIRE(ta.back().alpha[0].real() == tb.back().alpha[0].real());
    REQUIRE(ta.back().alpha[0].imag() == tb.back().alpha[0].imag());
}

TEST_CASE("halving the power transmission halves the generation weight exactly") {
    const PumpPulse pulse = default_pulse();
    const auto grid = degenerate_grid(17, 3.0);
    StraightWaveguide wg;
    wg.rail = 0;
    wg.length = 430e-6;
    wg.power_transmission = 0.82;
    const Complex w_full =
        assemble_state(single_stage(wg), pulse, grid).blocks.front().weights(0, 0);
    wg.power_transmission *= 0.5;
    const Complex w_half =
        assemble_state(single_stage(wg), pulse, grid).blocks.front().weights(0, 0);
    REQUIRE(w_half.real() == 0.5 * w_full.real());
    REQUIRE(w_half.imag() == 0.5 * w_full.imag());
}

TEST_CASE("component generation scales as the local pump amplitude squared") {
    const PumpPulse pulse = default_pulse();
    const auto grid = degenerate_grid(17, 3.0);

    StraightWaveguide wg;
    wg.rail = 0;
    wg.length = 300e-6;
    const CircuitModel direct = single_stage(wg);
    const Complex w_direct = assemble_state(direct, pulse, grid).blocks.front().weights(0, 0);

    // an upstream lossless 50:50 splitter halves the pump power in each arm
    CircuitModel split;
    split.n_rails = 2;
    split.pump_input = 0;
    Coupler cp;
    cp.rail_a = 0;
    cp.rail_b = 1;
    split.stages.push_back({"bs", cp});
    StraightWaveguide wg0 = wg, wg1 = wg;
    wg1.rail = 1;
    split.stages.push_back({"wg0", wg0});
    split.stages.push_back({"wg1", wg1});
    const TwoPhotonState s = assemble_state(split, pulse, grid);
    for (const auto& b : s.blocks) {
        const Complex w = b.weights(0, 0) != Complex(0.0, 0.0) ? b.weights(0, 0)
                                                               : b.weights(1, 1);
        REQUIRE(std::abs(w) == Catch::Approx(0.5 * std::abs(w_direct)).epsilon(1e-12));
    }
}

TEST_CASE("pump-free components generate nothing") {
    const PumpPulse pulse = default_pulse();
    const auto grid = degenerate_grid(17, 3.0);
    CircuitModel c;
    c.n_rails = 2;
    c.pump_input = 0;
    PumpDump d;
    d.rails = {0};
    c.stages.push_back({"dump", d});
    StraightWaveguide wg;
    wg.rail = 0;
    wg.length = 1e-3;
    c.stages.push_back({"wg", wg});
    const TwoPhotonState s = assemble_state(c, pulse, grid);
    REQUIRE(s.blocks.empty());
}

TEST_CASE("doubling one component's generation scale doubles only its own block") {
    const PumpPulse pulse = default_pulse();
    const auto grid = degenerate_grid(17, 3.0);
    CircuitModel c;
    c.n_rails = 2;
    c.pump_input = 0;
    StraightWaveguide wg_a;
    wg_a.rail = 0;
    wg_a.length = 200e-6;
    c.stages.push_back({"a", wg_a});
    Mzi m;
    m.length1 = 90e-6;
    m.length2 = 70e-6;
    m.theta = 0.3;
    c.stages.push_back({"m", m});
    StraightWaveguide wg_b;
    wg_b.rail = 1;
    wg_b.length = 150e-6;
    c.stages.push_back({"b", wg_b});

    const TwoPhotonState base = assemble_state(c, pulse, grid);
    std::get<StraightWaveguide>(c.stages[0].spec).generation_scale = 2.0;
    const TwoPhotonState doubled = assemble_state(c, pulse, grid);
    REQUIRE(base.blocks.size() == doubled.blocks.size());
    for (std::size_t i = 0; i < base.blocks.size(); ++i) {
        const double factor = base.blocks[i].origin == "a" ? 2.0 : 1.0;
        for (int p = 0; p < 2; ++p)
            for (int q = 0; q < 2; ++q) {
                REQUIRE(doubled.blocks[i].weights(p, q).real() ==
                        factor * base.blocks[i].weights(p, q).real());
                REQUIRE(doubled.blocks[i].weights(p, q).imag() ==
                        factor * base.blocks[i].weights(p, q).imag());
            }
    }
}

TEST_CASE("scattering through the identity leaves the state untouched") {
    Rng rng(17);
    const auto grid = degenerate_grid(9, 3.0);
    TwoPhotonState s;
    s.n_rails = 3;
    PairBlock b;
    b.origin = "x";
    b.jsa = test_support::random_jsa(rng, grid);
    b.weights = Eigen::MatrixXcd::Zero(3, 3);
    b.weights(0, 1) = Complex(0.3, -0.2);
    b.weights(2, 2) = Complex(-0.1, 0.05);
    s.blocks.push_back(b);
    scatter_pairs(Eigen::MatrixXcd::Identity(3, 3), s);
    REQUIRE((s.blocks.front().weights - b.weights).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE_THROWS_AS(scatter_pairs(Eigen::MatrixXcd::Identity(2, 2), s), ConfigError);
}

TEST_CASE("a degenerate pair splits on a balanced coupler with the textbook weights") {
    const auto grid = degenerate_grid(9, 3.0);
    Rng rng(19);
    TwoPhotonState s;
    s.n_rails = 2;
    PairBlock b;
    b.origin = "src";
    b.jsa = test_support::random_jsa(rng, grid);
    b.weights = Eigen::MatrixXcd::Zero(2, 2);
    b.weights(0, 0) = Complex(1.0, 0.0);
    s.blocks.push_back(std::move(b));
    const double r = 0.6, kappa = 0.8;
    Eigen::MatrixXcd m(2, 2);
    m << Complex(r, 0), Complex(0, kappa), Complex(0, kappa), Complex(r, 0);
    scatter_pairs(m, s);
    const auto& w = s.blocks.front().weights;
    REQUIRE(std::abs(w(0, 0) - Complex(r * r, 0.0)) < 1e-15);
    REQUIRE(std::abs(w(1, 1) - Complex(-kappa * kappa, 0.0)) < 1e-15);
    REQUIRE(std::abs(w(0, 1) - Complex(0.0, r * kappa)) < 1e-15);
    REQUIRE(std::abs(w(1, 0) - Complex(0.0, r * kappa)) < 1e-15);
}

TEST_CASE("coherent pair weight is conserved under lossless scattering") {
    Rng rng(23);
    const auto grid = degenerate_grid(9, 3.0);
    for (int trial = 0; trial < 10; ++trial) {
        TwoPhotonState s;
        s.n_rails = 3;
        const auto jsa = test_support::random_jsa(rng, grid);
        for (int nb = 0; nb < 2; ++nb) {
            PairBlock b;
            b.origin = "b" + std::to_string(nb);
            b.jsa = nb == 0 ? jsa : test_support::random_jsa(rng, grid);
            b.weights = Eigen::MatrixXcd(3, 3);
            for (int p = 0; p < 3; ++p)
                for (int q = 0; q < 3; ++q) b.weights(p, q) = rng.complex_in_disc();
            s.blocks.push_back(std::move(b));
        }
        auto total = [&]() {
            // norm of the coherent rail-pair sums, including cross-spectrum overlaps
            OverlapCache gram;
            gram.prebuild(s);
            return coincidence_rates(s, gram).sum();
        };
        const double before = total();
        const Eigen::MatrixXcd u = test_support::random_unitary(rng, 3);
        scatter_pairs(u, s);
        REQUIRE(total() == Catch::Approx(before).epsilon(1e-10));
    }
}

TEST_CASE("a single waveguide produces exactly the first-order pair term") {
    const PumpPulse pulse = default_pulse();
    const auto grid = degenerate_grid(17, 3.0);
    StraightWaveguide wg;
    wg.rail = 0;
    wg.length = 640e-6;
    wg.power_transmission = 0.9;
    const CircuitModel c = single_stage(wg, 1);
    const TwoPhotonState s = assemble_state(c, pulse, grid);
    REQUIRE(s.blocks.size() == 1);
    const Bands bands = bands_for(c, pulse, *grid);
    // the pair inherits the squared pump phase accumulated over the section
    const Complex expected = std::exp(Complex(0.0, 2.0 * bands.k_pump * wg.length)) *
                             (wg.length * wg.power_transmission) / std::sqrt(2.0);
    REQUIRE(std::abs(s.blocks.front().weights(0, 0) - expected) < 1e-15);
}

TEST_CASE("the reference document parses into the expected model") {
    const SimulationSetup setup = load_config(test_support::config_path("fig3_reference.json"));
    const CircuitModel& c = setup.circuit;
    REQUIRE(c.n_rails == 2);
    REQUIRE(c.pump_input == 0);
    REQUIRE(c.reference_source == "ring");
    REQUIRE(c.stages.size() == 11);
    REQUIRE(std::holds_alternative<Mzi>(c.find_stage("mzi_split")->spec));
    REQUIRE(std::get<Mzi>(c.find_stage("mzi_split")->spec).scan);
    REQUIRE(std::holds_alternative<RingSource>(c.find_stage("ring")->spec));
    REQUIRE(std::get<StraightWaveguide>(c.find_stage("spiral")->spec).is_source);
    REQUIRE(std::get<PhaseShift>(c.find_stage("phi")->spec).scan);
    REQUIRE(std::holds_alternative<PumpDump>(c.find_stage("dump")->spec));
    REQUIRE(std::holds_alternative<Coupler>(c.find_stage("bs_out")->spec));
    REQUIRE(setup.cut_stage_index() == 10);
}

TEST_CASE("document validation reports precise failures") {
    auto parse = [](const std::string& body) {
        return parse_circuit_document(nlohmann::json::parse(body));
    };

    SECTION("empty stage list is a valid pass-through circuit") {
        REQUIRE_NOTHROW(parse(R"({"rails": 2, "pump_input": 0, "stages": []})"));
    }
    SECTION("violated coupling budget") {
        REQUIRE_THROWS_WITH(
            parse(R"({"rails": 2, "pump_input": 0, "stages": [
                {"kind": "coupler", "id": "bad", "rails": [0, 1], "r": 0.8, "kappa": 0.8, "t2_split": 1.0}]})"),
            Catch::Matchers::ContainsSubstring("bad") &&
                Catch::Matchers::ContainsSubstring("kappa"));
    }
    SECTION("unknown component kind") {
        REQUIRE_THROWS_WITH(parse(R"({"rails": 1, "pump_input": 0, "stages": [
                {"kind": "prism", "id": "p", "rail": 0}]})"),
                            Catch::Matchers::ContainsSubstring("prism"));
    }
    SECTION("rail index out of range") {
        REQUIRE_THROWS_WITH(parse(R"({"rails": 2, "pump_input": 0, "stages": [
                {"kind": "waveguide", "id": "w", "rail": 5, "length_um": 10}]})"),
                            Catch::Matchers::ContainsSubstring("rail"));
    }
    SECTION("negative length") {
        REQUIRE_THROWS_WITH(parse(R"({"rails": 1, "pump_input": 0, "stages": [
                {"kind": "waveguide", "id": "w", "rail": 0, "length_um": -3}]})"),
                            Catch::Matchers::ContainsSubstring("negative length"));
    }
    SECTION("double pump dump on one rail") {
        REQUIRE_THROWS_WITH(parse(R"({"rails": 1, "pump_input": 0, "stages": [
                {"kind": "pump_dump", "id": "d1", "rails": [0]},
                {"kind": "pump_dump", "id": "d2", "rails": [0]}]})"),
                            Catch::Matchers::ContainsSubstring("pump dump"));
    }
}
