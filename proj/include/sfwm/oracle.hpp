#pragma once

#include <cmath>
#include <complex>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "sfwm/circuit.hpp"
#include "sfwm/errors.hpp"
#include "sfwm/spectral.hpp"

namespace sfwm {

/// Explicit two-photon amplitude over (rail ⊗ frequency-bin) pairs. Row index
/// rail_s·N_s + bin_s, column index rail_i·N_i + bin_i. Entries carry the
/// discrete per-bin amplitude (joint spectra multiplied by √(dω_s dω_i)), so
/// squared norms are probabilities in the same units as block weights.
struct DiscreteTwoPhotonTensor {
    int n_rails = 0;
    std::shared_ptr<const SpectralGrid> grid;
    Eigen::MatrixXcd amp;

    int signal_dim() const { return n_rails * grid->n_signal(); }
    int idler_dim() const { return n_rails * grid->n_idler(); }
};

/// Flattens a block-form state into the dense tensor (for comparisons).
inline DiscreteTwoPhotonTensor to_tensor(const TwoPhotonState& state) {
    if (state.blocks.empty()) throw NumericalError("to_tensor: empty state");
    DiscreteTwoPhotonTensor t;
    t.n_rails = state.n_rails;
    t.grid = state.blocks.front().jsa->grid;
    const int ns = t.grid->n_signal(), ni = t.grid->n_idler();
    const double cell = std::sqrt(t.grid->area_element());
    t.amp = Eigen::MatrixXcd::Zero(t.n_rails * ns, t.n_rails * ni);
    for (const auto& b : state.blocks) {
        if (b.jsa->grid.get() != t.grid.get())
            throw NumericalError("to_tensor: blocks live on different grids");
        for (int m = 0; m < t.n_rails; ++m)
            for (int n = 0; n < t.n_rails; ++n) {
                const Complex w = b.weights(m, n);
                if (w == Complex(0.0, 0.0)) continue;
                t.amp.block(m * ns, n * ni, ns, ni) += (w * cell) * b.jsa->values;
            }
    }
    return t;
}

namespace oracle_detail {

/// Applies an n_rails×n_rails transfer to one photon index of the tensor,
/// acting identically on every frequency bin.
inline void apply_rail_transfer(DiscreteTwoPhotonTensor& t, const Eigen::MatrixXcd& m_signal,
                                const Eigen::MatrixXcd& m_idler) {
    const int ns = t.grid->n_signal(), ni = t.grid->n_idler();
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(t.amp.rows(), t.amp.cols());
    for (int ms = 0; ms < t.n_rails; ++ms)
        for (int mi = 0; mi < t.n_rails; ++mi) {
            Eigen::MatrixXcd acc = Eigen::MatrixXcd::Zero(ns, ni);
            for (int js = 0; js < t.n_rails; ++js)
                for (int ji = 0; ji < t.n_rails; ++ji) {
                    const Complex c = m_signal(ms, js) * m_idler(mi, ji);
                    if (c == Complex(0.0, 0.0)) continue;
                    acc += c * t.amp.block(js * ns, ji * ni, ns, ni);
                }
            out.block(ms * ns, mi * ni, ns, ni) = acc;
        }
    t.amp.swap(out);
}

inline void add_generation(DiscreteTwoPhotonTensor& t, int rail, Complex weight,
                           const BiphotonAmplitude& jsa) {
    if (weight == Complex(0.0, 0.0)) return;
    const int ns = t.grid->n_signal(), ni = t.grid->n_idler();
    const double cell = std::sqrt(t.grid->area_element());
    t.amp.block(rail * ns, rail * ni, ns, ni) += (weight * cell) * jsa.values;
}

inline Eigen::MatrixXcd embed2(int n_rails, int a, int b, const Eigen::Matrix2cd& m) {
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Identity(n_rails, n_rails);
    out(a, a) = m(0, 0);
    out(a, b) = m(0, 1);
    out(b, a) = m(1, 0);
    out(b, b) = m(1, 1);
    return out;
}

}  // namespace oracle_detail

/// Brute-force reference propagation: every stage is decomposed into its
/// primitive couplers, phase sections and point generators, and the two-photon
/// tensor is evolved by literal per-photon matrix application. No use of the
/// closed-form interferometer expressions.
inline DiscreteTwoPhotonTensor fock_propagate(const CircuitModel& circuit, const PumpPulse& pulse,
                                              std::shared_ptr<const SpectralGrid> grid) {
    circuit.validate();
    if (circuit.n_rails > 4) throw ConfigError("fock_propagate: limited to 4 rails");
    if (grid->n_signal() > 64 || grid->n_idler() > 64)
        throw ConfigError("fock_propagate: limited to 64x64 frequency bins");

    const Bands bands = bands_for(circuit, pulse, *grid);
    const SpectralCache cache = SpectralCache::build(circuit, pulse, grid);
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    const Complex i1{0.0, 1.0};
    const int n = circuit.n_rails;

    DiscreteTwoPhotonTensor t;
    t.n_rails = n;
    t.grid = grid;
    t.amp = Eigen::MatrixXcd::Zero(n * grid->n_signal(), n * grid->n_idler());

    Eigen::VectorXcd alpha = PumpState::input(circuit, pulse.amplitude).alpha;

    for (const auto& stage : circuit.stages) {
        std::visit(
            [&](const auto& c) {
                using T = std::decay_t<decltype(c)>;
                if constexpr (std::is_same_v<T, StraightWaveguide>) {
                    const double kp = c.pump_wavenumber ? *c.pump_wavenumber : bands.k_pump;
                    // photons generated anywhere in the section leave with the
                    // full section phase; the section loss sits in L'
                    const Complex exit = alpha[c.rail] * std::exp(Complex(0.0, kp * c.length));
                    const double lp =
                        EffectiveLength(c.length, c.power_transmission).value * c.generation_scale;
                    Eigen::MatrixXcd ms = Eigen::MatrixXcd::Identity(n, n);
                    Eigen::MatrixXcd mi = ms;
                    const double tamp = std::sqrt(c.power_transmission);
                    ms(c.rail, c.rail) = tamp * std::exp(Complex(0.0, bands.k_signal * c.length));
                    mi(c.rail, c.rail) = tamp * std::exp(Complex(0.0, bands.k_idler * c.length));
                    oracle_detail::apply_rail_transfer(t, ms, mi);
                    oracle_detail::add_generation(t, c.rail, exit * exit * lp * inv_sqrt2,
                                                  *cache.waveguide);
                    alpha[c.rail] *= tamp * std::exp(Complex(0.0, kp * c.length));
                } else if constexpr (std::is_same_v<T, RingSource>) {
                    const double lp = EffectiveLength(c.effective_length, c.power_transmission).value *
                                      c.generation_scale;
                    Eigen::MatrixXcd m = Eigen::MatrixXcd::Identity(n, n);
                    m(c.rail, c.rail) = std::sqrt(c.power_transmission);
                    oracle_detail::apply_rail_transfer(t, m, m);
                    oracle_detail::add_generation(t, c.rail, alpha[c.rail] * alpha[c.rail] * lp * inv_sqrt2,
                                                  *cache.ring_for(c));
                    alpha[c.rail] *= std::sqrt(c.power_transmission);
                } else if constexpr (std::is_same_v<T, Mzi>) {
                    const double kp = c.pump_wavenumber ? *c.pump_wavenumber : bands.k_pump;
                    const Eigen::MatrixXcd cp =
                        oracle_detail::embed2(n, c.rail_a, c.rail_b, coupler_matrix(c.r, c.kappa));
                    // input coupler
                    oracle_detail::apply_rail_transfer(t, cp, cp);
                    alpha = cp * alpha;
                    // arms: passing photons see the lossy phased sections,
                    // newly generated pairs the squared arm-exit pump phase
                    auto arm_diag = [&](double k) {
                        Eigen::MatrixXcd d = Eigen::MatrixXcd::Identity(n, n);
                        d(c.rail_a, c.rail_a) = std::sqrt(c.arm1_power_transmission) *
                                                std::exp(Complex(0.0, k * c.length1 + c.theta));
                        d(c.rail_b, c.rail_b) = std::sqrt(c.arm2_power_transmission) *
                                                std::exp(Complex(0.0, k * c.length2));
                        return d;
                    };
                    oracle_detail::apply_rail_transfer(t, arm_diag(bands.k_signal), arm_diag(bands.k_idler));
                    const double l1 = EffectiveLength(c.length1, c.arm1_power_transmission).value *
                                      c.generation_scale;
                    const double l2 = EffectiveLength(c.length2, c.arm2_power_transmission).value *
                                      c.generation_scale;
                    const Complex exit1 =
                        alpha[c.rail_a] * std::exp(Complex(0.0, kp * c.length1 + c.theta));
                    const Complex exit2 = alpha[c.rail_b] * std::exp(Complex(0.0, kp * c.length2));
                    oracle_detail::add_generation(t, c.rail_a, exit1 * exit1 * l1 * inv_sqrt2,
                                                  *cache.waveguide);
                    oracle_detail::add_generation(t, c.rail_b, exit2 * exit2 * l2 * inv_sqrt2,
                                                  *cache.waveguide);
                    alpha[c.rail_a] = exit1 * std::sqrt(c.arm1_power_transmission);
                    alpha[c.rail_b] = exit2 * std::sqrt(c.arm2_power_transmission);
                    // output coupler
                    oracle_detail::apply_rail_transfer(t, cp, cp);
                    alpha = cp * alpha;
                } else if constexpr (std::is_same_v<T, PhaseShift>) {
                    Eigen::MatrixXcd m = Eigen::MatrixXcd::Identity(n, n);
                    for (int r : c.rails) m(r, r) = std::exp(Complex(0.0, c.phi));
                    oracle_detail::apply_rail_transfer(t, m, m);
                    alpha = m * alpha;
                } else if constexpr (std::is_same_v<T, Coupler>) {
                    const Eigen::MatrixXcd cp =
                        oracle_detail::embed2(n, c.rail_a, c.rail_b, coupler_matrix(c.r, c.kappa));
                    oracle_detail::apply_rail_transfer(t, cp, cp);
                    alpha = cp * alpha;
                } else if constexpr (std::is_same_v<T, PumpDump>) {
                    for (int r : c.rails) alpha[r] = 0.0;
                }
            },
            stage.spec);
    }
    return t;
}

/// Unheralded second-order autocorrelation of the signal beam at one output
/// rail, from photon-number moments of the marginal Gaussian state:
/// g²(0) = 1 + Tr(G²)/(Tr G)² with G the first-order correlation matrix of the
/// detected signal modes. An optional filter shapes the detected signal bins.
inline double g2_moment(const DiscreteTwoPhotonTensor& t, int port,
                        const SpectralFilter* filter = nullptr) {
    if (port < 0 || port >= t.n_rails) throw ConfigError("g2_moment: port out of range");
    const int ns = t.grid->n_signal();
    Eigen::MatrixXcd slab = t.amp.middleRows(port * ns, ns);
    if (filter) {
        for (int j = 0; j < ns; ++j)
            slab.row(j) *= filter->amplitude_transmission(t.grid->signal_at(j));
    }
    const Eigen::MatrixXcd g1 = slab * slab.adjoint();
    const double rate = g1.trace().real();
    if (!(rate > 0.0)) throw ZeroStateError("g2_moment: no signal photons reach the port");
    const double second = (g1 * g1).trace().real();
    return 1.0 + second / (rate * rate);
}

}  // namespace sfwm
