#pragma once

#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "sfwm/errors.hpp"
#include "sfwm/spectral.hpp"
#include "sfwm/units.hpp"

namespace sfwm {

// ---------------------------------------------------------------------------
// Component catalogue
// ---------------------------------------------------------------------------

/// Loss-adjusted interaction length L' = L·T². T² lumps insertion and
/// propagation loss into a single intensity transmission.
struct EffectiveLength {
    double value;  // m

    EffectiveLength(double length, double power_transmission)
        : value(length * power_transmission) {
        if (!(length >= 0.0)) throw ConfigError("EffectiveLength: length must be non-negative");
        if (!(power_transmission >= 0.0) || !(power_transmission <= 1.0))
            throw ConfigError("EffectiveLength: power transmission must lie in [0, 1]");
    }
};

/// Pair-generating straight section (routing waveguide or spiral source).
struct StraightWaveguide {
    int rail = 0;
    double length = 0.0;              // m
    double power_transmission = 1.0;  // T²
    std::optional<double> pump_wavenumber;  // 1/m; circuit band value when unset
    bool is_source = false;
    double generation_scale = 1.0;  // brightness knob, leaves propagation untouched
};

/// Resonant source characterized by the pair-generation strength of an
/// equivalent straight waveguide of the given length.
struct RingSource {
    int rail = 0;
    RingParams ring;
    double effective_length = 0.0;    // m, equivalent-waveguide interaction length
    double power_transmission = 1.0;  // T²
    double generation_scale = 1.0;
};

/// Tunable 2x2 interferometer: coupler, two phase-controlled arms, coupler.
/// Both couplers share (r, κ) with r² + κ² = T²_split.
struct Mzi {
    int rail_a = 0;
    int rail_b = 1;
    double theta = 0.0;    // rad, phase added to arm 1
    double length1 = 0.0;  // m
    double length2 = 0.0;  // m
    double r = 0.70710678118654752;
    double kappa = 0.70710678118654752;
    double coupler_power_transmission = 1.0;  // T²_split per coupler
    double arm1_power_transmission = 1.0;
    double arm2_power_transmission = 1.0;
    std::optional<double> pump_wavenumber;
    double generation_scale = 1.0;
    bool scan = false;  // designated splitting control for parameter maps
};

struct PhaseShift {
    std::vector<int> rails;
    double phi = 0.0;  // rad
    bool scan = false;  // designated interference phase for fringe scans
};

/// Fixed directional coupler; same (r, κ, T²_split) convention as the MZI.
struct Coupler {
    int rail_a = 0;
    int rail_b = 1;
    double r = 0.70710678118654752;
    double kappa = 0.70710678118654752;
    double coupler_power_transmission = 1.0;
};

/// Ideal pump removal: the coherent pump is extinguished on the listed rails,
/// already-generated photons pass untouched.
struct PumpDump {
    std::vector<int> rails;
};

using ComponentSpec = std::variant<StraightWaveguide, RingSource, Mzi, PhaseShift, Coupler, PumpDump>;

struct Stage {
    std::string id;
    ComponentSpec spec;
};

/// Ordered stages on n rails; strictly sequential, no feedback paths.
struct CircuitModel {
    int n_rails = 2;
    int pump_input = 0;
    std::string reference_source;  // id of the source all brightness ratios refer to
    double n_eff = 2.35;           // effective index used for band wavenumbers
    std::vector<Stage> stages;

    const Stage* find_stage(const std::string& id) const {
        for (const auto& s : stages)
            if (s.id == id) return &s;
        return nullptr;
    }

    int stage_index(const std::string& id) const {
        for (std::size_t i = 0; i < stages.size(); ++i)
            if (stages[i].id == id) return static_cast<int>(i);
        return -1;
    }

    void validate() const;

    /// Copy with every non-source interaction length set to zero; sources and
    /// all transmissions, phases and couplings are preserved.
    CircuitModel with_noise_lengths_zeroed() const;

    /// Copy in which spurious generation survives only in the listed
    /// components (sources always generate).
    CircuitModel with_noise_only_in(const std::vector<std::string>& ids) const;
};

inline bool is_source_stage(const Stage& s) {
    if (std::holds_alternative<RingSource>(s.spec)) return true;
    if (const auto* wg = std::get_if<StraightWaveguide>(&s.spec)) return wg->is_source;
    return false;
}

inline bool generates_pairs(const Stage& s) {
    return std::holds_alternative<StraightWaveguide>(s.spec) ||
           std::holds_alternative<RingSource>(s.spec) || std::holds_alternative<Mzi>(s.spec);
}

namespace detail {

inline void check_coupling(double r, double kappa, double t2_split, const std::string& where) {
    if (!(r >= 0.0) || !(kappa >= 0.0)) throw ConfigError(where + ": r and kappa must be non-negative");
    if (!(t2_split >= 0.0) || !(t2_split <= 1.0))
        throw ConfigError(where + ": coupler power transmission must lie in [0, 1]");
    if (std::abs(r * r + kappa * kappa - t2_split) > 1e-12)
        throw ConfigError(where + ": r^2 + kappa^2 must equal the coupler power transmission");
}

inline void check_rail(int rail, int n_rails, const std::string& where) {
    if (rail < 0 || rail >= n_rails) throw ConfigError(where + ": rail index out of range");
}

inline void check_transmission(double t2, const std::string& where) {
    if (!(t2 >= 0.0) || !(t2 <= 1.0)) throw ConfigError(where + ": power transmission must lie in [0, 1]");
}

}  // namespace detail

inline void CircuitModel::validate() const {
    if (n_rails < 1) throw ConfigError("circuit: needs at least one rail");
    detail::check_rail(pump_input, n_rails, "circuit pump_input");
    std::vector<int> dumps(static_cast<std::size_t>(n_rails), 0);
    for (const auto& s : stages) {
        const std::string where = "stage '" + s.id + "'";
        std::visit(
            [&](const auto& c) {
                using T = std::decay_t<decltype(c)>;
                if constexpr (std::is_same_v<T, StraightWaveguide>) {
                    detail::check_rail(c.rail, n_rails, where);
                    if (!(c.length >= 0.0)) throw ConfigError(where + ": negative length");
                    detail::check_transmission(c.power_transmission, where);
                } else if constexpr (std::is_same_v<T, RingSource>) {
                    detail::check_rail(c.rail, n_rails, where);
                    if (!(c.effective_length >= 0.0)) throw ConfigError(where + ": negative length");
                    detail::check_transmission(c.power_transmission, where);
                } else if constexpr (std::is_same_v<T, Mzi>) {
                    detail::check_rail(c.rail_a, n_rails, where);
                    detail::check_rail(c.rail_b, n_rails, where);
                    if (c.rail_a == c.rail_b) throw ConfigError(where + ": rails must differ");
                    if (!(c.length1 >= 0.0) || !(c.length2 >= 0.0))
                        throw ConfigError(where + ": negative length");
                    detail::check_coupling(c.r, c.kappa, c.coupler_power_transmission, where);
                    detail::check_transmission(c.arm1_power_transmission, where);
                    detail::check_transmission(c.arm2_power_transmission, where);
                } else if constexpr (std::is_same_v<T, PhaseShift>) {
                    for (int r : c.rails) detail::check_rail(r, n_rails, where);
                } else if constexpr (std::is_same_v<T, Coupler>) {
                    detail::check_rail(c.rail_a, n_rails, where);
                    detail::check_rail(c.rail_b, n_rails, where);
                    if (c.rail_a == c.rail_b) throw ConfigError(where + ": rails must differ");
                    detail::check_coupling(c.r, c.kappa, c.coupler_power_transmission, where);
                } else if constexpr (std::is_same_v<T, PumpDump>) {
                    for (int r : c.rails) {
                        detail::check_rail(r, n_rails, where);
                        if (++dumps[static_cast<std::size_t>(r)] > 1)
                            throw ConfigError(where + ": more than one pump dump on a rail");
                    }
                }
            },
            s.spec);
    }
}

inline CircuitModel CircuitModel::with_noise_lengths_zeroed() const {
    CircuitModel out = *this;
    for (auto& s : out.stages) {
        if (is_source_stage(s)) continue;
        if (auto* wg = std::get_if<StraightWaveguide>(&s.spec)) {
            wg->length = 0.0;
        } else if (auto* m = std::get_if<Mzi>(&s.spec)) {
            m->length1 = 0.0;
            m->length2 = 0.0;
        }
    }
    return out;
}

inline CircuitModel CircuitModel::with_noise_only_in(const std::vector<std::string>& ids) const {
    CircuitModel out = *this;
    for (auto& s : out.stages) {
        if (is_source_stage(s)) continue;
        const bool keep = std::find(ids.begin(), ids.end(), s.id) != ids.end();
        if (keep) continue;
        if (auto* wg = std::get_if<StraightWaveguide>(&s.spec)) {
            wg->generation_scale = 0.0;
        } else if (auto* m = std::get_if<Mzi>(&s.spec)) {
            m->generation_scale = 0.0;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Band wavenumbers
// ---------------------------------------------------------------------------

/// One wavenumber per band; linear elements are evaluated at band centers
/// because their dispersion across the simulated span is negligible.
struct Bands {
    double k_pump;
    double k_signal;
    double k_idler;
};

inline Bands bands_for(const CircuitModel& circuit, const PumpPulse& pulse,
                       const SpectralGrid& grid) {
    return Bands{units::wavenumber(circuit.n_eff, pulse.center_omega()),
                 units::wavenumber(circuit.n_eff, grid.signal_center()),
                 units::wavenumber(circuit.n_eff, grid.idler_center())};
}

// ---------------------------------------------------------------------------
// Linear transfers
// ---------------------------------------------------------------------------

/// Closed-form 2x2 transfer of the interferometer at a given wavenumber:
/// coupler, arms diag(t₁ e^{i(kL₁+θ)}, t₂ e^{ikL₂}), coupler. The pump-input
/// column reproduces the bar/cross transmissions
/// T₁ = t₁e^{i(kL₁+θ)}r² − t₂e^{ikL₂}κ² and T₂ = iκr(t₁e^{i(kL₁+θ)} + t₂e^{ikL₂}).
inline Eigen::Matrix2cd mzi_transfer(const Mzi& m, double wavenumber) {
    detail::check_coupling(m.r, m.kappa, m.coupler_power_transmission, "mzi_transfer");
    const Complex p1 = std::sqrt(m.arm1_power_transmission) *
                       std::exp(Complex(0.0, wavenumber * m.length1 + m.theta));
    const Complex p2 = std::sqrt(m.arm2_power_transmission) *
                       std::exp(Complex(0.0, wavenumber * m.length2));
    const double r = m.r, k = m.kappa;
    Eigen::Matrix2cd out;
    out(0, 0) = r * r * p1 - k * k * p2;
    out(1, 0) = Complex(0.0, 1.0) * k * r * (p1 + p2);
    out(0, 1) = out(1, 0);
    out(1, 1) = r * r * p2 - k * k * p1;
    return out;
}

inline Eigen::Matrix2cd coupler_matrix(double r, double kappa) {
    Eigen::Matrix2cd c;
    c(0, 0) = r;
    c(1, 1) = r;
    c(0, 1) = Complex(0.0, kappa);
    c(1, 0) = Complex(0.0, kappa);
    return c;
}

/// n-rail transfer of one stage at a band wavenumber. With `for_pump` set,
/// pump dumps extinguish their rails; for generated photons they are identity.
inline Eigen::MatrixXcd stage_transfer_matrix(const CircuitModel& circuit, const Stage& stage,
                                              double wavenumber, bool for_pump) {
    const int n = circuit.n_rails;
    Eigen::MatrixXcd M = Eigen::MatrixXcd::Identity(n, n);
    std::visit(
        [&](const auto& c) {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, StraightWaveguide>) {
                const double k = c.pump_wavenumber && for_pump ? *c.pump_wavenumber : wavenumber;
                M(c.rail, c.rail) = std::sqrt(c.power_transmission) *
                                    std::exp(Complex(0.0, k * c.length));
            } else if constexpr (std::is_same_v<T, RingSource>) {
                // Point element: equivalent length models generation strength only.
                M(c.rail, c.rail) = std::sqrt(c.power_transmission);
            } else if constexpr (std::is_same_v<T, Mzi>) {
                const double k = c.pump_wavenumber && for_pump ? *c.pump_wavenumber : wavenumber;
                const Eigen::Matrix2cd t = mzi_transfer(c, k);
                M(c.rail_a, c.rail_a) = t(0, 0);
                M(c.rail_a, c.rail_b) = t(0, 1);
                M(c.rail_b, c.rail_a) = t(1, 0);
                M(c.rail_b, c.rail_b) = t(1, 1);
            } else if constexpr (std::is_same_v<T, PhaseShift>) {
                for (int r : c.rails) M(r, r) = std::exp(Complex(0.0, c.phi));
            } else if constexpr (std::is_same_v<T, Coupler>) {
                const Eigen::Matrix2cd t = coupler_matrix(c.r, c.kappa);
                M(c.rail_a, c.rail_a) = t(0, 0);
                M(c.rail_a, c.rail_b) = t(0, 1);
                M(c.rail_b, c.rail_a) = t(1, 0);
                M(c.rail_b, c.rail_b) = t(1, 1);
            } else if constexpr (std::is_same_v<T, PumpDump>) {
                if (for_pump)
                    for (int r : c.rails) M(r, r) = 0.0;
            }
        },
        stage.spec);
    return M;
}

// ---------------------------------------------------------------------------
// Pump propagation
// ---------------------------------------------------------------------------

/// Per-rail coherent pump amplitudes (dimensionless, phase included).
struct PumpState {
    Eigen::VectorXcd alpha;

    static PumpState input(const CircuitModel& circuit, Complex amplitude = {1.0, 0.0}) {
        PumpState s;
        s.alpha = Eigen::VectorXcd::Zero(circuit.n_rails);
        s.alpha[circuit.pump_input] = amplitude;
        return s;
    }

    double total_power() const { return alpha.squaredNorm(); }
};

/// Pump amplitudes immediately before each stage; the final entry is the
/// circuit output. trace[i] feeds stage i's own pair generation.
inline std::vector<PumpState> propagate_pump(const CircuitModel& circuit, const PumpState& in,
                                             double k_pump) {
    if (in.alpha.size() != circuit.n_rails) throw ConfigError("propagate_pump: rail count mismatch");
    std::vector<PumpState> trace;
    trace.reserve(circuit.stages.size() + 1);
    PumpState cur = in;
    trace.push_back(cur);
    for (const auto& stage : circuit.stages) {
        cur.alpha = stage_transfer_matrix(circuit, stage, k_pump, true) * cur.alpha;
        trace.push_back(cur);
    }
    return trace;
}

// ---------------------------------------------------------------------------
// Two-photon state
// ---------------------------------------------------------------------------

/// One originating component's pair amplitudes across rail pairs: entry (m, n)
/// multiplies Φ for a signal photon on rail m and an idler photon on rail n.
/// Weights carry units of meters (interaction length times the squared local
/// pump amplitude, per unit nonlinear coupling).
struct PairBlock {
    std::string origin;
    bool cross_origin = false;  // born as a split (signal/idler on different rails) pair
    std::shared_ptr<const BiphotonAmplitude> jsa;
    Eigen::MatrixXcd weights;
};

/// Flat view of one rail-pair amplitude, for reporting and tests.
struct PairContribution {
    int signal_rail;
    int idler_rail;
    Complex weight;
    std::shared_ptr<const BiphotonAmplitude> jsa;
    std::string origin;
    bool cross_origin;
};

struct TwoPhotonState {
    int n_rails = 0;
    std::vector<PairBlock> blocks;

    /// Merges into an existing block with the same origin, flag and amplitude.
    void add_block(PairBlock&& b) {
        for (auto& existing : blocks) {
            if (existing.origin == b.origin && existing.cross_origin == b.cross_origin &&
                existing.jsa.get() == b.jsa.get()) {
                existing.weights += b.weights;
                return;
            }
        }
        blocks.push_back(std::move(b));
    }

    std::vector<PairContribution> contributions() const {
        std::vector<PairContribution> out;
        for (const auto& b : blocks)
            for (int m = 0; m < n_rails; ++m)
                for (int n = 0; n < n_rails; ++n)
                    if (b.weights(m, n) != Complex(0.0, 0.0))
                        out.push_back({m, n, b.weights(m, n), b.jsa, b.origin, b.cross_origin});
        return out;
    }
};

/// Scatters every contribution through per-photon rail transfers:
/// weights ← M_s · W · M_iᵀ. Joint spectra ride along unchanged (linear
/// optics is spectrally flat across the simulated span).
inline void scatter_pairs(const Eigen::MatrixXcd& m_signal, const Eigen::MatrixXcd& m_idler,
                          TwoPhotonState& state) {
    if (m_signal.rows() != state.n_rails || m_idler.rows() != state.n_rails)
        throw ConfigError("scatter_pairs: matrix dimension does not match rail count");
    for (auto& b : state.blocks) b.weights = m_signal * b.weights * m_idler.transpose();
}

inline void scatter_pairs(const Eigen::MatrixXcd& m, TwoPhotonState& state) {
    scatter_pairs(m, m, state);
}

// ---------------------------------------------------------------------------
// Pair generation
// ---------------------------------------------------------------------------

/// Shared joint spectra for a run: every straight section uses one waveguide
/// amplitude, rings one per distinct resonance/linewidth set.
struct SpectralCache {
    std::shared_ptr<const BiphotonAmplitude> waveguide;
    std::map<std::array<double, 4>, std::shared_ptr<const BiphotonAmplitude>> rings;

    static SpectralCache build(const CircuitModel& circuit, const PumpPulse& pulse,
                               std::shared_ptr<const SpectralGrid> grid) {
        SpectralCache cache;
        bool need_wg = false;
        for (const auto& s : circuit.stages) {
            if (std::holds_alternative<StraightWaveguide>(s.spec) ||
                std::holds_alternative<Mzi>(s.spec))
                need_wg = true;
            if (const auto* ring = std::get_if<RingSource>(&s.spec)) {
                const std::array<double, 4> key{ring->ring.resonance_signal, ring->ring.resonance_idler,
                                                ring->ring.resonance_pump, ring->ring.fwhm_bandwidth};
                if (!cache.rings.count(key))
                    cache.rings[key] = std::make_shared<const BiphotonAmplitude>(
                        ring_jsa(pulse, ring->ring, grid));
            }
        }
        if (need_wg)
            cache.waveguide =
                std::make_shared<const BiphotonAmplitude>(waveguide_jsa(pulse, grid));
        return cache;
    }

    std::shared_ptr<const BiphotonAmplitude> ring_for(const RingSource& r) const {
        const std::array<double, 4> key{r.ring.resonance_signal, r.ring.resonance_idler,
                                        r.ring.resonance_pump, r.ring.fwhm_bandwidth};
        auto it = rings.find(key);
        if (it == rings.end()) throw NumericalError("SpectralCache: missing ring amplitude");
        return it->second;
    }
};

/// The three pair terms created inside the interferometer for pump amplitudes
/// (α_a, α_b) at its inputs: both photons on the upper output, both on the
/// lower, and the symmetric split term. Derivation: generation in each arm
/// with the arm's accumulated pump phase squared and loss-adjusted length,
/// scattered through the output coupler.
struct MziPairTerms {
    Complex both_a;  // a†_s a†_i coefficient
    Complex both_b;  // b†_s b†_i coefficient
    Complex cross;   // coefficient of (a†_s b†_i + b†_s a†_i)
};

inline MziPairTerms mzi_pair_weights(const Mzi& m, Complex alpha_a, Complex alpha_b, double k_p) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    const double r = m.r, k = m.kappa;
    const Complex i1{0.0, 1.0};
    const Complex arm1_in = r * alpha_a + i1 * k * alpha_b;
    const Complex arm2_in = i1 * k * alpha_a + r * alpha_b;
    const Complex ph1 = std::exp(Complex(0.0, 2.0 * (k_p * m.length1 + m.theta)));
    const Complex ph2 = std::exp(Complex(0.0, 2.0 * (k_p * m.length2)));
    const double l1 = EffectiveLength(m.length1, m.arm1_power_transmission).value;
    const double l2 = EffectiveLength(m.length2, m.arm2_power_transmission).value;
    const Complex g1 = arm1_in * arm1_in * ph1 * (l1 * m.generation_scale * inv_sqrt2);
    const Complex g2 = arm2_in * arm2_in * ph2 * (l2 * m.generation_scale * inv_sqrt2);
    MziPairTerms out;
    out.both_a = r * r * g1 - k * k * g2;
    out.both_b = -k * k * g1 + r * r * g2;
    out.cross = i1 * k * r * (g1 + g2);
    return out;
}

/// Closed-form pair terms for a pump entering the upper rail only, paired
/// with the shared straight-section joint spectrum.
struct MziPairContributions {
    MziPairTerms coefficients;
    std::shared_ptr<const BiphotonAmplitude> jsa;
};

inline MziPairContributions mzi_pair_terms(const Mzi& m, Complex alpha_in, const PumpPulse& pulse,
                                           std::shared_ptr<const SpectralGrid> grid, double k_p) {
    MziPairContributions out;
    out.coefficients = mzi_pair_weights(m, alpha_in, Complex{0.0, 0.0}, k_p);
    out.jsa = std::make_shared<const BiphotonAmplitude>(waveguide_jsa(pulse, grid));
    return out;
}

/// Pair amplitudes created inside one stage given the pump at its input.
/// Straight sections contribute (α e^{ik_p L})² L'/√2 on their rail; rings the
/// same with their equivalent length and no internal propagation phase;
/// interferometers the three arm-interference terms. Purely linear stages
/// generate nothing.
inline void add_component_generation(TwoPhotonState& state, const CircuitModel& circuit,
                                     const Stage& stage, const PumpState& local,
                                     const SpectralCache& cache, const Bands& bands) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    const int n = circuit.n_rails;
    std::visit(
        [&](const auto& c) {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, StraightWaveguide>) {
                const Complex alpha = local.alpha[c.rail];
                const double lp = EffectiveLength(c.length, c.power_transmission).value * c.generation_scale;
                if (alpha == Complex(0.0, 0.0) || lp == 0.0) return;
                const double k = c.pump_wavenumber ? *c.pump_wavenumber : bands.k_pump;
                const Complex exit = alpha * std::exp(Complex(0.0, k * c.length));
                PairBlock b;
                b.origin = stage.id;
                b.jsa = cache.waveguide;
                b.weights = Eigen::MatrixXcd::Zero(n, n);
                b.weights(c.rail, c.rail) = exit * exit * lp * inv_sqrt2;
                state.add_block(std::move(b));
            } else if constexpr (std::is_same_v<T, RingSource>) {
                const Complex alpha = local.alpha[c.rail];
                const double lp =
                    EffectiveLength(c.effective_length, c.power_transmission).value * c.generation_scale;
                if (alpha == Complex(0.0, 0.0) || lp == 0.0) return;
                PairBlock b;
                b.origin = stage.id;
                b.jsa = cache.ring_for(c);
                b.weights = Eigen::MatrixXcd::Zero(n, n);
                b.weights(c.rail, c.rail) = alpha * alpha * lp * inv_sqrt2;
                state.add_block(std::move(b));
            } else if constexpr (std::is_same_v<T, Mzi>) {
                const Complex aa = local.alpha[c.rail_a];
                const Complex ab = local.alpha[c.rail_b];
                if ((aa == Complex(0.0, 0.0) && ab == Complex(0.0, 0.0)) ||
                    c.generation_scale == 0.0 || (c.length1 == 0.0 && c.length2 == 0.0))
                    return;
                const double k = c.pump_wavenumber ? *c.pump_wavenumber : bands.k_pump;
                const MziPairTerms t = mzi_pair_weights(c, aa, ab, k);
                PairBlock bunched;
                bunched.origin = stage.id;
                bunched.jsa = cache.waveguide;
                bunched.weights = Eigen::MatrixXcd::Zero(n, n);
                bunched.weights(c.rail_a, c.rail_a) = t.both_a;
                bunched.weights(c.rail_b, c.rail_b) = t.both_b;
                state.add_block(std::move(bunched));
                PairBlock split;
                split.origin = stage.id;
                split.cross_origin = true;
                split.jsa = cache.waveguide;
                split.weights = Eigen::MatrixXcd::Zero(n, n);
                split.weights(c.rail_a, c.rail_b) = t.cross;
                split.weights(c.rail_b, c.rail_a) = t.cross;
                state.add_block(std::move(split));
            }
        },
        stage.spec);
}

// ---------------------------------------------------------------------------
// Full assembly
// ---------------------------------------------------------------------------

/// Runs the pump through the circuit, generating pairs in every pump-carrying
/// component and scattering already-generated pairs through each stage's
/// linear transfer. `until_stage` (exclusive) evaluates the state at an
/// interior cut; -1 means the circuit output.
inline TwoPhotonState assemble_state(const CircuitModel& circuit, const PumpPulse& pulse,
                                     std::shared_ptr<const SpectralGrid> grid,
                                     const SpectralCache& cache, int until_stage = -1) {
    circuit.validate();
    const Bands bands = bands_for(circuit, pulse, *grid);
    const auto trace =
        propagate_pump(circuit, PumpState::input(circuit, pulse.amplitude), bands.k_pump);

    TwoPhotonState state;
    state.n_rails = circuit.n_rails;
    const std::size_t stop = until_stage < 0 ? circuit.stages.size()
                                             : static_cast<std::size_t>(until_stage);
    if (stop > circuit.stages.size()) throw ConfigError("assemble_state: cut index out of range");
    for (std::size_t i = 0; i < stop; ++i) {
        const Stage& stage = circuit.stages[i];
        const Eigen::MatrixXcd ms = stage_transfer_matrix(circuit, stage, bands.k_signal, false);
        const Eigen::MatrixXcd mi = stage_transfer_matrix(circuit, stage, bands.k_idler, false);
        scatter_pairs(ms, mi, state);
        add_component_generation(state, circuit, stage, trace[i], cache, bands);
    }
    return state;
}

inline TwoPhotonState assemble_state(const CircuitModel& circuit, const PumpPulse& pulse,
                                     std::shared_ptr<const SpectralGrid> grid,
                                     int until_stage = -1) {
    const SpectralCache cache = SpectralCache::build(circuit, pulse, grid);
    return assemble_state(circuit, pulse, grid, cache, until_stage);
}

}  // namespace sfwm
