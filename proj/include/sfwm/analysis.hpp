#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <future>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "sfwm/circuit.hpp"
#include "sfwm/errors.hpp"
#include "sfwm/spectral.hpp"

namespace sfwm {

// ---------------------------------------------------------------------------
// Schmidt purity
// ---------------------------------------------------------------------------

/// Spectral purity of one photon of a pair. schmidt_coefficients λ are
/// normalized to Σλ² = 1, P = Σλ⁴, K = 1/P, and the unheralded beam obeys
/// g²(0) = 1 + P in the low-gain limit.
struct PurityReport {
    double purity = 0.0;
    std::vector<double> schmidt_coefficients;
    double schmidt_number = 0.0;
    double g2 = 0.0;
};

namespace detail {

inline PurityReport report_from_spectrum(std::vector<double> lambda_sq) {
    double total = std::accumulate(lambda_sq.begin(), lambda_sq.end(), 0.0);
    if (!(total > 0.0)) throw ZeroStateError("purity: empty Schmidt spectrum");
    PurityReport rep;
    rep.schmidt_coefficients.reserve(lambda_sq.size());
    double p = 0.0;
    for (double& v : lambda_sq) {
        v /= total;
        p += v * v;
        rep.schmidt_coefficients.push_back(std::sqrt(v));
    }
    std::sort(rep.schmidt_coefficients.begin(), rep.schmidt_coefficients.end(),
              std::greater<double>());
    rep.purity = p;
    rep.schmidt_number = 1.0 / p;
    rep.g2 = 1.0 + p;
    return rep;
}

}  // namespace detail

/// Schmidt decomposition of a joint spectral amplitude: singular values of the
/// measure-weighted matrix Φ√(dω_s dω_i). Singular values below 1e-12 of the
/// largest are discarded as numerical noise.
inline PurityReport schmidt(const BiphotonAmplitude& a) {
    if (!a.values.allFinite()) throw NumericalError("schmidt: non-finite amplitude entries");
    const Eigen::MatrixXcd m = a.values * std::sqrt(a.grid->area_element());
    Eigen::VectorXd sv;
    if (std::min(m.rows(), m.cols()) <= 16) {
        Eigen::JacobiSVD<Eigen::MatrixXcd> svd(m);
        sv = svd.singularValues();
    } else {
        Eigen::BDCSVD<Eigen::MatrixXcd> svd(m);
        sv = svd.singularValues();
    }
    std::vector<double> lambda_sq;
    const double cutoff = 1e-12 * sv[0];
    for (int i = 0; i < sv.size(); ++i)
        if (sv[i] > cutoff) lambda_sq.push_back(sv[i] * sv[i]);
    return detail::report_from_spectrum(std::move(lambda_sq));
}

/// Purity report for a (not necessarily pure) spectral density operator.
/// The coefficient spectrum generalizes the Schmidt coefficients: λ² are the
/// eigenvalues of the trace-normalized operator.
inline PurityReport purity_of_density(const Eigen::MatrixXcd& rho) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(rho);
    const double trace = es.eigenvalues().sum();
    if (!(trace > 0.0)) throw ZeroStateError("purity: density operator has no weight");
    std::vector<double> lambda_sq;
    for (int i = 0; i < es.eigenvalues().size(); ++i) {
        const double v = es.eigenvalues()[i];
        if (v < -1e-10 * trace) throw NumericalError("purity: density operator not positive semidefinite");
        if (v > 1e-14 * trace) lambda_sq.push_back(v);
    }
    return detail::report_from_spectrum(std::move(lambda_sq));
}

// ---------------------------------------------------------------------------
// Port amplitudes and reduced densities
// ---------------------------------------------------------------------------

struct PortJsa {
    BiphotonAmplitude amplitude;
    double weight = 0.0;  // magnitude of the coherent sum, in meters
    bool zero_state = false;
};

/// Coherent sum of every contribution landing on one (signal rail, idler rail)
/// port pair. Perfect destructive interference is flagged, not thrown.
inline PortJsa port_jsa(const TwoPhotonState& state, int signal_rail, int idler_rail) {
    const BiphotonAmplitude* first = nullptr;
    double scale = 0.0;
    for (const auto& b : state.blocks) {
        if (b.weights(signal_rail, idler_rail) != Complex(0.0, 0.0)) {
            if (!first) first = b.jsa.get();
            scale += std::abs(b.weights(signal_rail, idler_rail));
        }
    }
    if (!first) throw ConfigError("port_jsa: no contribution on that rail pair");

    PortJsa out;
    out.amplitude.grid = state.blocks.front().jsa->grid;
    out.amplitude.values =
        Eigen::MatrixXcd::Zero(out.amplitude.grid->n_signal(), out.amplitude.grid->n_idler());
    for (const auto& b : state.blocks) {
        const Complex w = b.weights(signal_rail, idler_rail);
        if (w == Complex(0.0, 0.0)) continue;
        if (b.jsa->grid.get() != out.amplitude.grid.get())
            throw NumericalError("port_jsa: contributions live on different grids");
        out.amplitude.values += w * b.jsa->values;
    }
    const double norm = std::sqrt(out.amplitude.norm_squared());
    if (norm < 1e-12 * scale) {
        out.zero_state = true;
        out.weight = 0.0;
        return out;
    }
    out.weight = norm;
    out.amplitude.normalize();
    return out;
}

/// Reduced spectral density of signal photons leaving `port`, with the
/// undetected idler traced out: contributions sharing the idler rail add
/// coherently, distinguishable idler rails add as a mixture. Optional filters
/// shape the detected signal and, for the heralded variant, the idler.
/// Returns the unnormalized operator; its trace is the detected pair rate.
inline Eigen::MatrixXcd signal_reduced_density(const TwoPhotonState& state, int port,
                                               const SpectralFilter* signal_filter,
                                               const SpectralFilter* idler_filter,
                                               bool exclude_cross) {
    if (state.blocks.empty()) throw ZeroStateError("signal_reduced_density: empty state");
    const auto grid = state.blocks.front().jsa->grid;
    const int ns = grid->n_signal(), ni = grid->n_idler();
    const double cell = std::sqrt(grid->area_element());

    Eigen::VectorXd ts = Eigen::VectorXd::Ones(ns), ti = Eigen::VectorXd::Ones(ni);
    if (signal_filter)
        for (int j = 0; j < ns; ++j) ts[j] = signal_filter->amplitude_transmission(grid->signal_at(j));
    if (idler_filter)
        for (int k = 0; k < ni; ++k) ti[k] = idler_filter->amplitude_transmission(grid->idler_at(k));

    Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(ns, ns);
    for (int idler_rail = 0; idler_rail < state.n_rails; ++idler_rail) {
        Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(ns, ni);
        bool any = false;
        for (const auto& b : state.blocks) {
            if (exclude_cross && b.cross_origin) continue;
            const Complex w = b.weights(port, idler_rail);
            if (w == Complex(0.0, 0.0)) continue;
            a += (w * cell) * b.jsa->values;
            any = true;
        }
        if (!any) continue;
        a = ts.asDiagonal() * a * ti.asDiagonal();
        rho += a * a.adjoint();
    }
    return rho;
}

/// Unheralded g²(0) of the signal beam at one port: 1 + Tr(ρ²)/(Tr ρ)² for the
/// reduced signal density. `exclude_cross` drops pairs that were born split
/// across two rails; `idler_filter` enables the heralded variant.
inline PurityReport unheralded_g2(const TwoPhotonState& state, int port,
                                  const SpectralFilter* signal_filter = nullptr,
                                  bool exclude_cross = false,
                                  const SpectralFilter* idler_filter = nullptr) {
    const Eigen::MatrixXcd rho = signal_reduced_density(state, port, signal_filter, idler_filter,
                                                        exclude_cross);
    const double rate = rho.trace().real();
    if (!(rate > 0.0)) throw ZeroStateError("unheralded_g2: no photons reach the port");
    return purity_of_density(rho);
}

/// Trace-normalized heralded single-photon spectral density at a port.
inline Eigen::MatrixXcd heralded_density(const TwoPhotonState& state, int port,
                                         const SpectralFilter* signal_filter = nullptr,
                                         const SpectralFilter* idler_filter = nullptr,
                                         bool exclude_cross = false) {
    Eigen::MatrixXcd rho =
        signal_reduced_density(state, port, signal_filter, idler_filter, exclude_cross);
    const double rate = rho.trace().real();
    if (!(rate > 0.0)) throw ZeroStateError("heralded_density: no photons reach the port");
    return rho / rate;
}

// ---------------------------------------------------------------------------
// Coincidence rates and fringes
// ---------------------------------------------------------------------------

/// Memoized inner products ⟨Φ_l, Φ_k⟩ between the distinct joint spectra of a
/// run. Build once (single-threaded), then share read-only across workers.
class OverlapCache {
public:
    void prebuild(const TwoPhotonState& state) {
        std::vector<const BiphotonAmplitude*> unique;
        for (const auto& b : state.blocks) {
            const auto* p = b.jsa.get();
            if (std::find(unique.begin(), unique.end(), p) == unique.end()) unique.push_back(p);
        }
        for (const auto* l : unique)
            for (const auto* k : unique) entry(l, k);
    }

    Complex overlap(const BiphotonAmplitude& l, const BiphotonAmplitude& k) const {
        const auto it = cache_.find({&l, &k});
        if (it != cache_.end()) return it->second;
        return compute(l, k);
    }

private:
    Complex entry(const BiphotonAmplitude* l, const BiphotonAmplitude* k) {
        const auto it = cache_.find({l, k});
        if (it != cache_.end()) return it->second;
        const Complex v = compute(*l, *k);
        cache_[{l, k}] = v;
        return v;
    }
    static Complex compute(const BiphotonAmplitude& l, const BiphotonAmplitude& k) {
        if (l.grid.get() != k.grid.get())
            throw NumericalError("OverlapCache: amplitudes live on different grids");
        return (l.values.conjugate().cwiseProduct(k.values)).sum() * l.grid->area_element();
    }

    std::map<std::pair<const void*, const void*>, Complex> cache_;
};

/// Spectrally integrated pair-detection rates per (signal port, idler port).
inline Eigen::MatrixXd coincidence_rates(const TwoPhotonState& state, const OverlapCache& gram) {
    const int n = state.n_rails;
    Eigen::MatrixXd rates = Eigen::MatrixXd::Zero(n, n);
    for (int p = 0; p < n; ++p)
        for (int q = 0; q < n; ++q) {
            Complex acc{0.0, 0.0};
            for (const auto& bk : state.blocks) {
                const Complex wk = bk.weights(p, q);
                if (wk == Complex(0.0, 0.0)) continue;
                for (const auto& bl : state.blocks) {
                    const Complex wl = bl.weights(p, q);
                    if (wl == Complex(0.0, 0.0)) continue;
                    acc += std::conj(wl) * wk * gram.overlap(*bl.jsa, *bk.jsa);
                }
            }
            double r = acc.real();
            if (r < 0.0) {
                if (r < -1e-9 * std::abs(acc)) throw NumericalError("coincidence_rates: negative rate");
                r = 0.0;
            }
            rates(p, q) = r;
        }
    return rates;
}

/// (max − min) / (max + min) of a sampled fringe.
inline double visibility(std::span<const double> curve) {
    if (curve.empty()) throw ConfigError("visibility: empty curve");
    const auto [mn, mx] = std::minmax_element(curve.begin(), curve.end());
    if (!(*mx + *mn > 0.0)) throw NumericalError("visibility: all-zero curve");
    return (*mx - *mn) / (*mx + *mn);
}

struct FringeScan {
    std::vector<double> phi;
    std::vector<double> bunched;
    std::vector<double> anti_bunched;
    double visibility_bunched = 0.0;
    double visibility_anti_bunched = 0.0;
};

namespace detail {

/// Shared machinery for everything that scans the interference phase (and
/// optionally the input splitting). Spectra and their overlaps are computed
/// once; each evaluation only re-propagates weights.
class FringeEvaluator {
public:
    FringeEvaluator(const CircuitModel& circuit, const PumpPulse& pulse,
                    std::shared_ptr<const SpectralGrid> grid)
        : circuit_(circuit), pulse_(pulse), grid_(std::move(grid)),
          cache_(SpectralCache::build(circuit, pulse, grid_)) {
        for (std::size_t i = 0; i < circuit_.stages.size(); ++i) {
            if (const auto* p = std::get_if<PhaseShift>(&circuit_.stages[i].spec))
                if (p->scan) phase_stage_ = static_cast<int>(i);
            if (const auto* m = std::get_if<Mzi>(&circuit_.stages[i].spec))
                if (m->scan) mzi_stage_ = static_cast<int>(i);
        }
        if (phase_stage_ < 0)
            throw ConfigError("fringe: circuit has no scannable phase shifter");
        gram_.prebuild(assemble(0.0, std::nullopt));
    }

    int phase_stage() const { return phase_stage_; }
    int mzi_stage() const { return mzi_stage_; }

    TwoPhotonState assemble(double phi, std::optional<double> theta) const {
        CircuitModel c = circuit_;
        std::get<PhaseShift>(c.stages[static_cast<std::size_t>(phase_stage_)].spec).phi = phi;
        if (theta) {
            if (mzi_stage_ < 0) throw ConfigError("fringe: circuit has no scannable splitter");
            std::get<Mzi>(c.stages[static_cast<std::size_t>(mzi_stage_)].spec).theta = *theta;
        }
        return assemble_state(c, pulse_, grid_, cache_);
    }

    Eigen::MatrixXd port_rates(double phi, std::optional<double> theta = std::nullopt) const {
        return coincidence_rates(assemble(phi, theta), gram_);
    }

    /// (bunched, anti-bunched) coincidence rates, unnormalized.
    std::pair<double, double> rates(double phi, std::optional<double> theta = std::nullopt) const {
        const Eigen::MatrixXd r = port_rates(phi, theta);
        double bunched = 0.0, anti = 0.0;
        for (int p = 0; p < r.rows(); ++p)
            for (int q = 0; q < r.cols(); ++q) (p == q ? bunched : anti) += r(p, q);
        return {bunched, anti};
    }

private:
    CircuitModel circuit_;
    PumpPulse pulse_;
    std::shared_ptr<const SpectralGrid> grid_;
    SpectralCache cache_;
    OverlapCache gram_;
    int phase_stage_ = -1;
    int mzi_stage_ = -1;
};

}  // namespace detail

/// Biphoton interference fringe over the designated phase shifter. Both
/// curves are normalized to the phase-averaged total pair rate.
inline FringeScan hom_fringe(const CircuitModel& circuit, std::span<const double> phase_values,
                             const PumpPulse& pulse, std::shared_ptr<const SpectralGrid> grid) {
    if (phase_values.empty()) throw ConfigError("hom_fringe: empty phase scan");
    const detail::FringeEvaluator eval(circuit, pulse, grid);
    FringeScan out;
    out.phi.assign(phase_values.begin(), phase_values.end());
    out.bunched.resize(out.phi.size());
    out.anti_bunched.resize(out.phi.size());
    double total = 0.0;
    for (std::size_t i = 0; i < out.phi.size(); ++i) {
        const auto [b, a] = eval.rates(out.phi[i]);
        out.bunched[i] = b;
        out.anti_bunched[i] = a;
        total += b + a;
    }
    const double mean_total = total / static_cast<double>(out.phi.size());
    if (!(mean_total > 0.0)) throw ZeroStateError("hom_fringe: no pairs generated");
    for (auto& v : out.bunched) v /= mean_total;
    for (auto& v : out.anti_bunched) v /= mean_total;
    out.visibility_bunched = visibility(out.bunched);
    out.visibility_anti_bunched = visibility(out.anti_bunched);
    return out;
}

struct FringeMap {
    std::vector<double> theta;
    std::vector<double> phi;
    Eigen::MatrixXd bunched;       // rows follow theta, columns phi
    Eigen::MatrixXd anti_bunched;
};

/// Fringe scans for a range of input splittings; rows are normalized like
/// individual fringes. Rows are evaluated concurrently.
inline FringeMap fringe_map(const CircuitModel& circuit, std::span<const double> theta_values,
                            std::span<const double> phase_values, const PumpPulse& pulse,
                            std::shared_ptr<const SpectralGrid> grid, int threads = 0) {
    if (theta_values.empty() || phase_values.empty()) throw ConfigError("fringe_map: empty scan");
    const detail::FringeEvaluator eval(circuit, pulse, grid);
    if (eval.mzi_stage() < 0) throw ConfigError("fringe_map: circuit has no scannable splitter");

    FringeMap out;
    out.theta.assign(theta_values.begin(), theta_values.end());
    out.phi.assign(phase_values.begin(), phase_values.end());
    const int nt = static_cast<int>(out.theta.size());
    const int np = static_cast<int>(out.phi.size());
    out.bunched.resize(nt, np);
    out.anti_bunched.resize(nt, np);

    const int n_workers = threads > 0 ? threads
                                      : std::max(1u, std::thread::hardware_concurrency());
    std::atomic<int> next{0};
    auto worker = [&]() {
        for (int row = next.fetch_add(1); row < nt; row = next.fetch_add(1)) {
            double total = 0.0;
            for (int j = 0; j < np; ++j) {
                const auto [b, a] = eval.rates(out.phi[static_cast<std::size_t>(j)],
                                               out.theta[static_cast<std::size_t>(row)]);
                out.bunched(row, j) = b;
                out.anti_bunched(row, j) = a;
                total += b + a;
            }
            const double mean_total = total / np;
            if (mean_total > 0.0) {
                out.bunched.row(row) /= mean_total;
                out.anti_bunched.row(row) /= mean_total;
            }
        }
    };
    std::vector<std::thread> pool;
    for (int w = 1; w < n_workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    return out;
}

struct FringeAsymmetry {
    double bunched = 0.0;
    double anti_bunched = 0.0;
    double phase_origin = 0.0;  // anti-bunched extremum used as the symmetry point
};

/// Integrated |c(φ₀+u) − c(φ₀−u)| du of the single-arm bunched fringe and the
/// anti-bunched fringe about the anti-bunched minimum φ₀. Bunched coincidences
/// are taken on one output arm (the summed bunched rate of a balanced output
/// coupler is symmetric by construction and would hide the effect); the phase
/// origin is calibrated on the anti-bunched curve because the physical zero of
/// the scan is arbitrary. φ₀ is located by golden-section search.
inline FringeAsymmetry fringe_asymmetry(const CircuitModel& circuit, const PumpPulse& pulse,
                                        std::shared_ptr<const SpectralGrid> grid,
                                        int samples = 64, int bunched_arm = 0) {
    const detail::FringeEvaluator eval(circuit, pulse, grid);
    const double pi = 3.14159265358979323846;

    auto anti = [&](double phi) { return eval.rates(phi).second; };

    // coarse bracket of the anti-bunched minimum over one full period
    const int coarse = 96;
    double best_phi = 0.0, best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < coarse; ++i) {
        const double phi = -pi + 2.0 * pi * i / coarse;
        const double v = anti(phi);
        if (v < best) {
            best = v;
            best_phi = phi;
        }
    }
    double lo = best_phi - 2.0 * pi / coarse, hi = best_phi + 2.0 * pi / coarse;
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
    double f1 = anti(x1), f2 = anti(x2);
    for (int it = 0; it < 60; ++it) {
        if (f1 < f2) {
            hi = x2; x2 = x1; f2 = f1;
            x1 = hi - gr * (hi - lo);
            f1 = anti(x1);
        } else {
            lo = x1; x1 = x2; f1 = f2;
            x2 = lo + gr * (hi - lo);
            f2 = anti(x2);
        }
    }
    const double phi0 = 0.5 * (lo + hi);

    FringeAsymmetry out;
    out.phase_origin = phi0;
    const double du = pi / samples;
    for (int i = 1; i <= samples; ++i) {
        const double u = i * du;
        const Eigen::MatrixXd rp = eval.port_rates(phi0 + u);
        const Eigen::MatrixXd rm = eval.port_rates(phi0 - u);
        out.bunched += std::abs(rp(bunched_arm, bunched_arm) - rm(bunched_arm, bunched_arm)) * du;
        double ap = 0.0, am = 0.0;
        for (int p = 0; p < rp.rows(); ++p)
            for (int q = 0; q < rp.cols(); ++q)
                if (p != q) {
                    ap += rp(p, q);
                    am += rm(p, q);
                }
        out.anti_bunched += std::abs(ap - am) * du;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Bell-state analysis
// ---------------------------------------------------------------------------

/// Post-selected two-qubit state from two heralded photons. Basis order of
/// rho is {|00⟩, |01⟩, |10⟩, |11⟩} over the dual-rail qubits A and B.
struct BellReport {
    Eigen::Matrix4cd rho;
    double success_probability = 0.0;   // P(anti-bunched pattern AND |Ψ⁻⟩)
    double overlap = 0.0;               // O = Tr(ρ₁ρ₂)
    double postselect_probability = 0.0;  // P(one photon per qubit)
    double bunching_probability = 0.0;    // P(both photons in one qubit's rails)
    double triplet_probability = 0.0;     // P(pattern AND |Ψ⁺⟩)
    Eigen::Vector4d rho_eigenvalues;
};

/// Heralded-photon interference in the post-selected swap geometry: photon 1
/// (spectral state ρ₁) is split across the "0" rails of qubits A and B,
/// photon 2 (ρ₂) across the "1" rails with a π phase between its outputs.
/// Selecting one photon per qubit leaves |01⟩ and |10⟩ populated; the two
/// assignments differ by a photon exchange, so their coherence carries the
/// spectral overlap and the singlet |Ψ⁻⟩ = (|01⟩−|10⟩)/√2 is enhanced for
/// indistinguishable photons. All quantities are evaluated as operator traces
/// of the discretized post-selected two-photon density operator.
inline BellReport bell_analysis(const Eigen::MatrixXcd& herald_a, const Eigen::MatrixXcd& herald_b) {
    if (herald_a.rows() != herald_a.cols() || herald_b.rows() != herald_b.cols() ||
        herald_a.rows() != herald_b.rows())
        throw ConfigError("bell_analysis: inputs must be square and equally sized");
    auto check_density = [](const Eigen::MatrixXcd& rho, const char* name) {
        if ((rho - rho.adjoint()).cwiseAbs().maxCoeff() > 1e-9)
            throw ConfigError(std::string("bell_analysis: ") + name + " is not Hermitian");
        if (std::abs(rho.trace().real() - 1.0) > 1e-6 || std::abs(rho.trace().imag()) > 1e-9)
            throw ConfigError(std::string("bell_analysis: ") + name + " is not trace-normalized");
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(rho, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < -1e-10)
            throw NumericalError(std::string("bell_analysis: ") + name + " is not positive semidefinite");
    };
    check_density(herald_a, "herald_a");
    check_density(herald_b, "herald_b");

    const double t1 = herald_a.trace().real();
    const double t2 = herald_b.trace().real();
    const Complex exchange = (herald_a * herald_b).trace();  // Tr over the swap coherence block

    // Pattern weights of the post-selected operator: each photon reaches each
    // qubit with amplitude 1/√2, so every ordered assignment carries 1/4.
    const double w01 = 0.25 * t1 * t2;
    const double w10 = 0.25 * t2 * t1;
    const Complex coherence = -0.25 * exchange;  // minus from the π on photon 2's splitter

    BellReport rep;
    rep.overlap = exchange.real();
    rep.postselect_probability = w01 + w10;
    rep.bunching_probability = 0.25 * t1 * t2 + 0.25 * t1 * t2;

    rep.rho = Eigen::Matrix4cd::Zero();
    rep.rho(1, 1) = w01 / rep.postselect_probability;
    rep.rho(2, 2) = w10 / rep.postselect_probability;
    rep.rho(1, 2) = coherence / rep.postselect_probability;
    rep.rho(2, 1) = std::conj(coherence) / rep.postselect_probability;

    // projections of the unnormalized pattern operator onto the Bell pair
    rep.success_probability = 0.5 * (w01 + w10 - 2.0 * coherence.real());
    rep.triplet_probability = 0.5 * (w01 + w10 + 2.0 * coherence.real());

    Eigen::SelfAdjointEigenSolver<Eigen::Matrix4cd> es(rep.rho, Eigen::EigenvaluesOnly);
    rep.rho_eigenvalues = es.eigenvalues().reverse();
    if (rep.rho_eigenvalues.minCoeff() < -1e-10)
        throw NumericalError("bell_analysis: output state not positive semidefinite");
    if (rep.success_probability < 0.0 || rep.success_probability > 1.0)
        throw NumericalError("bell_analysis: success probability outside [0, 1]");
    return rep;
}

// ---------------------------------------------------------------------------
// Brightness bookkeeping and sweeps
// ---------------------------------------------------------------------------

namespace detail {

/// Fraction of a normalized joint spectrum's pairs whose signal photon passes
/// the detection filter (the undetected idler is unrestricted).
inline double detected_fraction(const BiphotonAmplitude& jsa, const SpectralFilter* filter) {
    if (!filter) return 1.0;
    double acc = 0.0;
    for (int j = 0; j < jsa.grid->n_signal(); ++j)
        acc += filter->power_transmission(jsa.grid->signal_at(j)) * jsa.values.row(j).squaredNorm();
    return acc * jsa.grid->area_element();
}

/// Detected pair-generation rate a component adds at its own output, before
/// any downstream scattering: Σ |w|² times the filtered fraction of its joint
/// spectrum. Brightness ratios compare sources under the detection conditions
/// actually used, so a broadband component is weighted by what survives the
/// filter.
inline double generation_power(const CircuitModel& circuit, const Stage& stage,
                               const PumpState& local, const Bands& bands,
                               const SpectralCache& cache, const SpectralFilter* filter) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    double power = 0.0;
    std::visit(
        [&](const auto& c) {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, StraightWaveguide>) {
                const double lp = EffectiveLength(c.length, c.power_transmission).value * c.generation_scale;
                power = std::norm(local.alpha[c.rail] * local.alpha[c.rail] * lp * inv_sqrt2) *
                        detected_fraction(*cache.waveguide, filter);
            } else if constexpr (std::is_same_v<T, RingSource>) {
                const double lp =
                    EffectiveLength(c.effective_length, c.power_transmission).value * c.generation_scale;
                power = std::norm(local.alpha[c.rail] * local.alpha[c.rail] * lp * inv_sqrt2) *
                        detected_fraction(*cache.ring_for(c), filter);
            } else if constexpr (std::is_same_v<T, Mzi>) {
                const MziPairTerms t = mzi_pair_weights(c, local.alpha[c.rail_a], local.alpha[c.rail_b],
                                                        c.pump_wavenumber ? *c.pump_wavenumber
                                                                          : bands.k_pump);
                power = (std::norm(t.both_a) + std::norm(t.both_b) + 2.0 * std::norm(t.cross)) *
                        detected_fraction(*cache.waveguide, filter);
            }
        },
        stage.spec);
    return power;
}

inline void scale_generation(CircuitModel& circuit, const std::string& id, double factor) {
    for (auto& s : circuit.stages) {
        if (s.id != id) continue;
        if (auto* wg = std::get_if<StraightWaveguide>(&s.spec)) wg->generation_scale *= factor;
        else if (auto* ring = std::get_if<RingSource>(&s.spec)) ring->generation_scale *= factor;
        else if (auto* m = std::get_if<Mzi>(&s.spec)) m->generation_scale *= factor;
        else throw ConfigError("brightness: component '" + id + "' does not generate pairs");
        return;
    }
    throw ConfigError("brightness: unknown component '" + id + "'");
}

}  // namespace detail

/// Relative brightness of a component: its detected pair-generation rate over
/// the circuit's reference source's, under the given detection filter. 1
/// means spurious generation is as likely to be detected as intentional
/// generation.
inline double component_brightness(const CircuitModel& circuit, const std::string& id,
                                   const PumpPulse& pulse,
                                   std::shared_ptr<const SpectralGrid> grid,
                                   const SpectralFilter* filter = nullptr) {
    const Bands bands = bands_for(circuit, pulse, *grid);
    const SpectralCache cache = SpectralCache::build(circuit, pulse, grid);
    const auto trace =
        propagate_pump(circuit, PumpState::input(circuit, pulse.amplitude), bands.k_pump);
    double target = -1.0, reference = -1.0;
    for (std::size_t i = 0; i < circuit.stages.size(); ++i) {
        const auto& s = circuit.stages[i];
        if (s.id == id) target = detail::generation_power(circuit, s, trace[i], bands, cache, filter);
        if (s.id == circuit.reference_source)
            reference = detail::generation_power(circuit, s, trace[i], bands, cache, filter);
    }
    if (target < 0.0) throw ConfigError("brightness: unknown component '" + id + "'");
    if (!(reference > 0.0))
        throw ConfigError("brightness: reference source '" + circuit.reference_source +
                          "' generates nothing");
    return target / reference;
}

/// Copy of the circuit whose component `id` generates at the requested
/// brightness relative to the reference source. Only the generation strength
/// changes; propagation phases and losses stay put.
inline CircuitModel with_component_brightness(const CircuitModel& circuit, const std::string& id,
                                              double brightness, const PumpPulse& pulse,
                                              std::shared_ptr<const SpectralGrid> grid,
                                              const SpectralFilter* filter = nullptr) {
    if (brightness < 0.0) throw ConfigError("brightness: negative value");
    const double current = component_brightness(circuit, id, pulse, grid, filter);
    if (!(current > 0.0))
        throw ConfigError("brightness: component '" + id + "' has zero base generation");
    CircuitModel out = circuit;
    detail::scale_generation(out, id, std::sqrt(brightness / current));
    return out;
}

struct PortOptions {
    int cut_stage = -1;  // evaluate the state before this stage; -1 = output
    int port = 0;
    bool exclude_cross = false;
    bool heralded = false;
    std::optional<SpectralFilter> idler_filter;  // used when heralded
};

struct SweepPoint {
    double x = 0.0;
    double purity = 0.0;
    double g2 = 0.0;
};

/// Purity decay of the analyzed port as one noise component is scaled through
/// the given relative-brightness values. All other non-source components are
/// silenced so each curve isolates a single noise origin.
inline std::vector<SweepPoint> purity_sweep(const CircuitModel& circuit,
                                            const std::string& component_id,
                                            std::span<const double> brightness,
                                            const std::optional<SpectralFilter>& signal_filter,
                                            const PumpPulse& pulse,
                                            std::shared_ptr<const SpectralGrid> grid,
                                            const PortOptions& opt) {
    const CircuitModel base = circuit.with_noise_only_in({component_id});
    const SpectralCache cache = SpectralCache::build(base, pulse, grid);
    const double base_brightness = component_brightness(
        base, component_id, pulse, grid, signal_filter ? &*signal_filter : nullptr);
    if (!(base_brightness > 0.0))
        throw ConfigError("purity_sweep: component '" + component_id + "' has zero base generation");
    std::vector<SweepPoint> out;
    out.reserve(brightness.size());
    for (double b : brightness) {
        if (b < 0.0) throw ConfigError("purity_sweep: negative brightness");
        CircuitModel c = base;
        detail::scale_generation(c, component_id, std::sqrt(b / base_brightness));
        const TwoPhotonState state = assemble_state(c, pulse, grid, cache, opt.cut_stage);
        const PurityReport rep =
            unheralded_g2(state, opt.port, signal_filter ? &*signal_filter : nullptr,
                          opt.exclude_cross,
                          opt.heralded && opt.idler_filter ? &*opt.idler_filter : nullptr);
        out.push_back({b, rep.purity, rep.g2});
    }
    return out;
}

/// Port purity versus detection-filter width (in units of an arbitrary
/// reference bandwidth, typically the source linewidth).
inline std::vector<SweepPoint> filter_sweep(const CircuitModel& circuit,
                                            std::span<const double> widths_relative,
                                            double reference_width, double filter_center,
                                            const PumpPulse& pulse,
                                            std::shared_ptr<const SpectralGrid> grid,
                                            const PortOptions& opt, double idler_center = 0.0) {
    const TwoPhotonState state = assemble_state(circuit, pulse, grid, opt.cut_stage);
    std::vector<SweepPoint> out;
    out.reserve(widths_relative.size());
    for (double w : widths_relative) {
        if (!(w > 0.0)) throw ConfigError("filter_sweep: widths must be positive");
        const SpectralFilter fs(filter_center, w * reference_width, FilterShape::rectangular,
                                FilterTarget::signal);
        std::optional<SpectralFilter> fi;
        if (opt.heralded)
            fi = SpectralFilter(idler_center, w * reference_width, FilterShape::rectangular,
                                FilterTarget::idler);
        const PurityReport rep = unheralded_g2(state, opt.port, &fs, opt.exclude_cross,
                                               fi ? &*fi : nullptr);
        out.push_back({w, rep.purity, rep.g2});
    }
    return out;
}

}  // namespace sfwm
