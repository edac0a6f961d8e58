#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sfwm/errors.hpp"
#include "sfwm/units.hpp"

namespace sfwm {

using Complex = std::complex<double>;

// ---------------------------------------------------------------------------
// Grids
// ---------------------------------------------------------------------------

/// Uniform rectangular grid of signal/idler angular frequencies (rad/s).
/// Axes are stored as (origin, step, count) so the spacing is uniform by
/// construction; materialized axis vectors are derived from these.
class SpectralGrid {
public:
    SpectralGrid(double signal_origin, double signal_step, int n_signal,
                 double idler_origin, double idler_step, int n_idler)
        : s0_(signal_origin), ds_(signal_step), ns_(n_signal),
          i0_(idler_origin), di_(idler_step), ni_(n_idler) {
        if (ns_ < 2 || ni_ < 2) throw ConfigError("SpectralGrid: at least 2 points per axis required");
        if (!(ds_ > 0.0) || !(di_ > 0.0)) throw ConfigError("SpectralGrid: axis step must be positive");
        signal_.resize(ns_);
        idler_.resize(ni_);
        for (int j = 0; j < ns_; ++j) signal_[j] = s0_ + j * ds_;
        for (int k = 0; k < ni_; ++k) idler_[k] = i0_ + k * di_;
    }

    /// Validating constructor for externally supplied axes. Each axis must be
    /// strictly increasing and uniform; the tolerance allows only the
    /// floating-point reconstruction noise of a genuinely uniform axis.
    SpectralGrid(const Eigen::VectorXd& signal_axis, const Eigen::VectorXd& idler_axis)
        : SpectralGrid(check_axis(signal_axis, "signal"), axis_step(signal_axis),
                       static_cast<int>(signal_axis.size()),
                       check_axis(idler_axis, "idler"), axis_step(idler_axis),
                       static_cast<int>(idler_axis.size())) {}

    /// Square-ish grid centered on the two band centers with identical step.
    static std::shared_ptr<const SpectralGrid> make(double signal_center, double idler_center,
                                                    double half_span, int points) {
        if (points < 2) throw ConfigError("SpectralGrid: at least 2 points per axis required");
        const double step = 2.0 * half_span / (points - 1);
        return std::make_shared<const SpectralGrid>(signal_center - half_span, step, points,
                                                    idler_center - half_span, step, points);
    }

    int n_signal() const { return ns_; }
    int n_idler() const { return ni_; }
    double step_s() const { return ds_; }
    double step_i() const { return di_; }
    double signal_at(int j) const { return s0_ + j * ds_; }
    double idler_at(int k) const { return i0_ + k * di_; }
    const Eigen::VectorXd& signal_axis() const { return signal_; }
    const Eigen::VectorXd& idler_axis() const { return idler_; }
    double area_element() const { return ds_ * di_; }
    double signal_center() const { return s0_ + 0.5 * (ns_ - 1) * ds_; }
    double idler_center() const { return i0_ + 0.5 * (ni_ - 1) * di_; }
    bool equal_steps() const { return std::abs(ds_ - di_) <= 1e-9 * std::max(ds_, di_); }

private:
    static double axis_step(const Eigen::VectorXd& axis) {
        return (axis[axis.size() - 1] - axis[0]) / static_cast<double>(axis.size() - 1);
    }
    static double check_axis(const Eigen::VectorXd& axis, const char* name) {
        if (axis.size() < 2) throw ConfigError(std::string("SpectralGrid: ") + name + " axis needs >= 2 points");
        const double step = axis_step(axis);
        if (!(step > 0.0)) throw ConfigError(std::string("SpectralGrid: ") + name + " axis must be strictly increasing");
        const double scale_noise = 8.0 * std::numeric_limits<double>::epsilon() * std::abs(axis[axis.size() - 1]);
        const double tol = 1e-12 * step + scale_noise;
        for (int j = 0; j + 1 < axis.size(); ++j) {
            const double d = axis[j + 1] - axis[j];
            if (!(d > 0.0) || std::abs(d - step) > tol)
                throw ConfigError(std::string("SpectralGrid: ") + name + " axis is not uniformly spaced");
        }
        return axis[0];
    }

    double s0_, ds_;
    int ns_;
    double i0_, di_;
    int ni_;
    Eigen::VectorXd signal_, idler_;
};

// ---------------------------------------------------------------------------
// Pump pulse
// ---------------------------------------------------------------------------

enum class PumpShape { gaussian, sech };

/// Coherent pump pulse. The bandwidth is the full width at half maximum of
/// the spectral power density, given as a wavelength width.
struct PumpPulse {
    double center_wavelength;  // m
    double fwhm_bandwidth;     // m, power FWHM
    PumpShape shape = PumpShape::gaussian;
    Complex amplitude = {1.0, 0.0};

    PumpPulse(double center_wavelength_m, double fwhm_bandwidth_m,
              PumpShape s = PumpShape::gaussian, Complex amp = {1.0, 0.0})
        : center_wavelength(center_wavelength_m), fwhm_bandwidth(fwhm_bandwidth_m),
          shape(s), amplitude(amp) {
        if (!(center_wavelength > 0.0)) throw ConfigError("PumpPulse: center wavelength must be positive");
        if (!(fwhm_bandwidth > 0.0)) throw ConfigError("PumpPulse: bandwidth must be positive");
        if (!std::isfinite(std::abs(amplitude))) throw ConfigError("PumpPulse: amplitude must be finite");
    }

    double center_omega() const { return units::omega_from_wavelength(center_wavelength); }
    double fwhm_omega() const {
        return units::omega_width_from_wavelength_width(fwhm_bandwidth, center_wavelength);
    }
};

/// Spectral amplitude of the pump field, normalized so that
/// ∫ |α(ω)|² dω = |amplitude|². Units 1/sqrt(rad/s).
inline Complex pump_envelope(const PumpPulse& pulse, double omega) {
    const double d = omega - pulse.center_omega();
    const double w = pulse.fwhm_omega();
    constexpr double ln2 = 0.6931471805599453;
    switch (pulse.shape) {
        case PumpShape::gaussian: {
            const double norm = std::pow(4.0 * ln2 / (3.141592653589793 * w * w), 0.25);
            return pulse.amplitude * norm * std::exp(-2.0 * ln2 * d * d / (w * w));
        }
        case PumpShape::sech: {
            // sech²(c·d) reaches 1/2 at c·d = arccosh(√2).
            constexpr double acosh_sqrt2 = 0.8813735870195430;
            const double c = 2.0 * acosh_sqrt2 / w;
            return pulse.amplitude * std::sqrt(0.5 * c) / std::cosh(c * d);
        }
    }
    return {0.0, 0.0};
}

// ---------------------------------------------------------------------------
// Phase matching
// ---------------------------------------------------------------------------

/// ∫₀ᴸ exp(iΔk z) dz = L sinc(ΔkL/2) exp(iΔkL/2), with sinc(x) = sin(x)/x.
inline Complex phase_matching(double delta_k, double length) {
    if (!std::isfinite(delta_k) || !std::isfinite(length))
        throw NumericalError("phase_matching: non-finite input");
    if (!(length > 0.0)) throw ConfigError("phase_matching: length must be positive");
    const double x = 0.5 * delta_k * length;
    double s;
    if (std::abs(x) < 1e-8) {
        s = 1.0 - x * x / 6.0;
    } else {
        s = std::sin(x) / x;
    }
    return length * s * std::exp(Complex(0.0, x));
}

// ---------------------------------------------------------------------------
// Biphoton amplitudes
// ---------------------------------------------------------------------------

/// Discretized joint spectral amplitude Φ(ω_s, ω_i); rows follow the signal
/// axis, columns the idler axis. When `normalized` is set,
/// Σ |Φ|² dω_s dω_i = 1 holds within 1e-9.
struct BiphotonAmplitude {
    std::shared_ptr<const SpectralGrid> grid;
    Eigen::MatrixXcd values;
    bool normalized = false;
    std::string warning;  // empty when the construction was unproblematic

    double norm_squared() const { return values.squaredNorm() * grid->area_element(); }

    void normalize() {
        const double n2 = norm_squared();
        if (!(n2 > 0.0) || !std::isfinite(n2))
            throw ZeroStateError("BiphotonAmplitude: cannot normalize a zero or non-finite amplitude");
        values *= 1.0 / std::sqrt(n2);
        normalized = true;
    }
};

/// Resonance triplet of a micro-ring photon-pair source. The bandwidth is the
/// full width at half maximum of the intensity response, as a wavelength width.
struct RingParams {
    double resonance_signal;  // rad/s
    double resonance_idler;   // rad/s
    double resonance_pump;    // rad/s
    double fwhm_bandwidth;    // m

    RingParams(double res_signal, double res_idler, double res_pump, double bandwidth_m)
        : resonance_signal(res_signal), resonance_idler(res_idler),
          resonance_pump(res_pump), fwhm_bandwidth(bandwidth_m) {
        if (!(fwhm_bandwidth > 0.0)) throw ConfigError("RingParams: bandwidth must be positive");
    }

    /// Linewidth in rad/s at the given resonance.
    double gamma_at(double omega) const {
        return units::omega_width_from_wavelength_width(fwhm_bandwidth, units::wavelength_from_omega(omega));
    }
};

/// Unit-peak complex Lorentzian field enhancement; |l|² has FWHM gamma. The
/// resonance phase is kept: the pump-resonance phase curvature is not
/// separable from the sum-frequency amplitude and measurably lowers the
/// source purity, so dropping it would idealize the resonator.
inline Complex lorentzian_enhancement(double omega, double center, double gamma) {
    return 1.0 / Complex(1.0, -2.0 * (omega - center) / gamma);
}

namespace detail {

/// Evaluates f(ν) = ∫ α(ω) g(ω) α(ν−ω) g(ν−ω) dω for every anti-diagonal
/// ν_d = signal[0] + idler[0] + d·step of an equal-step grid. The quadrature
/// lattice is an integer refinement of the grid step so that ν−ω always lands
/// on a lattice node and the pump samples are computed once.
template <class Enhance>
std::vector<Complex> sum_frequency_amplitude(const PumpPulse& pulse, const SpectralGrid& grid,
                                             Enhance&& enhance, double support_mult = 16.0) {
    const int n_diag = grid.n_signal() + grid.n_idler() - 1;
    std::vector<Complex> f(static_cast<std::size_t>(n_diag));

    const double step = grid.step_s();
    const int refine = 8;
    const double h = step / refine;
    const double omega_p = pulse.center_omega();
    const double window = support_mult * pulse.fwhm_omega();

    // Anchor so that ν_d = 2a + (refine·d)·h.
    const double a = 0.5 * (grid.signal_at(0) + grid.idler_at(0));
    const long j_lo = static_cast<long>(std::floor((omega_p - window - a) / h));
    const long j_hi = static_cast<long>(std::ceil((omega_p + window - a) / h));
    const long n_nodes = j_hi - j_lo + 1;

    std::vector<Complex> u(static_cast<std::size_t>(n_nodes));
    for (long j = 0; j < n_nodes; ++j) {
        const double omega = a + (j_lo + j) * h;
        u[static_cast<std::size_t>(j)] = pump_envelope(pulse, omega) * enhance(omega);
    }

    for (int d = 0; d < n_diag; ++d) {
        // ν_d − ω_j corresponds to lattice index refine·d − j (relative to a).
        const long m_base = static_cast<long>(refine) * d;
        Complex acc{0.0, 0.0};
        for (long j = 0; j < n_nodes; ++j) {
            const long m = m_base - (j_lo + j) - j_lo;
            if (m < 0 || m >= n_nodes) continue;
            acc += u[static_cast<std::size_t>(j)] * u[static_cast<std::size_t>(m)];
        }
        f[static_cast<std::size_t>(d)] = acc * h;
    }
    return f;
}

/// Direct quadrature fallback for grids with unequal axis steps.
template <class Enhance>
Complex sum_frequency_at(const PumpPulse& pulse, double nu, Enhance&& enhance) {
    const double omega_p = pulse.center_omega();
    const double window = 16.0 * pulse.fwhm_omega();
    const int n = 4096;
    const double h = 2.0 * window / n;
    Complex acc{0.0, 0.0};
    for (int j = 0; j <= n; ++j) {
        const double omega = omega_p - window + j * h;
        const double wgt = (j == 0 || j == n) ? 0.5 : 1.0;
        acc += wgt * pump_envelope(pulse, omega) * enhance(omega) *
               pump_envelope(pulse, nu - omega) * enhance(nu - omega);
    }
    return acc * h;
}

/// Fraction of ∫ |f(ν)|² dν captured by the grid's range of ω_s + ω_i,
/// where f is the pump sum-frequency amplitude. Uses a coarse wide lattice;
/// ν nodes are an integer refinement of it so partners stay on-lattice.
inline double captured_sum_frequency_fraction(const PumpPulse& pulse, double nu_min, double nu_max) {
    const double center = 2.0 * pulse.center_omega();
    const double window = 16.0 * pulse.fwhm_omega();
    const int n_nu = 1024;
    const double dnu = 2.0 * window / n_nu;
    const double h = 0.5 * dnu;
    const double a = 0.5 * (center - window);

    const double omega_p = pulse.center_omega();
    const long j_lo = static_cast<long>(std::floor((omega_p - window - a) / h));
    const long j_hi = static_cast<long>(std::ceil((omega_p + window - a) / h));
    const long n_nodes = j_hi - j_lo + 1;
    std::vector<Complex> u(static_cast<std::size_t>(n_nodes));
    for (long j = 0; j < n_nodes; ++j) u[static_cast<std::size_t>(j)] = pump_envelope(pulse, a + (j_lo + j) * h);

    double total = 0.0, captured = 0.0;
    for (int k = 0; k <= n_nu; ++k) {
        // ν_k = 2a + 2k·h, so the partner of lattice node j is 2k − j.
        Complex acc{0.0, 0.0};
        for (long j = 0; j < n_nodes; ++j) {
            const long m = 2L * k - (j_lo + j) - j_lo;
            if (m < 0 || m >= n_nodes) continue;
            acc += u[static_cast<std::size_t>(j)] * u[static_cast<std::size_t>(m)];
        }
        const double p = std::norm(acc * h);
        const double nu = 2.0 * a + 2.0 * k * h;
        total += p;
        if (nu >= nu_min && nu <= nu_max) captured += p;
    }
    return total > 0.0 ? captured / total : 0.0;
}

}  // namespace detail

/// Joint spectral amplitude of a phase-matched-flat waveguide source:
/// Φ(ω_s, ω_i) ∝ ∫ α(ω) α(ω_s + ω_i − ω) dω, normalized on the grid.
/// The result depends on ω_s + ω_i only, so it is constant along
/// anti-diagonals (exactly so for equal-step grids).
inline BiphotonAmplitude waveguide_jsa(const PumpPulse& pulse,
                                       std::shared_ptr<const SpectralGrid> grid) {
    BiphotonAmplitude out;
    out.grid = grid;
    out.values.resize(grid->n_signal(), grid->n_idler());

    auto unity = [](double) { return 1.0; };
    if (grid->equal_steps()) {
        const auto f = detail::sum_frequency_amplitude(pulse, *grid, unity);
        for (int j = 0; j < grid->n_signal(); ++j)
            for (int k = 0; k < grid->n_idler(); ++k)
                out.values(j, k) = f[static_cast<std::size_t>(j + k)];
    } else {
        for (int j = 0; j < grid->n_signal(); ++j)
            for (int k = 0; k < grid->n_idler(); ++k)
                out.values(j, k) =
                    detail::sum_frequency_at(pulse, grid->signal_at(j) + grid->idler_at(k), unity);
    }

    const double nu_min = grid->signal_at(0) + grid->idler_at(0);
    const double nu_max = grid->signal_at(grid->n_signal() - 1) + grid->idler_at(grid->n_idler() - 1);
    const double captured = detail::captured_sum_frequency_fraction(pulse, nu_min, nu_max);
    if (captured < 0.99) {
        out.warning = "grid too narrow: only " + std::to_string(captured * 100.0) +
                      "% of the pump sum-frequency weight falls inside the grid";
    }
    out.normalize();
    return out;
}

/// Joint spectral amplitude of a ring-resonator source: Lorentzian field
/// enhancement at the signal/idler resonances multiplying the pump
/// sum-frequency amplitude filtered by the pump resonance, normalized on the
/// grid. Errors out if the grid cannot resolve the ring line (at least six
/// samples across the full width at half maximum of the complex enhancement,
/// which is √3 times the intensity linewidth).
inline BiphotonAmplitude ring_jsa(const PumpPulse& pulse, const RingParams& ring,
                                  std::shared_ptr<const SpectralGrid> grid) {
    const double gamma_s = ring.gamma_at(ring.resonance_signal);
    const double gamma_i = ring.gamma_at(ring.resonance_idler);
    const double gamma_p = ring.gamma_at(ring.resonance_pump);

    const double sqrt3 = 1.7320508075688772;
    if (grid->step_s() > sqrt3 * gamma_s / 6.0 || grid->step_i() > sqrt3 * gamma_i / 6.0)
        throw ConfigError("ring_jsa: grid step too coarse to resolve the ring linewidth");

    auto l_p = [&](double w) { return lorentzian_enhancement(w, ring.resonance_pump, gamma_p); };

    BiphotonAmplitude out;
    out.grid = grid;
    out.values.resize(grid->n_signal(), grid->n_idler());

    Eigen::VectorXcd ls(grid->n_signal()), li(grid->n_idler());
    for (int j = 0; j < grid->n_signal(); ++j)
        ls[j] = lorentzian_enhancement(grid->signal_at(j), ring.resonance_signal, gamma_s);
    for (int k = 0; k < grid->n_idler(); ++k)
        li[k] = lorentzian_enhancement(grid->idler_at(k), ring.resonance_idler, gamma_i);

    if (grid->equal_steps()) {
        const auto f = detail::sum_frequency_amplitude(pulse, *grid, l_p);
        for (int j = 0; j < grid->n_signal(); ++j)
            for (int k = 0; k < grid->n_idler(); ++k)
                out.values(j, k) = ls[j] * li[k] * f[static_cast<std::size_t>(j + k)];
    } else {
        for (int j = 0; j < grid->n_signal(); ++j)
            for (int k = 0; k < grid->n_idler(); ++k)
                out.values(j, k) = ls[j] * li[k] *
                    detail::sum_frequency_at(pulse, grid->signal_at(j) + grid->idler_at(k), l_p);
    }
    out.normalize();
    return out;
}

// ---------------------------------------------------------------------------
// Spectral filters
// ---------------------------------------------------------------------------

enum class FilterShape { rectangular, gaussian };
enum class FilterTarget { signal, idler };

/// Bandpass filter with intensity transmission in [0, 1]. `full_width` is the
/// rectangular width, or the intensity FWHM for the gaussian shape.
struct SpectralFilter {
    double center;      // rad/s
    double full_width;  // rad/s
    FilterShape shape = FilterShape::rectangular;
    FilterTarget target = FilterTarget::signal;

    SpectralFilter(double center_omega, double width_omega,
                   FilterShape s = FilterShape::rectangular,
                   FilterTarget t = FilterTarget::signal)
        : center(center_omega), full_width(width_omega), shape(s), target(t) {
        if (!(full_width > 0.0)) throw ConfigError("SpectralFilter: width must be positive");
    }

    double power_transmission(double omega) const {
        const double d = omega - center;
        switch (shape) {
            case FilterShape::rectangular:
                return std::abs(d) <= 0.5 * full_width ? 1.0 : 0.0;
            case FilterShape::gaussian: {
                constexpr double ln2 = 0.6931471805599453;
                return std::exp(-4.0 * ln2 * d * d / (full_width * full_width));
            }
        }
        return 0.0;
    }

    double amplitude_transmission(double omega) const {
        return std::sqrt(power_transmission(omega));
    }

    /// All-pass filter wide enough to be the identity on any practical grid.
    static SpectralFilter all_pass(double center_omega) {
        return SpectralFilter(center_omega, 1e30, FilterShape::rectangular);
    }
};

struct FilterResult {
    BiphotonAmplitude amplitude;
    double transmitted_fraction = 0.0;
};

/// Applies amplitude transmissions √t_s(ω_s)·√t_i(ω_i), reports the surviving
/// probability fraction and renormalizes the result.
inline FilterResult apply_filter(const BiphotonAmplitude& a, const SpectralFilter& f_s,
                                 const SpectralFilter& f_i) {
    const auto& g = *a.grid;
    FilterResult out;
    out.amplitude.grid = a.grid;
    out.amplitude.values = a.values;
    out.amplitude.warning = a.warning;

    Eigen::VectorXd ts(g.n_signal()), ti(g.n_idler());
    for (int j = 0; j < g.n_signal(); ++j) ts[j] = f_s.amplitude_transmission(g.signal_at(j));
    for (int k = 0; k < g.n_idler(); ++k) ti[k] = f_i.amplitude_transmission(g.idler_at(k));
    out.amplitude.values = ts.asDiagonal() * out.amplitude.values * ti.asDiagonal();

    const double before = a.norm_squared();
    if (!(before > 0.0)) throw ZeroStateError("apply_filter: input amplitude has zero norm");
    const double after = out.amplitude.norm_squared();
    out.transmitted_fraction = after / before;
    if (out.transmitted_fraction < 1e-12)
        throw ZeroStateError("apply_filter: nothing survives the filter");
    out.amplitude.normalize();
    return out;
}

}  // namespace sfwm
