#pragma once

// Shared fixtures and independent reference computations for the test suite.
// Everything here deliberately avoids the library's closed-form code paths:
// quadratures are plain trapezoid sums, purities come from explicitly built
// density operators, and the Bell reference assembles the post-selected
// two-photon operator as a dense matrix from eigen-decompositions.

#include <complex>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sfwm/analysis.hpp"
#include "sfwm/circuit.hpp"
#include "sfwm/rng.hpp"
#include "sfwm/spectral.hpp"

namespace test_support {

using sfwm::Complex;

inline std::string config_path(const std::string& name) {
    return std::string(SFWM_CONFIG_DIR) + "/" + name;
}

inline sfwm::PumpPulse default_pulse(sfwm::PumpShape shape = sfwm::PumpShape::gaussian) {
    return sfwm::PumpPulse(1550e-9, 260e-12, shape);
}

inline std::shared_ptr<const sfwm::SpectralGrid> degenerate_grid(int points, double span_fwhm) {
    const sfwm::PumpPulse pulse = default_pulse();
    const double w0 = pulse.center_omega();
    return sfwm::SpectralGrid::make(w0, w0, span_fwhm * pulse.fwhm_omega(), points);
}

/// Complex trapezoid quadrature of f over [lo, hi] with n panels.
inline Complex trapezoid(const std::function<Complex(double)>& f, double lo, double hi, int n) {
    const double h = (hi - lo) / n;
    Complex acc = 0.5 * (f(lo) + f(hi));
    for (int i = 1; i < n; ++i) acc += f(lo + i * h);
    return acc * h;
}

/// Purity via the explicitly constructed reduced density operator; no SVD.
inline double purity_from_reduced_density(const sfwm::BiphotonAmplitude& a) {
    const Eigen::MatrixXcd m = a.values * std::sqrt(a.grid->area_element());
    const Eigen::MatrixXcd rho = m * m.adjoint();
    const double tr = rho.trace().real();
    const double tr2 = (rho * rho).trace().real();
    return tr2 / (tr * tr);
}

inline std::shared_ptr<const sfwm::BiphotonAmplitude> random_jsa(
    sfwm::Rng& rng, std::shared_ptr<const sfwm::SpectralGrid> grid) {
    sfwm::BiphotonAmplitude a;
    a.grid = grid;
    a.values.resize(grid->n_signal(), grid->n_idler());
    for (int j = 0; j < a.values.rows(); ++j)
        for (int k = 0; k < a.values.cols(); ++k) a.values(j, k) = rng.complex_in_disc();
    a.normalize();
    return std::make_shared<const sfwm::BiphotonAmplitude>(std::move(a));
}

inline Eigen::MatrixXcd random_unitary(sfwm::Rng& rng, int n) {
    Eigen::MatrixXcd m(n, n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) m(r, c) = rng.complex_in_disc();
    Eigen::HouseholderQR<Eigen::MatrixXcd> qr(m);
    return qr.householderQ();
}

/// Random density operator with unit trace on an n-dimensional space.
inline Eigen::MatrixXcd random_density(sfwm::Rng& rng, int n, int rank) {
    Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(n, n);
    for (int r = 0; r < rank; ++r) {
        Eigen::VectorXcd v(n);
        for (int i = 0; i < n; ++i) v[i] = rng.complex_in_disc();
        a += rng.uniform(0.1, 1.0) * (v * v.adjoint());
    }
    return a / a.trace().real();
}

/// Dense reference for the post-selected Bell construction. Photon 1
/// (spectral density rho1) is split across the "0" rails of qubits A and B;
/// photon 2 across the "1" rails with a π phase on its B output. The
/// post-selected operator is assembled literally from eigen-decompositions on
/// the basis {|01⟩, |10⟩} ⊗ (spectrum_A ⊗ spectrum_B).
struct BellReference {
    double postselect = 0.0;
    double success = 0.0;
    double triplet = 0.0;
    double bunching = 0.0;
    Eigen::Matrix4cd rho;
};

inline BellReference bell_brute_force(const Eigen::MatrixXcd& rho1, const Eigen::MatrixXcd& rho2) {
    const int n = static_cast<int>(rho1.rows());
    const int nn = n * n;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> e1(rho1), e2(rho2);

    Eigen::MatrixXcd sigma = Eigen::MatrixXcd::Zero(2 * nn, 2 * nn);
    double bunching = 0.0;
    for (int j = 0; j < n; ++j) {
        const double lj = e1.eigenvalues()[j];
        if (lj < 1e-14) continue;
        for (int k = 0; k < n; ++k) {
            const double mk = e2.eigenvalues()[k];
            if (mk < 1e-14) continue;
            const Eigen::VectorXcd f = e1.eigenvectors().col(j);
            const Eigen::VectorXcd g = e2.eigenvectors().col(k);
            Eigen::VectorXcd fg(nn), gf(nn);
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b) {
                    fg[a * n + b] = f[a] * g[b];
                    gf[a * n + b] = g[a] * f[b];
                }
            Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(2 * nn);
            psi.segment(0, nn) = -0.5 * fg;  // |01⟩: A holds photon 1, B photon 2
            psi.segment(nn, nn) = 0.5 * gf;  // |10⟩: A holds photon 2, B photon 1
            sigma += (lj * mk) * (psi * psi.adjoint());
            bunching += lj * mk * (0.25 + 0.25);  // both photons in one qubit's rails
        }
    }

    BellReference out;
    out.bunching = bunching;
    out.postselect = sigma.trace().real();

    // |Ψ⁻⟩⟨Ψ⁻| ⊗ identity on the spectra
    Eigen::MatrixXcd proj = Eigen::MatrixXcd::Zero(2 * nn, 2 * nn);
    const Eigen::MatrixXcd id = Eigen::MatrixXcd::Identity(nn, nn);
    proj.block(0, 0, nn, nn) = 0.5 * id;
    proj.block(nn, nn, nn, nn) = 0.5 * id;
    proj.block(0, nn, nn, nn) = -0.5 * id;
    proj.block(nn, 0, nn, nn) = -0.5 * id;
    out.success = (sigma * proj).trace().real();

    Eigen::MatrixXcd proj_t = proj;
    proj_t.block(0, nn, nn, nn) = 0.5 * id;
    proj_t.block(nn, 0, nn, nn) = 0.5 * id;
    out.triplet = (sigma * proj_t).trace().real();

    out.rho = Eigen::Matrix4cd::Zero();
    out.rho(1, 1) = sigma.block(0, 0, nn, nn).trace().real() / out.postselect;
    out.rho(2, 2) = sigma.block(nn, nn, nn, nn).trace().real() / out.postselect;
    out.rho(1, 2) = sigma.block(0, nn, nn, nn).trace() / out.postselect;
    out.rho(2, 1) = sigma.block(nn, 0, nn, nn).trace() / out.postselect;
    return out;
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::filesystem::path fresh_dir(const std::string& tag) {
    static int counter = 0;
    const auto dir = std::filesystem::temp_directory_path() /
                     ("sfwm_test_" + tag + "_" + std::to_string(counter++));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::vector<std::vector<double>> read_csv_numeric(const std::filesystem::path& p,
                                                         bool skip_header) {
    std::ifstream in(p);
    std::vector<std::vector<double>> rows;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (first && skip_header) {
            first = false;
            continue;
        }
        first = false;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace test_support
