#include "starsr/coupled_coeff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace starsr {

namespace {
constexpr double kHalfPi = std::numbers::pi / 2.0;
}

Eigen::VectorXcd AuxCoefficients::v_r() const {
    const int m = static_cast<int>(beta_r.size());
    Eigen::VectorXcd v(m);
    for (int i = 0; i < m; ++i) v[i] = std::polar(std::sqrt(beta_r[i]), theta_r[i]);
    return v;
}

Eigen::VectorXcd AuxCoefficients::v_t() const {
    const int m = static_cast<int>(beta_r.size());
    const Eigen::VectorXd bt = beta_t();
    const Eigen::VectorXd tt = theta_t();
    Eigen::VectorXcd v(m);
    for (int i = 0; i < m; ++i) v[i] = std::polar(std::sqrt(bt[i]), tt[i]);
    return v;
}

void optimal_phases(const Eigen::VectorXcd& psi_r, const Eigen::VectorXcd& psi_t,
                    Eigen::VectorXd& theta_r, Eigen::VectorXd& branch) {
    const int m = static_cast<int>(psi_r.size());
    theta_r.resize(m);
    branch.resize(m);
    for (int i = 0; i < m; ++i) {
        const std::complex<double> pr = psi_r[i], pt = psi_t[i];
        if (pr == std::complex<double>(0.0, 0.0) && pt == std::complex<double>(0.0, 0.0)) {
            theta_r[i] = 0.0;
            branch[i] = 1.0;
            continue;
        }
        const std::complex<double> j(0.0, 1.0);
        const double th_a = std::numbers::pi - std::arg(pr + j * pt);
        const double th_b = std::numbers::pi - std::arg(pr - j * pt);
        const double obj_a = (pr * std::polar(1.0, th_a)).real() +
                             (pt * std::polar(1.0, th_a + kHalfPi)).real();
        const double obj_b = (pr * std::polar(1.0, th_b)).real() +
                             (pt * std::polar(1.0, th_b - kHalfPi)).real();
        if (obj_a <= obj_b) {
            theta_r[i] = th_a;
            branch[i] = 1.0;
        } else {
            theta_r[i] = th_b;
            branch[i] = -1.0;
        }
    }
}

Eigen::VectorXd optimal_amplitudes(const Eigen::VectorXcd& psi_bar_r,
                                   const Eigen::VectorXcd& psi_bar_t) {
    const int m = static_cast<int>(psi_bar_r.size());
    Eigen::VectorXd beta_r(m);
    for (int i = 0; i < m; ++i) {
        const double ar = psi_bar_r[i].real();
        const double at = psi_bar_t[i].real();
        const double norm = std::hypot(ar, at);
        double omega;
        if (norm == 0.0) {
            omega = 0.0;
        } else {
            const double sgn = (at > 0.0) - (at < 0.0);
            const double xi = sgn * std::acos(std::clamp(ar / norm, -1.0, 1.0));
            if (xi >= -std::numbers::pi && xi < -kHalfPi)
                omega = -kHalfPi - xi;
            else if (xi >= -kHalfPi && xi < std::numbers::pi / 4.0)
                omega = 0.0;
            else
                omega = kHalfPi;
        }
        const double s = std::sin(omega);
        beta_r[i] = s * s;
    }
    return beta_r;
}

double aux_objective(const Eigen::VectorXcd& phi_r, const Eigen::VectorXcd& phi_t,
                     const AuxCoefficients& aux) {
    return (phi_r.adjoint() * aux.v_r())(0).real() +
           (phi_t.adjoint() * aux.v_t())(0).real();
}

AuxCoefficients solve_aux(const Eigen::VectorXcd& phi_r, const Eigen::VectorXcd& phi_t,
                          const SolveAuxOptions& opts) {
    const int m = static_cast<int>(phi_r.size());
    AuxCoefficients aux;
    aux.phase_coupled = opts.phase_coupled;
    aux.beta_r = Eigen::VectorXd::Constant(m, opts.init_beta_r);
    aux.theta_r = Eigen::VectorXd::Zero(m);
    aux.branch = Eigen::VectorXd::Ones(m);
    aux.theta_t_free = Eigen::VectorXd::Constant(m, kHalfPi);

    double prev = std::numeric_limits<double>::infinity();
    for (int round = 0; round < opts.max_rounds; ++round) {
        // Phase step given amplitudes.
        const Eigen::VectorXd amp_r = aux.beta_r.cwiseSqrt();
        const Eigen::VectorXd amp_t = aux.beta_t().cwiseSqrt();
        if (opts.phase_coupled) {
            const Eigen::VectorXcd psi_r = amp_r.cwiseProduct(phi_r.conjugate().eval());
            const Eigen::VectorXcd psi_t = amp_t.cwiseProduct(phi_t.conjugate().eval());
            optimal_phases(psi_r, psi_t, aux.theta_r, aux.branch);
        } else {
            for (int i = 0; i < m; ++i) {
                aux.theta_r[i] = std::numbers::pi - std::arg(std::conj(phi_r[i]));
                aux.theta_t_free[i] = std::numbers::pi - std::arg(std::conj(phi_t[i]));
            }
        }
        // Amplitude step given phases.
        if (!opts.fixed_amplitudes) {
            const Eigen::VectorXd tr = aux.theta_r;
            const Eigen::VectorXd tt = aux.theta_t();
            Eigen::VectorXcd psi_bar_r(m), psi_bar_t(m);
            for (int i = 0; i < m; ++i) {
                psi_bar_r[i] = std::polar(1.0, tr[i]) * std::conj(phi_r[i]);
                psi_bar_t[i] = std::polar(1.0, tt[i]) * std::conj(phi_t[i]);
            }
            aux.beta_r = optimal_amplitudes(psi_bar_r, psi_bar_t);
        }
        const double obj = aux_objective(phi_r, phi_t, aux);
        if (prev - obj < opts.tol) break;
        prev = obj;
    }
    return aux;
}

void update_duals(PddState& state, const Eigen::VectorXcd& v_r,
                  const Eigen::VectorXcd& v_t, const Eigen::VectorXcd& aux_r,
                  const Eigen::VectorXcd& aux_t) {
    state.lambda_r += (aux_r - v_r) / state.rho;
    state.lambda_t += (aux_t - v_t) / state.rho;
}

void update_penalty(PddState& state) { state.rho *= state.shrink; }

void pdd_outer_step(PddState& state, const Eigen::VectorXcd& v_r,
                    const Eigen::VectorXcd& v_t, const Eigen::VectorXcd& aux_r,
                    const Eigen::VectorXcd& aux_t) {
    const double dr = (aux_r - v_r).cwiseAbs().maxCoeff();
    const double dt = (aux_t - v_t).cwiseAbs().maxCoeff();
    state.delta = std::max(dr, dt);
    if (state.delta <= state.eta) {
        update_duals(state, v_r, v_t, aux_r, aux_t);
    } else {
        update_penalty(state);
    }
    state.eta = 0.9 * state.delta;
}

}  // namespace starsr
