#pragma once

#include <Eigen/Dense>
#include <complex>

namespace starsr {

// Penalty-dual-decomposition state for the coefficient subproblems.
struct PddState {
    Eigen::VectorXcd lambda_r;  // dual for v_r = aux_r
    Eigen::VectorXcd lambda_t;
    double rho = 1.0;           // penalty factor
    double eta = 10.0;          // violation threshold
    double delta = 0.0;         // last constraint violation
    double shrink = 0.1;        // penalty step size, in (0, 1)
    double tol = 1e-4;          // outer convergence tolerance on delta

    static PddState init(int m) {
        PddState s;
        s.lambda_r = Eigen::VectorXcd::Zero(m);
        s.lambda_t = Eigen::VectorXcd::Zero(m);
        return s;
    }
    bool converged() const { return delta < tol; }
};

// Auxiliary coefficient copies that satisfy the unit amplitude split and the
// quarter-turn phase coupling exactly. beta_t is stored as 1 - beta_r so the
// split sums to one bitwise; theta_t = theta_r + branch * pi/2.
struct AuxCoefficients {
    Eigen::VectorXd beta_r;    // amplitude split of the reflection side
    Eigen::VectorXd theta_r;   // reflection phases
    Eigen::VectorXd branch;    // +1 or -1 per element
    bool phase_coupled = true; // false in the no-phase-correlation variant

    Eigen::VectorXd beta_t() const { return (1.0 - beta_r.array()).matrix(); }
    Eigen::VectorXd theta_t() const {
        if (phase_coupled)
            return theta_r + branch * (std::numbers::pi / 2.0);
        return theta_t_free;
    }
    Eigen::VectorXcd v_r() const;
    Eigen::VectorXcd v_t() const;

    Eigen::VectorXd theta_t_free;  // used only when phase_coupled == false
};

// Closed-form phase update: per element, evaluates both quarter-turn branches
// of the aux objective sum_i Re{phi_i^H diag(amp_i) exp(j theta_i)} and keeps
// the smaller one. psi_* are the amplitude-weighted conjugated penalties.
void optimal_phases(const Eigen::VectorXcd& psi_r, const Eigen::VectorXcd& psi_t,
                    Eigen::VectorXd& theta_r, Eigen::VectorXd& branch);

// Closed-form amplitude update from the three-branch piecewise rule; outputs
// beta_r per element (beta_t = 1 - beta_r).
Eigen::VectorXd optimal_amplitudes(const Eigen::VectorXcd& psi_bar_r,
                                   const Eigen::VectorXcd& psi_bar_t);

// Aux objective: sum_iota Re{phi_iota^H aux_v_iota}.
double aux_objective(const Eigen::VectorXcd& phi_r, const Eigen::VectorXcd& phi_t,
                     const AuxCoefficients& aux);

struct SolveAuxOptions {
    double tol = 1e-8;
    int max_rounds = 100;
    bool phase_coupled = true;   // drop the quarter-turn coupling when false
    bool fixed_amplitudes = false;  // keep beta_r at init (baseline 1)
    double init_beta_r = 0.5;
};

// Alternates the two closed forms on phi = rho*lambda - v until the objective
// decrease falls below tol.
AuxCoefficients solve_aux(const Eigen::VectorXcd& phi_r, const Eigen::VectorXcd& phi_t,
                          const SolveAuxOptions& opts = {});

// lambda <- lambda + (1/rho)(aux - v)
void update_duals(PddState& state, const Eigen::VectorXcd& v_r,
                  const Eigen::VectorXcd& v_t, const Eigen::VectorXcd& aux_r,
                  const Eigen::VectorXcd& aux_t);

// rho <- shrink * rho
void update_penalty(PddState& state);

// Violation bookkeeping: measures delta, takes the dual step or the penalty
// step, then tightens the threshold.
void pdd_outer_step(PddState& state, const Eigen::VectorXcd& v_r,
                    const Eigen::VectorXcd& v_t, const Eigen::VectorXcd& aux_r,
                    const Eigen::VectorXcd& aux_t);

}  // namespace starsr
