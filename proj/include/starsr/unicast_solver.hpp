#pragma once

#include "starsr/broadcast_solver.hpp"

namespace starsr {

// Convexified data for the unicast beamforming constraints, built blockwise
// (every lifted matrix in the trace forms is block-structured, so the
// KN x KN variable never materializes).
struct UnicastBeamForms {
    std::vector<UnicastBeamRateBound> pu;               // per k
    std::vector<std::vector<UnicastBeamRateBound>> su;  // [q][k]
    std::vector<BlockTraceForm> sinr;                   // per q: L*Rbar - gamma*Hbar
    double sinr_rhs = 0.0;                              // sigma^2 * gamma
};

// Forms for given coefficients, decode order and SCA expansion point.
UnicastBeamForms build_unicast_beam_forms(const ChannelSet& ch,
                                          const StarCoefficients& sc,
                                          const QosSpec& qos, const SicOrder& order,
                                          const std::vector<Eigen::MatrixXcd>& w_exp);

// Convexified data for the unicast coefficient step (noise-normalized).
struct UnicastCoeffForms {
    std::vector<QuotientRateBound> pu;               // per k, in v_r
    std::vector<std::vector<QuotientRateBound>> su;  // [q][k], in v_t
    std::vector<AffineForm> sinr;                    // per q, in v_t
};

UnicastCoeffForms build_unicast_coeff_forms(const ChannelSet& ch,
                                            const Eigen::MatrixXcd& wk,
                                            const QosSpec& qos, const SicOrder& order,
                                            const Eigen::VectorXcd& vr_exp,
                                            const Eigen::VectorXcd& vt_exp);

struct RankKCheck {
    bool pass = false;
    std::vector<double> ratios;
};

RankKCheck verify_rank_k(const std::vector<Eigen::MatrixXcd>& blocks, double tol = 1e-6);

struct UnicastBeamformingResult {
    conic::SolveStatus status = conic::SolveStatus::NumericalFailure;
    std::vector<Eigen::MatrixXcd> w_blocks;
    Eigen::MatrixXcd wk;  // N x K extracted beamformers
    double power_w = 0.0;
    std::vector<double> rank_ratios;
    int sca_rounds = 0;
    bool used_feasibility_phase = false;
    std::string message;
};

// P5.1 with successive convex approximation over the block expansion point.
UnicastBeamformingResult solve_beamforming_unicast(
    const ChannelSet& ch, const StarCoefficients& sc, const QosSpec& qos,
    const SicOrder& order, const std::vector<Eigen::MatrixXcd>& w_init,
    const BcdOptions& opts = {});

// P6.3 coefficient step (quotient-form bounds; no exponential cones needed).
CoefficientResult solve_coefficients_unicast(const ChannelSet& ch,
                                             const Eigen::MatrixXcd& wk,
                                             const QosSpec& qos, const SicOrder& order,
                                             const PddState& pdd,
                                             const StarCoefficients& current,
                                             const AuxCoefficients& aux,
                                             const BcdOptions& opts = {});

struct UnicastSolution {
    bool feasible = false;
    Eigen::MatrixXcd wk;
    StarCoefficients coeffs;
    double power_w = 0.0;
    double power_dbm = 0.0;
    std::vector<TraceRow> trace;
    FeasibilityReport report;
    int outer_iterations = 0;
    int inner_iterations = 0;
    std::vector<double> rank_ratios;
    SicOrder order;
    Eigen::VectorXd pu_rates;      // exact, final iterate
    Eigen::MatrixXd su_sic_rates;  // Q x K
    std::string message;
};

UnicastSolution solve_p4(const ChannelSet& ch, const QosSpec& qos,
                         const BcdOptions& opts = {});

}  // namespace starsr
