#pragma once

#include <Eigen/Dense>
#include <complex>
#include <string>
#include <vector>

#include "starsr/channel.hpp"

namespace starsr {

// Reflection/transmission coefficient vectors of the surface. Derived views:
// beta = |v|^2 (amplitude split), theta = arg(v).
struct StarCoefficients {
    Eigen::VectorXcd v_r;
    Eigen::VectorXcd v_t;

    Eigen::VectorXd beta_r() const { return v_r.cwiseAbs2(); }
    Eigen::VectorXd beta_t() const { return v_t.cwiseAbs2(); }
    Eigen::VectorXd theta_r() const { return v_r.unaryExpr([](std::complex<double> z) { return std::arg(z); }); }
    Eigen::VectorXd theta_t() const { return v_t.unaryExpr([](std::complex<double> z) { return std::arg(z); }); }
};

enum class BeamformerMode { Broadcast, Unicast };

struct Beamformer {
    BeamformerMode mode = BeamformerMode::Broadcast;
    Eigen::VectorXcd w;   // broadcast
    Eigen::MatrixXcd wk;  // N x K, unicast

    double transmit_power() const {
        return mode == BeamformerMode::Broadcast ? w.squaredNorm() : wk.squaredNorm();
    }
};

struct QosSpec {
    double rate_min = 2.0;       // bit/s/Hz
    double sinr_min = 1000.0;    // linear (30 dB)
    double symbol_ratio = 50.0;  // L
    double sic_mu = 0.01;        // broadcast imperfect-SIC coefficient
    Eigen::VectorXd sic_mu_k;    // per-user, unicast (size K)
    double noise_pu_w = 1e-12;
    double noise_su_w = 1e-12;

    void validate(int num_pus) const;
};

// Per-SU decoding order of the primary streams; order[q][0] decoded first.
struct SicOrder {
    std::vector<std::vector<int>> per_su;

    bool valid(int num_pus) const;
    // true if stream i is decoded before stream k at SU q.
    bool decoded_before(int q, int i, int k) const;
};

// Composite channel rows: direct scalar d = h^H w and the row vector
// r^H = g^H diag(F w), so that g^H Theta F w = r^H v.
struct CompositeChannels {
    Eigen::VectorXcd d_pu;  // K      (given one w)
    Eigen::VectorXcd d_su;  // Q
    Eigen::MatrixXcd r_pu;  // M x K  columns r_{p,k}
    Eigen::MatrixXcd r_su;  // M x Q
};

// Composite scalars for one beamforming vector w.
CompositeChannels effective_channels(const ChannelSet& ch, const Eigen::VectorXcd& w);

// Exact rate/SINR evaluators. Rates in bit/s/Hz, SINR linear.
double rate_primary_broadcast(int k, const ChannelSet& ch, const StarCoefficients& sc,
                              const Eigen::VectorXcd& w, const QosSpec& qos);
double rate_secondary_broadcast(int q, const ChannelSet& ch, const StarCoefficients& sc,
                                const Eigen::VectorXcd& w, const QosSpec& qos);
double sinr_secondary_broadcast(int q, const ChannelSet& ch, const StarCoefficients& sc,
                                const Eigen::VectorXcd& w, const QosSpec& qos);

double rate_primary_unicast(int k, const ChannelSet& ch, const StarCoefficients& sc,
                            const Eigen::MatrixXcd& wk, const QosSpec& qos);
double rate_sic_unicast(int q, int k, const ChannelSet& ch, const StarCoefficients& sc,
                        const Eigen::MatrixXcd& wk, const QosSpec& qos,
                        const SicOrder& order);
double sinr_secondary_unicast(int q, const ChannelSet& ch, const StarCoefficients& sc,
                              const Eigen::MatrixXcd& wk, const QosSpec& qos);

struct ConstraintMargin {
    std::string id;
    double required = 0.0;
    double achieved = 0.0;
    double margin = 0.0;  // achieved - required (equalities: -|violation|)
    bool pass = false;
};

struct FeasibilityReport {
    std::vector<ConstraintMargin> constraints;
    bool pass = false;

    std::string to_text() const;
};

struct FeasibilityOptions {
    double rate_tol = 1e-6;       // absolute, bit/s/Hz
    double sinr_rel_tol = 1e-4;   // relative on SINR
    double star_tol = 1e-6;       // Eq. (1) amplitude split
    double phase_tol = 1e-3;      // Eq. (2) via |cos(dtheta)|
    bool check_unit_split = true;     // beta_r + beta_t = 1
    bool check_phase_corr = true;     // cos(theta_r - theta_t) = 0
    bool amplitude_cap_only = false;  // baseline-3 style |v| <= 1 only
};

FeasibilityReport check_feasibility(const ChannelSet& ch, const StarCoefficients& sc,
                                    const Beamformer& bf, const QosSpec& qos,
                                    const SicOrder& order,
                                    const FeasibilityOptions& opts = {});

// Decode orders by descending composite gain |h^H w_k|^2 + |g^H Theta_t F w_k|^2.
SicOrder sic_order_by_gain(const ChannelSet& ch, const StarCoefficients& sc,
                           const Eigen::MatrixXcd& wk);

}  // namespace starsr
