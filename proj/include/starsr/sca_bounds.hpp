#pragma once

#include <Eigen/Dense>
#include <complex>
#include <numbers>
#include <vector>

#include "starsr/channel.hpp"
#include "starsr/sr_model.hpp"

// Construction-time data for the convexified constraints. The conic program
// builders and the tightness tests evaluate the same forms, so a transcription
// slip shows up as a broken tightness-at-expansion-point identity.

namespace starsr {

// c0 + 2 Re{a^H v}
struct AffineForm {
    double c0 = 0.0;
    Eigen::VectorXcd a;

    double eval(const Eigen::VectorXcd& v) const {
        return c0 + 2.0 * (a.adjoint() * v)(0).real();
    }
};

// Noise-normalized two-branch rate bound for the broadcast coefficient step:
// rate >= 0.5*log2(X+) + 0.5*log2(X-) with X affine in v. d and r are the
// direct scalar and composite row divided by the noise standard deviation.
struct BroadcastRateBound {
    AffineForm x_plus, x_minus;

    static BroadcastRateBound build(std::complex<double> d_norm,
                                    const Eigen::VectorXcd& r_norm,
                                    const Eigen::VectorXcd& v_exp) {
        const std::complex<double> rv = (r_norm.adjoint() * v_exp)(0);
        const double base = 1.0 + std::norm(d_norm) - std::norm(rv);
        const Eigen::VectorXcd lin_quad = r_norm * rv;  // r r^H v_exp
        BroadcastRateBound b;
        b.x_plus = {base, d_norm * r_norm + lin_quad};
        b.x_minus = {base, -d_norm * r_norm + lin_quad};
        return b;
    }

    double value(const Eigen::VectorXcd& v) const {
        const double xp = x_plus.eval(v);
        const double xm = x_minus.eval(v);
        if (xp <= 0.0 || xm <= 0.0) return -std::numeric_limits<double>::infinity();
        return 0.5 * std::log2(xp) + 0.5 * std::log2(xm);
    }
};

// Linearized SINR bound (broadcast secondary): affine in v_t.
struct BroadcastSinrBound {
    AffineForm form;

    static BroadcastSinrBound build(const Eigen::VectorXcd& r, double chi,
                                    double noise_w, double symbol_ratio,
                                    const Eigen::VectorXcd& v_exp) {
        const std::complex<double> rv = (r.adjoint() * v_exp)(0);
        const double scale = symbol_ratio / (chi + noise_w);
        BroadcastSinrBound b;
        b.form.c0 = -scale * std::norm(rv);
        b.form.a = scale * (r * rv);
        return b;
    }

    double value(const Eigen::VectorXcd& v) const { return form.eval(v); }
};

// Quotient-form rate bound for the unicast coefficient step. The signal
// scalar is a(v) = d + r^H v; the denominator is b(v) = c0 + sum |rows_i^H v|^2
// (noise folded into c0). Both quadratics enter the bound with nonpositive
// weights, which is what the conic builder exploits through epigraphs.
struct QuotientRateBound {
    std::complex<double> d;
    Eigen::VectorXcd r;
    double denom_c0 = 0.0;        // interference constants + noise
    Eigen::MatrixXcd denom_rows;  // M x (K-1): columns r_i of |r_i^H v|^2 terms

    // expansion-point values
    double b_exp = 0.0;
    std::complex<double> a_plus_exp, a_minus_exp;

    static QuotientRateBound build(std::complex<double> d, const Eigen::VectorXcd& r,
                                   double denom_c0, const Eigen::MatrixXcd& denom_rows,
                                   const Eigen::VectorXcd& v_exp) {
        QuotientRateBound b;
        b.d = d;
        b.r = r;
        b.denom_c0 = denom_c0;
        b.denom_rows = denom_rows;
        b.b_exp = b.denom_value(v_exp);
        const std::complex<double> rv = (r.adjoint() * v_exp)(0);
        b.a_plus_exp = d + rv;
        b.a_minus_exp = d - rv;
        return b;
    }

    double denom_value(const Eigen::VectorXcd& v) const {
        double acc = denom_c0;
        for (int i = 0; i < denom_rows.cols(); ++i)
            acc += std::norm((denom_rows.col(i).adjoint() * v)(0));
        return acc;
    }

    // One branch of the bound; sign selects a(v) = d +/- r^H v (in nats).
    double branch_value(const Eigen::VectorXcd& v, double sign) const {
        const std::complex<double> a_exp = sign > 0 ? a_plus_exp : a_minus_exp;
        const std::complex<double> rv = (r.adjoint() * v)(0);
        const std::complex<double> a_v = sign > 0 ? d + rv : d - rv;
        const double g = std::norm(a_exp) / b_exp;
        const double bv = denom_value(v);
        return std::log1p(g) - g + 2.0 * (std::conj(a_exp) * a_v).real() / b_exp -
               std::norm(a_exp) * (bv + std::norm(a_v)) /
                   (b_exp * (b_exp + std::norm(a_exp)));
    }

    // Full bound in bit/s/Hz.
    double value(const Eigen::VectorXcd& v) const {
        return (branch_value(v, +1.0) + branch_value(v, -1.0)) /
               (2.0 * std::numbers::ln2);
    }

    // Nonnegative epigraph weights used by the conic builder:
    // bound = (1/2ln2) [consts + affine - w+ * (b(v)+|a+(v)|^2)
    //                                  - w- * (b(v)+|a-(v)|^2)]
    double weight_plus() const {
        return std::norm(a_plus_exp) / (b_exp * (b_exp + std::norm(a_plus_exp)));
    }
    double weight_minus() const {
        return std::norm(a_minus_exp) / (b_exp * (b_exp + std::norm(a_minus_exp)));
    }
};

// Block-diagonal trace functional offset + sum_k Tr(B_k W_k), all Hermitian.
struct BlockTraceForm {
    std::vector<Eigen::MatrixXcd> blocks;
    double offset = 0.0;

    double eval(const std::vector<Eigen::MatrixXcd>& w) const {
        double acc = offset;
        for (size_t i = 0; i < blocks.size(); ++i)
            acc += (blocks[i] * w[i]).trace().real();
        return acc;
    }
};

// First-order bound on the unicast beamforming rate constraints:
//   0.5 log2(tr1 + s2) + 0.5 log2(tr2 + s2)
//   - log2(tr3x + s2) - (tr3 - tr3x) / ((tr3x + s2) ln 2) >= target
struct UnicastBeamRateBound {
    BlockTraceForm b1, b2, b3;
    double sigma2 = 0.0;
    double tr3_exp = 0.0;  // Tr(B3 W_exp)

    double value(const std::vector<Eigen::MatrixXcd>& w) const {
        const double t1 = b1.eval(w) + sigma2;
        const double t2 = b2.eval(w) + sigma2;
        if (t1 <= 0.0 || t2 <= 0.0) return -std::numeric_limits<double>::infinity();
        const double base = tr3_exp + sigma2;
        return 0.5 * std::log2(t1) + 0.5 * std::log2(t2) - std::log2(base) -
               (b3.eval(w) - tr3_exp) / (base * std::numbers::ln2);
    }
};

}  // namespace starsr
