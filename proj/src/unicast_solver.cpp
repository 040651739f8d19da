#include "starsr/unicast_solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace starsr {

namespace {
using conic::CLinExpr;
using conic::ConicProgram;
using conic::ConicSolution;
using conic::LinExpr;
using conic::SolveStatus;
using cd = std::complex<double>;

constexpr double kTwoLn2 = 2.0 * std::numbers::ln2;

double mu_of_user(const QosSpec& qos, int i) {
    return qos.sic_mu_k.size() ? qos.sic_mu_k[i] : qos.sic_mu;
}

struct EffectiveVectors {
    std::vector<Eigen::VectorXcd> u_pu;  // per k: F^H diag(conj(v_r)) g_pk
    std::vector<Eigen::VectorXcd> u_su;  // per q
};

EffectiveVectors effective_vectors(const ChannelSet& ch, const StarCoefficients& sc) {
    EffectiveVectors ev;
    const int num_k = static_cast<int>(ch.h_pu.cols());
    const int num_q = static_cast<int>(ch.h_su.cols());
    ev.u_pu.resize(num_k);
    ev.u_su.resize(num_q);
    for (int k = 0; k < num_k; ++k)
        ev.u_pu[k] =
            ch.f_bs_ris.adjoint() * sc.v_r.conjugate().cwiseProduct(ch.g_pu.col(k));
    for (int q = 0; q < num_q; ++q)
        ev.u_su[q] =
            ch.f_bs_ris.adjoint() * sc.v_t.conjugate().cwiseProduct(ch.g_su.col(q));
    return ev;
}

LinExpr block_trace_expr(const ConicProgram& prog,
                         const std::vector<conic::HermitianVarHandle>& wvars,
                         const BlockTraceForm& form, double scale) {
    LinExpr e(form.offset * scale);
    for (size_t k = 0; k < wvars.size(); ++k) {
        if (form.blocks[k].cwiseAbs().maxCoeff() == 0.0) continue;
        e += prog.trace_expr(wvars[k], scale * form.blocks[k]);
    }
    return e;
}
}  // namespace

UnicastBeamForms build_unicast_beam_forms(const ChannelSet& ch,
                                          const StarCoefficients& sc,
                                          const QosSpec& qos, const SicOrder& order,
                                          const std::vector<Eigen::MatrixXcd>& w_exp) {
    const int n = static_cast<int>(ch.h_pu.rows());
    const int num_k = static_cast<int>(ch.h_pu.cols());
    const int num_q = static_cast<int>(ch.h_su.cols());
    const EffectiveVectors ev = effective_vectors(ch, sc);
    const Eigen::MatrixXcd zero = Eigen::MatrixXcd::Zero(n, n);

    UnicastBeamForms f;
    f.pu.resize(num_k);
    for (int k = 0; k < num_k; ++k) {
        const Eigen::VectorXcd ep = ch.h_pu.col(k) + ev.u_pu[k];
        const Eigen::VectorXcd em = ch.h_pu.col(k) - ev.u_pu[k];
        const Eigen::MatrixXcd interf = ch.h_pu.col(k) * ch.h_pu.col(k).adjoint() +
                                        ev.u_pu[k] * ev.u_pu[k].adjoint();
        UnicastBeamRateBound b;
        b.sigma2 = qos.noise_pu_w;
        b.b3.blocks.assign(num_k, interf);
        b.b3.blocks[k] = zero;
        b.b1 = b.b3;
        b.b1.blocks[k] = ep * ep.adjoint();
        b.b2 = b.b3;
        b.b2.blocks[k] = em * em.adjoint();
        b.tr3_exp = b.b3.eval(w_exp);
        f.pu[k] = std::move(b);
    }
    f.su.resize(num_q);
    for (int q = 0; q < num_q; ++q) {
        f.su[q].resize(num_k);
        const Eigen::MatrixXcd hh = ch.h_su.col(q) * ch.h_su.col(q).adjoint();
        const Eigen::MatrixXcd uu = ev.u_su[q] * ev.u_su[q].adjoint();
        for (int k = 0; k < num_k; ++k) {
            const Eigen::VectorXcd ep = ch.h_su.col(q) + ev.u_su[q];
            const Eigen::VectorXcd em = ch.h_su.col(q) - ev.u_su[q];
            UnicastBeamRateBound b;
            b.sigma2 = qos.noise_su_w;
            b.b3.blocks.resize(num_k);
            for (int i = 0; i < num_k; ++i) {
                if (i == k) {
                    b.b3.blocks[i] = zero;
                    continue;
                }
                const double mu_hat =
                    order.decoded_before(q, i, k) ? mu_of_user(qos, i) : 1.0;
                b.b3.blocks[i] = mu_hat * hh + uu;
            }
            b.b1 = b.b3;
            b.b1.blocks[k] = ep * ep.adjoint();
            b.b2 = b.b3;
            b.b2.blocks[k] = em * em.adjoint();
            b.tr3_exp = b.b3.eval(w_exp);
            f.su[q][k] = std::move(b);
        }
        BlockTraceForm c15;
        c15.blocks.resize(num_k);
        for (int i = 0; i < num_k; ++i)
            c15.blocks[i] = qos.symbol_ratio * uu - qos.sinr_min * mu_of_user(qos, i) * hh;
        f.sinr.push_back(std::move(c15));
    }
    f.sinr_rhs = qos.noise_su_w * qos.sinr_min;
    return f;
}

UnicastCoeffForms build_unicast_coeff_forms(const ChannelSet& ch,
                                            const Eigen::MatrixXcd& wk,
                                            const QosSpec& qos, const SicOrder& order,
                                            const Eigen::VectorXcd& vr_exp,
                                            const Eigen::VectorXcd& vt_exp) {
    const int m = static_cast<int>(ch.g_pu.rows());
    const int num_k = static_cast<int>(wk.cols());
    const int num_q = static_cast<int>(ch.h_su.cols());
    std::vector<CompositeChannels> cc(num_k);
    for (int i = 0; i < num_k; ++i) cc[i] = effective_channels(ch, wk.col(i));
    const double sp = std::sqrt(qos.noise_pu_w);
    const double ss = std::sqrt(qos.noise_su_w);

    UnicastCoeffForms f;
    for (int k = 0; k < num_k; ++k) {
        Eigen::MatrixXcd rows(m, num_k - 1);
        double c0 = 1.0;
        int col = 0;
        for (int i = 0; i < num_k; ++i) {
            if (i == k) continue;
            rows.col(col++) = cc[i].r_pu.col(k) / sp;
            c0 += std::norm(cc[i].d_pu[k]) / qos.noise_pu_w;
        }
        f.pu.push_back(QuotientRateBound::build(cc[k].d_pu[k] / sp,
                                                cc[k].r_pu.col(k) / sp, c0, rows, vr_exp));
    }
    f.su.resize(num_q);
    for (int q = 0; q < num_q; ++q) {
        for (int k = 0; k < num_k; ++k) {
            Eigen::MatrixXcd rows(m, num_k - 1);
            double c0 = 1.0;
            int col = 0;
            for (int i = 0; i < num_k; ++i) {
                if (i == k) continue;
                rows.col(col++) = cc[i].r_su.col(q) / ss;
                const double mu_hat =
                    order.decoded_before(q, i, k) ? mu_of_user(qos, i) : 1.0;
                c0 += mu_hat * std::norm(cc[i].d_su[q]) / qos.noise_su_w;
            }
            f.su[q].push_back(QuotientRateBound::build(
                cc[k].d_su[q] / ss, cc[k].r_su.col(q) / ss, c0, rows, vt_exp));
        }
        Eigen::MatrixXcd rq = Eigen::MatrixXcd::Zero(m, m);
        double chi = 0.0;
        for (int i = 0; i < num_k; ++i) {
            rq += cc[i].r_su.col(q) * cc[i].r_su.col(q).adjoint();
            chi += mu_of_user(qos, i) * std::norm(cc[i].d_su[q]);
        }
        const double scale = qos.symbol_ratio / (chi + qos.noise_su_w);
        AffineForm g;
        g.a = scale * (rq * vt_exp);
        g.c0 = -scale * (vt_exp.adjoint() * rq * vt_exp)(0).real();
        f.sinr.push_back(std::move(g));
    }
    return f;
}

RankKCheck verify_rank_k(const std::vector<Eigen::MatrixXcd>& blocks, double tol) {
    RankKCheck rc;
    rc.pass = true;
    for (const auto& b : blocks) {
        const RankCheck one = verify_rank_one(b, tol);
        rc.ratios.push_back(one.ratio);
        rc.pass = rc.pass && one.pass;
    }
    return rc;
}

UnicastBeamformingResult solve_beamforming_unicast(
    const ChannelSet& ch, const StarCoefficients& sc, const QosSpec& qos,
    const SicOrder& order, const std::vector<Eigen::MatrixXcd>& w_init,
    const BcdOptions& opts) {
    const int n = static_cast<int>(ch.h_pu.rows());
    const int num_k = static_cast<int>(ch.h_pu.cols());
    const int num_q = static_cast<int>(ch.h_su.cols());
    UnicastBeamformingResult out;
    const EffectiveVectors ev = effective_vectors(ch, sc);

    // Expansion point: caller's blocks, or matched filters on the effective
    // channels with single-user power levels.
    std::vector<Eigen::MatrixXcd> w_exp = w_init;
    if (w_exp.empty()) {
        w_exp.resize(num_k);
        const double snr_needed = std::pow(2.0, 2.0 * qos.rate_min) - 1.0;
        for (int k = 0; k < num_k; ++k) {
            const Eigen::VectorXcd e = ch.h_pu.col(k) + ev.u_pu[k];
            const double g = std::max(e.squaredNorm(), 1e-30);
            const double p = snr_needed * qos.noise_pu_w / g;
            const Eigen::VectorXcd w = std::sqrt(p) * e / std::sqrt(g);
            w_exp[k] = w * w.adjoint();
        }
    }

    // Reference power for scaling: expansion trace, bumped by an optimistic
    // SINR-driven estimate (the secondary constraint usually dominates).
    double p_ref = 1e-12;
    for (const auto& blk : w_exp) p_ref += blk.trace().real();
    for (int q = 0; q < num_q; ++q) {
        const double g = std::max(ev.u_su[q].squaredNorm(), 1e-30);
        p_ref = std::max(p_ref, qos.sinr_min * qos.noise_su_w / (qos.symbol_ratio * g));
    }
    p_ref = std::clamp(p_ref, 1e-9, 1e6);

    auto exact_feasible = [&](const std::vector<Eigen::MatrixXcd>& w,
                              const UnicastBeamForms& f, double tol) {
        for (int k = 0; k < num_k; ++k) {
            const auto& b = f.pu[k];
            const double rate = 0.5 * std::log2(b.b1.eval(w) + b.sigma2) +
                                0.5 * std::log2(b.b2.eval(w) + b.sigma2) -
                                std::log2(b.b3.eval(w) + b.sigma2);
            if (rate < qos.rate_min - tol) return false;
        }
        for (int q = 0; q < num_q; ++q) {
            for (int k = 0; k < num_k; ++k) {
                const auto& b = f.su[q][k];
                const double rate = 0.5 * std::log2(b.b1.eval(w) + b.sigma2) +
                                    0.5 * std::log2(b.b2.eval(w) + b.sigma2) -
                                    std::log2(b.b3.eval(w) + b.sigma2);
                if (rate < qos.rate_min - tol) return false;
            }
            if (f.sinr[q].eval(w) < f.sinr_rhs - tol * f.sinr_rhs) return false;
        }
        return true;
    };

    // SCA rounds; a feasibility phase with slacks runs first whenever the
    // expansion point violates the exact constraints.
    double prev_power = std::numeric_limits<double>::infinity();
    double last_slack_sum = std::numeric_limits<double>::infinity();
    int feas_rounds = 0;
    for (int round = 0; round < opts.max_sca + 8; ++round) {
        const UnicastBeamForms forms =
            build_unicast_beam_forms(ch, sc, qos, order, w_exp);
        const bool feasibility_phase = !exact_feasible(w_exp, forms, 1e-6);
        if (feasibility_phase) {
            out.used_feasibility_phase = true;
            ++feas_rounds;
        }

        ConicProgram prog;
        std::vector<conic::HermitianVarHandle> wvars;
        for (int k = 0; k < num_k; ++k)
            wvars.push_back(prog.build_hermitian_psd_var("W" + std::to_string(k), n));
        auto tlog = prog.add_vector("t", 2 * (num_k + num_k * num_q));
        conic::VarHandle slack;
        const int n_slack = num_k + num_k * num_q + num_q;
        if (feasibility_phase) slack = prog.add_vector("slack", n_slack);

        int ti = 0, si = 0;
        auto add_rate = [&](const UnicastBeamRateBound& b) {
            // scale for the lifted variable; already-evaluated traces are in
            // physical units and carry only the noise normalization
            const double s = p_ref / b.sigma2;
            const double tr3n = b.tr3_exp / b.sigma2;
            const double base = tr3n + 1.0;
            prog.add_exponential_cone(
                prog.entry(tlog, ti),
                block_trace_expr(prog, wvars, b.b1, s) + 1.0);
            prog.add_exponential_cone(
                prog.entry(tlog, ti + 1),
                block_trace_expr(prog, wvars, b.b2, s) + 1.0);
            LinExpr row = (prog.entry(tlog, ti) + prog.entry(tlog, ti + 1)) *
                              (1.0 / kTwoLn2) -
                          std::log2(base) -
                          (block_trace_expr(prog, wvars, b.b3, s) - tr3n) *
                              (1.0 / (base * std::numbers::ln2)) -
                          qos.rate_min;
            if (feasibility_phase) row += prog.entry(slack, si);
            prog.add_nonneg(row);
            ti += 2;
            ++si;
        };
        for (int k = 0; k < num_k; ++k) add_rate(forms.pu[k]);
        for (int q = 0; q < num_q; ++q)
            for (int k = 0; k < num_k; ++k) add_rate(forms.su[q][k]);
        for (int q = 0; q < num_q; ++q) {
            const double s = p_ref / qos.noise_su_w;
            const double rhs = forms.sinr_rhs / qos.noise_su_w;
            LinExpr row = block_trace_expr(prog, wvars, forms.sinr[q], s) - rhs;
            // normalize to SINR units so the slack is comparable to rates
            row *= 1.0 / std::max(1.0, rhs);
            if (feasibility_phase) row += prog.entry(slack, si);
            prog.add_nonneg(row);
            ++si;
        }

        LinExpr objective;
        const Eigen::MatrixXcd eye = Eigen::MatrixXcd::Identity(n, n);
        for (int k = 0; k < num_k; ++k) objective += prog.trace_expr(wvars[k], eye);
        if (feasibility_phase) {
            LinExpr sobj;
            for (int i = 0; i < n_slack; ++i) {
                prog.add_nonneg(prog.entry(slack, i));
                sobj += prog.entry(slack, i);
            }
            // keep the power term well below the slack scale
            double exp_trace = 0.0;
            for (const auto& blk : w_exp) exp_trace += blk.trace().real() / p_ref;
            prog.minimize(sobj + (1e-4 / std::max(1.0, exp_trace)) * objective);
        } else {
            prog.minimize(objective);
        }

        const ConicSolution sol = prog.solve(opts.conic);
        // Slack rounds only need progress, not certified optimality: their
        // optimal faces are degenerate and the method may stop short, but the
        // best iterate still reduces the violation.
        // Power rounds need certified optima (the per-block rank structure
        // degrades with the duality gap); slack rounds only need progress.
        const bool usable =
            sol.status == SolveStatus::Optimal ||
            (feasibility_phase && usable_solution(sol));
        if (!usable) {
            if (out.w_blocks.empty()) {
                out.status = sol.status;
                out.message = sol.message;
                return out;
            }
            out.message = "SCA round " + std::to_string(round) + " returned " +
                          conic::to_string(sol.status) + "; kept previous round";
            break;
        }
        std::vector<Eigen::MatrixXcd> w_new(num_k);
        double power = 0.0;
        for (int k = 0; k < num_k; ++k) {
            w_new[k] = p_ref * prog.value(wvars[k], sol);
            power += w_new[k].trace().real();
        }
        w_exp = w_new;
        if (feasibility_phase) {
            const double prev_slack = last_slack_sum;
            last_slack_sum = 0.0;
            for (int i = 0; i < n_slack; ++i) last_slack_sum += sol.x[slack.offset + i];
            if (opts.conic.verbose)
                std::fprintf(stderr, "feas round %d slack sum %9.3e power %9.3e\n",
                             feas_rounds, last_slack_sum, power);
            const bool stagnant = std::isfinite(prev_slack) &&
                                  last_slack_sum > prev_slack * 0.98;
            if (feas_rounds > 25 || (stagnant && last_slack_sum > 1e-7)) {
                out.status = last_slack_sum > 1e-5 ? SolveStatus::Infeasible
                                                   : SolveStatus::NumericalFailure;
                out.message = "feasibility phase did not reach a feasible point";
                return out;
            }
        }
        if (!feasibility_phase) {
            out.w_blocks = w_new;
            out.power_w = power;
            out.status = SolveStatus::Optimal;
            ++out.sca_rounds;
            if (std::abs(prev_power - power) <
                opts.eps_sca * std::max(prev_power, 1e-30))
                break;
            prev_power = power;
        }
    }
    if (out.status != SolveStatus::Optimal) {
        if (out.message.empty()) out.message = "no power-phase round completed";
        return out;
    }

    // Per-block extraction with the dominant eigenvector.
    out.wk.resize(n, num_k);
    for (int k = 0; k < num_k; ++k) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(out.w_blocks[k]);
        const Eigen::VectorXd evals = es.eigenvalues();
        const double l1 = std::max(evals[n - 1], 0.0);
        out.rank_ratios.push_back(
            n > 1 && l1 > 0.0 ? std::max(evals[n - 2], 0.0) / l1 : 0.0);
        Eigen::VectorXcd u = es.eigenvectors().col(n - 1);
        int imax = 0;
        u.cwiseAbs().maxCoeff(&imax);
        u *= std::polar(1.0, -std::arg(u[imax]));
        out.wk.col(k) = std::sqrt(l1) * u;
    }
    out.power_w = out.wk.squaredNorm();
    if (*std::max_element(out.rank_ratios.begin(), out.rank_ratios.end()) >
        opts.rank_tol_diag) {
        out.message = "per-block rank ratio above threshold after extraction";
    }
    return out;
}

CoefficientResult solve_coefficients_unicast(const ChannelSet& ch,
                                             const Eigen::MatrixXcd& wk,
                                             const QosSpec& qos, const SicOrder& order,
                                             const PddState& pdd,
                                             const StarCoefficients& current,
                                             const AuxCoefficients& aux,
                                             const BcdOptions& opts) {
    const int m = static_cast<int>(ch.g_pu.rows());
    const int num_k = static_cast<int>(wk.cols());
    const int num_q = static_cast<int>(ch.h_su.cols());
    const bool tied = opts.tied_coefficients;
    CoefficientResult out;

    Eigen::VectorXcd vr = current.v_r, vt = current.v_t;
    const Eigen::VectorXcd aux_r = aux.v_r(), aux_t = aux.v_t();
    const int n_alpha = num_k * (num_q + 1) + num_q;

    // Residual floors at min(0, starting margin); see the broadcast step.
    Eigen::VectorXd alpha_floor(n_alpha);
    for (int k = 0; k < num_k; ++k)
        alpha_floor[k] = std::min(
            0.0, rate_primary_unicast(k, ch, current, wk, qos) - qos.rate_min);
    for (int q = 0; q < num_q; ++q) {
        for (int k = 0; k < num_k; ++k)
            alpha_floor[num_k + q * num_k + k] = std::min(
                0.0,
                rate_sic_unicast(q, k, ch, current, wk, qos, order) - qos.rate_min);
        alpha_floor[num_k * (num_q + 1) + q] = std::min(
            0.0,
            sinr_secondary_unicast(q, ch, current, wk, qos) / qos.sinr_min - 1.0);
    }
    alpha_floor.array() -= 1e-9;

    double prev_obj = std::numeric_limits<double>::infinity();
    for (int round = 0; round < opts.max_sca; ++round) {
        const UnicastCoeffForms forms =
            build_unicast_coeff_forms(ch, wk, qos, order, vr, vt);
        ConicProgram prog;
        auto hvr = prog.add_complex_vector("v_r", m);
        auto hvt = tied ? hvr : prog.add_complex_vector("v_t", m);
        auto alpha = prog.add_vector("alpha", n_alpha);
        LinExpr objective;

        auto add_quotient = [&](const QuotientRateBound& b, conic::ComplexVecHandle hv,
                                int alpha_index) {
            const double gp = std::norm(b.a_plus_exp) / b.b_exp;
            const double gm = std::norm(b.a_minus_exp) / b.b_exp;
            const double consts = std::log1p(gp) - gp + std::log1p(gm) - gm;

            const CLinExpr rv = prog.cdot(b.r, hv);
            const CLinExpr a_plus = CLinExpr(b.d) + rv;
            const CLinExpr a_minus = CLinExpr(b.d) - rv;
            LinExpr affine = (2.0 / b.b_exp) * (std::conj(b.a_plus_exp) * a_plus).re +
                             (2.0 / b.b_exp) * (std::conj(b.a_minus_exp) * a_minus).re;

            auto add_epigraph = [&](const CLinExpr& a_expr, const char* tag,
                                    int idx) -> LinExpr {
                auto u = prog.add_scalar(std::string("u_") + tag + "_" +
                                         std::to_string(idx));
                std::vector<LinExpr> z;
                z.push_back(a_expr.re);
                z.push_back(a_expr.im);
                for (int c = 0; c < b.denom_rows.cols(); ++c) {
                    const CLinExpr iv = prog.cdot(Eigen::VectorXcd(b.denom_rows.col(c)), hv);
                    z.push_back(iv.re);
                    z.push_back(iv.im);
                }
                prog.add_rotated_soc(prog.entry(u) - b.denom_c0, LinExpr(1.0), z);
                return prog.entry(u);
            };
            const LinExpr u_plus = add_epigraph(a_plus, "p", alpha_index);
            const LinExpr u_minus = add_epigraph(a_minus, "m", alpha_index);

            LinExpr bound = (LinExpr(consts) + affine - b.weight_plus() * u_plus -
                             b.weight_minus() * u_minus) *
                            (1.0 / kTwoLn2);
            prog.add_nonneg(bound - qos.rate_min - prog.entry(alpha, alpha_index));
        };

        for (int k = 0; k < num_k; ++k) add_quotient(forms.pu[k], hvr, k);
        for (int q = 0; q < num_q; ++q) {
            for (int k = 0; k < num_k; ++k)
                add_quotient(forms.su[q][k], hvt, num_k + q * num_k + k);
            // SINR residual modeled in target-relative units (see the
            // broadcast coefficient step); reported alpha scaled back.
            prog.add_nonneg((LinExpr(forms.sinr[q].c0) +
                             2.0 * prog.cdot(forms.sinr[q].a, hvt).re) *
                                (1.0 / qos.sinr_min) -
                            1.0 - prog.entry(alpha, num_k * (num_q + 1) + q));
        }
        for (int i = 0; i < n_alpha; ++i) {
            objective -= prog.entry(alpha, i);
            prog.add_nonneg(prog.entry(alpha, i) - alpha_floor[i]);
            prog.add_nonneg(LinExpr(0.25) - prog.entry(alpha, i));  // bounded slack
        }

        if (tied) {
            for (int i = 0; i < m; ++i) {
                const CLinExpr e = prog.centry(hvr, i);
                prog.add_soc({LinExpr(1.0), e.re, e.im});
            }
        } else {
            for (int i = 0; i < m; ++i) {
                const CLinExpr er = prog.centry(hvr, i);
                const CLinExpr et = prog.centry(hvt, i);
                prog.add_soc({LinExpr(1.0), er.re, er.im, et.re, et.im});
            }
            auto pen = prog.add_vector("pen", m);
            for (int i = 0; i < m; ++i) {
                const cd zr = aux_r[i] + pdd.rho * pdd.lambda_r[i];
                const cd zt = aux_t[i] + pdd.rho * pdd.lambda_t[i];
                const CLinExpr er = prog.centry(hvr, i);
                const CLinExpr et = prog.centry(hvt, i);
                prog.add_rotated_soc(prog.entry(pen, i), LinExpr(1.0),
                                     {LinExpr(zr.real()) - er.re, LinExpr(zr.imag()) - er.im,
                                      LinExpr(zt.real()) - et.re, LinExpr(zt.imag()) - et.im});
                objective += (1.0 / (2.0 * pdd.rho)) * prog.entry(pen, i);
            }
        }
        prog.minimize(objective);

        const ConicSolution sol = prog.solve(opts.conic);
        if (!usable_solution(sol)) {
            out.message = std::string("coefficient subproblem: ") +
                          conic::to_string(sol.status) +
                          (sol.message.empty() ? "" : " (" + sol.message + ")");
            return out;
        }
        const Eigen::VectorXcd vr_prev = vr, vt_prev = vt;
        vr = prog.value(hvr, sol);
        vt = tied ? vr : prog.value(hvt, sol);
        const double moved = std::max((vr - vr_prev).cwiseAbs().maxCoeff(),
                                      (vt - vt_prev).cwiseAbs().maxCoeff());
        out.alpha.resize(n_alpha);
        for (int i = 0; i < n_alpha; ++i) out.alpha[i] = sol.x[alpha.offset + i];
        for (int q = 0; q < num_q; ++q)
            out.alpha[num_k * (num_q + 1) + q] *= qos.sinr_min;
        out.v_r = vr;
        out.v_t = vt;
        out.ok = true;
        out.sca_rounds = round + 1;

        double obj = -out.alpha.sum();
        if (!tied) {
            obj += (aux_r + pdd.rho * pdd.lambda_r - vr).squaredNorm() /
                   (2.0 * pdd.rho);
            obj += (aux_t + pdd.rho * pdd.lambda_t - vt).squaredNorm() /
                   (2.0 * pdd.rho);
        }
        out.objective = obj;
        if (opts.conic.verbose)
            std::fprintf(stderr,
                         "p6.3 round %d obj %.10g moved %.3e alpha_sum %.6g it %d %s\n",
                         round, obj, moved, out.alpha.sum(), sol.iterations,
                         conic::to_string(sol.status));
        if (moved < 1e-7) break;
        if (prev_obj - obj < opts.eps_sca * std::max(1.0, std::abs(prev_obj))) break;
        prev_obj = obj;
    }
    return out;
}

UnicastSolution solve_p4(const ChannelSet& ch, const QosSpec& qos,
                         const BcdOptions& opts) {
    const int m = static_cast<int>(ch.g_pu.rows());
    const int num_k = static_cast<int>(ch.h_pu.cols());
    const int num_q = static_cast<int>(ch.h_su.cols());
    qos.validate(num_k);
    UnicastSolution sol;
    RandomStream rng(opts.seed ^ 0x9E3779B97F4A7C15ULL);
    const bool use_pdd = opts.optimize_coefficients && !opts.tied_coefficients;

    StarCoefficients sc;
    UnicastBeamformingResult bf;
    SicOrder order;
    bool initialized = false;
    const int tries = opts.init_coeffs ? 1 : opts.max_init_retries;
    for (int attempt = 0; attempt < tries; ++attempt) {
        if (opts.init_coeffs) {
            sc = *opts.init_coeffs;
        } else {
            sc = random_star_init(m, opts.phase_coupled, rng);
            if (opts.tied_coefficients) sc.v_t = sc.v_r;
        }
        // order from the matched-filter initialization inside the first solve
        order.per_su.assign(num_q, std::vector<int>(num_k));
        for (int q = 0; q < num_q; ++q)
            for (int k = 0; k < num_k; ++k) order.per_su[q][k] = k;
        bf = solve_beamforming_unicast(ch, sc, qos, order, {}, opts);
        if (bf.status == SolveStatus::Optimal) {
            initialized = true;
            break;
        }
    }
    if (!initialized) {
        sol.message = "infeasible scenario: unicast beamforming failed at every "
                      "coefficient initialization (" +
                      std::string(conic::to_string(bf.status)) +
                      (bf.message.empty() ? ")" : "; " + bf.message + ")");
        sol.coeffs = sc;
        sol.order = order;
        return sol;
    }

    PddState pdd = PddState::init(m);
    pdd.tol = opts.eps_delta;
    AuxCoefficients aux;
    SolveAuxOptions aux_opts;
    aux_opts.tol = opts.eps_aux;
    aux_opts.phase_coupled = opts.phase_coupled;
    aux_opts.fixed_amplitudes = opts.fixed_amplitudes;
    if (use_pdd) {
        aux = solve_aux(pdd.rho * pdd.lambda_r - sc.v_r, pdd.rho * pdd.lambda_t - sc.v_t,
                        aux_opts);
    }

    StarCoefficients last_good = sc;
    UnicastBeamformingResult bf_last = bf;
    std::vector<Eigen::MatrixXcd> w_warm = bf.w_blocks;
    bool aborted = false;

    // One pass of the inner block-coordinate loop at the given tolerance.
    auto run_inner = [&](int outer_tag, double eps_inner, int cap) {
        double inner_power_prev = std::numeric_limits<double>::infinity();
        for (int inner = 0; inner < cap; ++inner) {
            // Decode order is refreshed once per inner pass and frozen inside.
            order = sic_order_by_gain(ch, sc, bf_last.wk);
            bf = solve_beamforming_unicast(ch, sc, qos, order, w_warm, opts);
            if (bf.status != SolveStatus::Optimal) {
                sc = last_good;
                sol.message = "unicast beamforming became " +
                              std::string(conic::to_string(bf.status)) +
                              " mid-run; kept previous iterate";
                break;
            }
            bf_last = bf;
            last_good = sc;
            w_warm = bf.w_blocks;
            for (double r : bf.rank_ratios) sol.rank_ratios.push_back(r);
            sol.trace.push_back(
                {outer_tag, inner, "beamforming", bf.power_w, pdd.delta, pdd.rho});
            ++sol.inner_iterations;

            if (!opts.optimize_coefficients) {
                aborted = true;
                break;
            }
            const CoefficientResult cr =
                solve_coefficients_unicast(ch, bf.wk, qos, order, pdd, sc, aux, opts);
            double v_moved = 0.0;
            if (cr.ok) {
                v_moved = std::max((cr.v_r - sc.v_r).cwiseAbs().maxCoeff(),
                                   (cr.v_t - sc.v_t).cwiseAbs().maxCoeff());
                sc.v_r = cr.v_r;
                sc.v_t = cr.v_t;
            } else if (!cr.message.empty() && sol.message.empty()) {
                sol.message = cr.message;
            }
            sol.trace.push_back(
                {outer_tag, inner, "coefficients", bf.power_w, pdd.delta, pdd.rho});

            if (use_pdd) {
                aux = solve_aux(pdd.rho * pdd.lambda_r - sc.v_r,
                                pdd.rho * pdd.lambda_t - sc.v_t, aux_opts);
            }
            if (cr.ok && v_moved < 1e-6) break;  // block fixed point
            if (std::isfinite(inner_power_prev) &&
                std::abs(inner_power_prev - bf.power_w) <=
                    eps_inner * std::max(inner_power_prev, 1e-30))
                break;
            inner_power_prev = bf.power_w;
        }
    };

    const int outer_cap = use_pdd ? opts.max_outer : 1;
    int outer = 0;
    for (; outer < outer_cap; ++outer) {
        run_inner(outer,
                  use_pdd ? 100.0 * opts.eps_inner : opts.eps_inner,
                  use_pdd ? std::min(12, opts.max_inner) : opts.max_inner);
        if (aborted || !use_pdd) break;
        pdd_outer_step(pdd, sc.v_r, sc.v_t, aux.v_r(), aux.v_t());
        sol.trace.push_back({outer, -1, "pdd", bf_last.power_w, pdd.delta, pdd.rho});
        if (pdd.converged()) {
            ++outer;
            break;
        }
    }
    sol.outer_iterations = outer;
    if (use_pdd && !aborted) run_inner(outer, opts.eps_inner, opts.max_inner);

    // Final iterate with transferred coefficients; targets padded above the
    // solver floor so the exact-evaluator margins certify cleanly.
    StarCoefficients final_sc = use_pdd ? materialize(aux) : sc;
    if (opts.tied_coefficients) final_sc.v_t = final_sc.v_r;
    order = sic_order_by_gain(ch, final_sc, bf_last.wk);
    QosSpec qos_pad = qos;
    qos_pad.rate_min += 1e-5;
    qos_pad.sinr_min *= 1.0 + 1e-5;
    UnicastBeamformingResult bf_final =
        solve_beamforming_unicast(ch, final_sc, qos_pad, order, w_warm, opts);
    if (bf_final.status != SolveStatus::Optimal) {
        final_sc = last_good;
        order = sic_order_by_gain(ch, final_sc, bf_last.wk);
        bf_final = bf_last;
        if (sol.message.empty())
            sol.message = "final unicast beamforming with transferred coefficients "
                          "failed; reporting last feasible iterate";
    }
    sol.coeffs = final_sc;
    sol.wk = bf_final.wk;
    sol.power_w = bf_final.power_w;
    sol.power_dbm = watts_to_dbm(sol.power_w);
    sol.order = order;
    for (double r : bf_final.rank_ratios) sol.rank_ratios.push_back(r);
    sol.trace.push_back({outer, -1, "final", sol.power_w, pdd.delta, pdd.rho});

    Beamformer bmf;
    bmf.mode = BeamformerMode::Unicast;
    bmf.wk = sol.wk;
    sol.report = check_feasibility(ch, final_sc, bmf, qos, order,
                                   feasibility_options_for(opts));
    sol.feasible = sol.report.pass;
    sol.pu_rates.resize(num_k);
    for (int k = 0; k < num_k; ++k)
        sol.pu_rates[k] = rate_primary_unicast(k, ch, final_sc, sol.wk, qos);
    sol.su_sic_rates.resize(num_q, num_k);
    for (int q = 0; q < num_q; ++q)
        for (int k = 0; k < num_k; ++k)
            sol.su_sic_rates(q, k) =
                rate_sic_unicast(q, k, ch, final_sc, sol.wk, qos, order);
    return sol;
}

}  // namespace starsr
