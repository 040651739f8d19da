#include "starsr/broadcast_solver.hpp"

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

LinExpr affine_form_expr(const ConicProgram& prog, const AffineForm& f,
                         conic::ComplexVecHandle v) {
    return LinExpr(f.c0) + 2.0 * prog.cdot(f.a, v).re;
}

double power_estimate(const std::vector<Eigen::VectorXcd>& rate_vecs, double rate_min,
                      const std::vector<Eigen::VectorXcd>& sinr_vecs, double sinr_min,
                      double symbol_ratio, double noise_pu, double noise_su) {
    double p = 1e-12;
    const double snr_needed = std::pow(2.0, 2.0 * rate_min) - 1.0;
    for (const auto& e : rate_vecs) {
        const double g = std::max(e.squaredNorm(), 1e-30);
        p = std::max(p, snr_needed * noise_pu / g);
    }
    for (const auto& c : sinr_vecs) {
        const double g = std::max(c.squaredNorm(), 1e-30);
        p = std::max(p, sinr_min * noise_su / (symbol_ratio * g));
    }
    return std::clamp(p, 1e-9, 1e6);
}
}  // namespace

double watts_to_dbm(double watts) { return 10.0 * std::log10(watts) + 30.0; }

bool usable_solution(const conic::ConicSolution& sol) {
    if (sol.status == conic::SolveStatus::Optimal) return true;
    if (sol.status != conic::SolveStatus::NumericalFailure) return false;
    if (!sol.x.allFinite()) return false;
    return sol.primal_residual <= 1e-6 && sol.dual_residual <= 1e-5 &&
           sol.duality_gap <= 1e-4 * std::max(1.0, std::abs(sol.objective));
}

Eigen::VectorXcd effective_channel_vec(const Eigen::VectorXcd& h,
                                       const Eigen::MatrixXcd& f,
                                       const Eigen::VectorXcd& g,
                                       const Eigen::VectorXcd& v) {
    // (h^H + g^H diag(v) F)^H = h + F^H diag(conj(v)) g
    return h + f.adjoint() * v.conjugate().cwiseProduct(g);
}

StarCoefficients materialize(const AuxCoefficients& aux) {
    StarCoefficients sc;
    sc.v_r = aux.v_r();
    sc.v_t = aux.v_t();
    return sc;
}

StarCoefficients random_star_init(int m, bool /*phase_coupled*/, RandomStream& rng) {
    // Equal split with a quarter-turn offset: feasible for every variant, and
    // identical draws keep runs with and without the phase constraint
    // comparable seed for seed.
    StarCoefficients sc;
    sc.v_r.resize(m);
    sc.v_t.resize(m);
    const double amp = std::sqrt(0.5);
    for (int i = 0; i < m; ++i) {
        const double tr = rng.uniform(0.0, 2.0 * std::numbers::pi);
        sc.v_r[i] = std::polar(amp, tr);
        sc.v_t[i] = std::polar(amp, tr + std::numbers::pi / 2.0);
    }
    return sc;
}

FeasibilityOptions feasibility_options_for(const BcdOptions& opts) {
    FeasibilityOptions f;
    f.amplitude_cap_only = opts.tied_coefficients;
    f.check_phase_corr = opts.phase_coupled && !opts.tied_coefficients;
    f.check_unit_split = !opts.tied_coefficients;
    return f;
}

RankCheck verify_rank_one(const Eigen::MatrixXcd& w_matrix, double tol) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(w_matrix);
    const Eigen::VectorXd ev = es.eigenvalues();
    const int n = static_cast<int>(ev.size());
    const double l1 = ev[n - 1];
    if (l1 <= 0.0) return {false, 1.0};
    const double l2 = n > 1 ? std::max(ev[n - 2], 0.0) : 0.0;
    const double ratio = l2 / l1;
    return {ratio <= tol, ratio};
}

BeamformingResult solve_beamforming(const ChannelSet& ch, const StarCoefficients& sc,
                                    const QosSpec& qos, const BcdOptions& opts) {
    const int n = static_cast<int>(ch.h_pu.rows());
    const int num_k = static_cast<int>(ch.h_pu.cols());
    const int num_q = static_cast<int>(ch.h_su.cols());
    BeamformingResult out;

    std::vector<Eigen::VectorXcd> e1(num_k), e2(num_k), se1(num_q), se2(num_q), cq(num_q);
    for (int k = 0; k < num_k; ++k) {
        const Eigen::VectorXcd comp =
            ch.f_bs_ris.adjoint() * sc.v_r.conjugate().cwiseProduct(ch.g_pu.col(k));
        e1[k] = ch.h_pu.col(k) + comp;
        e2[k] = ch.h_pu.col(k) - comp;
    }
    for (int q = 0; q < num_q; ++q) {
        cq[q] = ch.f_bs_ris.adjoint() * sc.v_t.conjugate().cwiseProduct(ch.g_su.col(q));
        se1[q] = ch.h_su.col(q) + cq[q];
        se2[q] = ch.h_su.col(q) - cq[q];
    }

    const double p_ref = power_estimate(e1, qos.rate_min, cq, qos.sinr_min,
                                        qos.symbol_ratio, qos.noise_pu_w, qos.noise_su_w);

    ConicProgram prog;
    auto wvar = prog.build_hermitian_psd_var("W", n);
    const double rate_prod = std::pow(2.0, qos.rate_min);
    for (int k = 0; k < num_k; ++k) {
        const double s = p_ref / qos.noise_pu_w;
        const Eigen::MatrixXcd m1 = s * (e1[k] * e1[k].adjoint());
        const Eigen::MatrixXcd m2 = s * (e2[k] * e2[k].adjoint());
        prog.add_rotated_soc(LinExpr(1.0) + prog.trace_expr(wvar, m1),
                             LinExpr(1.0) + prog.trace_expr(wvar, m2),
                             {LinExpr(rate_prod)});
    }
    for (int q = 0; q < num_q; ++q) {
        const double s = p_ref / qos.noise_su_w;
        const Eigen::MatrixXcd m1 = s * (se1[q] * se1[q].adjoint());
        const Eigen::MatrixXcd m2 = s * (se2[q] * se2[q].adjoint());
        prog.add_rotated_soc(LinExpr(1.0) + prog.trace_expr(wvar, m1),
                             LinExpr(1.0) + prog.trace_expr(wvar, m2),
                             {LinExpr(rate_prod)});
        const Eigen::MatrixXcd rq = s * (cq[q] * cq[q].adjoint());
        const Eigen::MatrixXcd hq = s * (ch.h_su.col(q) * ch.h_su.col(q).adjoint());
        prog.add_nonneg((qos.symbol_ratio * prog.trace_expr(wvar, rq) -
                         qos.sinr_min * qos.sic_mu * prog.trace_expr(wvar, hq) -
                         qos.sinr_min) *
                        (1.0 / qos.sinr_min));
    }
    prog.minimize(prog.trace_expr(wvar, Eigen::MatrixXcd::Identity(n, n)));

    const ConicSolution sol = prog.solve(opts.conic);
    out.status = sol.status;
    if (sol.status != SolveStatus::Optimal) {
        out.message = sol.message;
        return out;
    }
    out.w_matrix = p_ref * prog.value(wvar, sol);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(out.w_matrix);
    const Eigen::VectorXd ev = es.eigenvalues();
    const double l1 = std::max(ev[n - 1], 0.0);
    out.rank_ratio = n > 1 && l1 > 0.0 ? std::max(ev[n - 2], 0.0) / l1 : 0.0;
    Eigen::VectorXcd u = es.eigenvectors().col(n - 1);
    int imax = 0;
    u.cwiseAbs().maxCoeff(&imax);
    u *= std::polar(1.0, -std::arg(u[imax]));
    out.w = std::sqrt(l1) * u;
    out.power_w = out.w.squaredNorm();

    if (out.rank_ratio > opts.rank_tol_diag) {
        // Gaussian randomization fallback; scale each candidate back to
        // feasibility using the monotone dependence on the power scale.
        out.message = "rank ratio above threshold; randomization fallback engaged";
        RandomStream rng(opts.seed ^ 0xBEEF5EEDULL);
        const Eigen::MatrixXcd half =
            es.eigenvectors() *
            ev.cwiseMax(0.0).cwiseSqrt().asDiagonal().toDenseMatrix().cast<cd>();
        double best_power = std::numeric_limits<double>::infinity();
        Eigen::VectorXcd best_w;
        for (int cand = 0; cand < 100; ++cand) {
            Eigen::VectorXcd xi(n);
            for (int i = 0; i < n; ++i) xi[i] = rng.complex_gaussian();
            Eigen::VectorXcd wc = half * xi;
            if (wc.squaredNorm() < 1e-30) continue;
            wc /= wc.norm();
            double t_lo = 0.0, t_hi = 1.0;
            auto feasible_at = [&](double t) {
                const Eigen::VectorXcd wt = t * wc;
                for (int k = 0; k < num_k; ++k) {
                    const double r1 = std::norm((e1[k].adjoint() * wt)(0));
                    const double r2 = std::norm((e2[k].adjoint() * wt)(0));
                    const double rate = 0.5 * std::log2(1.0 + r1 / qos.noise_pu_w) +
                                        0.5 * std::log2(1.0 + r2 / qos.noise_pu_w);
                    if (rate < qos.rate_min) return false;
                }
                for (int q = 0; q < num_q; ++q) {
                    const double r1 = std::norm((se1[q].adjoint() * wt)(0));
                    const double r2 = std::norm((se2[q].adjoint() * wt)(0));
                    const double rate = 0.5 * std::log2(1.0 + r1 / qos.noise_su_w) +
                                        0.5 * std::log2(1.0 + r2 / qos.noise_su_w);
                    if (rate < qos.rate_min) return false;
                    const double num = qos.symbol_ratio * std::norm((cq[q].adjoint() * wt)(0));
                    const double den =
                        qos.sic_mu * std::norm((ch.h_su.col(q).adjoint() * wt)(0)) +
                        qos.noise_su_w;
                    if (num / den < qos.sinr_min) return false;
                }
                return true;
            };
            bool found = false;
            for (int grow = 0; grow < 60; ++grow) {
                if (feasible_at(t_hi)) {
                    found = true;
                    break;
                }
                t_hi *= 2.0;
            }
            if (!found) continue;
            for (int it = 0; it < 60; ++it) {
                const double mid = 0.5 * (t_lo + t_hi);
                if (feasible_at(mid))
                    t_hi = mid;
                else
                    t_lo = mid;
            }
            const double pw = t_hi * t_hi;
            if (pw < best_power) {
                best_power = pw;
                best_w = t_hi * wc;
            }
        }
        if (best_w.size() && best_power < out.power_w) {
            out.w = best_w;
            out.power_w = best_power;
            out.used_randomization = true;
        }
    }
    return out;
}

CoefficientResult solve_coefficients(const ChannelSet& ch, const Eigen::VectorXcd& w,
                                     const QosSpec& qos, const PddState& pdd,
                                     const StarCoefficients& current,
                                     const AuxCoefficients& aux, const BcdOptions& opts) {
    const int m = static_cast<int>(ch.g_pu.rows());
    const int num_k = static_cast<int>(ch.h_pu.cols());
    const int num_q = static_cast<int>(ch.h_su.cols());
    const bool tied = opts.tied_coefficients;
    CoefficientResult out;

    const CompositeChannels cc = effective_channels(ch, w);
    const double sp = std::sqrt(qos.noise_pu_w);
    const double ss = std::sqrt(qos.noise_su_w);

    Eigen::VectorXcd vr = current.v_r, vt = current.v_t;
    const Eigen::VectorXcd aux_r = aux.v_r(), aux_t = aux.v_t();

    // Residual floors: a residual may not drop below min(0, its margin at the
    // pass's starting iterate). Rounds stay feasible from any start, binding
    // margins cannot degrade, and the incumbent beamformer therefore remains
    // feasible after the coefficient update (power trace monotonicity).
    Eigen::VectorXd alpha_floor(num_k + 2 * num_q);
    for (int k = 0; k < num_k; ++k)
        alpha_floor[k] = std::min(
            0.0, rate_primary_broadcast(k, ch, current, w, qos) - qos.rate_min);
    for (int q = 0; q < num_q; ++q) {
        alpha_floor[num_k + q] = std::min(
            0.0, rate_secondary_broadcast(q, ch, current, w, qos) - qos.rate_min);
        alpha_floor[num_k + num_q + q] = std::min(
            0.0,
            sinr_secondary_broadcast(q, ch, current, w, qos) / qos.sinr_min - 1.0);
    }
    alpha_floor.array() -= 1e-9;

    double prev_obj = std::numeric_limits<double>::infinity();
    for (int round = 0; round < opts.max_sca; ++round) {
        ConicProgram prog;
        auto hvr = prog.add_complex_vector("v_r", m);
        auto hvt = tied ? hvr : prog.add_complex_vector("v_t", m);
        auto alpha = prog.add_vector("alpha", num_k + 2 * num_q);
        auto tlog = prog.add_vector("t", 2 * (num_k + num_q));
        LinExpr objective;

        int ti = 0;
        for (int k = 0; k < num_k; ++k) {
            const BroadcastRateBound bound = BroadcastRateBound::build(
                cc.d_pu[k] / sp, cc.r_pu.col(k) / sp, vr);
            prog.add_exponential_cone(prog.entry(tlog, ti),
                                      affine_form_expr(prog, bound.x_plus, hvr));
            prog.add_exponential_cone(prog.entry(tlog, ti + 1),
                                      affine_form_expr(prog, bound.x_minus, hvr));
            prog.add_nonneg((prog.entry(tlog, ti) + prog.entry(tlog, ti + 1)) *
                                (1.0 / kTwoLn2) -
                            qos.rate_min - prog.entry(alpha, k));
            ti += 2;
        }
        for (int q = 0; q < num_q; ++q) {
            const BroadcastRateBound bound = BroadcastRateBound::build(
                cc.d_su[q] / ss, cc.r_su.col(q) / ss, vt);
            prog.add_exponential_cone(prog.entry(tlog, ti),
                                      affine_form_expr(prog, bound.x_plus, hvt));
            prog.add_exponential_cone(prog.entry(tlog, ti + 1),
                                      affine_form_expr(prog, bound.x_minus, hvt));
            prog.add_nonneg((prog.entry(tlog, ti) + prog.entry(tlog, ti + 1)) *
                                (1.0 / kTwoLn2) -
                            qos.rate_min - prog.entry(alpha, num_k + q));
            ti += 2;

            const double chi = qos.sic_mu * std::norm(cc.d_su[q]);
            const BroadcastSinrBound gb = BroadcastSinrBound::build(
                cc.r_su.col(q), chi, qos.noise_su_w, qos.symbol_ratio, vt);
            // The SINR residual is modeled in units of the target so all
            // residuals weigh comparably in the objective; reported alpha is
            // scaled back to linear SINR units.
            prog.add_nonneg(affine_form_expr(prog, gb.form, hvt) * (1.0 / qos.sinr_min) -
                            1.0 - prog.entry(alpha, num_k + num_q + q));
        }
        for (int i = 0; i < num_k + 2 * num_q; ++i) {
            objective -= prog.entry(alpha, i);
            prog.add_nonneg(prog.entry(alpha, i) - alpha_floor[i]);
            // Margins beyond one target-unit of slack buy nothing for the
            // next beamforming step; the cap keeps the step bounded.
            prog.add_nonneg(LinExpr(0.25) - prog.entry(alpha, i));
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
            return out;  // caller keeps the previous iterate when !ok
        }
        const Eigen::VectorXcd vr_prev = vr, vt_prev = vt;
        vr = prog.value(hvr, sol);
        vt = tied ? vr : prog.value(hvt, sol);
        const double moved = std::max((vr - vr_prev).cwiseAbs().maxCoeff(),
                                      (vt - vt_prev).cwiseAbs().maxCoeff());
        out.alpha.resize(num_k + 2 * num_q);
        for (int i = 0; i < out.alpha.size(); ++i)
            out.alpha[i] = sol.x[alpha.offset + i];
        for (int q = 0; q < num_q; ++q) out.alpha[num_k + num_q + q] *= qos.sinr_min;
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
                         "p3.4 round %d obj %.10g moved %.3e alpha_sum %.6g it %d %s\n",
                         round, obj, moved, out.alpha.sum(), sol.iterations,
                         conic::to_string(sol.status));
        if (moved < 1e-7) break;  // SCA fixed point: the iterate stopped moving
        if (prev_obj - obj < opts.eps_sca * std::max(1.0, std::abs(prev_obj))) break;
        prev_obj = obj;
    }
    return out;
}

BroadcastSolution solve_p1(const ChannelSet& ch, const QosSpec& qos,
                           const BcdOptions& opts) {
    const int m = static_cast<int>(ch.g_pu.rows());
    qos.validate(static_cast<int>(ch.h_pu.cols()));
    BroadcastSolution sol;
    RandomStream rng(opts.seed ^ 0x9E3779B97F4A7C15ULL);
    const bool use_pdd = opts.optimize_coefficients && !opts.tied_coefficients;

    // Initialization, with re-randomization if the first subproblem is
    // infeasible for the drawn coefficients.
    StarCoefficients sc;
    BeamformingResult bf;
    bool initialized = false;
    const int tries = opts.init_coeffs ? 1 : opts.max_init_retries;
    for (int attempt = 0; attempt < tries; ++attempt) {
        if (opts.init_coeffs) {
            sc = *opts.init_coeffs;
        } else {
            sc = random_star_init(m, opts.phase_coupled, rng);
            if (opts.tied_coefficients) sc.v_t = sc.v_r;
        }
        bf = solve_beamforming(ch, sc, qos, opts);
        if (bf.status == SolveStatus::Optimal) {
            initialized = true;
            break;
        }
    }
    if (!initialized) {
        sol.message = "infeasible scenario: beamforming subproblem failed at every "
                      "coefficient initialization (" +
                      std::string(conic::to_string(bf.status)) +
                      (bf.message.empty() ? ")" : "; " + bf.message + ")");
        sol.coeffs = sc;
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
    BeamformingResult bf_last = bf;
    bool aborted = false;

    // One pass of the inner block-coordinate loop at the given tolerance.
    auto run_inner = [&](int outer_tag, double eps_inner, int cap) {
        double inner_power_prev = std::numeric_limits<double>::infinity();
        for (int inner = 0; inner < cap; ++inner) {
            bf = solve_beamforming(ch, sc, qos, opts);
            if (bf.status != SolveStatus::Optimal) {
                sc = last_good;  // keep the previous coefficient iterate
                sol.message = "beamforming became " +
                              std::string(conic::to_string(bf.status)) +
                              " mid-run; kept previous iterate";
                break;
            }
            bf_last = bf;
            last_good = sc;
            sol.rank_ratios.push_back(bf.rank_ratio);
            sol.trace.push_back(
                {outer_tag, inner, "beamforming", bf.power_w, pdd.delta, pdd.rho});
            ++sol.inner_iterations;

            if (!opts.optimize_coefficients) {
                aborted = true;  // single beamforming pass requested
                break;
            }

            const CoefficientResult cr =
                solve_coefficients(ch, bf.w, qos, pdd, sc, aux, opts);
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

    // Outer PDD loop runs the inner passes at a coarse tolerance; a single
    // polish pass at the nominal tolerance follows convergence.
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

    // Final iterate: transfer the exactly feasible auxiliary coefficients and
    // re-solve the beamformer against them. Targets carry a pad well above
    // the solver floor so the exact-evaluator margins certify cleanly.
    StarCoefficients final_sc = use_pdd ? materialize(aux) : sc;
    if (opts.tied_coefficients) final_sc.v_t = final_sc.v_r;
    QosSpec qos_pad = qos;
    qos_pad.rate_min += 1e-5;
    qos_pad.sinr_min *= 1.0 + 1e-5;
    BeamformingResult bf_final = solve_beamforming(ch, final_sc, qos_pad, opts);
    if (bf_final.status != SolveStatus::Optimal) {
        final_sc = last_good;
        bf_final = bf_last;
        if (sol.message.empty())
            sol.message = "final beamforming with transferred coefficients failed; "
                          "reporting last feasible iterate";
    }
    sol.coeffs = final_sc;
    sol.w = bf_final.w;
    sol.power_w = bf_final.power_w;
    sol.power_dbm = watts_to_dbm(sol.power_w);
    sol.rank_ratios.push_back(bf_final.rank_ratio);
    sol.trace.push_back({outer, -1, "final", sol.power_w, pdd.delta, pdd.rho});

    Beamformer bmf;
    bmf.mode = BeamformerMode::Broadcast;
    bmf.w = sol.w;
    sol.report = check_feasibility(ch, final_sc, bmf, qos, SicOrder{},
                                   feasibility_options_for(opts));
    sol.feasible = sol.report.pass;
    return sol;
}

}  // namespace starsr
