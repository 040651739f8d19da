#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

#include "starsr/conic.hpp"

// Homogeneous self-dual embedding with a Mehrotra-weighted predictor-corrector
// scheme of the Skajaa-Ye type. Symmetric cones (nonnegative, second-order,
// rotated second-order, PSD) and the exponential cone are all handled through
// their logarithmically homogeneous barriers; the dual iterate is kept near
// -mu*g(s) by the centrality neighborhood, so no dual barrier is needed.
//
// Embedded system (x free, s in K, z in K*, tau/kappa > 0):
//   res1 = A'y + G'z + c*tau          -> 0
//   res2 = -A x + b*tau               -> 0
//   res3 = -G x + h*tau - s           -> 0
//   res4 = -c'x - b'y - h'z - kappa   -> 0
//
// Data is Ruiz-equilibrated up front (uniform row scale inside each cone
// block so membership is preserved); convergence is judged on residuals
// mapped back to the original scaling. The reduced Newton system squares the
// conditioning of the cone Hessians, so the entire iteration is templated on
// the scalar type: a double attempt first, then a long double retry for the
// instances where double runs out of digits near the central path's end.

namespace starsr::conic {
namespace {

template <typename Real>
using RMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Real>
using RVector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

struct Block {
    ConeKind kind;
    int dim = 0;
    double nu = 0.0;
    int psd_n = 0;
    int soff = 0;
    double rowscale = 1.0;
    double raw_norm = 0.0;   // max |entry| of the original [G h] rows
    std::vector<int> cols;   // global variable indices this block touches
    Eigen::MatrixXd Gloc;    // dim x cols.size()
    Eigen::VectorXd hloc;
};

struct Workspace {
    int n = 0, meq = 0, m = 0;
    double nu = 1.0;  // total barrier parameter incl. tau/kappa
    Eigen::VectorXd c;
    double obj_const = 0.0;
    Eigen::MatrixXd A;
    Eigen::VectorXd b;
    std::vector<Block> blocks;
    Eigen::VectorXd h;

    Eigen::VectorXd colscale;
    Eigen::VectorXd eqscale;
    double sigma_c = 1.0;
    double sigma_b = 1.0;

    // Per-row / per-column data magnitudes of the original problem, for
    // relative residual measurements.
    Eigen::VectorXd eq_norm;    // per eq row: max(|A row|, |b|)
    Eigen::VectorXd col_norm;   // per column: max(|c_j|, |[A;G] col|)

    void refresh_h() {
        h.resize(m);
        for (const auto& blk : blocks) h.segment(blk.soff, blk.dim) = blk.hloc;
    }
};

// Ruiz equilibration over the stacked [A; G] matrix. Rows belonging to one
// cone block share a single scale so cone membership is unaffected.
void equilibrate(Workspace& w) {
    w.colscale = Eigen::VectorXd::Ones(w.n);
    w.eqscale = Eigen::VectorXd::Ones(w.meq);
    for (int pass = 0; pass < 10; ++pass) {
        for (int r = 0; r < w.meq; ++r) {
            const double nrm = w.A.row(r).cwiseAbs().maxCoeff();
            if (nrm > 0) {
                const double f = 1.0 / std::sqrt(nrm);
                w.A.row(r) *= f;
                w.b[r] *= f;
                w.eqscale[r] *= f;
            }
        }
        for (auto& blk : w.blocks) {
            double nrm = 0.0;
            if (blk.cols.size()) nrm = blk.Gloc.cwiseAbs().maxCoeff();
            if (nrm > 0) {
                const double f = 1.0 / std::sqrt(nrm);
                blk.Gloc *= f;
                blk.hloc *= f;
                blk.rowscale *= f;
            }
        }
        Eigen::VectorXd cn = Eigen::VectorXd::Zero(w.n);
        for (int r = 0; r < w.meq; ++r)
            cn = cn.cwiseMax(w.A.row(r).transpose().cwiseAbs());
        for (const auto& blk : w.blocks)
            for (size_t j = 0; j < blk.cols.size(); ++j)
                cn[blk.cols[j]] =
                    std::max(cn[blk.cols[j]], blk.Gloc.col(j).cwiseAbs().maxCoeff());
        Eigen::VectorXd f = Eigen::VectorXd::Ones(w.n);
        for (int j = 0; j < w.n; ++j) {
            if (cn[j] > 0) {
                f[j] = 1.0 / std::sqrt(cn[j]);
                w.colscale[j] *= f[j];
                if (w.meq) w.A.col(j) *= f[j];
            }
        }
        for (auto& blk : w.blocks)
            for (size_t j = 0; j < blk.cols.size(); ++j) blk.Gloc.col(j) *= f[blk.cols[j]];
    }
    for (int j = 0; j < w.n; ++j) w.c[j] *= w.colscale[j];
    w.sigma_c = 1.0 / std::max(1.0, w.c.lpNorm<Eigen::Infinity>());
    w.c *= w.sigma_c;
    w.refresh_h();
    const double rn = std::max(w.meq ? w.b.lpNorm<Eigen::Infinity>() : 0.0,
                               w.m ? w.h.lpNorm<Eigen::Infinity>() : 0.0);
    w.sigma_b = 1.0 / std::max(1.0, rn);
    w.b *= w.sigma_b;
    for (auto& blk : w.blocks) blk.hloc *= w.sigma_b;
    w.refresh_h();
}

// Typed copy of the problem data for one solve attempt.
template <typename Real>
struct TypedBlock {
    ConeKind kind;
    int dim, psd_n, soff;
    Real nu;
    std::vector<int> cols;
    RMatrix<Real> Gloc;
    RVector<Real> hloc;
};

template <typename Real>
struct TypedWork {
    int n, meq, m;
    Real nu;
    RVector<Real> c, b, h;
    RMatrix<Real> A;
    std::vector<TypedBlock<Real>> blocks;

    explicit TypedWork(const Workspace& w)
        : n(w.n), meq(w.meq), m(w.m), nu(Real(w.nu)) {
        c = w.c.cast<Real>();
        b = w.b.cast<Real>();
        h = w.h.cast<Real>();
        A = w.A.cast<Real>();
        blocks.reserve(w.blocks.size());
        for (const auto& blk : w.blocks) {
            TypedBlock<Real> t{blk.kind, blk.dim,  blk.psd_n,
                               blk.soff, Real(blk.nu), blk.cols,
                               blk.Gloc.cast<Real>(), blk.hloc.cast<Real>()};
            blocks.push_back(std::move(t));
        }
    }

    RVector<Real> Gt_mul(const RVector<Real>& z) const {
        RVector<Real> out = RVector<Real>::Zero(n);
        for (const auto& blk : blocks) {
            if (blk.cols.empty()) continue;
            RVector<Real> loc = blk.Gloc.transpose() * z.segment(blk.soff, blk.dim);
            for (size_t j = 0; j < blk.cols.size(); ++j) out[blk.cols[j]] += loc[j];
        }
        return out;
    }
    RVector<Real> G_mul(const RVector<Real>& x) const {
        RVector<Real> out = RVector<Real>::Zero(m);
        for (const auto& blk : blocks) {
            if (blk.cols.empty()) continue;
            RVector<Real> xloc(blk.cols.size());
            for (size_t j = 0; j < blk.cols.size(); ++j) xloc[j] = x[blk.cols[j]];
            out.segment(blk.soff, blk.dim) = blk.Gloc * xloc;
        }
        return out;
    }
};

template <typename Real>
Real svec_dot(const RVector<Real>& a, const RVector<Real>& b) {
    return a.dot(b);
}

template <typename Real>
RVector<Real> svec_of(const RMatrix<Real>& a) {
    const Eigen::Index n = a.rows();
    RVector<Real> v(n * (n + 1) / 2);
    const Real s2 = Real(std::numbers::sqrt2);
    Eigen::Index k = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
        v[k++] = a(j, j);
        for (Eigen::Index i = j + 1; i < n; ++i) v[k++] = s2 * a(i, j);
    }
    return v;
}

template <typename Real>
RMatrix<Real> smat_of(const RVector<Real>& v, Eigen::Index n) {
    RMatrix<Real> a(n, n);
    const Real inv_s2 = Real(1) / Real(std::numbers::sqrt2);
    Eigen::Index k = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
        a(j, j) = v[k++];
        for (Eigen::Index i = j + 1; i < n; ++i) a(i, j) = a(j, i) = inv_s2 * v[k++];
    }
    return a;
}

template <typename Real>
bool in_interior(const TypedBlock<Real>& b, const RVector<Real>& s) {
    switch (b.kind) {
        case ConeKind::NonNeg:
            return (s.array() > Real(0)).all();
        case ConeKind::Soc: {
            if (s[0] <= Real(0)) return false;
            return s[0] * s[0] - s.tail(b.dim - 1).squaredNorm() > Real(0);
        }
        case ConeKind::RotatedSoc: {
            if (s[0] <= Real(0) || s[1] <= Real(0)) return false;
            return s[0] * s[1] - s.tail(b.dim - 2).squaredNorm() > Real(0);
        }
        case ConeKind::Psd: {
            const RMatrix<Real> m = smat_of<Real>(s, b.psd_n);
            if (m.diagonal().minCoeff() <= Real(0)) return false;
            Eigen::LLT<RMatrix<Real>> llt(m);
            return llt.info() == Eigen::Success;
        }
        case ConeKind::Exp: {
            const Real u = s[0], v = s[1], w = s[2];
            if (v <= Real(0) || w <= Real(0)) return false;
            using std::log;
            return v * log(w / v) - u > Real(0);
        }
    }
    return false;
}

template <typename Real>
RVector<Real> central_point(const TypedBlock<Real>& b) {
    RVector<Real> s = RVector<Real>::Zero(b.dim);
    switch (b.kind) {
        case ConeKind::NonNeg:
            s.setOnes();
            break;
        case ConeKind::Soc:
            s[0] = Real(std::numbers::sqrt2);
            break;
        case ConeKind::RotatedSoc:
            s[0] = Real(1);
            s[1] = Real(1);
            break;
        case ConeKind::Psd:
            s = svec_of<Real>(RMatrix<Real>::Identity(b.psd_n, b.psd_n));
            break;
        case ConeKind::Exp:
            s[0] = Real(-1);
            s[1] = Real(1);
            s[2] = Real(std::numbers::e);
            break;
    }
    return s;
}

template <typename Real>
struct BlockState {
    RVector<Real> g;
    RMatrix<Real> H;
    Eigen::LLT<RMatrix<Real>> chol;
    bool ok = false;
};

template <typename Real>
void barrier(const TypedBlock<Real>& b, const RVector<Real>& s, BlockState<Real>& st) {
    using std::log;
    st.ok = false;
    switch (b.kind) {
        case ConeKind::NonNeg: {
            st.g = -s.cwiseInverse();
            st.H = s.array().square().inverse().matrix().asDiagonal();
            break;
        }
        case ConeKind::Soc: {
            const int d = b.dim;
            const Real det = s[0] * s[0] - s.tail(d - 1).squaredNorm();
            RVector<Real> js = s;
            js.tail(d - 1) *= Real(-1);
            st.g = (Real(-2) / det) * js;
            st.H = (Real(4) / (det * det)) * (js * js.transpose());
            st.H(0, 0) -= Real(2) / det;
            for (int i = 1; i < d; ++i) st.H(i, i) += Real(2) / det;
            break;
        }
        case ConeKind::RotatedSoc: {
            const int d = b.dim;
            const Real det = s[0] * s[1] - s.tail(d - 2).squaredNorm();
            RVector<Real> gd(d);
            gd[0] = s[1];
            gd[1] = s[0];
            gd.tail(d - 2) = Real(-2) * s.tail(d - 2);
            st.g = (Real(-1) / det) * gd;
            st.H = (gd * gd.transpose()) / (det * det);
            st.H(0, 1) -= Real(1) / det;
            st.H(1, 0) -= Real(1) / det;
            for (int i = 2; i < d; ++i) st.H(i, i) += Real(2) / det;
            break;
        }
        case ConeKind::Psd: {
            const int r = b.psd_n;
            const RMatrix<Real> m = smat_of<Real>(s, r);
            Eigen::LLT<RMatrix<Real>> llt(m);
            if (llt.info() != Eigen::Success) return;
            const RMatrix<Real> inv = llt.solve(RMatrix<Real>::Identity(r, r));
            st.g = -svec_of<Real>(inv);
            st.H.resize(b.dim, b.dim);
            RVector<Real> e = RVector<Real>::Zero(b.dim);
            for (int k = 0; k < b.dim; ++k) {
                e[k] = Real(1);
                st.H.col(k) = svec_of<Real>(RMatrix<Real>(inv * smat_of<Real>(e, r) * inv));
                e[k] = Real(0);
            }
            break;
        }
        case ConeKind::Exp: {
            const Real u = s[0], v = s[1], w = s[2];
            const Real lwv = log(w / v);
            const Real psi = v * lwv - u;
            st.g.resize(3);
            st.g[0] = Real(1) / psi;
            st.g[1] = -(lwv - Real(1)) / psi - Real(1) / v;
            st.g[2] = -v / (psi * w) - Real(1) / w;
            RVector<Real> q(3);
            q << Real(-1), lwv - Real(1), v / w;
            RMatrix<Real> H = (q * q.transpose()) / (psi * psi);
            H(1, 1) += Real(1) / (v * psi) + Real(1) / (v * v);
            H(1, 2) += Real(-1) / (w * psi);
            H(2, 1) += Real(-1) / (w * psi);
            H(2, 2) += v / (w * w * psi) + Real(1) / (w * w);
            st.H = H;
            break;
        }
    }
    st.chol.compute(st.H);
    st.ok = st.chol.info() == Eigen::Success;
}

template <typename Real>
struct Point {
    RVector<Real> x, y, z, s;
    Real tau = Real(1), kappa = Real(1);
};

template <typename Real>
Real mu_of(const TypedWork<Real>& w, const Point<Real>& p) {
    return (p.s.dot(p.z) + p.tau * p.kappa) / w.nu;
}

template <typename Real>
bool compute_states(const TypedWork<Real>& w, const RVector<Real>& s,
                    std::vector<BlockState<Real>>& states) {
    states.resize(w.blocks.size());
    for (size_t i = 0; i < w.blocks.size(); ++i) {
        const auto& blk = w.blocks[i];
        if (!in_interior<Real>(blk, s.segment(blk.soff, blk.dim))) return false;
        barrier<Real>(blk, s.segment(blk.soff, blk.dim), states[i]);
        if (!states[i].ok) return false;
    }
    return true;
}

template <typename Real>
Real neighborhood(const TypedWork<Real>& w, const Point<Real>& p, Real mu,
                  const std::vector<BlockState<Real>>& states) {
    using std::sqrt;
    Real acc = Real(0);
    for (size_t i = 0; i < w.blocks.size(); ++i) {
        const auto& blk = w.blocks[i];
        RVector<Real> rho = p.z.segment(blk.soff, blk.dim) + mu * states[i].g;
        acc += rho.dot(states[i].chol.solve(rho));
    }
    const Real rt = p.kappa - mu / p.tau;
    acc += rt * rt * p.tau * p.tau;
    return sqrt(std::max(acc, Real(0))) / mu;
}

template <typename Real>
struct Direction {
    RVector<Real> dx, dy, dz, ds;
    Real dtau = Real(0), dkappa = Real(0);
};

// Newton system on the reduced (dx, dy, dtau) form:
//   A'dy + G'dz + c dtau                  = p1
//   -A dx + b dtau                        = p2
//   -G dx + h dtau - ds                   = p3
//   -c'dx - b'dy - h'dz - dkappa          = p4
//   mu H ds + dz                          = p5
//   (mu/tau^2) dtau + dkappa              = p6
template <typename Real>
class KktSolver {
public:
    KktSolver(const TypedWork<Real>& w, const Point<Real>& p, Real mu,
              const std::vector<BlockState<Real>>& states)
        : w_(w), mu_(mu), tau_(p.tau), states_(states) {
        const int n = w.n, meq = w.meq;
        const int dim = n + meq + 1;
        RMatrix<Real> M = RMatrix<Real>::Zero(dim, dim);
        for (size_t i = 0; i < w.blocks.size(); ++i) {
            const auto& blk = w.blocks[i];
            if (!blk.cols.empty()) {
                const RMatrix<Real> HG = states_[i].H * blk.Gloc;
                const RMatrix<Real> local = blk.Gloc.transpose() * HG;
                const RVector<Real> gh = blk.Gloc.transpose() * (states_[i].H * blk.hloc);
                for (size_t a = 0; a < blk.cols.size(); ++a) {
                    for (size_t bc = 0; bc < blk.cols.size(); ++bc)
                        M(blk.cols[a], blk.cols[bc]) += mu_ * local(a, bc);
                    M(blk.cols[a], dim - 1) -= mu_ * gh[a];
                    M(dim - 1, blk.cols[a]) -= mu_ * gh[a];
                }
            }
            M(dim - 1, dim - 1) += mu_ * blk.hloc.dot(states_[i].H * blk.hloc);
        }
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < meq; ++j) {
                M(i, n + j) = w.A(j, i);
                M(n + j, i) = -w.A(j, i);
            }
            M(i, dim - 1) += w.c[i];
            M(dim - 1, i) -= w.c[i];
        }
        for (int j = 0; j < meq; ++j) {
            M(n + j, dim - 1) = w.b[j];
            M(dim - 1, n + j) = -w.b[j];
        }
        M(dim - 1, dim - 1) += mu_ / (tau_ * tau_);
        M0_ = M;
        const Real eps = std::numeric_limits<Real>::epsilon();
        const Real diag_scale = M.diagonal().cwiseAbs().maxCoeff();
        M.diagonal().array() += Real(32) * eps * diag_scale;
        lu_.compute(M);
    }

    Direction<Real> solve(const RVector<Real>& p1, const RVector<Real>& p2,
                          const RVector<Real>& p3, Real p4, const RVector<Real>& p5,
                          Real p6) const {
        const int n = w_.n, meq = w_.meq;
        RVector<Real> wvec(w_.m);
        for (size_t i = 0; i < w_.blocks.size(); ++i) {
            const auto& blk = w_.blocks[i];
            wvec.segment(blk.soff, blk.dim) =
                p5.segment(blk.soff, blk.dim) +
                mu_ * (states_[i].H * p3.segment(blk.soff, blk.dim));
        }
        RVector<Real> rhs(n + meq + 1);
        rhs.head(n) = p1 - w_.Gt_mul(wvec);
        rhs.segment(n, meq) = p2;
        rhs[n + meq] = p4 + w_.h.dot(wvec) + p6;

        RVector<Real> sol = lu_.solve(rhs);
        RVector<Real> resid = rhs - M0_ * sol;
        if (resid.allFinite()) {
            const RVector<Real> corr = lu_.solve(resid);
            if (corr.allFinite() && (rhs - M0_ * (sol + corr)).norm() < resid.norm())
                sol += corr;
        }

        Direction<Real> d;
        d.dx = sol.head(n);
        d.dy = sol.segment(n, meq);
        d.dtau = sol[n + meq];
        d.ds = -w_.G_mul(d.dx) + w_.h * d.dtau - p3;
        d.dz.resize(w_.m);
        for (size_t i = 0; i < w_.blocks.size(); ++i) {
            const auto& blk = w_.blocks[i];
            d.dz.segment(blk.soff, blk.dim) =
                p5.segment(blk.soff, blk.dim) -
                mu_ * (states_[i].H * d.ds.segment(blk.soff, blk.dim));
        }
        d.dkappa = p6 - (mu_ / (tau_ * tau_)) * d.dtau;
        return d;
    }

private:
    const TypedWork<Real>& w_;
    Real mu_, tau_;
    const std::vector<BlockState<Real>>& states_;
    RMatrix<Real> M0_;
    Eigen::FullPivLU<RMatrix<Real>> lu_;
};

template <typename Real>
struct Residuals {
    RVector<Real> r1, r2, r3;
    Real r4 = Real(0);
};

template <typename Real>
Residuals<Real> residuals(const TypedWork<Real>& w, const Point<Real>& p) {
    Residuals<Real> r;
    r.r1 = (w.meq ? RVector<Real>(w.A.transpose() * p.y) : RVector<Real>::Zero(w.n)) +
           w.Gt_mul(p.z) + w.c * p.tau;
    r.r2 = (w.meq ? RVector<Real>(-w.A * p.x + w.b * p.tau) : RVector<Real>::Zero(0));
    r.r3 = -w.G_mul(p.x) + w.h * p.tau - p.s;
    r.r4 = -w.c.dot(p.x) - w.b.dot(p.y) - w.h.dot(p.z) - p.kappa;
    return r;
}

struct Metrics {
    double pres, dres, gap_abs, gap_rel, pobj, dobj;
};

// Convergence metrics in the units of the original (unscaled) problem, each
// residual measured relative to its own row's / column's data magnitude.
template <typename Real>
Metrics metrics_unscaled(const Workspace& ws, const TypedWork<Real>& w,
                         const Point<Real>& p, const Residuals<Real>& res) {
    Metrics mt{};
    const double obj_unscale = 1.0 / (ws.sigma_c * ws.sigma_b);
    const double tau = static_cast<double>(p.tau);
    mt.pobj = static_cast<double>(w.c.dot(p.x)) / tau * obj_unscale;
    mt.dobj = -static_cast<double>(w.b.dot(p.y) + w.h.dot(p.z)) / tau * obj_unscale;
    double pr = 0.0;
    if (w.meq) {
        for (int r = 0; r < w.meq; ++r) {
            const double ru = std::abs(static_cast<double>(res.r2[r])) /
                              (ws.eqscale[r] * ws.sigma_b);
            pr = std::max(pr, ru / (1.0 + ws.eq_norm[r]));
        }
    }
    for (const auto& blk : ws.blocks) {
        double bm = 0.0;
        for (int r = 0; r < blk.dim; ++r)
            bm = std::max(bm, std::abs(static_cast<double>(res.r3[blk.soff + r])));
        pr = std::max(pr, bm / (blk.rowscale * ws.sigma_b) / (1.0 + blk.raw_norm));
    }
    mt.pres = pr / tau;
    double dx = 0.0;
    for (int j = 0; j < w.n; ++j) {
        const double ru =
            std::abs(static_cast<double>(res.r1[j])) / (ws.colscale[j] * ws.sigma_c);
        dx = std::max(dx, ru / (1.0 + ws.col_norm[j]));
    }
    mt.dres = dx / tau;
    // Complementarity gap: the certificate the iteration actually drives to
    // zero. The objective difference pobj - dobj is polluted by the dual
    // residual times the iterate norm and can floor well above it.
    mt.gap_abs = static_cast<double>(p.s.dot(p.z) + p.tau * p.kappa) / (tau * tau) *
                 obj_unscale;
    mt.gap_rel = mt.gap_abs / std::max({1.0, std::abs(mt.pobj), std::abs(mt.dobj)});
    return mt;
}

enum class AttemptResult { Converged, Infeasible, Unbounded, Stalled };

struct AttemptOutput {
    AttemptResult result = AttemptResult::Stalled;
    Metrics best{};
    Eigen::VectorXd best_x;
    int iters = 0;
};

template <typename Real>
AttemptOutput run_ipm(const Workspace& ws, const SolverOptions& opts) {
    const TypedWork<Real> w(ws);
    AttemptOutput out;
    Point<Real> p;
    p.x = RVector<Real>::Zero(w.n);
    p.y = RVector<Real>::Zero(w.meq);
    p.s.resize(w.m);
    p.z.resize(w.m);
    for (size_t bi = 0; bi < w.blocks.size(); ++bi) {
        const auto& blk = w.blocks[bi];
        // Match the initial slack to the block's original data magnitude so
        // the starting residuals are O(1) in the unscaled relative measure;
        // z = -g(s) keeps the point exactly centered at mu = 1 regardless.
        const double match =
            ws.blocks[bi].rowscale * ws.sigma_b * (1.0 + ws.blocks[bi].raw_norm);
        // Square-root compromise: full matching loads the dual side with the
        // reciprocal imbalance, so split it evenly between s and z.
        const Real omega = Real(std::clamp(std::sqrt(match), 1e-6, 1e6));
        const RVector<Real> s0 = omega * central_point<Real>(blk);
        BlockState<Real> st;
        barrier<Real>(blk, s0, st);
        p.s.segment(blk.soff, blk.dim) = s0;
        p.z.segment(blk.soff, blk.dim) = -st.g;
    }

    const Real eta_pred = Real(0.75);
    const Real eta_corr = Real(0.125);

    double best_score = std::numeric_limits<double>::infinity();
    int last_improve = 0;
    std::vector<BlockState<Real>> states;
    int stall = 0;

    for (int iter = 0; iter <= opts.max_iters; ++iter) {
        const Residuals<Real> res = residuals<Real>(w, p);
        const Real mu = mu_of<Real>(w, p);
        const Metrics mt = metrics_unscaled<Real>(ws, w, p, res);

        if (opts.verbose) {
            std::fprintf(stderr,
                         "it %3d mu %9.2e tau %9.2e pres %9.2e dres %9.2e gap %9.2e "
                         "pobj %12.5e\n",
                         iter, static_cast<double>(mu), static_cast<double>(p.tau),
                         mt.pres, mt.dres, mt.gap_rel, mt.pobj);
            if (iter == opts.max_iters || iter % 25 == 0) {
                for (size_t bi = 0; bi < ws.blocks.size(); ++bi) {
                    const auto& blk = ws.blocks[bi];
                    double bm = 0.0;
                    for (int r = 0; r < blk.dim; ++r)
                        bm = std::max(bm,
                                      std::abs(static_cast<double>(res.r3[blk.soff + r])));
                    const double rel = bm / (blk.rowscale * ws.sigma_b) /
                                       (1.0 + blk.raw_norm) / static_cast<double>(p.tau);
                    if (rel > 0.3 * mt.pres)
                        std::fprintf(stderr,
                                     "   block %zu kind %d dim %d rawnorm %9.2e rel %9.2e\n",
                                     bi, static_cast<int>(blk.kind), blk.dim,
                                     blk.raw_norm, rel);
                }
            }
        }

        const double score = mt.pres + mt.dres + mt.gap_rel;
        if (score < 0.98 * best_score) last_improve = iter;
        if (score < best_score) {
            best_score = score;
            out.best = mt;
            out.best_x =
                p.x.template cast<double>() / static_cast<double>(p.tau);
            out.iters = iter;
        }

        if (mt.pres <= opts.feas_tol && mt.dres <= opts.dual_feas_tol &&
            (mt.gap_abs <= opts.abs_gap_tol || mt.gap_rel <= opts.rel_gap_tol)) {
            out.result = AttemptResult::Converged;
            out.best = mt;
            out.best_x =
                p.x.template cast<double>() / static_cast<double>(p.tau);
            out.iters = iter;
            return out;
        }

        // Certificates (scale-invariant ratios).
        const Real hty = w.b.dot(p.y) + w.h.dot(p.z);
        if (hty < Real(-1e-14)) {
            RVector<Real> atg =
                (w.meq ? RVector<Real>(w.A.transpose() * p.y) : RVector<Real>::Zero(w.n)) +
                w.Gt_mul(p.z);
            double mx = 0.0;
            for (int j = 0; j < w.n; ++j)
                mx = std::max(mx, std::abs(static_cast<double>(atg[j])) / ws.colscale[j]);
            if (mx / static_cast<double>(-hty) <= opts.feas_tol) {
                out.result = AttemptResult::Infeasible;
                out.iters = iter;
                return out;
            }
        }
        const Real ctx = w.c.dot(p.x);
        if (ctx < Real(-1e-14)) {
            Real rn = w.meq ? (w.A * p.x).template lpNorm<Eigen::Infinity>() : Real(0);
            if (w.m)
                rn = std::max(rn, RVector<Real>(w.G_mul(p.x) + p.s)
                                      .template lpNorm<Eigen::Infinity>());
            if (static_cast<double>(rn) / static_cast<double>(-ctx) <= opts.feas_tol) {
                out.result = AttemptResult::Unbounded;
                out.iters = iter;
                return out;
            }
        }

        if (iter == opts.max_iters) break;
        if (iter - last_improve > 10) break;  // no progress; retry in higher precision
        if (!compute_states<Real>(w, p.s, states)) break;

        KktSolver<Real> kkt(w, p, mu, states);
        const Direction<Real> daff =
            kkt.solve(-res.r1, -res.r2, -res.r3, -res.r4, -p.z, -p.kappa);

        // Probe the affine step (interiority only) to pick the centering
        // weight, then take the combined direction inside the neighborhood.
        Real alpha_aff = Real(0);
        {
            Real a = Real(1);
            while (a > Real(1e-10)) {
                RVector<Real> strial = p.s + a * daff.ds;
                const Real tt = p.tau + a * daff.dtau;
                const Real tk = p.kappa + a * daff.dkappa;
                bool ok = tt > Real(0) && tk > Real(0) && strial.allFinite();
                if (ok) {
                    for (const auto& blk : w.blocks) {
                        if (!in_interior<Real>(blk, strial.segment(blk.soff, blk.dim))) {
                            ok = false;
                            break;
                        }
                    }
                }
                if (ok) {
                    alpha_aff = a;
                    break;
                }
                a *= Real(0.8);
            }
        }
        const Real sigma = std::clamp(
            Real(std::pow(1.0 - static_cast<double>(alpha_aff), 3.0)), Real(1e-8), Real(1));

        RVector<Real> p5(w.m);
        for (size_t i = 0; i < w.blocks.size(); ++i) {
            const auto& blk = w.blocks[i];
            p5.segment(blk.soff, blk.dim) =
                -p.z.segment(blk.soff, blk.dim) - (sigma * mu) * states[i].g;
        }
        const Real rw = Real(1) - sigma;
        const Direction<Real> d =
            kkt.solve(-rw * res.r1, -rw * res.r2, -rw * res.r3, -rw * res.r4, p5,
                      -p.kappa + sigma * mu / p.tau);

        // While residuals are far from tolerance, complementarity must not
        // race ahead of them (both shrink linearly by 1 - a(1-sigma); the
        // second-order term can drive mu much lower, which deadlocks the
        // endgame with large residuals and a tiny mu).
        const bool residuals_large = mt.pres > 2.0 * opts.feas_tol ||
                                     mt.dres > 2.0 * opts.dual_feas_tol;
        Real alpha = Real(0);
        {
            Real a = Real(0.9995);
            std::vector<BlockState<Real>> trial_states;
            while (a > Real(1e-10)) {
                Point<Real> t = p;
                t.x += a * d.dx;
                t.y += a * d.dy;
                t.z += a * d.dz;
                t.s += a * d.ds;
                t.tau += a * d.dtau;
                t.kappa += a * d.dkappa;
                if (t.tau > Real(0) && t.kappa > Real(0) && t.s.allFinite() &&
                    compute_states<Real>(w, t.s, trial_states)) {
                    const Real tmu = mu_of<Real>(w, t);
                    const Real res_factor = Real(1) - a * (Real(1) - sigma);
                    const bool mu_ok =
                        !residuals_large || tmu >= Real(0.2) * res_factor * mu;
                    if (tmu > Real(0) && mu_ok &&
                        neighborhood<Real>(w, t, tmu, trial_states) <= eta_pred) {
                        p = t;
                        alpha = a;
                        break;
                    }
                }
                a *= (a > Real(0.9)) ? Real(0.98) : Real(0.8);
            }
        }
        if (opts.verbose)
            std::fprintf(stderr, "       step alpha %9.2e (aff %9.2e sigma %9.2e)\n",
                         static_cast<double>(alpha), static_cast<double>(alpha_aff),
                         static_cast<double>(sigma));
        if (alpha < Real(1e-10)) {
            if (++stall >= 3) break;
        } else {
            stall = 0;
        }

        for (int round = 0; round < 8; ++round) {
            if (!compute_states<Real>(w, p.s, states)) break;
            const Real cmu = mu_of<Real>(w, p);
            const Real phi = neighborhood<Real>(w, p, cmu, states);
            if (phi <= eta_corr) break;
            KktSolver<Real> ckkt(w, p, cmu, states);
            RVector<Real> cp5(w.m);
            for (size_t i = 0; i < w.blocks.size(); ++i) {
                const auto& blk = w.blocks[i];
                cp5.segment(blk.soff, blk.dim) =
                    -p.z.segment(blk.soff, blk.dim) - cmu * states[i].g;
            }
            const Direction<Real> cd =
                ckkt.solve(RVector<Real>::Zero(w.n), RVector<Real>::Zero(w.meq),
                           RVector<Real>::Zero(w.m), Real(0), cp5,
                           -p.kappa + cmu / p.tau);
            Real a = Real(1);
            bool moved = false;
            std::vector<BlockState<Real>> trial_states;
            while (a > Real(1e-10)) {
                Point<Real> t = p;
                t.x += a * cd.dx;
                t.y += a * cd.dy;
                t.z += a * cd.dz;
                t.s += a * cd.ds;
                t.tau += a * cd.dtau;
                t.kappa += a * cd.dkappa;
                if (t.tau > Real(0) && t.kappa > Real(0) && t.s.allFinite() &&
                    compute_states<Real>(w, t.s, trial_states)) {
                    const Real tmu = mu_of<Real>(w, t);
                    if (tmu > Real(0)) {
                        const Real tphi = neighborhood<Real>(w, t, tmu, trial_states);
                        if (tphi < phi * (Real(1) - Real(0.01) * a) || tphi <= eta_corr) {
                            p = t;
                            moved = true;
                            break;
                        }
                    }
                }
                a *= Real(0.5);
            }
            if (!moved) break;
        }
    }

    out.result = AttemptResult::Stalled;
    return out;
}

}  // namespace

ConicSolution ConicProgram::solve(const SolverOptions& opts) const {
    Workspace w;
    w.n = num_vars_;
    w.meq = static_cast<int>(equalities_.size());
    w.c = Eigen::VectorXd::Zero(w.n);
    for (const auto& [i, cf] : objective_.coeffs()) w.c[i] = cf;
    w.obj_const = objective_.constant();
    w.A.resize(w.meq, w.n);
    w.b.resize(w.meq);
    w.A.setZero();
    for (int r = 0; r < w.meq; ++r) {
        for (const auto& [i, cf] : equalities_[r].coeffs()) w.A(r, i) = cf;
        w.b[r] = -equalities_[r].constant();
    }
    int soff = 0;
    for (const auto& cc : cones_) {
        Block blk;
        blk.kind = cc.kind;
        blk.dim = static_cast<int>(cc.rows.size());
        blk.psd_n = cc.psd_n;
        blk.soff = soff;
        soff += blk.dim;
        switch (cc.kind) {
            case ConeKind::NonNeg: blk.nu = blk.dim; break;
            case ConeKind::Soc: blk.nu = 2.0; break;
            case ConeKind::RotatedSoc: blk.nu = 2.0; break;
            case ConeKind::Psd: blk.nu = blk.psd_n; break;
            case ConeKind::Exp: blk.nu = 3.0; break;
        }
        std::map<int, int> local;
        for (const auto& row : cc.rows)
            for (const auto& [i, cf] : row.coeffs())
                if (!local.count(i)) {
                    const int ix = static_cast<int>(local.size());
                    local[i] = ix;
                }
        blk.cols.resize(local.size());
        for (const auto& [gi, li] : local) blk.cols[li] = gi;
        blk.Gloc = Eigen::MatrixXd::Zero(blk.dim, static_cast<int>(local.size()));
        blk.hloc.resize(blk.dim);
        for (int r = 0; r < blk.dim; ++r) {
            blk.hloc[r] = cc.rows[r].constant();
            for (const auto& [i, cf] : cc.rows[r].coeffs()) blk.Gloc(r, local[i]) = -cf;
        }
        w.blocks.push_back(std::move(blk));
        w.nu += w.blocks.back().nu;
    }
    w.m = soff;
    w.refresh_h();

    // Data magnitudes for relative residual measurement (pre-equilibration).
    w.eq_norm.resize(w.meq);
    for (int r = 0; r < w.meq; ++r)
        w.eq_norm[r] = std::max(w.A.row(r).cwiseAbs().maxCoeff(), std::abs(w.b[r]));
    w.col_norm = w.c.cwiseAbs();
    for (int r = 0; r < w.meq; ++r)
        w.col_norm = w.col_norm.cwiseMax(w.A.row(r).transpose().cwiseAbs());
    for (auto& blk : w.blocks) {
        double nrm = blk.hloc.size() ? blk.hloc.cwiseAbs().maxCoeff() : 0.0;
        if (blk.cols.size()) {
            nrm = std::max(nrm, blk.Gloc.cwiseAbs().maxCoeff());
            for (size_t j = 0; j < blk.cols.size(); ++j)
                w.col_norm[blk.cols[j]] = std::max(
                    w.col_norm[blk.cols[j]], blk.Gloc.col(j).cwiseAbs().maxCoeff());
        }
        blk.raw_norm = nrm;
    }

    equilibrate(w);

    ConicSolution out;
    out.x = Eigen::VectorXd::Zero(w.n);

    auto finish = [&](const AttemptOutput& a, SolveStatus st, const char* msg) {
        out.status = st;
        out.message = msg;
        out.iterations = a.iters;
        out.x = a.best_x.cwiseProduct(w.colscale) / w.sigma_b;
        out.objective = a.best.pobj + w.obj_const;
        out.primal_residual = a.best.pres;
        out.dual_residual = a.best.dres;
        out.duality_gap = a.best.gap_abs;
    };

    AttemptOutput attempt = run_ipm<double>(w, opts);
    const bool within_loose =
        opts.skip_retry_pres > 0.0 && attempt.best.pres <= opts.skip_retry_pres &&
        attempt.best.dres <= opts.skip_retry_dres &&
        attempt.best.gap_rel <= opts.skip_retry_gap_rel;
    if (attempt.result == AttemptResult::Stalled && !within_loose) {
        const AttemptOutput retry = run_ipm<long double>(w, opts);
        const bool keep_retry =
            retry.result != AttemptResult::Stalled ||
            retry.best.pres + retry.best.dres + retry.best.gap_rel <
                attempt.best.pres + attempt.best.dres + attempt.best.gap_rel;
        if (keep_retry) attempt = retry;
    }

    switch (attempt.result) {
        case AttemptResult::Converged:
            finish(attempt, SolveStatus::Optimal, "");
            break;
        case AttemptResult::Infeasible:
            out.status = SolveStatus::Infeasible;
            out.message = "primal infeasibility certificate found";
            out.iterations = attempt.iters;
            break;
        case AttemptResult::Unbounded:
            out.status = SolveStatus::NumericalFailure;
            out.message = "dual infeasibility certificate (objective unbounded below)";
            out.iterations = attempt.iters;
            break;
        case AttemptResult::Stalled:
            finish(attempt, SolveStatus::NumericalFailure,
                   "interior-point method stalled before reaching tolerances");
            break;
    }
    return out;
}

}  // namespace starsr::conic
