#pragma once

#include <Eigen/Dense>
#include <complex>
#include <numbers>

namespace starsr {

// Real symmetric embedding of Hermitian matrices:
//   T(C) = [[Re C, -Im C], [Im C, Re C]]
// T preserves PSD-ness and doubles the trace and every eigenvalue
// multiplicity. extract() is the left inverse of embed() and averages the
// redundant blocks, so extract(embed(C)) == C exactly.

inline Eigen::MatrixXd embed_hermitian(const Eigen::MatrixXcd& c) {
    const Eigen::Index n = c.rows();
    Eigen::MatrixXd out(2 * n, 2 * n);
    out.topLeftCorner(n, n) = c.real();
    out.topRightCorner(n, n) = -c.imag();
    out.bottomLeftCorner(n, n) = c.imag();
    out.bottomRightCorner(n, n) = c.real();
    return out;
}

inline Eigen::MatrixXcd extract_hermitian(const Eigen::MatrixXd& x) {
    const Eigen::Index n = x.rows() / 2;
    Eigen::MatrixXcd out(n, n);
    out.real() = 0.5 * (x.topLeftCorner(n, n) + x.bottomRightCorner(n, n));
    out.imag() = 0.5 * (x.bottomLeftCorner(n, n) - x.topRightCorner(n, n));
    // Hermitian part; the embedding image is exactly symmetric so this only
    // removes floating-point asymmetry from solver output.
    Eigen::MatrixXcd herm = 0.5 * (out + out.adjoint());
    return herm;
}

// svec: column-stacked lower triangle with sqrt(2)-scaled off-diagonals so
// that svec(A).dot(svec(B)) == trace(A*B) for symmetric A, B.
inline Eigen::Index svec_dim(Eigen::Index n) { return n * (n + 1) / 2; }

inline Eigen::VectorXd svec(const Eigen::MatrixXd& a) {
    const Eigen::Index n = a.rows();
    Eigen::VectorXd v(svec_dim(n));
    const double s2 = std::numbers::sqrt2;
    Eigen::Index k = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
        v[k++] = a(j, j);
        for (Eigen::Index i = j + 1; i < n; ++i) v[k++] = s2 * a(i, j);
    }
    return v;
}

inline Eigen::MatrixXd smat(const Eigen::VectorXd& v, Eigen::Index n) {
    Eigen::MatrixXd a(n, n);
    const double inv_s2 = 1.0 / std::numbers::sqrt2;
    Eigen::Index k = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
        a(j, j) = v[k++];
        for (Eigen::Index i = j + 1; i < n; ++i) {
            a(i, j) = a(j, i) = inv_s2 * v[k++];
        }
    }
    return a;
}

}  // namespace starsr
