#pragma once

#include <Eigen/Dense>
#include <complex>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "starsr/complex_embed.hpp"

namespace starsr::conic {

// Sparse real affine expression over the flat variable vector.
class LinExpr {
public:
    LinExpr() = default;
    /* implicit */ LinExpr(double constant) : constant_(constant) {}

    static LinExpr term(int index, double coeff) {
        LinExpr e;
        e.coeffs_[index] = coeff;
        return e;
    }

    LinExpr& operator+=(const LinExpr& o) {
        constant_ += o.constant_;
        for (const auto& [i, c] : o.coeffs_) coeffs_[i] += c;
        return *this;
    }
    LinExpr& operator-=(const LinExpr& o) {
        constant_ -= o.constant_;
        for (const auto& [i, c] : o.coeffs_) coeffs_[i] -= c;
        return *this;
    }
    LinExpr& operator*=(double a) {
        constant_ *= a;
        for (auto& [i, c] : coeffs_) c *= a;
        return *this;
    }
    friend LinExpr operator+(LinExpr a, const LinExpr& b) { return a += b; }
    friend LinExpr operator-(LinExpr a, const LinExpr& b) { return a -= b; }
    friend LinExpr operator*(LinExpr a, double s) { return a *= s; }
    friend LinExpr operator*(double s, LinExpr a) { return a *= s; }
    friend LinExpr operator-(LinExpr a) { return a *= -1.0; }

    double constant() const { return constant_; }
    const std::map<int, double>& coeffs() const { return coeffs_; }

    double evaluate(const Eigen::VectorXd& x) const {
        double v = constant_;
        for (const auto& [i, c] : coeffs_) v += c * x[i];
        return v;
    }

private:
    double constant_ = 0.0;
    std::map<int, double> coeffs_;
};

// Complex affine expression as a (re, im) pair of real expressions.
struct CLinExpr {
    LinExpr re, im;

    CLinExpr() = default;
    CLinExpr(LinExpr r, LinExpr i) : re(std::move(r)), im(std::move(i)) {}
    /* implicit */ CLinExpr(std::complex<double> z) : re(z.real()), im(z.imag()) {}

    CLinExpr& operator+=(const CLinExpr& o) {
        re += o.re;
        im += o.im;
        return *this;
    }
    friend CLinExpr operator+(CLinExpr a, const CLinExpr& b) { return a += b; }
    friend CLinExpr operator-(CLinExpr a, const CLinExpr& b) {
        a.re -= b.re;
        a.im -= b.im;
        return a;
    }
    friend CLinExpr operator*(std::complex<double> z, const CLinExpr& e) {
        return {z.real() * e.re - z.imag() * e.im, z.real() * e.im + z.imag() * e.re};
    }
    CLinExpr conj() const { return {re, -im}; }

    std::complex<double> evaluate(const Eigen::VectorXd& x) const {
        return {re.evaluate(x), im.evaluate(x)};
    }
};

enum class SolveStatus { Optimal, Infeasible, NumericalFailure };

const char* to_string(SolveStatus s);

struct SolverOptions {
    double feas_tol = 1e-8;       // primal residual bound
    double dual_feas_tol = 1e-8;  // dual (stationarity) residual bound
    double rel_gap_tol = 1e-8;
    double abs_gap_tol = 1e-9;
    int max_iters = 200;
    bool verbose = false;
    // When > 0 and a stalled first attempt already sits inside these looser
    // bands, the higher-precision retry is skipped; the caller sees the
    // honest numerical-failure status plus the achieved metrics and decides.
    double skip_retry_pres = 0.0;
    double skip_retry_dres = 0.0;
    double skip_retry_gap_rel = 0.0;
};

// Handle types. Returned by variable declarations; index arithmetic stays
// inside ConicProgram.
struct VarHandle {
    int offset = -1;
    int size = 0;
};

struct HermitianVarHandle {
    int offset = -1;   // start of the svec block
    int complex_dim = 0;
    int embed_dim = 0; // 2 * complex_dim
    int svec_size = 0;
};

struct ComplexVecHandle {
    int offset = -1;   // interleaved (re, im) pairs
    int size = 0;      // complex length
};

struct ConicSolution {
    SolveStatus status = SolveStatus::NumericalFailure;
    double objective = 0.0;
    Eigen::VectorXd x;
    int iterations = 0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    double duality_gap = 0.0;     // absolute |primal - dual|
    std::string message;
};

enum class ConeKind { NonNeg, Soc, RotatedSoc, Psd, Exp };

struct ConeConstraint {
    ConeKind kind;
    std::vector<LinExpr> rows;
    int psd_n = 0;  // smat side for Psd blocks
};

// Builder + solve front end for cone programs:
//   minimize c'x  s.t.  eq rows == 0,  each cone constraint's rows in cone.
// Hermitian matrix variables use the real symmetric embedding from
// complex_embed.hpp; all other variables are plain reals.
class ConicProgram {
public:
    // -- variables -----------------------------------------------------
    VarHandle add_scalar(const std::string& name);
    VarHandle add_vector(const std::string& name, int n);
    ComplexVecHandle add_complex_vector(const std::string& name, int m);
    // Declares a Hermitian PSD matrix variable of complex dimension n,
    // hosted as the svec of its 2n x 2n real embedding with a PSD cone
    // constraint attached.
    HermitianVarHandle build_hermitian_psd_var(const std::string& name, int n);

    // -- expressions ---------------------------------------------------
    LinExpr entry(VarHandle v, int i = 0) const;
    CLinExpr centry(ComplexVecHandle v, int m) const;
    // a^H v as a complex affine expression.
    CLinExpr cdot(const Eigen::VectorXcd& a, ComplexVecHandle v) const;
    // Tr(A W) for Hermitian A (a real quantity).
    LinExpr trace_expr(HermitianVarHandle w, const Eigen::MatrixXcd& a) const;

    // -- constraints ---------------------------------------------------
    void add_eq(const LinExpr& e);                 // e == 0
    void add_nonneg(const LinExpr& e);             // e >= 0
    void add_soc(const std::vector<LinExpr>& rows);  // rows[0] >= ||rows[1:]||
    // x >= 0, y >= 0, x*y >= ||z||^2
    void add_rotated_soc(const LinExpr& x, const LinExpr& y, const std::vector<LinExpr>& z);
    // t <= ln(x), x > 0 (3-d exponential cone with middle entry fixed to 1)
    void add_exponential_cone(const LinExpr& t, const LinExpr& x);

    void minimize(const LinExpr& objective);

    // -- solve / inspect -------------------------------------------------
    ConicSolution solve(const SolverOptions& opts = {}) const;

    int num_vars() const { return num_vars_; }
    void dump(std::ostream& os) const;

    // Solution accessors.
    double value(const LinExpr& e, const ConicSolution& sol) const { return e.evaluate(sol.x); }
    Eigen::VectorXcd value(ComplexVecHandle v, const ConicSolution& sol) const;
    // Complex Hermitian matrix recovered from the embedding.
    Eigen::MatrixXcd value(HermitianVarHandle w, const ConicSolution& sol) const;

private:
    int allocate(const std::string& name, int n);

    int num_vars_ = 0;
    std::map<std::string, std::pair<int, int>> names_;
    LinExpr objective_;
    std::vector<LinExpr> equalities_;
    std::vector<ConeConstraint> cones_;
};

}  // namespace starsr::conic
