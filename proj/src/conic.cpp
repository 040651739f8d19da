#include "starsr/conic.hpp"

#include <stdexcept>

namespace starsr::conic {

const char* to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::Optimal: return "optimal";
        case SolveStatus::Infeasible: return "infeasible";
        case SolveStatus::NumericalFailure: return "numerical-failure";
    }
    return "?";
}

int ConicProgram::allocate(const std::string& name, int n) {
    if (names_.count(name)) throw std::invalid_argument("duplicate variable name: " + name);
    if (n < 1) throw std::invalid_argument("variable size must be >= 1: " + name);
    const int off = num_vars_;
    names_[name] = {off, n};
    num_vars_ += n;
    return off;
}

VarHandle ConicProgram::add_scalar(const std::string& name) { return {allocate(name, 1), 1}; }

VarHandle ConicProgram::add_vector(const std::string& name, int n) { return {allocate(name, n), n}; }

ComplexVecHandle ConicProgram::add_complex_vector(const std::string& name, int m) {
    return {allocate(name, 2 * m), m};
}

HermitianVarHandle ConicProgram::build_hermitian_psd_var(const std::string& name, int n) {
    const int embed = 2 * n;
    const int sv = static_cast<int>(svec_dim(embed));
    HermitianVarHandle h{allocate(name, sv), n, embed, sv};
    ConeConstraint cc;
    cc.kind = ConeKind::Psd;
    cc.psd_n = embed;
    cc.rows.reserve(sv);
    for (int i = 0; i < sv; ++i) cc.rows.push_back(LinExpr::term(h.offset + i, 1.0));
    cones_.push_back(std::move(cc));
    return h;
}

LinExpr ConicProgram::entry(VarHandle v, int i) const {
    if (i < 0 || i >= v.size) throw std::out_of_range("variable entry out of range");
    return LinExpr::term(v.offset + i, 1.0);
}

CLinExpr ConicProgram::centry(ComplexVecHandle v, int m) const {
    if (m < 0 || m >= v.size) throw std::out_of_range("complex entry out of range");
    return {LinExpr::term(v.offset + 2 * m, 1.0), LinExpr::term(v.offset + 2 * m + 1, 1.0)};
}

CLinExpr ConicProgram::cdot(const Eigen::VectorXcd& a, ComplexVecHandle v) const {
    if (a.size() != v.size) throw std::invalid_argument("cdot dimension mismatch");
    CLinExpr out;
    for (int m = 0; m < v.size; ++m) out += std::conj(a[m]) * centry(v, m);
    return out;
}

LinExpr ConicProgram::trace_expr(HermitianVarHandle w, const Eigen::MatrixXcd& a) const {
    if (a.rows() != w.complex_dim || a.cols() != w.complex_dim)
        throw std::invalid_argument("trace_expr dimension mismatch");
    // Tr(A W) = 0.5 * <svec(T(A)), svec(T(W))>
    const Eigen::VectorXd coeffs = 0.5 * svec(embed_hermitian(a));
    LinExpr e;
    for (int i = 0; i < w.svec_size; ++i) {
        if (coeffs[i] != 0.0) e += LinExpr::term(w.offset + i, coeffs[i]);
    }
    return e;
}

void ConicProgram::add_eq(const LinExpr& e) { equalities_.push_back(e); }

void ConicProgram::add_nonneg(const LinExpr& e) {
    cones_.push_back({ConeKind::NonNeg, {e}, 0});
}

void ConicProgram::add_soc(const std::vector<LinExpr>& rows) {
    if (rows.size() < 2) throw std::invalid_argument("soc needs >= 2 rows");
    cones_.push_back({ConeKind::Soc, rows, 0});
}

void ConicProgram::add_rotated_soc(const LinExpr& x, const LinExpr& y,
                                   const std::vector<LinExpr>& z) {
    if (z.empty()) throw std::invalid_argument("rotated soc needs >= 1 z row");
    ConeConstraint cc;
    cc.kind = ConeKind::RotatedSoc;
    cc.rows.push_back(x);
    cc.rows.push_back(y);
    for (const auto& e : z) cc.rows.push_back(e);
    cones_.push_back(std::move(cc));
}

void ConicProgram::add_exponential_cone(const LinExpr& t, const LinExpr& x) {
    cones_.push_back({ConeKind::Exp, {t, LinExpr(1.0), x}, 0});
}

void ConicProgram::minimize(const LinExpr& objective) { objective_ = objective; }

Eigen::VectorXcd ConicProgram::value(ComplexVecHandle v, const ConicSolution& sol) const {
    Eigen::VectorXcd out(v.size);
    for (int m = 0; m < v.size; ++m)
        out[m] = {sol.x[v.offset + 2 * m], sol.x[v.offset + 2 * m + 1]};
    return out;
}

Eigen::MatrixXcd ConicProgram::value(HermitianVarHandle w, const ConicSolution& sol) const {
    const Eigen::VectorXd sv = sol.x.segment(w.offset, w.svec_size);
    return extract_hermitian(smat(sv, w.embed_dim));
}

void ConicProgram::dump(std::ostream& os) const {
    auto put_expr = [&os](const LinExpr& e) {
        os << e.constant();
        for (const auto& [i, c] : e.coeffs()) os << " + " << c << "*x" << i;
    };
    os << "vars " << num_vars_ << "\n";
    os << "minimize ";
    put_expr(objective_);
    os << "\n";
    for (const auto& e : equalities_) {
        os << "eq0 ";
        put_expr(e);
        os << "\n";
    }
    for (const auto& cc : cones_) {
        switch (cc.kind) {
            case ConeKind::NonNeg: os << "nonneg"; break;
            case ConeKind::Soc: os << "soc"; break;
            case ConeKind::RotatedSoc: os << "rsoc"; break;
            case ConeKind::Psd: os << "psd " << cc.psd_n; break;
            case ConeKind::Exp: os << "exp"; break;
        }
        os << "\n";
        for (const auto& r : cc.rows) {
            os << "  ";
            put_expr(r);
            os << "\n";
        }
    }
}

}  // namespace starsr::conic
