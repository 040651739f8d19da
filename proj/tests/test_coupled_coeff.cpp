#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numbers>

#include "grid_oracle.hpp"
#include "starsr/coupled_coeff.hpp"
#include "starsr/rng.hpp"

using namespace starsr;
using cd = std::complex<double>;

namespace {
Eigen::VectorXcd random_cvec(int m, RandomStream& rng, double scale = 1.0) {
    Eigen::VectorXcd v(m);
    for (int i = 0; i < m; ++i) v[i] = scale * rng.complex_gaussian();
    return v;
}
}  // namespace

TEST_CASE("optimal phases: candidate selection") {
    SUBCASE("psi_r = 1, psi_t = 0: both branches tie, first kept") {
        Eigen::VectorXcd pr = Eigen::VectorXcd::Constant(1, cd(1.0, 0.0));
        Eigen::VectorXcd pt = Eigen::VectorXcd::Zero(1);
        Eigen::VectorXd theta, branch;
        optimal_phases(pr, pt, theta, branch);
        CHECK(theta[0] == doctest::Approx(std::numbers::pi));
        CHECK(branch[0] == 1.0);
        // objective at the choice equals -|psi_r + j psi_t| = -1
        const double obj = (pr[0] * std::polar(1.0, theta[0])).real();
        CHECK(obj == doctest::Approx(-1.0));
    }
    SUBCASE("degenerate zero input gives the canonical pair") {
        Eigen::VectorXcd z = Eigen::VectorXcd::Zero(1);
        Eigen::VectorXd theta, branch;
        optimal_phases(z, z, theta, branch);
        CHECK(theta[0] == 0.0);
        CHECK(branch[0] == 1.0);
    }
    SUBCASE("phase difference is a quarter turn by construction") {
        RandomStream rng(2);
        for (int rep = 0; rep < 50; ++rep) {
            Eigen::VectorXcd pr = random_cvec(1, rng), pt = random_cvec(1, rng);
            Eigen::VectorXd theta, branch;
            optimal_phases(pr, pt, theta, branch);
            CHECK((branch[0] == 1.0 || branch[0] == -1.0));
            const double diff =
                std::fabs(branch[0] * std::numbers::pi / 2.0);
            CHECK(diff == doctest::Approx(std::numbers::pi / 2.0));
        }
    }
    SUBCASE("chosen branch beats or ties the other") {
        RandomStream rng(3);
        for (int rep = 0; rep < 100; ++rep) {
            Eigen::VectorXcd pr = random_cvec(1, rng), pt = random_cvec(1, rng);
            Eigen::VectorXd theta, branch;
            optimal_phases(pr, pt, theta, branch);
            const cd j(0.0, 1.0);
            const double chosen = -std::abs(pr[0] + branch[0] * j * pt[0]);
            const double other = -std::abs(pr[0] - branch[0] * j * pt[0]);
            CHECK(chosen <= other + 1e-12);
        }
    }
}

TEST_CASE("optimal amplitudes: piecewise branches") {
    auto one = [](double ar, double at) {
        Eigen::VectorXcd r = Eigen::VectorXcd::Constant(1, cd(ar, 0.0));
        Eigen::VectorXcd t = Eigen::VectorXcd::Constant(1, cd(at, 0.0));
        return optimal_amplitudes(r, t)[0];
    };
    // xi in [-pi/2, pi/4) -> omega = 0 -> (beta_r, beta_t) = (0, 1)
    CHECK(one(1.0, 0.0) == 0.0);
    // xi = pi/2 -> else branch -> omega = pi/2 -> (1, 0)
    CHECK(one(0.0, 1.0) == doctest::Approx(1.0));
    // xi = -3pi/4 -> omega = pi/4 -> (0.5, 0.5)
    CHECK(one(-1.0, -1.0) == doctest::Approx(0.5));
    // degenerate -> omega = 0
    CHECK(one(0.0, 0.0) == 0.0);
}

TEST_CASE("amplitude split sums to one bitwise") {
    RandomStream rng(5);
    for (int rep = 0; rep < 200; ++rep) {
        Eigen::VectorXcd pr = random_cvec(1, rng), pt = random_cvec(1, rng);
        const Eigen::VectorXd br = optimal_amplitudes(pr, pt);
        AuxCoefficients aux;
        aux.beta_r = br;
        aux.theta_r = Eigen::VectorXd::Zero(1);
        aux.branch = Eigen::VectorXd::Ones(1);
        CHECK(aux.beta_r[0] + aux.beta_t()[0] == 1.0);
    }
}

TEST_CASE("solve_aux canonical degenerate result") {
    Eigen::VectorXcd z = Eigen::VectorXcd::Zero(3);
    const AuxCoefficients aux = solve_aux(z, z);
    for (int i = 0; i < 3; ++i) {
        CHECK(aux.beta_r[i] == 0.0);
        CHECK(aux.beta_t()[i] == 1.0);
        CHECK(aux.theta_r[i] == 0.0);
        CHECK(aux.theta_t()[i] == doctest::Approx(std::numbers::pi / 2.0));
    }
}

TEST_CASE("solve_aux matches the M=1 grid oracle") {
    RandomStream rng(11);
    for (int rep = 0; rep < 40; ++rep) {
        const cd phi_r = rng.complex_gaussian() * 2.0;
        const cd phi_t = rng.complex_gaussian() * 2.0;
        Eigen::VectorXcd pr = Eigen::VectorXcd::Constant(1, phi_r);
        Eigen::VectorXcd pt = Eigen::VectorXcd::Constant(1, phi_t);
        const AuxCoefficients aux = solve_aux(pr, pt);
        const double obj = aux_objective(pr, pt, aux);
        const GridOracleResult grid = aux_grid_oracle(phi_r, phi_t, 2048, 256);
        const double tol = aux_grid_tolerance(phi_r, phi_t, 2048, 256);
        CHECK(obj <= grid.objective + 1e-12);   // never worse than any grid point
        CHECK(obj >= grid.objective - tol);     // and the grid brackets it
    }
}

TEST_CASE("alternation is monotone nonincreasing") {
    RandomStream rng(17);
    for (int rep = 0; rep < 100; ++rep) {
        const int m = 4;
        const Eigen::VectorXcd phi_r = random_cvec(m, rng);
        const Eigen::VectorXcd phi_t = random_cvec(m, rng);
        AuxCoefficients aux;
        aux.phase_coupled = true;
        aux.beta_r = Eigen::VectorXd::Constant(m, 0.5);
        aux.theta_r = Eigen::VectorXd::Zero(m);
        aux.branch = Eigen::VectorXd::Ones(m);
        double prev = aux_objective(phi_r, phi_t, aux);
        for (int round = 0; round < 6; ++round) {
            const Eigen::VectorXd amp_r = aux.beta_r.cwiseSqrt();
            const Eigen::VectorXd amp_t = aux.beta_t().cwiseSqrt();
            Eigen::VectorXcd psi_r = amp_r.cwiseProduct(phi_r.conjugate().eval());
            Eigen::VectorXcd psi_t = amp_t.cwiseProduct(phi_t.conjugate().eval());
            optimal_phases(psi_r, psi_t, aux.theta_r, aux.branch);
            const double after_phase = aux_objective(phi_r, phi_t, aux);
            CHECK(after_phase <= prev + 1e-12);
            Eigen::VectorXcd br(m), bt(m);
            const Eigen::VectorXd tr = aux.theta_r, tt = aux.theta_t();
            for (int i = 0; i < m; ++i) {
                br[i] = std::polar(1.0, tr[i]) * std::conj(phi_r[i]);
                bt[i] = std::polar(1.0, tt[i]) * std::conj(phi_t[i]);
            }
            aux.beta_r = optimal_amplitudes(br, bt);
            const double after_amp = aux_objective(phi_r, phi_t, aux);
            CHECK(after_amp <= after_phase + 1e-12);
            prev = after_amp;
        }
    }
}

TEST_CASE("fixed amplitude mode keeps the split at one half") {
    RandomStream rng(23);
    const Eigen::VectorXcd phi_r = random_cvec(8, rng);
    const Eigen::VectorXcd phi_t = random_cvec(8, rng);
    SolveAuxOptions opts;
    opts.fixed_amplitudes = true;
    opts.phase_coupled = false;
    const AuxCoefficients aux = solve_aux(phi_r, phi_t, opts);
    for (int i = 0; i < 8; ++i) {
        CHECK(aux.beta_r[i] == 0.5);
        CHECK(aux.beta_t()[i] == 0.5);
    }
    // each side's phase is individually optimal: contribution -amp*|phi|
    const double expect = -std::numbers::sqrt2 / 2.0 *
                          (phi_r.cwiseAbs().sum() + phi_t.cwiseAbs().sum());
    CHECK(aux_objective(phi_r, phi_t, aux) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("dual update arithmetic") {
    PddState st = PddState::init(1);
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(1), aux = Eigen::VectorXcd::Zero(1);

    SUBCASE("no violation leaves duals unchanged") {
        v[0] = cd(0.3, -0.2);
        aux[0] = v[0];
        update_duals(st, v, v, aux, aux);
        CHECK(st.lambda_r[0] == cd(0.0, 0.0));
    }
    SUBCASE("unit step") {
        st.rho = 1.0;
        aux[0] = cd(1.0, 0.0);
        update_duals(st, v, v, aux, aux);
        CHECK(st.lambda_r[0] == cd(1.0, 0.0));
    }
    SUBCASE("rho = 0.1 scales the step by ten") {
        st.rho = 0.1;
        st.lambda_r[0] = cd(0.5, 0.0);
        st.lambda_t[0] = cd(0.5, 0.0);
        aux[0] = cd(0.2, 0.0);
        update_duals(st, v, v, aux, aux);
        CHECK(st.lambda_r[0].real() == doctest::Approx(2.5));
    }
}

TEST_CASE("penalty update") {
    PddState st = PddState::init(1);
    st.rho = 1.0;
    st.shrink = 0.1;
    update_penalty(st);
    CHECK(st.rho == doctest::Approx(0.1));
    for (int i = 0; i < 20; ++i) update_penalty(st);
    CHECK(st.rho == doctest::Approx(std::pow(0.1, 21.0)));
    CHECK(st.rho > 0.0);
}

TEST_CASE("outer step branches") {
    SUBCASE("zero violation: dual no-op, eta zeroed, converged") {
        PddState st = PddState::init(1);
        Eigen::VectorXcd v = Eigen::VectorXcd::Constant(1, cd(0.5, 0.5));
        pdd_outer_step(st, v, v, v, v);
        CHECK(st.delta == 0.0);
        CHECK(st.eta == 0.0);
        CHECK(st.lambda_r[0] == cd(0.0, 0.0));
        CHECK(st.converged());
    }
    SUBCASE("delta below eta takes the dual step") {
        PddState st = PddState::init(1);
        st.eta = 10.0;
        Eigen::VectorXcd v = Eigen::VectorXcd::Zero(1);
        Eigen::VectorXcd aux = Eigen::VectorXcd::Constant(1, cd(5.0, 0.0));
        pdd_outer_step(st, v, v, aux, aux);
        CHECK(st.delta == doctest::Approx(5.0));
        CHECK(st.eta == doctest::Approx(4.5));
        CHECK(st.rho == doctest::Approx(1.0));
        CHECK(st.lambda_r[0].real() == doctest::Approx(5.0));
    }
    SUBCASE("delta above eta shrinks the penalty") {
        PddState st = PddState::init(1);
        st.eta = 10.0;
        Eigen::VectorXcd v = Eigen::VectorXcd::Zero(1);
        Eigen::VectorXcd aux = Eigen::VectorXcd::Constant(1, cd(20.0, 0.0));
        pdd_outer_step(st, v, v, aux, aux);
        CHECK(st.delta == doctest::Approx(20.0));
        CHECK(st.eta == doctest::Approx(18.0));
        CHECK(st.rho == doctest::Approx(0.1));
        CHECK(st.lambda_r[0] == cd(0.0, 0.0));
    }
}
