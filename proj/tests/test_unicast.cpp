#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numbers>

#include "starsr/unicast_solver.hpp"

using namespace starsr;
using cd = std::complex<double>;

namespace {

ScenarioConfig small_config(std::uint64_t seed, int k = 2) {
    ScenarioConfig cfg;
    cfg.num_bs_antennas = 2;
    cfg.num_ris_elements = 4;
    cfg.num_pus = k;
    cfg.num_sus = 1;
    cfg.seed = seed;
    return cfg;
}

QosSpec small_qos() {
    QosSpec qos;
    qos.rate_min = 0.4;
    qos.sinr_min = 10.0;
    qos.symbol_ratio = 50.0;
    qos.sic_mu = 0.01;
    return qos;
}

StarCoefficients coupled_coeffs(int m, RandomStream& rng) {
    StarCoefficients sc;
    sc.v_r.resize(m);
    sc.v_t.resize(m);
    for (int i = 0; i < m; ++i) {
        const double beta = rng.uniform();
        const double tr = rng.uniform(0.0, 2.0 * std::numbers::pi);
        sc.v_r[i] = std::polar(std::sqrt(beta), tr);
        sc.v_t[i] = std::polar(std::sqrt(1.0 - beta), tr + std::numbers::pi / 2.0);
    }
    return sc;
}

SicOrder identity_order(int q, int k) {
    SicOrder o;
    o.per_su.assign(q, std::vector<int>(k));
    for (auto& ord : o.per_su)
        for (int i = 0; i < k; ++i) ord[i] = i;
    return o;
}

Eigen::MatrixXcd random_wk(int n, int k, RandomStream& rng, double scale) {
    Eigen::MatrixXcd w(n, k);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < k; ++j) w(i, j) = scale * rng.complex_gaussian();
    return w;
}

}  // namespace

TEST_CASE("verify_rank_k") {
    RandomStream rng(3);
    std::vector<Eigen::MatrixXcd> blocks;
    for (int k = 0; k < 3; ++k) {
        Eigen::VectorXcd w(3);
        for (int i = 0; i < 3; ++i) w[i] = rng.complex_gaussian();
        blocks.push_back(w * w.adjoint());
    }
    CHECK(verify_rank_k(blocks).pass);
    blocks[1] = Eigen::MatrixXcd::Identity(3, 3);
    const RankKCheck rc = verify_rank_k(blocks);
    CHECK(!rc.pass);
    CHECK(rc.ratios[1] == doctest::Approx(1.0));
}

TEST_CASE("blockwise trace forms equal the stacked-matrix transcription") {
    RandomStream rng(17);
    const ScenarioConfig cfg = small_config(7, 3);
    const ChannelSet ch = generate_scenario(cfg);
    const StarCoefficients sc = coupled_coeffs(cfg.num_ris_elements, rng);
    const QosSpec qos = small_qos();
    const int n = cfg.num_bs_antennas, k = cfg.num_pus;
    const SicOrder order = identity_order(1, k);

    std::vector<Eigen::MatrixXcd> w_exp(k);
    for (int i = 0; i < k; ++i) {
        Eigen::VectorXcd w(n);
        for (int a = 0; a < n; ++a) w[a] = 1e-3 * rng.complex_gaussian();
        w_exp[i] = w * w.adjoint();
    }
    const UnicastBeamForms forms = build_unicast_beam_forms(ch, sc, qos, order, w_exp);

    // Independent stacked-matrix construction: d_pk and r_pk as KN vectors
    // with the k-th slot occupied, interference via the repeated-block-diag
    // minus own-block form.
    Eigen::MatrixXcd w_stacked = Eigen::MatrixXcd::Zero(k * n, k * n);
    for (int i = 0; i < k; ++i) w_stacked.block(i * n, i * n, n, n) = w_exp[i];

    for (int kk = 0; kk < k; ++kk) {
        const Eigen::VectorXcd u =
            ch.f_bs_ris.adjoint() * sc.v_r.conjugate().cwiseProduct(ch.g_pu.col(kk));
        Eigen::VectorXcd d = Eigen::VectorXcd::Zero(k * n), r = Eigen::VectorXcd::Zero(k * n);
        d.segment(kk * n, n) = ch.h_pu.col(kk);
        r.segment(kk * n, n) = u;
        Eigen::MatrixXcd dk = Eigen::MatrixXcd::Zero(k * n, k * n);
        Eigen::MatrixXcd rk = Eigen::MatrixXcd::Zero(k * n, k * n);
        const Eigen::MatrixXcd hh = ch.h_pu.col(kk) * ch.h_pu.col(kk).adjoint();
        const Eigen::MatrixXcd uu = u * u.adjoint();
        for (int i = 0; i < k; ++i) {
            dk.block(i * n, i * n, n, n) = hh;
            rk.block(i * n, i * n, n, n) = uu;
        }
        dk.block(kk * n, kk * n, n, n) -= hh;
        rk.block(kk * n, kk * n, n, n) -= uu;
        const Eigen::MatrixXcd b3 = dk + rk;
        const Eigen::MatrixXcd b1 = (d + r) * (d + r).adjoint() + b3;
        const Eigen::MatrixXcd b2 = (d - r) * (d - r).adjoint() + b3;

        CHECK(forms.pu[kk].b1.eval(w_exp) ==
              doctest::Approx((b1 * w_stacked).trace().real()).epsilon(1e-12));
        CHECK(forms.pu[kk].b2.eval(w_exp) ==
              doctest::Approx((b2 * w_stacked).trace().real()).epsilon(1e-12));
        CHECK(forms.pu[kk].b3.eval(w_exp) ==
              doctest::Approx((b3 * w_stacked).trace().real()).epsilon(1e-12));
    }
}

TEST_CASE("beamforming bound tightness at the expansion point") {
    RandomStream rng(29);
    const ScenarioConfig cfg = small_config(9, 3);
    const ChannelSet ch = generate_scenario(cfg);
    const QosSpec qos = small_qos();
    const int n = cfg.num_bs_antennas, k = cfg.num_pus;
    const SicOrder order = identity_order(1, k);

    for (int rep = 0; rep < 20; ++rep) {
        const StarCoefficients sc = coupled_coeffs(cfg.num_ris_elements, rng);
        const Eigen::MatrixXcd wk = random_wk(n, k, rng, 1e-3);
        std::vector<Eigen::MatrixXcd> w_exp(k);
        for (int i = 0; i < k; ++i) w_exp[i] = wk.col(i) * wk.col(i).adjoint();
        const UnicastBeamForms forms =
            build_unicast_beam_forms(ch, sc, qos, order, w_exp);

        for (int kk = 0; kk < k; ++kk) {
            CHECK(forms.pu[kk].value(w_exp) ==
                  doctest::Approx(rate_primary_unicast(kk, ch, sc, wk, qos))
                      .epsilon(1e-9));
            CHECK(forms.su[0][kk].value(w_exp) ==
                  doctest::Approx(rate_sic_unicast(0, kk, ch, sc, wk, qos, order))
                      .epsilon(1e-9));
        }
        // C15 linear identity: Tr((L R - gamma H) W) - sigma^2 gamma has the
        // sign of (sinr - gamma_min).
        const double lhs = forms.sinr[0].eval(w_exp) - forms.sinr_rhs;
        const double sinr = sinr_secondary_unicast(0, ch, sc, wk, qos);
        CHECK((lhs >= 0) == (sinr >= qos.sinr_min));
    }
}

TEST_CASE("coefficient bound tightness at the expansion point (quotient forms)") {
    RandomStream rng(31);
    const ScenarioConfig cfg = small_config(11, 3);
    const ChannelSet ch = generate_scenario(cfg);
    const QosSpec qos = small_qos();
    const int n = cfg.num_bs_antennas, k = cfg.num_pus;
    const SicOrder order = identity_order(1, k);

    for (int rep = 0; rep < 20; ++rep) {
        const StarCoefficients sc = coupled_coeffs(cfg.num_ris_elements, rng);
        const Eigen::MatrixXcd wk = random_wk(n, k, rng, 1e-3);
        const UnicastCoeffForms forms =
            build_unicast_coeff_forms(ch, wk, qos, order, sc.v_r, sc.v_t);

        for (int kk = 0; kk < k; ++kk) {
            CHECK(forms.pu[kk].value(sc.v_r) ==
                  doctest::Approx(rate_primary_unicast(kk, ch, sc, wk, qos))
                      .epsilon(1e-9));
            CHECK(forms.su[0][kk].value(sc.v_t) ==
                  doctest::Approx(rate_sic_unicast(0, kk, ch, sc, wk, qos, order))
                      .epsilon(1e-9));
        }
        CHECK(forms.sinr[0].eval(sc.v_t) ==
              doctest::Approx(sinr_secondary_unicast(0, ch, sc, wk, qos)).epsilon(1e-9));

        // lower-bound property at random other coefficients
        const StarCoefficients other = coupled_coeffs(cfg.num_ris_elements, rng);
        CHECK(forms.pu[0].value(other.v_r) <=
              rate_primary_unicast(0, ch, {other.v_r, sc.v_t}, wk, qos) + 1e-9);
        CHECK(forms.su[0][0].value(other.v_t) <=
              rate_sic_unicast(0, 0, ch, {sc.v_r, other.v_t}, wk, qos, order) + 1e-9);
        CHECK(forms.sinr[0].eval(other.v_t) <=
              sinr_secondary_unicast(0, ch, {sc.v_r, other.v_t}, wk, qos) + 1e-9);
    }
}

TEST_CASE("unicast beamforming at K=1 matches the broadcast SDP") {
    const ScenarioConfig cfg = small_config(21, 1);
    const ChannelSet ch = generate_scenario(cfg);
    RandomStream rng(5);
    const StarCoefficients sc = coupled_coeffs(cfg.num_ris_elements, rng);
    QosSpec qos = small_qos();
    qos.rate_min = 1.0;

    const BeamformingResult broadcast = solve_beamforming(ch, sc, qos);
    REQUIRE(broadcast.status == conic::SolveStatus::Optimal);
    const UnicastBeamformingResult unicast =
        solve_beamforming_unicast(ch, sc, qos, identity_order(1, 1), {}, {});
    REQUIRE(unicast.status == conic::SolveStatus::Optimal);
    CHECK(unicast.power_w ==
          doctest::Approx(broadcast.power_w).epsilon(1e-5));
    CHECK(unicast.rank_ratios[0] < 1e-4);
}

TEST_CASE("unicast beamforming output is feasible and per-block rank one") {
    const ScenarioConfig cfg = small_config(23, 2);
    const ChannelSet ch = generate_scenario(cfg);
    RandomStream rng(6);
    const StarCoefficients sc = coupled_coeffs(cfg.num_ris_elements, rng);
    const QosSpec qos = small_qos();
    const SicOrder order = identity_order(1, 2);

    const UnicastBeamformingResult bf =
        solve_beamforming_unicast(ch, sc, qos, order, {}, {});
    REQUIRE(bf.status == conic::SolveStatus::Optimal);
    for (double r : bf.rank_ratios) CHECK(r < 1e-4);

    Beamformer bmf;
    bmf.mode = BeamformerMode::Unicast;
    bmf.wk = bf.wk;
    FeasibilityOptions fo;
    fo.check_phase_corr = false;
    fo.check_unit_split = false;
    const FeasibilityReport rep = check_feasibility(ch, sc, bmf, qos, order, fo);
    for (const auto& c : rep.constraints) {
        INFO(c.id, " margin ", c.margin);
        CHECK(c.pass);
    }
}

TEST_CASE("solve_p4 on a small scenario") {
    const ScenarioConfig cfg = small_config(1, 2);
    const ChannelSet ch = generate_scenario(cfg);
    const QosSpec qos = small_qos();
    BcdOptions opts;
    opts.seed = 1;

    const UnicastSolution sol = solve_p4(ch, qos, opts);
    REQUIRE(sol.feasible);
    CHECK(sol.power_w == doctest::Approx(sol.wk.squaredNorm()).epsilon(1e-12));
    CHECK(sol.report.pass);
    CHECK(sol.order.valid(2));

    SUBCASE("power trace nonincreasing within inner passes") {
        double prev = std::numeric_limits<double>::infinity();
        int prev_outer = -1;
        for (const auto& row : sol.trace) {
            if (row.stage != "beamforming") continue;
            if (row.outer != prev_outer) {
                prev = std::numeric_limits<double>::infinity();
                prev_outer = row.outer;
            }
            CHECK(row.power_w <= prev * (1.0 + 1e-6));
            prev = row.power_w;
        }
    }
    SUBCASE("per-block rank ratios stay small") {
        for (double r : sol.rank_ratios) CHECK(r < 1e-4);
    }
    SUBCASE("deterministic rerun") {
        const UnicastSolution again = solve_p4(ch, qos, opts);
        CHECK(again.power_w == sol.power_w);
    }
    SUBCASE("exact final rates match the report") {
        for (int k = 0; k < 2; ++k) CHECK(sol.pu_rates[k] >= qos.rate_min - 1e-6);
    }
}

TEST_CASE("K=1 pipelines agree end to end") {
    const ScenarioConfig cfg = small_config(41, 1);
    const ChannelSet ch = generate_scenario(cfg);
    QosSpec qos = small_qos();
    qos.rate_min = 1.0;
    qos.sic_mu_k = Eigen::VectorXd::Constant(1, qos.sic_mu);
    BcdOptions opts;
    opts.seed = 4;

    const BroadcastSolution b = solve_p1(ch, qos, opts);
    const UnicastSolution u = solve_p4(ch, qos, opts);
    REQUIRE(b.feasible);
    REQUIRE(u.feasible);
    CHECK(u.power_w == doctest::Approx(b.power_w).epsilon(1e-4));
}
