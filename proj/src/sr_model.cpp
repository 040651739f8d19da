#include "starsr/sr_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace starsr {

namespace {
double log2_1p(double x) { return std::log1p(x) / std::numbers::ln2; }

// Half-sum of the two BPSK branches: the expectation over c of
// log2(1 + |d + r^H v c|^2 / denom).
double two_branch_rate(std::complex<double> direct, std::complex<double> composite,
                       double denom) {
    const double plus = std::norm(direct + composite);
    const double minus = std::norm(direct - composite);
    return 0.5 * log2_1p(plus / denom) + 0.5 * log2_1p(minus / denom);
}
}  // namespace

void QosSpec::validate(int num_pus) const {
    if (rate_min < 0.0 || sinr_min < 0.0)
        throw std::invalid_argument("QoS targets must be nonnegative");
    if (symbol_ratio < 1.0) throw std::invalid_argument("symbol ratio L must be >= 1");
    if (sic_mu < 0.0 || sic_mu > 1.0)
        throw std::invalid_argument("SIC coefficient mu must lie in [0, 1]");
    if (sic_mu_k.size() && sic_mu_k.size() != num_pus)
        throw std::invalid_argument("per-user mu vector must have K entries");
    for (int i = 0; i < sic_mu_k.size(); ++i)
        if (sic_mu_k[i] < 0.0 || sic_mu_k[i] > 1.0)
            throw std::invalid_argument("per-user mu must lie in [0, 1]");
    if (noise_pu_w <= 0.0 || noise_su_w <= 0.0)
        throw std::invalid_argument("noise powers must be positive");
}

bool SicOrder::valid(int num_pus) const {
    for (const auto& ord : per_su) {
        if (static_cast<int>(ord.size()) != num_pus) return false;
        std::vector<bool> seen(num_pus, false);
        for (int v : ord) {
            if (v < 0 || v >= num_pus || seen[v]) return false;
            seen[v] = true;
        }
    }
    return true;
}

bool SicOrder::decoded_before(int q, int i, int k) const {
    const auto& ord = per_su.at(q);
    const auto pi = std::find(ord.begin(), ord.end(), i);
    const auto pk = std::find(ord.begin(), ord.end(), k);
    return pi < pk;
}

CompositeChannels effective_channels(const ChannelSet& ch, const Eigen::VectorXcd& w) {
    if (w.size() != ch.h_pu.rows())
        throw std::invalid_argument("beamformer dimension does not match channels");
    CompositeChannels out;
    const Eigen::VectorXcd fw = ch.f_bs_ris * w;  // M
    out.d_pu = ch.h_pu.adjoint() * w;
    out.d_su = ch.h_su.adjoint() * w;
    // r^H = g^H diag(Fw)  ->  r = conj(diag(Fw)) g = conj(Fw) .* g
    out.r_pu = ch.g_pu.array().colwise() * fw.conjugate().array();
    out.r_su = ch.g_su.array().colwise() * fw.conjugate().array();
    return out;
}

double rate_primary_broadcast(int k, const ChannelSet& ch, const StarCoefficients& sc,
                              const Eigen::VectorXcd& w, const QosSpec& qos) {
    const CompositeChannels cc = effective_channels(ch, w);
    const std::complex<double> rv = (cc.r_pu.col(k).adjoint() * sc.v_r)(0);
    return two_branch_rate(cc.d_pu[k], rv, qos.noise_pu_w);
}

double rate_secondary_broadcast(int q, const ChannelSet& ch, const StarCoefficients& sc,
                                const Eigen::VectorXcd& w, const QosSpec& qos) {
    const CompositeChannels cc = effective_channels(ch, w);
    const std::complex<double> rv = (cc.r_su.col(q).adjoint() * sc.v_t)(0);
    return two_branch_rate(cc.d_su[q], rv, qos.noise_su_w);
}

double sinr_secondary_broadcast(int q, const ChannelSet& ch, const StarCoefficients& sc,
                                const Eigen::VectorXcd& w, const QosSpec& qos) {
    const CompositeChannels cc = effective_channels(ch, w);
    const std::complex<double> rv = (cc.r_su.col(q).adjoint() * sc.v_t)(0);
    const double num = qos.symbol_ratio * std::norm(rv);
    const double den = qos.sic_mu * std::norm(cc.d_su[q]) + qos.noise_su_w;
    return num / den;
}

double rate_primary_unicast(int k, const ChannelSet& ch, const StarCoefficients& sc,
                            const Eigen::MatrixXcd& wk, const QosSpec& qos) {
    const int num_k = static_cast<int>(wk.cols());
    double interference = 0.0;
    std::complex<double> direct, composite;
    for (int i = 0; i < num_k; ++i) {
        const CompositeChannels cc = effective_channels(ch, wk.col(i));
        const std::complex<double> rv = (cc.r_pu.col(k).adjoint() * sc.v_r)(0);
        if (i == k) {
            direct = cc.d_pu[k];
            composite = rv;
        } else {
            interference += std::norm(cc.d_pu[k]) + std::norm(rv);
        }
    }
    return two_branch_rate(direct, composite, interference + qos.noise_pu_w);
}

double rate_sic_unicast(int q, int k, const ChannelSet& ch, const StarCoefficients& sc,
                        const Eigen::MatrixXcd& wk, const QosSpec& qos,
                        const SicOrder& order) {
    const int num_k = static_cast<int>(wk.cols());
    if (!order.valid(num_k)) throw std::invalid_argument("invalid SIC order");
    double interference = 0.0;
    std::complex<double> direct, composite;
    for (int i = 0; i < num_k; ++i) {
        const CompositeChannels cc = effective_channels(ch, wk.col(i));
        const std::complex<double> rv = (cc.r_su.col(q).adjoint() * sc.v_t)(0);
        if (i == k) {
            direct = cc.d_su[q];
            composite = rv;
        } else {
            const double mu_i = order.decoded_before(q, i, k)
                                    ? (qos.sic_mu_k.size() ? qos.sic_mu_k[i] : qos.sic_mu)
                                    : 1.0;
            interference += mu_i * std::norm(cc.d_su[q]) + std::norm(rv);
        }
    }
    return two_branch_rate(direct, composite, interference + qos.noise_su_w);
}

double sinr_secondary_unicast(int q, const ChannelSet& ch, const StarCoefficients& sc,
                              const Eigen::MatrixXcd& wk, const QosSpec& qos) {
    const int num_k = static_cast<int>(wk.cols());
    double num = 0.0, den = qos.noise_su_w;
    for (int i = 0; i < num_k; ++i) {
        const CompositeChannels cc = effective_channels(ch, wk.col(i));
        const std::complex<double> rv = (cc.r_su.col(q).adjoint() * sc.v_t)(0);
        num += std::norm(rv);
        const double mu_i = qos.sic_mu_k.size() ? qos.sic_mu_k[i] : qos.sic_mu;
        den += mu_i * std::norm(cc.d_su[q]);
    }
    return qos.symbol_ratio * num / den;
}

std::string FeasibilityReport::to_text() const {
    std::ostringstream os;
    for (const auto& c : constraints) {
        os << c.id << " required=" << c.required << " achieved=" << c.achieved
           << " margin=" << c.margin << " pass=" << (c.pass ? "yes" : "no") << "\n";
    }
    os << "overall " << (pass ? "pass" : "fail") << "\n";
    return os.str();
}

FeasibilityReport check_feasibility(const ChannelSet& ch, const StarCoefficients& sc,
                                    const Beamformer& bf, const QosSpec& qos,
                                    const SicOrder& order, const FeasibilityOptions& opts) {
    FeasibilityReport rep;
    const int num_k = static_cast<int>(ch.h_pu.cols());
    const int num_q = static_cast<int>(ch.h_su.cols());
    auto add = [&rep](const std::string& id, double req, double got, double margin,
                      double tol) {
        ConstraintMargin c{id, req, got, margin, margin >= -tol};
        rep.constraints.push_back(c);
    };

    if (bf.mode == BeamformerMode::Broadcast) {
        for (int k = 0; k < num_k; ++k) {
            const double r = rate_primary_broadcast(k, ch, sc, bf.w, qos);
            add("C1[k=" + std::to_string(k) + "]", qos.rate_min, r, r - qos.rate_min,
                opts.rate_tol);
        }
        for (int q = 0; q < num_q; ++q) {
            const double r = rate_secondary_broadcast(q, ch, sc, bf.w, qos);
            add("C2[q=" + std::to_string(q) + "]", qos.rate_min, r, r - qos.rate_min,
                opts.rate_tol);
            const double g = sinr_secondary_broadcast(q, ch, sc, bf.w, qos);
            add("C3[q=" + std::to_string(q) + "]", qos.sinr_min, g, g - qos.sinr_min,
                opts.sinr_rel_tol * qos.sinr_min);
        }
    } else {
        for (int k = 0; k < num_k; ++k) {
            const double r = rate_primary_unicast(k, ch, sc, bf.wk, qos);
            add("C13[k=" + std::to_string(k) + "]", qos.rate_min, r, r - qos.rate_min,
                opts.rate_tol);
        }
        for (int q = 0; q < num_q; ++q) {
            for (int k = 0; k < num_k; ++k) {
                const double r = rate_sic_unicast(q, k, ch, sc, bf.wk, qos, order);
                add("C14[q=" + std::to_string(q) + ",k=" + std::to_string(k) + "]",
                    qos.rate_min, r, r - qos.rate_min, opts.rate_tol);
            }
            const double g = sinr_secondary_unicast(q, ch, sc, bf.wk, qos);
            add("C15[q=" + std::to_string(q) + "]", qos.sinr_min, g, g - qos.sinr_min,
                opts.sinr_rel_tol * qos.sinr_min);
        }
    }

    const Eigen::VectorXd br = sc.beta_r(), bt = sc.beta_t();
    const int m = static_cast<int>(br.size());
    if (opts.amplitude_cap_only) {
        for (int i = 0; i < m; ++i) {
            const double cap = std::max(br[i], bt[i]);
            add("C|v|[m=" + std::to_string(i) + "]", 1.0, cap, 1.0 - cap, opts.star_tol);
        }
    } else {
        for (int i = 0; i < m; ++i) {
            const double hi = std::max(br[i], bt[i]);
            add("C4[m=" + std::to_string(i) + "]", 1.0, hi, 1.0 - hi, opts.star_tol);
        }
        if (opts.check_unit_split) {
            for (int i = 0; i < m; ++i) {
                const double s = br[i] + bt[i];
                add("C6[m=" + std::to_string(i) + "]", 1.0, s, -std::abs(s - 1.0),
                    opts.star_tol);
            }
        }
        if (opts.check_phase_corr) {
            const Eigen::VectorXd tr = sc.theta_r(), tt = sc.theta_t();
            for (int i = 0; i < m; ++i) {
                const double c = std::cos(tr[i] - tt[i]);
                add("C7[m=" + std::to_string(i) + "]", 0.0, c, -std::abs(c), opts.phase_tol);
            }
        }
    }

    rep.pass = std::all_of(rep.constraints.begin(), rep.constraints.end(),
                           [](const ConstraintMargin& c) { return c.pass; });
    return rep;
}

SicOrder sic_order_by_gain(const ChannelSet& ch, const StarCoefficients& sc,
                           const Eigen::MatrixXcd& wk) {
    const int num_k = static_cast<int>(wk.cols());
    const int num_q = static_cast<int>(ch.h_su.cols());
    SicOrder order;
    order.per_su.resize(num_q);
    for (int q = 0; q < num_q; ++q) {
        std::vector<double> gain(num_k);
        for (int i = 0; i < num_k; ++i) {
            const CompositeChannels cc = effective_channels(ch, wk.col(i));
            const std::complex<double> rv = (cc.r_su.col(q).adjoint() * sc.v_t)(0);
            gain[i] = std::norm(cc.d_su[q]) + std::norm(rv);
        }
        std::vector<int> idx(num_k);
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(),
                         [&gain](int a, int b) { return gain[a] > gain[b]; });
        order.per_su[q] = idx;
    }
    return order;
}

}  // namespace starsr
