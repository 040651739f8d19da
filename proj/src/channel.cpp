#include "starsr/channel.hpp"

#include <numbers>
#include <stdexcept>

namespace starsr {

namespace {
constexpr double kSpeedOfLight = 299792458.0;

Vec2 draw_in_disk(const Vec2& center, double radius, RandomStream& rng) {
    const double r = radius * std::sqrt(rng.uniform());
    const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    return {center.x + r * std::cos(phi), center.y + r * std::sin(phi)};
}

double angle_of(const Vec2& from, const Vec2& to) {
    return std::atan2(to.y - from.y, to.x - from.x);
}
}  // namespace

double ScenarioConfig::wavelength() const { return kSpeedOfLight / carrier_hz; }

void ScenarioConfig::validate() const {
    if (num_bs_antennas < 1 || num_ris_elements < 1 || num_pus < 1 || num_sus < 1)
        throw std::invalid_argument("N, M, K, Q must all be >= 1");
    if (carrier_hz <= 0.0) throw std::invalid_argument("carrier frequency must be positive");
    if (pl_exp_direct <= 0.0 || pl_exp_ris_user <= 0.0 || pl_exp_bs_ris <= 0.0)
        throw std::invalid_argument("path-loss exponents must be positive");
    if (noise_pu_w <= 0.0 || noise_su_w <= 0.0)
        throw std::invalid_argument("noise powers must be positive");
    if (pu_radius < 0.0 || su_radius < 0.0)
        throw std::invalid_argument("cluster radii must be nonnegative");
    if (rician_bs_ris < 0.0 || rician_ris_pu < 0.0 || rician_ris_su < 0.0)
        throw std::invalid_argument("Rician factors must be nonnegative");
}

double path_loss(double dist_m, double exponent, double wavelength_m) {
    if (dist_m <= 0.0) throw std::domain_error("path_loss: distance must be positive");
    const double a = wavelength_m / (4.0 * std::numbers::pi);
    return a * a * std::pow(dist_m, -exponent);
}

Eigen::VectorXcd steering_vector(int length, double angle_rad) {
    Eigen::VectorXcd v(length);
    const double step = std::numbers::pi * std::sin(angle_rad);
    for (int i = 0; i < length; ++i)
        v[i] = std::polar(1.0, step * static_cast<double>(i));
    return v;
}

Eigen::MatrixXcd rician_channel(int dim_out, int dim_in, double gain,
                                double rician_factor, double aoa_rad, double aod_rad,
                                RandomStream& rng) {
    if (gain <= 0.0) throw std::domain_error("rician_channel: gain must be positive");
    if (rician_factor < 0.0)
        throw std::domain_error("rician_channel: Rician factor must be nonnegative");
    const Eigen::MatrixXcd los =
        steering_vector(dim_out, aoa_rad) * steering_vector(dim_in, aod_rad).adjoint();
    if (rician_factor >= 1e12) return std::sqrt(gain) * los;
    Eigen::MatrixXcd nlos(dim_out, dim_in);
    for (int i = 0; i < dim_out; ++i)
        for (int j = 0; j < dim_in; ++j) nlos(i, j) = rng.complex_gaussian();
    const double k = rician_factor;
    return std::sqrt(gain * k / (k + 1.0)) * los + std::sqrt(gain / (k + 1.0)) * nlos;
}

ChannelSet generate_scenario(const ScenarioConfig& cfg) {
    cfg.validate();
    RandomStream rng(cfg.seed);
    const int n = cfg.num_bs_antennas, m = cfg.num_ris_elements;
    const int k = cfg.num_pus, q = cfg.num_sus;
    const double lambda = cfg.wavelength();

    // Draw order is part of the reproducibility contract:
    // PU positions, SU positions, h_pu, h_su, F, g_pu, g_su.
    std::vector<Vec2> pu_pos(k), su_pos(q);
    for (int i = 0; i < k; ++i) pu_pos[i] = draw_in_disk(cfg.pu_center, cfg.pu_radius, rng);
    for (int i = 0; i < q; ++i) su_pos[i] = draw_in_disk(cfg.su_center, cfg.su_radius, rng);

    ChannelSet ch;
    ch.h_pu.resize(n, k);
    for (int i = 0; i < k; ++i) {
        const double gain =
            path_loss(distance(cfg.bs_pos, pu_pos[i]), cfg.pl_exp_direct, lambda);
        for (int a = 0; a < n; ++a) ch.h_pu(a, i) = std::sqrt(gain) * rng.complex_gaussian();
    }
    ch.h_su.resize(n, q);
    for (int i = 0; i < q; ++i) {
        const double gain =
            path_loss(distance(cfg.bs_pos, su_pos[i]), cfg.pl_exp_direct, lambda);
        for (int a = 0; a < n; ++a) ch.h_su(a, i) = std::sqrt(gain) * rng.complex_gaussian();
    }

    const double gain_f =
        path_loss(distance(cfg.bs_pos, cfg.ris_pos), cfg.pl_exp_bs_ris, lambda);
    ch.f_bs_ris = rician_channel(m, n, gain_f, cfg.rician_bs_ris,
                                 angle_of(cfg.ris_pos, cfg.bs_pos),
                                 angle_of(cfg.bs_pos, cfg.ris_pos), rng);

    // RIS-side departure angles follow the RIS -> cluster-center lines; the
    // per-user distance still comes from the drawn position.
    const double aod_pu = angle_of(cfg.ris_pos, cfg.pu_center);
    const double aod_su = angle_of(cfg.ris_pos, cfg.su_center);
    ch.g_pu.resize(m, k);
    for (int i = 0; i < k; ++i) {
        const double gain =
            path_loss(distance(cfg.ris_pos, pu_pos[i]), cfg.pl_exp_ris_user, lambda);
        ch.g_pu.col(i) =
            rician_channel(m, 1, gain, cfg.rician_ris_pu, aod_pu, 0.0, rng).col(0);
    }
    ch.g_su.resize(m, q);
    for (int i = 0; i < q; ++i) {
        const double gain =
            path_loss(distance(cfg.ris_pos, su_pos[i]), cfg.pl_exp_ris_user, lambda);
        ch.g_su.col(i) =
            rician_channel(m, 1, gain, cfg.rician_ris_su, aod_su, 0.0, rng).col(0);
    }
    return ch;
}

}  // namespace starsr
