#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <string>

#include "starsr/rng.hpp"

namespace starsr {

struct Vec2 {
    double x = 0.0, y = 0.0;
};

inline double distance(const Vec2& a, const Vec2& b) {
    return std::hypot(a.x - b.x, a.y - b.y);
}

// Scenario geometry and statistics. Distances in meters, powers in watts,
// frequency in Hz. The config file loader (experiment module) accepts dBm for
// powers and converts on the way in.
struct ScenarioConfig {
    int num_bs_antennas = 4;    // N
    int num_ris_elements = 20;  // M
    int num_pus = 4;            // K
    int num_sus = 1;            // Q
    double carrier_hz = 750e6;

    Vec2 bs_pos{0.0, 0.0};
    Vec2 ris_pos{100.0, 0.0};
    Vec2 pu_center{100.0, 20.0};
    double pu_radius = 5.0;
    Vec2 su_center{100.0, -20.0};
    double su_radius = 5.0;

    double pl_exp_direct = 3.8;    // BS -> user
    double pl_exp_ris_user = 2.0;  // RIS -> user
    double pl_exp_bs_ris = 2.4;    // BS -> RIS

    double rician_bs_ris = 3.0;
    double rician_ris_pu = 3.0;
    double rician_ris_su = 3.0;

    double noise_pu_w = 1e-12;  // -90 dBm
    double noise_su_w = 1e-12;

    std::uint64_t seed = 1;

    double wavelength() const;
    void validate() const;  // throws std::invalid_argument
};

// One channel realization; vectors column-shaped, adjoints taken at use site.
struct ChannelSet {
    Eigen::MatrixXcd h_pu;  // N x K direct BS->PU
    Eigen::MatrixXcd h_su;  // N x Q direct BS->SU
    Eigen::MatrixXcd f_bs_ris;  // M x N
    Eigen::MatrixXcd g_pu;  // M x K RIS->PU
    Eigen::MatrixXcd g_su;  // M x Q RIS->SU
};

// (wavelength/(4 pi))^2 * d^-exponent
double path_loss(double dist_m, double exponent, double wavelength_m);

// [1, e^{j pi sin v}, ..., e^{j pi (X-1) sin v}]
Eigen::VectorXcd steering_vector(int length, double angle_rad);

// sqrt(gain*k/(k+1)) * LoS + sqrt(gain/(k+1)) * NLoS with LoS the steering
// outer product and NLoS i.i.d. unit-variance complex Gaussian entries.
// rician_factor >= 1e12 is treated as pure LoS.
Eigen::MatrixXcd rician_channel(int dim_out, int dim_in, double gain,
                                double rician_factor, double aoa_rad, double aod_rad,
                                RandomStream& rng);

ChannelSet generate_scenario(const ScenarioConfig& cfg);

}  // namespace starsr
