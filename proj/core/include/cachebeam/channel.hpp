#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace cachebeam {

using Vec3 = Eigen::Vector3d;

// Physical layout and fading parameters of one downlink scene.
struct SceneConfig {
  int num_antennas = 6;  // N
  int num_elements = 6;  // M
  int num_users = 3;     // K

  Vec3 pos_bs{0.0, 0.0, 0.0};
  Vec3 pos_irs{50.0, 10.0, 2.0};
  Vec3 user_disc_center{45.0, 0.0, 0.0};
  double user_disc_radius = 5.0;

  double ple_direct = 4.0;   // BS-UE path loss exponent
  double ple_bs_irs = 2.2;
  double ple_irs_ue = 2.0;
  double pl_ref_db = -30.0;  // reference path loss at 1 m

  double rician_br_db = 10.0;
  double rician_ru_db = 10.0;
  double rician_bu_db = 1.0;

  double noise_dbm = -80.0;
  double bandwidth_hz = 10e6;
  double spacing_wl = 0.5;  // antenna spacing in wavelengths
  std::uint64_t seed = 1;

  // CSI uncertainty level and tolerable outage used to size the error balls.
  // Not part of the flat scene-file key set; the harness sets them per sweep.
  double delta_g = 0.0;
  double outage_rho = 0.05;

  double noise_power_w() const;  // sigma^2 in Watts
  void validate() const;
};

// Parses the flat `key = value` scene format. Unknown keys are rejected.
SceneConfig parse_scene_config(const std::string& text);
SceneConfig load_scene_config(const std::string& path);

// All channels of one generated scene, plus the bounded-error data the
// optimizer sees.
struct ChannelScene {
  SceneConfig config;
  std::vector<Vec3> user_positions;

  std::vector<Eigen::VectorXcd> h_direct;     // h_k, length N
  Eigen::MatrixXcd h_bs_irs;                  // H_br, M x N
  std::vector<Eigen::VectorXcd> h_irs_user;   // h_rk, length M
  std::vector<Eigen::MatrixXcd> cascaded;     // G_k = diag(h_rk^H) H_br, M x N
  std::vector<Eigen::MatrixXcd> estimated;    // Ghat_k, M x N
  std::vector<double> error_radius;           // xi_gk
  double delta_g = 0.0;

  int n() const { return config.num_antennas; }
  int m() const { return config.num_elements; }
  int k() const { return config.num_users; }
  double noise_power() const { return config.noise_power_w(); }
};

// diag(h_rk^H) * H_br; row m is conj(h_rk[m]) times row m of H_br.
Eigen::MatrixXcd cascaded_channel(const Eigen::VectorXcd& h_irs_user,
                                  const Eigen::MatrixXcd& h_bs_irs);

// x with P(chi2_dof <= x) = p, relative accuracy 1e-8 or better.
double inverse_chi2_cdf(int dof, double p);

// xi = sqrt(0.5 * delta^2 * ||vec(Ghat)||^2 * Phi^-1(1 - rho; 2MN)).
double error_radius(double delta_g, const Eigen::MatrixXcd& estimated,
                    double outage_rho);

// Deterministic Rician scene draw; the per-user estimate Ghat_k is the true
// cascade minus a Gaussian error rescaled into the radius-xi ball.
ChannelScene generate_scene(const SceneConfig& config, std::uint64_t seed);

}  // namespace cachebeam
