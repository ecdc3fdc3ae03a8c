#include "cachebeam/channel.hpp"

#include <cmath>
#include <complex>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

#include <boost/math/distributions/chi_squared.hpp>

namespace cachebeam {
namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

std::complex<double> draw_cn(std::mt19937_64& rng) {
  // CN(0,1): independent real/imag parts with variance 1/2 each.
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double re = gauss(rng);
  const double im = gauss(rng);
  return {re * M_SQRT1_2, im * M_SQRT1_2};
}

Eigen::VectorXcd draw_cn_vector(int n, std::mt19937_64& rng) {
  Eigen::VectorXcd v(n);
  for (int i = 0; i < n; ++i) v[i] = draw_cn(rng);
  return v;
}

Eigen::MatrixXcd draw_cn_matrix(int rows, int cols, std::mt19937_64& rng) {
  Eigen::MatrixXcd a(rows, cols);
  for (int c = 0; c < cols; ++c) {
    for (int r = 0; r < rows; ++r) a(r, c) = draw_cn(rng);
  }
  return a;
}

// ULA steering response for an array laid along the x axis: the phase ramp is
// driven by the x-cosine of the departure/arrival direction.
Eigen::VectorXcd steering(int n, double spacing_wl, const Vec3& from, const Vec3& to) {
  const Vec3 dir = (to - from).normalized();
  const double cosine = dir.x();
  Eigen::VectorXcd a(n);
  for (int i = 0; i < n; ++i) {
    const double phase = kTwoPi * spacing_wl * cosine * i;
    a[i] = std::complex<double>(std::cos(phase), std::sin(phase));
  }
  return a;
}

// Amplitude split between LoS and scatter for a Rician factor given in dB,
// computed via 1/kappa so kappa -> +inf stays finite.
struct RicianMix {
  double los;
  double scatter;
};

RicianMix rician_mix(double factor_db) {
  const double inv_kappa = std::pow(10.0, -factor_db / 10.0);
  RicianMix mix;
  mix.los = std::sqrt(1.0 / (1.0 + inv_kappa));
  mix.scatter = std::sqrt(inv_kappa / (1.0 + inv_kappa));
  if (!std::isfinite(mix.los) || !std::isfinite(mix.scatter)) {
    throw std::invalid_argument("generate_scene: Rician factor yields invalid mixture");
  }
  return mix;
}

double path_amplitude(double pl_ref_db, double exponent, double dist_m) {
  if (dist_m <= 1e-6) {
    throw std::invalid_argument("generate_scene: coincident nodes");
  }
  const double gain = std::pow(10.0, pl_ref_db / 10.0) * std::pow(dist_m, -exponent);
  return std::sqrt(gain);
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

Vec3 parse_vec3(const std::string& key, std::string value) {
  for (char& c : value) {
    if (c == ',') c = ' ';
  }
  const auto parts = split_ws(value);
  if (parts.size() != 3) {
    throw std::invalid_argument("scene config: key '" + key + "' needs 3 coordinates");
  }
  return Vec3(std::stod(parts[0]), std::stod(parts[1]), std::stod(parts[2]));
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

double SceneConfig::noise_power_w() const {
  return std::pow(10.0, (noise_dbm - 30.0) / 10.0);
}

void SceneConfig::validate() const {
  if (num_antennas < 1 || num_elements < 1 || num_users < 1) {
    throw std::invalid_argument("scene config: N, M, K must be >= 1");
  }
  if (ple_direct <= 0 || ple_bs_irs <= 0 || ple_irs_ue <= 0) {
    throw std::invalid_argument("scene config: path-loss exponents must be positive");
  }
  if ((pos_bs - pos_irs).norm() <= 1e-6) {
    throw std::invalid_argument("scene config: BS and IRS positions coincide");
  }
  if (user_disc_radius < 0) {
    throw std::invalid_argument("scene config: user disc radius must be >= 0");
  }
  if (delta_g < 0 || delta_g >= 1) {
    throw std::invalid_argument("scene config: delta_g must lie in [0,1)");
  }
  if (outage_rho <= 0 || outage_rho >= 1) {
    throw std::invalid_argument("scene config: outage_rho must lie in (0,1)");
  }
}

SceneConfig parse_scene_config(const std::string& text) {
  SceneConfig cfg;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("scene config: expected key = value, got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "n_antennas") cfg.num_antennas = std::stoi(value);
    else if (key == "m_elements") cfg.num_elements = std::stoi(value);
    else if (key == "k_users") cfg.num_users = std::stoi(value);
    else if (key == "pos_bs") cfg.pos_bs = parse_vec3(key, value);
    else if (key == "pos_irs") cfg.pos_irs = parse_vec3(key, value);
    else if (key == "user_disc_center") cfg.user_disc_center = parse_vec3(key, value);
    else if (key == "user_disc_radius") cfg.user_disc_radius = std::stod(value);
    else if (key == "ple_direct") cfg.ple_direct = std::stod(value);
    else if (key == "ple_bs_irs") cfg.ple_bs_irs = std::stod(value);
    else if (key == "ple_irs_ue") cfg.ple_irs_ue = std::stod(value);
    else if (key == "pl_ref_db") cfg.pl_ref_db = std::stod(value);
    else if (key == "rician_br_db") cfg.rician_br_db = std::stod(value);
    else if (key == "rician_ru_db") cfg.rician_ru_db = std::stod(value);
    else if (key == "rician_bu_db") cfg.rician_bu_db = std::stod(value);
    else if (key == "noise_dbm") cfg.noise_dbm = std::stod(value);
    else if (key == "bandwidth_hz") cfg.bandwidth_hz = std::stod(value);
    else if (key == "spacing_wl") cfg.spacing_wl = std::stod(value);
    else if (key == "seed") cfg.seed = std::stoull(value);
    else {
      throw std::invalid_argument("scene config: unknown key '" + key + "'");
    }
  }
  return cfg;
}

SceneConfig load_scene_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scene config: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scene_config(buf.str());
}

Eigen::MatrixXcd cascaded_channel(const Eigen::VectorXcd& h_irs_user,
                                  const Eigen::MatrixXcd& h_bs_irs) {
  if (h_irs_user.size() != h_bs_irs.rows()) {
    throw std::invalid_argument("cascaded_channel: dimension mismatch");
  }
  return h_irs_user.conjugate().asDiagonal() * h_bs_irs;
}

double inverse_chi2_cdf(int dof, double p) {
  if (dof < 1) throw std::invalid_argument("inverse_chi2_cdf: dof >= 1 required");
  if (!(p > 0.0 && p < 1.0)) {
    throw std::invalid_argument("inverse_chi2_cdf: p must lie in (0,1)");
  }
  const boost::math::chi_squared_distribution<double> dist(dof);
  return boost::math::quantile(dist, p);
}

double error_radius(double delta_g, const Eigen::MatrixXcd& estimated,
                    double outage_rho) {
  if (delta_g < 0 || delta_g >= 1) {
    throw std::invalid_argument("error_radius: delta_g must lie in [0,1)");
  }
  if (!(outage_rho > 0.0 && outage_rho < 1.0)) {
    throw std::invalid_argument("error_radius: rho must lie in (0,1)");
  }
  if (delta_g == 0.0) return 0.0;
  const int dof = 2 * static_cast<int>(estimated.size());
  const double eps_sq = delta_g * delta_g * estimated.squaredNorm();
  return std::sqrt(0.5 * eps_sq * inverse_chi2_cdf(dof, 1.0 - outage_rho));
}

ChannelScene generate_scene(const SceneConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  ChannelScene scene;
  scene.config = config;
  scene.config.seed = seed;
  scene.delta_g = config.delta_g;

  const int n = config.num_antennas;
  const int m = config.num_elements;
  const int k = config.num_users;

  scene.user_positions.resize(k);
  for (int u = 0; u < k; ++u) {
    const double radius = config.user_disc_radius * std::sqrt(unit(rng));
    const double angle = kTwoPi * unit(rng);
    scene.user_positions[u] = config.user_disc_center +
                              Vec3(radius * std::cos(angle), radius * std::sin(angle), 0.0);
    if ((scene.user_positions[u] - config.pos_bs).norm() <= 1e-6 ||
        (scene.user_positions[u] - config.pos_irs).norm() <= 1e-6) {
      throw std::invalid_argument("generate_scene: user coincides with BS or IRS");
    }
  }

  const RicianMix mix_br = rician_mix(config.rician_br_db);
  const RicianMix mix_ru = rician_mix(config.rician_ru_db);
  const RicianMix mix_bu = rician_mix(config.rician_bu_db);

  // BS -> IRS
  {
    const double amp = path_amplitude(config.pl_ref_db, config.ple_bs_irs,
                                      (config.pos_irs - config.pos_bs).norm());
    const Eigen::VectorXcd a_rx = steering(m, config.spacing_wl, config.pos_irs, config.pos_bs);
    const Eigen::VectorXcd a_tx = steering(n, config.spacing_wl, config.pos_bs, config.pos_irs);
    const Eigen::MatrixXcd los = a_rx * a_tx.adjoint();
    scene.h_bs_irs = amp * (mix_br.los * los + mix_br.scatter * draw_cn_matrix(m, n, rng));
  }

  scene.h_direct.resize(k);
  scene.h_irs_user.resize(k);
  scene.cascaded.resize(k);
  scene.estimated.resize(k);
  scene.error_radius.resize(k);

  for (int u = 0; u < k; ++u) {
    const Vec3& pos = scene.user_positions[u];

    const double amp_bu = path_amplitude(config.pl_ref_db, config.ple_direct,
                                         (pos - config.pos_bs).norm());
    const Eigen::VectorXcd los_bu = steering(n, config.spacing_wl, config.pos_bs, pos);
    scene.h_direct[u] = amp_bu * (mix_bu.los * los_bu + mix_bu.scatter * draw_cn_vector(n, rng));

    const double amp_ru = path_amplitude(config.pl_ref_db, config.ple_irs_ue,
                                         (pos - config.pos_irs).norm());
    const Eigen::VectorXcd los_ru = steering(m, config.spacing_wl, config.pos_irs, pos);
    scene.h_irs_user[u] =
        amp_ru * (mix_ru.los * los_ru + mix_ru.scatter * draw_cn_vector(m, rng));

    scene.cascaded[u] = cascaded_channel(scene.h_irs_user[u], scene.h_bs_irs);

    if (config.delta_g == 0.0) {
      scene.estimated[u] = scene.cascaded[u];
      scene.error_radius[u] = 0.0;
      continue;
    }

    // Nominal error draw: per-entry variance eps^2 = delta^2 ||vec(Ghat)||^2,
    // then rescaled until the draw sits inside the ball whose radius is
    // computed from the final estimate. The radius depends on the estimate,
    // so rescaling is iterated to a joint fixed point.
    const Eigen::MatrixXcd raw = draw_cn_matrix(m, n, rng);
    const double eps0 = config.delta_g * scene.cascaded[u].norm();
    Eigen::MatrixXcd delta = eps0 * raw;
    Eigen::MatrixXcd estimate = scene.cascaded[u] - delta;
    double radius = error_radius(config.delta_g, estimate, config.outage_rho);
    for (int iter = 0; iter < 100 && delta.norm() > radius; ++iter) {
      delta *= (radius / delta.norm()) * (1.0 - 1e-14);
      estimate = scene.cascaded[u] - delta;
      radius = error_radius(config.delta_g, estimate, config.outage_rho);
    }
    if (delta.norm() > radius) {
      throw std::runtime_error("generate_scene: error rescaling did not converge");
    }
    scene.estimated[u] = estimate;
    scene.error_radius[u] = radius;
  }

  return scene;
}

}  // namespace cachebeam
