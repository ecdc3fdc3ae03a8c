#include "cachebeam/robustness.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace cachebeam {
namespace {

using Eigen::MatrixXcd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

MatrixXcd gaussian_matrix(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  MatrixXcd out(rows, cols);
  for (int c = 0; c < cols; ++c) {
    for (int r = 0; r < rows; ++r) {
      const double re = gauss(rng);
      const double im = gauss(rng);
      out(r, c) = std::complex<double>(re * M_SQRT1_2, im * M_SQRT1_2);
    }
  }
  return out;
}

double user_rate(const MatrixXcd& precoder, const VectorXcd& reflection,
                 const ChannelScene& scene, int user, const MatrixXcd& error) {
  const Eigen::RowVectorXcd a = scene.h_direct[user].adjoint() +
                                reflection.adjoint() * (scene.estimated[user] + error);
  const int k = static_cast<int>(precoder.cols());
  const double sigma_sq = scene.noise_power();
  double useful = 0.0;
  double interference = 0.0;
  for (int j = 0; j < k; ++j) {
    const double p = std::norm(std::complex<double>(a * precoder.col(j)));
    if (j == user) {
      useful = p;
    } else {
      interference += p;
    }
  }
  return std::log2(1.0 + useful / (interference + sigma_sq));
}

// Wirtinger gradient of user `user`'s rate with respect to the error matrix.
MatrixXcd rate_gradient(const MatrixXcd& precoder, const VectorXcd& reflection,
                        const ChannelScene& scene, int user,
                        const MatrixXcd& error) {
  const Eigen::RowVectorXcd a = scene.h_direct[user].adjoint() +
                                reflection.adjoint() * (scene.estimated[user] + error);
  const int k = static_cast<int>(precoder.cols());
  const double sigma_sq = scene.noise_power();
  double useful = 0.0;
  double denom = sigma_sq;
  MatrixXcd grad_useful;
  MatrixXcd grad_denom = MatrixXcd::Zero(error.rows(), error.cols());
  for (int j = 0; j < k; ++j) {
    const std::complex<double> s = a * precoder.col(j);
    // d|s|^2 = 2 Re <s e w^H, dG>.
    const MatrixXcd g = s * (reflection * precoder.col(j).adjoint());
    if (j == user) {
      useful = std::norm(s);
      grad_useful = g;
    } else {
      denom += std::norm(s);
      grad_denom += g;
    }
  }
  const double sinr = useful / denom;
  // rate = log2(1 + u/D); d rate = (D du - u dD) / (D^2 (1+sinr) ln 2).
  const double scale = 1.0 / (denom * denom * (1.0 + sinr) * std::numbers::ln2);
  return scale * (denom * grad_useful - useful * grad_denom);
}

}  // namespace

MatrixXcd sample_error_ball(double xi, int rows, int cols, BallMode mode,
                            std::mt19937_64& rng) {
  if (xi < 0) throw std::invalid_argument("sample_error_ball: xi < 0");
  // Keep the draw order fixed so interior/boundary consume the same stream.
  MatrixXcd direction = gaussian_matrix(rows, cols, rng);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(rng);
  if (xi == 0.0) return MatrixXcd::Zero(rows, cols);
  const double norm = direction.norm();
  if (norm == 0.0) return MatrixXcd::Zero(rows, cols);
  direction /= norm;
  if (mode == BallMode::kBoundary) return xi * direction;
  const double radius = xi * std::pow(u, 1.0 / (2.0 * rows * cols));
  return radius * direction;
}

MatrixXcd sample_error_ball(double xi, int rows, int cols, BallMode mode,
                            std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample_error_ball(xi, rows, cols, mode, rng);
}

VectorXd rate_under_error(const MatrixXcd& precoder, const VectorXcd& reflection,
                          const ChannelScene& scene,
                          const std::vector<MatrixXcd>& errors) {
  const int k = scene.k();
  if (static_cast<int>(errors.size()) != k) {
    throw std::invalid_argument("rate_under_error: need one error per user");
  }
  VectorXd rates(k);
  for (int u = 0; u < k; ++u) {
    rates[u] = user_rate(precoder, reflection, scene, u, errors[u]);
  }
  return rates;
}

RobustnessReport worst_case_certificate(const MatrixXcd& precoder,
                                        const VectorXcd& reflection,
                                        const ChannelScene& scene,
                                        const VectorXd& targets, int n_samples,
                                        std::uint64_t seed) {
  if (n_samples < 1) {
    throw std::invalid_argument("worst_case_certificate: n_samples >= 1");
  }
  const int k = scene.k();
  const int m = scene.m();
  const int n = scene.n();
  std::mt19937_64 rng(seed);

  RobustnessReport report;
  report.min_rate = VectorXd::Constant(k, std::numeric_limits<double>::infinity());
  report.worst_error.assign(k, MatrixXcd::Zero(m, n));
  report.sample_count = 0;

  constexpr int kDescentStarts = 10;
  constexpr int kDescentIters = 100;

  for (int u = 0; u < k; ++u) {
    const double xi = scene.error_radius[u];
    auto consider = [&](const MatrixXcd& error) {
      const double rate = user_rate(precoder, reflection, scene, u, error);
      if (rate < report.min_rate[u]) {
        report.min_rate[u] = rate;
        report.worst_error[u] = error;
      }
    };

    consider(MatrixXcd::Zero(m, n));
    for (int s = 0; s < n_samples; ++s) {
      const BallMode mode = (s % 2 == 0) ? BallMode::kBoundary : BallMode::kInterior;
      consider(sample_error_ball(xi, m, n, mode, rng));
      ++report.sample_count;
    }

    if (xi > 0) {
      // Multistart projected gradient descent on the rate.
      for (int start = 0; start < kDescentStarts; ++start) {
        MatrixXcd point = (start == 0)
                              ? report.worst_error[u]
                              : sample_error_ball(xi, m, n, BallMode::kInterior, rng);
        for (int it = 1; it <= kDescentIters; ++it) {
          const MatrixXcd grad = rate_gradient(precoder, reflection, scene, u, point);
          const double gnorm = grad.norm();
          if (gnorm < 1e-14) break;
          const double step = 0.1 * xi / std::sqrt(static_cast<double>(it));
          point -= (step / gnorm) * grad;
          const double pnorm = point.norm();
          if (pnorm > xi) point *= xi / pnorm;
        }
        consider(point);
      }
    }

    if (report.min_rate[u] < targets[u] - 1e-3) ++report.violation_count;
  }
  return report;
}

double empirical_outage(const MatrixXcd& precoder, const VectorXcd& reflection,
                        const ChannelScene& scene, const VectorXd& targets,
                        int n_draws, std::uint64_t seed) {
  if (n_draws < 100) throw std::invalid_argument("empirical_outage: n_draws >= 100");
  const int k = scene.k();
  const int m = scene.m();
  const int n = scene.n();
  std::mt19937_64 rng(seed);

  // Unclipped Gaussian errors with per-entry variance eps^2 = delta^2
  // ||vec(Ghat)||^2 (the convention that makes xi the (1-rho) quantile of
  // ||dG||_F).
  std::vector<double> per_entry_std(k);
  for (int u = 0; u < k; ++u) {
    per_entry_std[u] = scene.delta_g * scene.estimated[u].norm();
  }

  int violations = 0;
  for (int draw = 0; draw < n_draws; ++draw) {
    bool violated = false;
    for (int u = 0; u < k; ++u) {
      const MatrixXcd error = per_entry_std[u] * gaussian_matrix(m, n, rng);
      const double rate = user_rate(precoder, reflection, scene, u, error);
      if (rate < targets[u]) {
        violated = true;
      }
    }
    if (violated) ++violations;
  }
  return static_cast<double>(violations) / n_draws;
}

}  // namespace cachebeam
