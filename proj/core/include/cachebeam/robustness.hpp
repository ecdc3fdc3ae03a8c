#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "cachebeam/channel.hpp"

namespace cachebeam {

struct RobustnessReport {
  Eigen::VectorXd min_rate;          // per-user minimum sampled rate, bit/s/Hz
  int violation_count = 0;
  int sample_count = 0;
  std::vector<Eigen::MatrixXcd> worst_error;  // per user, the minimizing dG
  double empirical_outage = 0.0;
};

enum class BallMode { kInterior, kBoundary };

// Draw from the Frobenius ball of radius xi: uniform direction on the
// complex sphere, radius xi (boundary) or xi * u^(1/(2MN)) (interior).
Eigen::MatrixXcd sample_error_ball(double xi, int rows, int cols, BallMode mode,
                                   std::mt19937_64& rng);
Eigen::MatrixXcd sample_error_ball(double xi, int rows, int cols, BallMode mode,
                                   std::uint64_t seed);

// Exact per-user rates log2(1 + SINR) at G_k = Ghat_k + dG_k.
Eigen::VectorXd rate_under_error(const Eigen::MatrixXcd& precoder,
                                 const Eigen::VectorXcd& reflection,
                                 const ChannelScene& scene,
                                 const std::vector<Eigen::MatrixXcd>& errors);

// Sampling plus multistart projected-gradient descent over the error ball;
// reports the worst rates found and the count of target violations.
RobustnessReport worst_case_certificate(const Eigen::MatrixXcd& precoder,
                                        const Eigen::VectorXcd& reflection,
                                        const ChannelScene& scene,
                                        const Eigen::VectorXd& targets,
                                        int n_samples, std::uint64_t seed);

// Fraction of unclipped Gaussian error draws under which any user misses its
// target rate.
double empirical_outage(const Eigen::MatrixXcd& precoder,
                        const Eigen::VectorXcd& reflection,
                        const ChannelScene& scene, const Eigen::VectorXd& targets,
                        int n_draws, std::uint64_t seed);

}  // namespace cachebeam
