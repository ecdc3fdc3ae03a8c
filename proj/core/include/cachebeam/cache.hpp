#pragma once

#include <Eigen/Dense>

namespace cachebeam {

// Content library state: Zipf popularity, fractional placement, storage cap.
struct CachePlacement {
  Eigen::VectorXd popularity;  // b, nonincreasing, sums to 1
  Eigen::VectorXd placement;   // c in [0,1]^F, sum <= storage_limit
  double storage_limit = 0.0;  // S0
  int num_files = 0;           // F
  double skewness = 0.0;       // eps
};

// b_f = f^(-eps) / sum_i i^(-eps).
Eigen::VectorXd zipf_popularity(int num_files, double skewness);

// Minimizes sum_f (1 - c_f) b_f subject to c in [0,1]^F, sum c <= storage.
// Linear objective, so the KKT point fills files in nonincreasing-popularity
// order (ties to the lower index) and puts the fractional remainder on the
// next file.
Eigen::VectorXd solve_content_placement(const Eigen::VectorXd& popularity,
                                        double storage_limit);

// sum_f sum_k (1 - c_f) b_f R0_k.
double backhaul_cost(const Eigen::VectorXd& placement,
                     const Eigen::VectorXd& popularity,
                     const Eigen::VectorXd& delivery_rates);

}  // namespace cachebeam
