#include "cachebeam/cache.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cachebeam {

Eigen::VectorXd zipf_popularity(int num_files, double skewness) {
  if (num_files < 1) throw std::invalid_argument("zipf_popularity: need F >= 1");
  if (skewness < 0) throw std::invalid_argument("zipf_popularity: need eps >= 0");
  Eigen::VectorXd b(num_files);
  for (int f = 0; f < num_files; ++f) {
    b[f] = std::pow(static_cast<double>(f + 1), -skewness);
  }
  b /= b.sum();
  return b;
}

Eigen::VectorXd solve_content_placement(const Eigen::VectorXd& popularity,
                                        double storage_limit) {
  if (storage_limit < 0) {
    throw std::invalid_argument("solve_content_placement: need S0 >= 0");
  }
  const int f_count = static_cast<int>(popularity.size());
  std::vector<int> order(f_count);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return popularity[a] > popularity[b];
  });

  Eigen::VectorXd c = Eigen::VectorXd::Zero(f_count);
  double budget = storage_limit;
  for (int idx : order) {
    if (budget <= 0) break;
    const double fill = std::min(1.0, budget);
    c[idx] = fill;
    budget -= fill;
  }
  return c;
}

double backhaul_cost(const Eigen::VectorXd& placement,
                     const Eigen::VectorXd& popularity,
                     const Eigen::VectorXd& delivery_rates) {
  if (placement.size() != popularity.size()) {
    throw std::invalid_argument("backhaul_cost: placement/popularity size mismatch");
  }
  const double miss_mass = ((1.0 - placement.array()) * popularity.array()).sum();
  return miss_mass * delivery_rates.sum();
}

}  // namespace cachebeam
