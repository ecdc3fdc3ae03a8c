#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cachebeam/beamforming.hpp"
#include "cachebeam/cache.hpp"
#include "cachebeam/channel.hpp"
#include "cachebeam/robustness.hpp"

namespace cachebeam {

enum class Scheme { kOjbOc, kOjbUc, kRandomPhaseOc, kRandomPhaseUc };
const char* to_string(Scheme scheme);
std::optional<Scheme> parse_scheme(const std::string& name);
bool scheme_uses_ao(Scheme scheme);
bool scheme_uses_optimized_cache(Scheme scheme);

struct ExperimentConfig {
  SceneConfig scene;
  std::vector<double> gamma_sweep{0.5, 1.0, 1.5, 2.0, 2.5, 3.0};
  std::vector<double> delta_g_levels{0.01, 0.001};
  std::vector<Scheme> schemes{Scheme::kOjbOc, Scheme::kOjbUc,
                              Scheme::kRandomPhaseOc, Scheme::kRandomPhaseUc};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};

  double pricing_factor = 100.0;  // eta
  int num_files = 200;            // F
  double storage_limit = 100.0;   // S0
  double zipf_skewness = 1.0;     // eps
  double outage_rho = 0.05;
  int certificate_samples = 500;
  int outage_draws = 2000;
  std::optional<double> delivery_rate_override;  // R0_k; defaults to gamma

  AoConfig ao;

  void validate() const;
};

ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::string& path);

struct ExperimentRecord {
  std::string scheme;
  double gamma_bps_hz = 0.0;
  double delta_g = 0.0;
  std::uint64_t seed = 0;
  double power_w = 0.0;
  double backhaul_cost = 0.0;
  double network_cost = 0.0;
  int outer_iters = 0;
  bool feasible = false;
  double min_rate_certified = 0.0;
  double empirical_outage = 0.0;
  double wall_time_s = 0.0;

  // Retained so `verify` can re-certify without re-optimizing.
  Eigen::MatrixXcd precoder;
  Eigen::VectorXcd reflection;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::string config_text;  // raw echo embedded in JSON output
  std::vector<ExperimentRecord> records;
  bool all_succeeded = true;
};

// backhaul + eta * ||W||_F^2.
double network_cost(const Eigen::VectorXd& placement,
                    const Eigen::VectorXd& popularity,
                    const Eigen::VectorXd& delivery_rates,
                    const Eigen::MatrixXcd& precoder, double pricing_factor);

// Runs the full (scheme x gamma x delta x seed) sweep. Per-record failures
// are recorded as infeasible rows; the sweep itself never aborts.
ExperimentResult run_experiment(const ExperimentConfig& config, int parallel = 1);

enum class EmitFormat { kCsv, kJson };
void emit_results(const ExperimentResult& result, EmitFormat format,
                  std::ostream& os);
void emit_results_file(const ExperimentResult& result, EmitFormat format,
                       const std::string& path);

// Reads a JSON results file (with embedded config and solutions) back.
ExperimentResult load_results_json(const std::string& path);

// Re-runs certification for every record of a results file; returns the
// number of records whose stored certificate is contradicted.
int verify_results(const ExperimentResult& result, std::ostream& log);

}  // namespace cachebeam
