#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cachebeam/channel.hpp"
#include "cachebeam/solver.hpp"

namespace cachebeam {

// Penalty-CCP knobs for the passive (reflection) subproblem.
struct CcpConfig {
  double penalty_initial = 1e-3;   // rho^[0]
  double penalty_growth = 5.0;     // phi > 1
  double penalty_max = 1e4;        // rho_max
  double slack_tol = 1e-5;         // varsigma, ||d||_1 exit test
  double step_tol = 1e-3;          // psi, ||e - e_prev||_1 exit test
  int max_inner = 50;              // iota_max
  int restart_cap = 10;

  void validate() const;
};

struct AoConfig {
  double stop_tol = 1e-3;   // relative power change
  int max_outer = 30;
  CcpConfig ccp;
  int init_restart_cap = 10;
  bool e_step_full_interference = false;  // substitute the full coupling block
  SolveOptions solver;
  std::string debug_sdp_dir;  // when set, dump each subproblem in SDPA form
};

// Robust-constraint slack values attached to an accepted iterate.
struct SlackSet {
  Eigen::VectorXd in_noise;   // IN_k in noise-normalized units
  Eigen::VectorXd tau_g;      // tau_{g,k} >= 0
  Eigen::VectorXd lambda_g;   // lambda_{g,k} >= 0
  Eigen::VectorXd beta;       // beta_k >= 0 (passive step only)
  Eigen::VectorXd d;          // 2M modulus slacks (passive step only)
};

struct IterationRecord {
  int outer = 0;
  double power_w = 0.0;
  int inner_iterations = 0;
  double d_norm1 = 0.0;
  bool e_step_accepted = false;
};

enum class StopReason { kConverged, kOuterCap, kPrecoderFailed, kInitFailed };
const char* to_string(StopReason reason);

struct ConvergenceReport {
  std::vector<IterationRecord> iterations;
  StopReason reason = StopReason::kConverged;
  int outer_iterations = 0;
};

struct BeamformingState {
  Eigen::MatrixXcd precoder;         // W, N x K
  Eigen::VectorXcd reflection;       // e, length M, unit modulus when accepted
  Eigen::MatrixXcd precoder_anchor;  // W^(n)
  Eigen::VectorXcd reflection_anchor;
  SlackSet slacks;
  int outer_iteration = 0;
  std::vector<double> power_history;
  std::uint64_t rng_state = 0;  // deterministic redraw stream

  double power() const { return precoder.squaredNorm(); }
};

struct AoFailure : std::runtime_error {
  AoFailure(const std::string& what, SolveStatus last)
      : std::runtime_error(what), last_status(last) {}
  SolveStatus last_status;
};

// e^(0) with i.i.d. uniform phases; W^(0) from one precoder solve at e^(0),
// redrawing e^(0) up to the restart cap when that solve is infeasible.
BeamformingState initialize_state(const ChannelScene& scene,
                                  const Eigen::VectorXd& targets,
                                  std::uint64_t seed, const AoConfig& config = {});

// One precoder update (W-step): min ||W||_F^2 under the robust signal and
// interference blocks at the current anchors, e fixed. Returns the solver
// status; the state is updated only on an optimal solve.
SolveStatus precoder_step(BeamformingState& state, const ChannelScene& scene,
                          const Eigen::VectorXd& targets, const AoConfig& config = {});

struct PassiveStepResult {
  bool accepted = false;
  int inner_iterations = 0;
  int restarts = 0;
  double d_norm1 = 0.0;
};

// Penalty-CCP e-step at fixed W; the returned reflection is projected to
// exact unit modulus and accepted only if the precoder-step constraint set
// stays feasible there.
PassiveStepResult passive_step(BeamformingState& state, const ChannelScene& scene,
                               const Eigen::VectorXd& targets,
                               const AoConfig& config = {});

struct AoResult {
  BeamformingState state;
  ConvergenceReport report;
};

// Outer alternating optimization until the relative power change drops
// below stop_tol or the outer cap binds.
AoResult alternating_optimize(const ChannelScene& scene,
                              const Eigen::VectorXd& targets, std::uint64_t seed,
                              const AoConfig& config = {});

// Feasibility check of the precoder-step constraint set at fixed (W, e);
// fills `slacks` with certified values when feasible.
bool robust_feasible(const ChannelScene& scene, const Eigen::MatrixXcd& precoder,
                     const Eigen::VectorXcd& reflection,
                     const Eigen::VectorXd& targets, const AoConfig& config,
                     SlackSet* slacks);

}  // namespace cachebeam
