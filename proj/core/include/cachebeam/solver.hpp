#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cachebeam/conic_types.hpp"
#include "cachebeam/lmi.hpp"

namespace cachebeam {

// min sum_i linear_i * x_i + sum_g weight_g ||x_g||^2 + constant.
// Squared norms are lowered to a cone epigraph during finalize().
struct Objective {
  std::vector<std::pair<VarRef, double>> linear;
  std::vector<std::pair<VarId, double>> squared_norms;
  double constant = 0.0;
};

// Realified symmetric affine block constant + sum_i x_i coeff_i >= 0.
struct RealBlock {
  int dim = 0;
  std::string label;
  Eigen::MatrixXd constant;
  std::vector<std::pair<VarRef, Eigen::MatrixXd>> coeffs;
};

enum class SolveStatus {
  kOptimal,
  kInfeasible,
  kUnbounded,
  kNumericalFailure,
  kIterationLimit,
};
const char* to_string(SolveStatus status);

struct SolveStats {
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double gap = 0.0;
};

struct ConicSolution {
  SolveStatus status = SolveStatus::kNumericalFailure;
  double objective = 0.0;
  std::vector<Eigen::VectorXd> values;  // indexed by VarId
  SolveStats stats;

  const Eigen::VectorXd& value(VarId id) const { return values.at(id.value); }
  // Unpacks a [Re; Im] block into a complex vector.
  Eigen::VectorXcd complex_value(VarId id) const;
};

struct SolveOptions {
  double tol = 1e-7;
  int max_iterations = 120;
  bool verbose = false;

  // Applies CACHEBEAM_SOLVER_TOL / CACHEBEAM_SOLVER_MAXITER when set.
  static SolveOptions from_env(SolveOptions base = {});
};

// Standard-form container: registered variables, one objective, PSD blocks
// (complex LMIs realified on insertion), scalar rows, and SOC rows.
class ConicProblem {
 public:
  VariableSpace& vars() { return vars_; }
  const VariableSpace& vars() const { return vars_; }

  void set_objective(Objective objective) { objective_ = std::move(objective); }
  const Objective& objective() const { return objective_; }

  void add_lmi(const LmiBlock& block);
  void add_real_block(RealBlock block);
  void add_row(LinearRow row);
  void add_soc(SocRow row);

  const std::vector<RealBlock>& psd_blocks() const { return psd_blocks_; }
  const std::vector<LinearRow>& rows() const { return rows_; }
  const std::vector<SocRow>& soc_rows() const { return soc_rows_; }

 private:
  void check_ref(VarRef ref, const char* who) const;

  VariableSpace vars_;
  Objective objective_;
  std::vector<RealBlock> psd_blocks_;
  std::vector<LinearRow> rows_;
  std::vector<SocRow> soc_rows_;
};

// Convenience assembly from parts.
ConicProblem assemble(VariableSpace vars, Objective objective,
                      const std::vector<LmiBlock>& lmi_blocks,
                      const std::vector<LinearRow>& scalar_rows,
                      const std::vector<SocRow>& soc_rows = {});

// Homogeneous self-dual interior-point solve over PSD + nonneg cones.
ConicSolution solve(const ConicProblem& problem, const SolveOptions& options = {});

// Sparse SDPA-format dump of the finalized cone program (diagnostics).
void export_sdpa(const ConicProblem& problem, std::ostream& os);
void export_sdpa_file(const ConicProblem& problem, const std::string& path);

}  // namespace cachebeam
