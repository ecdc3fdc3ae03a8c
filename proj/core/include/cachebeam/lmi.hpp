#pragma once

#include <complex>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cachebeam/conic_types.hpp"

namespace cachebeam {

// Quadratic-in-vec(dG*) expansion of the linearized useful-signal power:
//   vec^T(dG) J vec(dG*) + 2 Re{ j^T vec(dG*) } + j_scalar.
struct TaylorCoefficients {
  Eigen::MatrixXcd quad;     // J, MN x MN Hermitian
  Eigen::VectorXcd lin;      // j, length MN
  double scalar = 0.0;       // j
};

// Coefficients of the lower bound of |(h^H + e^H G) w|^2 linearized at
// (w_anchor, e_anchor), with G = Ghat + dG.
TaylorCoefficients taylor_coefficients(const Eigen::VectorXcd& w,
                                       const Eigen::VectorXcd& w_anchor,
                                       const Eigen::VectorXcd& e,
                                       const Eigen::VectorXcd& e_anchor,
                                       const Eigen::VectorXcd& h,
                                       const Eigen::MatrixXcd& g_hat);

// Evaluates the Taylor quadratic form at a concrete error matrix.
double taylor_quadratic_form(const TaylorCoefficients& tc,
                             const Eigen::MatrixXcd& error);

// (MN+1) x (MN+1) robust useful-signal block
//   [[tau I + J, conj(j)], [j^T, C]],
// C = j_scalar - IN (2^gamma - 1) - tau xi^2 (- beta when present);
// gamma is the per-user rate target in bit/s/Hz.
Eigen::MatrixXcd useful_signal_block(const TaylorCoefficients& tc, double in_k,
                                     double tau_gk, double xi_gk,
                                     double gamma_bps_hz,
                                     std::optional<double> beta = std::nullopt);

enum class InterferenceMode { kFull, kReduced };

// Robust interference-plus-noise bound. kFull is the (K+N)-dim block with
// the xi W_{-k} coupling and lambda I_N corner; kReduced is the K-dim block
// that drops the error coupling. K = 1 degenerates to the scalar corner
// (plus the lambda I_N corner in full mode).
Eigen::MatrixXcd interference_block(const Eigen::MatrixXcd& w_minus_k,
                                    const Eigen::VectorXcd& e,
                                    const Eigen::VectorXcd& h,
                                    const Eigen::MatrixXcd& g_hat, double in_k,
                                    double lambda_gk, double xi_gk,
                                    double sigma_sq, InterferenceMode mode);

// [[Re H, -Im H], [Im H, Re H]]; PSD iff H is PSD, eigenvalues doubled.
Eigen::MatrixXd realify_psd(const Eigen::MatrixXcd& hermitian);

// Affine Hermitian-matrix-valued function of registered real variables.
class LmiBlock {
 public:
  LmiBlock(int dim, std::string label, Eigen::MatrixXcd constant,
           std::vector<std::pair<VarRef, Eigen::MatrixXcd>> coeffs);

  int dim() const { return dim_; }
  const std::string& label() const { return label_; }
  const Eigen::MatrixXcd& constant() const { return constant_; }
  const std::vector<std::pair<VarRef, Eigen::MatrixXcd>>& coeffs() const {
    return coeffs_;
  }

  // Value at a full stacked assignment of the variable space.
  Eigen::MatrixXcd evaluate(const VariableSpace& vars,
                            const Eigen::VectorXd& x) const;

 private:
  int dim_;
  std::string label_;
  Eigen::MatrixXcd constant_;
  std::vector<std::pair<VarRef, Eigen::MatrixXcd>> coeffs_;
};

// Builds an LmiBlock by probing `eval` at zero and at unit coordinates of
// `vars` (exact for affine maps; a spot check rejects non-affine inputs).
// `eval` receives coordinates in the order of `vars`.
LmiBlock make_affine_lmi(
    int dim, std::string label, const std::vector<VarRef>& vars,
    const std::function<Eigen::MatrixXcd(const Eigen::VectorXd&)>& eval);

// Penalty-CCP unit-modulus surrogate around e_anchor: per element the
// linearized lower bound (rows) and the convex |e_m|^2 <= 1 + d_{M+m}
// (second-order cones), plus d >= 0.
struct ModulusConstraints {
  std::vector<LinearRow> linear;
  std::vector<SocRow> soc;
};
ModulusConstraints ccp_modulus_constraints(VarId e_var, VarId d_var,
                                           const Eigen::VectorXcd& e_anchor);

}  // namespace cachebeam
