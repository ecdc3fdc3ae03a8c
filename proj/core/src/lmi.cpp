#include "cachebeam/lmi.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace cachebeam {
namespace {

using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;
using cplx = std::complex<double>;

// kron(A, B) with A indexing the slow (column-of-dG) axis, matching the
// vec() convention of an M x N error matrix: index n*M + m.
MatrixXcd kron(const MatrixXcd& a, const MatrixXcd& b) {
  MatrixXcd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

Eigen::VectorXcd vec(const MatrixXcd& m) {
  return Eigen::Map<const VectorXcd>(m.data(), m.size());
}

void require_hermitian(const MatrixXcd& h, const char* who) {
  const double scale = std::max(1.0, h.norm());
  if ((h - h.adjoint()).norm() > 1e-9 * scale) {
    throw std::invalid_argument(std::string(who) + ": matrix is not Hermitian");
  }
}

}  // namespace

TaylorCoefficients taylor_coefficients(const VectorXcd& w,
                                       const VectorXcd& w_anchor,
                                       const VectorXcd& e,
                                       const VectorXcd& e_anchor,
                                       const VectorXcd& h,
                                       const MatrixXcd& g_hat) {
  const auto n = w.size();
  const auto m = e.size();
  if (w_anchor.size() != n || e_anchor.size() != m || h.size() != n ||
      g_hat.rows() != m || g_hat.cols() != n) {
    throw std::invalid_argument("taylor_coefficients: dimension mismatch");
  }

  // Row vectors h^H + e^H Ghat at the variable point and at the anchor.
  const Eigen::RowVectorXcd a_var = h.adjoint() + e.adjoint() * g_hat;
  const Eigen::RowVectorXcd a_anc = h.adjoint() + e_anchor.adjoint() * g_hat;
  const cplx s_anc = a_anc * w_anchor;  // (h^H + e_anc^H Ghat) w_anc
  const cplx s_var = a_var * w;         // (h^H + e^H Ghat) w

  TaylorCoefficients tc;
  tc.quad = kron(w * w_anchor.adjoint(), e.conjugate() * e_anchor.transpose()) +
            kron(w_anchor * w.adjoint(), e_anchor.conjugate() * e.transpose()) -
            kron(w_anchor * w_anchor.adjoint(),
                 e_anchor.conjugate() * e_anchor.transpose());
  tc.lin = vec(e * (s_anc * w.adjoint())) +
           vec(e_anchor * (s_var * w_anchor.adjoint())) -
           vec(e_anchor * (s_anc * w_anchor.adjoint()));
  tc.scalar = 2.0 * std::real(s_anc * std::conj(s_var)) - std::norm(s_anc);
  return tc;
}

double taylor_quadratic_form(const TaylorCoefficients& tc,
                             const Eigen::MatrixXcd& error) {
  const VectorXcd psi = vec(error).conjugate();  // vec(dG*)
  const cplx quad = psi.dot(tc.quad * psi);      // psi^H J psi
  const cplx lin = tc.lin.transpose() * psi;     // j^T psi
  return std::real(quad) + 2.0 * std::real(lin) + tc.scalar;
}

MatrixXcd useful_signal_block(const TaylorCoefficients& tc, double in_k,
                              double tau_gk, double xi_gk, double gamma_bps_hz,
                              std::optional<double> beta) {
  const auto mn = tc.quad.rows();
  if (tc.lin.size() != mn) {
    throw std::invalid_argument("useful_signal_block: coefficient size mismatch");
  }
  if (xi_gk < 0) throw std::invalid_argument("useful_signal_block: xi < 0");
  const double threshold = std::exp2(gamma_bps_hz) - 1.0;
  double corner = tc.scalar - in_k * threshold - tau_gk * xi_gk * xi_gk;
  if (beta) corner -= *beta;

  MatrixXcd block(mn + 1, mn + 1);
  block.topLeftCorner(mn, mn) =
      tc.quad + tau_gk * MatrixXcd::Identity(mn, mn);
  block.topRightCorner(mn, 1) = tc.lin.conjugate();
  block.bottomLeftCorner(1, mn) = tc.lin.transpose();
  block(mn, mn) = corner;
  return block;
}

MatrixXcd interference_block(const MatrixXcd& w_minus_k, const VectorXcd& e,
                             const VectorXcd& h, const MatrixXcd& g_hat,
                             double in_k, double lambda_gk, double xi_gk,
                             double sigma_sq, InterferenceMode mode) {
  const auto n = h.size();
  const auto m = e.size();
  const auto k_minus_1 = w_minus_k.cols();
  if (g_hat.rows() != m || g_hat.cols() != n ||
      (k_minus_1 > 0 && w_minus_k.rows() != n)) {
    throw std::invalid_argument("interference_block: dimension mismatch");
  }

  // T_hat = ((h^H + e^H Ghat) W_{-k})^H
  const VectorXcd t_hat =
      (k_minus_1 > 0)
          ? VectorXcd(((h.adjoint() + e.adjoint() * g_hat) * w_minus_k).adjoint())
          : VectorXcd(0);
  const double corner =
      in_k - sigma_sq - lambda_gk * static_cast<double>(m);

  if (mode == InterferenceMode::kReduced) {
    MatrixXcd block = MatrixXcd::Zero(1 + k_minus_1, 1 + k_minus_1);
    block(0, 0) = corner;
    if (k_minus_1 > 0) {
      block.block(0, 1, 1, k_minus_1) = t_hat.adjoint();
      block.block(1, 0, k_minus_1, 1) = t_hat;
      block.block(1, 1, k_minus_1, k_minus_1) =
          MatrixXcd::Identity(k_minus_1, k_minus_1);
    }
    return block;
  }

  const auto dim = 1 + k_minus_1 + n;
  MatrixXcd block = MatrixXcd::Zero(dim, dim);
  block(0, 0) = corner;
  if (k_minus_1 > 0) {
    block.block(0, 1, 1, k_minus_1) = t_hat.adjoint();
    block.block(1, 0, k_minus_1, 1) = t_hat;
    block.block(1, 1, k_minus_1, k_minus_1) =
        MatrixXcd::Identity(k_minus_1, k_minus_1);
    block.block(1, 1 + k_minus_1, k_minus_1, n) =
        xi_gk * w_minus_k.adjoint();
    block.block(1 + k_minus_1, 1, n, k_minus_1) = xi_gk * w_minus_k;
  }
  block.block(1 + k_minus_1, 1 + k_minus_1, n, n) =
      lambda_gk * MatrixXcd::Identity(n, n);
  return block;
}

MatrixXd realify_psd(const MatrixXcd& hermitian) {
  require_hermitian(hermitian, "realify_psd");
  const auto n = hermitian.rows();
  MatrixXd out(2 * n, 2 * n);
  const MatrixXd re = hermitian.real();
  const MatrixXd im = hermitian.imag();
  out.topLeftCorner(n, n) = re;
  out.topRightCorner(n, n) = -im;
  out.bottomLeftCorner(n, n) = im;
  out.bottomRightCorner(n, n) = re;
  // Symmetrize away representation dust.
  out = 0.5 * (out + out.transpose()).eval();
  return out;
}

LmiBlock::LmiBlock(int dim, std::string label, MatrixXcd constant,
                   std::vector<std::pair<VarRef, MatrixXcd>> coeffs)
    : dim_(dim), label_(std::move(label)), constant_(std::move(constant)),
      coeffs_(std::move(coeffs)) {
  if (constant_.rows() != dim_ || constant_.cols() != dim_) {
    throw std::invalid_argument("LmiBlock: constant has wrong dimension");
  }
  require_hermitian(constant_, "LmiBlock");
  constant_ = 0.5 * (constant_ + constant_.adjoint()).eval();
  for (auto& [ref, coeff] : coeffs_) {
    if (coeff.rows() != dim_ || coeff.cols() != dim_) {
      throw std::invalid_argument("LmiBlock: coefficient has wrong dimension");
    }
    require_hermitian(coeff, "LmiBlock");
    coeff = 0.5 * (coeff + coeff.adjoint()).eval();
  }
}

MatrixXcd LmiBlock::evaluate(const VariableSpace& vars,
                             const Eigen::VectorXd& x) const {
  MatrixXcd value = constant_;
  for (const auto& [ref, coeff] : coeffs_) {
    value += x[vars.flat_index(ref)] * coeff;
  }
  return value;
}

LmiBlock make_affine_lmi(
    int dim, std::string label, const std::vector<VarRef>& vars,
    const std::function<MatrixXcd(const VectorXd&)>& eval) {
  const int nv = static_cast<int>(vars.size());
  const MatrixXcd base = eval(VectorXd::Zero(nv));
  std::vector<std::pair<VarRef, MatrixXcd>> coeffs;
  std::vector<int> coords;
  coeffs.reserve(nv);
  VectorXd probe = VectorXd::Zero(nv);
  for (int i = 0; i < nv; ++i) {
    probe[i] = 1.0;
    MatrixXcd coeff = eval(probe) - base;
    probe[i] = 0.0;
    if (coeff.norm() > 1e-14 * std::max(1.0, base.norm())) {
      coeffs.push_back({vars[i], std::move(coeff)});
      coords.push_back(i);
    }
  }

  // Spot check affinity at a pseudorandom interior point.
  std::mt19937_64 rng(0x9e3779b97f4a7c15ull ^ static_cast<uint64_t>(nv));
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  VectorXd pt(nv);
  for (int i = 0; i < nv; ++i) pt[i] = unit(rng);
  MatrixXcd expected = base;
  for (size_t c = 0; c < coeffs.size(); ++c) {
    expected += pt[coords[c]] * coeffs[c].second;
  }
  const MatrixXcd actual = eval(pt);
  if ((actual - expected).norm() > 1e-6 * std::max(1.0, actual.norm())) {
    throw std::invalid_argument("make_affine_lmi: evaluator is not affine in '" +
                                label + "'");
  }

  return LmiBlock(dim, std::move(label), base, std::move(coeffs));
}

ModulusConstraints ccp_modulus_constraints(VarId e_var, VarId d_var,
                                           const Eigen::VectorXcd& e_anchor) {
  const int m = static_cast<int>(e_anchor.size());
  ModulusConstraints out;
  for (int i = 0; i < m; ++i) {
    if (std::abs(e_anchor[i]) <= 0.0) {
      throw std::invalid_argument(
          "ccp_modulus_constraints: zero anchor entry degenerates the linearization");
    }
    const double ar = e_anchor[i].real();
    const double ai = e_anchor[i].imag();
    const double mag_sq = std::norm(e_anchor[i]);

    // 2 Re(e_m^H anchor_m) + d_m - 1 - |anchor_m|^2 >= 0
    LinearRow row;
    row.label = "modulus_lb_" + std::to_string(i);
    row.expr.add({e_var, i}, 2.0 * ar);
    row.expr.add({e_var, m + i}, 2.0 * ai);
    row.expr.add({d_var, i}, 1.0);
    row.expr.constant = -1.0 - mag_sq;
    out.linear.push_back(std::move(row));

    // |e_m|^2 <= 1 + d_{M+m}: ||(Re e, Im e, d/2)|| <= 1 + d/2
    SocRow soc;
    soc.label = "modulus_ub_" + std::to_string(i);
    AffineExpr re_part, im_part, half_d, bound;
    re_part.add({e_var, i}, 1.0);
    im_part.add({e_var, m + i}, 1.0);
    half_d.add({d_var, m + i}, 0.5);
    bound.add({d_var, m + i}, 0.5);
    bound.constant = 1.0;
    soc.members = {re_part, im_part, half_d};
    soc.bound = bound;
    out.soc.push_back(std::move(soc));
  }
  for (int i = 0; i < 2 * m; ++i) {
    LinearRow row;
    row.label = "slack_nonneg_" + std::to_string(i);
    row.expr.add({d_var, i}, 1.0);
    out.linear.push_back(std::move(row));
  }
  return out;
}

}  // namespace cachebeam
