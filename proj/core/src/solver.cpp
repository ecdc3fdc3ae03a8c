#include "cachebeam/solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

namespace cachebeam {

using Eigen::MatrixXd;
using Eigen::VectorXd;

VarId VariableSpace::add(std::string name, int dim, VarKind kind) {
  if (dim < 1) throw std::invalid_argument("VariableSpace::add: dim must be >= 1");
  Entry entry;
  entry.name = std::move(name);
  entry.dim = dim;
  entry.kind = kind;
  entry.offset = total_dim_;
  entries_.push_back(std::move(entry));
  total_dim_ += dim;
  return VarId{static_cast<int>(entries_.size()) - 1};
}

const VariableSpace::Entry& VariableSpace::entry(VarId id) const {
  if (!id.valid() || id.value >= count()) {
    throw std::out_of_range("VariableSpace: bad variable id");
  }
  return entries_[id.value];
}

int VariableSpace::flat_index(VarRef ref) const {
  const Entry& e = entry(ref.id);
  if (ref.comp < 0 || ref.comp >= e.dim) {
    throw std::out_of_range("VariableSpace: component out of range for " + e.name);
  }
  return e.offset + ref.comp;
}

double AffineExpr::evaluate(const VariableSpace& vars, const VectorXd& x) const {
  double value = constant;
  for (const auto& [ref, coeff] : terms) value += coeff * x[vars.flat_index(ref)];
  return value;
}

const char* to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::kOptimal: return "optimal";
    case SolveStatus::kInfeasible: return "infeasible";
    case SolveStatus::kUnbounded: return "unbounded";
    case SolveStatus::kNumericalFailure: return "numerical-failure";
    case SolveStatus::kIterationLimit: return "iteration-limit";
  }
  return "unknown";
}

Eigen::VectorXcd ConicSolution::complex_value(VarId id) const {
  const VectorXd& packed = value(id);
  const auto half = packed.size() / 2;
  Eigen::VectorXcd out(half);
  for (Eigen::Index i = 0; i < half; ++i) {
    out[i] = std::complex<double>(packed[i], packed[half + i]);
  }
  return out;
}

SolveOptions SolveOptions::from_env(SolveOptions base) {
  if (const char* tol = std::getenv("CACHEBEAM_SOLVER_TOL")) {
    base.tol = std::stod(tol);
  }
  if (const char* iters = std::getenv("CACHEBEAM_SOLVER_MAXITER")) {
    base.max_iterations = std::stoi(iters);
  }
  return base;
}

void ConicProblem::check_ref(VarRef ref, const char* who) const {
  (void)who;
  vars_.flat_index(ref);  // throws on bad id/component
}

void ConicProblem::add_lmi(const LmiBlock& block) {
  RealBlock real;
  real.dim = 2 * block.dim();
  real.label = block.label();
  real.constant = realify_psd(block.constant());
  real.coeffs.reserve(block.coeffs().size());
  for (const auto& [ref, coeff] : block.coeffs()) {
    check_ref(ref, "add_lmi");
    real.coeffs.push_back({ref, realify_psd(coeff)});
  }
  psd_blocks_.push_back(std::move(real));
}

void ConicProblem::add_real_block(RealBlock block) {
  const double scale = std::max(1.0, block.constant.norm());
  if ((block.constant - block.constant.transpose()).norm() > 1e-9 * scale) {
    throw std::invalid_argument("add_real_block: constant not symmetric");
  }
  block.constant = 0.5 * (block.constant + block.constant.transpose()).eval();
  for (auto& [ref, coeff] : block.coeffs) {
    check_ref(ref, "add_real_block");
    if ((coeff - coeff.transpose()).norm() > 1e-9 * std::max(1.0, coeff.norm())) {
      throw std::invalid_argument("add_real_block: coefficient not symmetric");
    }
    coeff = 0.5 * (coeff + coeff.transpose()).eval();
  }
  psd_blocks_.push_back(std::move(block));
}

void ConicProblem::add_row(LinearRow row) {
  for (const auto& [ref, coeff] : row.expr.terms) check_ref(ref, "add_row");
  rows_.push_back(std::move(row));
}

void ConicProblem::add_soc(SocRow row) {
  for (const auto& member : row.members) {
    for (const auto& [ref, coeff] : member.terms) check_ref(ref, "add_soc");
  }
  for (const auto& [ref, coeff] : row.bound.terms) check_ref(ref, "add_soc");
  soc_rows_.push_back(std::move(row));
}

ConicProblem assemble(VariableSpace vars, Objective objective,
                      const std::vector<LmiBlock>& lmi_blocks,
                      const std::vector<LinearRow>& scalar_rows,
                      const std::vector<SocRow>& soc_rows) {
  ConicProblem problem;
  problem.vars() = std::move(vars);
  problem.set_objective(std::move(objective));
  for (const auto& block : lmi_blocks) problem.add_lmi(block);
  for (const auto& row : scalar_rows) problem.add_row(row);
  for (const auto& row : soc_rows) problem.add_soc(row);
  return problem;
}

// ---------------------------------------------------------------------------
// Internal standard form:
//
//   min c^T x   s.t.   a_lp x + b_lp >= 0,   F0_b + sum_i x_i F_ib >= 0,
//
// solved by a homogeneous self-dual embedding with NT scaling. Coefficients
// carry an optional eigen-factorization so Schur assembly runs in the scaled
// space at O(n^2 r) per coefficient instead of O(n^3).
// ---------------------------------------------------------------------------

namespace {

struct Coeff {
  int var = -1;
  MatrixXd dense;
  bool has_factor = false;
  MatrixXd factor;    // n x r eigenvectors
  VectorXd factor_w;  // r eigenvalues
};

struct PsdBlock {
  int n = 0;
  std::string label;
  MatrixXd f0;
  std::vector<Coeff> coeffs;
};

struct Internal {
  int m = 0;
  VectorXd c;
  MatrixXd a_lp;  // p x m
  VectorXd b_lp;
  std::vector<PsdBlock> blocks;

  // Recovery to the flattened space: x_full = shift + basis * x.
  int full_dim = 0;
  VectorXd shift;
  MatrixXd basis;

  VectorXd expand(const VectorXd& x) const { return shift + basis * x; }
};

struct FlatRow {
  std::vector<std::pair<int, double>> terms;
  double constant = 0.0;
};

struct FlatBlock {
  int n = 0;
  std::string label;
  MatrixXd f0;
  std::vector<std::pair<int, MatrixXd>> coeffs;
};

struct Flattened {
  int full_dim = 0;
  VectorXd c;
  std::vector<FlatRow> ineq;
  std::vector<FlatRow> eq;
  std::vector<FlatBlock> blocks;
};

FlatBlock arrow_block(const VariableSpace& vars,
                      const std::vector<AffineExpr>& members,
                      const AffineExpr& bound, const std::string& label) {
  // [[bound, u^T], [u, bound I]] >= 0  <=>  bound >= ||u||_2.
  const int q = static_cast<int>(members.size());
  FlatBlock block;
  block.n = q + 1;
  block.label = label;
  block.f0 = MatrixXd::Zero(q + 1, q + 1);
  block.f0(0, 0) = bound.constant;
  for (int i = 0; i < q; ++i) {
    block.f0(0, i + 1) = members[i].constant;
    block.f0(i + 1, 0) = members[i].constant;
    block.f0(i + 1, i + 1) = bound.constant;
  }
  std::map<int, MatrixXd> by_flat;
  auto slot = [&](int flat) -> MatrixXd& {
    auto it = by_flat.find(flat);
    if (it == by_flat.end()) {
      it = by_flat.emplace(flat, MatrixXd::Zero(q + 1, q + 1)).first;
    }
    return it->second;
  };
  for (const auto& [ref, w] : bound.terms) {
    MatrixXd& cm = slot(vars.flat_index(ref));
    cm(0, 0) += w;
    for (int i = 0; i < q; ++i) cm(i + 1, i + 1) += w;
  }
  for (int i = 0; i < q; ++i) {
    for (const auto& [ref, w] : members[i].terms) {
      MatrixXd& cm = slot(vars.flat_index(ref));
      cm(0, i + 1) += w;
      cm(i + 1, 0) += w;
    }
  }
  for (auto& [flat, cm] : by_flat) block.coeffs.push_back({flat, std::move(cm)});
  return block;
}

Flattened flatten(const ConicProblem& problem) {
  const VariableSpace& vars = problem.vars();
  const int user_dim = vars.total_dim();
  const bool has_sq = !problem.objective().squared_norms.empty();
  Flattened flat;
  flat.full_dim = user_dim + (has_sq ? 1 : 0);
  const int epi_index = user_dim;

  flat.c = VectorXd::Zero(flat.full_dim);
  for (const auto& [ref, w] : problem.objective().linear) {
    flat.c[vars.flat_index(ref)] += w;
  }
  if (has_sq) flat.c[epi_index] = 1.0;

  for (const auto& row : problem.rows()) {
    FlatRow fr;
    fr.constant = row.expr.constant;
    for (const auto& [ref, w] : row.expr.terms) {
      fr.terms.push_back({vars.flat_index(ref), w});
    }
    if (row.sense == RowSense::kGreaterEqual) {
      flat.ineq.push_back(std::move(fr));
    } else {
      flat.eq.push_back(std::move(fr));
    }
  }
  for (int v = 0; v < vars.count(); ++v) {
    const VarId id{v};
    if (vars.kind(id) != VarKind::kNonneg) continue;
    for (int comp = 0; comp < vars.dim(id); ++comp) {
      FlatRow fr;
      fr.terms.push_back({vars.flat_index({id, comp}), 1.0});
      flat.ineq.push_back(std::move(fr));
    }
  }

  for (const auto& block : problem.psd_blocks()) {
    FlatBlock fb;
    fb.n = block.dim;
    fb.label = block.label;
    fb.f0 = block.constant;
    std::map<int, MatrixXd> merged;
    for (const auto& [ref, coeff] : block.coeffs) {
      const int flat_idx = vars.flat_index(ref);
      auto it = merged.find(flat_idx);
      if (it == merged.end()) {
        merged.emplace(flat_idx, coeff);
      } else {
        it->second += coeff;
      }
    }
    for (auto& [flat_idx, coeff] : merged) {
      fb.coeffs.push_back({flat_idx, std::move(coeff)});
    }
    flat.blocks.push_back(std::move(fb));
  }

  for (const auto& soc : problem.soc_rows()) {
    flat.blocks.push_back(arrow_block(vars, soc.members, soc.bound, soc.label));
  }
  if (has_sq) {
    // t >= sum_g w_g ||x_g||^2 as [[t, u^T], [u, I]] with u = sqrt(w) x.
    int q = 0;
    for (const auto& [id, w] : problem.objective().squared_norms) q += vars.dim(id);
    FlatBlock fb;
    fb.n = q + 1;
    fb.label = "objective_epigraph";
    fb.f0 = MatrixXd::Zero(q + 1, q + 1);
    fb.f0.bottomRightCorner(q, q).setIdentity();
    MatrixXd t_coeff = MatrixXd::Zero(q + 1, q + 1);
    t_coeff(0, 0) = 1.0;
    fb.coeffs.push_back({epi_index, std::move(t_coeff)});
    int pos = 0;
    for (const auto& [id, w] : problem.objective().squared_norms) {
      if (w < 0) throw std::invalid_argument("objective: squared-norm weight < 0");
      const double sw = std::sqrt(w);
      for (int comp = 0; comp < vars.dim(id); ++comp, ++pos) {
        MatrixXd cm = MatrixXd::Zero(q + 1, q + 1);
        cm(0, pos + 1) = sw;
        cm(pos + 1, 0) = sw;
        fb.coeffs.push_back({vars.flat_index({id, comp}), std::move(cm)});
      }
    }
    flat.blocks.push_back(std::move(fb));
  }
  return flat;
}

enum class PresolveVerdict { kProceed, kInfeasible, kUnbounded };

PresolveVerdict build_internal(const Flattened& flat, Internal& in) {
  const int full_dim = flat.full_dim;
  in.full_dim = full_dim;
  in.shift = VectorXd::Zero(full_dim);

  MatrixXd nullspace;
  const bool identity_map = flat.eq.empty();
  if (!identity_map) {
    // Eliminate equalities: x = x_p + N z keeps the cone interior nonempty.
    const int ne = static_cast<int>(flat.eq.size());
    MatrixXd e_mat = MatrixXd::Zero(ne, full_dim);
    VectorXd f_vec = VectorXd::Zero(ne);
    for (int r = 0; r < ne; ++r) {
      for (const auto& [idx, w] : flat.eq[r].terms) e_mat(r, idx) += w;
      f_vec[r] = -flat.eq[r].constant;
    }
    Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(e_mat);
    const VectorXd x_p = cod.solve(f_vec);
    if ((e_mat * x_p - f_vec).norm() > 1e-8 * (1.0 + f_vec.norm())) {
      return PresolveVerdict::kInfeasible;
    }
    Eigen::ColPivHouseholderQR<MatrixXd> qr(e_mat.transpose());
    const int rank = static_cast<int>(qr.rank());
    const MatrixXd q_full = qr.householderQ();
    nullspace = q_full.rightCols(full_dim - rank);
    in.shift = x_p;
  } else {
    nullspace = MatrixXd::Identity(full_dim, full_dim);
  }
  const int nz = static_cast<int>(nullspace.cols());

  const VectorXd c_z = nullspace.transpose() * flat.c;

  std::vector<FlatRow> rows_z(flat.ineq.size());
  for (size_t r = 0; r < flat.ineq.size(); ++r) {
    VectorXd dense_row = VectorXd::Zero(full_dim);
    double constant = flat.ineq[r].constant;
    for (const auto& [idx, w] : flat.ineq[r].terms) dense_row[idx] += w;
    constant += dense_row.dot(in.shift);
    const VectorXd row_z =
        identity_map ? dense_row : VectorXd(nullspace.transpose() * dense_row);
    FlatRow& out = rows_z[r];
    out.constant = constant;
    for (int j = 0; j < nz; ++j) {
      if (std::abs(row_z[j]) > 1e-14) out.terms.push_back({j, row_z[j]});
    }
  }

  std::vector<FlatBlock> blocks_z;
  blocks_z.reserve(flat.blocks.size());
  for (const auto& fb : flat.blocks) {
    if (identity_map) {
      blocks_z.push_back(fb);
      continue;
    }
    FlatBlock out;
    out.n = fb.n;
    out.label = fb.label;
    out.f0 = fb.f0;
    for (const auto& [idx, coeff] : fb.coeffs) out.f0 += in.shift[idx] * coeff;
    for (int j = 0; j < nz; ++j) {
      MatrixXd cm = MatrixXd::Zero(fb.n, fb.n);
      bool nonzero = false;
      for (const auto& [idx, coeff] : fb.coeffs) {
        const double w = nullspace(idx, j);
        if (std::abs(w) > 1e-14) {
          cm += w * coeff;
          nonzero = true;
        }
      }
      if (nonzero && cm.norm() > 1e-12) out.coeffs.push_back({j, std::move(cm)});
    }
    blocks_z.push_back(std::move(out));
  }

  // Variables that touch no cone are pinned (c_j == 0) or prove the
  // objective unbounded.
  std::vector<bool> used(nz, false);
  for (const auto& row : rows_z) {
    for (const auto& [j, w] : row.terms) used[j] = true;
  }
  for (const auto& fb : blocks_z) {
    for (const auto& [j, coeff] : fb.coeffs) used[j] = true;
  }
  std::vector<int> remap(nz, -1);
  std::vector<int> kept;
  for (int j = 0; j < nz; ++j) {
    if (used[j]) {
      remap[j] = static_cast<int>(kept.size());
      kept.push_back(j);
    } else if (std::abs(c_z[j]) > 1e-12) {
      return PresolveVerdict::kUnbounded;
    }
  }

  in.m = static_cast<int>(kept.size());
  in.c = VectorXd::Zero(in.m);
  in.basis = MatrixXd::Zero(full_dim, in.m);
  for (int i = 0; i < in.m; ++i) {
    in.c[i] = c_z[kept[i]];
    in.basis.col(i) = nullspace.col(kept[i]);
  }

  const int p = static_cast<int>(rows_z.size());
  in.a_lp = MatrixXd::Zero(p, in.m);
  in.b_lp = VectorXd::Zero(p);
  for (int r = 0; r < p; ++r) {
    in.b_lp[r] = rows_z[r].constant;
    for (const auto& [j, w] : rows_z[r].terms) in.a_lp(r, remap[j]) += w;
    const double scale = std::max({1e-12, in.a_lp.row(r).cwiseAbs().maxCoeff(),
                                   std::abs(in.b_lp[r])});
    in.a_lp.row(r) /= scale;
    in.b_lp[r] /= scale;
  }

  for (auto& fb : blocks_z) {
    PsdBlock block;
    block.n = fb.n;
    block.label = fb.label;
    double scale = fb.f0.cwiseAbs().maxCoeff();
    for (const auto& [j, coeff] : fb.coeffs) {
      scale = std::max(scale, coeff.cwiseAbs().maxCoeff());
    }
    scale = std::max(scale, 1e-12);
    block.f0 = fb.f0 / scale;
    block.coeffs.reserve(fb.coeffs.size());
    for (const auto& [j, coeff] : fb.coeffs) {
      Coeff entry;
      entry.var = remap[j];
      entry.dense = coeff / scale;
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(entry.dense);
      const VectorXd evals = es.eigenvalues();
      const double emax = std::max(1e-300, evals.cwiseAbs().maxCoeff());
      std::vector<int> sig;
      for (int t = 0; t < evals.size(); ++t) {
        if (std::abs(evals[t]) > 1e-12 * emax) sig.push_back(t);
      }
      const int rank = static_cast<int>(sig.size());
      if (rank > 0 && rank * 3 <= block.n) {
        entry.has_factor = true;
        entry.factor.resize(block.n, rank);
        entry.factor_w.resize(rank);
        for (int t = 0; t < rank; ++t) {
          entry.factor.col(t) = es.eigenvectors().col(sig[t]);
          entry.factor_w[t] = evals[sig[t]];
        }
      }
      block.coeffs.push_back(std::move(entry));
    }
    in.blocks.push_back(std::move(block));
  }
  return PresolveVerdict::kProceed;
}

// --------------------------- IPM machinery --------------------------------

double sym_inner(const MatrixXd& a, const MatrixXd& b) {
  return (a.array() * b.array()).sum();
}

double coeff_inner(const Coeff& coeff, const MatrixXd& v) {
  if (coeff.has_factor) {
    double acc = 0.0;
    for (int t = 0; t < coeff.factor_w.size(); ++t) {
      acc += coeff.factor_w[t] * coeff.factor.col(t).dot(v * coeff.factor.col(t));
    }
    return acc;
  }
  return sym_inner(coeff.dense, v);
}

double min_eig(const MatrixXd& sym) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double max_step_psd(const Eigen::LLT<MatrixXd>& llt, const MatrixXd& ds) {
  MatrixXd b = llt.matrixL().solve(ds);
  b = llt.matrixL().solve(b.transpose()).transpose();
  const double lmin = min_eig(0.5 * (b + b.transpose()));
  if (lmin >= -1e-14) return std::numeric_limits<double>::infinity();
  return -1.0 / lmin;
}

struct ConeState {
  VectorXd x;
  VectorXd s_lp, z_lp;
  std::vector<MatrixXd> s_psd, z_psd;
  double tau = 1.0, kappa = 1.0;
};

struct BlockScaling {
  Eigen::LLT<MatrixXd> llt_s;
  Eigen::LLT<MatrixXd> llt_z;
  MatrixXd sinv;
  MatrixXd winv;
  MatrixXd t0;                    // Rinv F0 Rinv^T
  std::vector<MatrixXd> t_dense;  // per coeff, dense path
  std::vector<MatrixXd> pt;       // per coeff, factored path: Rinv * P
};

struct Scaling {
  VectorXd lp_zs;  // z/s elementwise
  std::vector<BlockScaling> blocks;
};

struct Residuals {
  VectorXd rd_lp;                // s - b tau - A x
  std::vector<MatrixXd> rd_psd;  // S - F0 tau - sum x_i F_i
  VectorXd rp;                   // c tau - <F, Z>
  double rg = 0.0;               // kappa + c'x + <F0, Z>
  double f0_dot_z = 0.0;         // <F0, Z> + b'z
  double mu = 0.0;
  double compl_total = 0.0;
  double rd_norm = 0.0;
};

struct Direction {
  VectorXd dx;
  double dtau = 0.0, dkappa = 0.0;
  VectorXd ds_lp, dz_lp;
  std::vector<MatrixXd> ds_psd, dz_psd;
};

class HsdSolver {
 public:
  HsdSolver(const Internal& in, const SolveOptions& opt) : in_(in), opt_(opt) {
    nu_ = static_cast<double>(in_.b_lp.size());
    for (const auto& b : in_.blocks) nu_ += b.n;
    norm_f0_ = in_.b_lp.norm();
    for (const auto& b : in_.blocks) {
      norm_f0_ = std::hypot(norm_f0_, b.f0.norm());
    }
    norm_c_ = in_.c.norm();
  }

  SolveStatus run(VectorXd& x_out, SolveStats& stats);

 private:
  Residuals residuals(const ConeState& cone) const;
  bool compute_scaling(const ConeState& cone, Scaling& sc) const;
  void assemble_schur(const Scaling& sc, MatrixXd& schur, VectorXd& g,
                      double& g0) const;
  Direction direction(const ConeState& cone, const Scaling& sc,
                      const Residuals& res, const Eigen::LLT<MatrixXd>& schur_llt,
                      const VectorXd& g, double g0, double eta,
                      double sigma) const;
  double max_step(const ConeState& cone, const Scaling& sc,
                  const Direction& dir) const;
  double compl_after(const ConeState& cone, const Direction& dir,
                     double alpha) const;
  SolveStatus certificate_status(const ConeState& cone,
                                 const Residuals& res) const;

  const Internal& in_;
  SolveOptions opt_;
  double nu_ = 0.0;
  double norm_f0_ = 0.0;
  double norm_c_ = 0.0;
};

Residuals HsdSolver::residuals(const ConeState& cone) const {
  Residuals res;
  res.rd_lp = cone.s_lp - in_.b_lp * cone.tau - in_.a_lp * cone.x;
  res.rd_psd.resize(in_.blocks.size());
  double rd_sq = res.rd_lp.squaredNorm();
  for (size_t b = 0; b < in_.blocks.size(); ++b) {
    MatrixXd rd = cone.s_psd[b] - in_.blocks[b].f0 * cone.tau;
    for (const auto& coeff : in_.blocks[b].coeffs) {
      rd.noalias() -= cone.x[coeff.var] * coeff.dense;
    }
    rd_sq += rd.squaredNorm();
    res.rd_psd[b] = std::move(rd);
  }
  res.rd_norm = std::sqrt(rd_sq);

  res.rp = in_.c * cone.tau;
  res.rp.noalias() -= in_.a_lp.transpose() * cone.z_lp;
  res.f0_dot_z = in_.b_lp.dot(cone.z_lp);
  for (size_t b = 0; b < in_.blocks.size(); ++b) {
    for (const auto& coeff : in_.blocks[b].coeffs) {
      res.rp[coeff.var] -= coeff_inner(coeff, cone.z_psd[b]);
    }
    res.f0_dot_z += sym_inner(in_.blocks[b].f0, cone.z_psd[b]);
  }
  res.rg = cone.kappa + in_.c.dot(cone.x) + res.f0_dot_z;

  res.compl_total = cone.s_lp.dot(cone.z_lp);
  for (size_t b = 0; b < in_.blocks.size(); ++b) {
    res.compl_total += sym_inner(cone.s_psd[b], cone.z_psd[b]);
  }
  res.mu = (res.compl_total + cone.tau * cone.kappa) / (nu_ + 1.0);
  return res;
}

bool HsdSolver::compute_scaling(const ConeState& cone, Scaling& sc) const {
  sc.lp_zs = cone.z_lp.cwiseQuotient(cone.s_lp);
  sc.blocks.resize(in_.blocks.size());
  for (size_t b = 0; b < in_.blocks.size(); ++b) {
    const auto& block = in_.blocks[b];
    auto& bs = sc.blocks[b];
    bs.llt_s.compute(cone.s_psd[b]);
    bs.llt_z.compute(cone.z_psd[b]);
    if (bs.llt_s.info() != Eigen::Success || bs.llt_z.info() != Eigen::Success) {
      return false;
    }
    bs.sinv = bs.llt_s.solve(MatrixXd::Identity(block.n, block.n));

    // NT scaling: with Z = L L^T, W = L^{-T} (L^T S L)^{1/2} L^{-1} satisfies
    // W Z W = S; Rinv = D^{-1/4} U^T L^T gives W^{-1} = Rinv^T Rinv.
    const MatrixXd lt = MatrixXd(bs.llt_z.matrixU());
    const MatrixXd a = lt * cone.s_psd[b] * lt.transpose();
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (a + a.transpose()));
    if (es.eigenvalues().minCoeff() <= 0.0) return false;
    const VectorXd d4i = es.eigenvalues().array().pow(-0.25);
    const MatrixXd rinv = d4i.asDiagonal() * (es.eigenvectors().transpose() * lt);
    bs.winv.noalias() = rinv.transpose() * rinv;
    bs.t0.noalias() = rinv * block.f0 * rinv.transpose();
    bs.t_dense.assign(block.coeffs.size(), MatrixXd());
    bs.pt.assign(block.coeffs.size(), MatrixXd());
    for (size_t ci = 0; ci < block.coeffs.size(); ++ci) {
      const Coeff& coeff = block.coeffs[ci];
      if (coeff.has_factor) {
        bs.pt[ci].noalias() = rinv * coeff.factor;
      } else {
        bs.t_dense[ci].noalias() = rinv * coeff.dense * rinv.transpose();
      }
    }
  }
  return true;
}

void HsdSolver::assemble_schur(const Scaling& sc, MatrixXd& schur, VectorXd& g,
                               double& g0) const {
  const int m = in_.m;
  schur = MatrixXd::Zero(m, m);
  g = VectorXd::Zero(m);
  g0 = 0.0;

  if (in_.b_lp.size() > 0) {
    const MatrixXd aw = sc.lp_zs.asDiagonal() * in_.a_lp;
    schur.noalias() += in_.a_lp.transpose() * aw;
    g.noalias() += aw.transpose() * in_.b_lp;
    g0 += in_.b_lp.dot(sc.lp_zs.cwiseProduct(in_.b_lp));
  }

  for (size_t b = 0; b < in_.blocks.size(); ++b) {
    const auto& block = in_.blocks[b];
    const auto& bs = sc.blocks[b];
    const size_t nc = block.coeffs.size();
    for (size_t i = 0; i < nc; ++i) {
      const int vi = block.coeffs[i].var;
      const bool fi = block.coeffs[i].has_factor;
      double gi;
      if (fi) {
        gi = 0.0;
        const auto& wi = block.coeffs[i].factor_w;
        for (int t = 0; t < wi.size(); ++t) {
          gi += wi[t] * bs.pt[i].col(t).dot(bs.t0 * bs.pt[i].col(t));
        }
      } else {
        gi = sym_inner(bs.t_dense[i], bs.t0);
      }
      g[vi] += gi;
      for (size_t j = i; j < nc; ++j) {
        const int vj = block.coeffs[j].var;
        const bool fj = block.coeffs[j].has_factor;
        double mij = 0.0;
        if (fi && fj) {
          const MatrixXd cross = bs.pt[i].transpose() * bs.pt[j];
          const auto& wi = block.coeffs[i].factor_w;
          const auto& wj = block.coeffs[j].factor_w;
          for (int s = 0; s < wi.size(); ++s) {
            for (int t = 0; t < wj.size(); ++t) {
              mij += wi[s] * wj[t] * cross(s, t) * cross(s, t);
            }
          }
        } else if (fi) {
          const auto& wi = block.coeffs[i].factor_w;
          for (int t = 0; t < wi.size(); ++t) {
            mij += wi[t] * bs.pt[i].col(t).dot(bs.t_dense[j] * bs.pt[i].col(t));
          }
        } else if (fj) {
          const auto& wj = block.coeffs[j].factor_w;
          for (int t = 0; t < wj.size(); ++t) {
            mij += wj[t] * bs.pt[j].col(t).dot(bs.t_dense[i] * bs.pt[j].col(t));
          }
        } else {
          mij = sym_inner(bs.t_dense[i], bs.t_dense[j]);
        }
        schur(vi, vj) += mij;
        if (vi != vj) schur(vj, vi) += mij;
      }
    }
    g0 += sym_inner(bs.t0, bs.t0);
  }
}

Direction HsdSolver::direction(const ConeState& cone, const Scaling& sc,
                               const Residuals& res,
                               const Eigen::LLT<MatrixXd>& schur_llt,
                               const VectorXd& g, double g0, double eta,
                               double sigma) const {
  const double smu = sigma * res.mu;
  const size_t nb = in_.blocks.size();

  // Schur right-hand sides: v_i = <F_i, V> with
  // V = smu S^{-1} - Z + eta W^{-1} R_d W^{-1}; the recovery of dZ uses
  // U = smu S^{-1} - Z (without the residual term).
  VectorXd v = VectorXd::Zero(in_.m);
  double v0 = 0.0;
  VectorXd v_lp, u_lp;
  if (in_.b_lp.size() > 0) {
    u_lp = smu * cone.s_lp.cwiseInverse() - cone.z_lp;
    v_lp = u_lp + eta * sc.lp_zs.cwiseProduct(res.rd_lp);
    v.noalias() += in_.a_lp.transpose() * v_lp;
    v0 += in_.b_lp.dot(v_lp);
  }
  std::vector<MatrixXd> u_psd(nb), v_psd(nb);
  for (size_t b = 0; b < nb; ++b) {
    const auto& bs = sc.blocks[b];
    u_psd[b] = smu * bs.sinv - cone.z_psd[b];
    MatrixXd vb = u_psd[b];
    if (eta != 0.0) {
      vb.noalias() += eta * (bs.winv * res.rd_psd[b] * bs.winv);
      vb = 0.5 * (vb + vb.transpose()).eval();
    }
    for (const auto& coeff : in_.blocks[b].coeffs) {
      v[coeff.var] += coeff_inner(coeff, vb);
    }
    v0 += sym_inner(in_.blocks[b].f0, vb);
    v_psd[b] = std::move(vb);
  }

  const VectorXd rhs_x = v - eta * res.rp;
  const double rhs_tau =
      -eta * res.rg - (smu - cone.tau * cone.kappa) / cone.tau - v0;

  const VectorXd p_dir = schur_llt.solve(rhs_x);
  const VectorXd q_dir = schur_llt.solve(in_.c + g);
  const VectorXd c_minus_g = in_.c - g;
  double denom = c_minus_g.dot(q_dir) + g0 + cone.kappa / cone.tau;
  if (!(denom > 1e-300)) denom = 1e-300;

  Direction dir;
  dir.dtau = (c_minus_g.dot(p_dir) - rhs_tau) / denom;
  dir.dx = p_dir - q_dir * dir.dtau;

  dir.ds_lp = in_.a_lp * dir.dx + in_.b_lp * dir.dtau - eta * res.rd_lp;
  dir.dz_lp = u_lp - sc.lp_zs.cwiseProduct(dir.ds_lp);
  dir.ds_psd.resize(nb);
  dir.dz_psd.resize(nb);
  for (size_t b = 0; b < nb; ++b) {
    MatrixXd ds = in_.blocks[b].f0 * dir.dtau - eta * res.rd_psd[b];
    for (const auto& coeff : in_.blocks[b].coeffs) {
      ds.noalias() += dir.dx[coeff.var] * coeff.dense;
    }
    ds = 0.5 * (ds + ds.transpose()).eval();
    MatrixXd dz = u_psd[b] - sc.blocks[b].winv * ds * sc.blocks[b].winv;
    dz = 0.5 * (dz + dz.transpose()).eval();
    dir.ds_psd[b] = std::move(ds);
    dir.dz_psd[b] = std::move(dz);
  }
  dir.dkappa = (smu - cone.tau * cone.kappa - cone.kappa * dir.dtau) / cone.tau;
  return dir;
}

double HsdSolver::max_step(const ConeState& cone, const Scaling& sc,
                           const Direction& dir) const {
  double alpha = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < cone.s_lp.size(); ++i) {
    if (dir.ds_lp[i] < 0) alpha = std::min(alpha, -cone.s_lp[i] / dir.ds_lp[i]);
    if (dir.dz_lp[i] < 0) alpha = std::min(alpha, -cone.z_lp[i] / dir.dz_lp[i]);
  }
  for (size_t b = 0; b < in_.blocks.size(); ++b) {
    alpha = std::min(alpha, max_step_psd(sc.blocks[b].llt_s, dir.ds_psd[b]));
    alpha = std::min(alpha, max_step_psd(sc.blocks[b].llt_z, dir.dz_psd[b]));
  }
  if (dir.dtau < 0) alpha = std::min(alpha, -cone.tau / dir.dtau);
  if (dir.dkappa < 0) alpha = std::min(alpha, -cone.kappa / dir.dkappa);
  return alpha;
}

double HsdSolver::compl_after(const ConeState& cone, const Direction& dir,
                              double alpha) const {
  double total = (cone.s_lp + alpha * dir.ds_lp)
                     .dot(cone.z_lp + alpha * dir.dz_lp);
  for (size_t b = 0; b < in_.blocks.size(); ++b) {
    total += sym_inner(cone.s_psd[b] + alpha * dir.ds_psd[b],
                       cone.z_psd[b] + alpha * dir.dz_psd[b]);
  }
  total += (cone.tau + alpha * dir.dtau) * (cone.kappa + alpha * dir.dkappa);
  return total / (nu_ + 1.0);
}

SolveStatus HsdSolver::certificate_status(const ConeState& cone,
                                          const Residuals& res) const {
  // Infeasibility: Z >= 0 with <F_i, Z> ~ 0 and <F0, Z> < 0.
  const VectorXd fz = in_.c * cone.tau - res.rp;  // <F_i, Z> per variable
  const double zeta = -res.f0_dot_z;
  if (zeta > 1e-12 && fz.lpNorm<Eigen::Infinity>() <= 1e-6 * zeta) {
    return SolveStatus::kInfeasible;
  }
  // Unboundedness: ray x with Sum x_i F_i >= -err and c'x < 0.
  const double cx = in_.c.dot(cone.x);
  const double ray_err = res.rd_norm + cone.tau * norm_f0_;
  if (cx < -1e-12 && ray_err <= 1e-6 * (-cx)) {
    return SolveStatus::kUnbounded;
  }
  return SolveStatus::kNumericalFailure;
}

SolveStatus HsdSolver::run(VectorXd& x_out, SolveStats& stats) {
  const int p = static_cast<int>(in_.b_lp.size());
  ConeState cone;
  cone.x = VectorXd::Zero(in_.m);
  cone.s_lp = VectorXd::Ones(p);
  cone.z_lp = VectorXd::Ones(p);
  cone.s_psd.reserve(in_.blocks.size());
  cone.z_psd.reserve(in_.blocks.size());
  for (const auto& block : in_.blocks) {
    cone.s_psd.push_back(MatrixXd::Identity(block.n, block.n));
    cone.z_psd.push_back(MatrixXd::Identity(block.n, block.n));
  }

  int stall = 0;
  for (int iter = 0; iter < opt_.max_iterations; ++iter) {
    const Residuals res = residuals(cone);
    const double obj_p = in_.c.dot(cone.x) / cone.tau;
    const double obj_d = -res.f0_dot_z / cone.tau;
    const double res_p = res.rd_norm / (cone.tau * (1.0 + norm_f0_));
    const double res_d = res.rp.norm() / (cone.tau * (1.0 + norm_c_));
    const double gap = res.compl_total / (cone.tau * cone.tau) /
                       (1.0 + std::abs(obj_p) + std::abs(obj_d));
    stats.iterations = iter;
    stats.primal_residual = res_p;
    stats.dual_residual = res_d;
    stats.gap = gap;

    if (opt_.verbose) {
      std::cerr << "iter " << iter << "  mu=" << res.mu << "  res_p=" << res_p
                << "  res_d=" << res_d << "  gap=" << gap << "  tau=" << cone.tau
                << "  kappa=" << cone.kappa << "\n";
    }

    if (res_p <= opt_.tol && res_d <= opt_.tol && gap <= opt_.tol) {
      x_out = cone.x / cone.tau;
      return SolveStatus::kOptimal;
    }

    if (cone.tau <= 1e-10 ||
        (res.mu <= 1e-10 && cone.tau <= 1e-6 * std::max(1.0, cone.kappa))) {
      const SolveStatus status = certificate_status(cone, res);
      if (status != SolveStatus::kNumericalFailure) return status;
    }

    Scaling sc;
    if (!compute_scaling(cone, sc)) {
      const SolveStatus status = certificate_status(cone, res);
      return status;
    }

    MatrixXd schur;
    VectorXd g;
    double g0 = 0.0;
    assemble_schur(sc, schur, g, g0);
    Eigen::LLT<MatrixXd> schur_llt(schur);
    if (schur_llt.info() != Eigen::Success) {
      const double ridge =
          1e-12 * std::max(1.0, schur.diagonal().cwiseAbs().maxCoeff());
      schur.diagonal().array() += ridge;
      schur_llt.compute(schur);
      if (schur_llt.info() != Eigen::Success) {
        return SolveStatus::kNumericalFailure;
      }
    }

    const Direction aff = direction(cone, sc, res, schur_llt, g, g0, 1.0, 0.0);
    const double alpha_aff = std::min(1.0, 0.99 * max_step(cone, sc, aff));
    const double mu_aff = compl_after(cone, aff, alpha_aff);
    double sigma = std::pow(std::max(0.0, mu_aff / res.mu), 3.0);
    sigma = std::clamp(sigma, 1e-8, 0.99);

    const Direction dir =
        direction(cone, sc, res, schur_llt, g, g0, 1.0 - sigma, sigma);
    const double alpha = std::min(1.0, 0.99 * max_step(cone, sc, dir));

    if (alpha < 1e-9) {
      if (++stall >= 3) {
        const SolveStatus status = certificate_status(cone, res);
        if (status != SolveStatus::kNumericalFailure) return status;
        if (res_p <= 100 * opt_.tol && res_d <= 100 * opt_.tol &&
            gap <= 100 * opt_.tol) {
          x_out = cone.x / cone.tau;
          return SolveStatus::kIterationLimit;
        }
        return SolveStatus::kNumericalFailure;
      }
    } else {
      stall = 0;
    }

    cone.x += alpha * dir.dx;
    cone.tau += alpha * dir.dtau;
    cone.kappa += alpha * dir.dkappa;
    cone.s_lp += alpha * dir.ds_lp;
    cone.z_lp += alpha * dir.dz_lp;
    for (size_t b = 0; b < in_.blocks.size(); ++b) {
      cone.s_psd[b] += alpha * dir.ds_psd[b];
      cone.s_psd[b] = 0.5 * (cone.s_psd[b] + cone.s_psd[b].transpose()).eval();
      cone.z_psd[b] += alpha * dir.dz_psd[b];
      cone.z_psd[b] = 0.5 * (cone.z_psd[b] + cone.z_psd[b].transpose()).eval();
    }
  }

  const Residuals res = residuals(cone);
  const double res_p = res.rd_norm / (cone.tau * (1.0 + norm_f0_));
  const double res_d = res.rp.norm() / (cone.tau * (1.0 + norm_c_));
  const double obj_p = in_.c.dot(cone.x) / cone.tau;
  const double obj_d = -res.f0_dot_z / cone.tau;
  const double gap = res.compl_total / (cone.tau * cone.tau) /
                     (1.0 + std::abs(obj_p) + std::abs(obj_d));
  if (res_p <= 100 * opt_.tol && res_d <= 100 * opt_.tol && gap <= 100 * opt_.tol) {
    x_out = cone.x / cone.tau;
    return SolveStatus::kIterationLimit;
  }
  const SolveStatus status = certificate_status(cone, res);
  return status == SolveStatus::kNumericalFailure ? SolveStatus::kIterationLimit
                                                  : status;
}

}  // namespace

ConicSolution solve(const ConicProblem& problem, const SolveOptions& options) {
  const SolveOptions opt = SolveOptions::from_env(options);
  const VariableSpace& vars = problem.vars();

  ConicSolution solution;
  solution.values.resize(vars.count());
  for (int v = 0; v < vars.count(); ++v) {
    solution.values[v] = VectorXd::Zero(vars.dim(VarId{v}));
  }

  const Flattened flat = flatten(problem);
  Internal internal;
  const PresolveVerdict verdict = build_internal(flat, internal);
  if (verdict == PresolveVerdict::kInfeasible) {
    solution.status = SolveStatus::kInfeasible;
    return solution;
  }
  if (verdict == PresolveVerdict::kUnbounded) {
    solution.status = SolveStatus::kUnbounded;
    return solution;
  }

  VectorXd x_full;
  if (internal.m == 0) {
    // Constant problem: feasibility is decided by the constant cones.
    bool feasible = (internal.b_lp.size() == 0) || (internal.b_lp.minCoeff() >= -1e-9);
    for (const auto& block : internal.blocks) {
      feasible = feasible && (min_eig(block.f0) >= -1e-9);
    }
    solution.status = feasible ? SolveStatus::kOptimal : SolveStatus::kInfeasible;
    x_full = internal.shift;
  } else {
    HsdSolver ipm(internal, opt);
    VectorXd x_red;
    solution.status = ipm.run(x_red, solution.stats);
    if (solution.status != SolveStatus::kOptimal &&
        solution.status != SolveStatus::kIterationLimit) {
      return solution;
    }
    x_full = internal.expand(x_red);
  }

  for (int v = 0; v < vars.count(); ++v) {
    const VarId id{v};
    for (int comp = 0; comp < vars.dim(id); ++comp) {
      solution.values[v][comp] = x_full[vars.flat_index({id, comp})];
    }
  }
  double obj = problem.objective().constant;
  for (const auto& [ref, w] : problem.objective().linear) {
    obj += w * x_full[vars.flat_index(ref)];
  }
  for (const auto& [id, w] : problem.objective().squared_norms) {
    obj += w * solution.values[id.value].squaredNorm();
  }
  solution.objective = obj;
  return solution;
}

void export_sdpa(const ConicProblem& problem, std::ostream& os) {
  const Flattened flat = flatten(problem);
  Internal internal;
  if (build_internal(flat, internal) != PresolveVerdict::kProceed) {
    throw std::runtime_error("export_sdpa: presolve rejected the problem");
  }
  os << "* cone program in sparse SDPA form\n";
  os << "* convention: min c^T x  s.t.  sum_i x_i F_i - F0 >= 0 per block;\n";
  os << "* negative block size = diagonal block of scalar rows\n";
  const int p = static_cast<int>(internal.b_lp.size());
  const int nblocks = static_cast<int>(internal.blocks.size()) + (p > 0 ? 1 : 0);
  os << internal.m << "\n" << nblocks << "\n";
  for (const auto& block : internal.blocks) os << block.n << " ";
  if (p > 0) os << -p;
  os << "\n";
  for (int i = 0; i < internal.m; ++i) {
    os << internal.c[i] << (i + 1 < internal.m ? ' ' : '\n');
  }
  if (internal.m == 0) os << "\n";

  const auto emit = [&os](int mat, int blk, int row, int col, double value) {
    if (value != 0.0) {
      os << mat << " " << blk << " " << row + 1 << " " << col + 1 << " " << value
         << "\n";
    }
  };
  for (size_t b = 0; b < internal.blocks.size(); ++b) {
    const auto& block = internal.blocks[b];
    const int blk = static_cast<int>(b) + 1;
    for (int i = 0; i < block.n; ++i) {
      for (int j = i; j < block.n; ++j) {
        emit(0, blk, i, j, -block.f0(i, j));
      }
    }
    for (const auto& coeff : block.coeffs) {
      for (int i = 0; i < block.n; ++i) {
        for (int j = i; j < block.n; ++j) {
          emit(coeff.var + 1, blk, i, j, coeff.dense(i, j));
        }
      }
    }
  }
  if (p > 0) {
    const int blk = nblocks;
    for (int r = 0; r < p; ++r) {
      emit(0, blk, r, r, -internal.b_lp[r]);
      for (int i = 0; i < internal.m; ++i) {
        emit(i + 1, blk, r, r, internal.a_lp(r, i));
      }
    }
  }
}

void export_sdpa_file(const ConicProblem& problem, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("export_sdpa_file: cannot open " + path);
  export_sdpa(problem, out);
}

}  // namespace cachebeam
