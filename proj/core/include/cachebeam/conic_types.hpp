#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace cachebeam {

// Handle into a VariableSpace. Values are dense indices starting at 0.
struct VarId {
  int value = -1;
  bool valid() const { return value >= 0; }
  friend bool operator==(VarId a, VarId b) { return a.value == b.value; }
};

// One real scalar inside a (possibly vector-valued) variable.
struct VarRef {
  VarId id;
  int comp = 0;
};

enum class VarKind { kFree, kNonneg };

// Registry of real decision variables. Complex quantities are packed as
// [Re; Im] blocks by the callers that own them.
class VariableSpace {
 public:
  VarId add(std::string name, int dim, VarKind kind = VarKind::kFree);

  int count() const { return static_cast<int>(entries_.size()); }
  int total_dim() const { return total_dim_; }
  int dim(VarId id) const { return entry(id).dim; }
  VarKind kind(VarId id) const { return entry(id).kind; }
  const std::string& name(VarId id) const { return entry(id).name; }
  // Flat index of one component in the stacked variable vector.
  int flat_index(VarRef ref) const;

 private:
  struct Entry {
    std::string name;
    int dim = 0;
    VarKind kind = VarKind::kFree;
    int offset = 0;
  };
  const Entry& entry(VarId id) const;

  std::vector<Entry> entries_;
  int total_dim_ = 0;
};

// Affine scalar expression sum_i coeff_i * x_ref_i + constant.
struct AffineExpr {
  std::vector<std::pair<VarRef, double>> terms;
  double constant = 0.0;

  AffineExpr& add(VarRef ref, double coeff) {
    terms.push_back({ref, coeff});
    return *this;
  }
  double evaluate(const VariableSpace& vars, const Eigen::VectorXd& x) const;
};

enum class RowSense { kGreaterEqual, kEqual };

// expr >= 0 or expr == 0.
struct LinearRow {
  AffineExpr expr;
  RowSense sense = RowSense::kGreaterEqual;
  std::string label;
};

// ||stack(members)||_2 <= bound.
struct SocRow {
  std::vector<AffineExpr> members;
  AffineExpr bound;
  std::string label;
};

}  // namespace cachebeam
