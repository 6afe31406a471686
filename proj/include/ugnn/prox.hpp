#pragma once

#include <vector>

#include "ugnn/matrix.hpp"

namespace ugnn {

enum class ProxKind { Identity, NonNeg, ClampLabels, RangeProject, UnitNorm };

/// Node-wise proximal operators: argmin_z eta(z) + ||z-h||^2/(2*gamma) in
/// closed form, plus the subgradient rule used by the reverse-mode tape.
/// All variants are idempotent projections.
struct ProxOperator {
  ProxKind kind = ProxKind::Identity;
  Matrix Ybar;             // ClampLabels target rows
  std::vector<char> mask;  // ClampLabels row mask
  Matrix Q;                // RangeProject orthonormal basis, n x d_x

  static ProxOperator identity();
  static ProxOperator nonneg();
  static ProxOperator clamp_labels(Matrix Ybar, std::vector<char> mask);
  /// Q must satisfy Q^T Q = I to 1e-10.
  static ProxOperator range_project(Matrix Q);
  static ProxOperator unit_norm();

  bool is_identity() const { return kind == ProxKind::Identity; }
  /// Row-local variants keep node v's output a function of row v alone;
  /// RangeProject mixes rows (column-space projection) and is not local.
  bool row_local() const { return kind != ProxKind::RangeProject; }

  Matrix apply(const Matrix& H, double gamma) const;

  /// Subgradient rule, evaluated at the H_in stored at forward time.
  Matrix backward(const Matrix& H_in, const Matrix& upstream) const;
};

}  // namespace ugnn
