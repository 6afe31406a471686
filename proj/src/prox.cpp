#include "ugnn/prox.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ugnn {

ProxOperator ProxOperator::identity() { return ProxOperator{}; }

ProxOperator ProxOperator::nonneg() {
  ProxOperator p;
  p.kind = ProxKind::NonNeg;
  return p;
}

ProxOperator ProxOperator::clamp_labels(Matrix Ybar, std::vector<char> mask) {
  if (Ybar.rows != mask.size())
    throw std::invalid_argument("clamp_labels: mask/label size mismatch");
  ProxOperator p;
  p.kind = ProxKind::ClampLabels;
  p.Ybar = std::move(Ybar);
  p.mask = std::move(mask);
  return p;
}

ProxOperator ProxOperator::range_project(Matrix Q) {
  const Matrix gram = matmul(transpose(Q), Q);
  if (max_abs_diff(gram, Matrix::identity(Q.cols)) > 1e-10)
    throw std::invalid_argument("range_project: basis is not orthonormal");
  ProxOperator p;
  p.kind = ProxKind::RangeProject;
  p.Q = std::move(Q);
  return p;
}

ProxOperator ProxOperator::unit_norm() {
  ProxOperator p;
  p.kind = ProxKind::UnitNorm;
  return p;
}

Matrix ProxOperator::apply(const Matrix& H, double gamma) const {
  if (gamma <= 0.0) throw std::invalid_argument("prox: gamma must be > 0");
  switch (kind) {
    case ProxKind::Identity:
      return H;
    case ProxKind::NonNeg: {
      Matrix out = H;
      for (double& v : out.data) v = std::max(v, 0.0);
      return out;
    }
    case ProxKind::ClampLabels: {
      if (H.rows != mask.size() || H.cols != Ybar.cols)
        throw std::invalid_argument("clamp_labels: shape mismatch");
      Matrix out = H;
      for (std::size_t v = 0; v < H.rows; ++v)
        if (mask[v]) std::copy(Ybar.row(v), Ybar.row(v) + Ybar.cols, out.row(v));
      return out;
    }
    case ProxKind::RangeProject: {
      if (H.rows != Q.rows)
        throw std::invalid_argument("range_project: shape mismatch");
      return matmul(Q, matmul(transpose(Q), H));
    }
    case ProxKind::UnitNorm: {
      Matrix out = H;
      for (std::size_t v = 0; v < H.rows; ++v) {
        const double nrm = norm2(out.row(v), out.cols);
        if (nrm == 0.0)
          throw std::invalid_argument("unit_norm: zero row " +
                                      std::to_string(v));
        for (std::size_t j = 0; j < out.cols; ++j) out.at(v, j) /= nrm;
      }
      return out;
    }
  }
  throw std::logic_error("prox: unknown variant");
}

Matrix ProxOperator::backward(const Matrix& H_in, const Matrix& upstream) const {
  if (!H_in.same_shape(upstream))
    throw std::invalid_argument("prox backward: shape mismatch");
  switch (kind) {
    case ProxKind::Identity:
      return upstream;
    case ProxKind::NonNeg: {
      Matrix out = upstream;
      for (std::size_t i = 0; i < out.data.size(); ++i)
        if (!(H_in.data[i] > 0.0)) out.data[i] = 0.0;
      return out;
    }
    case ProxKind::ClampLabels: {
      Matrix out = upstream;
      for (std::size_t v = 0; v < out.rows; ++v)
        if (mask[v])
          for (std::size_t j = 0; j < out.cols; ++j) out.at(v, j) = 0.0;
      return out;
    }
    case ProxKind::RangeProject:
      return matmul(Q, matmul(transpose(Q), upstream));
    case ProxKind::UnitNorm: {
      // d/dh (h/||h||) = (I - n n^T)/||h||, n = h/||h||
      Matrix out(upstream.rows, upstream.cols);
      for (std::size_t v = 0; v < out.rows; ++v) {
        const double* h = H_in.row(v);
        const double* up = upstream.row(v);
        const double nrm = norm2(h, H_in.cols);
        if (nrm == 0.0)
          throw std::invalid_argument("unit_norm backward: zero row " +
                                      std::to_string(v));
        const double proj = dot(h, up, H_in.cols) / (nrm * nrm);
        for (std::size_t j = 0; j < out.cols; ++j)
          out.at(v, j) = (up[j] - proj * h[j]) / nrm;
      }
      return out;
    }
  }
  throw std::logic_error("prox backward: unknown variant");
}

}  // namespace ugnn
