#pragma once

// Shared helpers for the test binaries: finite differences, a dense solver,
// random problem instances, and textbook update rules kept independent of the
// library's descent code so they can serve as oracles.

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "ugnn/descent.hpp"
#include "ugnn/energy.hpp"
#include "ugnn/graph.hpp"
#include "ugnn/matrix.hpp"
#include "ugnn/prox.hpp"

namespace testsup {

using namespace ugnn;

/// Central finite differences of a scalar function, entry by entry.
inline Matrix fd_grad(const std::function<double(const Matrix&)>& f, Matrix at,
                      double eps = 1e-6) {
  Matrix g(at.rows, at.cols);
  for (std::size_t k = 0; k < at.data.size(); ++k) {
    const double save = at.data[k];
    at.data[k] = save + eps;
    const double fp = f(at);
    at.data[k] = save - eps;
    const double fm = f(at);
    at.data[k] = save;
    g.data[k] = (fp - fm) / (2.0 * eps);
  }
  return g;
}

/// Gaussian elimination with partial pivoting, solves A X = B.
inline Matrix solve_dense(Matrix A, Matrix B) {
  if (A.rows != A.cols || A.rows != B.rows)
    throw std::invalid_argument("solve_dense: shape");
  const std::size_t n = A.rows;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(A.at(r, col)) > std::abs(A.at(piv, col))) piv = r;
    if (std::abs(A.at(piv, col)) < 1e-14)
      throw std::invalid_argument("solve_dense: singular");
    if (piv != col) {
      for (std::size_t j = 0; j < n; ++j) std::swap(A.at(col, j), A.at(piv, j));
      for (std::size_t j = 0; j < B.cols; ++j)
        std::swap(B.at(col, j), B.at(piv, j));
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = A.at(r, col) / A.at(col, col);
      if (f == 0.0) continue;
      for (std::size_t j = col; j < n; ++j) A.at(r, j) -= f * A.at(col, j);
      for (std::size_t j = 0; j < B.cols; ++j) B.at(r, j) -= f * B.at(col, j);
    }
  }
  Matrix X(n, B.cols);
  for (std::size_t r = n; r-- > 0;) {
    for (std::size_t j = 0; j < B.cols; ++j) {
      double s = B.at(r, j);
      for (std::size_t c = r + 1; c < n; ++c) s -= A.at(r, c) * X.at(c, j);
      X.at(r, j) = s / A.at(r, r);
    }
  }
  return X;
}

/// Connected random graph: a spanning chain plus `extra` random edges.
inline HeteroGraph random_graph(Rng& rng, std::size_t n, std::size_t extra,
                                std::size_t m, bool augment) {
  std::vector<Triplet> tr;
  for (NodeId v = 1; v < n; ++v) {
    const auto rel =
        static_cast<RelationId>(rng.uniform_int(0, (std::int64_t)m - 1));
    tr.push_back({v - 1, rel, v});
  }
  for (std::size_t i = 0; i < extra; ++i) {
    const auto src =
        static_cast<NodeId>(rng.uniform_int(0, (std::int64_t)n - 1));
    auto dst = static_cast<NodeId>(rng.uniform_int(0, (std::int64_t)n - 1));
    if (dst == src) dst = (dst + 1) % n;
    const auto rel =
        static_cast<RelationId>(rng.uniform_int(0, (std::int64_t)m - 1));
    tr.push_back({src, rel, dst});
  }
  return build_graph(tr, n, m, augment);
}

/// Textbook restatement of every update rule, written directly from the
/// recursions and kept independent of the library implementation.
struct TextbookState {
  Matrix s1, s2;
  std::size_t t = 0;
};

inline void textbook_update(const DescentAlgorithm& a, const HeteroGraph& g,
                            const Matrix& G, Matrix& H, TextbookState& st) {
  const std::size_t n = H.rows, d = H.cols;
  if (st.s1.empty() && a.state_arity() >= 1) st.s1 = Matrix(n, d);
  if (st.s2.empty() && a.state_arity() >= 2) st.s2 = Matrix(n, d);
  switch (a.kind) {
    case AlgoKind::Gd:
      for (std::size_t k = 0; k < H.data.size(); ++k)
        H.data[k] -= a.gamma * G.data[k];
      break;
    case AlgoKind::ProxGd: {
      for (std::size_t k = 0; k < H.data.size(); ++k)
        H.data[k] -= a.gamma * G.data[k];
      H = a.prox.apply(H, a.gamma);
      break;
    }
    case AlgoKind::DegreeGd:
      for (std::size_t v = 0; v < n; ++v) {
        const std::size_t deg = g.in_degree(v);
        const double f = a.gamma / static_cast<double>(deg > 0 ? deg : 1);
        for (std::size_t j = 0; j < d; ++j) H.at(v, j) -= f * G.at(v, j);
      }
      break;
    case AlgoKind::Momentum: {
      for (std::size_t k = 0; k < H.data.size(); ++k) {
        st.s1.data[k] = a.beta * st.s1.data[k] + (1.0 - a.beta) * G.data[k];
        H.data[k] -= a.gamma * st.s1.data[k];
      }
      H = a.prox.apply(H, a.gamma);
      break;
    }
    case AlgoKind::AdaGrad:
      for (std::size_t k = 0; k < H.data.size(); ++k) {
        st.s1.data[k] += G.data[k] * G.data[k];
        H.data[k] -= a.gamma * G.data[k] / std::sqrt(st.s1.data[k] + a.eps);
      }
      break;
    case AlgoKind::RmsProp:
      for (std::size_t k = 0; k < H.data.size(); ++k) {
        st.s1.data[k] =
            a.beta * st.s1.data[k] + (1.0 - a.beta) * G.data[k] * G.data[k];
        H.data[k] -= a.gamma * G.data[k] / std::sqrt(st.s1.data[k] + a.eps);
      }
      break;
    case AlgoKind::Adam: {
      st.t += 1;
      const double c1 = 1.0 - std::pow(a.beta1, (double)st.t);
      const double c2 = 1.0 - std::pow(a.beta2, (double)st.t);
      for (std::size_t k = 0; k < H.data.size(); ++k) {
        st.s1.data[k] = a.beta1 * st.s1.data[k] + (1.0 - a.beta1) * G.data[k];
        st.s2.data[k] =
            a.beta2 * st.s2.data[k] + (1.0 - a.beta2) * G.data[k] * G.data[k];
        H.data[k] -=
            a.gamma * (st.s1.data[k] / c1) / (std::sqrt(st.s2.data[k] / c2) + a.eps);
      }
      break;
    }
  }
}

}  // namespace testsup
