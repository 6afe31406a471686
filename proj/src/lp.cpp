#include "ugnn/lp.hpp"

#include <cmath>
#include <stdexcept>

namespace ugnn {

std::vector<long> predict_classes(const Matrix& H) {
  std::vector<long> out(H.rows, -1);
  for (std::size_t v = 0; v < H.rows; ++v) {
    const double* h = H.row(v);
    bool any = false;
    for (std::size_t j = 0; j < H.cols; ++j)
      if (h[j] != 0.0) any = true;
    if (!any) continue;  // no mass ever reached this node
    std::size_t best = 0;
    for (std::size_t j = 1; j < H.cols; ++j)
      if (h[j] > h[best]) best = j;
    out[v] = static_cast<long>(best);
  }
  return out;
}

LpResult label_propagate(const HeteroGraph& g, const LabelSet& labels,
                         const LpConfig& cfg, const Matrix* H0, bool clamp) {
  if (labels.size() != g.n)
    throw std::invalid_argument("lp: label arity mismatch");
  if (labels.observed_count() == 0)
    throw std::invalid_argument("lp: no labeled nodes");
  const MaskedLabels ml = masked_labels(labels);
  const Matrix& start = H0 ? *H0 : ml.Y;
  if (start.rows != g.n || start.cols != ml.classes())
    throw std::invalid_argument("lp: start shape mismatch");

  LpResult out;
  if (cfg.mode == LpMode::Proximal) {
    const EnergyFamily e = make_lp_energy(ml.classes(), cfg.lambda);
    const ProxOperator prox = clamp
                                  ? ProxOperator::clamp_labels(ml.Y, ml.mask)
                                  : ProxOperator::identity();
    const DescentAlgorithm algo = make_prox_gd(cfg.gamma, prox);
    UnrollResult r = unroll(algo, e, g, start, ml.Y, cfg.steps,
                            Exec::Parallel, true);
    out.H = std::move(r.H);
    out.trajectory = std::move(r.trajectory);
  } else {
    if (g.m != 1)
      throw std::invalid_argument("lp: standard mode needs one relation");
    Matrix H = start;
    if (clamp)
      for (std::size_t v = 0; v < g.n; ++v)
        if (ml.mask[v])
          for (std::size_t j = 0; j < ml.classes(); ++j)
            H.at(v, j) = ml.Y.at(v, j);
    out.trajectory.states.push_back(H);
    Matrix Hn(g.n, ml.classes());
    for (std::size_t l = 0; l < cfg.steps; ++l) {
      for (NodeId v = 0; v < g.n; ++v) {
        double* o = Hn.row(v);
        if (clamp && ml.mask[v]) {
          for (std::size_t j = 0; j < ml.classes(); ++j) o[j] = ml.Y.at(v, j);
          continue;
        }
        const std::size_t deg = g.in_degree(v);
        for (std::size_t j = 0; j < ml.classes(); ++j) o[j] = 0.0;
        if (deg == 0) continue;
        for (const InEdge* it = g.nbr_begin(v); it != g.nbr_end(v); ++it) {
          const double* h = H.row(it->src);
          for (std::size_t j = 0; j < ml.classes(); ++j) o[j] += h[j];
        }
        // divide after summing: an all-equal neighborhood averages exactly
        const double dd = static_cast<double>(deg);
        for (std::size_t j = 0; j < ml.classes(); ++j) o[j] /= dd;
      }
      H = Hn;
      out.trajectory.states.push_back(H);
    }
    out.H = std::move(H);
  }
  out.predicted = predict_classes(out.H);
  return out;
}

OrthoBasis orthonormalize(const Matrix& X) {
  if (X.rows == 0 || X.cols == 0)
    throw std::invalid_argument("orthonormalize: empty input");
  const std::size_t n = X.rows;
  const double tol = 1e-10;

  OrthoBasis out;
  std::vector<std::vector<double>> qcols;
  out.R = Matrix(X.cols, X.cols);  // trimmed to rank x d_x at the end
  std::vector<double> v(n);
  for (std::size_t j = 0; j < X.cols; ++j) {
    for (std::size_t i = 0; i < n; ++i) v[i] = X.at(i, j);
    for (std::size_t q = 0; q < qcols.size(); ++q) {
      double r = 0.0;
      for (std::size_t i = 0; i < n; ++i) r += qcols[q][i] * v[i];
      out.R.at(q, j) = r;
      for (std::size_t i = 0; i < n; ++i) v[i] -= r * qcols[q][i];
    }
    double nrm = 0.0;
    for (std::size_t i = 0; i < n; ++i) nrm += v[i] * v[i];
    nrm = std::sqrt(nrm);
    if (nrm <= tol) continue;  // dependent column, span already covered
    double sign = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (v[i] != 0.0) {
        sign = v[i] > 0.0 ? 1.0 : -1.0;
        break;
      }
    }
    for (std::size_t i = 0; i < n; ++i) v[i] *= sign / nrm;
    out.R.at(qcols.size(), j) = sign * nrm;
    qcols.push_back(v);
  }
  out.rank = qcols.size();
  if (out.rank == 0)
    throw std::invalid_argument("orthonormalize: zero matrix");

  out.Q = Matrix(n, out.rank);
  for (std::size_t q = 0; q < out.rank; ++q)
    for (std::size_t i = 0; i < n; ++i) out.Q.at(i, q) = qcols[q][i];
  Matrix R(out.rank, X.cols);
  for (std::size_t q = 0; q < out.rank; ++q)
    for (std::size_t j = 0; j < X.cols; ++j) R.at(q, j) = out.R.at(q, j);
  out.R = std::move(R);
  return out;
}

GrMlpResult gr_mlp_train(const HeteroGraph& g, const Matrix& X,
                         const LabelSet& labels, const GrMlpConfig& cfg,
                         const Matrix* H0) {
  if (labels.size() != g.n)
    throw std::invalid_argument("grmlp: label arity mismatch");
  if (X.rows != g.n)
    throw std::invalid_argument("grmlp: feature arity mismatch");
  const MaskedLabels ml = masked_labels(labels);
  const std::size_t c = ml.classes();
  const Matrix& start = H0 ? *H0 : ml.Y;
  if (start.rows != g.n || start.cols != c)
    throw std::invalid_argument("grmlp: start shape mismatch");

  GrMlpResult out;
  out.basis = orthonormalize(X);
  const Matrix& Q = out.basis.Q;
  const SparseMatrix L = laplacian(g);

  auto grad_at = [&](const Matrix& H) {
    Matrix G = L.multiply(H);  // lambda L H + H - Ybar
    for (std::size_t i = 0; i < G.data.size(); ++i)
      G.data[i] = cfg.lambda * G.data[i] + H.data[i] - ml.Y.data[i];
    return G;
  };
  auto project = [&](const Matrix& M) { return matmul(Q, matmul(transpose(Q), M)); };

  Matrix W = matmul(transpose(Q), start);
  Matrix He = project(start);
  out.W_path.push_back(W);
  out.H_from_w.push_back(matmul(Q, W));
  out.H_embed.push_back(He);
  out.max_path_gap = max_abs_diff(out.H_from_w.back(), He);

  for (std::size_t l = 0; l < cfg.steps; ++l) {
    // weight space: W' = W - gamma Q^T (lambda L QW + QW - Ybar)
    const Matrix Hw = matmul(Q, W);
    const Matrix Gw = matmul(transpose(Q), grad_at(Hw));
    W = add_scaled(W, Gw, -cfg.gamma);

    // embedding space: H' = P[(1-gamma) H - gamma (lambda L H - Ybar)]
    Matrix inner = L.multiply(He);
    for (std::size_t i = 0; i < inner.data.size(); ++i)
      inner.data[i] = (1.0 - cfg.gamma) * He.data[i] -
                      cfg.gamma * (cfg.lambda * inner.data[i] - ml.Y.data[i]);
    He = project(inner);

    out.W_path.push_back(W);
    out.H_from_w.push_back(matmul(Q, W));
    out.H_embed.push_back(He);
    out.max_path_gap =
        std::max(out.max_path_gap, max_abs_diff(out.H_from_w.back(), He));
  }
  return out;
}

}  // namespace ugnn
