#include "ugnn/energy.hpp"

#include <cmath>
#include <stdexcept>

namespace ugnn {

namespace {

double huber_term(double u) {
  const double a = std::fabs(u);
  return a < 1.0 ? 0.5 * u * u : a - 0.5;
}

double huber_grad_term(double u) {
  return u < -1.0 ? -1.0 : (u > 1.0 ? 1.0 : u);
}

double logcosh_term(double u) {
  // log(cosh(u)) without overflow
  const double a = std::fabs(u);
  return a + std::log1p(std::exp(-2.0 * a)) - 0.6931471805599453;
}

void check_symmetric(const Matrix& A, const char* name) {
  if (A.rows != A.cols)
    throw std::invalid_argument(std::string(name) + " must be square");
  for (std::size_t i = 0; i < A.rows; ++i)
    for (std::size_t j = i + 1; j < A.cols; ++j)
      if (std::fabs(A.at(i, j) - A.at(j, i)) > 1e-12)
        throw std::invalid_argument(std::string(name) + " must be symmetric");
}

/// Cholesky-based inverse; doubles as the positive-definiteness check.
Matrix spd_inverse(const Matrix& A) {
  const std::size_t n = A.rows;
  Matrix L(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = A.at(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= L.at(i, k) * L.at(j, k);
      if (i == j) {
        if (s <= 0.0)
          throw std::invalid_argument("matrix is not positive definite");
        L.at(i, i) = std::sqrt(s);
      } else {
        L.at(i, j) = s / L.at(j, j);
      }
    }
  }
  // solve A X = I column by column
  Matrix X(n, n);
  std::vector<double> y(n);
  for (std::size_t c = 0; c < n; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = (i == c) ? 1.0 : 0.0;
      for (std::size_t k = 0; k < i; ++k) s -= L.at(i, k) * y[k];
      y[i] = s / L.at(i, i);
    }
    for (std::size_t i = n; i-- > 0;) {
      double s = y[i];
      for (std::size_t k = i + 1; k < n; ++k) s -= L.at(k, i) * X.at(k, c);
      X.at(i, c) = s / L.at(i, i);
    }
  }
  return X;
}

/// row * M for symmetric-or-not M: out[j] = sum_k row[k] * M[k][j]
void row_times(const double* row, const Matrix& M, double* out) {
  for (std::size_t j = 0; j < M.cols; ++j) out[j] = 0.0;
  for (std::size_t k = 0; k < M.rows; ++k) {
    const double rv = row[k];
    if (rv == 0.0) continue;
    const double* mr = M.row(k);
    for (std::size_t j = 0; j < M.cols; ++j) out[j] += rv * mr[j];
  }
}

thread_local std::vector<double> tl_scratch;

}  // namespace

InputModel InputModel::identity_map() {
  InputModel p;
  p.is_identity = true;
  return p;
}

InputModel InputModel::affine(Matrix W, Matrix b) {
  if (b.rows != 1 || b.cols != W.cols)
    throw std::invalid_argument("input model: bias shape mismatch");
  InputModel p;
  p.W1 = std::move(W);
  p.b1 = std::move(b);
  return p;
}

InputModel InputModel::mlp2(Matrix W1, Matrix b1, Matrix W2, Matrix b2) {
  if (b1.rows != 1 || b1.cols != W1.cols || b2.rows != 1 ||
      b2.cols != W2.cols || W1.cols != W2.rows)
    throw std::invalid_argument("input model: layer shape mismatch");
  InputModel p;
  p.two_layer = true;
  p.W1 = std::move(W1);
  p.b1 = std::move(b1);
  p.W2 = std::move(W2);
  p.b2 = std::move(b2);
  return p;
}

std::size_t InputModel::in_dim() const {
  return is_identity ? 0 : W1.rows;
}

std::size_t InputModel::out_dim() const {
  if (is_identity) return 0;
  return two_layer ? W2.cols : W1.cols;
}

void InputModel::apply_row(const double* x, double* out) const {
  if (is_identity) throw std::logic_error("identity input model: use x");
  const std::size_t dh = W1.cols;
  if (!two_layer) {
    for (std::size_t j = 0; j < dh; ++j) out[j] = b1.at(0, j);
    for (std::size_t k = 0; k < W1.rows; ++k) {
      const double xv = x[k];
      const double* wr = W1.row(k);
      for (std::size_t j = 0; j < dh; ++j) out[j] += xv * wr[j];
    }
    return;
  }
  tl_scratch.resize(dh);
  double* hbuf = tl_scratch.data();
  for (std::size_t j = 0; j < dh; ++j) hbuf[j] = b1.at(0, j);
  for (std::size_t k = 0; k < W1.rows; ++k) {
    const double xv = x[k];
    const double* wr = W1.row(k);
    for (std::size_t j = 0; j < dh; ++j) hbuf[j] += xv * wr[j];
  }
  for (std::size_t j = 0; j < dh; ++j) hbuf[j] = std::tanh(hbuf[j]);
  const std::size_t dout = W2.cols;
  for (std::size_t j = 0; j < dout; ++j) out[j] = b2.at(0, j);
  for (std::size_t k = 0; k < dh; ++k) {
    const double hv = hbuf[k];
    const double* wr = W2.row(k);
    for (std::size_t j = 0; j < dout; ++j) out[j] += hv * wr[j];
  }
}

Matrix InputModel::apply(const Matrix& X) const {
  if (is_identity) return X;
  if (X.cols != in_dim())
    throw std::invalid_argument("input model: feature dim mismatch");
  Matrix out(X.rows, out_dim());
  for (std::size_t v = 0; v < X.rows; ++v) apply_row(X.row(v), out.row(v));
  return out;
}

std::size_t EnergyFamily::feature_dim() const {
  if (kind == EnergyKind::Kge) return 0;
  if (kind == EnergyKind::Nbf) return d;
  return pi.is_identity ? d : pi.in_dim();
}

double EnergyFamily::pair_value(const double* hu, const double* hv,
                                RelationId rel) const {
  if (rel >= m)
    throw std::invalid_argument("pair_value: relation unknown to the family");
  switch (kind) {
    case EnergyKind::Quadratic:
    case EnergyKind::Huber:
    case EnergyKind::LogCosh:
    case EnergyKind::Lp:
    case EnergyKind::GrMlp: {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double t = hu[j] - hv[j];
        s += t * t;
      }
      return 0.5 * lambda() * s;
    }
    case EnergyKind::Heterophily: {
      tl_scratch.resize(d);
      row_times(hu, C, tl_scratch.data());
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double t = tl_scratch[j] - hv[j];
        s += t * t;
      }
      return 0.5 * lambda() * s;
    }
    case EnergyKind::Kge: {
      const bool neg = rel >= kge_m;
      const double* e = E.row(neg ? rel - kge_m : rel);
      double s;
      if (score == ScoreKind::DistMult) {
        s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += hu[j] * e[j] * hv[j];
      } else {
        double q2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double t = hu[j] + e[j] - hv[j];
          q2 += t * t;
        }
        s = -std::sqrt(q2);
      }
      return neg ? softplus(s) : softplus(-s);
    }
    case EnergyKind::Nbf: {
      tl_scratch.resize(d);
      double* t = tl_scratch.data();
      row_times(hu, Phi, t);  // Phi symmetric
      double val = 0.0;
      for (std::size_t j = 0; j < d; ++j) val += hv[j] * t[j];
      const double* er = nbf_E.row(rel);
      row_times(er, Phi, t);
      for (std::size_t j = 0; j < d; ++j) val += hv[j] * t[j];
      const double* erinv = nbf_E.row(rel + m);
      row_times(erinv, Phi, t);
      for (std::size_t j = 0; j < d; ++j) val += hu[j] * t[j];
      return val;
    }
  }
  throw std::logic_error("pair_value: unknown kind");
}

void EnergyFamily::pair_grad_v(const double* hu, const double* hv,
                               RelationId rel, double* out) const {
  if (rel >= m)
    throw std::invalid_argument("pair_grad_v: relation unknown to the family");
  switch (kind) {
    case EnergyKind::Quadratic:
    case EnergyKind::Huber:
    case EnergyKind::LogCosh:
    case EnergyKind::Lp:
    case EnergyKind::GrMlp: {
      const double lam = lambda();
      for (std::size_t j = 0; j < d; ++j) out[j] = -lam * (hu[j] - hv[j]);
      return;
    }
    case EnergyKind::Heterophily: {
      tl_scratch.resize(d);
      row_times(hu, C, tl_scratch.data());
      const double lam = lambda();
      for (std::size_t j = 0; j < d; ++j)
        out[j] = -lam * (tl_scratch[j] - hv[j]);
      return;
    }
    case EnergyKind::Kge: {
      const bool neg = rel >= kge_m;
      const double* e = E.row(neg ? rel - kge_m : rel);
      if (score == ScoreKind::DistMult) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += hu[j] * e[j] * hv[j];
        const double c = neg ? sigmoid(s) : sigmoid(s) - 1.0;
        for (std::size_t j = 0; j < d; ++j) out[j] = c * hu[j] * e[j];
      } else {
        tl_scratch.resize(d);
        double q2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          tl_scratch[j] = hu[j] + e[j] - hv[j];
          q2 += tl_scratch[j] * tl_scratch[j];
        }
        const double nrm = std::sqrt(q2);
        if (nrm == 0.0) {
          for (std::size_t j = 0; j < d; ++j) out[j] = 0.0;
          return;
        }
        const double s = -nrm;
        const double c = neg ? sigmoid(s) : sigmoid(s) - 1.0;
        for (std::size_t j = 0; j < d; ++j) out[j] = c * tl_scratch[j] / nrm;
      }
      return;
    }
    case EnergyKind::Nbf: {
      tl_scratch.resize(2 * d);
      double* sum = tl_scratch.data();
      const double* er = nbf_E.row(rel);
      for (std::size_t j = 0; j < d; ++j) sum[j] = hu[j] + er[j];
      row_times(sum, Phi, out);
      return;
    }
  }
  throw std::logic_error("pair_grad_v: unknown kind");
}

void EnergyFamily::pair_grad_u(const double* hu, const double* hv,
                               RelationId rel, double* out) const {
  if (rel >= m)
    throw std::invalid_argument("pair_grad_u: relation unknown to the family");
  switch (kind) {
    case EnergyKind::Quadratic:
    case EnergyKind::Huber:
    case EnergyKind::LogCosh:
    case EnergyKind::Lp:
    case EnergyKind::GrMlp: {
      const double lam = lambda();
      for (std::size_t j = 0; j < d; ++j) out[j] = lam * (hu[j] - hv[j]);
      return;
    }
    case EnergyKind::Heterophily: {
      // lambda * (hu C - hv) C^T
      tl_scratch.resize(2 * d);
      double* r = tl_scratch.data();
      double* cr = r + d;
      row_times(hu, C, r);
      for (std::size_t j = 0; j < d; ++j) r[j] -= hv[j];
      for (std::size_t k = 0; k < d; ++k) {
        double s = 0.0;
        const double* crow = C.row(k);
        for (std::size_t j = 0; j < d; ++j) s += r[j] * crow[j];
        cr[k] = s;
      }
      const double lam = lambda();
      for (std::size_t j = 0; j < d; ++j) out[j] = lam * cr[j];
      return;
    }
    case EnergyKind::Kge: {
      const bool neg = rel >= kge_m;
      const double* e = E.row(neg ? rel - kge_m : rel);
      if (score == ScoreKind::DistMult) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += hu[j] * e[j] * hv[j];
        const double c = neg ? sigmoid(s) : sigmoid(s) - 1.0;
        for (std::size_t j = 0; j < d; ++j) out[j] = c * hv[j] * e[j];
      } else {
        tl_scratch.resize(d);
        double q2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          tl_scratch[j] = hu[j] + e[j] - hv[j];
          q2 += tl_scratch[j] * tl_scratch[j];
        }
        const double nrm = std::sqrt(q2);
        if (nrm == 0.0) {
          for (std::size_t j = 0; j < d; ++j) out[j] = 0.0;
          return;
        }
        const double s = -nrm;
        const double c = neg ? sigmoid(s) : sigmoid(s) - 1.0;
        for (std::size_t j = 0; j < d; ++j) out[j] = -c * tl_scratch[j] / nrm;
      }
      return;
    }
    case EnergyKind::Nbf: {
      tl_scratch.resize(2 * d);
      double* sum = tl_scratch.data();
      const double* erinv = nbf_E.row(rel + m);
      for (std::size_t j = 0; j < d; ++j) sum[j] = hv[j] + erinv[j];
      row_times(sum, Phi, out);
      return;
    }
  }
  throw std::logic_error("pair_grad_u: unknown kind");
}

void EnergyFamily::grad_pair_dst(const double* h_src, const double* h_dst,
                                 RelationId rel, double* out) const {
  if (rel < m) {
    pair_grad_v(h_src, h_dst, rel, out);
  } else if (rel < 2 * m) {
    // inverse entry: the original edge is (h_dst, rel-m, h_src)
    pair_grad_u(h_dst, h_src, rel - m, out);
  } else {
    throw std::invalid_argument("grad_pair_dst: relation out of range");
  }
}

double EnergyFamily::node_value(const double* h, const double* x) const {
  if (kind == EnergyKind::Nbf) {
    // 0.5 h Psi h + h Phi x + 0.5 (Phi x) Psi^-1 (Phi x)
    tl_scratch.resize(2 * d);
    double* t = tl_scratch.data();
    double* t2 = t + d;
    row_times(h, Psi, t);
    double val = 0.0;
    for (std::size_t j = 0; j < d; ++j) val += 0.5 * h[j] * t[j];
    row_times(x, Phi, t);
    for (std::size_t j = 0; j < d; ++j) val += h[j] * t[j];
    if (Psi_inv.empty())
      throw std::invalid_argument(
          "nbf: node potential values need a positive definite Psi");
    row_times(t, Psi_inv, t2);
    for (std::size_t j = 0; j < d; ++j) val += 0.5 * t[j] * t2[j];
    return val;
  }
  if (fidelity == FidelityKind::None) return 0.0;
  tl_scratch.resize(2 * d);
  double* u = tl_scratch.data();
  if (pi.is_identity) {
    for (std::size_t j = 0; j < d; ++j) u[j] = h[j] - x[j];
  } else {
    double* px = u + d;
    pi.apply_row(x, px);
    for (std::size_t j = 0; j < d; ++j) u[j] = h[j] - px[j];
  }
  double val = 0.0;
  switch (fidelity) {
    case FidelityKind::Quadratic:
      for (std::size_t j = 0; j < d; ++j) val += 0.5 * u[j] * u[j];
      break;
    case FidelityKind::HuberLoss:
      for (std::size_t j = 0; j < d; ++j) val += huber_term(u[j]);
      break;
    case FidelityKind::LogCoshLoss:
      for (std::size_t j = 0; j < d; ++j) val += logcosh_term(u[j]);
      break;
    case FidelityKind::None:
      break;
  }
  if (unit_penalty != 0.0) {
    double n2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) n2 += h[j] * h[j];
    const double dev = n2 - 1.0;
    val += unit_penalty * dev * dev;
  }
  return val;
}

void EnergyFamily::grad_node(const double* h, const double* x,
                             double* out) const {
  if (kind == EnergyKind::Nbf) {
    tl_scratch.resize(d);
    double* t = tl_scratch.data();
    row_times(h, Psi, out);
    row_times(x, Phi, t);
    for (std::size_t j = 0; j < d; ++j) out[j] += t[j];
    return;
  }
  if (fidelity == FidelityKind::None) {
    for (std::size_t j = 0; j < d; ++j) out[j] = 0.0;
    return;
  }
  tl_scratch.resize(2 * d);
  double* u = tl_scratch.data();
  if (pi.is_identity) {
    for (std::size_t j = 0; j < d; ++j) u[j] = h[j] - x[j];
  } else {
    double* px = u + d;
    pi.apply_row(x, px);
    for (std::size_t j = 0; j < d; ++j) u[j] = h[j] - px[j];
  }
  switch (fidelity) {
    case FidelityKind::Quadratic:
      for (std::size_t j = 0; j < d; ++j) out[j] = u[j];
      break;
    case FidelityKind::HuberLoss:
      for (std::size_t j = 0; j < d; ++j) out[j] = huber_grad_term(u[j]);
      break;
    case FidelityKind::LogCoshLoss:
      for (std::size_t j = 0; j < d; ++j) out[j] = std::tanh(u[j]);
      break;
    case FidelityKind::None:
      break;
  }
  if (unit_penalty != 0.0) {
    double n2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) n2 += h[j] * h[j];
    const double c = 4.0 * unit_penalty * (n2 - 1.0);
    for (std::size_t j = 0; j < d; ++j) out[j] += c * h[j];
  }
}

std::map<std::string, Matrix> EnergyFamily::params() const {
  std::map<std::string, Matrix> p;
  if (!pi.is_identity && kind != EnergyKind::Kge && kind != EnergyKind::Nbf) {
    p["pi.W1"] = pi.W1;
    p["pi.b1"] = pi.b1;
    if (pi.two_layer) {
      p["pi.W2"] = pi.W2;
      p["pi.b2"] = pi.b2;
    }
  }
  if (kind == EnergyKind::Heterophily) p["C"] = C;
  if (kind == EnergyKind::Kge) p["E"] = E;
  if (lambda_trainable) {
    Matrix l(1, 1);
    l.at(0, 0) = lambda_raw;
    p["lambda_raw"] = l;
  }
  return p;
}

void EnergyFamily::set_param(const std::string& name, const Matrix& value) {
  auto assign = [&](Matrix& dst) {
    if (!dst.same_shape(value))
      throw std::invalid_argument("set_param: shape mismatch for " + name);
    dst = value;
  };
  if (name == "pi.W1") return assign(pi.W1);
  if (name == "pi.b1") return assign(pi.b1);
  if (name == "pi.W2") return assign(pi.W2);
  if (name == "pi.b2") return assign(pi.b2);
  if (name == "C") return assign(C);
  if (name == "E") return assign(E);
  if (name == "lambda_raw") {
    if (!lambda_trainable)
      throw std::invalid_argument("set_param: lambda is not trainable");
    if (value.rows != 1 || value.cols != 1)
      throw std::invalid_argument("set_param: lambda_raw must be 1x1");
    lambda_raw = value.at(0, 0);
    return;
  }
  throw std::invalid_argument("set_param: unknown parameter " + name);
}

namespace {

void check_lambda(double lambda, bool trainable) {
  if (!trainable && lambda <= 0.0)
    throw std::invalid_argument("energy: lambda must be > 0");
}

}  // namespace

EnergyFamily make_quadratic(std::size_t d, double lambda, InputModel pi,
                            bool lambda_trainable, double unit_penalty) {
  check_lambda(lambda, lambda_trainable);
  EnergyFamily e;
  e.kind = EnergyKind::Quadratic;
  e.id = "quadratic";
  e.d = d;
  e.m = 1;
  e.fidelity = FidelityKind::Quadratic;
  e.pi = std::move(pi);
  e.unit_penalty = unit_penalty;
  e.lambda_trainable = lambda_trainable;
  if (lambda_trainable)
    e.lambda_raw = lambda;  // caller supplies the preimage
  else
    e.lambda_value = lambda;
  if (!e.pi.is_identity && e.pi.out_dim() != d)
    throw std::invalid_argument("quadratic: input model output dim != d");
  return e;
}

EnergyFamily make_heterophily(std::size_t d, double lambda, Matrix C,
                              InputModel pi, FidelityKind fid, std::size_t m,
                              bool lambda_trainable) {
  check_lambda(lambda, lambda_trainable);
  if (C.rows != d || C.cols != d)
    throw std::invalid_argument("heterophily: C must be d x d");
  if (fid != FidelityKind::Quadratic && fid != FidelityKind::HuberLoss)
    throw std::invalid_argument("heterophily: kappa is quadratic or huber");
  EnergyFamily e;
  e.kind = EnergyKind::Heterophily;
  e.id = "heterophily";
  e.d = d;
  e.m = m;
  e.nonsmooth = ProxKind::NonNeg;
  e.fidelity = fid;
  e.pi = std::move(pi);
  e.C = std::move(C);
  e.lambda_trainable = lambda_trainable;
  if (lambda_trainable)
    e.lambda_raw = lambda;
  else
    e.lambda_value = lambda;
  if (!e.pi.is_identity && e.pi.out_dim() != d)
    throw std::invalid_argument("heterophily: input model output dim != d");
  return e;
}

EnergyFamily make_huber_fidelity(std::size_t d, double lambda, InputModel pi) {
  check_lambda(lambda, false);
  EnergyFamily e;
  e.kind = EnergyKind::Huber;
  e.id = "huber";
  e.d = d;
  e.m = 1;
  e.fidelity = FidelityKind::HuberLoss;
  e.pi = std::move(pi);
  e.lambda_value = lambda;
  if (!e.pi.is_identity && e.pi.out_dim() != d)
    throw std::invalid_argument("huber: input model output dim != d");
  return e;
}

EnergyFamily make_logcosh_fidelity(std::size_t d, double lambda,
                                   InputModel pi) {
  check_lambda(lambda, false);
  EnergyFamily e;
  e.kind = EnergyKind::LogCosh;
  e.id = "logcosh";
  e.d = d;
  e.m = 1;
  e.fidelity = FidelityKind::LogCoshLoss;
  e.pi = std::move(pi);
  e.lambda_value = lambda;
  if (!e.pi.is_identity && e.pi.out_dim() != d)
    throw std::invalid_argument("logcosh: input model output dim != d");
  return e;
}

EnergyFamily make_kge_bce(std::size_t d, ScoreKind score, std::size_t kge_m,
                          Matrix E) {
  if (E.rows != kge_m || E.cols != d)
    throw std::invalid_argument("kge: E must be kge_m x d");
  EnergyFamily e;
  e.kind = EnergyKind::Kge;
  e.id = "kge";
  e.d = d;
  e.pi = InputModel::identity_map();
  e.kge_m = kge_m;
  e.m = 2 * kge_m;  // positive and negative polarity per relation
  e.score = score;
  e.E = std::move(E);
  return e;
}

EnergyFamily make_lp_energy(std::size_t classes, double lambda) {
  check_lambda(lambda, false);
  EnergyFamily e;
  e.kind = EnergyKind::Lp;
  e.id = "lp";
  e.d = classes;
  e.m = 1;
  e.nonsmooth = ProxKind::ClampLabels;
  e.fidelity = FidelityKind::Quadratic;
  e.pi = InputModel::identity_map();
  e.lambda_value = lambda;
  return e;
}

EnergyFamily make_grmlp_energy(std::size_t classes, double lambda) {
  EnergyFamily e = make_lp_energy(classes, lambda);
  e.kind = EnergyKind::GrMlp;
  e.id = "grmlp";
  e.nonsmooth = ProxKind::RangeProject;
  return e;
}

EnergyFamily make_nbf_bilinear(std::size_t d, std::size_t m, Matrix Phi,
                               Matrix Psi, std::vector<Matrix> rel_W,
                               Matrix rel_b, Matrix q, ProxKind eta) {
  check_symmetric(Phi, "Phi");
  check_symmetric(Psi, "Psi");
  if (Phi.rows != d || Psi.rows != d)
    throw std::invalid_argument("nbf: Phi/Psi must be d x d");
  if (rel_W.size() != 2 * m || rel_b.rows != 2 * m || rel_b.cols != d)
    throw std::invalid_argument("nbf: need 2m relation maps");
  if (q.rows != 1 || q.cols != d)
    throw std::invalid_argument("nbf: q must be 1 x d");
  EnergyFamily e;
  e.kind = EnergyKind::Nbf;
  e.id = "nbf";
  e.d = d;
  e.m = m;
  e.pi = InputModel::identity_map();
  e.nonsmooth = eta;
  // Psi^-1 only enters the constant part of the node potential; a merely
  // positive semidefinite Psi still yields well-defined gradients, so defer
  // the failure until a potential value is actually requested.
  try {
    e.Psi_inv = spd_inverse(Psi);
  } catch (const std::invalid_argument&) {
    e.Psi_inv = Matrix();
  }
  e.Phi = std::move(Phi);
  e.Psi = std::move(Psi);
  e.rel_W = std::move(rel_W);
  e.rel_b = std::move(rel_b);
  e.q = std::move(q);
  // e_r = W_r q + b_r
  e.nbf_E = Matrix(2 * m, d);
  for (std::size_t r = 0; r < 2 * m; ++r) {
    const Matrix& W = e.rel_W[r];
    if (W.rows != d || W.cols != d)
      throw std::invalid_argument("nbf: W_r must be d x d");
    for (std::size_t j = 0; j < d; ++j) {
      double s = e.rel_b.at(r, j);
      for (std::size_t k = 0; k < d; ++k) s += W.at(j, k) * e.q.at(0, k);
      e.nbf_E.at(r, j) = s;
    }
  }
  return e;
}

void validate_energy_inputs(const EnergyFamily& e, const HeteroGraph& g,
                            const Matrix& H, const Matrix& X) {
  if (H.rows != g.n || H.cols != e.d)
    throw std::invalid_argument("energy: H must be n x d");
  if (g.m != e.m)
    throw std::invalid_argument("energy: graph relation count mismatch");
  if (e.has_node_term()) {
    if (X.rows != g.n || X.cols != e.feature_dim())
      throw std::invalid_argument("energy: X arity mismatch");
  }
}

double eval_energy(const EnergyFamily& e, const HeteroGraph& g,
                   const Matrix& H, const Matrix& X) {
  validate_energy_inputs(e, g, H, X);
  const auto& edges = g.edges;
  // flat edge order is (dst, src, rel); inverse entries contribute zero
  std::vector<NodeId> dst_of(edges.size());
  for (NodeId v = 0; v < g.n; ++v)
    for (std::size_t k = g.offsets[v]; k < g.offsets[v + 1]; ++k)
      dst_of[k] = v;
  const double pair_sum = ordered_chunk_sum(edges.size(), [&](std::size_t k) {
    const InEdge& ed = edges[k];
    if (ed.rel >= e.m) return 0.0;
    return e.pair_value(H.row(ed.src), H.row(dst_of[k]), ed.rel);
  });
  double node_sum = 0.0;
  if (e.has_node_term()) {
    node_sum = ordered_chunk_sum(g.n, [&](std::size_t v) {
      return e.node_value(H.row(v), X.row(v));
    });
  }
  return pair_sum + node_sum;
}

Matrix full_gradient_dense(const EnergyFamily& e, const HeteroGraph& g,
                           const Matrix& H, const Matrix& X) {
  validate_energy_inputs(e, g, H, X);
  Matrix G(g.n, e.d);
  std::vector<double> buf(e.d);
  for (NodeId v = 0; v < g.n; ++v) {
    for (const InEdge* it = g.nbr_begin(v); it != g.nbr_end(v); ++it) {
      if (it->rel >= e.m) continue;
      e.pair_grad_v(H.row(it->src), H.row(v), it->rel, buf.data());
      for (std::size_t j = 0; j < e.d; ++j) G.at(v, j) += buf[j];
      e.pair_grad_u(H.row(it->src), H.row(v), it->rel, buf.data());
      for (std::size_t j = 0; j < e.d; ++j) G.at(it->src, j) += buf[j];
    }
  }
  if (e.has_node_term()) {
    for (NodeId v = 0; v < g.n; ++v) {
      e.grad_node(H.row(v), X.row(v), buf.data());
      for (std::size_t j = 0; j < e.d; ++j) G.at(v, j) += buf[j];
    }
  }
  return G;
}

}  // namespace ugnn
