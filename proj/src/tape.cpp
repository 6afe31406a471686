#include "ugnn/tape.hpp"

#include <cmath>
#include <stdexcept>

namespace ugnn {

namespace {

// b may be full-shape, a column (R x 1), or a scalar (1 x 1)
double bcast(const Matrix& b, std::size_t i, std::size_t j) {
  if (b.rows == 1 && b.cols == 1) return b.data[0];
  if (b.cols == 1) return b.at(i, 0);
  return b.at(i, j);
}

bool bcast_ok(const Matrix& a, const Matrix& b) {
  if (a.same_shape(b)) return true;
  if (b.rows == 1 && b.cols == 1) return true;
  return b.cols == 1 && b.rows == a.rows;
}

// collapse a full-shape gradient onto the (possibly broadcast) operand shape
Matrix reduce_to(const Matrix& g, std::size_t rows, std::size_t cols) {
  if (g.rows == rows && g.cols == cols) return g;
  Matrix out(rows, cols);
  if (rows == 1 && cols == 1) {
    double s = 0.0;
    for (double v : g.data) s += v;
    out.data[0] = s;
    return out;
  }
  for (std::size_t i = 0; i < g.rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < g.cols; ++j) s += g.at(i, j);
    out.at(i, 0) = s;
  }
  return out;
}

/// Single evaluation routine shared by record and replay, so a replayed value
/// is produced by exactly the instruction sequence that produced the stored
/// one.
Matrix eval_node(const TapeNode& nd, const std::vector<Matrix>& vals) {
  auto val = [&](int id) -> const Matrix& {
    return vals[static_cast<std::size_t>(id)];
  };
  switch (nd.op) {
    case TapeOp::Input:
      throw std::logic_error("tape: input nodes carry their own value");
    case TapeOp::Gather: {
      const Matrix& in = val(nd.a);
      const auto& idx = *nd.index;
      Matrix out(idx.size(), in.cols);
      for (std::size_t k = 0; k < idx.size(); ++k)
        for (std::size_t j = 0; j < in.cols; ++j)
          out.at(k, j) = in.at(idx[k], j);
      return out;
    }
    case TapeOp::ScatterSum: {
      const Matrix& in = val(nd.a);
      const auto& off = *nd.index;
      Matrix out(nd.n_out, in.cols);
      for (std::size_t v = 0; v < nd.n_out; ++v)
        for (std::size_t k = off[v]; k < off[v + 1]; ++k)
          for (std::size_t j = 0; j < in.cols; ++j)
            out.at(v, j) += in.at(k, j);
      return out;
    }
    case TapeOp::Affine: {
      const Matrix& X = val(nd.a);
      const Matrix& W = val(nd.b);
      Matrix out = nd.transpose_w ? matmul(X, transpose(W)) : matmul(X, W);
      if (nd.c >= 0) {
        const Matrix& b = val(nd.c);
        for (std::size_t i = 0; i < out.rows; ++i)
          for (std::size_t j = 0; j < out.cols; ++j)
            out.at(i, j) += b.at(0, j);
      }
      return out;
    }
    case TapeOp::Add: {
      const Matrix& A = val(nd.a);
      const Matrix& B = val(nd.b);
      Matrix out = A;
      for (std::size_t i = 0; i < out.rows; ++i)
        for (std::size_t j = 0; j < out.cols; ++j)
          out.at(i, j) += bcast(B, i, j);
      return out;
    }
    case TapeOp::Mul: {
      const Matrix& A = val(nd.a);
      const Matrix& B = val(nd.b);
      Matrix out = A;
      for (std::size_t i = 0; i < out.rows; ++i)
        for (std::size_t j = 0; j < out.cols; ++j)
          out.at(i, j) *= bcast(B, i, j);
      return out;
    }
    case TapeOp::Tanh: {
      Matrix out = val(nd.a);
      for (double& v : out.data) v = std::tanh(v);
      return out;
    }
    case TapeOp::HuberGrad: {
      Matrix out = val(nd.a);
      for (double& v : out.data) v = v < -1.0 ? -1.0 : (v > 1.0 ? 1.0 : v);
      return out;
    }
    case TapeOp::Prox:
      return nd.prox.apply(val(nd.a), nd.gamma);
    case TapeOp::Sqrt: {
      Matrix out = val(nd.a);
      for (double& v : out.data) v = std::sqrt(v);
      return out;
    }
    case TapeOp::Recip: {
      Matrix out = val(nd.a);
      for (double& v : out.data) v = 1.0 / v;
      return out;
    }
  }
  throw std::logic_error("tape: unknown op");
}

}  // namespace

int Tape::constant(Matrix v) {
  TapeNode nd;
  nd.op = TapeOp::Input;
  nodes.push_back(std::move(nd));
  values.push_back(std::move(v));
  return static_cast<int>(nodes.size()) - 1;
}

int Tape::param(const std::string& name, Matrix v) {
  if (name.empty()) throw std::invalid_argument("tape: empty parameter name");
  for (const TapeNode& nd : nodes)
    if (nd.param == name)
      throw std::invalid_argument("tape: duplicate parameter " + name);
  TapeNode nd;
  nd.op = TapeOp::Input;
  nd.param = name;
  nodes.push_back(std::move(nd));
  values.push_back(std::move(v));
  return static_cast<int>(nodes.size()) - 1;
}

namespace {

void check_id(int id, std::size_t size, const char* what) {
  if (id < 0 || static_cast<std::size_t>(id) >= size)
    throw std::invalid_argument(std::string("tape: bad operand id for ") +
                                what);
}

}  // namespace

int Tape::push(TapeNode nd) {
  values.push_back(eval_node(nd, values));
  nodes.push_back(std::move(nd));
  return static_cast<int>(nodes.size()) - 1;
}

int Tape::gather(int src, IndexVec index) {
  check_id(src, nodes.size(), "gather");
  if (!index) throw std::invalid_argument("tape: gather needs an index");
  const Matrix& in = value(src);
  for (std::size_t k : *index)
    if (k >= in.rows)
      throw std::invalid_argument("tape: gather index out of range");
  TapeNode nd;
  nd.op = TapeOp::Gather;
  nd.a = src;
  nd.index = std::move(index);
  return push(std::move(nd));
}

int Tape::scatter_sum(int src, IndexVec offsets, std::size_t n_out) {
  check_id(src, nodes.size(), "scatter_sum");
  if (!offsets || offsets->size() != n_out + 1)
    throw std::invalid_argument("tape: scatter_sum needs n_out+1 offsets");
  if (offsets->back() != value(src).rows)
    throw std::invalid_argument("tape: scatter_sum offsets do not cover input");
  TapeNode nd;
  nd.op = TapeOp::ScatterSum;
  nd.a = src;
  nd.index = std::move(offsets);
  nd.n_out = n_out;
  return push(std::move(nd));
}

int Tape::affine(int x, int W, int b, bool transpose_w) {
  check_id(x, nodes.size(), "affine");
  check_id(W, nodes.size(), "affine");
  const Matrix& xv = value(x);
  const Matrix& wv = value(W);
  const std::size_t in = transpose_w ? wv.cols : wv.rows;
  const std::size_t out = transpose_w ? wv.rows : wv.cols;
  if (xv.cols != in) throw std::invalid_argument("tape: affine shape mismatch");
  if (b >= 0) {
    check_id(b, nodes.size(), "affine");
    const Matrix& bv = value(b);
    if (bv.rows != 1 || bv.cols != out)
      throw std::invalid_argument("tape: affine bias shape mismatch");
  }
  TapeNode nd;
  nd.op = TapeOp::Affine;
  nd.a = x;
  nd.b = W;
  nd.c = b;
  nd.transpose_w = transpose_w;
  return push(std::move(nd));
}

int Tape::add(int a, int b) {
  check_id(a, nodes.size(), "add");
  check_id(b, nodes.size(), "add");
  if (!bcast_ok(value(a), value(b)))
    throw std::invalid_argument("tape: add operands do not broadcast");
  TapeNode nd;
  nd.op = TapeOp::Add;
  nd.a = a;
  nd.b = b;
  return push(std::move(nd));
}

int Tape::mul(int a, int b) {
  check_id(a, nodes.size(), "mul");
  check_id(b, nodes.size(), "mul");
  if (!bcast_ok(value(a), value(b)))
    throw std::invalid_argument("tape: mul operands do not broadcast");
  TapeNode nd;
  nd.op = TapeOp::Mul;
  nd.a = a;
  nd.b = b;
  return push(std::move(nd));
}

int Tape::tanh_op(int a) {
  check_id(a, nodes.size(), "tanh");
  TapeNode nd;
  nd.op = TapeOp::Tanh;
  nd.a = a;
  return push(std::move(nd));
}

int Tape::huber_grad(int a) {
  check_id(a, nodes.size(), "huber_grad");
  TapeNode nd;
  nd.op = TapeOp::HuberGrad;
  nd.a = a;
  return push(std::move(nd));
}

int Tape::prox_op(int a, ProxOperator p, double gamma) {
  check_id(a, nodes.size(), "prox");
  TapeNode nd;
  nd.op = TapeOp::Prox;
  nd.a = a;
  nd.prox = std::move(p);
  nd.gamma = gamma;
  return push(std::move(nd));
}

int Tape::sqrt_op(int a) {
  check_id(a, nodes.size(), "sqrt");
  TapeNode nd;
  nd.op = TapeOp::Sqrt;
  nd.a = a;
  return push(std::move(nd));
}

int Tape::recip(int a) {
  check_id(a, nodes.size(), "recip");
  TapeNode nd;
  nd.op = TapeOp::Recip;
  nd.a = a;
  return push(std::move(nd));
}

int Tape::param_id(const std::string& name) const {
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].param == name) return static_cast<int>(i);
  return -1;
}

Matrix Tape::replay(int target) const {
  check_id(target, nodes.size(), "replay");
  std::vector<Matrix> vals;
  vals.reserve(nodes.size());
  for (std::size_t i = 0; i <= static_cast<std::size_t>(target); ++i) {
    if (nodes[i].op == TapeOp::Input)
      vals.push_back(values[i]);
    else
      vals.push_back(eval_node(nodes[i], vals));
  }
  return vals.back();
}

std::map<std::string, Matrix> Tape::backward(
    const std::map<int, Matrix>& seeds) const {
  std::vector<Matrix> grads(nodes.size());
  std::vector<char> has(nodes.size(), 0);

  auto accumulate = [&](int id, const Matrix& g) {
    const std::size_t i = static_cast<std::size_t>(id);
    if (!has[i]) {
      grads[i] = Matrix(values[i].rows, values[i].cols);
      has[i] = 1;
    }
    if (!grads[i].same_shape(g))
      throw std::invalid_argument("tape: gradient shape mismatch");
    for (std::size_t k = 0; k < g.data.size(); ++k)
      grads[i].data[k] += g.data[k];
  };

  for (const auto& [id, seed] : seeds) {
    check_id(id, nodes.size(), "backward seed");
    if (!seed.same_shape(values[static_cast<std::size_t>(id)]))
      throw std::invalid_argument("tape: seed shape mismatch");
    accumulate(id, seed);
  }

  for (std::size_t i = nodes.size(); i-- > 0;) {
    if (!has[i]) continue;
    const TapeNode& nd = nodes[i];
    const Matrix& up = grads[i];
    auto val = [&](int id) -> const Matrix& {
      return values[static_cast<std::size_t>(id)];
    };
    switch (nd.op) {
      case TapeOp::Input:
        break;
      case TapeOp::Gather: {
        const Matrix& in = val(nd.a);
        Matrix g(in.rows, in.cols);
        const auto& idx = *nd.index;
        for (std::size_t k = 0; k < idx.size(); ++k)
          for (std::size_t j = 0; j < in.cols; ++j)
            g.at(idx[k], j) += up.at(k, j);
        accumulate(nd.a, g);
        break;
      }
      case TapeOp::ScatterSum: {
        const Matrix& in = val(nd.a);
        Matrix g(in.rows, in.cols);
        const auto& off = *nd.index;
        for (std::size_t v = 0; v < nd.n_out; ++v)
          for (std::size_t k = off[v]; k < off[v + 1]; ++k)
            for (std::size_t j = 0; j < in.cols; ++j)
              g.at(k, j) = up.at(v, j);
        accumulate(nd.a, g);
        break;
      }
      case TapeOp::Affine: {
        const Matrix& X = val(nd.a);
        const Matrix& W = val(nd.b);
        if (nd.transpose_w) {
          accumulate(nd.a, matmul(up, W));
          accumulate(nd.b, matmul(transpose(up), X));
        } else {
          accumulate(nd.a, matmul(up, transpose(W)));
          accumulate(nd.b, matmul(transpose(X), up));
        }
        if (nd.c >= 0) {
          Matrix gb(1, up.cols);
          for (std::size_t r = 0; r < up.rows; ++r)
            for (std::size_t j = 0; j < up.cols; ++j)
              gb.at(0, j) += up.at(r, j);
          accumulate(nd.c, gb);
        }
        break;
      }
      case TapeOp::Add: {
        const Matrix& B = val(nd.b);
        accumulate(nd.a, up);
        accumulate(nd.b, reduce_to(up, B.rows, B.cols));
        break;
      }
      case TapeOp::Mul: {
        const Matrix& A = val(nd.a);
        const Matrix& B = val(nd.b);
        Matrix ga = up;
        for (std::size_t r = 0; r < ga.rows; ++r)
          for (std::size_t j = 0; j < ga.cols; ++j)
            ga.at(r, j) *= bcast(B, r, j);
        accumulate(nd.a, ga);
        Matrix gb = up;
        for (std::size_t r = 0; r < gb.rows; ++r)
          for (std::size_t j = 0; j < gb.cols; ++j) gb.at(r, j) *= A.at(r, j);
        accumulate(nd.b, reduce_to(gb, B.rows, B.cols));
        break;
      }
      case TapeOp::Tanh: {
        const Matrix& y = values[i];
        Matrix g = up;
        for (std::size_t k = 0; k < g.data.size(); ++k)
          g.data[k] *= 1.0 - y.data[k] * y.data[k];
        accumulate(nd.a, g);
        break;
      }
      case TapeOp::HuberGrad: {
        const Matrix& x = val(nd.a);
        Matrix g = up;
        for (std::size_t k = 0; k < g.data.size(); ++k)
          if (!(std::fabs(x.data[k]) < 1.0)) g.data[k] = 0.0;
        accumulate(nd.a, g);
        break;
      }
      case TapeOp::Prox:
        accumulate(nd.a, nd.prox.backward(val(nd.a), up));
        break;
      case TapeOp::Sqrt: {
        const Matrix& y = values[i];
        Matrix g = up;
        for (std::size_t k = 0; k < g.data.size(); ++k)
          g.data[k] *= 0.5 / y.data[k];
        accumulate(nd.a, g);
        break;
      }
      case TapeOp::Recip: {
        const Matrix& y = values[i];
        Matrix g = up;
        for (std::size_t k = 0; k < g.data.size(); ++k)
          g.data[k] *= -y.data[k] * y.data[k];
        accumulate(nd.a, g);
        break;
      }
    }
  }

  std::map<std::string, Matrix> out;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].param.empty()) continue;
    out[nodes[i].param] =
        has[i] ? grads[i] : Matrix(values[i].rows, values[i].cols);
  }
  return out;
}

namespace {

/// Everything record_unroll needs to emit one message block per step.
struct EdgeIndex {
  IndexVec srcs, dsts, offsets;
  IndexVec eidx;            // kge: row of E per stored edge
  int sign = -1, pol = -1;  // kge columns: +-1 direction, 1 for positives
  int mask_f = -1, mask_i = -1;  // heterophily forward/inverse masks
};

EdgeIndex build_edge_index(Tape& tape, const EnergyFamily& e,
                           const HeteroGraph& g) {
  const std::size_t ne = g.edge_count();
  auto srcs = std::make_shared<std::vector<std::size_t>>(ne);
  auto dsts = std::make_shared<std::vector<std::size_t>>(ne);
  auto offsets = std::make_shared<std::vector<std::size_t>>(g.offsets);
  for (NodeId v = 0; v < g.n; ++v)
    for (std::size_t k = g.offsets[v]; k < g.offsets[v + 1]; ++k) {
      (*srcs)[k] = g.edges[k].src;
      (*dsts)[k] = v;
    }

  EdgeIndex out;
  out.srcs = std::move(srcs);
  out.dsts = std::move(dsts);
  out.offsets = std::move(offsets);

  if (e.kind == EnergyKind::Heterophily) {
    Matrix mf(ne, 1), mi(ne, 1);
    for (std::size_t k = 0; k < ne; ++k) {
      const bool inv = g.edges[k].rel >= e.m;
      mf.at(k, 0) = inv ? 0.0 : 1.0;
      mi.at(k, 0) = inv ? 1.0 : 0.0;
    }
    out.mask_f = tape.constant(std::move(mf));
    out.mask_i = tape.constant(std::move(mi));
  }
  if (e.kind == EnergyKind::Kge) {
    auto eidx = std::make_shared<std::vector<std::size_t>>(ne);
    Matrix sg(ne, 1), pol(ne, 1);
    for (std::size_t k = 0; k < ne; ++k) {
      const RelationId rel = g.edges[k].rel;
      const RelationId fam = rel < e.m ? rel : rel - e.m;
      (*eidx)[k] = fam < e.kge_m ? fam : fam - e.kge_m;
      sg.at(k, 0) = rel < e.m ? 1.0 : -1.0;
      pol.at(k, 0) = fam < e.kge_m ? 1.0 : 0.0;
    }
    out.eidx = std::move(eidx);
    out.sign = tape.constant(std::move(sg));
    out.pol = tape.constant(std::move(pol));
  }
  return out;
}

Matrix scalar(double v) {
  Matrix m(1, 1);
  m.data[0] = v;
  return m;
}

struct MsgContext {
  int lam = -1;       // lambda as a 1x1 node (param when trainable)
  int c_mat = -1;     // heterophily mixing matrix
  int e_mat = -1;     // kge relation embeddings
  int neg1 = -1;      // shared -1 scalar
  int ones_d1 = -1;   // d x 1 column of ones for row sums
};

/// sigma(s) = 0.5 + 0.5 * tanh(0.5 * s), columnwise
int record_sigmoid(Tape& t, int s) {
  const int half = t.constant(scalar(0.5));
  return t.add(t.mul(t.tanh_op(t.mul(s, half)), half), half);
}

/// One message matrix (|edges| x d) at embeddings h, stored-edge order.
int record_messages(Tape& t, const EnergyFamily& e, const EdgeIndex& ix,
                    const MsgContext& cx, int h) {
  const int hsrc = t.gather(h, ix.srcs);
  const int hdst = t.gather(h, ix.dsts);
  switch (e.kind) {
    case EnergyKind::Quadratic:
    case EnergyKind::Huber:
    case EnergyKind::LogCosh:
    case EnergyKind::Lp:
    case EnergyKind::GrMlp:
      return t.mul(t.add(hdst, t.mul(hsrc, cx.neg1)), cx.lam);
    case EnergyKind::Heterophily: {
      const int hc = t.affine(hsrc, cx.c_mat);
      const int msg_f = t.mul(t.add(hdst, t.mul(hc, cx.neg1)), cx.lam);
      const int diff = t.add(t.affine(hdst, cx.c_mat), t.mul(hsrc, cx.neg1));
      const int msg_i = t.mul(t.affine(diff, cx.c_mat, -1, true), cx.lam);
      return t.add(t.mul(msg_f, ix.mask_f), t.mul(msg_i, ix.mask_i));
    }
    case EnergyKind::Kge: {
      const int eg = t.gather(cx.e_mat, ix.eidx);
      if (e.score == ScoreKind::DistMult) {
        const int prod = t.mul(t.mul(hsrc, eg), hdst);
        const int s = t.affine(prod, cx.ones_d1);
        const int c = t.add(record_sigmoid(t, s), t.mul(ix.pol, cx.neg1));
        return t.mul(t.mul(hsrc, eg), c);
      }
      const int diff = t.add(hsrc, t.mul(hdst, cx.neg1));
      const int b = t.add(t.mul(diff, ix.sign), eg);
      const int nrm = t.sqrt_op(t.affine(t.mul(b, b), cx.ones_d1));
      const int s = t.mul(nrm, cx.neg1);
      const int c = t.add(record_sigmoid(t, s), t.mul(ix.pol, cx.neg1));
      return t.mul(b, t.mul(t.mul(c, t.recip(nrm)), ix.sign));
    }
    case EnergyKind::Nbf:
      break;
  }
  throw std::invalid_argument("tape: family not recordable");
}

/// kappa' at h: fidelity pull toward pi(x) plus the optional unit penalty.
int record_node_grad(Tape& t, const EnergyFamily& e, const MsgContext& cx,
                     int h, int pi_x) {
  int k = -1;
  if (e.fidelity != FidelityKind::None) {
    const int u = t.add(h, t.mul(pi_x, cx.neg1));
    switch (e.fidelity) {
      case FidelityKind::Quadratic: k = u; break;
      case FidelityKind::HuberLoss: k = t.huber_grad(u); break;
      case FidelityKind::LogCoshLoss: k = t.tanh_op(u); break;
      case FidelityKind::None: break;
    }
    if (e.unit_penalty != 0.0) {
      const int sumsq = t.affine(t.mul(h, h), cx.ones_d1);
      const int dev = t.add(sumsq, cx.neg1);
      const int coef = t.mul(dev, t.constant(scalar(4.0 * e.unit_penalty)));
      k = t.add(k, t.mul(h, coef));
    }
  }
  return k;
}

}  // namespace

UnrollRecording record_unroll(const EnergyFamily& e,
                              const DescentAlgorithm& algo,
                              const HeteroGraph& g, const Matrix& X,
                              std::size_t L, const Matrix* H0) {
  if (e.kind == EnergyKind::Nbf)
    throw std::invalid_argument(
        "tape: the bilinear family is outside the recordable vocabulary");
  if (algo.backtracking)
    throw std::invalid_argument(
        "tape: backtracking line search is not a recordable update");
  if (g.m != e.m)
    throw std::invalid_argument("tape: graph/energy relation count mismatch");

  UnrollRecording rec;
  Tape& t = rec.tape;
  rec.x_id = t.constant(X);

  MsgContext cx;
  cx.neg1 = t.constant(scalar(-1.0));
  cx.ones_d1 = t.constant(Matrix(e.d, 1, 1.0));
  if (e.kind == EnergyKind::Kge) {
    cx.e_mat = t.param("E", e.E);
  } else if (e.lambda_trainable) {
    cx.lam = t.param("lambda_eff", scalar(e.lambda()));
  } else {
    cx.lam = t.constant(scalar(e.lambda_value));
  }
  if (e.kind == EnergyKind::Heterophily) cx.c_mat = t.param("C", e.C);

  // pi(X), recorded once; parameters only when pi participates in gradients
  int pi_x = -1;
  if (!e.pi.is_identity) {
    const int w1 = t.param("pi.W1", e.pi.W1);
    const int b1 = t.param("pi.b1", e.pi.b1);
    pi_x = t.affine(rec.x_id, w1, b1);
    if (e.pi.two_layer) {
      const int w2 = t.param("pi.W2", e.pi.W2);
      const int b2 = t.param("pi.b2", e.pi.b2);
      pi_x = t.affine(t.tanh_op(pi_x), w2, b2);
    }
  } else if (e.has_node_term()) {
    if (X.cols != e.d)
      throw std::invalid_argument("tape: identity input model needs d columns");
    pi_x = rec.x_id;
  }

  // start: explicit H0 or pi(X); prox'd when the variant projects
  int h = H0 ? t.constant(*H0) : pi_x;
  if (h < 0)
    throw std::invalid_argument("tape: no start value (H0 or pi(X)) available");
  if (t.value(h).rows != g.n || t.value(h).cols != e.d)
    throw std::invalid_argument("tape: start must be n x d");
  const bool proxed = algo.uses_prox() && !algo.prox.is_identity();
  if (proxed) h = t.prox_op(h, algo.prox, algo.gamma);
  rec.h_ids.push_back(h);

  const EdgeIndex ix = build_edge_index(t, e, g);

  // per-variant constants
  const int neg_gamma = t.constant(scalar(-algo.gamma));
  int deg_col = -1;
  if (algo.kind == AlgoKind::DegreeGd) {
    Matrix f(g.n, 1);
    for (NodeId v = 0; v < g.n; ++v) {
      const std::size_t deg = g.in_degree(v);
      f.at(v, 0) = -algo.gamma / static_cast<double>(deg > 0 ? deg : 1);
    }
    deg_col = t.constant(std::move(f));
  }
  int beta_c = -1, one_minus_beta = -1;
  if (algo.kind == AlgoKind::Momentum || algo.kind == AlgoKind::RmsProp) {
    beta_c = t.constant(scalar(algo.beta));
    one_minus_beta = t.constant(scalar(1.0 - algo.beta));
  }
  int b1_c = -1, omb1_c = -1, b2_c = -1, omb2_c = -1, eps_c = -1;
  if (algo.kind == AlgoKind::Adam) {
    b1_c = t.constant(scalar(algo.beta1));
    omb1_c = t.constant(scalar(1.0 - algo.beta1));
    b2_c = t.constant(scalar(algo.beta2));
    omb2_c = t.constant(scalar(1.0 - algo.beta2));
  }
  if (algo.kind == AlgoKind::AdaGrad || algo.kind == AlgoKind::RmsProp ||
      algo.kind == AlgoKind::Adam)
    eps_c = t.constant(scalar(algo.eps));

  int s1 = -1, s2 = -1;
  if (algo.state_arity() >= 1) s1 = t.constant(Matrix(g.n, e.d));
  if (algo.state_arity() >= 2) s2 = t.constant(Matrix(g.n, e.d));

  for (std::size_t l = 1; l <= L; ++l) {
    const int msg = record_messages(t, e, ix, cx, h);
    const int agg = t.scatter_sum(msg, ix.offsets, g.n);
    const int k = record_node_grad(t, e, cx, h, pi_x);
    const int grad = k >= 0 ? t.add(agg, k) : agg;

    switch (algo.kind) {
      case AlgoKind::Gd:
        h = t.add(h, t.mul(grad, neg_gamma));
        break;
      case AlgoKind::ProxGd:
        h = t.add(h, t.mul(grad, neg_gamma));
        if (proxed) h = t.prox_op(h, algo.prox, algo.gamma);
        break;
      case AlgoKind::DegreeGd:
        h = t.add(h, t.mul(grad, deg_col));
        break;
      case AlgoKind::Momentum:
        s1 = t.add(t.mul(s1, beta_c), t.mul(grad, one_minus_beta));
        h = t.add(h, t.mul(s1, neg_gamma));
        if (proxed) h = t.prox_op(h, algo.prox, algo.gamma);
        break;
      case AlgoKind::AdaGrad: {
        s1 = t.add(s1, t.mul(grad, grad));
        const int den = t.sqrt_op(t.add(s1, eps_c));
        h = t.add(h, t.mul(t.mul(grad, t.recip(den)), neg_gamma));
        break;
      }
      case AlgoKind::RmsProp: {
        s1 = t.add(t.mul(s1, beta_c), t.mul(t.mul(grad, grad), one_minus_beta));
        const int den = t.sqrt_op(t.add(s1, eps_c));
        h = t.add(h, t.mul(t.mul(grad, t.recip(den)), neg_gamma));
        break;
      }
      case AlgoKind::Adam: {
        s1 = t.add(t.mul(s1, b1_c), t.mul(grad, omb1_c));
        s2 = t.add(t.mul(s2, b2_c), t.mul(t.mul(grad, grad), omb2_c));
        const double ld = static_cast<double>(l);
        const int m_hat = t.mul(
            s1, t.constant(scalar(1.0 / (1.0 - std::pow(algo.beta1, ld)))));
        const int v_hat = t.mul(
            s2, t.constant(scalar(1.0 / (1.0 - std::pow(algo.beta2, ld)))));
        const int den = t.add(t.sqrt_op(v_hat), eps_c);
        h = t.add(h, t.mul(t.mul(m_hat, t.recip(den)), neg_gamma));
        break;
      }
    }
    rec.h_ids.push_back(h);
  }

  rec.h_final = h;
  return rec;
}

int record_kge_scores(Tape& tape, const EnergyFamily& e, const HeteroGraph& g,
                      int h, int E_id) {
  if (e.kind != EnergyKind::Kge)
    throw std::invalid_argument("tape: scores need the kge family");
  std::vector<std::size_t> ks;
  for (NodeId v = 0; v < g.n; ++v)
    for (std::size_t k = g.offsets[v]; k < g.offsets[v + 1]; ++k)
      if (g.edges[k].rel < e.m) ks.push_back(k);

  auto srcs = std::make_shared<std::vector<std::size_t>>(ks.size());
  auto dsts = std::make_shared<std::vector<std::size_t>>(ks.size());
  auto eidx = std::make_shared<std::vector<std::size_t>>(ks.size());
  std::size_t pos = 0;
  for (NodeId v = 0; v < g.n; ++v)
    for (std::size_t k = g.offsets[v]; k < g.offsets[v + 1]; ++k) {
      const RelationId rel = g.edges[k].rel;
      if (rel >= e.m) continue;
      (*srcs)[pos] = g.edges[k].src;
      (*dsts)[pos] = v;
      (*eidx)[pos] = rel < e.kge_m ? rel : rel - e.kge_m;
      ++pos;
    }

  Tape& t = tape;
  const int neg1 = t.constant(scalar(-1.0));
  const int ones_d1 = t.constant(Matrix(e.d, 1, 1.0));
  const int hsrc = t.gather(h, srcs);
  const int hdst = t.gather(h, dsts);
  const int eg = t.gather(E_id, eidx);
  if (e.score == ScoreKind::DistMult)
    return t.affine(t.mul(t.mul(hsrc, eg), hdst), ones_d1);
  const int b = t.add(t.add(hsrc, eg), t.mul(hdst, neg1));
  const int nrm = t.sqrt_op(t.affine(t.mul(b, b), ones_d1));
  return t.mul(nrm, neg1);
}

}  // namespace ugnn
