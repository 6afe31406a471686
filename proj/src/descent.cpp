#include "ugnn/descent.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "ugnn/io.hpp"

namespace ugnn {

const char* algo_name(AlgoKind k) {
  switch (k) {
    case AlgoKind::Gd: return "gd";
    case AlgoKind::ProxGd: return "prox";
    case AlgoKind::DegreeGd: return "degree";
    case AlgoKind::Momentum: return "momentum";
    case AlgoKind::AdaGrad: return "adagrad";
    case AlgoKind::RmsProp: return "rmsprop";
    case AlgoKind::Adam: return "adam";
  }
  return "?";
}

const char* step_phase_name(StepPhase p) {
  switch (p) {
    case StepPhase::None: return "none";
    case StepPhase::Message: return "message";
    case StepPhase::Aggregate: return "aggregate";
    case StepPhase::Update: return "update";
  }
  return "?";
}

namespace {

void check_gamma(double gamma) {
  if (!(gamma > 0.0))
    throw std::invalid_argument("descent: gamma must be > 0");
}

void check_unit_interval(double b, const char* name) {
  if (!(b >= 0.0) || b >= 1.0)
    throw std::invalid_argument(std::string("descent: ") + name +
                                " must lie in [0, 1)");
}

void check_eps(double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("descent: eps must be > 0");
}

}  // namespace

DescentAlgorithm make_gd(double gamma) {
  check_gamma(gamma);
  DescentAlgorithm a;
  a.kind = AlgoKind::Gd;
  a.gamma = gamma;
  return a;
}

DescentAlgorithm make_prox_gd(double gamma, ProxOperator prox) {
  check_gamma(gamma);
  DescentAlgorithm a;
  a.kind = AlgoKind::ProxGd;
  a.gamma = gamma;
  a.prox = std::move(prox);
  return a;
}

DescentAlgorithm make_degree_gd(double gamma) {
  check_gamma(gamma);
  DescentAlgorithm a;
  a.kind = AlgoKind::DegreeGd;
  a.gamma = gamma;
  return a;
}

DescentAlgorithm make_momentum(double gamma, double beta, ProxOperator prox) {
  check_gamma(gamma);
  check_unit_interval(beta, "beta");
  DescentAlgorithm a;
  a.kind = AlgoKind::Momentum;
  a.gamma = gamma;
  a.beta = beta;
  a.prox = std::move(prox);
  return a;
}

DescentAlgorithm make_adagrad(double gamma, double eps) {
  check_gamma(gamma);
  check_eps(eps);
  DescentAlgorithm a;
  a.kind = AlgoKind::AdaGrad;
  a.gamma = gamma;
  a.eps = eps;
  return a;
}

DescentAlgorithm make_rmsprop(double gamma, double beta, double eps) {
  check_gamma(gamma);
  check_unit_interval(beta, "beta");
  check_eps(eps);
  DescentAlgorithm a;
  a.kind = AlgoKind::RmsProp;
  a.gamma = gamma;
  a.beta = beta;
  a.eps = eps;
  return a;
}

DescentAlgorithm make_adam(double gamma, double beta1, double beta2,
                           double eps) {
  check_gamma(gamma);
  check_unit_interval(beta1, "beta1");
  check_unit_interval(beta2, "beta2");
  check_eps(eps);
  DescentAlgorithm a;
  a.kind = AlgoKind::Adam;
  a.gamma = gamma;
  a.beta1 = beta1;
  a.beta2 = beta2;
  a.eps = eps;
  return a;
}

HiddenState make_hidden_state(const DescentAlgorithm& algo, std::size_t n,
                              std::size_t d) {
  HiddenState s;
  const std::size_t arity = algo.state_arity();
  if (arity >= 1) s.s1 = Matrix(n, d);
  if (arity >= 2) s.s2 = Matrix(n, d);
  return s;
}

bool hidden_state_bit_equal(const HiddenState& a, const HiddenState& b) {
  return a.steps == b.steps && bit_equal(a.s1, b.s1) && bit_equal(a.s2, b.s2);
}

namespace {

bool row_finite(const double* r, std::size_t d) {
  for (std::size_t j = 0; j < d; ++j)
    if (!std::isfinite(r[j])) return false;
  return true;
}

// message + aggregate phases: A[v] = sum of grad_pair_dst over the stored
// in-edges of v, added in stored order
void aggregate(const EnergyFamily& e, const HeteroGraph& g, const Matrix& H,
               Exec exec, Matrix& A, bool& msg_bad, bool& agg_bad) {
  const std::size_t d = e.d;
  int mbad = 0;
  int abad = 0;
  if (exec == Exec::Serial) {
    // reference path: materialize every per-edge message first
    Matrix M(g.edges.size(), d);
    for (NodeId v = 0; v < g.n; ++v)
      for (std::size_t k = g.offsets[v]; k < g.offsets[v + 1]; ++k) {
        const InEdge& ed = g.edges[k];
        e.grad_pair_dst(H.row(ed.src), H.row(v), ed.rel, M.row(k));
        if (!row_finite(M.row(k), d)) mbad = 1;
      }
    for (NodeId v = 0; v < g.n; ++v) {
      double* av = A.row(v);
      for (std::size_t k = g.offsets[v]; k < g.offsets[v + 1]; ++k) {
        const double* mk = M.row(k);
        for (std::size_t j = 0; j < d; ++j) av[j] += mk[j];
      }
      if (!row_finite(av, d)) abad = 1;
    }
  } else {
#pragma omp parallel reduction(| : mbad, abad)
    {
      std::vector<double> buf(d);
#pragma omp for schedule(static)
      for (std::size_t v = 0; v < g.n; ++v) {
        double* av = A.row(v);
        for (std::size_t k = g.offsets[v]; k < g.offsets[v + 1]; ++k) {
          const InEdge& ed = g.edges[k];
          e.grad_pair_dst(H.row(ed.src), H.row(v), ed.rel, buf.data());
          if (!row_finite(buf.data(), d)) mbad = 1;
          for (std::size_t j = 0; j < d; ++j) av[j] += buf[j];
        }
        if (!row_finite(av, d)) abad = 1;
      }
    }
  }
  msg_bad = mbad != 0;
  agg_bad = abad != 0;
}

void node_gradients(const EnergyFamily& e, const HeteroGraph& g,
                    const Matrix& H, const Matrix& X, Exec exec, Matrix& K) {
  if (!e.has_node_term()) return;
  const std::size_t d = e.d;
  if (exec == Exec::Serial) {
    for (NodeId v = 0; v < g.n; ++v) e.grad_node(H.row(v), X.row(v), K.row(v));
  } else {
#pragma omp parallel for schedule(static)
    for (std::size_t v = 0; v < g.n; ++v)
      e.grad_node(H.row(v), X.row(v), K.row(v));
  }
  (void)d;
}

void next_hidden_state(const DescentAlgorithm& algo, const Matrix& G,
                       const HiddenState& S, HiddenState& S_out) {
  const std::size_t sz = G.data.size();
  switch (algo.kind) {
    case AlgoKind::Gd:
    case AlgoKind::ProxGd:
    case AlgoKind::DegreeGd:
      break;
    case AlgoKind::Momentum:
      for (std::size_t i = 0; i < sz; ++i)
        S_out.s1.data[i] =
            algo.beta * S.s1.data[i] + (1.0 - algo.beta) * G.data[i];
      break;
    case AlgoKind::AdaGrad:
      for (std::size_t i = 0; i < sz; ++i)
        S_out.s1.data[i] = S.s1.data[i] + G.data[i] * G.data[i];
      break;
    case AlgoKind::RmsProp:
      for (std::size_t i = 0; i < sz; ++i)
        S_out.s1.data[i] = algo.beta * S.s1.data[i] +
                           (1.0 - algo.beta) * G.data[i] * G.data[i];
      break;
    case AlgoKind::Adam:
      for (std::size_t i = 0; i < sz; ++i) {
        S_out.s1.data[i] =
            algo.beta1 * S.s1.data[i] + (1.0 - algo.beta1) * G.data[i];
        S_out.s2.data[i] = algo.beta2 * S.s2.data[i] +
                           (1.0 - algo.beta2) * G.data[i] * G.data[i];
      }
      break;
  }
  S_out.steps = S.steps + 1;
}

// the variant's h-update at step size gamma; reads the already-advanced state
void candidate_update(const DescentAlgorithm& algo, const HeteroGraph& g,
                      const Matrix& H, const Matrix& G,
                      const HiddenState& S_out, double gamma, Exec exec,
                      Matrix& out) {
  const std::size_t n = H.rows;
  const std::size_t d = H.cols;
  const bool par = exec == Exec::Parallel;
#pragma omp parallel for schedule(static) if (par)
  for (std::size_t v = 0; v < n; ++v) {
    const double* h = H.row(v);
    const double* gr = G.row(v);
    double* o = out.row(v);
    switch (algo.kind) {
      case AlgoKind::Gd:
      case AlgoKind::ProxGd:
        for (std::size_t j = 0; j < d; ++j) o[j] = h[j] - gamma * gr[j];
        break;
      case AlgoKind::DegreeGd: {
        const std::size_t deg = g.in_degree(v);
        const double f = gamma / static_cast<double>(deg > 0 ? deg : 1);
        for (std::size_t j = 0; j < d; ++j) o[j] = h[j] - f * gr[j];
        break;
      }
      case AlgoKind::Momentum: {
        const double* s = S_out.s1.row(v);
        for (std::size_t j = 0; j < d; ++j) o[j] = h[j] - gamma * s[j];
        break;
      }
      case AlgoKind::AdaGrad:
      case AlgoKind::RmsProp: {
        const double* s = S_out.s1.row(v);
        for (std::size_t j = 0; j < d; ++j)
          o[j] = h[j] - gamma * gr[j] / std::sqrt(s[j] + algo.eps);
        break;
      }
      case AlgoKind::Adam: {
        const double* s1 = S_out.s1.row(v);
        const double* s2 = S_out.s2.row(v);
        const double l = static_cast<double>(S_out.steps);
        const double c1 = 1.0 - std::pow(algo.beta1, l);
        const double c2 = 1.0 - std::pow(algo.beta2, l);
        for (std::size_t j = 0; j < d; ++j) {
          const double m_hat = s1[j] / c1;
          const double v_hat = s2[j] / c2;
          o[j] = h[j] - gamma * m_hat / (std::sqrt(v_hat) + algo.eps);
        }
        break;
      }
    }
  }
  if (algo.uses_prox() && !algo.prox.is_identity())
    out = algo.prox.apply(out, gamma);
}

}  // namespace

StepResult step(const DescentAlgorithm& algo, const EnergyFamily& e,
                const HeteroGraph& g, const Matrix& H, const HiddenState& S,
                const Matrix& X, Matrix& H_out, HiddenState& S_out, Exec exec,
                double gamma_scale) {
  validate_energy_inputs(e, g, H, X);
  const std::size_t arity = algo.state_arity();
  if ((arity >= 1 && !S.s1.same_shape(H)) ||
      (arity >= 2 && !S.s2.same_shape(H)))
    throw std::invalid_argument("step: hidden state arity mismatch");
  if (!(gamma_scale > 0.0))
    throw std::invalid_argument("step: gamma_scale must be > 0");

  StepResult res;
  auto reject = [&](StepPhase phase) {
    res.accepted = false;
    res.bad_phase = phase;
    H_out = H;
    S_out = S;
    return res;
  };

  Matrix A(g.n, e.d);
  bool msg_bad = false, agg_bad = false;
  aggregate(e, g, H, exec, A, msg_bad, agg_bad);
  if (msg_bad) return reject(StepPhase::Message);
  if (agg_bad) return reject(StepPhase::Aggregate);

  Matrix G = A;
  if (e.has_node_term()) {
    Matrix K(g.n, e.d);
    node_gradients(e, g, H, X, exec, K);
    for (std::size_t i = 0; i < G.data.size(); ++i) G.data[i] += K.data[i];
  }
  if (!all_finite(G)) return reject(StepPhase::Update);

  HiddenState S_next = make_hidden_state(algo, g.n, e.d);
  next_hidden_state(algo, G, S, S_next);
  if (!all_finite(S_next.s1) || !all_finite(S_next.s2))
    return reject(StepPhase::Update);

  Matrix cand(g.n, e.d);
  if (!algo.backtracking) {
    const double gamma = algo.gamma * gamma_scale;
    candidate_update(algo, g, H, G, S_next, gamma, exec, cand);
    if (!all_finite(cand)) return reject(StepPhase::Update);
    H_out = std::move(cand);
    S_out = std::move(S_next);
    res.gamma_used = gamma;
    return res;
  }

  const double before = eval_energy(e, g, H, X);
  double scale = gamma_scale;
  for (std::size_t t = 0; t <= kMaxHalvings; ++t, scale *= 0.5) {
    const double gamma = algo.gamma * scale;
    bool ok = true;
    try {
      candidate_update(algo, g, H, G, S_next, gamma, exec, cand);
    } catch (const std::invalid_argument&) {
      ok = false;  // infeasible candidate (e.g. zero row under unit norm)
    }
    if (ok && all_finite(cand) && eval_energy(e, g, cand, X) <= before) {
      H_out = std::move(cand);
      S_out = std::move(S_next);
      res.halvings = t;
      res.gamma_used = gamma;
      return res;
    }
  }
  res.accepted = false;
  H_out = H;
  S_out = S;
  res.halvings = kMaxHalvings;
  return res;
}

UnrollResult unroll(const DescentAlgorithm& algo, const EnergyFamily& e,
                    const HeteroGraph& g, Matrix H0, const Matrix& X,
                    std::size_t L, Exec exec, bool record_states) {
  if (algo.uses_prox() && !algo.prox.is_identity())
    H0 = algo.prox.apply(H0, algo.gamma);  // feasible start

  UnrollResult r;
  r.H = std::move(H0);
  r.S = make_hidden_state(algo, g.n, e.d);
  r.trajectory.points.reserve(L + 1);
  r.trajectory.points.emplace_back(0, eval_energy(e, g, r.H, X));
  if (record_states) r.trajectory.states.push_back(r.H);

  Matrix H_next;
  HiddenState S_next;
  for (std::size_t l = 1; l <= L; ++l) {
    const StepResult sr = step(algo, e, g, r.H, r.S, X, H_next, S_next, exec);
    if (sr.accepted) {
      r.H = std::move(H_next);
      r.S = std::move(S_next);
    } else {
      r.trajectory.rejected_steps += 1;
    }
    r.trajectory.points.emplace_back(l, eval_energy(e, g, r.H, X));
    if (record_states) r.trajectory.states.push_back(r.H);
  }
  return r;
}

std::string trajectory_csv(const Trajectory& t) {
  std::ostringstream out;
  out << "step,energy\n";
  for (const auto& [idx, val] : t.points)
    out << idx << "," << format_real(val) << "\n";
  return out.str();
}

}  // namespace ugnn
