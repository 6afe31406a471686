#include "ugnn/conformance.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

#include "ugnn/io.hpp"

namespace ugnn {

bool ConformanceReport::passed() const {
  for (const auto& c : checks)
    if (!c.passed) return false;
  return true;
}

std::string report_text(const ConformanceReport& r) {
  std::ostringstream out;
  for (const auto& c : r.checks)
    out << r.pairing << "," << c.check << "," << format_real(c.max_error)
        << "," << format_real(c.tolerance) << ","
        << (c.passed ? "pass" : "fail") << "\n";
  for (const auto& line : r.replay) out << "# replay " << line << "\n";
  return out.str();
}

std::string report_text(const std::vector<ConformanceReport>& rs) {
  std::string out;
  for (const auto& r : rs) out += report_text(r);
  return out;
}

namespace {

HeteroGraph random_graph(Rng& rng, std::size_t n, std::size_t m) {
  const double density = rng.uniform(0.08, 0.3);
  std::vector<Triplet> ts;
  for (NodeId u = 0; u < n; ++u)
    for (NodeId v = u + 1; v < n; ++v) {
      if (rng.uniform() >= density) continue;
      Triplet t;
      t.rel = static_cast<RelationId>(rng.uniform_int(0, m - 1));
      if (rng.uniform() < 0.5) {
        t.src = u;
        t.dst = v;
      } else {
        t.src = v;
        t.dst = u;
      }
      ts.push_back(t);
    }
  if (ts.empty())
    ts.push_back({0, static_cast<RelationId>(rng.uniform_int(0, m - 1)), 1});
  return build_graph(ts, n, m, true);
}

InputModel random_input_model(Rng& rng, std::size_t d) {
  if (rng.uniform() < 0.5) return InputModel::identity_map();
  const std::size_t dx = 1 + rng.uniform_int(0, 3);
  return InputModel::affine(rng.normal_matrix(dx, d, 0.5),
                            rng.normal_matrix(1, d, 0.2));
}

MaskedLabels random_labels(Rng& rng, std::size_t n, std::size_t classes) {
  LabelSet ls;
  ls.class_of.assign(n, -1);
  ls.observed.assign(n, 0);
  for (NodeId v = 0; v < n; ++v)
    if (rng.uniform() < 0.5) {
      ls.class_of[v] = rng.uniform_int(0, classes - 1);
      ls.observed[v] = 1;
    }
  if (ls.observed_count() == 0) {
    ls.class_of[0] = 0;
    ls.observed[0] = 1;
  }
  return masked_labels(ls, classes);
}

}  // namespace

std::vector<std::string> built_in_families() {
  return {"quadratic", "heterophily", "huber", "logcosh", "kge",
          "lp",        "grmlp",       "nbf",   "unitnorm"};
}

Instance make_instance(const std::string& family, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 11));
  Instance inst;
  const std::size_t n = 4 + rng.uniform_int(0, 26);
  const double lambda = rng.uniform(0.2, 2.0);

  if (family == "quadratic" || family == "huber" || family == "logcosh" ||
      family == "unitnorm") {
    const std::size_t d = 1 + rng.uniform_int(0, 5);
    InputModel pi = family == "unitnorm" ? InputModel::identity_map()
                                         : random_input_model(rng, d);
    if (family == "quadratic" || family == "unitnorm")
      inst.e = make_quadratic(d, lambda, std::move(pi));
    else if (family == "huber")
      inst.e = make_huber_fidelity(d, lambda, std::move(pi));
    else
      inst.e = make_logcosh_fidelity(d, lambda, std::move(pi));
    if (family == "unitnorm") inst.e.nonsmooth = ProxKind::UnitNorm;
    inst.g = random_graph(rng, n, 1);
    inst.X = rng.normal_matrix(n, inst.e.feature_dim());
    inst.H = rng.normal_matrix(n, d);
    return inst;
  }
  if (family == "heterophily") {
    const std::size_t d = 1 + rng.uniform_int(0, 5);
    const std::size_t m = 1 + rng.uniform_int(0, 2);
    const FidelityKind fid =
        rng.uniform() < 0.5 ? FidelityKind::Quadratic : FidelityKind::HuberLoss;
    Matrix C = rng.normal_matrix(d, d, 0.6);
    inst.e = make_heterophily(d, lambda, std::move(C),
                              random_input_model(rng, d), fid, m);
    inst.g = random_graph(rng, n, m);
    inst.X = rng.normal_matrix(n, inst.e.feature_dim());
    inst.H = rng.normal_matrix(n, d);
    return inst;
  }
  if (family == "kge") {
    const std::size_t d = 1 + rng.uniform_int(0, 5);
    const std::size_t kge_m = 1 + rng.uniform_int(0, 2);
    const ScoreKind score =
        rng.uniform() < 0.5 ? ScoreKind::TransE : ScoreKind::DistMult;
    inst.e = make_kge_bce(d, score, kge_m, rng.normal_matrix(kge_m, d, 0.7));
    inst.g = random_graph(rng, n, 2 * kge_m);
    inst.X = Matrix(n, 0);
    inst.H = rng.normal_matrix(n, d);
    return inst;
  }
  if (family == "lp" || family == "grmlp") {
    const std::size_t c = 2 + rng.uniform_int(0, 2);
    inst.e = family == "lp" ? make_lp_energy(c, lambda)
                            : make_grmlp_energy(c, lambda);
    inst.g = random_graph(rng, n, 1);
    inst.labels = random_labels(rng, n, c);
    inst.X = inst.labels.Y;
    inst.H = rng.normal_matrix(n, c);
    return inst;
  }
  if (family == "nbf") {
    const std::size_t d = 1 + rng.uniform_int(0, 3);
    const std::size_t m = 1 + rng.uniform_int(0, 1);
    Matrix A = rng.normal_matrix(d, d, 0.5);
    Matrix Phi(d, d);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j)
        Phi.at(i, j) = 0.5 * (A.at(i, j) + A.at(j, i));
    Matrix B = rng.normal_matrix(d, d, 0.5);
    Matrix Psi = matmul(B, transpose(B));
    const double ridge = 0.2 + rng.uniform();
    for (std::size_t i = 0; i < d; ++i) Psi.at(i, i) += ridge;
    std::vector<Matrix> rel_W;
    for (std::size_t r = 0; r < 2 * m; ++r)
      rel_W.push_back(rng.normal_matrix(d, d, 0.5));
    inst.e = make_nbf_bilinear(d, m, std::move(Phi), std::move(Psi),
                               std::move(rel_W), rng.normal_matrix(2 * m, d, 0.3),
                               rng.normal_matrix(1, d));
    inst.g = random_graph(rng, n, m);
    inst.X = rng.normal_matrix(n, d, 0.8);
    inst.H = rng.normal_matrix(n, d);
    return inst;
  }
  throw std::invalid_argument("make_instance: unknown family " + family);
}

DescentAlgorithm pairing_algorithm(const Instance& inst, AlgoKind kind,
                                   std::uint64_t seed) {
  Rng rng(mix_seed(seed, 77));
  std::size_t dmax = 0;
  for (NodeId v = 0; v < inst.g.n; ++v)
    dmax = std::max(dmax, inst.g.in_degree(v));
  const double gamma =
      rng.uniform(0.05, 0.5) / (1.0 + static_cast<double>(dmax));

  ProxOperator prox;
  switch (inst.e.nonsmooth) {
    case ProxKind::Identity:
    case ProxKind::RangeProject:  // column-space projection is not row-local;
                                  // exercised in the lp-grmlp module instead
      prox = ProxOperator::identity();
      break;
    case ProxKind::NonNeg:
      prox = ProxOperator::nonneg();
      break;
    case ProxKind::ClampLabels:
      prox = ProxOperator::clamp_labels(inst.labels.Y, inst.labels.mask);
      break;
    case ProxKind::UnitNorm:
      prox = ProxOperator::unit_norm();
      break;
  }

  switch (kind) {
    case AlgoKind::Gd: return make_gd(gamma);
    case AlgoKind::ProxGd: return make_prox_gd(gamma, std::move(prox));
    case AlgoKind::DegreeGd: return make_degree_gd(gamma);
    case AlgoKind::Momentum:
      return make_momentum(gamma, 0.9, std::move(prox));
    case AlgoKind::AdaGrad: return make_adagrad(gamma);
    case AlgoKind::RmsProp: return make_rmsprop(gamma, 0.9);
    case AlgoKind::Adam: return make_adam(gamma);
  }
  throw std::logic_error("pairing_algorithm: unknown kind");
}

void dense_reference_step(const DescentAlgorithm& algo, const EnergyFamily& e,
                          const HeteroGraph& g, const Matrix& H,
                          const HiddenState& S, const Matrix& X, Matrix& H_out,
                          HiddenState& S_out, FaultInjection fault) {
  Matrix G = full_gradient_dense(e, g, H, X);
  if (fault == FaultInjection::SignFlipMessage) {
    // flip the aggregate part only: G becomes kappa' - a
    Matrix K(g.n, e.d);
    if (e.has_node_term())
      for (NodeId v = 0; v < g.n; ++v)
        e.grad_node(H.row(v), X.row(v), K.row(v));
    for (std::size_t i = 0; i < G.data.size(); ++i)
      G.data[i] = 2.0 * K.data[i] - G.data[i];
  }

  S_out = make_hidden_state(algo, g.n, e.d);
  S_out.steps = S.steps + 1;
  const std::size_t sz = G.data.size();
  H_out = Matrix(H.rows, H.cols);

  switch (algo.kind) {
    case AlgoKind::Gd:
    case AlgoKind::ProxGd:
      for (std::size_t i = 0; i < sz; ++i)
        H_out.data[i] = H.data[i] - algo.gamma * G.data[i];
      break;
    case AlgoKind::DegreeGd:
      for (NodeId v = 0; v < g.n; ++v) {
        const std::size_t deg = g.in_degree(v);
        const double f = algo.gamma / static_cast<double>(deg > 0 ? deg : 1);
        for (std::size_t j = 0; j < e.d; ++j)
          H_out.at(v, j) = H.at(v, j) - f * G.at(v, j);
      }
      break;
    case AlgoKind::Momentum:
      for (std::size_t i = 0; i < sz; ++i) {
        S_out.s1.data[i] =
            algo.beta * S.s1.data[i] + (1.0 - algo.beta) * G.data[i];
        H_out.data[i] = H.data[i] - algo.gamma * S_out.s1.data[i];
      }
      break;
    case AlgoKind::AdaGrad:
      for (std::size_t i = 0; i < sz; ++i) {
        S_out.s1.data[i] = S.s1.data[i] + G.data[i] * G.data[i];
        H_out.data[i] = H.data[i] - algo.gamma * G.data[i] /
                                        std::sqrt(S_out.s1.data[i] + algo.eps);
      }
      break;
    case AlgoKind::RmsProp:
      for (std::size_t i = 0; i < sz; ++i) {
        S_out.s1.data[i] = algo.beta * S.s1.data[i] +
                           (1.0 - algo.beta) * G.data[i] * G.data[i];
        H_out.data[i] = H.data[i] - algo.gamma * G.data[i] /
                                        std::sqrt(S_out.s1.data[i] + algo.eps);
      }
      break;
    case AlgoKind::Adam: {
      const double l = static_cast<double>(S_out.steps);
      const double c1 = 1.0 - std::pow(algo.beta1, l);
      const double c2 = 1.0 - std::pow(algo.beta2, l);
      for (std::size_t i = 0; i < sz; ++i) {
        S_out.s1.data[i] =
            algo.beta1 * S.s1.data[i] + (1.0 - algo.beta1) * G.data[i];
        S_out.s2.data[i] = algo.beta2 * S.s2.data[i] +
                           (1.0 - algo.beta2) * G.data[i] * G.data[i];
        H_out.data[i] =
            H.data[i] - algo.gamma * (S_out.s1.data[i] / c1) /
                            (std::sqrt(S_out.s2.data[i] / c2) + algo.eps);
      }
      break;
    }
  }
  if (algo.uses_prox() && !algo.prox.is_identity())
    H_out = algo.prox.apply(H_out, algo.gamma);
}

namespace {

bool rows_bit_equal(const Matrix& a, const Matrix& b, std::size_t v) {
  return std::memcmp(a.row(v), b.row(v), a.cols * sizeof(double)) == 0;
}

Matrix row_permute(const Matrix& M, const Permutation& p) {
  Matrix out(M.rows, M.cols);
  for (std::size_t v = 0; v < M.rows; ++v)
    std::memcpy(out.row(p.map[v]), M.row(v), M.cols * sizeof(double));
  return out;
}

double hidden_diff(const DescentAlgorithm& algo, const HiddenState& a,
                   const HiddenState& b) {
  double err = 0.0;
  if (algo.state_arity() >= 1) err = std::max(err, max_abs_diff(a.s1, b.s1));
  if (algo.state_arity() >= 2) err = std::max(err, max_abs_diff(a.s2, b.s2));
  return err;
}

double oracle_error(const Instance& inst, DescentAlgorithm algo,
                    FaultInjection fault) {
  algo.backtracking = false;
  Matrix H = inst.H;
  HiddenState S = make_hidden_state(algo, inst.g.n, inst.e.d);
  double err = 0.0;
  for (int l = 0; l < 2; ++l) {
    Matrix Hd, Hs;
    HiddenState Sd, Ss;
    dense_reference_step(algo, inst.e, inst.g, H, S, inst.X, Hd, Sd, fault);
    step(algo, inst.e, inst.g, H, S, inst.X, Hs, Ss, Exec::Parallel);
    err = std::max(err, max_abs_diff(Hd, Hs));
    err = std::max(err, hidden_diff(algo, Sd, Ss));
    H = std::move(Hs);
    S = std::move(Ss);
  }
  return err;
}

double locality_error(const Instance& inst, DescentAlgorithm algo, Rng& rng,
                      bool& ok) {
  algo.backtracking = false;
  const HeteroGraph& g = inst.g;
  // burn one step so hidden states are populated
  Matrix H1;
  HiddenState S1;
  {
    HiddenState S0 = make_hidden_state(algo, g.n, inst.e.d);
    step(algo, inst.e, g, inst.H, S0, inst.X, H1, S1, Exec::Parallel);
  }
  const NodeId w = rng.uniform_int(0, g.n - 1);
  Matrix Hp = H1;
  for (std::size_t j = 0; j < Hp.cols; ++j) Hp.at(w, j) += rng.normal();

  Matrix Ha, Hb;
  HiddenState Sa, Sb;
  step(algo, inst.e, g, H1, S1, inst.X, Ha, Sa, Exec::Parallel);
  step(algo, inst.e, g, Hp, S1, inst.X, Hb, Sb, Exec::Parallel);

  ok = true;
  double err = 0.0;
  for (NodeId u = 0; u < g.n; ++u) {
    if (u == w) continue;
    bool adjacent = false;
    for (const InEdge* it = g.nbr_begin(u); it != g.nbr_end(u); ++it)
      if (it->src == w) adjacent = true;
    if (adjacent) continue;
    bool same = rows_bit_equal(Ha, Hb, u);
    if (algo.state_arity() >= 1) same = same && rows_bit_equal(Sa.s1, Sb.s1, u);
    if (algo.state_arity() >= 2) same = same && rows_bit_equal(Sa.s2, Sb.s2, u);
    if (!same) {
      ok = false;
      for (std::size_t j = 0; j < Ha.cols; ++j)
        err = std::max(err, std::fabs(Ha.at(u, j) - Hb.at(u, j)));
    }
  }
  return err;
}

DescentAlgorithm permuted_algorithm(const DescentAlgorithm& algo,
                                    const Permutation& p) {
  DescentAlgorithm out = algo;
  if (out.prox.kind == ProxKind::ClampLabels) {
    std::vector<char> mask(out.prox.mask.size());
    for (std::size_t v = 0; v < mask.size(); ++v)
      mask[p.map[v]] = out.prox.mask[v];
    out.prox = ProxOperator::clamp_labels(row_permute(out.prox.Ybar, p),
                                          std::move(mask));
  }
  return out;
}

double permutation_error(const Instance& inst, DescentAlgorithm algo,
                         Rng& rng) {
  algo.backtracking = false;
  const std::size_t n = inst.g.n;
  Permutation p;
  p.map.resize(n);
  for (std::size_t v = 0; v < n; ++v) p.map[v] = v;
  for (std::size_t v = n; v > 1; --v)
    std::swap(p.map[v - 1], p.map[rng.uniform_int(0, v - 1)]);

  auto [g2, H2] = permute(inst.g, inst.H, p);
  Matrix X2 = row_permute(inst.X, p);
  DescentAlgorithm algo2 = permuted_algorithm(algo, p);

  Matrix H = inst.H;
  HiddenState S = make_hidden_state(algo, n, inst.e.d);
  HiddenState S2 = make_hidden_state(algo, n, inst.e.d);
  double err = 0.0;
  for (int l = 0; l < 2; ++l) {
    Matrix Ha, Hb;
    HiddenState Sa, Sb;
    step(algo, inst.e, inst.g, H, S, inst.X, Ha, Sa, Exec::Parallel);
    step(algo2, inst.e, g2, H2, S2, X2, Hb, Sb, Exec::Parallel);
    err = std::max(err, max_abs_diff(row_permute(Ha, p), Hb));
    if (algo.state_arity() >= 1)
      err = std::max(err, max_abs_diff(row_permute(Sa.s1, p), Sb.s1));
    if (algo.state_arity() >= 2)
      err = std::max(err, max_abs_diff(row_permute(Sa.s2, p), Sb.s2));
    H = std::move(Ha);
    S = std::move(Sa);
    H2 = std::move(Hb);
    S2 = std::move(Sb);
  }
  return err;
}

double monotone_error(const Instance& inst, DescentAlgorithm algo) {
  algo.backtracking = true;
  const UnrollResult r =
      unroll(algo, inst.e, inst.g, inst.H, inst.X, 200, Exec::Parallel);
  double rise = 0.0;
  for (std::size_t l = 1; l < r.trajectory.points.size(); ++l)
    rise = std::max(rise, r.trajectory.points[l].second -
                              r.trajectory.points[l - 1].second);
  return std::max(rise, 0.0);
}

double fd_rel_err(double analytic, double numeric) {
  const double denom =
      std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
  return std::fabs(analytic - numeric) / denom;
}

bool near_huber_knee(const double* u, std::size_t d) {
  for (std::size_t j = 0; j < d; ++j)
    if (std::fabs(std::fabs(u[j]) - 1.0) < 1e-3) return true;
  return false;
}

// central finite differences on grad_pair_dst (both endpoints) and grad_node
double finite_diff_error(const Instance& inst, Rng& rng) {
  const EnergyFamily& e = inst.e;
  const std::size_t d = e.d;
  const double h = 1e-6;
  double err = 0.0;
  std::vector<double> hu(d), hv(d), grad(d), work(d);

  for (int probe = 0; probe < 4; ++probe) {
    const RelationId rel = rng.uniform_int(0, e.m - 1);
    for (int attempt = 0; attempt < 200; ++attempt) {
      for (std::size_t j = 0; j < d; ++j) hu[j] = rng.uniform(-2.0, 2.0);
      for (std::size_t j = 0; j < d; ++j) hv[j] = rng.uniform(-2.0, 2.0);
      if (e.kind == EnergyKind::Kge && e.score == ScoreKind::TransE) {
        const double* er = e.E.row(rel % e.kge_m);
        double q2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double t = hu[j] + er[j] - hv[j];
          q2 += t * t;
        }
        if (q2 < 0.01) continue;  // keep clear of the norm kink
      }
      break;
    }
    // partial w.r.t. the destination
    e.grad_pair_dst(hu.data(), hv.data(), rel, grad.data());
    for (std::size_t j = 0; j < d; ++j) {
      work = hv;
      work[j] = hv[j] + h;
      const double fp = e.pair_value(hu.data(), work.data(), rel);
      work[j] = hv[j] - h;
      const double fm = e.pair_value(hu.data(), work.data(), rel);
      err = std::max(err, fd_rel_err(grad[j], (fp - fm) / (2.0 * h)));
    }
    // partial w.r.t. the source, through the inverse-relation dispatch
    e.grad_pair_dst(hv.data(), hu.data(), rel + e.m, grad.data());
    for (std::size_t j = 0; j < d; ++j) {
      work = hu;
      work[j] = hu[j] + h;
      const double fp = e.pair_value(work.data(), hv.data(), rel);
      work[j] = hu[j] - h;
      const double fm = e.pair_value(work.data(), hv.data(), rel);
      err = std::max(err, fd_rel_err(grad[j], (fp - fm) / (2.0 * h)));
    }
  }

  if (e.has_node_term()) {
    const std::size_t dx = e.feature_dim();
    std::vector<double> x(dx), hb(d), u(d), px(d);
    for (int probe = 0; probe < 4; ++probe) {
      for (int attempt = 0; attempt < 200; ++attempt) {
        for (std::size_t j = 0; j < dx; ++j) x[j] = rng.uniform(-2.0, 2.0);
        for (std::size_t j = 0; j < d; ++j) hb[j] = rng.uniform(-2.0, 2.0);
        const bool huber_like = e.fidelity == FidelityKind::HuberLoss;
        if (!huber_like) break;
        if (e.pi.is_identity) {
          for (std::size_t j = 0; j < d; ++j) u[j] = hb[j] - x[j];
        } else {
          e.pi.apply_row(x.data(), px.data());
          for (std::size_t j = 0; j < d; ++j) u[j] = hb[j] - px[j];
        }
        if (!near_huber_knee(u.data(), d)) break;
      }
      e.grad_node(hb.data(), x.data(), grad.data());
      for (std::size_t j = 0; j < d; ++j) {
        work = hb;
        work[j] = hb[j] + h;
        const double fp = e.node_value(work.data(), x.data());
        work[j] = hb[j] - h;
        const double fm = e.node_value(work.data(), x.data());
        err = std::max(err, fd_rel_err(grad[j], (fp - fm) / (2.0 * h)));
      }
    }
  }
  return err;
}

}  // namespace

ConformanceReport check_pairing(const std::string& family, AlgoKind algo_kind,
                                std::size_t trials, std::uint64_t seed,
                                FaultInjection fault) {
  if (trials < 1) throw std::invalid_argument("check_pairing: trials >= 1");
  ConformanceReport rep;
  rep.pairing = family + "/" + algo_name(algo_kind);

  CheckResult oracle{"oracle", 0.0, 1e-12, true};
  CheckResult locality{"locality", 0.0, 0.0, true};
  CheckResult permutation{"permutation", 0.0, 1e-12, true};
  CheckResult monotone{"monotone", 0.0, 0.0, true};
  CheckResult fd{"finite_diff", 0.0, 1e-6, true};

  auto note = [&](const char* check, std::size_t trial) {
    std::ostringstream os;
    os << "family=" << family << " algo=" << algo_name(algo_kind)
       << " seed=" << seed << " trial=" << trial << " check=" << check;
    rep.replay.push_back(os.str());
  };

  for (std::size_t t = 0; t < trials; ++t) {
    const Instance inst = make_instance(family, mix_seed(seed, t, 1));
    const DescentAlgorithm algo =
        pairing_algorithm(inst, algo_kind, mix_seed(seed, t, 2));
    Rng rng(mix_seed(seed, t, 3));

    const double e1 = oracle_error(inst, algo, fault);
    oracle.max_error = std::max(oracle.max_error, e1);
    if (e1 > oracle.tolerance) {
      oracle.passed = false;
      note("oracle", t);
    }

    bool loc_ok = true;
    const double e2 = locality_error(inst, algo, rng, loc_ok);
    locality.max_error = std::max(locality.max_error, e2);
    if (!loc_ok) {
      locality.passed = false;
      note("locality", t);
    }

    const double e3 = permutation_error(inst, algo, rng);
    permutation.max_error = std::max(permutation.max_error, e3);
    if (e3 > permutation.tolerance) {
      permutation.passed = false;
      note("permutation", t);
    }

    const double e4 = monotone_error(inst, algo);
    monotone.max_error = std::max(monotone.max_error, e4);
    if (e4 > monotone.tolerance) {
      monotone.passed = false;
      note("monotone", t);
    }

    const double e5 = finite_diff_error(inst, rng);
    fd.max_error = std::max(fd.max_error, e5);
    if (e5 > fd.tolerance) {
      fd.passed = false;
      note("finite_diff", t);
    }
  }

  rep.checks = {oracle, locality, permutation, monotone, fd};
  return rep;
}

std::vector<ConformanceReport> run_all_pairings(std::size_t trials,
                                                std::uint64_t seed) {
  const AlgoKind all[] = {AlgoKind::Gd,       AlgoKind::ProxGd,
                          AlgoKind::DegreeGd, AlgoKind::Momentum,
                          AlgoKind::AdaGrad,  AlgoKind::RmsProp,
                          AlgoKind::Adam};
  std::vector<ConformanceReport> out;
  std::size_t fidx = 0;
  for (const std::string& fam : built_in_families()) {
    std::size_t aidx = 0;
    for (AlgoKind a : all) {
      // the unit-sphere pairing only makes sense through its prox
      if (fam == "unitnorm" && a != AlgoKind::ProxGd &&
          a != AlgoKind::Momentum) {
        ++aidx;
        continue;
      }
      out.push_back(
          check_pairing(fam, a, trials, mix_seed(seed, fidx, aidx)));
      ++aidx;
    }
    ++fidx;
  }
  return out;
}

RhoDemo check_nonlinear_rho_counterexample() {
  // two disjoint edges 0->1 and 2->3 under the quadratic pair potential
  const std::vector<Triplet> edges = {{0, 0, 1}, {2, 0, 3}};
  const EnergyFamily e = make_quadratic(1, 1.0, InputModel::identity_map());

  auto pair_sum = [&](const Matrix& H) {
    double s = 0.0;
    for (const Triplet& t : edges)
      s += e.pair_value(H.row(t.src), H.row(t.dst), t.rel);
    return s;
  };
  // dense gradient of rho(sum of f): rho'(sum) * sum of pair gradients
  auto dense_grad = [&](const Matrix& H, int rho) {
    const double s = pair_sum(H);
    double rp = 1.0;                 // identity
    if (rho == 2) rp = 2.0 * s;      // squared
    if (rho == 1) rp = 3.0;          // linear, slope 3
    Matrix G(4, 1);
    double buf;
    for (const Triplet& t : edges) {
      e.pair_grad_v(H.row(t.src), H.row(t.dst), t.rel, &buf);
      G.at(t.dst, 0) += rp * buf;
      e.pair_grad_u(H.row(t.src), H.row(t.dst), t.rel, &buf);
      G.at(t.src, 0) += rp * buf;
    }
    return G;
  };

  Matrix H(4, 1);
  H.at(0, 0) = 1.0;
  H.at(1, 0) = 3.0;
  H.at(2, 0) = 0.0;
  H.at(3, 0) = 5.0;
  Matrix Hfar = H;  // perturb only the disconnected component {2,3}
  Hfar.at(2, 0) += 0.7;
  Hfar.at(3, 0) -= 0.3;

  auto near_change = [&](int rho) {
    const Matrix a = dense_grad(H, rho);
    const Matrix b = dense_grad(Hfar, rho);
    return std::max(std::fabs(a.at(0, 0) - b.at(0, 0)),
                    std::fabs(a.at(1, 0) - b.at(1, 0)));
  };

  RhoDemo demo;
  demo.far_effect_squared = near_change(2);
  demo.far_effect_linear = near_change(1);
  demo.far_effect_identity = near_change(0);
  demo.squared_breaks_locality = demo.far_effect_squared > 1e-3;
  demo.linear_keeps_locality =
      demo.far_effect_linear <= 1e-12 && demo.far_effect_identity <= 1e-12;
  return demo;
}

}  // namespace ugnn
