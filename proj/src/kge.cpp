#include "ugnn/kge.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "ugnn/descent.hpp"
#include "ugnn/tape.hpp"

namespace ugnn {

double kge_score(ScoreKind score, const double* hu, const double* er,
                 const double* hv, std::size_t d) {
  if (score == ScoreKind::DistMult) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += hu[j] * er[j] * hv[j];
    return s;
  }
  double q2 = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    const double t = hu[j] + er[j] - hv[j];
    q2 += t * t;
  }
  return -std::sqrt(q2);
}

namespace {

std::uint64_t triplet_key(const Triplet& t, std::size_t n, std::size_t m) {
  return (static_cast<std::uint64_t>(t.src) * m + t.rel) * n + t.dst;
}

}  // namespace

NegativeGraph build_negative_graph(const HeteroGraph& g, std::size_t k,
                                   std::uint64_t seed,
                                   const std::vector<Triplet>* known_edges) {
  if (k < 1)
    throw std::invalid_argument("negative sampling: k must be >= 1");
  const std::size_t n = g.n;
  const std::size_t kge_m = g.m;

  NegativeGraph ng;
  ng.kge_m = kge_m;
  ng.positives = g.original_triplets();

  std::unordered_set<std::uint64_t> taken;
  for (const Triplet& t : ng.positives) taken.insert(triplet_key(t, n, kge_m));
  if (known_edges)
    for (const Triplet& t : *known_edges)
      taken.insert(triplet_key(t, n, kge_m));

  Rng rng(seed);
  ng.negatives.reserve(k * ng.positives.size());
  for (const Triplet& pos : ng.positives) {
    for (std::size_t j = 0; j < k; ++j) {
      bool found = false;
      for (std::size_t attempt = 0; attempt < 1000; ++attempt) {
        Triplet cand = pos;
        const bool corrupt_head = rng.uniform() < 0.5;
        const NodeId pick = static_cast<NodeId>(
            rng.uniform_int(0, static_cast<std::int64_t>(n) - 1));
        if (corrupt_head)
          cand.src = pick;
        else
          cand.dst = pick;
        if (cand.src == cand.dst) continue;
        const std::uint64_t key = triplet_key(cand, n, kge_m);
        if (taken.count(key)) continue;
        taken.insert(key);
        cand.rel += kge_m;  // negative polarity lives in the relation id
        ng.negatives.push_back(cand);
        found = true;
        break;
      }
      if (!found)
        throw std::runtime_error(
            "negative sampling: retry budget exhausted (graph too dense)");
    }
  }

  std::vector<Triplet> all = ng.positives;
  all.insert(all.end(), ng.negatives.begin(), ng.negatives.end());
  ng.graph = build_graph(all, n, 2 * kge_m, true);
  return ng;
}

namespace {

struct KgeForward {
  UnrollRecording rec;
  int score_id = -1;
  Matrix H;
  double loss = 0.0;
};

KgeForward kge_forward(const EnergyFamily& e, const NegativeGraph& ng,
                       const Matrix& H0, const Matrix& X, std::size_t layers,
                       double inner_gamma) {
  KgeForward f;
  const DescentAlgorithm algo = make_gd(inner_gamma);
  f.rec = record_unroll(e, algo, ng.graph, X, layers, &H0);
  const int e_id = f.rec.tape.param_id("E");
  f.score_id = record_kge_scores(f.rec.tape, e, ng.graph, f.rec.h_final, e_id);
  f.H = f.rec.tape.value(f.rec.h_final);
  f.loss = eval_energy(e, ng.graph, f.H, X);
  return f;
}

/// d(loss)/d(score) per non-inverse stored edge, in the score column's order.
Matrix score_seed(const EnergyFamily& e, const NegativeGraph& ng,
                  const Matrix& scores) {
  Matrix seed(scores.rows, 1);
  std::size_t pos = 0;
  const HeteroGraph& g = ng.graph;
  for (NodeId v = 0; v < g.n; ++v)
    for (std::size_t k = g.offsets[v]; k < g.offsets[v + 1]; ++k) {
      const RelationId rel = g.edges[k].rel;
      if (rel >= e.m) continue;
      const double pol = rel < e.kge_m ? 1.0 : 0.0;
      seed.at(pos, 0) = sigmoid(scores.at(pos, 0)) - pol;
      ++pos;
    }
  if (pos != scores.rows)
    throw std::logic_error("kge: score column arity mismatch");
  return seed;
}

}  // namespace

KgeTrainResult train_kge(const NegativeGraph& ng, ScoreKind score,
                         std::size_t layers, const KgeTrainConfig& cfg) {
  if (!(cfg.lr > 0.0) || !(cfg.inner_gamma > 0.0))
    throw std::invalid_argument("kge: step sizes must be > 0");
  const std::size_t n = ng.graph.n;
  const std::size_t d = cfg.d;

  Rng rng(cfg.seed);
  Matrix E0 = rng.normal_matrix(ng.kge_m, d, 0.5);
  // an all-zero start is a stationary point of the DistMult energy, so the
  // unroll begins from a frozen random draw instead
  Matrix H0 = rng.normal_matrix(n, d, 0.5);
  Matrix X(n, 0);

  KgeTrainResult out;
  out.H0 = H0;
  out.energy = make_kge_bce(d, score, ng.kge_m, std::move(E0));
  EnergyFamily& e = out.energy;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    KgeForward f = kge_forward(e, ng, H0, X, layers, cfg.inner_gamma);
    out.loss_history.push_back(f.loss);
    out.H = f.H;
    if (!(f.loss < kKgeDivergenceLoss)) {
      out.diverged = true;
      return out;
    }

    std::map<int, Matrix> seeds;
    seeds[f.score_id] = score_seed(e, ng, f.rec.tape.value(f.score_id));
    const auto grads = f.rec.tape.backward(seeds);
    const Matrix& gE = grads.at("E");
    const Matrix E_before = e.E;

    auto try_step = [&](double scale) {
      Matrix En = E_before;
      for (std::size_t i = 0; i < En.data.size(); ++i)
        En.data[i] -= scale * gE.data[i];
      e.set_param("E", En);
    };

    if (!cfg.outer_backtrack) {
      try_step(cfg.lr);
    } else {
      bool accepted = false;
      double scale = cfg.lr;
      for (int h = 0; h <= 40 && !accepted; ++h, scale *= 0.5) {
        try_step(scale);
        const double trial =
            kge_forward(e, ng, H0, X, layers, cfg.inner_gamma).loss;
        if (std::isfinite(trial) && trial < f.loss)
          accepted = true;
        else
          e.set_param("E", E_before);
      }
    }
  }

  KgeForward f = kge_forward(e, ng, H0, X, layers, cfg.inner_gamma);
  out.loss_history.push_back(f.loss);
  out.H = f.H;
  if (!(f.loss < kKgeDivergenceLoss)) out.diverged = true;
  return out;
}

InductiveResult inductive_infer(const EnergyFamily& energy,
                                const Matrix& H_base,
                                const std::vector<Triplet>& base_positives,
                                std::size_t n_total,
                                const std::vector<Triplet>& new_triplets,
                                const InductiveConfig& cfg) {
  if (energy.kind != EnergyKind::Kge)
    throw std::invalid_argument("inductive: needs the link energy");
  const std::size_t n_base = H_base.rows;
  const std::size_t d = energy.d;
  if (n_total < n_base)
    throw std::invalid_argument("inductive: n_total below the base count");
  if (new_triplets.empty())
    throw std::invalid_argument("inductive: no attachment triplets");
  for (const Triplet& t : new_triplets) {
    if (t.src >= n_total || t.dst >= n_total || t.rel >= energy.kge_m)
      throw std::invalid_argument("inductive: triplet out of range");
    if (t.src < n_base && t.dst < n_base)
      throw std::invalid_argument(
          "inductive: attachment triplet touches no new node");
  }

  const HeteroGraph g_pos =
      build_graph(new_triplets, n_total, energy.kge_m, false);
  const NegativeGraph ng =
      build_negative_graph(g_pos, cfg.negatives_per_edge, cfg.seed,
                           &base_positives);
  const HeteroGraph& rg = ng.graph;

  InductiveResult out;
  out.H = Matrix(n_total, d);
  for (std::size_t v = 0; v < n_base; ++v)
    for (std::size_t j = 0; j < d; ++j) out.H.at(v, j) = H_base.at(v, j);
  for (NodeId v = n_base; v < n_total; ++v)
    if (rg.in_degree(v) == 0) out.isolated.push_back(v);

  const Matrix X(n_total, 0);
  double cur = eval_energy(energy, rg, out.H, X);
  out.restricted_losses.push_back(cur);

  Matrix G(n_total, d);
  std::vector<double> msg(d);
  for (std::size_t step_i = 0; step_i < cfg.layers; ++step_i) {
    for (double& v : G.data) v = 0.0;
    for (NodeId v = n_base; v < n_total; ++v) {
      double* gv = G.row(v);
      for (const InEdge* it = rg.nbr_begin(v); it != rg.nbr_end(v); ++it) {
        energy.grad_pair_dst(out.H.row(it->src), out.H.row(v), it->rel,
                             msg.data());
        for (std::size_t j = 0; j < d; ++j) gv[j] += msg[j];
      }
    }
    double scale = cfg.gamma;
    for (int h = 0; h <= 40; ++h, scale *= 0.5) {
      Matrix Hc = out.H;
      for (NodeId v = n_base; v < n_total; ++v)
        for (std::size_t j = 0; j < d; ++j)
          Hc.at(v, j) = out.H.at(v, j) - scale * G.at(v, j);
      const double trial = eval_energy(energy, rg, Hc, X);
      if (std::isfinite(trial) && trial <= cur) {
        out.H = std::move(Hc);
        cur = trial;
        break;
      }
    }
    out.restricted_losses.push_back(cur);
  }

  // exact tail enumeration, pessimistic ranks
  out.rankings.reserve(new_triplets.size());
  std::size_t hits = 0;
  for (const Triplet& q : new_triplets) {
    const double* hu = out.H.row(q.src);
    const double* er = energy.E.row(q.rel);
    const double gold = kge_score(energy.score, hu, er, out.H.row(q.dst), d);
    std::size_t worse_or_equal = 0;
    for (NodeId c = 0; c < n_total; ++c) {
      if (c == q.dst) continue;
      if (kge_score(energy.score, hu, er, out.H.row(c), d) >= gold)
        ++worse_or_equal;
    }
    QueryRanking r;
    r.query = q;
    r.gold_rank = 1 + worse_or_equal;
    r.hit = r.gold_rank <= cfg.hits_k;
    if (r.hit) ++hits;
    out.rankings.push_back(r);
  }
  out.hits_at_k =
      static_cast<double>(hits) / static_cast<double>(new_triplets.size());
  return out;
}

Matrix nbf_unroll(const EnergyFamily& nbf, const HeteroGraph& g, NodeId source,
                  std::size_t L) {
  if (nbf.kind != EnergyKind::Nbf)
    throw std::invalid_argument("nbf_unroll: needs the bilinear family");
  if (g.m != nbf.m)
    throw std::invalid_argument("nbf_unroll: relation count mismatch");
  if (source >= g.n)
    throw std::invalid_argument("nbf_unroll: source out of range");
  ProxOperator prox;
  switch (nbf.nonsmooth) {
    case ProxKind::Identity: prox = ProxOperator::identity(); break;
    case ProxKind::NonNeg: prox = ProxOperator::nonneg(); break;
    default:
      throw std::invalid_argument(
          "nbf_unroll: eta must be the identity or nonnegativity here");
  }

  const std::size_t d = nbf.d;
  Matrix X(g.n, d);
  for (std::size_t j = 0; j < d; ++j) X.at(source, j) = nbf.q.at(0, j);

  Matrix H = X;
  Matrix A(g.n, d), Hn(g.n, d);
  std::vector<double> row(d);
  for (std::size_t l = 0; l < L; ++l) {
    for (double& v : A.data) v = 0.0;
    for (NodeId v = 0; v < g.n; ++v) {
      double* av = A.row(v);
      for (const InEdge* it = g.nbr_begin(v); it != g.nbr_end(v); ++it) {
        const double* hu = H.row(it->src);
        const double* er = nbf.nbf_E.row(it->rel);
        for (std::size_t j = 0; j < d; ++j) av[j] += hu[j] + er[j];
      }
    }
    for (NodeId v = 0; v < g.n; ++v) {
      for (std::size_t j = 0; j < d; ++j) row[j] = A.at(v, j) + X.at(v, j);
      double* hv = Hn.row(v);
      // (a + x) Phi
      for (std::size_t j = 0; j < d; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) s += row[k] * nbf.Phi.at(k, j);
        hv[j] = s;
      }
      // + h Psi
      const double* h = H.row(v);
      for (std::size_t j = 0; j < d; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) s += h[k] * nbf.Psi.at(k, j);
        hv[j] += s;
      }
    }
    H = prox.is_identity() ? Hn : prox.apply(Hn, 1.0);
  }
  return H;
}

}  // namespace ugnn
