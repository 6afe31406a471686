#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "support.hpp"
#include "ugnn/conformance.hpp"
#include "ugnn/descent.hpp"
#include "ugnn/kge.hpp"
#include "ugnn/tape.hpp"

using namespace ugnn;

namespace {

Matrix patterned(std::size_t r, std::size_t c, double base, double step) {
  Matrix m(r, c);
  for (std::size_t k = 0; k < m.data.size(); ++k)
    m.data[k] = base + step * static_cast<double>((k * 3) % 7);
  return m;
}

double wsum(const Matrix& v, const Matrix& w) {
  double s = 0.0;
  for (std::size_t k = 0; k < v.data.size(); ++k) s += v.data[k] * w.data[k];
  return s;
}

// finite-difference check of one op's backward rule: the op is rebuilt on a
// fresh tape per probe because leaf values are baked in at record time
void check_op_backward(const Matrix& P0,
                       const std::function<int(Tape&, int)>& build,
                       double tol = 1e-5) {
  Tape t;
  const int p = t.param("p", P0);
  const int out = build(t, p);
  const Matrix w = patterned(t.value(out).rows, t.value(out).cols, -0.25, 0.15);
  const auto grads = t.backward({{out, w}});
  const Matrix want = testsup::fd_grad(
      [&](const Matrix& P) {
        Tape u;
        const int q = u.param("p", P);
        return wsum(u.value(build(u, q)), w);
      },
      P0);
  CAPTURE(max_abs_diff(grads.at("p"), want));
  CHECK(max_abs_diff(grads.at("p"), want) < tol);
}

}  // namespace

TEST_CASE("replay reproduces recorded values bit-exactly") {
  const Instance inst = make_instance("heterophily", 3);
  const DescentAlgorithm algo = pairing_algorithm(inst, AlgoKind::Adam, 3);
  const UnrollRecording rec =
      record_unroll(inst.e, algo, inst.g, inst.X, 3, &inst.H);
  REQUIRE(rec.h_ids.size() == 4);
  for (const int id : rec.h_ids)
    CHECK(bit_equal(rec.tape.replay(id), rec.tape.value(id)));
  CHECK(bit_equal(rec.tape.replay(rec.h_final), rec.tape.value(rec.h_final)));
}

TEST_CASE("each primitive's backward matches finite differences") {
  const Matrix P = patterned(3, 2, -0.8, 0.3);

  SUBCASE("gather") {
    auto idx = std::make_shared<const std::vector<std::size_t>>(
        std::vector<std::size_t>{2, 0, 1, 2});
    check_op_backward(P, [&](Tape& t, int p) { return t.gather(p, idx); });
  }
  SUBCASE("scatter_sum") {
    auto off = std::make_shared<const std::vector<std::size_t>>(
        std::vector<std::size_t>{0, 2, 3});
    check_op_backward(P, [&](Tape& t, int p) {
      return t.scatter_sum(p, off, 2);
    });
  }
  SUBCASE("affine in x") {
    const Matrix W = patterned(2, 4, 0.2, -0.1);
    check_op_backward(P, [&](Tape& t, int p) {
      return t.affine(p, t.constant(W));
    });
  }
  SUBCASE("affine in W") {
    const Matrix X = patterned(4, 3, 0.4, 0.2);
    check_op_backward(P, [&](Tape& t, int p) {
      return t.affine(t.constant(X), p);
    });
  }
  SUBCASE("affine in transposed W") {
    const Matrix X = patterned(4, 2, 0.4, 0.2);
    check_op_backward(P, [&](Tape& t, int p) {
      return t.affine(t.constant(X), p, -1, true);
    });
  }
  SUBCASE("affine in bias") {
    const Matrix X = patterned(4, 3, 0.4, 0.2);
    const Matrix W = patterned(3, 2, 0.2, -0.1);
    check_op_backward(patterned(1, 2, -0.3, 0.4), [&](Tape& t, int p) {
      return t.affine(t.constant(X), t.constant(W), p);
    });
  }
  SUBCASE("add and mul, full shape, both operands") {
    const Matrix B = patterned(3, 2, 0.5, -0.2);
    check_op_backward(P, [&](Tape& t, int p) {
      return t.add(p, t.constant(B));
    });
    check_op_backward(P, [&](Tape& t, int p) {
      return t.add(t.constant(B), p);
    });
    check_op_backward(P, [&](Tape& t, int p) {
      return t.mul(p, t.constant(B));
    });
    check_op_backward(P, [&](Tape& t, int p) {
      return t.mul(t.constant(B), p);
    });
  }
  SUBCASE("column and scalar broadcast reduce on the way back") {
    const Matrix A = patterned(3, 2, 0.5, -0.2);
    check_op_backward(patterned(3, 1, -0.6, 0.3), [&](Tape& t, int p) {
      return t.add(t.constant(A), p);
    });
    check_op_backward(patterned(3, 1, -0.6, 0.3), [&](Tape& t, int p) {
      return t.mul(t.constant(A), p);
    });
    check_op_backward(patterned(1, 1, 0.7, 0.0), [&](Tape& t, int p) {
      return t.add(t.constant(A), p);
    });
    check_op_backward(patterned(1, 1, 0.7, 0.0), [&](Tape& t, int p) {
      return t.mul(t.constant(A), p);
    });
  }
  SUBCASE("tanh") {
    check_op_backward(P, [](Tape& t, int p) { return t.tanh_op(p); });
  }
  SUBCASE("huber gate away from the knees") {
    Matrix Q(2, 3);
    Q.data = {-2.0, -0.6, 0.3, 1.7, 0.8, -1.4};
    check_op_backward(Q, [](Tape& t, int p) { return t.huber_grad(p); });
  }
  SUBCASE("sqrt and recip on positive entries") {
    const Matrix Q = patterned(2, 3, 0.5, 0.25);
    check_op_backward(Q, [](Tape& t, int p) { return t.sqrt_op(p); });
    check_op_backward(Q, [](Tape& t, int p) { return t.recip(p); });
  }
  SUBCASE("nonneg prox gates like relu") {
    Matrix Q(2, 3);
    Q.data = {0.7, -0.9, 1.3, -0.2, 0.5, 2.0};
    check_op_backward(Q, [](Tape& t, int p) {
      return t.prox_op(p, ProxOperator::nonneg(), 0.3);
    });
  }
  SUBCASE("a value used twice accumulates both paths") {
    // d/dp (p + p*p) = 1 + 2p, exact
    Tape t;
    const int p = t.param("p", P);
    const int out = t.add(p, t.mul(p, p));
    Matrix w(3, 2, 1.0);
    const Matrix g = t.backward({{out, w}}).at("p");
    for (std::size_t k = 0; k < P.data.size(); ++k)
      CHECK(g.data[k] == doctest::Approx(1.0 + 2.0 * P.data[k]).epsilon(1e-14));
  }
}

TEST_CASE("recorded unrolls match the descent engine on every family") {
  const std::vector<std::string> fams = {
      "quadratic", "heterophily", "huber", "logcosh", "kge", "lp", "grmlp"};
  const std::vector<AlgoKind> kinds = {
      AlgoKind::Gd,      AlgoKind::ProxGd,  AlgoKind::DegreeGd,
      AlgoKind::Momentum, AlgoKind::AdaGrad, AlgoKind::RmsProp,
      AlgoKind::Adam};
  std::vector<std::pair<std::string, AlgoKind>> pairs;
  for (const std::string& f : fams)
    for (const AlgoKind k : kinds) pairs.emplace_back(f, k);
  pairs.emplace_back("unitnorm", AlgoKind::ProxGd);
  pairs.emplace_back("unitnorm", AlgoKind::Momentum);

  const std::size_t L = 3;
  for (const auto& [fam, kind] : pairs) {
    CAPTURE(fam);
    CAPTURE(algo_name(kind));
    const Instance inst = make_instance(fam, 21);
    const DescentAlgorithm algo = pairing_algorithm(inst, kind, 21);
    const UnrollRecording rec =
        record_unroll(inst.e, algo, inst.g, inst.X, L, &inst.H);
    const UnrollResult res =
        unroll(algo, inst.e, inst.g, inst.H, inst.X, L, Exec::Serial, true);
    REQUIRE(rec.h_ids.size() == L + 1);
    REQUIRE(res.trajectory.states.size() == L + 1);
    for (std::size_t l = 0; l <= L; ++l) {
      CAPTURE(l);
      CHECK(max_abs_diff(rec.tape.value(rec.h_ids[l]),
                         res.trajectory.states[l]) <= 1e-12);
    }
    CHECK(max_abs_diff(rec.tape.value(rec.h_final), res.H) <= 1e-12);
  }
}

TEST_CASE("gradients through a whole unroll match finite differences") {
  // two-layer input model feeding the start and the fidelity pull, so W1
  // gets contributions from both paths
  const std::vector<Triplet> tris = {{0, 0, 1}, {1, 0, 2}, {2, 0, 3},
                                     {0, 0, 3}, {1, 0, 3}};
  const HeteroGraph g = build_graph(tris, 4, 1, true);
  const std::size_t p = 3, hid = 4, d = 2;
  const Matrix X = patterned(4, p, -0.5, 0.35);
  const Matrix W1 = patterned(p, hid, -0.4, 0.2);
  const Matrix b1 = patterned(1, hid, 0.1, -0.05);
  const Matrix W2 = patterned(hid, d, 0.3, -0.15);
  const Matrix b2 = patterned(1, d, -0.2, 0.1);
  const DescentAlgorithm algo = make_gd(0.15);

  auto energy_with = [&](const Matrix& W1v) {
    return make_quadratic(d, 0.8, InputModel::mlp2(W1v, b1, W2, b2), true);
  };
  auto loss_of = [&](const Matrix& W1v) {
    const EnergyFamily e = energy_with(W1v);
    const UnrollRecording rec = record_unroll(e, algo, g, X, 2, nullptr);
    Matrix w(4, d, 1.0);
    return wsum(rec.tape.value(rec.h_final), w);
  };

  const EnergyFamily e = energy_with(W1);
  const UnrollRecording rec = record_unroll(e, algo, g, X, 2, nullptr);
  Matrix w(4, d, 1.0);
  const auto grads = rec.tape.backward({{rec.h_final, w}});
  CHECK(grads.count("pi.W1") == 1);
  CHECK(grads.count("pi.b1") == 1);
  CHECK(grads.count("pi.W2") == 1);
  CHECK(grads.count("pi.b2") == 1);
  CHECK(grads.count("lambda_eff") == 1);  // trainable, so it is a leaf

  const Matrix want = testsup::fd_grad(
      [&](const Matrix& W1v) { return loss_of(W1v); }, W1);
  CHECK(max_abs_diff(grads.at("pi.W1"), want) < 1e-5);

  // non-trainable lambda stays a constant
  const EnergyFamily e2 =
      make_quadratic(d, 0.8, InputModel::mlp2(W1, b1, W2, b2), false);
  const UnrollRecording rec2 = record_unroll(e2, algo, g, X, 2, nullptr);
  CHECK(rec2.tape.param_id("lambda_eff") == -1);
}

TEST_CASE("record-time rejections") {
  const Instance quad = make_instance("quadratic", 5);

  SUBCASE("backtracking has no fixed expression") {
    DescentAlgorithm algo = pairing_algorithm(quad, AlgoKind::Gd, 5);
    algo.backtracking = true;
    CHECK_THROWS_AS(record_unroll(quad.e, algo, quad.g, quad.X, 2, &quad.H),
                    std::invalid_argument);
  }
  SUBCASE("the bilinear family is out of vocabulary") {
    const Instance nbf = make_instance("nbf", 5);
    const DescentAlgorithm algo = pairing_algorithm(nbf, AlgoKind::Gd, 5);
    CHECK_THROWS_AS(record_unroll(nbf.e, algo, nbf.g, nbf.X, 1, &nbf.H),
                    std::invalid_argument);
  }
  SUBCASE("relation count mismatch") {
    const HeteroGraph g2 =
        build_graph({{0, 0, 1}, {1, 1, 2}}, 3, 2, true);
    const DescentAlgorithm algo = pairing_algorithm(quad, AlgoKind::Gd, 5);
    Matrix H(3, quad.e.d);
    Matrix X(3, quad.e.d);
    CHECK_THROWS_AS(record_unroll(quad.e, algo, g2, X, 1, &H),
                    std::invalid_argument);
  }
  SUBCASE("no start value") {
    const Instance kge = make_instance("kge", 5);
    const DescentAlgorithm algo = pairing_algorithm(kge, AlgoKind::Gd, 5);
    CHECK_THROWS_AS(record_unroll(kge.e, algo, kge.g, kge.X, 1, nullptr),
                    std::invalid_argument);
  }
  SUBCASE("start shape") {
    const DescentAlgorithm algo = pairing_algorithm(quad, AlgoKind::Gd, 5);
    Matrix bad(quad.g.n, quad.e.d + 1);
    CHECK_THROWS_AS(record_unroll(quad.e, algo, quad.g, quad.X, 1, &bad),
                    std::invalid_argument);
  }
}

TEST_CASE("tape input validation") {
  Tape t;
  const Matrix M = patterned(3, 2, 0.1, 0.2);
  const int a = t.constant(M);

  CHECK_THROWS_AS(t.param("", M), std::invalid_argument);
  t.param("p", M);
  CHECK_THROWS_AS(t.param("p", M), std::invalid_argument);

  auto bad_idx = std::make_shared<const std::vector<std::size_t>>(
      std::vector<std::size_t>{0, 5});
  CHECK_THROWS_AS(t.gather(a, bad_idx), std::invalid_argument);
  CHECK_THROWS_AS(t.gather(a, nullptr), std::invalid_argument);

  auto off_short = std::make_shared<const std::vector<std::size_t>>(
      std::vector<std::size_t>{0, 2});
  CHECK_THROWS_AS(t.scatter_sum(a, off_short, 2), std::invalid_argument);
  auto off_gap = std::make_shared<const std::vector<std::size_t>>(
      std::vector<std::size_t>{0, 1, 2});
  CHECK_THROWS_AS(t.scatter_sum(a, off_gap, 2), std::invalid_argument);

  const int b = t.constant(patterned(4, 2, 0.0, 0.1));
  CHECK_THROWS_AS(t.add(a, b), std::invalid_argument);
  CHECK_THROWS_AS(t.mul(a, b), std::invalid_argument);
  CHECK_THROWS_AS(t.affine(a, b), std::invalid_argument);
  CHECK_THROWS_AS(t.add(a, 99), std::invalid_argument);

  CHECK_THROWS_AS(t.backward({{a, Matrix(2, 2, 1.0)}}), std::invalid_argument);
}

TEST_CASE("recorded edge scores match the direct formula") {
  // doubled relation space: rels 2 and 3 mark negatives of rels 0 and 1
  const std::size_t d = 3, kge_m = 2;
  const std::vector<Triplet> tris = {
      {0, 0, 1}, {1, 1, 2}, {2, 2, 3}, {3, 3, 0}, {0, 1, 2}};
  const HeteroGraph g = build_graph(tris, 4, 2 * kge_m, true);
  const Matrix E = patterned(kge_m, d, -0.6, 0.35);
  const Matrix H = patterned(4, d, 0.2, -0.3);

  for (const ScoreKind score : {ScoreKind::DistMult, ScoreKind::TransE}) {
    CAPTURE(score == ScoreKind::DistMult ? "distmult" : "transe");
    const EnergyFamily e = make_kge_bce(d, score, kge_m, E);
    Tape t;
    const int h = t.constant(H);
    const int eid = t.param("E", E);
    const int sid = record_kge_scores(t, e, g, h, eid);
    const Matrix& s = t.value(sid);

    std::size_t pos = 0;
    for (NodeId v = 0; v < g.n; ++v)
      for (const InEdge* it = g.nbr_begin(v); it != g.nbr_end(v); ++it) {
        if (it->rel >= e.m) continue;
        const RelationId er = it->rel < kge_m ? it->rel : it->rel - kge_m;
        const double want =
            kge_score(score, H.row(it->src), E.row(er), H.row(v), d);
        CHECK(s.at(pos, 0) == doctest::Approx(want).epsilon(1e-12));
        ++pos;
      }
    CHECK(pos == s.rows);
    CHECK(s.cols == 1);
  }

  Tape t;
  const Instance quad = make_instance("quadratic", 2);
  const int h = t.constant(quad.H);
  const int eid = t.constant(Matrix(2, 2));
  CHECK_THROWS_AS(record_kge_scores(t, quad.e, quad.g, h, eid),
                  std::invalid_argument);
}
