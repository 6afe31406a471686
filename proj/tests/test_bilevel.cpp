#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "support.hpp"
#include "ugnn/bilevel.hpp"

using namespace ugnn;

namespace {

struct Fixture {
  HeteroGraph g;
  Matrix X;
  LabelSet labels;
};

// two cliques joined by one bridge edge, indicator features, two labeled
// nodes per side
Fixture two_clusters(std::size_t per) {
  const std::size_t n = 2 * per;
  std::vector<Triplet> tris;
  for (std::size_t c = 0; c < 2; ++c) {
    const std::size_t base = c * per;
    for (std::size_t i = 0; i < per; ++i)
      for (std::size_t j = 0; j < i; ++j)
        tris.push_back({base + j, 0, base + i});
  }
  tris.push_back({per - 1, 0, per});

  Fixture fx;
  fx.g = build_graph(tris, n, 1, true);
  fx.X = Matrix(n, 2);
  for (std::size_t v = 0; v < n; ++v) fx.X.at(v, v < per ? 0 : 1) = 1.0;
  fx.labels.class_of.assign(n, -1);
  fx.labels.observed.assign(n, 0);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < 2; ++i) {
      const std::size_t v = c * per + i;
      fx.labels.class_of[v] = static_cast<long>(c);
      fx.labels.observed[v] = 1;
    }
  return fx;
}

BilevelModel plain_model(std::size_t layers) {
  BilevelModel m;
  m.energy = make_quadratic(2, 0.5, InputModel::identity_map());
  m.algo = make_gd(0.1);
  m.layers = layers;
  return m;
}

}  // namespace

TEST_CASE("zero layers and a zero readout give the uniform loss") {
  const Fixture fx = two_clusters(4);
  BilevelModel m = plain_model(0);
  m.init = InitKind::Zero;
  m.readout.W = Matrix(2, 2);
  m.readout.b = Matrix(1, 2);
  std::vector<char> mask(fx.g.n, 0);
  for (std::size_t v = 0; v < fx.g.n; ++v) mask[v] = fx.labels.observed[v];

  const ForwardResult fr = bilevel_forward(m, fx.g, fx.X, fx.labels, mask);
  CHECK(fr.loss == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK(max_abs(fr.H) == 0.0);
  CHECK(max_abs(fr.logits) == 0.0);
}

TEST_CASE("the readout gradient at zero logits is the closed form") {
  // H = 0, logits = b = 0: softmax is uniform, so d/db = mean(1/c - onehot)
  // over the masked rows and d/dW = H^T seed = 0
  std::vector<Triplet> tris = {{0, 0, 1}, {1, 0, 2}, {2, 0, 3}};
  Fixture fx;
  fx.g = build_graph(tris, 4, 1, true);
  fx.X = Matrix(4, 2);
  fx.labels.class_of = {0, 0, 0, 1};
  fx.labels.observed = {1, 1, 1, 1};

  BilevelModel m = plain_model(0);
  m.init = InitKind::Zero;
  m.readout.W = Matrix(2, 2);
  m.readout.b = Matrix(1, 2);
  const std::vector<char> mask(4, 1);

  const ForwardResult fr = bilevel_forward(m, fx.g, fx.X, fx.labels, mask);
  const auto grads = bilevel_backward(m, fr, fx.labels, mask);

  CHECK(max_abs(grads.at("theta.W")) == 0.0);
  const Matrix& gb = grads.at("theta.b");
  CHECK(gb.at(0, 0) == doctest::Approx(-0.25).epsilon(1e-15));
  CHECK(gb.at(0, 1) == doctest::Approx(0.25).epsilon(1e-15));

  const Matrix seed = cross_entropy_seed(fr.logits, fx.labels, mask);
  CHECK(seed.rows == 4);
  for (std::size_t j = 0; j < 2; ++j)
    CHECK(seed.at(0, j) ==
          doctest::Approx((0.5 - (j == 0 ? 1.0 : 0.0)) / 4.0).epsilon(1e-15));

  std::vector<char> off(4, 0);
  off[2] = 1;
  const Matrix seed2 = cross_entropy_seed(fr.logits, fx.labels, off);
  CHECK(seed2.at(0, 0) == 0.0);
  CHECK(seed2.at(1, 1) == 0.0);
  CHECK(seed2.at(2, 0) != 0.0);
}

TEST_CASE("upper-level gradients match finite differences") {
  const Fixture fx = two_clusters(3);
  std::vector<char> mask(fx.g.n, 0);
  for (std::size_t v = 0; v < fx.g.n; ++v) mask[v] = fx.labels.observed[v];

  const std::size_t hid = 3, d = 2;

  auto build = [&](const std::map<std::string, Matrix>& override_params,
                   bool heterophily) {
    Rng init(99);
    const InputModel pi =
        InputModel::mlp2(init.normal_matrix(2, hid, 0.4),
                         init.normal_matrix(1, hid, 0.1),
                         init.normal_matrix(hid, d, 0.4),
                         init.normal_matrix(1, d, 0.1));
    BilevelModel m;
    if (heterophily)
      m.energy = make_heterophily(d, 0.6, init.normal_matrix(d, d, 0.3), pi,
                                  FidelityKind::Quadratic, 1, true);
    else
      m.energy = make_quadratic(d, 0.6, pi, true);
    m.algo = make_gd(0.08);
    m.layers = 2;
    m.readout.W = init.normal_matrix(d, 2, 0.5);
    m.readout.b = init.normal_matrix(1, 2, 0.1);
    for (const auto& [name, value] : override_params) {
      if (name == "theta.W")
        m.readout.W = value;
      else if (name == "theta.b")
        m.readout.b = value;
      else
        m.energy.set_param(name, value);
    }
    return m;
  };

  for (const bool hetero : {false, true}) {
    CAPTURE(hetero);
    const BilevelModel m = build({}, hetero);
    const ForwardResult fr = bilevel_forward(m, fx.g, fx.X, fx.labels, mask);
    const auto grads = bilevel_backward(m, fr, fx.labels, mask);

    std::set<std::string> want = {"theta.W", "theta.b", "pi.W1", "pi.b1",
                                  "pi.W2",   "pi.b2",   "lambda_raw"};
    if (hetero) want.insert("C");
    std::set<std::string> got;
    for (const auto& [name, unused] : grads) got.insert(name);
    CHECK(got == want);

    std::map<std::string, Matrix> at;
    at["theta.W"] = m.readout.W;
    at["theta.b"] = m.readout.b;
    for (const auto& [name, value] : m.energy.params()) at[name] = value;

    for (const auto& [name, value] : at) {
      CAPTURE(name);
      const Matrix fd = testsup::fd_grad(
          [&](const Matrix& p) {
            std::map<std::string, Matrix> over = at;
            over[name] = p;
            const BilevelModel mp = build(over, hetero);
            return bilevel_forward(mp, fx.g, fx.X, fx.labels, mask).loss;
          },
          value);
      CHECK(max_abs_diff(grads.at(name), fd) < 1e-5);
    }
  }
}

TEST_CASE("training separates the two-cluster fixture") {
  const Fixture fx = two_clusters(5);
  TrainConfig cfg;
  cfg.epochs = 120;
  cfg.lr = 0.5;
  cfg.seed = 3;

  SUBCASE("plain gradient outer loop") {}
  SUBCASE("adam outer loop") {
    cfg.opt = OuterOpt::Adam;
    cfg.lr = 0.05;
  }

  const TrainResult res =
      train(plain_model(3), fx.g, fx.X, fx.labels, {}, cfg);
  REQUIRE_FALSE(res.diverged);
  REQUIRE(res.history.size() == cfg.epochs + 1);
  CHECK(res.history.back().train_acc == 1.0);
  CHECK(res.history.back().train_loss < res.history.front().train_loss);
  CHECK(res.history.back().train_loss < 0.1);
}

TEST_CASE("a trainable lambda moves and stays positive") {
  const Fixture fx = two_clusters(4);
  BilevelModel m;
  m.energy = make_quadratic(2, 0.7, InputModel::identity_map(), true);
  m.algo = make_gd(0.1);
  m.layers = 3;
  const double raw0 = m.energy.lambda_raw;

  TrainConfig cfg;
  cfg.epochs = 40;
  cfg.lr = 0.3;
  const TrainResult res = train(m, fx.g, fx.X, fx.labels, {}, cfg);
  REQUIRE_FALSE(res.diverged);
  CHECK(res.model.energy.lambda() > 0.0);
  CHECK(res.model.energy.lambda_raw != raw0);
}

TEST_CASE("training is reproducible from the seed") {
  const Fixture fx = two_clusters(4);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.lr = 0.4;
  cfg.seed = 11;

  const TrainResult a = train(plain_model(2), fx.g, fx.X, fx.labels, {}, cfg);
  const TrainResult b = train(plain_model(2), fx.g, fx.X, fx.labels, {}, cfg);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].train_loss == b.history[i].train_loss);
    CHECK(a.history[i].train_acc == b.history[i].train_acc);
  }
  CHECK(bit_equal(a.model.readout.W, b.model.readout.W));
  CHECK(bit_equal(a.model.readout.b, b.model.readout.b));

  cfg.seed = 12;
  const TrainResult c = train(plain_model(2), fx.g, fx.X, fx.labels, {}, cfg);
  CHECK_FALSE(bit_equal(c.model.readout.W, a.model.readout.W));
}

TEST_CASE("outer backtracking keeps the loss history non-increasing") {
  const Fixture fx = two_clusters(4);
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.lr = 8.0;  // deliberately too hot for a raw step
  cfg.outer_backtrack = true;

  const TrainResult res = train(plain_model(2), fx.g, fx.X, fx.labels, {}, cfg);
  REQUIRE_FALSE(res.diverged);
  for (std::size_t i = 1; i < res.history.size(); ++i)
    CHECK(res.history[i].train_loss <= res.history[i - 1].train_loss);
}

TEST_CASE("an exploding inner unroll aborts as diverged") {
  const Fixture fx = two_clusters(4);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.lr = 0.1;

  BilevelModel m = plain_model(3);
  m.algo = make_gd(1e160);  // overflows within three layers
  const TrainResult res = train(m, fx.g, fx.X, fx.labels, {}, cfg);
  CHECK(res.diverged);
  CHECK(res.history.size() == 1);
}

TEST_CASE("splits route nodes to train and validation masks") {
  const Fixture fx = two_clusters(4);
  std::vector<Split> splits(fx.g.n, Split::None);
  splits[0] = Split::Train;
  splits[4] = Split::Train;
  splits[1] = Split::Val;
  splits[5] = Split::Val;

  TrainConfig cfg;
  cfg.epochs = 60;
  cfg.lr = 0.5;
  const TrainResult res = train(plain_model(3), fx.g, fx.X, fx.labels, splits, cfg);
  REQUIRE_FALSE(res.diverged);
  CHECK(res.history.back().val_acc == 1.0);
  CHECK(res.history.back().train_acc == 1.0);
}

TEST_CASE("configuration rejections") {
  const Fixture fx = two_clusters(3);
  TrainConfig cfg;

  SUBCASE("nonpositive lr") {
    cfg.lr = 0.0;
    CHECK_THROWS_AS(train(plain_model(1), fx.g, fx.X, fx.labels, {}, cfg),
                    std::invalid_argument);
  }
  SUBCASE("backtracking under adam") {
    cfg.opt = OuterOpt::Adam;
    cfg.outer_backtrack = true;
    CHECK_THROWS_AS(train(plain_model(1), fx.g, fx.X, fx.labels, {}, cfg),
                    std::invalid_argument);
  }
  SUBCASE("splits arity") {
    const std::vector<Split> bad(fx.g.n + 1, Split::Train);
    CHECK_THROWS_AS(train(plain_model(1), fx.g, fx.X, fx.labels, bad, cfg),
                    std::invalid_argument);
  }
  SUBCASE("no training nodes") {
    const std::vector<Split> bad(fx.g.n, Split::Test);
    CHECK_THROWS_AS(train(plain_model(1), fx.g, fx.X, fx.labels, bad, cfg),
                    std::invalid_argument);
  }
  SUBCASE("mask selecting an unlabeled node") {
    BilevelModel m = plain_model(1);
    m.readout.W = Matrix(2, 2, 0.1);
    m.readout.b = Matrix(1, 2);
    std::vector<char> mask(fx.g.n, 1);
    CHECK_THROWS_AS(bilevel_forward(m, fx.g, fx.X, fx.labels, mask),
                    std::invalid_argument);
  }
  SUBCASE("readout shape") {
    BilevelModel m = plain_model(1);
    m.readout.W = Matrix(3, 2, 0.1);
    m.readout.b = Matrix(1, 2);
    std::vector<char> mask(fx.g.n, 0);
    mask[0] = 1;
    CHECK_THROWS_AS(bilevel_forward(m, fx.g, fx.X, fx.labels, mask),
                    std::invalid_argument);
  }
}

TEST_CASE("outlier ranking follows the fidelity residual") {
  // identity input model: the residual is the row norm of H - X
  const std::size_t n = 8;
  Matrix X(n, 2);
  Matrix H(n, 2);
  for (std::size_t v = 0; v < n; ++v) {
    X.at(v, 0) = 1.0;
    H.at(v, 0) = 1.0;
  }
  H.at(3, 1) = 4.0;
  H.at(6, 1) = 9.0;
  H.at(1, 1) = 4.0;  // tie with node 3, lower id wins

  const OutlierResult r =
      detect_outliers(H, X, InputModel::identity_map(), 0.5);
  REQUIRE(r.ranked.size() == 4);
  CHECK(r.ranked[0] == 6);
  CHECK(r.ranked[1] == 1);
  CHECK(r.ranked[2] == 3);
  CHECK(r.residuals[6] == 9.0);
  CHECK(r.residuals[3] == 4.0);
  CHECK(r.residuals[0] == 0.0);

  const std::vector<std::size_t> planted = {1, 3, 6};
  const OutlierResult rp =
      detect_outliers(H, X, InputModel::identity_map(), 3.0 / n, &planted);
  CHECK(rp.ranked.size() == 3);
  CHECK(rp.detection_rate == 100.0);

  const OutlierResult all =
      detect_outliers(H, X, InputModel::identity_map(), 1.0, &planted);
  CHECK(all.ranked.size() == n);
  CHECK(all.detection_rate == 100.0);

  const OutlierResult none =
      detect_outliers(H, X, InputModel::identity_map(), 0.0, &planted);
  CHECK(none.ranked.empty());
  CHECK(none.detection_rate == 0.0);

  CHECK_THROWS_AS(detect_outliers(H, X, InputModel::identity_map(), -0.1),
                  std::invalid_argument);
  CHECK_THROWS_AS(detect_outliers(H, X, InputModel::identity_map(), 1.5),
                  std::invalid_argument);
  const Matrix X3(n, 3);
  CHECK_THROWS_AS(detect_outliers(H, X3, InputModel::identity_map(), 0.5),
                  std::invalid_argument);
}

TEST_CASE("planted outliers are recovered after an unroll") {
  // clean nodes sit at their features, planted nodes are pushed far off;
  // a short huber unroll keeps the displaced nodes distinguished
  const std::size_t n = 20;
  std::vector<Triplet> tris;
  for (std::size_t v = 1; v < n; ++v) tris.push_back({v - 1, 0, v});
  const HeteroGraph g = build_graph(tris, n, 1, true);

  Rng rng(5);
  Matrix X = rng.normal_matrix(n, 3, 0.1);
  const std::vector<std::size_t> planted = {4, 11, 17};
  for (const std::size_t v : planted)
    for (std::size_t j = 0; j < 3; ++j) X.at(v, j) += 5.0;

  const EnergyFamily e =
      make_huber_fidelity(3, 1.0, InputModel::identity_map());
  Matrix H0(n, 3);  // zeros: every node starts equally far from clean X
  const UnrollResult ur =
      unroll(make_gd(0.1), e, g, H0, X, 10, Exec::Serial);

  const OutlierResult r = detect_outliers(ur.H, X, InputModel::identity_map(),
                                          static_cast<double>(planted.size()) /
                                              static_cast<double>(n),
                                          &planted);
  CHECK(r.detection_rate >= 80.0);
}
