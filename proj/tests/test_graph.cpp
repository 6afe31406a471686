#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <stdexcept>

#include "support.hpp"
#include "ugnn/graph.hpp"

using namespace ugnn;

TEST_CASE("augmented path graph stores both directions") {
  const std::vector<Triplet> tr = {{0, 0, 1}, {1, 0, 2}};
  const HeteroGraph g = build_graph(tr, 3, 1, true);

  CHECK(g.n == 3);
  CHECK(g.m == 1);
  CHECK(g.inverse_augmented);
  CHECK(g.edge_count() == 4);
  CHECK(g.relation_count() == 2);
  CHECK(g.in_degree(0) == 1);
  CHECK(g.in_degree(1) == 2);
  CHECK(g.in_degree(2) == 1);

  // node 1 receives the forward edge from 0 and the inverse from 2
  CHECK(g.nbr_begin(1)[0] == InEdge{0, 0});
  CHECK(g.nbr_begin(1)[1] == InEdge{2, 1});
  CHECK(g.is_inverse(1));
  CHECK_FALSE(g.is_inverse(0));

  CHECK(g.original_triplets() == std::vector<Triplet>{{0, 0, 1}, {1, 0, 2}});
  CHECK(g.stored_triplets().size() == 4);
  for (std::size_t e = 0; e < g.edge_count(); ++e) {
    const NodeId v = g.edge_dst(e);
    CHECK(g.offsets[v] <= e);
    CHECK(e < g.offsets[v + 1]);
  }
}

TEST_CASE("neighborhoods are sorted and duplicate-free") {
  // duplicates and shuffled insertion order must not change the layout
  const std::vector<Triplet> tr = {{2, 1, 0}, {1, 0, 0}, {2, 0, 0},
                                   {1, 0, 0}, {2, 1, 0}};
  const HeteroGraph g = build_graph(tr, 3, 2, false);
  CHECK(g.in_degree(0) == 3);
  CHECK(g.nbr_begin(0)[0] == InEdge{1, 0});
  CHECK(g.nbr_begin(0)[1] == InEdge{2, 0});
  CHECK(g.nbr_begin(0)[2] == InEdge{2, 1});

  const HeteroGraph g2 =
      build_graph({{1, 0, 0}, {2, 0, 0}, {2, 1, 0}}, 3, 2, false);
  CHECK(g.offsets == g2.offsets);
  CHECK(g.edges == g2.edges);
}

TEST_CASE("build_graph rejects bad input") {
  CHECK_THROWS_AS(build_graph({{0, 0, 3}}, 3, 1, false), std::invalid_argument);
  CHECK_THROWS_AS(build_graph({{0, 1, 1}}, 3, 1, false), std::invalid_argument);
  CHECK_THROWS_AS(build_graph({{1, 0, 1}}, 3, 1, false), std::invalid_argument);
  CHECK_NOTHROW(build_graph({{1, 0, 1}}, 3, 1, false, true));
}

TEST_CASE("permutation relabels graph and rows consistently") {
  Rng rng(5);
  const HeteroGraph g = testsup::random_graph(rng, 7, 6, 2, true);
  const Matrix H = rng.normal_matrix(7, 3);

  Permutation p;
  p.map = {3, 0, 6, 2, 5, 1, 4};
  p.validate();
  const auto [gp, Hp] = permute(g, H, p);

  CHECK(gp.n == g.n);
  CHECK(gp.m == g.m);
  CHECK(gp.edge_count() == g.edge_count());
  for (NodeId v = 0; v < g.n; ++v) {
    CHECK(gp.in_degree(p.map[v]) == g.in_degree(v));
    for (std::size_t j = 0; j < H.cols; ++j)
      CHECK(Hp.at(p.map[v], j) == H.at(v, j));
  }

  const Permutation pi = p.inverse();
  for (NodeId v = 0; v < p.size(); ++v) CHECK(pi.map[p.map[v]] == v);

  Permutation bad;
  bad.map = {0, 0, 2};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("laplacian of the path graph") {
  const HeteroGraph g = build_graph({{0, 0, 1}, {1, 0, 2}}, 3, 1, true);
  const Matrix L = laplacian(g).dense();
  const double want[3][3] = {{1, -1, 0}, {-1, 2, -1}, {0, -1, 1}};
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(L.at(i, j) == want[i][j]);

  // multiply agrees with the dense product
  Rng rng(9);
  const Matrix H = rng.normal_matrix(3, 4);
  const Matrix a = laplacian(g).multiply(H);
  const Matrix b = matmul(L, H);
  CHECK(max_abs_diff(a, b) == 0.0);

  const HeteroGraph g2 = build_graph({{0, 1, 1}}, 2, 2, false);
  CHECK_THROWS_AS(laplacian(g2), std::invalid_argument);
}

TEST_CASE("label sets and one-hot expansion") {
  LabelSet ls;
  ls.class_of = {0, -1, 2, 0};
  ls.observed = {1, 0, 1, 1};
  CHECK(ls.observed_count() == 3);
  CHECK(ls.num_classes() == 3);

  const MaskedLabels ml = masked_labels(ls);
  CHECK(ml.n() == 4);
  CHECK(ml.classes() == 3);
  CHECK(ml.Y.at(0, 0) == 1.0);
  CHECK(ml.Y.at(2, 2) == 1.0);
  CHECK(ml.Y.at(3, 0) == 1.0);
  for (std::size_t j = 0; j < 3; ++j) CHECK(ml.Y.at(1, j) == 0.0);
  CHECK(ml.mask == std::vector<char>{1, 0, 1, 1});

  const MaskedLabels wide = masked_labels(ls, 5);
  CHECK(wide.classes() == 5);

  LabelSet empty;
  empty.class_of = {-1, -1};
  empty.observed = {0, 0};
  CHECK_THROWS_AS(masked_labels(empty), std::invalid_argument);

  LabelSet bad;
  bad.class_of = {4};
  bad.observed = {1};
  CHECK_THROWS_AS(masked_labels(bad, 2), std::invalid_argument);
}

TEST_CASE("deterministic rng and chunked summation") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());
  Rng c(43);
  CHECK(a.uniform() != c.uniform());

  // ordered_chunk_sum is a fixed-order reduction: same input, same bits
  std::vector<double> xs;
  Rng r(7);
  for (int i = 0; i < 5000; ++i) xs.push_back(r.normal());
  const double s1 = ordered_chunk_sum(xs.size(), [&](std::size_t i) { return xs[i]; });
  const double s2 = ordered_chunk_sum(xs.size(), [&](std::size_t i) { return xs[i]; });
  CHECK(s1 == s2);
  double plain = 0.0;
  for (double v : xs) plain += v;
  CHECK(s1 == doctest::Approx(plain).epsilon(1e-12));
}
