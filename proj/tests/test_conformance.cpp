#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "ugnn/conformance.hpp"

using namespace ugnn;

TEST_CASE("every shipped pairing passes all five checks") {
  const std::vector<ConformanceReport> reports = run_all_pairings(2, 1);
  CHECK(reports.size() == 58);  // 8 families x 7 variants + unitnorm x 2
  for (const ConformanceReport& rep : reports) {
    CAPTURE(rep.pairing);
    CHECK(rep.passed());
    CHECK(rep.checks.size() == 5);
    CHECK(rep.replay.empty());
    for (const CheckResult& c : rep.checks) {
      CAPTURE(c.check);
      CHECK(c.passed);
      CHECK(c.max_error <= c.tolerance);
    }
  }
}

TEST_CASE("the family list is fixed") {
  const std::vector<std::string> fams = built_in_families();
  const std::vector<std::string> want = {"quadratic", "heterophily", "huber",
                                         "logcosh",   "kge",         "lp",
                                         "grmlp",     "nbf",         "unitnorm"};
  CHECK(fams == want);
  CHECK_THROWS_AS(make_instance("nosuch", 1), std::invalid_argument);
}

TEST_CASE("instances are reproducible from their seed") {
  const Instance a = make_instance("heterophily", 44);
  const Instance b = make_instance("heterophily", 44);
  CHECK(bit_equal(a.H, b.H));
  CHECK(bit_equal(a.X, b.X));
  CHECK(a.g.edges == b.g.edges);
  const Instance c = make_instance("heterophily", 45);
  CHECK_FALSE(bit_equal(c.H, a.H));
}

TEST_CASE("a sign-flipped aggregate is caught with the predicted error") {
  // the injected reference flips the edge aggregate: G becomes K - A, which
  // shifts a plain gradient step by exactly 2 gamma A
  const Instance inst = make_instance("quadratic", 9);
  const DescentAlgorithm algo = pairing_algorithm(inst, AlgoKind::Gd, 9);

  Matrix A(inst.g.n, inst.e.d);
  std::vector<double> msg(inst.e.d);
  for (NodeId v = 0; v < inst.g.n; ++v)
    for (const InEdge* it = inst.g.nbr_begin(v); it != inst.g.nbr_end(v); ++it) {
      inst.e.grad_pair_dst(inst.H.row(it->src), inst.H.row(v), it->rel,
                           msg.data());
      for (std::size_t j = 0; j < inst.e.d; ++j) A.at(v, j) += msg[j];
    }

  Matrix Hc, Hf;
  HiddenState Sc, Sf;
  const HiddenState S = make_hidden_state(algo, inst.g.n, inst.e.d);
  dense_reference_step(algo, inst.e, inst.g, inst.H, S, inst.X, Hc, Sc,
                       FaultInjection::None);
  dense_reference_step(algo, inst.e, inst.g, inst.H, S, inst.X, Hf, Sf,
                       FaultInjection::SignFlipMessage);
  const double shift = max_abs_diff(Hc, Hf);
  CHECK(shift == doctest::Approx(2.0 * algo.gamma * max_abs(A)).epsilon(1e-12));
  CHECK(shift > 0.0);

  // and the harness reports the oracle check as failed
  const ConformanceReport rep = check_pairing(
      "quadratic", AlgoKind::Gd, 2, 9, FaultInjection::SignFlipMessage);
  CHECK_FALSE(rep.passed());
  bool oracle_failed = false;
  for (const CheckResult& c : rep.checks)
    if (c.check == "oracle" && !c.passed) oracle_failed = true;
  CHECK(oracle_failed);
  CHECK_FALSE(rep.replay.empty());
}

TEST_CASE("an outer nonlinearity on the edge sum breaks locality") {
  const RhoDemo demo = check_nonlinear_rho_counterexample();
  CHECK(demo.far_effect_squared > 1e-3);
  CHECK(demo.far_effect_linear <= 1e-12);
  CHECK(demo.far_effect_identity <= 1e-12);
  CHECK(demo.squared_breaks_locality);
  CHECK(demo.linear_keeps_locality);
}

TEST_CASE("the report text is byte-stable and line-structured") {
  const std::string a = report_text(run_all_pairings(1, 5));
  const std::string b = report_text(run_all_pairings(1, 5));
  CHECK(a == b);
  CHECK(a.rfind("quadratic/gd,oracle,", 0) == 0);

  // every non-comment line has the five comma fields and a known status
  std::size_t lines = 0;
  std::size_t start = 0;
  while (start < a.size()) {
    std::size_t end = a.find('\n', start);
    if (end == std::string::npos) end = a.size();
    const std::string line = a.substr(start, end - start);
    start = end + 1;
    if (line.empty() || line[0] == '#') continue;
    ++lines;
    CHECK(std::count(line.begin(), line.end(), ',') == 4);
    const bool ok = line.size() > 5 &&
                    (line.rfind(",pass") == line.size() - 5 ||
                     line.rfind(",fail") == line.size() - 5);
    CHECK(ok);
  }
  CHECK(lines == 58 * 5);
}
