// Times one descent step with the serial reference against the OpenMP kernel
// on a random graph and checks the outputs are bit-identical.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "ugnn/descent.hpp"
#include "ugnn/energy.hpp"
#include "ugnn/graph.hpp"
#include "ugnn/matrix.hpp"

using namespace ugnn;

namespace {

double bench(const DescentAlgorithm& algo, const EnergyFamily& e,
             const HeteroGraph& g, const Matrix& H, const HiddenState& S,
             const Matrix& X, Exec exec, std::size_t reps, Matrix& H_out,
             HiddenState& S_out) {
  // one warm-up step, then the timed repetitions
  step(algo, e, g, H, S, X, H_out, S_out, exec);
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t r = 0; r < reps; ++r)
    step(algo, e, g, H, S, X, H_out, S_out, exec);
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void run_case(const char* label, const DescentAlgorithm& algo,
              const EnergyFamily& e, const HeteroGraph& g, const Matrix& H,
              const Matrix& X, std::size_t reps) {
  const HiddenState S = make_hidden_state(algo, g.n, e.d);
  Matrix Hs, Hp;
  HiddenState Ss, Sp;
  const double ms_serial = bench(algo, e, g, H, S, X, Exec::Serial, reps, Hs, Ss);
  const double ms_par = bench(algo, e, g, H, S, X, Exec::Parallel, reps, Hp, Sp);
  const bool same = bit_equal(Hs, Hp) && hidden_state_bit_equal(Ss, Sp);
  std::printf("%-18s serial %8.3f ms   parallel %8.3f ms   speedup %5.2fx   bit_identical=%s\n",
              label, ms_serial, ms_par, ms_serial / ms_par,
              same ? "yes" : "NO");
  if (!same) std::exit(1);
}

}  // namespace

int main(int argc, char** argv) {
  std::size_t n = 20000;
  std::size_t avg_deg = 8;
  std::size_t d = 32;
  std::size_t reps = 5;
  if (argc > 1) n = std::strtoull(argv[1], nullptr, 10);
  if (argc > 2) avg_deg = std::strtoull(argv[2], nullptr, 10);
  if (argc > 3) d = std::strtoull(argv[3], nullptr, 10);
  if (argc > 4) reps = std::strtoull(argv[4], nullptr, 10);

  Rng rng(12345);
  std::vector<Triplet> triplets;
  triplets.reserve(n * avg_deg);
  for (std::size_t i = 0; i < n * avg_deg; ++i) {
    const auto src = static_cast<NodeId>(rng.uniform_int(0, (std::int64_t)n - 1));
    auto dst = static_cast<NodeId>(rng.uniform_int(0, (std::int64_t)n - 1));
    if (dst == src) dst = (dst + 1) % n;
    triplets.push_back({src, 0, dst});
  }
  const HeteroGraph g = build_graph(triplets, n, 1, true);
  const Matrix H = rng.normal_matrix(n, d);
  const Matrix X = rng.normal_matrix(n, d);

  std::printf("graph: %zu nodes, %zu stored edges, d=%zu, %zu reps\n", g.n,
              g.edge_count(), d, reps);

  const EnergyFamily quad = make_quadratic(d, 1.0, InputModel::identity_map());
  run_case("quadratic/gd", make_gd(0.05), quad, g, H, X, reps);

  const EnergyFamily hub = make_huber_fidelity(d, 1.0, InputModel::identity_map());
  run_case("huber/adam", make_adam(0.05), hub, g, H, X, reps);

  return 0;
}
