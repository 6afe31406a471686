#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ugnn/descent.hpp"
#include "ugnn/energy.hpp"
#include "ugnn/graph.hpp"

namespace ugnn {

/// Deliberate defects the harness can inject into its reference path, proving
/// the checks can fail.
enum class FaultInjection { None, SignFlipMessage };

struct CheckResult {
  std::string check;  // oracle|locality|permutation|monotone|finite_diff
  double max_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

struct ConformanceReport {
  std::string pairing;  // "<family>/<algo>"
  std::vector<CheckResult> checks;
  // replay keys (family, algo, seed, trial) for every failing instance
  std::vector<std::string> replay;

  bool passed() const;
};

std::string report_text(const ConformanceReport& r);
std::string report_text(const std::vector<ConformanceReport>& rs);

/// One random problem instance: graph, energy with drawn parameters, start
/// embeddings, features, and (for label-clamping families) observed labels.
struct Instance {
  HeteroGraph g;
  EnergyFamily e;
  Matrix H;
  Matrix X;
  MaskedLabels labels;
};

/// Families the harness knows how to draw. "unitnorm" is the quadratic
/// energy constrained to the unit sphere through its prox.
std::vector<std::string> built_in_families();

Instance make_instance(const std::string& family, std::uint64_t seed);

/// The descent algorithm a family is paired with: the variant's knobs are
/// drawn from seed, the prox is the family's nonsmooth term.
DescentAlgorithm pairing_algorithm(const Instance& inst, AlgoKind kind,
                                   std::uint64_t seed);

/// Reference layer computed from the dense gradient, no message/aggregate
/// decomposition. The comparison baseline for the oracle check.
void dense_reference_step(const DescentAlgorithm& algo, const EnergyFamily& e,
                          const HeteroGraph& g, const Matrix& H,
                          const HiddenState& S, const Matrix& X, Matrix& H_out,
                          HiddenState& S_out,
                          FaultInjection fault = FaultInjection::None);

/// Runs the five checks (oracle equality, locality, permutation equivariance,
/// monotone descent under backtracking, finite differences) on `trials`
/// seeded random instances.
ConformanceReport check_pairing(const std::string& family, AlgoKind algo,
                                std::size_t trials, std::uint64_t seed,
                                FaultInjection fault = FaultInjection::None);

/// Every shipped pairing; all must pass with the default seed.
std::vector<ConformanceReport> run_all_pairings(std::size_t trials,
                                                std::uint64_t seed);

/// Demonstration that an outer nonlinearity over the edge sum breaks
/// locality: the dense gradient at a node reacts to a disconnected component.
struct RhoDemo {
  double far_effect_squared = 0.0;   // rho(t) = t^2
  double far_effect_linear = 0.0;    // rho(t) = 3t
  double far_effect_identity = 0.0;  // rho(t) = t
  bool squared_breaks_locality = false;
  bool linear_keeps_locality = false;
};

RhoDemo check_nonlinear_rho_counterexample();

}  // namespace ugnn
