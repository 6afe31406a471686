#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "ugnn/energy.hpp"
#include "ugnn/graph.hpp"
#include "ugnn/matrix.hpp"
#include "ugnn/prox.hpp"

namespace ugnn {

enum class AlgoKind { Gd, ProxGd, DegreeGd, Momentum, AdaGrad, RmsProp, Adam };

const char* algo_name(AlgoKind k);

struct DescentAlgorithm {
  AlgoKind kind = AlgoKind::Gd;
  double gamma = 0.1;
  double beta = 0.9;    // Momentum, RMSProp
  double beta1 = 0.9;   // Adam
  double beta2 = 0.999; // Adam
  double eps = 1e-8;    // AdaGrad, RMSProp, Adam
  ProxOperator prox;    // applied by ProxGd and Momentum only
  bool backtracking = false;

  bool uses_prox() const {
    return kind == AlgoKind::ProxGd || kind == AlgoKind::Momentum;
  }
  // number of n x d accumulators the variant carries
  std::size_t state_arity() const {
    switch (kind) {
      case AlgoKind::Gd:
      case AlgoKind::ProxGd:
      case AlgoKind::DegreeGd:
        return 0;
      case AlgoKind::Momentum:
      case AlgoKind::AdaGrad:
      case AlgoKind::RmsProp:
        return 1;
      case AlgoKind::Adam:
        return 2;
    }
    return 0;
  }
};

DescentAlgorithm make_gd(double gamma);
DescentAlgorithm make_prox_gd(double gamma, ProxOperator prox);
DescentAlgorithm make_degree_gd(double gamma);
DescentAlgorithm make_momentum(double gamma, double beta, ProxOperator prox);
DescentAlgorithm make_adagrad(double gamma, double eps = 1e-8);
DescentAlgorithm make_rmsprop(double gamma, double beta, double eps = 1e-8);
DescentAlgorithm make_adam(double gamma, double beta1 = 0.9,
                           double beta2 = 0.999, double eps = 1e-8);

struct HiddenState {
  Matrix s1;  // momentum velocity / squared-gradient accumulator / Adam first moment
  Matrix s2;  // Adam second moment
  std::size_t steps = 0;  // accepted step count, drives Adam bias correction
};

HiddenState make_hidden_state(const DescentAlgorithm& algo, std::size_t n,
                              std::size_t d);

bool hidden_state_bit_equal(const HiddenState& a, const HiddenState& b);

enum class Exec { Serial, Parallel };

enum class StepPhase { None, Message, Aggregate, Update };

const char* step_phase_name(StepPhase p);

struct StepResult {
  bool accepted = true;
  StepPhase bad_phase = StepPhase::None;  // set when a non-finite value appeared
  std::size_t halvings = 0;               // backtracking retries consumed
  double gamma_used = 0.0;
};

inline constexpr std::size_t kMaxHalvings = 40;

// One descent step: message per stored edge, per-node sum in stored order,
// then the variant's update rule. gamma_scale rescales the step size without
// touching hidden-state recursions.
StepResult step(const DescentAlgorithm& algo, const EnergyFamily& e,
                const HeteroGraph& g, const Matrix& H, const HiddenState& S,
                const Matrix& X, Matrix& H_out, HiddenState& S_out, Exec exec,
                double gamma_scale = 1.0);

struct Trajectory {
  std::vector<std::pair<std::size_t, double>> points;  // (step index, energy)
  std::vector<Matrix> states;  // filled when record_states is set
  std::size_t rejected_steps = 0;
};

struct UnrollResult {
  Matrix H;
  HiddenState S;
  Trajectory trajectory;
};

UnrollResult unroll(const DescentAlgorithm& algo, const EnergyFamily& e,
                    const HeteroGraph& g, Matrix H0, const Matrix& X,
                    std::size_t L, Exec exec, bool record_states = false);

std::string trajectory_csv(const Trajectory& t);

}  // namespace ugnn
