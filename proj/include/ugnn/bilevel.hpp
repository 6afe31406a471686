#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ugnn/descent.hpp"
#include "ugnn/energy.hpp"
#include "ugnn/graph.hpp"
#include "ugnn/io.hpp"
#include "ugnn/tape.hpp"

namespace ugnn {

enum class InitKind { PiOfX, Zero };
enum class OuterOpt { Gd, Adam };

/// Linear classification head on the final embeddings.
struct Readout {
  Matrix W;  // d x classes
  Matrix b;  // 1 x classes
};

/// Upper-level model: an energy, the descent variant whose L unrolled steps
/// form the network, and the readout trained on top.
struct BilevelModel {
  EnergyFamily energy;
  DescentAlgorithm algo;
  std::size_t layers = 1;
  InitKind init = InitKind::PiOfX;
  Readout readout;
};

struct ForwardResult {
  UnrollRecording rec;
  int logits_id = -1;
  Matrix logits;  // n x classes
  Matrix H;       // final embeddings, n x d
  double loss = 0.0;
};

/// Record the unroll plus readout on one tape and evaluate the masked mean
/// cross entropy. mask selects the rows entering the loss; every selected row
/// must be labeled.
ForwardResult bilevel_forward(const BilevelModel& model, const HeteroGraph& g,
                              const Matrix& X, const LabelSet& labels,
                              const std::vector<char>& mask);

/// Reverse sweep of the recorded forward. Keys follow the upper-level
/// parameter names: theta.W, theta.b, pi.*, C, E, and lambda_raw (the
/// softplus preimage, chain rule applied).
std::map<std::string, Matrix> bilevel_backward(const BilevelModel& model,
                                               const ForwardResult& fr,
                                               const LabelSet& labels,
                                               const std::vector<char>& mask);

double masked_cross_entropy(const Matrix& logits, const LabelSet& labels,
                            const std::vector<char>& mask);
double masked_accuracy(const Matrix& logits, const LabelSet& labels,
                       const std::vector<char>& mask);
/// d(loss)/d(logits): (softmax - onehot) / |mask| on masked rows, else zero.
Matrix cross_entropy_seed(const Matrix& logits, const LabelSet& labels,
                          const std::vector<char>& mask);

struct TrainConfig {
  std::size_t epochs = 100;
  double lr = 0.01;
  OuterOpt opt = OuterOpt::Gd;
  bool outer_backtrack = false;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
};

struct TrainResult {
  BilevelModel model;
  std::vector<EpochMetrics> history;  // epochs+1 entries unless diverged
  bool diverged = false;
};

inline constexpr double kDivergenceLoss = 1e10;

/// Full-batch outer loop. Metrics are recorded before each update and once
/// more after the last one. An empty splits vector marks every labeled node
/// as training.
TrainResult train(BilevelModel model, const HeteroGraph& g, const Matrix& X,
                  const LabelSet& labels, const std::vector<Split>& splits,
                  const TrainConfig& cfg);

/// Nodes ranked by fidelity residual ||h_v - pi(x_v)||_2, largest first, ties
/// by ascending id. ranked holds the top round(fraction*n) ids. When the
/// planted set is given, detection_rate is the percentage recovered.
struct OutlierResult {
  std::vector<std::size_t> ranked;
  std::vector<double> residuals;  // per node
  double detection_rate = 0.0;
};

OutlierResult detect_outliers(const Matrix& H, const Matrix& X,
                              const InputModel& pi, double fraction,
                              const std::vector<std::size_t>* planted = nullptr);

}  // namespace ugnn
