#pragma once

#include <cstddef>
#include <vector>

#include "ugnn/descent.hpp"
#include "ugnn/energy.hpp"
#include "ugnn/graph.hpp"
#include "ugnn/matrix.hpp"

namespace ugnn {

enum class LpMode { Proximal, Standard };

struct LpConfig {
  double lambda = 1.0;
  double gamma = 0.1;
  std::size_t steps = 100;
  LpMode mode = LpMode::Proximal;
};

struct LpResult {
  Matrix H;
  std::vector<long> predicted;  // row argmax, ties to lowest; -1 = no mass
  Trajectory trajectory;        // energies in proximal mode; states always
};

/// Label propagation. Proximal mode runs clamped gradient steps on the label
/// energy; standard mode iterates the degree-normalized average with row
/// replacement on labeled nodes (the explicit lambda -> inf limit). Standard
/// mode requires a homogeneous graph. `clamp` disables the label clamp; the
/// overparameterized equivalence uses the unclamped trajectory.
LpResult label_propagate(const HeteroGraph& g, const LabelSet& labels,
                         const LpConfig& cfg, const Matrix* H0 = nullptr,
                         bool clamp = true);

/// Row argmax with -1 for rows of exact zeros (nodes no mass ever reached).
std::vector<long> predict_classes(const Matrix& H);

struct OrthoBasis {
  Matrix Q;  // n x rank, orthonormal columns, first nonzero entry positive
  std::size_t rank = 0;
  Matrix R;  // rank x d_x change-of-basis record, X = Q R
};

/// Modified Gram-Schmidt with column dropping below 1e-10; rejects an
/// all-zero input.
OrthoBasis orthonormalize(const Matrix& X);

struct GrMlpConfig {
  double lambda = 1.0;
  double gamma = 0.1;
  std::size_t steps = 100;
};

struct GrMlpResult {
  OrthoBasis basis;
  std::vector<Matrix> W_path;   // steps+1 weight iterates, rank x c
  std::vector<Matrix> H_from_w; // Q W at every step
  std::vector<Matrix> H_embed;  // projected embedding recursion
  double max_path_gap = 0.0;    // max |Q W - H_embed| over the run
};

/// Graph-regularized linear model: the weight-space gradient recursion and
/// the induced projected embedding recursion, computed side by side on the
/// orthonormalized features. H0 defaults to the one-hot label matrix.
GrMlpResult gr_mlp_train(const HeteroGraph& g, const Matrix& X,
                         const LabelSet& labels, const GrMlpConfig& cfg,
                         const Matrix* H0 = nullptr);

}  // namespace ugnn
