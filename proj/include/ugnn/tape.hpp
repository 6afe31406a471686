#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ugnn/descent.hpp"
#include "ugnn/energy.hpp"
#include "ugnn/graph.hpp"
#include "ugnn/matrix.hpp"
#include "ugnn/prox.hpp"

namespace ugnn {

/// The fixed forward vocabulary. Everything the unrolled network does is one
/// of these, which keeps every backward rule small and individually testable.
enum class TapeOp {
  Input,       // leaf: constant or named parameter
  Gather,      // out[k] = in[index[k]]
  ScatterSum,  // out[v] = sum of in rows in [offsets[v], offsets[v+1])
  Affine,      // out = X * W (+ b); W optionally used transposed
  Add,         // elementwise; column (R x 1) and scalar (1 x 1) broadcast
  Mul,
  Tanh,
  HuberGrad,  // elementwise clamp to [-1, 1]
  Prox,       // prox operator application with stored input
  Sqrt,
  Recip
};

using IndexVec = std::shared_ptr<const std::vector<std::size_t>>;

struct TapeNode {
  TapeOp op = TapeOp::Input;
  int a = -1;          // first operand value id
  int b = -1;          // second operand (Add/Mul/Affine W)
  int c = -1;          // Affine bias (optional)
  IndexVec index;      // Gather targets or ScatterSum offsets
  std::size_t n_out = 0;  // ScatterSum output row count
  ProxOperator prox;
  double gamma = 1.0;
  bool transpose_w = false;
  std::string param;  // nonempty marks a named-parameter leaf
};

/// Record-and-replay reverse-mode tape over the fixed vocabulary. Values are
/// computed eagerly at record time and stored; replay re-executes the same
/// node list and must reproduce every value bit-exactly.
struct Tape {
  std::vector<TapeNode> nodes;
  std::vector<Matrix> values;

  int constant(Matrix v);
  int param(const std::string& name, Matrix v);
  int push(TapeNode nd);
  int gather(int src, IndexVec index);
  int scatter_sum(int src, IndexVec offsets, std::size_t n_out);
  int affine(int x, int W, int b = -1, bool transpose_w = false);
  int add(int a, int b);
  int mul(int a, int b);
  int tanh_op(int a);
  int huber_grad(int a);
  int prox_op(int a, ProxOperator p, double gamma);
  int sqrt_op(int a);
  int recip(int a);

  const Matrix& value(int id) const { return values[static_cast<std::size_t>(id)]; }
  std::size_t size() const { return nodes.size(); }
  /// id of a named parameter leaf, -1 if absent
  int param_id(const std::string& name) const;

  /// Re-execute the recorded program from its leaves and return the target
  /// value. Bit-identical to the stored one.
  Matrix replay(int target) const;

  /// Reverse sweep from output seeds (value id -> upstream gradient).
  /// Returns gradients for every named parameter on the tape.
  std::map<std::string, Matrix> backward(
      const std::map<int, Matrix>& seeds) const;
};

/// A recorded unroll: L descent steps of `algo` on the energy, expressed in
/// the tape vocabulary. When H0 is null the start is pi(X) (gradients then
/// flow into the input model both through the start and the node potential).
/// Rejects at record time whatever the vocabulary cannot express: inner
/// backtracking, and the bilinear family.
struct UnrollRecording {
  Tape tape;
  int x_id = -1;
  std::vector<int> h_ids;  // per layer, h_ids[0] = start, size L+1
  int h_final = -1;
};

UnrollRecording record_unroll(const EnergyFamily& e,
                              const DescentAlgorithm& algo,
                              const HeteroGraph& g, const Matrix& X,
                              std::size_t L, const Matrix* H0);

/// Per-edge score column (|edges| x 1) for the kge family at the embeddings
/// held in value id h, over the non-inverse stored edges of g.
int record_kge_scores(Tape& tape, const EnergyFamily& e, const HeteroGraph& g,
                      int h, int E_id);

}  // namespace ugnn
