#pragma once

#include <map>
#include <string>
#include <vector>

#include "ugnn/graph.hpp"
#include "ugnn/matrix.hpp"
#include "ugnn/prox.hpp"

namespace ugnn {

enum class EnergyKind {
  Quadratic,
  Heterophily,
  Huber,
  LogCosh,
  Kge,
  Lp,
  GrMlp,
  Nbf
};

enum class FidelityKind { None, Quadratic, HuberLoss, LogCoshLoss };

enum class ScoreKind { TransE, DistMult };

/// Input model pi(x; W): a single affine map, an optional second layer with
/// tanh in between, or the identity (features used as-is).
struct InputModel {
  bool is_identity = false;
  bool two_layer = false;
  Matrix W1, b1;  // d_x x d_h, 1 x d_h
  Matrix W2, b2;  // d_h x d, 1 x d (two-layer only)

  static InputModel identity_map();
  static InputModel affine(Matrix W, Matrix b);
  static InputModel mlp2(Matrix W1, Matrix b1, Matrix W2, Matrix b2);

  std::size_t in_dim() const;
  std::size_t out_dim() const;
  void apply_row(const double* x, double* out) const;
  Matrix apply(const Matrix& X) const;
};

/// One member of the lower-level energy family: a pairwise potential f over
/// edges, a smooth node potential kappa, and a nonsmooth tag eta realized by
/// the prox module. Pair values are defined on non-inverse relations
/// (rel < m); messages dispatch over all stored relations (rel < 2m), where
/// an inverse entry delivers the partial w.r.t. the original source.
struct EnergyFamily {
  EnergyKind kind = EnergyKind::Quadratic;
  std::string id;
  std::size_t d = 0;  // embedding dimension
  std::size_t m = 1;  // relation modulus expected on graphs
  ProxKind nonsmooth = ProxKind::Identity;

  double lambda_value = 1.0;
  double lambda_raw = 0.0;
  bool lambda_trainable = false;

  FidelityKind fidelity = FidelityKind::None;
  InputModel pi;
  double unit_penalty = 0.0;  // quadratic family option: a*(||h||^2-1)^2

  Matrix C;  // heterophily mixing matrix, d x d

  ScoreKind score = ScoreKind::DistMult;
  std::size_t kge_m = 0;  // positive relation count; m = 2*kge_m
  Matrix E;               // kge: kge_m x d, one row per positive relation

  Matrix Phi, Psi, Psi_inv;  // nbf bilinear maps, symmetric
  Matrix nbf_E;              // nbf: 2m x d materialized relation embeddings
  std::vector<Matrix> rel_W;  // nbf per-relation affine maps
  Matrix rel_b;               // nbf: 2m x d
  Matrix q;                   // nbf shared query embedding, 1 x d

  double lambda() const {
    return lambda_trainable ? softplus(lambda_raw) : lambda_value;
  }

  bool has_node_term() const {
    return kind == EnergyKind::Nbf || fidelity != FidelityKind::None;
  }
  std::size_t feature_dim() const;

  /// f(h_u, h_v; rel) for a non-inverse stored edge, rel < m.
  double pair_value(const double* hu, const double* hv, RelationId rel) const;
  void pair_grad_u(const double* hu, const double* hv, RelationId rel,
                   double* out) const;
  void pair_grad_v(const double* hu, const double* hv, RelationId rel,
                   double* out) const;

  /// The message function: partial of f w.r.t. the stored destination. For
  /// rel >= m the stored edge is an inverse entry and the result is the
  /// partial w.r.t. the original source.
  void grad_pair_dst(const double* h_src, const double* h_dst, RelationId rel,
                     double* out) const;

  double node_value(const double* h, const double* x) const;
  void grad_node(const double* h, const double* x, double* out) const;

  /// Named trainable tensors (a view by value; write back via set_param).
  std::map<std::string, Matrix> params() const;
  void set_param(const std::string& name, const Matrix& value);
};

EnergyFamily make_quadratic(std::size_t d, double lambda, InputModel pi,
                            bool lambda_trainable = false,
                            double unit_penalty = 0.0);
EnergyFamily make_heterophily(std::size_t d, double lambda, Matrix C,
                              InputModel pi, FidelityKind fid,
                              std::size_t m = 1,
                              bool lambda_trainable = false);
EnergyFamily make_huber_fidelity(std::size_t d, double lambda, InputModel pi);
EnergyFamily make_logcosh_fidelity(std::size_t d, double lambda, InputModel pi);
EnergyFamily make_kge_bce(std::size_t d, ScoreKind score, std::size_t kge_m,
                          Matrix E);
EnergyFamily make_lp_energy(std::size_t classes, double lambda);
EnergyFamily make_grmlp_energy(std::size_t classes, double lambda);
EnergyFamily make_nbf_bilinear(std::size_t d, std::size_t m, Matrix Phi,
                               Matrix Psi, std::vector<Matrix> rel_W,
                               Matrix rel_b, Matrix q,
                               ProxKind eta = ProxKind::NonNeg);

/// Sum of pair potentials over non-inverse stored edges plus node potentials,
/// in deterministic (edge-sorted, node-ascending) order.
double eval_energy(const EnergyFamily& e, const HeteroGraph& g,
                   const Matrix& H, const Matrix& X);

/// Reference gradient by direct summation over edges, no message/aggregate
/// decomposition. Oracle only.
Matrix full_gradient_dense(const EnergyFamily& e, const HeteroGraph& g,
                           const Matrix& H, const Matrix& X);

void validate_energy_inputs(const EnergyFamily& e, const HeteroGraph& g,
                            const Matrix& H, const Matrix& X);

}  // namespace ugnn
