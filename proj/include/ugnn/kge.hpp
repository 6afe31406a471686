#pragma once

#include <cstdint>
#include <vector>

#include "ugnn/energy.hpp"
#include "ugnn/graph.hpp"
#include "ugnn/matrix.hpp"

namespace ugnn {

/// Raw triplet score: DistMult sum_j hu*e*hv, TransE -||hu + e - hv||.
double kge_score(ScoreKind score, const double* hu, const double* er,
                 const double* hv, std::size_t d);

/// Positives plus sampled corruptions on a doubled relation space: relation r
/// keeps its id for positives and appears as r + kge_m for negatives, so the
/// polarity is carried by the stored relation.
struct NegativeGraph {
  HeteroGraph graph;  // inverse-augmented, m = 2*kge_m
  std::size_t kge_m = 0;
  std::vector<Triplet> positives;
  std::vector<Triplet> negatives;  // rel already shifted by kge_m
};

/// Corrupt one endpoint per sample (head with probability 1/2), rejecting
/// known edges, duplicates, and self loops; at most 1000 attempts per sample.
/// known_edges extends the rejection set beyond g's own triplets.
NegativeGraph build_negative_graph(
    const HeteroGraph& g, std::size_t k, std::uint64_t seed,
    const std::vector<Triplet>* known_edges = nullptr);

struct KgeTrainConfig {
  std::size_t d = 8;
  std::size_t epochs = 50;
  double inner_gamma = 0.1;  // step size of the unrolled descent
  double lr = 0.5;           // outer step on E
  bool outer_backtrack = true;
  std::uint64_t seed = 7;
};

inline constexpr double kKgeDivergenceLoss = 1e10;

struct KgeTrainResult {
  EnergyFamily energy;  // trained relation embeddings inside
  Matrix H0;            // frozen start (an all-zero start is stationary)
  Matrix H;             // final embeddings from the last unroll
  std::vector<double> loss_history;  // epochs+1 entries unless diverged
  bool diverged = false;
};

/// Minimize the link loss at the unrolled embeddings over E: the inner
/// network is `layers` plain gradient steps on the link energy, the outer
/// step differentiates through it.
KgeTrainResult train_kge(const NegativeGraph& ng, ScoreKind score,
                         std::size_t layers, const KgeTrainConfig& cfg);

struct InductiveConfig {
  std::size_t layers = 3;
  double gamma = 0.1;
  std::size_t negatives_per_edge = 2;
  std::size_t hits_k = 10;
  std::uint64_t seed = 11;
};

struct QueryRanking {
  Triplet query;
  std::size_t gold_rank = 0;  // pessimistic: ties count against the gold tail
  bool hit = false;
};

struct InductiveResult {
  Matrix H;  // n_total x d, base rows frozen
  std::vector<QueryRanking> rankings;
  double hits_at_k = 0.0;
  std::vector<NodeId> isolated;           // new nodes with no incident edges
  std::vector<double> restricted_losses;  // layers+1 values, non-increasing
};

/// Attach new nodes (ids >= H_base.rows) through new_triplets, refine only
/// their rows by backtracked gradient steps on the restricted link energy,
/// and rank every query tail by exact enumeration.
InductiveResult inductive_infer(const EnergyFamily& energy,
                                const Matrix& H_base,
                                const std::vector<Triplet>& base_positives,
                                std::size_t n_total,
                                const std::vector<Triplet>& new_triplets,
                                const InductiveConfig& cfg);

/// Conditional single-source unroll: features are zero except row `source`,
/// which holds q; each of the L sweeps applies
///   h_v' = prox(Phi[a_v + x_v] + Psi h_v),  a_v = sum (h_u + e_rel).
Matrix nbf_unroll(const EnergyFamily& nbf, const HeteroGraph& g, NodeId source,
                  std::size_t L);

}  // namespace ugnn
