#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "ugnn/matrix.hpp"

namespace ugnn {

using NodeId = std::size_t;
using RelationId = std::size_t;

struct Triplet {
  NodeId src = 0;
  RelationId rel = 0;
  NodeId dst = 0;

  friend bool operator==(const Triplet&, const Triplet&) = default;
};

/// One stored in-edge of a destination node.
struct InEdge {
  NodeId src = 0;
  RelationId rel = 0;

  friend bool operator==(const InEdge&, const InEdge&) = default;
};

/// Immutable heterogeneous graph, destination-indexed. Neighborhood lists are
/// duplicate-free and sorted ascending by (src, rel), which fixes the
/// aggregation order. With inverse augmentation every original edge (u,r,v),
/// r < m, also appears as (v, r+m, u).
struct HeteroGraph {
  std::size_t n = 0;
  std::size_t m = 0;  // original relation count; stored rel < 2m if augmented
  bool inverse_augmented = false;
  std::vector<std::size_t> offsets;  // n+1 entries into edges
  std::vector<InEdge> edges;         // grouped by destination

  std::size_t edge_count() const { return edges.size(); }
  std::size_t in_degree(NodeId v) const { return offsets[v + 1] - offsets[v]; }
  std::size_t relation_count() const { return inverse_augmented ? 2 * m : m; }

  const InEdge* nbr_begin(NodeId v) const { return edges.data() + offsets[v]; }
  const InEdge* nbr_end(NodeId v) const {
    return edges.data() + offsets[v + 1];
  }

  /// dst of the stored edge at flat index e
  NodeId edge_dst(std::size_t e) const;

  /// All stored edges as triplets, destination-grouped order.
  std::vector<Triplet> stored_triplets() const;
  /// Non-inverse stored edges only (rel < m).
  std::vector<Triplet> original_triplets() const;

  bool is_inverse(RelationId rel) const {
    return inverse_augmented && rel >= m;
  }
};

HeteroGraph build_graph(const std::vector<Triplet>& triplets, std::size_t n,
                        std::size_t m, bool augment_inverse,
                        bool allow_self_loops = false);

struct Permutation {
  std::vector<NodeId> map;  // map[old_id] = new_id

  std::size_t size() const { return map.size(); }
  Permutation inverse() const;
  void validate() const;
};

std::pair<HeteroGraph, Matrix> permute(const HeteroGraph& g, const Matrix& H,
                                       const Permutation& p);

/// Row-compressed sparse n x n matrix (for the graph Laplacian).
struct SparseMatrix {
  std::size_t n = 0;
  std::vector<std::size_t> offsets;  // n+1
  std::vector<std::size_t> cols;
  std::vector<double> vals;

  Matrix multiply(const Matrix& H) const;
  Matrix dense() const;
};

/// L = D - A for the undirected homogeneous view of g; rejects m > 1.
SparseMatrix laplacian(const HeteroGraph& g);

using NodeFeatures = Matrix;

/// Per-node class ids with an observed mask over the labeled subset.
struct LabelSet {
  std::vector<long> class_of;   // -1 where unobserved
  std::vector<char> observed;   // size n

  std::size_t size() const { return class_of.size(); }
  std::size_t observed_count() const;
  std::size_t num_classes() const;  // max observed class id + 1
};

/// Dense one-hot label matrix with zero rows off the mask.
struct MaskedLabels {
  Matrix Y;                // n x c
  std::vector<char> mask;  // size n

  std::size_t n() const { return Y.rows; }
  std::size_t classes() const { return Y.cols; }
};

MaskedLabels masked_labels(const LabelSet& labels, std::size_t num_classes = 0);

}  // namespace ugnn
