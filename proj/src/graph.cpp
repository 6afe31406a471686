#include "ugnn/graph.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace ugnn {

namespace {

std::string triplet_str(const Triplet& t) {
  return "(" + std::to_string(t.src) + "," + std::to_string(t.rel) + "," +
         std::to_string(t.dst) + ")";
}

}  // namespace

HeteroGraph build_graph(const std::vector<Triplet>& triplets, std::size_t n,
                        std::size_t m, bool augment_inverse,
                        bool allow_self_loops) {
  for (const Triplet& t : triplets) {
    if (t.src >= n || t.dst >= n || t.rel >= m)
      throw std::invalid_argument("build_graph: index out of range at triplet " +
                                  triplet_str(t));
    if (t.src == t.dst && !allow_self_loops)
      throw std::invalid_argument("build_graph: self-loop not permitted at " +
                                  triplet_str(t));
  }

  std::vector<Triplet> all;
  all.reserve(triplets.size() * (augment_inverse ? 2 : 1));
  all.insert(all.end(), triplets.begin(), triplets.end());
  if (augment_inverse)
    for (const Triplet& t : triplets)
      all.push_back(Triplet{t.dst, t.rel + m, t.src});

  auto key = [](const Triplet& t) {
    return std::tuple(t.dst, t.src, t.rel);
  };
  std::sort(all.begin(), all.end(), [&](const Triplet& a, const Triplet& b) {
    return key(a) < key(b);
  });
  all.erase(std::unique(all.begin(), all.end()), all.end());

  HeteroGraph g;
  g.n = n;
  g.m = m;
  g.inverse_augmented = augment_inverse;
  g.offsets.assign(n + 1, 0);
  g.edges.reserve(all.size());
  std::size_t pos = 0;
  for (NodeId v = 0; v < n; ++v) {
    g.offsets[v] = pos;
    while (pos < all.size() && all[pos].dst == v) {
      g.edges.push_back(InEdge{all[pos].src, all[pos].rel});
      ++pos;
    }
  }
  g.offsets[n] = pos;
  return g;
}

NodeId HeteroGraph::edge_dst(std::size_t e) const {
  // binary search over the offset table
  std::size_t lo = 0, hi = n;
  while (lo + 1 < hi) {
    const std::size_t mid = (lo + hi) / 2;
    if (offsets[mid] <= e)
      lo = mid;
    else
      hi = mid;
  }
  return lo;
}

std::vector<Triplet> HeteroGraph::stored_triplets() const {
  std::vector<Triplet> out;
  out.reserve(edges.size());
  for (NodeId v = 0; v < n; ++v)
    for (const InEdge* it = nbr_begin(v); it != nbr_end(v); ++it)
      out.push_back(Triplet{it->src, it->rel, v});
  return out;
}

std::vector<Triplet> HeteroGraph::original_triplets() const {
  std::vector<Triplet> out;
  for (NodeId v = 0; v < n; ++v)
    for (const InEdge* it = nbr_begin(v); it != nbr_end(v); ++it)
      if (it->rel < m) out.push_back(Triplet{it->src, it->rel, v});
  return out;
}

void Permutation::validate() const {
  std::vector<char> seen(map.size(), 0);
  for (NodeId v : map) {
    if (v >= map.size() || seen[v])
      throw std::invalid_argument("permutation is not a bijection");
    seen[v] = 1;
  }
}

Permutation Permutation::inverse() const {
  Permutation inv;
  inv.map.resize(map.size());
  for (std::size_t i = 0; i < map.size(); ++i) inv.map[map[i]] = i;
  return inv;
}

std::pair<HeteroGraph, Matrix> permute(const HeteroGraph& g, const Matrix& H,
                                       const Permutation& p) {
  if (p.size() != g.n) throw std::invalid_argument("permute: size mismatch");
  p.validate();
  if (H.rows != g.n) throw std::invalid_argument("permute: H row mismatch");

  // relabel the non-inverse edges and rebuild so augmentation stays canonical
  std::vector<Triplet> relabeled;
  for (const Triplet& t : g.original_triplets())
    relabeled.push_back(Triplet{p.map[t.src], t.rel, p.map[t.dst]});
  bool self_loops = false;
  for (const Triplet& t : relabeled) self_loops |= (t.src == t.dst);
  HeteroGraph pg =
      build_graph(relabeled, g.n, g.m, g.inverse_augmented, self_loops);

  Matrix PH(H.rows, H.cols);
  for (std::size_t v = 0; v < g.n; ++v)
    std::copy(H.row(v), H.row(v) + H.cols, PH.row(p.map[v]));
  return {std::move(pg), std::move(PH)};
}

Matrix SparseMatrix::multiply(const Matrix& H) const {
  if (H.rows != n) throw std::invalid_argument("sparse multiply: shape");
  Matrix out(n, H.cols);
  for (std::size_t i = 0; i < n; ++i) {
    double* or_ = out.row(i);
    for (std::size_t k = offsets[i]; k < offsets[i + 1]; ++k) {
      const double* hr = H.row(cols[k]);
      const double v = vals[k];
      for (std::size_t j = 0; j < H.cols; ++j) or_[j] += v * hr[j];
    }
  }
  return out;
}

Matrix SparseMatrix::dense() const {
  Matrix d(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = offsets[i]; k < offsets[i + 1]; ++k)
      d.at(i, cols[k]) += vals[k];
  return d;
}

SparseMatrix laplacian(const HeteroGraph& g) {
  if (g.m > 1)
    throw std::invalid_argument(
        "laplacian: defined for homogeneous graphs only (m=1)");

  // undirected adjacency from every stored edge, direction collapsed
  std::vector<std::vector<std::size_t>> adj(g.n);
  for (NodeId v = 0; v < g.n; ++v)
    for (const InEdge* it = g.nbr_begin(v); it != g.nbr_end(v); ++it) {
      if (it->src == v) continue;  // self-loops do not enter L
      adj[v].push_back(it->src);
      adj[it->src].push_back(v);
    }
  for (auto& lst : adj) {
    std::sort(lst.begin(), lst.end());
    lst.erase(std::unique(lst.begin(), lst.end()), lst.end());
  }

  SparseMatrix L;
  L.n = g.n;
  L.offsets.assign(g.n + 1, 0);
  for (std::size_t i = 0; i < g.n; ++i) {
    L.offsets[i] = L.cols.size();
    const double deg = static_cast<double>(adj[i].size());
    bool diag_done = false;
    for (std::size_t u : adj[i]) {
      if (!diag_done && u > i) {
        L.cols.push_back(i);
        L.vals.push_back(deg);
        diag_done = true;
      }
      L.cols.push_back(u);
      L.vals.push_back(-1.0);
    }
    if (!diag_done) {
      L.cols.push_back(i);
      L.vals.push_back(deg);
    }
  }
  L.offsets[g.n] = L.cols.size();
  return L;
}

std::size_t LabelSet::observed_count() const {
  std::size_t c = 0;
  for (char o : observed) c += (o != 0);
  return c;
}

std::size_t LabelSet::num_classes() const {
  long mx = -1;
  for (std::size_t v = 0; v < class_of.size(); ++v)
    if (observed[v]) mx = std::max(mx, class_of[v]);
  return static_cast<std::size_t>(mx + 1);
}

MaskedLabels masked_labels(const LabelSet& labels, std::size_t num_classes) {
  const std::size_t n = labels.size();
  std::size_t c = num_classes ? num_classes : labels.num_classes();
  if (c == 0) throw std::invalid_argument("masked_labels: no observed labels");
  MaskedLabels out;
  out.Y = Matrix(n, c);
  out.mask.assign(n, 0);
  for (std::size_t v = 0; v < n; ++v) {
    if (!labels.observed[v]) continue;
    const long cls = labels.class_of[v];
    if (cls < 0 || static_cast<std::size_t>(cls) >= c)
      throw std::invalid_argument("masked_labels: class id out of range at node " +
                                  std::to_string(v));
    out.Y.at(v, static_cast<std::size_t>(cls)) = 1.0;
    out.mask[v] = 1;
  }
  return out;
}

}  // namespace ugnn
