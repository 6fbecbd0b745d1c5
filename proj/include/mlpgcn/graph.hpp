#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "mlpgcn/tensor.hpp"

namespace mlpgcn {

enum class MetaKind { Categorical, Continuous };

/// One per-subject metadata element (gender, age, acquisition site, ...).
/// Continuous columns use `values`; categorical columns store an index into
/// the sorted `categories` alphabet per subject in `codes`.
struct MetaColumn {
  std::string name;
  MetaKind kind = MetaKind::Continuous;
  std::vector<double> values;
  std::vector<std::size_t> codes;
  std::vector<std::string> categories;

  static MetaColumn continuous(std::string name, std::vector<double> values);
  /// Builds the alphabet from the distinct labels, sorted lexicographically.
  static MetaColumn categorical(std::string name, const std::vector<std::string>& labels);

  std::size_t size() const noexcept {
    return kind == MetaKind::Continuous ? values.size() : codes.size();
  }
  /// Category label of subject i (categorical columns only).
  const std::string& label(std::size_t i) const { return categories.at(codes.at(i)); }

  friend bool operator==(const MetaColumn&, const MetaColumn&) = default;
};

/// Undirected simple edge set over n vertices. Stored once per edge as
/// (i, j) with i < j, sorted, so symmetry and the absence of self-edges hold
/// by construction.
class EdgeSet {
 public:
  EdgeSet() = default;
  EdgeSet(std::size_t n, std::vector<std::pair<std::size_t, std::size_t>> edges);

  std::size_t vertex_count() const noexcept { return n_; }
  std::size_t edge_count() const noexcept { return edges_.size(); }
  const std::vector<std::pair<std::size_t, std::size_t>>& edges() const noexcept { return edges_; }
  bool contains(std::size_t i, std::size_t j) const;
  /// Fraction of the n(n-1)/2 possible edges that are present.
  double density() const noexcept;
  /// 0/1 symmetric adjacency with zero diagonal.
  DenseMatrix adjacency() const;

  friend bool operator==(const EdgeSet&, const EdgeSet&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges_;
};

enum class SimilarityMetric { Pearson, Cosine };

/// A population graph over subjects: which pairs are connected, their
/// similarity weights W, and the normalized propagation operator Â.
struct AffinityGraph {
  std::string source;
  EdgeSet edges;
  SparseSymMatrix weights;
  SparseSymMatrix normalized;
};

/// Default edge threshold for continuous metadata, in the column's own unit.
inline constexpr double kDefaultBeta = 2.0;

/// Connects i != j when |m_i - m_j| < beta (continuous) or m_i == m_j
/// (categorical; beta is ignored).
EdgeSet build_edges(const MetaColumn& column, double beta = kDefaultBeta);

/// Pairwise subject similarity of feature rows, clamped to [-1, 1] with a unit
/// diagonal. Throws DataError naming the first degenerate (constant or zero)
/// row.
DenseMatrix similarity_matrix(const DenseMatrix& features,
                              SimilarityMetric metric = SimilarityMetric::Pearson);

/// W = Sim ∘ E with negative products clamped to zero. Only strictly positive
/// weights are stored.
SparseSymMatrix build_affinity(const DenseMatrix& similarity, const EdgeSet& edges);

/// Â = D̃^{-1/2} (W + I) D̃^{-1/2}, D̃ the row sums of W + I. Any diagonal
/// already present in W is kept and the identity is added on top.
SparseSymMatrix normalize(const SparseSymMatrix& weights);

AffinityGraph build_graph(const MetaColumn& column, const DenseMatrix& similarity,
                          double beta = kDefaultBeta);

/// Erdős–Rényi graph with unit weights; each pair is connected independently
/// with probability `density`.
AffinityGraph random_graph(std::size_t n, double density, std::uint64_t seed);

/// Wraps externally supplied weights (e.g. an imported edge list).
AffinityGraph graph_from_weights(std::string source, const SparseSymMatrix& weights);

// Edge-list text format: a header line `n <N>`, then one `i j weight` line
// per undirected edge with i < j. Self-loops are not written. Weights use 17
// significant digits so reading back is exact.
void write_edge_list(std::ostream& out, const SparseSymMatrix& weights);
SparseSymMatrix read_edge_list(std::istream& in);
void write_edge_list(const std::filesystem::path& path, const SparseSymMatrix& weights);
SparseSymMatrix read_edge_list(const std::filesystem::path& path);

}  // namespace mlpgcn
