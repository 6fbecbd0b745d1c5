#include "mlpgcn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "mlpgcn/error.hpp"
#include "mlpgcn/random.hpp"

namespace mlpgcn {

MetaColumn MetaColumn::continuous(std::string name, std::vector<double> values) {
  MetaColumn col;
  col.name = std::move(name);
  col.kind = MetaKind::Continuous;
  col.values = std::move(values);
  return col;
}

MetaColumn MetaColumn::categorical(std::string name, const std::vector<std::string>& labels) {
  MetaColumn col;
  col.name = std::move(name);
  col.kind = MetaKind::Categorical;
  const std::set<std::string> alphabet(labels.begin(), labels.end());
  col.categories.assign(alphabet.begin(), alphabet.end());
  col.codes.reserve(labels.size());
  for (const auto& l : labels) {
    const auto it = std::lower_bound(col.categories.begin(), col.categories.end(), l);
    col.codes.push_back(static_cast<std::size_t>(it - col.categories.begin()));
  }
  return col;
}

// ---------------------------------------------------------------------------

EdgeSet::EdgeSet(std::size_t n, std::vector<std::pair<std::size_t, std::size_t>> edges)
    : n_(n), edges_(std::move(edges)) {
  for (auto& [i, j] : edges_) {
    if (i >= n_ || j >= n_) {
      throw ShapeError(fmt::format("EdgeSet: edge ({}, {}) outside {} vertices", i, j, n_));
    }
    if (i == j) throw ParameterError(fmt::format("EdgeSet: self-edge at vertex {}", i));
    if (i > j) std::swap(i, j);
  }
  std::sort(edges_.begin(), edges_.end());
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
}

bool EdgeSet::contains(std::size_t i, std::size_t j) const {
  if (i == j) return false;
  if (i > j) std::swap(i, j);
  return std::binary_search(edges_.begin(), edges_.end(), std::pair{i, j});
}

double EdgeSet::density() const noexcept {
  if (n_ < 2) return 0.0;
  return static_cast<double>(edges_.size()) / (0.5 * static_cast<double>(n_) * (n_ - 1));
}

DenseMatrix EdgeSet::adjacency() const {
  DenseMatrix a(n_, n_);
  for (const auto& [i, j] : edges_) {
    a(i, j) = 1.0;
    a(j, i) = 1.0;
  }
  return a;
}

// ---------------------------------------------------------------------------

EdgeSet build_edges(const MetaColumn& column, double beta) {
  const std::size_t n = column.size();
  if (n < 2) throw ParameterError(fmt::format("build_edges: column '{}' has {} subjects, need >= 2", column.name, n));
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  if (column.kind == MetaKind::Continuous) {
    if (!(beta > 0.0) || !std::isfinite(beta)) {
      throw ParameterError(fmt::format("build_edges: threshold for '{}' must be > 0, got {}", column.name, beta));
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(column.values[i])) {
        throw DataError(fmt::format("build_edges: column '{}' has non-finite value for subject {}", column.name, i));
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        if (std::abs(column.values[i] - column.values[j]) < beta) edges.emplace_back(i, j);
      }
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      if (column.codes[i] >= column.categories.size()) {
        throw DataError(fmt::format("build_edges: column '{}' subject {} has undeclared category code {}", column.name, i, column.codes[i]));
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        if (column.codes[i] == column.codes[j]) edges.emplace_back(i, j);
      }
    }
  }
  return EdgeSet(n, std::move(edges));
}

DenseMatrix similarity_matrix(const DenseMatrix& features, SimilarityMetric metric) {
  const std::size_t n = features.rows();
  const std::size_t d = features.cols();
  if (d < 2) throw ParameterError(fmt::format("similarity_matrix: need >= 2 features, got {}", d));
  if (!features.all_finite()) throw DataError("similarity_matrix: features contain non-finite values");

  // Rows scaled to unit norm (after centering for Pearson); Sim is then a dot product.
  DenseMatrix unit(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = features.row(i);
    auto u = unit.row(i);
    double mean = 0.0;
    if (metric == SimilarityMetric::Pearson) {
      for (double v : x) mean += v;
      mean /= static_cast<double>(d);
    }
    double norm_sq = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      u[k] = x[k] - mean;
      norm_sq += u[k] * u[k];
    }
    if (!(norm_sq > 0.0)) {
      throw DataError(fmt::format("similarity_matrix: subject {} has {} features", i,
                                  metric == SimilarityMetric::Pearson ? "zero-variance" : "all-zero"));
    }
    const double inv = 1.0 / std::sqrt(norm_sq);
    for (double& v : u) v *= inv;
  }

  DenseMatrix sim = matmul_nt(unit, unit);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) sim(i, j) = std::clamp(sim(i, j), -1.0, 1.0);
  }
  for (std::size_t i = 0; i < n; ++i) {
    sim(i, i) = 1.0;
    for (std::size_t j = 0; j < i; ++j) sim(i, j) = sim(j, i);
  }
  return sim;
}

SparseSymMatrix build_affinity(const DenseMatrix& similarity, const EdgeSet& edges) {
  const std::size_t n = edges.vertex_count();
  if (similarity.rows() != n || similarity.cols() != n) {
    throw ShapeError(fmt::format("build_affinity: similarity {} vs graph on {} vertices",
                                 similarity.shape_string(), n));
  }
  std::vector<SparseEntry> entries;
  entries.reserve(edges.edge_count());
  for (const auto& [i, j] : edges.edges()) {
    const double w = similarity(i, j);
    if (w > 0.0) entries.push_back({i, j, w});
  }
  return SparseSymMatrix::from_upper(n, entries);
}

SparseSymMatrix normalize(const SparseSymMatrix& weights) {
  const std::size_t n = weights.dim();
  const auto offsets = weights.row_offsets();
  const auto cols = weights.col_indices();
  const auto vals = weights.values();
  for (double v : vals) {
    if (v < 0.0) throw ParameterError("normalize: weights must be nonnegative");
  }

  std::vector<double> degree = weights.row_sums();
  for (double& d : degree) d += 1.0;
  std::vector<double> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) inv_sqrt[i] = 1.0 / std::sqrt(degree[i]);

  std::vector<std::size_t> out_offsets{0};
  std::vector<std::size_t> out_cols;
  std::vector<double> out_vals;
  out_cols.reserve(weights.nnz() + n);
  out_vals.reserve(weights.nnz() + n);
  for (std::size_t i = 0; i < n; ++i) {
    bool diagonal_done = false;
    auto emit = [&](std::size_t j, double w) {
      out_cols.push_back(j);
      // Same expression for (i, j) and (j, i) keeps Â bitwise symmetric.
      out_vals.push_back(w * (inv_sqrt[std::min(i, j)] * inv_sqrt[std::max(i, j)]));
    };
    for (std::size_t k = offsets[i]; k < offsets[i + 1]; ++k) {
      const std::size_t j = cols[k];
      if (!diagonal_done && j >= i) {
        if (j == i) {
          emit(i, vals[k] + 1.0);
          diagonal_done = true;
          continue;
        }
        emit(i, 1.0);
        diagonal_done = true;
      }
      emit(j, vals[k]);
    }
    if (!diagonal_done) emit(i, 1.0);
    out_offsets.push_back(out_cols.size());
  }
  return SparseSymMatrix(n, std::move(out_offsets), std::move(out_cols), std::move(out_vals));
}

AffinityGraph build_graph(const MetaColumn& column, const DenseMatrix& similarity, double beta) {
  AffinityGraph g;
  g.source = column.name;
  g.edges = build_edges(column, beta);
  g.weights = build_affinity(similarity, g.edges);
  g.normalized = normalize(g.weights);
  return g;
}

AffinityGraph random_graph(std::size_t n, double density, std::uint64_t seed) {
  if (n < 2) throw ParameterError(fmt::format("random_graph: need n >= 2, got {}", n));
  if (!(density > 0.0 && density <= 1.0)) {
    throw ParameterError(fmt::format("random_graph: density must lie in (0, 1], got {}", density));
  }
  Rng rng = make_rng({seed, 0x72616e64ULL});
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::vector<SparseEntry> entries;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      // Draw for every pair, including density 1, so the stream layout does not depend on density.
      if (uniform01(rng) < density) {
        edges.emplace_back(i, j);
        entries.push_back({i, j, 1.0});
      }
    }
  }
  AffinityGraph g;
  g.source = "random";
  g.edges = EdgeSet(n, std::move(edges));
  g.weights = SparseSymMatrix::from_upper(n, entries);
  g.normalized = normalize(g.weights);
  return g;
}

AffinityGraph graph_from_weights(std::string source, const SparseSymMatrix& weights) {
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (const auto& e : weights.upper_entries()) {
    if (e.row != e.col) edges.emplace_back(e.row, e.col);
  }
  AffinityGraph g;
  g.source = std::move(source);
  g.edges = EdgeSet(weights.dim(), std::move(edges));
  g.weights = weights;
  g.normalized = normalize(weights);
  return g;
}

// ---------------------------------------------------------------------------

void write_edge_list(std::ostream& out, const SparseSymMatrix& weights) {
  out << "n " << weights.dim() << '\n';
  for (const auto& e : weights.upper_entries()) {
    if (e.row == e.col) continue;
    out << fmt::format("{} {} {:.17g}\n", e.row, e.col, e.value);
  }
}

SparseSymMatrix read_edge_list(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") != std::string::npos) return true;
    }
    return false;
  };
  if (!next_line()) throw DataError("edge list: empty input");
  std::istringstream header(line);
  std::string tag;
  long long n = -1;
  if (!(header >> tag >> n) || tag != "n" || n < 0) {
    throw DataError(fmt::format("edge list line {}: expected header 'n <N>'", line_no));
  }
  const auto dim = static_cast<std::size_t>(n);
  std::vector<SparseEntry> entries;
  while (next_line()) {
    std::istringstream row(line);
    long long i = -1, j = -1;
    std::string weight_text;
    std::string extra;
    if (!(row >> i >> j >> weight_text) || (row >> extra)) {
      throw DataError(fmt::format("edge list line {}: expected 'i j weight'", line_no));
    }
    char* end = nullptr;
    const double w = std::strtod(weight_text.c_str(), &end);
    if (end != weight_text.c_str() + weight_text.size() || !std::isfinite(w)) {
      throw DataError(fmt::format("edge list line {}: bad weight '{}'", line_no, weight_text));
    }
    if (i < 0 || j < 0 || static_cast<std::size_t>(i) >= dim || static_cast<std::size_t>(j) >= dim || i >= j) {
      throw DataError(fmt::format("edge list line {}: need 0 <= i < j < {}", line_no, dim));
    }
    entries.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j), w});
  }
  return SparseSymMatrix::from_upper(dim, entries);
}

void write_edge_list(const std::filesystem::path& path, const SparseSymMatrix& weights) {
  std::ofstream out(path);
  if (!out) throw IoError(fmt::format("cannot open '{}' for writing", path.string()));
  write_edge_list(out, weights);
}

SparseSymMatrix read_edge_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open '{}'", path.string()));
  return read_edge_list(in);
}

}  // namespace mlpgcn
