#include "mlpgcn/model.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include <fmt/format.h>

#include "mlpgcn/error.hpp"
#include "mlpgcn/random.hpp"

namespace mlpgcn {

std::size_t ModelParams::feature_dim() const {
  if (branches.empty()) throw ConsistencyError("ModelParams: no branches");
  return branches.front().input.rows();
}

std::size_t ModelParams::hidden_width() const {
  if (branches.empty()) throw ConsistencyError("ModelParams: no branches");
  return branches.front().input.cols();
}

std::size_t ModelParams::class_count() const {
  if (branches.empty()) throw ConsistencyError("ModelParams: no branches");
  return branches.front().output.cols();
}

std::size_t ModelParams::parameter_count() const noexcept {
  std::size_t n = omega.size();
  for (const auto& b : branches) n += b.input.size() + b.output.size();
  return n;
}

void ModelParams::validate() const {
  if (branches.empty()) throw ConsistencyError("ModelParams: no branches");
  if (omega.size() != branches.size()) {
    throw ConsistencyError(fmt::format("ModelParams: {} ranking weights for {} branches",
                                       omega.size(), branches.size()));
  }
  const auto& first = branches.front();
  if (first.input.cols() != first.output.rows()) {
    throw ConsistencyError(fmt::format("ModelParams: layer shapes {} and {} do not chain",
                                       first.input.shape_string(), first.output.shape_string()));
  }
  for (std::size_t m = 1; m < branches.size(); ++m) {
    if (!branches[m].input.same_shape(first.input) || !branches[m].output.same_shape(first.output)) {
      throw ConsistencyError(fmt::format("ModelParams: branch {} shapes differ from branch 0", m));
    }
  }
}

bool ModelParams::all_finite() const noexcept {
  for (const auto& b : branches) {
    if (!b.input.all_finite() || !b.output.all_finite()) return false;
  }
  for (double w : omega) {
    if (!std::isfinite(w)) return false;
  }
  return true;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z;
  z.branches.reserve(branches.size());
  for (const auto& b : branches) {
    z.branches.push_back({DenseMatrix(b.input.rows(), b.input.cols()),
                          DenseMatrix(b.output.rows(), b.output.cols())});
  }
  z.omega.assign(omega.size(), 0.0);
  return z;
}

namespace {

DenseMatrix glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  DenseMatrix w(fan_in, fan_out);
  for (double& v : w.data()) v = bound * (2.0 * uniform01(rng) - 1.0);
  return w;
}

}  // namespace

ModelParams init_params(std::size_t feature_dim, std::size_t hidden_width,
                        std::size_t class_count, std::size_t branch_count, std::uint64_t seed) {
  if (feature_dim == 0 || hidden_width == 0 || branch_count == 0) {
    throw ParameterError("init_params: dimensions must be >= 1");
  }
  if (class_count < 2) throw ParameterError("init_params: need at least 2 classes");
  Rng rng = make_rng({seed, 0x696e6974ULL});
  ModelParams p;
  for (std::size_t m = 0; m < branch_count; ++m) {
    DenseMatrix input = glorot_uniform(feature_dim, hidden_width, rng);
    DenseMatrix output = glorot_uniform(hidden_width, class_count, rng);
    p.branches.push_back({std::move(input), std::move(output)});
  }
  p.omega.assign(branch_count, 1.0 / static_cast<double>(branch_count));
  return p;
}

DropoutMasks make_dropout_masks(std::size_t rows, std::size_t feature_dim,
                                std::size_t hidden_width, double rate, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ParameterError(fmt::format("dropout rate must lie in [0, 1), got {}", rate));
  }
  const double keep_scale = 1.0 / (1.0 - rate);
  Rng rng = make_rng({seed, 0x64726f70ULL});
  auto draw = [&](std::size_t r, std::size_t c) {
    DenseMatrix mask(r, c);
    for (double& v : mask.data()) v = uniform01(rng) >= rate ? keep_scale : 0.0;
    return mask;
  };
  DropoutMasks masks;
  masks.input = draw(rows, feature_dim);
  masks.hidden = draw(rows, hidden_width);
  return masks;
}

BranchCache branch_forward(const DenseMatrix& features, const SparseSymMatrix& propagation,
                           const BranchWeights& weights, const DropoutMasks* dropout) {
  if (propagation.dim() != features.rows()) {
    throw ShapeError(fmt::format("branch_forward: graph on {} nodes, features {}",
                                 propagation.dim(), features.shape_string()));
  }
  BranchCache c;
  c.propagated_input = dropout ? spmm(propagation, hadamard(features, dropout->input))
                               : spmm(propagation, features);
  c.pre_activation = matmul(c.propagated_input, weights.input);
  c.hidden = relu(c.pre_activation);
  c.propagated_hidden = dropout ? spmm(propagation, hadamard(c.hidden, dropout->hidden))
                                : spmm(propagation, c.hidden);
  c.logits = matmul(c.propagated_hidden, weights.output);
  return c;
}

std::pair<DenseMatrix, DenseMatrix> rank_combine(std::span<const DenseMatrix> branch_logits,
                                                 std::span<const double> omega) {
  if (branch_logits.empty()) throw ShapeError("rank_combine: no branch logits");
  if (branch_logits.size() != omega.size()) {
    throw ShapeError(fmt::format("rank_combine: {} branches but {} ranking weights",
                                 branch_logits.size(), omega.size()));
  }
  const auto& first = branch_logits.front();
  DenseMatrix fused(first.rows(), first.cols());
  for (std::size_t m = 0; m < branch_logits.size(); ++m) {
    if (!branch_logits[m].same_shape(first)) {
      throw ShapeError(fmt::format("rank_combine: branch {} logits {} vs {}", m,
                                   branch_logits[m].shape_string(), first.shape_string()));
    }
    axpy(omega[m], branch_logits[m], fused);
  }
  DenseMatrix probs = softmax_rows(fused);
  return {std::move(fused), std::move(probs)};
}

ForwardCache forward(const DenseMatrix& features, std::span<const SparseSymMatrix> graphs,
                     const ModelParams& params, std::optional<DropoutSpec> dropout) {
  params.validate();
  if (graphs.size() != params.branch_count()) {
    throw ShapeError(fmt::format("forward: {} graphs for {} branches", graphs.size(),
                                 params.branch_count()));
  }
  if (features.cols() != params.feature_dim()) {
    throw ShapeError(fmt::format("forward: features {} but first layer expects {} inputs",
                                 features.shape_string(), params.feature_dim()));
  }
  ForwardCache cache;
  if (dropout) {
    cache.dropout = make_dropout_masks(features.rows(), features.cols(), params.hidden_width(),
                                       dropout->rate, dropout->seed);
  }
  const DropoutMasks* masks = cache.dropout ? &*cache.dropout : nullptr;
  std::vector<DenseMatrix> logits;
  logits.reserve(graphs.size());
  for (std::size_t m = 0; m < graphs.size(); ++m) {
    cache.branches.push_back(branch_forward(features, graphs[m], params.branches[m], masks));
    logits.push_back(cache.branches.back().logits);
  }
  auto [fused, probs] = rank_combine(logits, params.omega);
  cache.fused_logits = std::move(fused);
  cache.probabilities = std::move(probs);
  return cache;
}

ModelParams backward(const ForwardCache& cache, std::span<const SparseSymMatrix> graphs,
                     const DenseMatrix& targets, std::span<const bool> labeled,
                     const ModelParams& params, double l2_lambda) {
  params.validate();
  const std::size_t n = cache.probabilities.rows();
  const std::size_t k = cache.probabilities.cols();
  if (cache.branches.size() != params.branch_count() || graphs.size() != params.branch_count()) {
    throw ConsistencyError(fmt::format("backward: cache has {} branches, params {}, graphs {}",
                                       cache.branches.size(), params.branch_count(), graphs.size()));
  }
  if (k != params.class_count() || targets.rows() != n || targets.cols() != k ||
      labeled.size() != n) {
    throw ConsistencyError(fmt::format(
        "backward: predictions {}, targets {}, mask of {} rows, model with {} classes",
        cache.probabilities.shape_string(), targets.shape_string(), labeled.size(),
        params.class_count()));
  }

  std::size_t labeled_count = 0;
  for (bool b : labeled) labeled_count += b ? 1 : 0;

  // Softmax + cross-entropy: ∂L/∂Z = (Ŷ − Y)/L on labeled rows, zero elsewhere.
  DenseMatrix d_fused(n, k);
  if (labeled_count > 0) {
    const double inv = 1.0 / static_cast<double>(labeled_count);
    for (std::size_t i = 0; i < n; ++i) {
      if (!labeled[i]) continue;
      for (std::size_t j = 0; j < k; ++j) {
        d_fused(i, j) = (cache.probabilities(i, j) - targets(i, j)) * inv;
      }
    }
  }

  ModelParams grads = params.zeros_like();
  for (std::size_t m = 0; m < params.branch_count(); ++m) {
    const BranchCache& bc = cache.branches[m];
    const BranchWeights& w = params.branches[m];
    if (bc.logits.rows() != n || bc.logits.cols() != k ||
        bc.pre_activation.cols() != w.input.cols()) {
      throw ConsistencyError(fmt::format("backward: branch {} cache does not match params", m));
    }
    grads.omega[m] = frobenius_dot(d_fused, bc.logits);

    const DenseMatrix d_logits = scale(d_fused, params.omega[m]);
    grads.branches[m].output = matmul_tn(bc.propagated_hidden, d_logits);

    // Â is symmetric, so Âᵀ·G = Â·G.
    DenseMatrix d_hidden = spmm(graphs[m], matmul_nt(d_logits, w.output));
    if (cache.dropout) d_hidden = hadamard(d_hidden, cache.dropout->hidden);
    auto dh = d_hidden.data();
    const auto pre = bc.pre_activation.data();
    for (std::size_t i = 0; i < dh.size(); ++i) {
      if (!(pre[i] > 0.0)) dh[i] = 0.0;
    }
    grads.branches[m].input = matmul_tn(bc.propagated_input, d_hidden);

    if (l2_lambda != 0.0) {
      axpy(2.0 * l2_lambda, w.input, grads.branches[m].input);
      axpy(2.0 * l2_lambda, w.output, grads.branches[m].output);
    }
  }
  return grads;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::string_view kCheckpointMagic = "mlpgcn-checkpoint";
constexpr int kCheckpointVersion = 1;

void write_matrix(std::ostream& out, std::string_view tag, std::size_t index,
                  const DenseMatrix& m) {
  out << fmt::format("{} {} {} {}\n", tag, index, m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto row = m.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) {
      out << (j ? " " : "") << fmt::format("{:.17g}", row[j]);
    }
    out << '\n';
  }
}

double parse_double(const std::string& token) {
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (token.empty() || end != token.c_str() + token.size() || !std::isfinite(v)) {
    throw DataError(fmt::format("checkpoint: bad number '{}'", token));
  }
  return v;
}

void expect_tag(std::istream& in, std::string_view tag) {
  std::string t;
  if (!(in >> t) || t != tag) {
    throw DataError(fmt::format("checkpoint: expected '{}', found '{}'", tag, t));
  }
}

DenseMatrix read_matrix(std::istream& in, std::string_view tag, std::size_t index,
                        std::size_t rows, std::size_t cols) {
  expect_tag(in, tag);
  std::size_t idx = 0, r = 0, c = 0;
  if (!(in >> idx >> r >> c) || idx != index || r != rows || c != cols) {
    throw DataError(fmt::format("checkpoint: {} block {} has unexpected header", tag, index));
  }
  std::vector<double> data(rows * cols);
  std::string token;
  for (double& v : data) {
    if (!(in >> token)) throw DataError(fmt::format("checkpoint: truncated {} block {}", tag, index));
    v = parse_double(token);
  }
  return DenseMatrix(rows, cols, std::move(data));
}

}  // namespace

void save_checkpoint(std::ostream& out, const ModelParams& params, std::uint64_t seed) {
  params.validate();
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  out << fmt::format("dims {} {} {} {}\n", params.feature_dim(), params.hidden_width(),
                     params.class_count(), params.branch_count());
  out << "seed " << seed << '\n';
  out << "omega";
  for (double w : params.omega) out << fmt::format(" {:.17g}", w);
  out << '\n';
  for (std::size_t m = 0; m < params.branch_count(); ++m) {
    write_matrix(out, "theta_input", m, params.branches[m].input);
    write_matrix(out, "theta_output", m, params.branches[m].output);
  }
}

std::pair<ModelParams, std::uint64_t> load_checkpoint(std::istream& in) {
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != kCheckpointMagic) {
    throw DataError("checkpoint: missing header");
  }
  if (version != kCheckpointVersion) {
    throw DataError(fmt::format("checkpoint: unsupported version {}", version));
  }
  expect_tag(in, "dims");
  std::size_t d = 0, h = 0, k = 0, m = 0;
  if (!(in >> d >> h >> k >> m) || d == 0 || h == 0 || k < 2 || m == 0) {
    throw DataError("checkpoint: bad dims line");
  }
  expect_tag(in, "seed");
  std::uint64_t seed = 0;
  if (!(in >> seed)) throw DataError("checkpoint: bad seed");
  expect_tag(in, "omega");
  ModelParams p;
  std::string token;
  for (std::size_t i = 0; i < m; ++i) {
    if (!(in >> token)) throw DataError("checkpoint: truncated omega");
    p.omega.push_back(parse_double(token));
  }
  for (std::size_t i = 0; i < m; ++i) {
    DenseMatrix input = read_matrix(in, "theta_input", i, d, h);
    DenseMatrix output = read_matrix(in, "theta_output", i, h, k);
    p.branches.push_back({std::move(input), std::move(output)});
  }
  if (in >> token) throw DataError(fmt::format("checkpoint: trailing content '{}'", token));
  return {std::move(p), seed};
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     std::uint64_t seed) {
  std::ofstream out(path);
  if (!out) throw IoError(fmt::format("cannot open '{}' for writing", path.string()));
  save_checkpoint(out, params, seed);
}

std::pair<ModelParams, std::uint64_t> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open '{}'", path.string()));
  return load_checkpoint(in);
}

}  // namespace mlpgcn
