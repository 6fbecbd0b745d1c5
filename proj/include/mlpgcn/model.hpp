#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "mlpgcn/tensor.hpp"

namespace mlpgcn {

/// Weights of one parallel branch: two graph-convolution layers.
struct BranchWeights {
  DenseMatrix input;   // d×h
  DenseMatrix output;  // h×K

  friend bool operator==(const BranchWeights&, const BranchWeights&) = default;
};

/// All trainable parameters: per-branch layer weights plus one ranking weight
/// per branch. Also used to hold gradients of the same shape.
struct ModelParams {
  std::vector<BranchWeights> branches;
  std::vector<double> omega;

  std::size_t branch_count() const noexcept { return branches.size(); }
  std::size_t feature_dim() const;
  std::size_t hidden_width() const;
  std::size_t class_count() const;
  std::size_t parameter_count() const noexcept;

  /// Throws ConsistencyError unless the shapes chain d→h→K in every branch
  /// and there is one ω per branch.
  void validate() const;
  bool all_finite() const noexcept;

  /// Same shapes, every entry zero.
  ModelParams zeros_like() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Glorot-uniform layer weights and ω = 1/M each.
ModelParams init_params(std::size_t feature_dim, std::size_t hidden_width,
                        std::size_t class_count, std::size_t branch_count, std::uint64_t seed);

/// Inverted-dropout masks: every entry is 0 or 1/(1-p). One input mask and
/// one hidden mask, shared by all branches.
struct DropoutMasks {
  DenseMatrix input;   // N×d
  DenseMatrix hidden;  // N×h
};

DropoutMasks make_dropout_masks(std::size_t rows, std::size_t feature_dim,
                                std::size_t hidden_width, double rate, std::uint64_t seed);

/// Intermediate values of one branch kept for the backward pass.
struct BranchCache {
  DenseMatrix propagated_input;   // Â·(X∘mask)
  DenseMatrix pre_activation;     // Â·(X∘mask)·Θ₀
  DenseMatrix hidden;             // ReLU(pre_activation)
  DenseMatrix propagated_hidden;  // Â·(hidden∘mask)
  DenseMatrix logits;             // propagated_hidden·Θ₁
};

struct ForwardCache {
  std::vector<BranchCache> branches;
  DenseMatrix fused_logits;  // Σ ω_m·logits_m
  DenseMatrix probabilities;
  std::optional<DropoutMasks> dropout;
};

BranchCache branch_forward(const DenseMatrix& features, const SparseSymMatrix& propagation,
                           const BranchWeights& weights, const DropoutMasks* dropout = nullptr);

/// Z = Σ ω_m·H_m accumulated in branch order, and softmax_rows(Z).
std::pair<DenseMatrix, DenseMatrix> rank_combine(std::span<const DenseMatrix> branch_logits,
                                                 std::span<const double> omega);

/// Dropout configuration for a training-mode pass.
struct DropoutSpec {
  double rate = 0.0;
  std::uint64_t seed = 0;
};

/// Full model pass. Without a dropout spec this is evaluation mode and
/// deterministic.
ForwardCache forward(const DenseMatrix& features, std::span<const SparseSymMatrix> graphs,
                     const ModelParams& params, std::optional<DropoutSpec> dropout = std::nullopt);

/// Exact gradients of the masked mean cross-entropy plus l2_lambda·Σ‖Θ‖²_F
/// with respect to every Θ and ω. `labeled` selects the rows that enter the
/// loss; the mean is over those rows.
ModelParams backward(const ForwardCache& cache, std::span<const SparseSymMatrix> graphs, const DenseMatrix& targets,
                     std::span<const bool> labeled, const ModelParams& params,
                     double l2_lambda);

// Checkpoint: text container with dimensions, training seed, ω and every Θ at
// 17 significant digits (reads back bit-exact).
void save_checkpoint(std::ostream& out, const ModelParams& params, std::uint64_t seed);
std::pair<ModelParams, std::uint64_t> load_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     std::uint64_t seed);
std::pair<ModelParams, std::uint64_t> load_checkpoint(const std::filesystem::path& path);

}  // namespace mlpgcn
