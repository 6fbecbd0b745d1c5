#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "mlpgcn/mask.hpp"
#include "mlpgcn/model.hpp"
#include "mlpgcn/tensor.hpp"

namespace mlpgcn {

struct TrainConfig {
  double learning_rate = 0.005;
  std::size_t max_epochs = 150;
  double dropout_rate = 0.3;
  double l2_lambda = 5e-4;
  std::size_t omega_warmup_epochs = 30;
  std::size_t early_stop_patience = 25;
  std::uint64_t seed = 0;
  std::size_t hidden_width = 16;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  /// Throws ParameterError on out-of-range knobs.
  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Whether the ranking weights are learned or pinned to given values.
struct OmegaMode {
  bool trainable = true;
  std::vector<double> fixed_values;

  static OmegaMode learned() { return {}; }
  static OmegaMode fixed(std::vector<double> values) { return {false, std::move(values)}; }

  friend bool operator==(const OmegaMode&, const OmegaMode&) = default;
};

/// Non-owning view of one transductive training problem: every subject's
/// features and one-hot targets, with masks choosing which rows drive the
/// loss and which are held out for validation.
struct TrainingSet {
  const DenseMatrix& features;
  const DenseMatrix& targets;
  std::span<const bool> train_mask;
  std::span<const bool> validation_mask;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  std::vector<double> omega;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;

  friend bool operator==(const TrainHistory&, const TrainHistory&) = default;
};

struct TrainResult {
  ModelParams params;  // snapshot with the lowest validation loss
  TrainHistory history;
};

/// Mean cross-entropy over the masked rows, log floored at 1e-12. Throws
/// ParameterError if the mask selects nothing.
double cross_entropy(const DenseMatrix& probabilities, const DenseMatrix& targets,
                     std::span<const bool> mask);

/// cross_entropy + l2_lambda·Σ‖Θ‖²_F (ω is not penalized).
double loss(const DenseMatrix& probabilities, const DenseMatrix& targets,
            std::span<const bool> mask, const ModelParams& params, double l2_lambda);

struct AdamOptions {
  double learning_rate = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First and second moment estimates, shaped like the parameters.
struct AdamState {
  ModelParams first;
  ModelParams second;

  static AdamState for_params(const ModelParams& params) {
    return {params.zeros_like(), params.zeros_like()};
  }
};

/// One bias-corrected Adam update at step t (1-based). When update_omega is
/// false the ranking weights and their moments are left untouched.
void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state,
               const AdamOptions& options, std::size_t step, bool update_omega = true);

/// Full-batch training. ω stays at its initial value for the first
/// omega_warmup_epochs, then joins the updates (trainable mode only). Early
/// stopping watches validation loss; the patience window only starts counting
/// once ω is released.
TrainResult train(const TrainingSet& data, std::span<const SparseSymMatrix> graphs,
                  const TrainConfig& config, const OmegaMode& omega_mode = OmegaMode::learned(),
                  std::optional<ModelParams> initial = std::nullopt);

struct GradCheckReport {
  double max_relative_error = 0.0;
  double max_relative_error_theta = 0.0;
  double max_relative_error_omega = 0.0;
  std::size_t probes = 0;
};

/// |a − n| / max(1e-8, |a| + |n|).
double gradient_relative_error(double analytic, double numeric) noexcept;

/// Fourth-order central finite differences of the regularized loss
/// (evaluation mode, no dropout) against backward(), for every parameter
/// entry. A probe whose stencil flips any ReLU pre-activation sign is retried
/// with the step divided by 10.
GradCheckReport grad_check(const DenseMatrix& features, const DenseMatrix& targets,
                           std::span<const bool> labeled, std::span<const SparseSymMatrix> graphs,
                           const ModelParams& params, double l2_lambda, double step = 1e-3);

/// A small random problem for derivative checks: Gaussian features, random
/// weighted graphs, random classes with roughly two thirds of subjects
/// labeled, Glorot weights and non-uniform ω.
struct GradCheckInstance {
  DenseMatrix features;
  DenseMatrix targets;
  Mask labeled;
  std::vector<SparseSymMatrix> graphs;
  ModelParams params;
};

GradCheckInstance random_gradcheck_instance(std::size_t subjects, std::size_t feature_dim,
                                            std::size_t hidden_width, std::size_t class_count,
                                            std::size_t branch_count, std::uint64_t seed);

/// `epoch,train_loss,val_loss,val_acc,omega_1,...,omega_M`, one row per epoch.
void write_history_csv(std::ostream& out, const TrainHistory& history);
void write_history_csv(const std::filesystem::path& path, const TrainHistory& history);
/// Parses the CSV written above (best_epoch is recomputed from val_loss).
TrainHistory read_history_csv(std::istream& in);
TrainHistory read_history_csv(const std::filesystem::path& path);

}  // namespace mlpgcn
