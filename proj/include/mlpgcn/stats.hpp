#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mlpgcn/tensor.hpp"
#include "mlpgcn/trainer.hpp"

namespace mlpgcn {

/// Index of the row maximum; ties go to the lowest index.
std::size_t argmax_row(const DenseMatrix& m, std::size_t row);

/// Fraction of masked rows whose predicted argmax matches the target argmax.
double accuracy(const DenseMatrix& predictions, const DenseMatrix& targets,
                std::span<const bool> mask);

/// Mann–Whitney AUC: probability that a random positive scores above a random
/// negative, ties counting one half.
double auc(std::span<const double> scores, std::span<const bool> positive);

/// Regularized incomplete beta I_x(a, b) by continued fraction.
double regularized_incomplete_beta(double a, double b, double x);

/// P(|T| >= |t|) for Student's t with `dof` degrees of freedom.
double student_t_two_sided_p(double t, double dof);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  double dof = 0.0;
};

/// Paired t-test on a − b. Throws DegenerateInputError when the differences
/// have zero variance.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

double mean(std::span<const double> values);
/// Sample standard deviation (n − 1 denominator); 0 for fewer than 2 values.
double sample_std(std::span<const double> values);

struct SplitPlan {
  std::size_t repeat = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> train;       // sorted subject indices
  std::vector<std::size_t> validation;  // sorted subject indices

  friend bool operator==(const SplitPlan&, const SplitPlan&) = default;
};

/// Stratified random train/validation split of the labeled subjects.
/// `labels[i]` is subject i's class, or negative when unlabeled (such
/// subjects appear in neither part). Each class contributes
/// round(n_c·val_fraction) validation subjects, clamped to [1, n_c − 1].
SplitPlan stratified_mc_split(std::span<const int> labels, double val_fraction,
                              std::size_t repeat, std::uint64_t seed);

// --- Monte-Carlo cross-validation ----------------------------------------

/// One experiment arm with its graphs already built.
struct CvArm {
  std::string name;
  std::vector<std::string> graph_names;
  std::vector<SparseSymMatrix> graphs;
  OmegaMode omega;
  TrainConfig config;
};

struct CvOptions {
  std::size_t repeats = 10;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
  /// Arm-name pairs to t-test; empty means every pair in arm order.
  std::vector<std::pair<std::string, std::string>> comparisons;
};

struct ArmResult {
  std::string name;
  std::vector<std::string> graph_names;
  OmegaMode omega;
  std::vector<double> accuracy;  // per repeat
  std::vector<double> auc;       // per repeat; empty unless binary
  std::vector<TrainHistory> histories;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
  double mean_auc = 0.0;
  double std_auc = 0.0;
};

struct ArmComparison {
  std::string first;
  std::string second;
  std::string metric;
  std::optional<TTestResult> test;  // empty when degenerate
};

struct CvReport {
  std::size_t repeats = 0;
  double val_fraction = 0.0;
  std::uint64_t seed = 0;
  std::vector<ArmResult> arms;
  std::vector<ArmComparison> comparisons;

  const ArmResult& arm(const std::string& name) const;
};

/// For each repeat: one shared stratified split, then every arm trains on it
/// with training seed derived from (arm config seed, repeat) and is scored on
/// the validation subjects.
CvReport cross_validate(const DenseMatrix& features, std::span<const int> labels,
                        std::size_t class_count, std::span<const CvArm> arms,
                        const CvOptions& options);

/// Key-value text rendering of a report; stable byte-for-byte for equal input.
void write_cv_report(std::ostream& out, const CvReport& report);

}  // namespace mlpgcn
