#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mlpgcn/dataset.hpp"
#include "mlpgcn/graph.hpp"
#include "mlpgcn/stats.hpp"
#include "mlpgcn/trainer.hpp"

namespace mlpgcn {

/// One arm of an experiment: which graphs feed the branches and whether the
/// ranking weights are learned.
struct ExperimentSpec {
  std::string name;
  /// Metadata element names, "random", or "file:<edge-list path>".
  std::vector<std::string> graph_sources;
  OmegaMode omega;
  TrainConfig train;
};

/// A whole cross-validation run as read from a config file.
struct ExperimentPlan {
  std::optional<DatasetPaths> dataset;
  std::uint64_t seed = 0;
  std::size_t repeats = 10;
  double val_fraction = 0.1;
  SimilarityMetric similarity = SimilarityMetric::Pearson;
  std::map<std::string, double> beta;  // per continuous element; default kDefaultBeta
  TrainConfig train;                   // defaults for every arm
  std::vector<ExperimentSpec> arms;
  std::vector<std::pair<std::string, std::string>> comparisons;

  /// Throws ConfigError on structural problems (no arms, duplicate names,
  /// fixed ω of the wrong length, ...).
  void validate() const;
};

/// Parses a JSON config. Relative dataset and graph-file paths are resolved
/// against `base_dir`. Unknown keys are rejected.
ExperimentPlan parse_experiment(const std::string& json_text,
                                const std::filesystem::path& base_dir = {});
ExperimentPlan load_experiment(const std::filesystem::path& path);
/// Canonical JSON rendering (sorted keys); parse_experiment reads it back.
std::string experiment_to_json(const ExperimentPlan& plan);

/// TrainConfig from a JSON object text, starting from `base` and overriding
/// the keys present.
TrainConfig parse_train_config(const std::string& json_text, const TrainConfig& base = {});

/// Builds one graph per source. A "random" source gets the edge density of
/// the first non-random source (0.1 when every source is random) and a seed
/// derived from `seed` and its position.
std::vector<AffinityGraph> build_graphs(const Dataset& dataset,
                                        const std::vector<std::string>& sources,
                                        const std::map<std::string, double>& beta,
                                        SimilarityMetric similarity, std::uint64_t seed);

/// Builds each arm's graphs, cross-validates every arm on shared splits and,
/// when `out_dir` is given, writes report.txt plus <arm>/graphs.txt and
/// <arm>/history_rep<k>.csv.
CvReport run_experiment(const Dataset& dataset, const ExperimentPlan& plan,
                        const std::optional<std::filesystem::path>& out_dir = std::nullopt);

/// The report text: the canonical config echo followed by write_cv_report.
void write_experiment_report(std::ostream& out, const ExperimentPlan& plan,
                             const CvReport& report);

// --- ranking summaries -----------------------------------------------------

struct RankSummary {
  std::string arm;
  std::vector<std::string> graph_names;
  std::size_t runs = 0;
  std::vector<double> mean_final_omega;  // last epoch of each run, averaged
  std::vector<double> min_omega;         // over every epoch of every run
  std::vector<double> max_omega;
  std::vector<std::size_t> order;        // graph indices by |mean final ω|, descending
  std::vector<std::size_t> first_place;  // runs in which each graph had the largest |ω|
  bool fixed = false;                    // ω never moved
};

/// Groups history files by their parent directory (the arm) and summarizes
/// ω per arm. Graph names come from a sibling graphs.txt when present,
/// otherwise graph_1..graph_M.
std::vector<RankSummary> rank_report(const std::vector<std::filesystem::path>& history_files);
void write_rank_report(std::ostream& out, const std::vector<RankSummary>& summaries);

}  // namespace mlpgcn
