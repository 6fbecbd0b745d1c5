#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mlpgcn/graph.hpp"
#include "mlpgcn/mask.hpp"
#include "mlpgcn/tensor.hpp"

namespace mlpgcn {

/// Subjects with features, typed metadata and (partially known) labels.
/// Unlabeled subjects have an all-zero target row.
struct Dataset {
  std::vector<std::string> subject_ids;
  DenseMatrix features;  // N×d
  std::vector<MetaColumn> meta;
  DenseMatrix targets;  // N×K one-hot
  Mask labeled;

  std::size_t size() const noexcept { return subject_ids.size(); }
  std::size_t class_count() const noexcept { return targets.cols(); }
  /// Class index per subject, -1 when unlabeled.
  std::vector<int> class_labels() const;
  /// Throws ConfigError when no column has this name.
  const MetaColumn& column(const std::string& name) const;
  /// Throws DataError on any broken invariant.
  void validate() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct DatasetPaths {
  std::filesystem::path features;
  std::filesystem::path meta;
  std::filesystem::path labels;

  /// features.csv, meta.csv and labels.csv inside `dir`.
  static DatasetPaths in_directory(const std::filesystem::path& dir);
};

/// Reads the three CSV files and joins them on subject_id.
///  - features: `subject_id,<d numeric columns>`, header row optional;
///  - meta: header `subject_id,<name>:<categorical|continuous>,...`;
///  - labels: `subject_id,class` with an optional header; subjects without a
///    row are unlabeled.
/// Subject order follows the features file.
Dataset load_dataset(const DatasetPaths& paths);

/// Writes the three files (values at 17 significant digits).
void write_dataset(const Dataset& dataset, const DatasetPaths& paths);

struct SynthDataset {
  Dataset dataset;
  MetaColumn informative;
  MetaColumn nuisance;
};

/// Two balanced classes with planted structure: the `informative` column
/// equals the label with probability 0.9, the `nuisance` column is a fair
/// coin, and feature j of a class-c subject has mean (c − ½)·strength·s_j
/// (s_j alternating +1, −1) plus noise·N(0, 1).
SynthDataset synth_generate(std::size_t n, std::size_t d, std::uint64_t seed,
                            double informative_strength, double noise);

}  // namespace mlpgcn
