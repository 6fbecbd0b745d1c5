#include "mlpgcn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <unordered_map>

#include <fmt/format.h>

#include "mlpgcn/error.hpp"
#include "mlpgcn/random.hpp"

namespace mlpgcn {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

struct CsvRow {
  std::size_t line = 0;
  std::vector<std::string> cells;
};

std::vector<CsvRow> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open '{}'", path.string()));
  std::vector<CsvRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    CsvRow row{line_no, {}};
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.cells.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') row.cells.emplace_back();
    rows.push_back(std::move(row));
  }
  return rows;
}

std::optional<double> parse_number(const std::string& text) {
  if (text.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (end != text.c_str() + text.size()) return std::nullopt;
  return v;
}

double require_number(const std::string& text, const std::filesystem::path& path,
                      std::size_t line, std::size_t column) {
  const auto v = parse_number(text);
  if (!v || !std::isfinite(*v)) {
    throw DataError(fmt::format("{}: line {}, column {}: '{}' is not a finite number",
                                path.string(), line, column + 1, text));
  }
  return *v;
}

bool is_numeric_row(const CsvRow& row) {
  return row.cells.size() >= 2 &&
         std::all_of(row.cells.begin() + 1, row.cells.end(),
                     [](const std::string& c) { return parse_number(c).has_value(); });
}

std::ofstream open_for_writing(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError(fmt::format("cannot open '{}' for writing", path.string()));
  return out;
}

}  // namespace

std::vector<int> Dataset::class_labels() const {
  std::vector<int> labels(size(), -1);
  for (std::size_t i = 0; i < size(); ++i) {
    if (labeled[i]) {
      for (std::size_t k = 0; k < targets.cols(); ++k) {
        if (targets(i, k) == 1.0) labels[i] = static_cast<int>(k);
      }
    }
  }
  return labels;
}

const MetaColumn& Dataset::column(const std::string& name) const {
  for (const auto& c : meta) {
    if (c.name == name) return c;
  }
  throw ConfigError(fmt::format("unknown metadata element '{}'", name));
}

void Dataset::validate() const {
  const std::size_t n = size();
  if (features.rows() != n || targets.rows() != n || labeled.size() != n) {
    throw DataError(fmt::format("dataset: {} ids, features {}, targets {}, mask of {}", n,
                                features.shape_string(), targets.shape_string(), labeled.size()));
  }
  if (targets.cols() < 2) throw DataError("dataset: need at least 2 classes");
  for (const auto& c : meta) {
    if (c.size() != n) {
      throw DataError(fmt::format("dataset: metadata '{}' has {} entries for {} subjects", c.name, c.size(), n));
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (double v : targets.row(i)) {
      if (v != 0.0 && v != 1.0) throw DataError(fmt::format("dataset: subject {} target is not one-hot", i));
      sum += v;
    }
    if (sum != (labeled[i] ? 1.0 : 0.0)) {
      throw DataError(fmt::format("dataset: subject {} target row sums to {}", i, sum));
    }
  }
}

DatasetPaths DatasetPaths::in_directory(const std::filesystem::path& dir) {
  return {dir / "features.csv", dir / "meta.csv", dir / "labels.csv"};
}

Dataset load_dataset(const DatasetPaths& paths) {
  Dataset ds;

  // Features.
  auto rows = read_csv(paths.features);
  if (rows.empty()) throw DataError(fmt::format("{}: no rows", paths.features.string()));
  const bool has_header = !is_numeric_row(rows.front());
  const std::size_t first = has_header ? 1 : 0;
  const std::size_t width = rows.front().cells.size();
  if (width < 2) throw DataError(fmt::format("{}: need subject_id plus at least one feature", paths.features.string()));
  const std::size_t d = width - 1;
  std::unordered_map<std::string, std::size_t> index;
  std::vector<double> values;
  for (std::size_t r = first; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.cells.size() != width) {
      throw DataError(fmt::format("{}: line {}: {} fields, expected {}", paths.features.string(),
                                  row.line, row.cells.size(), width));
    }
    const std::string& id = row.cells[0];
    if (id.empty()) throw DataError(fmt::format("{}: line {}: empty subject_id", paths.features.string(), row.line));
    if (!index.emplace(id, ds.subject_ids.size()).second) {
      throw DataError(fmt::format("{}: line {}: duplicate subject_id '{}'", paths.features.string(), row.line, id));
    }
    ds.subject_ids.push_back(id);
    for (std::size_t c = 1; c < width; ++c) values.push_back(require_number(row.cells[c], paths.features, row.line, c));
  }
  const std::size_t n = ds.subject_ids.size();
  if (n == 0) throw DataError(fmt::format("{}: no subjects", paths.features.string()));
  ds.features = DenseMatrix(n, d, std::move(values));

  // Metadata.
  rows = read_csv(paths.meta);
  if (rows.empty()) throw DataError(fmt::format("{}: missing header", paths.meta.string()));
  const auto& header = rows.front().cells;
  if (header.empty() || header[0] != "subject_id") {
    throw DataError(fmt::format("{}: header must start with subject_id", paths.meta.string()));
  }
  struct ColumnSpec {
    std::string name;
    MetaKind kind;
  };
  std::vector<ColumnSpec> specs;
  for (std::size_t c = 1; c < header.size(); ++c) {
    const auto colon = header[c].rfind(':');
    if (colon == std::string::npos) {
      throw DataError(fmt::format("{}: column '{}' must be declared as name:kind", paths.meta.string(), header[c]));
    }
    const std::string name = header[c].substr(0, colon);
    const std::string kind = header[c].substr(colon + 1);
    if (name.empty()) throw DataError(fmt::format("{}: empty column name", paths.meta.string()));
    if (kind == "categorical") {
      specs.push_back({name, MetaKind::Categorical});
    } else if (kind == "continuous") {
      specs.push_back({name, MetaKind::Continuous});
    } else {
      throw DataError(fmt::format("{}: column '{}' has unknown kind '{}'", paths.meta.string(), name, kind));
    }
  }
  std::vector<std::vector<std::string>> raw(specs.size(), std::vector<std::string>(n));
  std::vector<std::optional<std::size_t>> meta_line(n);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.cells.size() != header.size()) {
      throw DataError(fmt::format("{}: line {}: {} fields, expected {}", paths.meta.string(), row.line,
                                  row.cells.size(), header.size()));
    }
    const auto it = index.find(row.cells[0]);
    if (it == index.end()) {
      throw DataError(fmt::format("{}: line {}: subject '{}' has no features", paths.meta.string(), row.line, row.cells[0]));
    }
    if (meta_line[it->second]) {
      throw DataError(fmt::format("{}: line {}: duplicate subject_id '{}'", paths.meta.string(), row.line, row.cells[0]));
    }
    meta_line[it->second] = row.line;
    for (std::size_t c = 0; c < specs.size(); ++c) raw[c][it->second] = row.cells[c + 1];
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!meta_line[i]) {
      throw DataError(fmt::format("{}: subject '{}' has no metadata row ({} subjects with features, {} with metadata)",
                                  paths.meta.string(), ds.subject_ids[i], n, rows.size() - 1));
    }
  }
  for (std::size_t c = 0; c < specs.size(); ++c) {
    if (specs[c].kind == MetaKind::Categorical) {
      for (std::size_t i = 0; i < n; ++i) {
        if (raw[c][i].empty()) {
          throw DataError(fmt::format("{}: line {}: empty category for '{}'", paths.meta.string(), *meta_line[i], specs[c].name));
        }
      }
      ds.meta.push_back(MetaColumn::categorical(specs[c].name, raw[c]));
    } else {
      std::vector<double> v(n);
      for (std::size_t i = 0; i < n; ++i) v[i] = require_number(raw[c][i], paths.meta, *meta_line[i], c + 1);
      ds.meta.push_back(MetaColumn::continuous(specs[c].name, std::move(v)));
    }
  }

  // Labels.
  rows = read_csv(paths.labels);
  std::vector<int> cls(n, -1);
  int max_class = -1;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.cells.size() != 2) {
      throw DataError(fmt::format("{}: line {}: expected subject_id,class", paths.labels.string(), row.line));
    }
    const auto v = parse_number(row.cells[1]);
    if (!v) {
      if (r == 0) continue;  // header
      throw DataError(fmt::format("{}: line {}: class '{}' is not an integer", paths.labels.string(), row.line, row.cells[1]));
    }
    if (*v < 0 || *v != std::floor(*v) || *v > 1e6) {
      throw DataError(fmt::format("{}: line {}: class '{}' must be a nonnegative integer", paths.labels.string(), row.line, row.cells[1]));
    }
    const auto it = index.find(row.cells[0]);
    if (it == index.end()) {
      throw DataError(fmt::format("{}: line {}: subject '{}' has no features", paths.labels.string(), row.line, row.cells[0]));
    }
    if (cls[it->second] >= 0) {
      throw DataError(fmt::format("{}: line {}: duplicate subject_id '{}'", paths.labels.string(), row.line, row.cells[0]));
    }
    cls[it->second] = static_cast<int>(*v);
    max_class = std::max(max_class, cls[it->second]);
  }
  const std::size_t k = static_cast<std::size_t>(std::max(max_class + 1, 2));
  ds.targets = DenseMatrix(n, k);
  ds.labeled = Mask(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (cls[i] < 0) continue;
    ds.targets(i, static_cast<std::size_t>(cls[i])) = 1.0;
    ds.labeled[i] = true;
  }
  ds.validate();
  return ds;
}

void write_dataset(const Dataset& dataset, const DatasetPaths& paths) {
  dataset.validate();
  const std::size_t n = dataset.size();
  {
    auto out = open_for_writing(paths.features);
    out << "subject_id";
    for (std::size_t j = 0; j < dataset.features.cols(); ++j) out << ",f" << j;
    out << '\n';
    for (std::size_t i = 0; i < n; ++i) {
      out << dataset.subject_ids[i];
      for (double v : dataset.features.row(i)) out << fmt::format(",{:.17g}", v);
      out << '\n';
    }
  }
  {
    auto out = open_for_writing(paths.meta);
    out << "subject_id";
    for (const auto& c : dataset.meta) {
      out << ',' << c.name << ':' << (c.kind == MetaKind::Categorical ? "categorical" : "continuous");
    }
    out << '\n';
    for (std::size_t i = 0; i < n; ++i) {
      out << dataset.subject_ids[i];
      for (const auto& c : dataset.meta) {
        if (c.kind == MetaKind::Categorical) {
          out << ',' << c.label(i);
        } else {
          out << fmt::format(",{:.17g}", c.values[i]);
        }
      }
      out << '\n';
    }
  }
  {
    auto out = open_for_writing(paths.labels);
    out << "subject_id,class\n";
    const auto labels = dataset.class_labels();
    for (std::size_t i = 0; i < n; ++i) {
      if (labels[i] >= 0) out << dataset.subject_ids[i] << ',' << labels[i] << '\n';
    }
  }
}

SynthDataset synth_generate(std::size_t n, std::size_t d, std::uint64_t seed,
                            double informative_strength, double noise) {
  if (n < 20 || n % 2 != 0) throw ParameterError(fmt::format("synth: n must be even and >= 20, got {}", n));
  if (d < 2) throw ParameterError(fmt::format("synth: need d >= 2, got {}", d));
  if (!(informative_strength >= 0.0) || !std::isfinite(informative_strength)) {
    throw ParameterError(fmt::format("synth: informative_strength must be >= 0, got {}", informative_strength));
  }
  if (!(noise >= 0.0) || !std::isfinite(noise)) {
    throw ParameterError(fmt::format("synth: noise must be >= 0, got {}", noise));
  }
  constexpr double kAgreement = 0.9;
  Rng rng = make_rng({seed, 0x73796e74ULL});

  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = i < n / 2 ? 0 : 1;
  for (std::size_t i = n - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i + 1));
    std::swap(labels[i], labels[std::min(j, i)]);
  }

  std::vector<std::string> informative(n), nuisance(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int agree = uniform01(rng) < kAgreement ? labels[i] : 1 - labels[i];
    informative[i] = fmt::format("c{}", agree);
  }
  for (std::size_t i = 0; i < n; ++i) nuisance[i] = fmt::format("c{}", uniform01(rng) < 0.5 ? 0 : 1);

  std::normal_distribution<double> gauss(0.0, 1.0);
  DenseMatrix x(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const double side = labels[i] == 1 ? 0.5 : -0.5;
    for (std::size_t j = 0; j < d; ++j) {
      const double pattern = j % 2 == 0 ? 1.0 : -1.0;
      x(i, j) = side * informative_strength * pattern + noise * gauss(rng);
    }
  }

  SynthDataset out;
  Dataset& ds = out.dataset;
  const int width = static_cast<int>(std::to_string(n - 1).size());
  for (std::size_t i = 0; i < n; ++i) ds.subject_ids.push_back(fmt::format("s{:0{}}", i, width));
  ds.features = std::move(x);
  out.informative = MetaColumn::categorical("informative", informative);
  out.nuisance = MetaColumn::categorical("nuisance", nuisance);
  ds.meta = {out.informative, out.nuisance};
  ds.targets = DenseMatrix(n, 2);
  for (std::size_t i = 0; i < n; ++i) ds.targets(i, static_cast<std::size_t>(labels[i])) = 1.0;
  ds.labeled = Mask(n, true);
  return out;
}

}  // namespace mlpgcn
