#include "mlpgcn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <random>
#include <ostream>
#include <sstream>
#include <string>

#include <fmt/format.h>

#include "mlpgcn/error.hpp"
#include "mlpgcn/graph.hpp"
#include "mlpgcn/random.hpp"
#include "mlpgcn/stats.hpp"

namespace mlpgcn {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ParameterError(fmt::format("learning_rate must be > 0, got {}", learning_rate));
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ParameterError(fmt::format("dropout_rate must lie in [0, 1), got {}", dropout_rate));
  }
  if (!(l2_lambda >= 0.0) || !std::isfinite(l2_lambda)) {
    throw ParameterError(fmt::format("l2_lambda must be >= 0, got {}", l2_lambda));
  }
  if (early_stop_patience < 1) throw ParameterError("early_stop_patience must be >= 1");
  if (max_epochs < 1) throw ParameterError("max_epochs must be >= 1");
  if (hidden_width < 1) throw ParameterError("hidden_width must be >= 1");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ParameterError("Adam decay rates must lie in [0, 1)");
  }
  if (!(adam_epsilon > 0.0)) throw ParameterError("adam_epsilon must be > 0");
}

double cross_entropy(const DenseMatrix& probabilities, const DenseMatrix& targets,
                     std::span<const bool> mask) {
  if (!probabilities.same_shape(targets) || mask.size() != probabilities.rows()) {
    throw ShapeError(fmt::format("cross_entropy: predictions {}, targets {}, mask of {}",
                                 probabilities.shape_string(), targets.shape_string(), mask.size()));
  }
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    ++count;
    for (std::size_t k = 0; k < probabilities.cols(); ++k) {
      const double y = targets(i, k);
      if (y != 0.0) total -= y * std::log(std::max(probabilities(i, k), 1e-12));
    }
  }
  if (count == 0) throw ParameterError("cross_entropy: no labeled rows selected");
  return total / static_cast<double>(count);
}

double loss(const DenseMatrix& probabilities, const DenseMatrix& targets,
            std::span<const bool> mask, const ModelParams& params, double l2_lambda) {
  double value = cross_entropy(probabilities, targets, mask);
  if (l2_lambda != 0.0) {
    double penalty = 0.0;
    for (const auto& b : params.branches) {
      penalty += frobenius_norm_sq(b.input) + frobenius_norm_sq(b.output);
    }
    value += l2_lambda * penalty;
  }
  return value;
}

namespace {

void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, const AdamOptions& o, double bias1, double bias2) {
  for (std::size_t i = 0; i < param.size(); ++i) {
    m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * grad[i];
    v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * grad[i] * grad[i];
    const double m_hat = m[i] / bias1;
    const double v_hat = v[i] / bias2;
    param[i] -= o.learning_rate * m_hat / (std::sqrt(v_hat) + o.epsilon);
  }
}

}  // namespace

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state,
               const AdamOptions& options, std::size_t step, bool update_omega) {
  if (step < 1) throw ParameterError("adam_step: step counter starts at 1");
  const auto same = [](const ModelParams& a, const ModelParams& b) {
    if (a.branches.size() != b.branches.size() || a.omega.size() != b.omega.size()) return false;
    for (std::size_t m = 0; m < a.branches.size(); ++m) {
      if (!a.branches[m].input.same_shape(b.branches[m].input) ||
          !a.branches[m].output.same_shape(b.branches[m].output)) {
        return false;
      }
    }
    return true;
  };
  if (!same(params, grads) || !same(params, state.first) || !same(params, state.second)) {
    throw ConsistencyError("adam_step: parameter, gradient and moment shapes differ");
  }
  const double bias1 = 1.0 - std::pow(options.beta1, static_cast<double>(step));
  const double bias2 = 1.0 - std::pow(options.beta2, static_cast<double>(step));
  for (std::size_t m = 0; m < params.branches.size(); ++m) {
    adam_update(params.branches[m].input.data(), grads.branches[m].input.data(),
                state.first.branches[m].input.data(), state.second.branches[m].input.data(),
                options, bias1, bias2);
    adam_update(params.branches[m].output.data(), grads.branches[m].output.data(),
                state.first.branches[m].output.data(), state.second.branches[m].output.data(),
                options, bias1, bias2);
  }
  if (update_omega) {
    adam_update(params.omega, grads.omega, state.first.omega, state.second.omega, options, bias1,
                bias2);
  }
}

TrainResult train(const TrainingSet& data, std::span<const SparseSymMatrix> graphs,
                  const TrainConfig& config, const OmegaMode& omega_mode,
                  std::optional<ModelParams> initial) {
  config.validate();
  const std::size_t n = data.features.rows();
  if (graphs.empty()) throw ParameterError("train: at least one graph is required");
  if (data.targets.rows() != n || data.train_mask.size() != n || data.validation_mask.size() != n) {
    throw ShapeError(fmt::format("train: features {}, targets {}, masks of {} and {}",
                                 data.features.shape_string(), data.targets.shape_string(),
                                 data.train_mask.size(), data.validation_mask.size()));
  }
  for (const auto& g : graphs) {
    if (g.dim() != n) throw ShapeError(fmt::format("train: graph on {} nodes, {} subjects", g.dim(), n));
  }
  if (std::none_of(data.train_mask.begin(), data.train_mask.end(), [](bool b) { return b; })) {
    throw ParameterError("train: empty training set");
  }
  if (std::none_of(data.validation_mask.begin(), data.validation_mask.end(), [](bool b) { return b; })) {
    throw ParameterError("train: empty validation set");
  }

  ModelParams params = initial ? std::move(*initial)
                               : init_params(data.features.cols(), config.hidden_width,
                                             data.targets.cols(), graphs.size(), config.seed);
  params.validate();
  if (params.branch_count() != graphs.size()) {
    throw ParameterError(fmt::format("train: {} graphs for a model with {} branches",
                                     graphs.size(), params.branch_count()));
  }
  if (!omega_mode.trainable) {
    if (omega_mode.fixed_values.size() != graphs.size()) {
      throw ParameterError(fmt::format("train: fixed omega has {} values for {} graphs",
                                       omega_mode.fixed_values.size(), graphs.size()));
    }
    params.omega = omega_mode.fixed_values;
  }

  const AdamOptions adam{config.learning_rate, config.adam_beta1, config.adam_beta2,
                         config.adam_epsilon};
  AdamState state = AdamState::for_params(params);

  TrainResult result;
  result.params = params;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const bool omega_free = omega_mode.trainable && epoch > config.omega_warmup_epochs;
    if (omega_mode.trainable && epoch == config.omega_warmup_epochs + 1) stale = 0;

    const ForwardCache cache = forward(data.features, graphs, params,
                                       DropoutSpec{config.dropout_rate, derive_seed(config.seed, epoch)});
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss(cache.probabilities, data.targets, data.train_mask, params, config.l2_lambda);
    const ModelParams grads =
        backward(cache, graphs, data.targets, data.train_mask, params, config.l2_lambda);
    adam_step(params, grads, state, adam, epoch, omega_free);
    if (!params.all_finite()) {
      throw DataError(fmt::format("train: parameters became non-finite at epoch {}", epoch));
    }

    const ForwardCache eval = forward(data.features, graphs, params);
    rec.val_loss = cross_entropy(eval.probabilities, data.targets, data.validation_mask);
    rec.val_accuracy = accuracy(eval.probabilities, data.targets, data.validation_mask);
    rec.omega = params.omega;
    result.history.epochs.push_back(rec);

    if (rec.val_loss < best_val) {
      best_val = rec.val_loss;
      result.params = params;
      result.history.best_epoch = epoch;
      stale = 0;
    } else {
      ++stale;
    }
    const bool warm = !omega_mode.trainable || epoch > config.omega_warmup_epochs;
    if (warm && stale >= config.early_stop_patience) break;
  }
  return result;
}

// ---------------------------------------------------------------------------

double gradient_relative_error(double analytic, double numeric) noexcept {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

GradCheckReport grad_check(const DenseMatrix& features, const DenseMatrix& targets,
                           std::span<const bool> labeled, std::span<const SparseSymMatrix> graphs,
                           const ModelParams& params, double l2_lambda, double step) {
  const ForwardCache cache = forward(features, graphs, params);
  const ModelParams analytic = backward(cache, graphs, targets, labeled, params, l2_lambda);

  const auto signs = [](const ForwardCache& c) {
    std::vector<bool> pattern;
    for (const auto& b : c.branches) {
      for (double v : b.pre_activation.data()) pattern.push_back(v > 0.0);
    }
    return pattern;
  };
  const std::vector<bool> base_signs = signs(cache);

  ModelParams probe = params;
  bool crossed = false;
  const auto objective = [&]() {
    const ForwardCache c = forward(features, graphs, probe);
    if (signs(c) != base_signs) crossed = true;
    return loss(c.probabilities, targets, labeled, probe, l2_lambda);
  };
  GradCheckReport report;
  const auto check = [&](double& slot, double expected, double& worst) {
    const double saved = slot;
    const auto at = [&](double offset) {
      slot = saved + offset;
      return objective();
    };
    double numeric = 0.0;
    double h = step;
    for (int attempt = 0; attempt < 6; ++attempt, h /= 10.0) {
      crossed = false;
      const double near = at(h) - at(-h);
      const double far = at(2.0 * h) - at(-2.0 * h);
      numeric = (8.0 * near - far) / (12.0 * h);
      if (!crossed) break;
    }
    slot = saved;
    const double err = gradient_relative_error(expected, numeric);
    worst = std::max(worst, err);
    ++report.probes;
  };

  for (std::size_t m = 0; m < probe.branches.size(); ++m) {
    auto in = probe.branches[m].input.data();
    const auto g_in = analytic.branches[m].input.data();
    for (std::size_t i = 0; i < in.size(); ++i) check(in[i], g_in[i], report.max_relative_error_theta);
    auto out = probe.branches[m].output.data();
    const auto g_out = analytic.branches[m].output.data();
    for (std::size_t i = 0; i < out.size(); ++i) check(out[i], g_out[i], report.max_relative_error_theta);
  }
  for (std::size_t m = 0; m < probe.omega.size(); ++m) {
    check(probe.omega[m], analytic.omega[m], report.max_relative_error_omega);
  }
  report.max_relative_error =
      std::max(report.max_relative_error_theta, report.max_relative_error_omega);
  return report;
}

GradCheckInstance random_gradcheck_instance(std::size_t subjects, std::size_t feature_dim,
                                            std::size_t hidden_width, std::size_t class_count,
                                            std::size_t branch_count, std::uint64_t seed) {
  if (subjects < 2) throw ParameterError("gradcheck instance: need at least 2 subjects");
  Rng rng = make_rng({seed, 0x6763686bULL});
  std::normal_distribution<double> gauss(0.0, 1.0);

  GradCheckInstance inst;
  inst.features = DenseMatrix(subjects, feature_dim);
  for (double& v : inst.features.data()) v = gauss(rng);

  inst.targets = DenseMatrix(subjects, class_count);
  inst.labeled = Mask(subjects);
  for (std::size_t i = 0; i < subjects; ++i) {
    const auto cls = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(class_count));
    inst.targets(i, std::min(cls, class_count - 1)) = 1.0;
    inst.labeled[i] = uniform01(rng) < 2.0 / 3.0;
  }
  inst.labeled[0] = true;

  for (std::size_t m = 0; m < branch_count; ++m) {
    std::vector<SparseEntry> entries;
    for (std::size_t i = 0; i < subjects; ++i) {
      for (std::size_t j = i + 1; j < subjects; ++j) {
        if (uniform01(rng) < 0.35) entries.push_back({i, j, 0.1 + 0.9 * uniform01(rng)});
      }
    }
    inst.graphs.push_back(normalize(SparseSymMatrix::from_upper(subjects, entries)));
  }

  inst.params = init_params(feature_dim, hidden_width, class_count, branch_count, derive_seed(seed, 1));
  for (double& w : inst.params.omega) w = 0.3 + 0.9 * uniform01(rng);
  return inst;
}

// ---------------------------------------------------------------------------

void write_history_csv(std::ostream& out, const TrainHistory& history) {
  const std::size_t m = history.epochs.empty() ? 0 : history.epochs.front().omega.size();
  out << "epoch,train_loss,val_loss,val_acc";
  for (std::size_t i = 1; i <= m; ++i) out << ",omega_" << i;
  out << '\n';
  for (const auto& r : history.epochs) {
    out << fmt::format("{},{:.17g},{:.17g},{:.17g}", r.epoch, r.train_loss, r.val_loss, r.val_accuracy);
    for (double w : r.omega) out << fmt::format(",{:.17g}", w);
    out << '\n';
  }
}

void write_history_csv(const std::filesystem::path& path, const TrainHistory& history) {
  std::ofstream out(path);
  if (!out) throw IoError(fmt::format("cannot open '{}' for writing", path.string()));
  write_history_csv(out, history);
}

TrainHistory read_history_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("history: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header.size() < 5 || header[0] != "epoch" || header[1] != "train_loss" ||
      header[2] != "val_loss" || header[3] != "val_acc") {
    throw DataError("history: header must start with epoch,train_loss,val_loss,val_acc,omega_1");
  }
  const std::size_t m = header.size() - 4;
  for (std::size_t i = 0; i < m; ++i) {
    if (header[4 + i] != fmt::format("omega_{}", i + 1)) {
      throw DataError(fmt::format("history: unexpected column '{}'", header[4 + i]));
    }
  }

  TrainHistory h;
  std::size_t line_no = 1;
  double best = std::numeric_limits<double>::infinity();
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != header.size()) {
      throw DataError(fmt::format("history line {}: {} fields, expected {}", line_no, cells.size(),
                                  header.size()));
    }
    std::vector<double> values;
    for (std::size_t c = 1; c < cells.size(); ++c) {
      char* end = nullptr;
      const double v = std::strtod(cells[c].c_str(), &end);
      if (cells[c].empty() || end != cells[c].c_str() + cells[c].size()) {
        throw DataError(fmt::format("history line {}: bad number '{}'", line_no, cells[c]));
      }
      values.push_back(v);
    }
    EpochRecord r;
    try {
      std::size_t used = 0;
      r.epoch = std::stoul(cells[0], &used);
      if (used != cells[0].size()) throw std::invalid_argument("epoch");
    } catch (const std::exception&) {
      throw DataError(fmt::format("history line {}: bad epoch '{}'", line_no, cells[0]));
    }
    r.train_loss = values[0];
    r.val_loss = values[1];
    r.val_accuracy = values[2];
    r.omega.assign(values.begin() + 3, values.end());
    if (r.val_loss < best) {
      best = r.val_loss;
      h.best_epoch = r.epoch;
    }
    h.epochs.push_back(std::move(r));
  }
  if (h.epochs.empty()) throw DataError("history: no epoch rows");
  return h;
}

TrainHistory read_history_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open '{}'", path.string()));
  return read_history_csv(in);
}

}  // namespace mlpgcn
