#include "mlpgcn/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>

#include <fmt/format.h>

#include "mlpgcn/error.hpp"
#include "mlpgcn/mask.hpp"
#include "mlpgcn/random.hpp"

namespace mlpgcn {

std::size_t argmax_row(const DenseMatrix& m, std::size_t row) {
  const auto r = m.row(row);
  std::size_t best = 0;
  for (std::size_t j = 1; j < r.size(); ++j) {
    if (r[j] > r[best]) best = j;
  }
  return best;
}

double accuracy(const DenseMatrix& predictions, const DenseMatrix& targets,
                std::span<const bool> mask) {
  if (!predictions.same_shape(targets) || mask.size() != predictions.rows()) {
    throw ShapeError(fmt::format("accuracy: predictions {}, targets {}, mask of {}",
                                 predictions.shape_string(), targets.shape_string(), mask.size()));
  }
  std::size_t total = 0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    ++total;
    if (argmax_row(predictions, i) == argmax_row(targets, i)) ++hits;
  }
  if (total == 0) throw ParameterError("accuracy: mask selects no rows");
  return static_cast<double>(hits) / static_cast<double>(total);
}

double auc(std::span<const double> scores, std::span<const bool> positive) {
  if (scores.size() != positive.size()) {
    throw ShapeError(fmt::format("auc: {} scores for {} labels", scores.size(), positive.size()));
  }
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Twice the rank sum of the positives, using midranks for ties, is an
  // integer; keeping it integral makes the result exact.
  std::uint64_t twice_rank_sum = 0;
  std::uint64_t n_pos = 0;
  for (std::size_t start = 0; start < n;) {
    std::size_t end = start + 1;
    while (end < n && scores[order[end]] == scores[order[start]]) ++end;
    const std::uint64_t twice_midrank = static_cast<std::uint64_t>(start + 1 + end);
    for (std::size_t k = start; k < end; ++k) {
      if (positive[order[k]]) {
        twice_rank_sum += twice_midrank;
        ++n_pos;
      }
    }
    start = end;
  }
  const std::uint64_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw ParameterError("auc: need both positive and negative subjects");
  const std::uint64_t twice_u = twice_rank_sum - n_pos * (n_pos + 1);
  return static_cast<double>(twice_u) / static_cast<double>(2 * n_pos * n_neg);
}

namespace {

// Continued fraction for the incomplete beta function (modified Lentz).
double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIterations = 500;
  constexpr double kEpsilon = 1e-15;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIterations; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEpsilon) return h;
  }
  throw ParameterError(fmt::format("incomplete beta: no convergence for a={} b={} x={}", a, b, x));
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) {
    throw ParameterError(fmt::format("incomplete beta: shapes must be positive (a={}, b={})", a, b));
  }
  if (!(x >= 0.0 && x <= 1.0)) {
    throw ParameterError(fmt::format("incomplete beta: x={} outside [0, 1]", x));
  }
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double dof) {
  if (!(dof > 0.0)) throw ParameterError("student t: degrees of freedom must be positive");
  if (std::isinf(t)) return 0.0;
  return regularized_incomplete_beta(0.5 * dof, 0.5, dof / (dof + t * t));
}

double mean(std::span<const double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

double sample_std(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double mu = mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - mu) * (v - mu);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError(fmt::format("paired_t_test: {} vs {} paired values", a.size(), b.size()));
  }
  if (a.size() < 2) throw ParameterError("paired_t_test: need at least 2 pairs");
  std::vector<double> diff(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
  const double sd = sample_std(diff);
  if (!(sd > 0.0)) {
    throw DegenerateInputError("paired_t_test: differences have zero variance");
  }
  const double n = static_cast<double>(diff.size());
  TTestResult r;
  r.t = mean(diff) / (sd / std::sqrt(n));
  r.dof = n - 1.0;
  r.p = student_t_two_sided_p(r.t, r.dof);
  return r;
}

SplitPlan stratified_mc_split(std::span<const int> labels, double val_fraction,
                              std::size_t repeat, std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ParameterError(fmt::format("stratified split: val_fraction {} outside (0, 1)", val_fraction));
  }
  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= 0) members[labels[i]].push_back(i);
  }
  if (members.empty()) throw DataError("stratified split: no labeled subjects");

  Rng rng = make_rng({seed, repeat, 0x73706c74ULL});
  SplitPlan plan;
  plan.repeat = repeat;
  plan.seed = seed;
  for (auto& [cls, idx] : members) {
    const std::size_t n = idx.size();
    if (n < 2) {
      throw DataError(fmt::format("stratified split: class {} has {} member(s), need >= 2", cls, n));
    }
    for (std::size_t i = n - 1; i > 0; --i) {
      const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i + 1));
      std::swap(idx[i], idx[std::min(j, i)]);
    }
    auto take = static_cast<std::size_t>(std::llround(static_cast<double>(n) * val_fraction));
    take = std::clamp<std::size_t>(take, 1, n - 1);
    plan.validation.insert(plan.validation.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take));
    plan.train.insert(plan.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(take), idx.end());
  }
  std::sort(plan.validation.begin(), plan.validation.end());
  std::sort(plan.train.begin(), plan.train.end());
  return plan;
}

// ---------------------------------------------------------------------------

const ArmResult& CvReport::arm(const std::string& name) const {
  for (const auto& a : arms) {
    if (a.name == name) return a;
  }
  throw ConfigError(fmt::format("cv report: no arm named '{}'", name));
}

CvReport cross_validate(const DenseMatrix& features, std::span<const int> labels,
                        std::size_t class_count, std::span<const CvArm> arms,
                        const CvOptions& options) {
  const std::size_t n = features.rows();
  if (labels.size() != n) {
    throw ShapeError(fmt::format("cross_validate: {} labels for {} subjects", labels.size(), n));
  }
  if (options.repeats < 2) throw ParameterError("cross_validate: need at least 2 repeats");
  if (arms.empty()) throw ParameterError("cross_validate: no experiment arms");
  if (class_count < 2) throw ParameterError("cross_validate: need at least 2 classes");

  DenseMatrix targets(n, class_count);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0) continue;
    if (static_cast<std::size_t>(labels[i]) >= class_count) {
      throw DataError(fmt::format("cross_validate: subject {} has class {} >= {}", i, labels[i], class_count));
    }
    targets(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  const bool binary = class_count == 2;

  CvReport report;
  report.repeats = options.repeats;
  report.val_fraction = options.val_fraction;
  report.seed = options.seed;
  for (const auto& arm : arms) {
    if (arm.graphs.empty()) throw ConfigError(fmt::format("arm '{}' has no graphs", arm.name));
    for (const auto& seen : report.arms) {
      if (seen.name == arm.name) throw ConfigError(fmt::format("duplicate arm name '{}'", arm.name));
    }
    if (arm.graph_names.size() != arm.graphs.size()) {
      throw ConfigError(fmt::format("arm '{}': {} graph names for {} graphs", arm.name,
                                    arm.graph_names.size(), arm.graphs.size()));
    }
    ArmResult r;
    r.name = arm.name;
    r.graph_names = arm.graph_names;
    r.omega = arm.omega;
    report.arms.push_back(std::move(r));
  }

  for (std::size_t rep = 0; rep < options.repeats; ++rep) {
    const SplitPlan plan = stratified_mc_split(labels, options.val_fraction, rep, options.seed);
    const Mask train_mask = Mask::from_indices(n, plan.train);
    const Mask val_mask = Mask::from_indices(n, plan.validation);
    const std::span<const bool> train_span = train_mask;
    const std::span<const bool> val_span = val_mask;

    for (std::size_t a = 0; a < arms.size(); ++a) {
      TrainConfig cfg = arms[a].config;
      cfg.seed = derive_seed(arms[a].config.seed, rep);
      const TrainingSet data{features, targets, train_span, val_span};
      TrainResult trained = train(data, arms[a].graphs, cfg, arms[a].omega);
      const ForwardCache eval = forward(features, arms[a].graphs, trained.params);

      ArmResult& out = report.arms[a];
      out.accuracy.push_back(accuracy(eval.probabilities, targets, val_span));
      if (binary) {
        std::vector<double> scores;
        Mask positive(plan.validation.size());
        for (std::size_t k = 0; k < plan.validation.size(); ++k) {
          const std::size_t i = plan.validation[k];
          scores.push_back(eval.probabilities(i, 1));
          positive[k] = labels[i] == 1;
        }
        out.auc.push_back(auc(scores, positive));
      }
      out.histories.push_back(std::move(trained.history));
    }
  }

  for (auto& r : report.arms) {
    r.mean_accuracy = mean(r.accuracy);
    r.std_accuracy = sample_std(r.accuracy);
    if (binary) {
      r.mean_auc = mean(r.auc);
      r.std_auc = sample_std(r.auc);
    } else {
      r.mean_auc = r.std_auc = std::numeric_limits<double>::quiet_NaN();
    }
  }

  std::vector<std::pair<std::string, std::string>> pairs = options.comparisons;
  if (pairs.empty()) {
    for (std::size_t i = 0; i < arms.size(); ++i) {
      for (std::size_t j = i + 1; j < arms.size(); ++j) pairs.emplace_back(arms[i].name, arms[j].name);
    }
  }
  for (const auto& [first, second] : pairs) {
    const ArmResult& a = report.arm(first);
    const ArmResult& b = report.arm(second);
    const auto compare = [&](const char* metric, const std::vector<double>& x,
                             const std::vector<double>& y) {
      ArmComparison c{first, second, metric, std::nullopt};
      try {
        c.test = paired_t_test(x, y);
      } catch (const DegenerateInputError&) {
      }
      report.comparisons.push_back(std::move(c));
    };
    compare("accuracy", a.accuracy, b.accuracy);
    if (binary) compare("auc", a.auc, b.auc);
  }
  return report;
}

namespace {

std::string join_numbers(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += fmt::format("{}{:.17g}", i ? "," : "", v[i]);
  return s;
}

}  // namespace

void write_cv_report(std::ostream& out, const CvReport& report) {
  out << "[cv]\n";
  out << fmt::format("repeats = {}\n", report.repeats);
  out << fmt::format("val_fraction = {:.17g}\n", report.val_fraction);
  out << fmt::format("seed = {}\n", report.seed);
  for (const auto& a : report.arms) {
    out << fmt::format("\n[arm {}]\n", a.name);
    std::string graphs;
    for (std::size_t i = 0; i < a.graph_names.size(); ++i) graphs += (i ? "," : "") + a.graph_names[i];
    out << "graphs = " << graphs << '\n';
    out << "omega = " << (a.omega.trainable ? std::string("trainable") : "fixed:" + join_numbers(a.omega.fixed_values)) << '\n';
    out << "accuracy = " << join_numbers(a.accuracy) << '\n';
    if (!a.auc.empty()) out << "auc = " << join_numbers(a.auc) << '\n';
    std::vector<double> final_omega;
    for (const auto& h : a.histories) {
      for (double w : h.epochs.back().omega) final_omega.push_back(w);
    }
    out << "final_omega = " << join_numbers(final_omega) << '\n';
    out << fmt::format("mean_acc = {:.17g}\n", a.mean_accuracy);
    out << fmt::format("std_acc = {:.17g}\n", a.std_accuracy);
    out << fmt::format("mean_auc = {:.17g}\n", a.mean_auc);
    out << fmt::format("std_auc = {:.17g}\n", a.std_auc);
  }
  for (const auto& c : report.comparisons) {
    out << fmt::format("\n[compare {} vs {}]\n", c.first, c.second);
    out << "metric = " << c.metric << '\n';
    if (c.test) {
      out << fmt::format("t = {:.17g}\n", c.test->t);
      out << fmt::format("p = {:.17g}\n", c.test->p);
      out << fmt::format("dof = {:.17g}\n", c.test->dof);
    } else {
      out << "status = degenerate\n";
    }
  }
}

}  // namespace mlpgcn
