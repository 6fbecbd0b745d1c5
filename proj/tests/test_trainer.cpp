#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "mlpgcn/dataset.hpp"
#include "mlpgcn/error.hpp"
#include "mlpgcn/graph.hpp"
#include "mlpgcn/stats.hpp"
#include "mlpgcn/trainer.hpp"
#include "test_support.hpp"

using namespace mlpgcn;
using namespace testing_support;

namespace {

struct Problem {
  SynthDataset synth;
  std::vector<SparseSymMatrix> graphs;
  Mask train;
  Mask validation;
};

Problem make_problem(std::uint64_t seed, double strength, std::vector<std::string> sources) {
  Problem p{synth_generate(200, 10, seed, strength, 1.0), {}, {}, {}};
  const Dataset& ds = p.synth.dataset;
  const DenseMatrix sim = similarity_matrix(ds.features);
  for (const auto& s : sources) p.graphs.push_back(build_graph(ds.column(s), sim).normalized);
  const SplitPlan split = stratified_mc_split(ds.class_labels(), 0.1, 0, seed);
  p.train = Mask::from_indices(ds.size(), split.train);
  p.validation = Mask::from_indices(ds.size(), split.validation);
  return p;
}

TrainConfig quick_config(std::uint64_t seed) {
  TrainConfig c;
  c.seed = seed;
  c.max_epochs = 60;
  c.omega_warmup_epochs = 10;
  c.early_stop_patience = 10;
  return c;
}

}  // namespace

TEST(Loss, Examples) {
  const Mask one{true};
  EXPECT_NEAR(loss(DenseMatrix::from_rows({{0.5, 0.5}}), DenseMatrix::from_rows({{1, 0}}), one,
                   ModelParams{}, 0.0),
              std::log(2.0), 1e-15);

  const DenseMatrix y = DenseMatrix::from_rows({{1, 0}, {0, 1}});
  const Mask both{true, true};
  EXPECT_LE(loss(y, y, both, ModelParams{}, 0.0), 1e-12 * 2);

  const double expected = -(std::log(0.9) + std::log(0.8)) / 2.0;
  const double value = loss(DenseMatrix::from_rows({{0.9, 0.1}, {0.2, 0.8}}), y, both, ModelParams{}, 0.0);
  EXPECT_NEAR(value, expected, 1e-15);
  EXPECT_NEAR(value, 0.164252, 1e-6);
}

TEST(Loss, FloorsLogAndRejectsEmptyMask) {
  const Mask one{true};
  const double v = cross_entropy(DenseMatrix::from_rows({{0.0, 1.0}}), DenseMatrix::from_rows({{1, 0}}), one);
  EXPECT_NEAR(v, -std::log(1e-12), 1e-9);
  const Mask none{false};
  EXPECT_THROW(cross_entropy(DenseMatrix::from_rows({{0.5, 0.5}}), DenseMatrix::from_rows({{1, 0}}), none),
               ParameterError);
  EXPECT_THROW(cross_entropy(DenseMatrix(2, 2), DenseMatrix(2, 3), Mask(2, true)), ShapeError);
}

TEST(Loss, L2Term) {
  ModelParams p = init_params(3, 2, 2, 2, 0);
  double sq = 0.0;
  for (const auto& b : p.branches) sq += frobenius_norm_sq(b.input) + frobenius_norm_sq(b.output);
  p.omega = {10.0, -10.0};
  const Mask one{true};
  const DenseMatrix yhat = DenseMatrix::from_rows({{0.5, 0.5}});
  const DenseMatrix y = DenseMatrix::from_rows({{1, 0}});
  EXPECT_NEAR(loss(yhat, y, one, p, 0.01) - loss(yhat, y, one, p, 0.0), 0.01 * sq, 1e-15);
}

TEST(Loss, NonNegativeAndPermutationInvariant) {
  std::mt19937_64 rng(70);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 10;
    DenseMatrix yhat = softmax_rows(random_dense(n, 3, rng, -4, 4));
    DenseMatrix y(n, 3);
    Mask mask(n);
    for (std::size_t i = 0; i < n; ++i) {
      y(i, rng() % 3) = 1.0;
      mask[i] = rng() % 2 == 0;
    }
    mask[0] = true;
    const double base = cross_entropy(yhat, y, mask);
    EXPECT_GE(base, 0.0);

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    DenseMatrix pyhat(n, 3), py(n, 3);
    Mask pmask(n);
    for (std::size_t r = 0; r < n; ++r) {
      pmask[r] = mask[perm[r]];
      for (std::size_t k = 0; k < 3; ++k) {
        pyhat(r, k) = yhat(perm[r], k);
        py(r, k) = y(perm[r], k);
      }
    }
    EXPECT_NEAR(cross_entropy(pyhat, py, pmask), base, 1e-12);
  }
}

TEST(Adam, ZeroGradientsLeaveParamsUnchanged) {
  ModelParams p = init_params(3, 2, 2, 2, 1);
  const ModelParams before = p;
  AdamState s = AdamState::for_params(p);
  adam_step(p, p.zeros_like(), s, AdamOptions{}, 1);
  EXPECT_EQ(p, before);
}

TEST(Adam, FirstStepClosedForm) {
  ModelParams p;
  p.branches = {{DenseMatrix(1, 1, 2.0), DenseMatrix(1, 2, 0.0)}};
  p.omega = {1.0};
  ModelParams g = p.zeros_like();
  g.branches[0].input(0, 0) = 1.0;
  AdamState s = AdamState::for_params(p);
  const AdamOptions o{0.1, 0.9, 0.999, 1e-8};
  adam_step(p, g, s, o, 1);
  // m̂ = g, v̂ = g², so Δ = -lr·g/(|g| + ε).
  EXPECT_NEAR(p.branches[0].input(0, 0), 2.0 - 0.1 / (1.0 + 1e-8), 1e-15);
  EXPECT_EQ(p.omega[0], 1.0);
}

TEST(Adam, MomentsDecayAfterGradientStops) {
  ModelParams p;
  p.branches = {{DenseMatrix(1, 1, 0.0), DenseMatrix(1, 2, 0.0)}};
  p.omega = {0.0};
  AdamState s = AdamState::for_params(p);
  const AdamOptions o{0.1, 0.9, 0.999, 1e-8};
  ModelParams g = p.zeros_like();
  g.branches[0].input(0, 0) = 1.0;
  adam_step(p, g, s, o, 1);
  const double after_first = p.branches[0].input(0, 0);
  const ModelParams zero = p.zeros_like();
  adam_step(p, zero, s, o, 2);
  const double after_second = p.branches[0].input(0, 0);
  adam_step(p, zero, s, o, 3);
  const double after_third = p.branches[0].input(0, 0);

  // Closed-form moment recursion with g = (1, 0, 0).
  double m = 0.1, v = 0.001;
  double x = -0.1 * (m / 0.1) / (std::sqrt(v / 0.001) + 1e-8);
  EXPECT_NEAR(after_first, x, 1e-15);
  for (int t = 2; t <= 3; ++t) {
    m *= 0.9;
    v *= 0.999;
    x -= 0.1 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    EXPECT_NEAR(t == 2 ? after_second : after_third, x, 1e-15);
  }
  EXPECT_LT(std::abs(after_second - after_first), 0.1);
  EXPECT_LT(std::abs(after_third - after_second), 0.1);
}

TEST(Adam, FrozenOmegaAndShapeChecks) {
  ModelParams p = init_params(3, 2, 2, 2, 1);
  AdamState s = AdamState::for_params(p);
  ModelParams g = p.zeros_like();
  g.omega = {1.0, -1.0};
  adam_step(p, g, s, AdamOptions{}, 1, false);
  EXPECT_EQ(p.omega, (std::vector<double>{0.5, 0.5}));
  EXPECT_EQ(s.first.omega, (std::vector<double>{0.0, 0.0}));
  EXPECT_THROW(adam_step(p, init_params(3, 3, 2, 2, 1), s, AdamOptions{}, 1), ConsistencyError);
  EXPECT_THROW(adam_step(p, g, s, AdamOptions{}, 0), ParameterError);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.dropout_rate = 1.0;
  EXPECT_THROW(c.validate(), ParameterError);
  c = TrainConfig{};
  c.learning_rate = 0.0;
  EXPECT_THROW(c.validate(), ParameterError);
  c = TrainConfig{};
  c.early_stop_patience = 0;
  EXPECT_THROW(c.validate(), ParameterError);
}

TEST(Train, PlantedDataReachesHighAccuracy) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Problem p = make_problem(seed, 3.0, {"informative"});
    const Dataset& ds = p.synth.dataset;
    TrainConfig cfg;
    cfg.seed = seed;
    const TrainResult r = train({ds.features, ds.targets, p.train, p.validation}, p.graphs, cfg,
                                OmegaMode::fixed({1.0}));
    const double acc = accuracy(forward(ds.features, p.graphs, r.params).probabilities, ds.targets, p.validation);
    EXPECT_GE(acc, 0.95) << "seed " << seed;
  }
}

TEST(Train, OmegaFrozenDuringWarmup) {
  const Problem p = make_problem(1, 1.0, {"informative", "nuisance"});
  const Dataset& ds = p.synth.dataset;
  TrainConfig cfg = quick_config(3);
  cfg.early_stop_patience = 1000;
  const TrainResult r = train({ds.features, ds.targets, p.train, p.validation}, p.graphs, cfg);
  ASSERT_EQ(r.history.epochs.size(), cfg.max_epochs);
  for (const auto& e : r.history.epochs) {
    if (e.epoch <= cfg.omega_warmup_epochs) {
      EXPECT_EQ(e.omega, (std::vector<double>{0.5, 0.5})) << "epoch " << e.epoch;
    }
  }
  EXPECT_NE(r.history.epochs.back().omega, (std::vector<double>{0.5, 0.5}));
}

TEST(Train, FixedOmegaNeverMoves) {
  const Problem p = make_problem(2, 1.0, {"informative", "nuisance"});
  const Dataset& ds = p.synth.dataset;
  const TrainResult r = train({ds.features, ds.targets, p.train, p.validation}, p.graphs, quick_config(0),
                              OmegaMode::fixed({0.25, 2.0}));
  for (const auto& e : r.history.epochs) EXPECT_EQ(e.omega, (std::vector<double>{0.25, 2.0}));
  EXPECT_EQ(r.params.omega, (std::vector<double>{0.25, 2.0}));
}

TEST(Train, BestSnapshotAndLossDecrease) {
  const Problem p = make_problem(4, 1.0, {"informative", "nuisance"});
  const Dataset& ds = p.synth.dataset;
  const TrainResult r = train({ds.features, ds.targets, p.train, p.validation}, p.graphs, TrainConfig{});
  const auto& epochs = r.history.epochs;
  ASSERT_GE(r.history.best_epoch, 1u);
  const EpochRecord& best = epochs.at(r.history.best_epoch - 1);
  for (const auto& e : epochs) EXPECT_LE(best.val_loss, e.val_loss);
  EXPECT_LT(best.train_loss, epochs.front().train_loss);
  for (std::size_t i = 0; i < epochs.size(); ++i) EXPECT_EQ(epochs[i].epoch, i + 1);

  // The returned parameters reproduce the best epoch's validation loss.
  const double val = cross_entropy(forward(ds.features, p.graphs, r.params).probabilities, ds.targets, p.validation);
  EXPECT_EQ(val, best.val_loss);
}

TEST(Train, EarlyStoppingWaitsForWarmupAndPatience) {
  const Problem p = make_problem(5, 1.0, {"informative", "nuisance"});
  const Dataset& ds = p.synth.dataset;
  TrainConfig cfg;
  cfg.max_epochs = 400;
  cfg.learning_rate = 0.05;
  const TrainResult r = train({ds.features, ds.targets, p.train, p.validation}, p.graphs, cfg);
  const std::size_t ran = r.history.epochs.size();
  ASSERT_LT(ran, cfg.max_epochs) << "expected an early stop";
  EXPECT_GT(ran, cfg.omega_warmup_epochs);
  const std::size_t window_start = std::max(r.history.best_epoch, cfg.omega_warmup_epochs);
  EXPECT_EQ(ran, window_start + cfg.early_stop_patience);
}

TEST(Train, DeterministicPerSeed) {
  const Problem p = make_problem(6, 1.0, {"informative", "nuisance"});
  const Dataset& ds = p.synth.dataset;
  const TrainingSet set{ds.features, ds.targets, p.train, p.validation};
  const TrainResult a = train(set, p.graphs, quick_config(11));
  const TrainResult b = train(set, p.graphs, quick_config(11));
  EXPECT_EQ(a.history, b.history);
  EXPECT_EQ(a.params, b.params);
  const TrainResult c = train(set, p.graphs, quick_config(12));
  EXPECT_NE(a.history, c.history);
}

TEST(Train, DuplicatedBranchesFollowSingleBranchTrajectory) {
  const Problem p = make_problem(7, 1.0, {"informative"});
  const Dataset& ds = p.synth.dataset;
  const TrainingSet set{ds.features, ds.targets, p.train, p.validation};
  TrainConfig cfg;
  cfg.seed = 5;
  cfg.l2_lambda = 0.0;
  cfg.adam_epsilon = 1e-300;
  cfg.max_epochs = 80;

  const ModelParams single = init_params(10, cfg.hidden_width, 2, 1, 99);
  ModelParams twin;
  twin.branches = {single.branches[0], single.branches[0]};
  twin.omega = {0.5, 0.5};
  const std::vector<SparseSymMatrix> two{p.graphs[0], p.graphs[0]};

  const TrainResult r1 = train(set, p.graphs, cfg, OmegaMode::fixed({1.0}), single);
  const TrainResult r2 = train(set, two, cfg, OmegaMode::fixed({0.5, 0.5}), twin);
  ASSERT_EQ(r1.history.epochs.size(), r2.history.epochs.size());
  for (std::size_t e = 0; e < r1.history.epochs.size(); ++e) {
    EXPECT_NEAR(r1.history.epochs[e].train_loss, r2.history.epochs[e].train_loss, 1e-9);
    EXPECT_NEAR(r1.history.epochs[e].val_loss, r2.history.epochs[e].val_loss, 1e-9);
  }
  EXPECT_LE(max_abs_diff(r1.params.branches[0].input, r2.params.branches[1].input), 1e-9);
}

TEST(Train, RejectsBadInputs) {
  const Problem p = make_problem(8, 1.0, {"informative"});
  const Dataset& ds = p.synth.dataset;
  const Mask none(ds.size(), false);
  EXPECT_THROW(train({ds.features, ds.targets, none, p.validation}, p.graphs, quick_config(0)), ParameterError);
  const std::vector<SparseSymMatrix> no_graphs;
  EXPECT_THROW(train({ds.features, ds.targets, p.train, p.validation}, no_graphs, quick_config(0)), ParameterError);
  EXPECT_THROW(train({ds.features, ds.targets, p.train, p.validation}, p.graphs, quick_config(0),
                     OmegaMode::fixed({0.5, 0.5})),
               ParameterError);
}

TEST(History, CsvRoundTrip) {
  const Problem p = make_problem(9, 1.0, {"informative", "nuisance"});
  const Dataset& ds = p.synth.dataset;
  const TrainResult r = train({ds.features, ds.targets, p.train, p.validation}, p.graphs, quick_config(1));
  std::stringstream ss;
  write_history_csv(ss, r.history);
  const std::string text = ss.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "epoch,train_loss,val_loss,val_acc,omega_1,omega_2");
  EXPECT_EQ(read_history_csv(ss), r.history);
}

TEST(History, MalformedCsvIsDataError) {
  std::stringstream bad_header("epoch,loss\n1,2\n");
  EXPECT_THROW(read_history_csv(bad_header), DataError);
  std::stringstream bad_row("epoch,train_loss,val_loss,val_acc,omega_1\n1,0.5,0.4\n");
  EXPECT_THROW(read_history_csv(bad_row), DataError);
  std::stringstream bad_number("epoch,train_loss,val_loss,val_acc,omega_1\n1,0.5,x,0.9,1\n");
  EXPECT_THROW(read_history_csv(bad_number), DataError);
}
