#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <gtest/gtest.h>

#include "mlpgcn/error.hpp"
#include "mlpgcn/graph.hpp"
#include "mlpgcn/stats.hpp"
#include "test_support.hpp"

using namespace mlpgcn;
using namespace testing_support;

namespace {

// Pairwise count: wins + ties/2 over positive-negative pairs, as an exact
// rational numerator (doubled) and denominator.
std::pair<long long, long long> brute_force_auc(const std::vector<double>& s, const Mask& pos) {
  long long twice_wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!pos[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (pos[j]) continue;
      ++pairs;
      if (s[i] > s[j]) twice_wins += 2;
      else if (s[i] == s[j]) twice_wins += 1;
    }
  }
  return {twice_wins, 2 * pairs};
}

}  // namespace

TEST(Accuracy, Examples) {
  const DenseMatrix y = DenseMatrix::from_rows({{1, 0}, {0, 1}, {1, 0}, {0, 1}});
  const Mask all(4, true);
  EXPECT_EQ(accuracy(y, y, all), 1.0);

  const DenseMatrix uniform(4, 2, 0.5);
  const DenseMatrix ones = DenseMatrix::from_rows({{0, 1}, {0, 1}, {0, 1}, {0, 1}});
  EXPECT_EQ(accuracy(uniform, ones, all), 0.0);

  const DenseMatrix pred = DenseMatrix::from_rows({{0.9, 0.1}, {0.2, 0.8}, {0.6, 0.4}, {0.7, 0.3}});
  EXPECT_EQ(accuracy(pred, y, all), 0.75);
  EXPECT_EQ(accuracy(pred, y, Mask{false, false, false, true}), 0.0);
  EXPECT_THROW(accuracy(pred, y, Mask(4, false)), ParameterError);
}

TEST(Accuracy, ArgmaxTieGoesToLowestIndex) {
  const DenseMatrix m = DenseMatrix::from_rows({{0.2, 0.4, 0.4}, {0.5, 0.5, 0.0}});
  EXPECT_EQ(argmax_row(m, 0), 1u);
  EXPECT_EQ(argmax_row(m, 1), 0u);
}

TEST(Auc, Examples) {
  EXPECT_EQ(auc(std::vector<double>{0.9, 0.1}, Mask{true, false}), 1.0);
  EXPECT_EQ(auc(std::vector<double>{0.4, 0.4, 0.4}, Mask{true, false, true}), 0.5);
  EXPECT_EQ(auc(std::vector<double>{0.8, 0.3, 0.6, 0.1}, Mask{true, true, false, false}), 0.75);
  EXPECT_THROW(auc(std::vector<double>{0.1, 0.2}, Mask{true, true}), ParameterError);
  EXPECT_THROW(auc(std::vector<double>{0.1}, Mask{true, false}), ShapeError);
}

TEST(Auc, MatchesBruteForceExactly) {
  std::mt19937_64 rng(80);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 49;
    std::vector<double> scores(n);
    Mask pos(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = static_cast<double>(rng() % 12) / 4.0;  // plenty of ties
      pos[i] = rng() % 2 == 0;
    }
    pos[0] = true;
    pos[1] = false;
    const auto [num, den] = brute_force_auc(scores, pos);
    EXPECT_EQ(auc(scores, pos), static_cast<double>(num) / static_cast<double>(den)) << "trial " << trial;
  }
}

TEST(Auc, ComplementUnderNegationAndPermutationInvariant) {
  std::mt19937_64 rng(81);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 20;
    std::vector<double> s(n), neg(n);
    Mask pos(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = u(rng);
      neg[i] = -s[i];
      pos[i] = i % 3 == 0;
    }
    const double a = auc(s, pos);
    EXPECT_NEAR(a + auc(neg, pos), 1.0, 1e-15);

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> ps(n);
    Mask ppos(n);
    for (std::size_t r = 0; r < n; ++r) {
      ps[r] = s[perm[r]];
      ppos[r] = pos[perm[r]];
    }
    EXPECT_EQ(auc(ps, ppos), a);
  }
}

TEST(IncompleteBeta, MatchesBoost) {
  std::mt19937_64 rng(82);
  std::uniform_real_distribution<double> shape(0.05, 60.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    const double a = shape(rng), b = shape(rng), x = unit(rng);
    const double expect = boost::math::ibeta(a, b, x);
    EXPECT_NEAR(regularized_incomplete_beta(a, b, x), expect, 1e-12 + 1e-10 * expect)
        << "a=" << a << " b=" << b << " x=" << x;
  }
  EXPECT_EQ(regularized_incomplete_beta(2, 3, 0.0), 0.0);
  EXPECT_EQ(regularized_incomplete_beta(2, 3, 1.0), 1.0);
  EXPECT_THROW(regularized_incomplete_beta(0.0, 1.0, 0.5), ParameterError);
  EXPECT_THROW(regularized_incomplete_beta(1.0, 1.0, 1.5), ParameterError);
}

TEST(StudentT, TwoSidedPMatchesBoost) {
  for (double dof : {1.0, 2.0, 5.0, 9.0, 30.0}) {
    const boost::math::students_t dist(dof);
    for (double t : {0.0, 0.3, 1.0, 2.5, 7.0, -3.2}) {
      const double expect = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
      EXPECT_NEAR(student_t_two_sided_p(t, dof), expect, 1e-12) << "t=" << t << " dof=" << dof;
    }
  }
}

TEST(PairedTTest, HandExample) {
  const std::vector<double> a{1, 2, 3}, b{0, 0, 0};
  const TTestResult r = paired_t_test(a, b);
  EXPECT_NEAR(r.t, 2.0 * std::sqrt(3.0), 1e-12);
  EXPECT_NEAR(r.t, 3.4641, 1e-4);
  EXPECT_EQ(r.dof, 2.0);
  // With 2 degrees of freedom the two-sided p is 1 - t/sqrt(t²+2) = 1 - sqrt(6/7).
  EXPECT_NEAR(r.p, 1.0 - std::sqrt(6.0 / 7.0), 1e-12);
  EXPECT_NEAR(r.p, 0.0742, 1e-3);
}

TEST(PairedTTest, AntisymmetryAndRange) {
  std::mt19937_64 rng(83);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a(10), b(10);
    for (std::size_t i = 0; i < 10; ++i) {
      a[i] = g(rng);
      b[i] = g(rng) + 0.2 * trial / 50.0;
    }
    const TTestResult ab = paired_t_test(a, b), ba = paired_t_test(b, a);
    EXPECT_EQ(ab.t, -ba.t);
    EXPECT_EQ(ab.p, ba.p);
    EXPECT_GT(ab.p, 0.0);
    EXPECT_LE(ab.p, 1.0);
  }
}

TEST(PairedTTest, DegenerateAndShapeErrors) {
  const std::vector<double> a{0.9, 0.8, 0.95};
  EXPECT_THROW(paired_t_test(a, a), DegenerateInputError);
  const std::vector<double> lower{0.5, 0.25, 0.75}, shifted{1.5, 1.25, 1.75};
  EXPECT_THROW(paired_t_test(shifted, lower), DegenerateInputError);
  EXPECT_THROW(paired_t_test(std::vector<double>{1.0}, std::vector<double>{2.0}), ParameterError);
  EXPECT_THROW(paired_t_test(a, std::vector<double>{1.0, 2.0}), ShapeError);
}

TEST(Summary, MeanAndSampleStd) {
  const std::vector<double> v{2, 4, 4, 4, 5, 5, 7, 9};
  EXPECT_EQ(mean(v), 5.0);
  EXPECT_NEAR(sample_std(v), std::sqrt(32.0 / 7.0), 1e-15);
  EXPECT_EQ(sample_std(std::vector<double>{3.0}), 0.0);
}

TEST(StratifiedSplit, BalancedExample) {
  std::vector<int> labels(100);
  for (std::size_t i = 0; i < 100; ++i) labels[i] = static_cast<int>(i % 2);
  const SplitPlan plan = stratified_mc_split(labels, 0.1, 0, 7);
  ASSERT_EQ(plan.validation.size(), 10u);
  std::size_t ones = 0;
  for (std::size_t i : plan.validation) ones += static_cast<std::size_t>(labels[i]);
  EXPECT_EQ(ones, 5u);
}

TEST(StratifiedSplit, InvariantsAcrossRatios) {
  for (auto [a, b] : {std::pair<int, int>{1, 1}, {1, 3}, {2, 5}}) {
    for (std::size_t scale : {4u, 10u, 30u}) {
      std::vector<int> labels;
      for (std::size_t i = 0; i < a * scale; ++i) labels.push_back(0);
      for (std::size_t i = 0; i < b * scale; ++i) labels.push_back(1);
      labels.push_back(-1);  // unlabeled subject stays out of both sides
      std::mt19937_64 rng(scale);
      std::shuffle(labels.begin(), labels.end(), rng);
      for (double f : {0.1, 0.25}) {
        for (std::size_t rep = 0; rep < 5; ++rep) {
          const SplitPlan plan = stratified_mc_split(labels, f, rep, 3);
          std::vector<std::size_t> all = plan.train;
          all.insert(all.end(), plan.validation.begin(), plan.validation.end());
          std::sort(all.begin(), all.end());
          std::vector<std::size_t> labeled;
          for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] >= 0) labeled.push_back(i);
          EXPECT_EQ(all, labeled);
          EXPECT_TRUE(std::is_sorted(plan.train.begin(), plan.train.end()));
          EXPECT_TRUE(std::is_sorted(plan.validation.begin(), plan.validation.end()));

          for (int c : {0, 1}) {
            const double members = static_cast<double>(std::count(labels.begin(), labels.end(), c));
            const double in_val = static_cast<double>(std::count_if(
                plan.validation.begin(), plan.validation.end(), [&](std::size_t i) { return labels[i] == c; }));
            EXPECT_LE(std::abs(in_val - f * members), 1.0) << a << ":" << b << " class " << c;
          }
        }
      }
    }
  }
}

TEST(StratifiedSplit, DeterministicAndVarying) {
  std::vector<int> labels(60);
  for (std::size_t i = 0; i < 60; ++i) labels[i] = static_cast<int>(i % 3 == 0);
  EXPECT_EQ(stratified_mc_split(labels, 0.1, 4, 9), stratified_mc_split(labels, 0.1, 4, 9));
  const SplitPlan first = stratified_mc_split(labels, 0.1, 1, 9);
  bool differs = false;
  for (std::size_t rep = 2; rep < 22; ++rep) differs |= stratified_mc_split(labels, 0.1, rep, 9).validation != first.validation;
  EXPECT_TRUE(differs);
}

TEST(StratifiedSplit, Errors) {
  EXPECT_THROW(stratified_mc_split(std::vector<int>{0, 0, 1}, 0.1, 0, 0), DataError);
  EXPECT_THROW(stratified_mc_split(std::vector<int>{0, 0, 1, 1}, 1.0, 0, 0), ParameterError);
  EXPECT_THROW(stratified_mc_split(std::vector<int>{0, 0, 1, 1}, 0.0, 0, 0), ParameterError);
}

namespace {

struct CvFixture {
  DenseMatrix features;
  std::vector<int> labels;
  std::vector<SparseSymMatrix> graphs;
};

CvFixture cv_fixture() {
  CvFixture f;
  std::mt19937_64 rng(84);
  std::normal_distribution<double> g(0.0, 1.0);
  const std::size_t n = 60;
  f.features = DenseMatrix(n, 4);
  std::vector<std::string> group(n);
  for (std::size_t i = 0; i < n; ++i) {
    f.labels.push_back(static_cast<int>(i % 2));
    group[i] = (i % 2 == 0) == (i % 7 != 0) ? "a" : "b";
    for (std::size_t k = 0; k < 4; ++k) f.features(i, k) = g(rng) + (i % 2 == 0 ? 0.8 : -0.8) * (k % 2 ? 1 : -1);
  }
  const DenseMatrix sim = similarity_matrix(f.features);
  f.graphs.push_back(build_graph(MetaColumn::categorical("group", group), sim).normalized);
  return f;
}

TrainConfig short_config() {
  TrainConfig c;
  c.max_epochs = 40;
  c.omega_warmup_epochs = 5;
  c.early_stop_patience = 10;
  return c;
}

}  // namespace

TEST(CrossValidate, IdenticalArmsAreDegenerate) {
  const CvFixture f = cv_fixture();
  const CvArm arm{"a", {"group"}, f.graphs, OmegaMode::fixed({1.0}), short_config()};
  CvArm twin = arm;
  twin.name = "b";
  CvOptions opt;
  opt.repeats = 4;
  const CvReport r = cross_validate(f.features, f.labels, 2, std::vector<CvArm>{arm, twin}, opt);
  ASSERT_EQ(r.comparisons.size(), 2u);
  for (const auto& c : r.comparisons) EXPECT_FALSE(c.test.has_value());
  EXPECT_EQ(r.arm("a").accuracy, r.arm("b").accuracy);
  EXPECT_THROW(paired_t_test(r.arm("a").accuracy, r.arm("b").accuracy), DegenerateInputError);
}

TEST(CrossValidate, AggregatesRecomputeFromRepeats) {
  const CvFixture f = cv_fixture();
  CvArm learned{"learned", {"group", "group"}, {f.graphs[0], f.graphs[0]}, OmegaMode::learned(), short_config()};
  CvArm fixed{"fixed", {"group"}, f.graphs, OmegaMode::fixed({1.0}), short_config()};
  CvOptions opt;
  opt.repeats = 5;
  opt.seed = 3;
  const CvReport r = cross_validate(f.features, f.labels, 2, std::vector<CvArm>{learned, fixed}, opt);
  for (const auto& arm : r.arms) {
    ASSERT_EQ(arm.accuracy.size(), 5u);
    ASSERT_EQ(arm.auc.size(), 5u);
    ASSERT_EQ(arm.histories.size(), 5u);
    double sum = 0.0;
    for (double v : arm.accuracy) sum += v;
    EXPECT_NEAR(arm.mean_accuracy, sum / 5.0, 1e-12);
    double sq = 0.0;
    for (double v : arm.accuracy) sq += (v - sum / 5.0) * (v - sum / 5.0);
    EXPECT_NEAR(arm.std_accuracy, std::sqrt(sq / 4.0), 1e-12);
    double auc_sum = 0.0;
    for (double v : arm.auc) auc_sum += v;
    EXPECT_NEAR(arm.mean_auc, auc_sum / 5.0, 1e-12);
  }
  EXPECT_THROW(r.arm("missing"), ConfigError);
}

TEST(CrossValidate, ReportIsDeterministicText) {
  const CvFixture f = cv_fixture();
  const CvArm arm{"only", {"group"}, f.graphs, OmegaMode::fixed({1.0}), short_config()};
  CvOptions opt;
  opt.repeats = 3;
  std::stringstream a, b;
  write_cv_report(a, cross_validate(f.features, f.labels, 2, std::vector<CvArm>{arm}, opt));
  write_cv_report(b, cross_validate(f.features, f.labels, 2, std::vector<CvArm>{arm}, opt));
  EXPECT_EQ(a.str(), b.str());
  EXPECT_NE(a.str().find("[arm only]"), std::string::npos);
  EXPECT_NE(a.str().find("mean_acc = "), std::string::npos);
  EXPECT_NE(a.str().find("std_auc = "), std::string::npos);
}

TEST(CrossValidate, RejectsBadArms) {
  const CvFixture f = cv_fixture();
  const CvArm arm{"x", {"group"}, f.graphs, OmegaMode::fixed({1.0}), short_config()};
  CvOptions opt;
  opt.repeats = 2;
  EXPECT_THROW(cross_validate(f.features, f.labels, 2, std::vector<CvArm>{}, opt), ParameterError);
  EXPECT_THROW(cross_validate(f.features, f.labels, 2, std::vector<CvArm>{arm, arm}, opt), ConfigError);
  opt.comparisons = {{"x", "nope"}};
  EXPECT_THROW(cross_validate(f.features, f.labels, 2, std::vector<CvArm>{arm}, opt), ConfigError);
}
