#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "metric_oracles.hpp"
#include "omada/calib_metrics.hpp"
#include "omada/loss.hpp"

using namespace omada;
using namespace omada::metrics;

namespace {

Predictions two_class(const std::vector<double>& conf, const std::vector<int>& correct) {
  Predictions p{Matrix(conf.size(), 2), {}};
  for (std::size_t i = 0; i < conf.size(); ++i) {
    p.probs(i, 0) = conf[i];
    p.probs(i, 1) = 1.0 - conf[i];
    p.labels.push_back(correct[i] ? 0 : 1);
  }
  return p;
}

Predictions from(const oracle::Set& s) { return {s.probs, s.labels}; }

}  // namespace

TEST(Accuracy, Examples) {
  Predictions p{Matrix::from_rows({{1, 0}, {0, 1}, {1, 0}, {0, 1}}), {0, 1, 0, 0}};
  EXPECT_EQ(accuracy(p), 0.75);
  p.labels = {0, 1, 0, 1};
  EXPECT_EQ(accuracy(p), 1.0);
  p.labels = {1, 0, 1, 0};
  EXPECT_EQ(accuracy(p), 0.0);
  EXPECT_THROW(accuracy(Predictions{}), std::invalid_argument);
}

TEST(Nll, Examples) {
  EXPECT_EQ(nll(Predictions{Matrix::from_rows({{1, 0}}), {0}}), 0.0);
  EXPECT_NEAR(nll(Predictions{Matrix(1, 10, 0.1), {4}}), std::log(10.0), 1e-15);
  EXPECT_NEAR(nll(Predictions{Matrix::from_rows({{0.7311, 0.2689}}), {0}}), 0.3133, 1e-4);
}

TEST(ReliabilityBins, HandExample) {
  Predictions p = two_class({0.6, 0.7, 0.8, 0.9}, {1, 0, 1, 1});
  auto rb = reliability_bins(p, 2);
  ASSERT_EQ(rb.bins.size(), 2u);
  EXPECT_DOUBLE_EQ(rb.bins[0].accuracy, 0.5);
  EXPECT_DOUBLE_EQ(rb.bins[0].confidence, 0.65);
  EXPECT_DOUBLE_EQ(rb.bins[1].accuracy, 1.0);
  EXPECT_DOUBLE_EQ(rb.bins[1].confidence, 0.85);
  EXPECT_NEAR(ace(p, 2), 0.15, 1e-15);
  auto one = reliability_bins(p, 1);
  EXPECT_DOUBLE_EQ(one.bins[0].accuracy, 0.75);
  EXPECT_DOUBLE_EQ(one.bins[0].confidence, 0.75);
  EXPECT_THROW(reliability_bins(p, 5), std::invalid_argument);
}

TEST(ReliabilityBins, CountsDifferByAtMostOne) {
  Rng rng(1);
  for (std::size_t n = 1; n <= 60; ++n)
    for (std::size_t R = 1; R <= n && R <= 12; ++R) {
      auto s = oracle::random_set(n, 3, rng);
      auto rb = reliability_bins(from(s), R);
      std::size_t lo = n, hi = 0, total = 0;
      for (std::size_t r = 0; r < R; ++r) {
        lo = std::min(lo, rb.bins[r].count);
        hi = std::max(hi, rb.bins[r].count);
        total += rb.bins[r].count;
        if (r > 0) EXPECT_LE(rb.bins[r].count, rb.bins[r - 1].count);
      }
      EXPECT_LE(hi - lo, 1u);
      EXPECT_EQ(total, n);
    }
}

TEST(Ace, CalibratedConstructionIsZero) {
  // Ten bins of ten rows; in bin r the share correct equals the confidence.
  std::vector<double> conf;
  std::vector<int> correct;
  for (int r = 0; r < 10; ++r)
    for (int k = 0; k < 10; ++k) {
      conf.push_back((5 + (r + 1) / 2) / 10.0);
      correct.push_back(k < 5 + (r + 1) / 2 ? 1 : 0);
    }
  Predictions p = two_class(conf, correct);
  EXPECT_LT(ace(p, 10), 1e-12);
  Predictions sure = two_class(std::vector<double>(20, 1.0), std::vector<int>(20, 1));
  EXPECT_EQ(ace(sure, 10), 0.0);
}

TEST(Ece, Examples) {
  EXPECT_NEAR(ece(two_class({0.9}, {1}), 10), 0.1, 1e-15);
  Predictions p = two_class({0.61, 0.62, 0.63, 0.64}, {1, 0, 1, 1});
  EXPECT_NEAR(ece(p, 10), std::fabs(0.75 - 0.625), 1e-15);
  Predictions edge = two_class({0.5, 0.7, 0.7000000000000001}, {1, 1, 0});
  auto rb = equal_width_bins(edge, 10);
  EXPECT_EQ(rb.bins[4].count, 1u);  // 0.5 belongs to (0.4, 0.5]
  EXPECT_EQ(rb.bins[6].count, 1u);  // 0.7 belongs to (0.6, 0.7]
  EXPECT_EQ(rb.bins[7].count, 1u);
}

TEST(Metrics, MatchBruteForceOracles) {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 10 + rng.uniform_index(191);
    const std::size_t c = 2 + rng.uniform_index(5);
    auto s = oracle::random_set(n, c, rng);
    auto p = from(s);
    EXPECT_NEAR(ace(p, 10), oracle::ace(s, 10), 1e-12);
    EXPECT_NEAR(ece(p, 10), oracle::ece(s, 10), 1e-12);
    EXPECT_NEAR(mmc(p), oracle::mmc(s.probs), 1e-12);
    EXPECT_NEAR(sparsification_error(p), oracle::sparsification(s), 1e-12);
    EXPECT_GE(sparsification_error(p), -1e-12);
    const double a = ace(p, 10), e = ece(p, 10);
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 1.0);
    EXPECT_GE(e, 0.0);
    EXPECT_LE(e, 1.0);
  }
}

TEST(Auroc, Examples) {
  EXPECT_EQ(auroc({0.9, 0.8}, {0.1, 0.2}), 1.0);
  EXPECT_EQ(auroc({0.5, 0.5}, {0.5}), 0.5);
  EXPECT_EQ(auroc({0.9, 0.8}, {0.7, 0.85}), 0.75);
  EXPECT_THROW(auroc({}, {0.1}), std::invalid_argument);
}

TEST(Auroc, MatchesPairAndRocOracles) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> in(1 + rng.uniform_index(100)), out(1 + rng.uniform_index(100));
    const bool ties = trial % 2 == 0;
    for (auto& v : in) v = ties ? std::floor(rng.uniform() * 8) / 8 : rng.uniform();
    for (auto& v : out) v = ties ? std::floor(rng.uniform() * 8) / 8 : rng.uniform() * 0.8;
    const double a = auroc(in, out);
    EXPECT_NEAR(a, oracle::auroc_pairs(in, out), 1e-12);
    EXPECT_NEAR(a, oracle::auroc_roc(in, out), 1e-12);
    if (!ties) EXPECT_NEAR(a + auroc(out, in), 1.0, 1e-12);
  }
}

TEST(Mmc, Examples) {
  EXPECT_NEAR(mmc(Predictions{Matrix(3, 10, 0.1), {}}), 0.1, 1e-15);
  EXPECT_NEAR(mmc(Predictions{Matrix::from_rows({{0.9, 0.1}, {0.3, 0.7}}), {}}), 0.8, 1e-15);
  EXPECT_EQ(mmc(Predictions{Matrix::from_rows({{0, 1}, {1, 0}}), {}}), 1.0);
}

TEST(Sparsification, Examples) {
  EXPECT_EQ(sparsification_error(two_class({0.9, 0.8, 0.6}, {1, 1, 0})), 0.0);
  EXPECT_NEAR(sparsification_error(two_class({0.9, 0.6}, {0, 1})), 0.5, 1e-15);
  EXPECT_EQ(sparsification_error(two_class({0.6, 0.9, 0.7}, {1, 1, 1})), 0.0);
}

TEST(Temperature, ScaleExamples) {
  Matrix l = Matrix::from_rows({{3, 1}});
  EXPECT_EQ(temperature_scale(l, 1.0), softmax(l));
  Matrix flat = temperature_scale(l, 1e6);
  EXPECT_NEAR(flat(0, 0), 0.5, 1e-6);
  Matrix sharp = temperature_scale(Matrix::from_rows({{1, 0}}), 0.5);
  EXPECT_NEAR(sharp(0, 0), 0.8808, 1e-4);
  EXPECT_THROW(temperature_scale(l, 0.0), std::invalid_argument);
}

TEST(Temperature, AccuracyInvariant) {
  Rng rng(4);
  for (int t = 0; t < 20; ++t) {
    Matrix logits(50, 4);
    for (auto& v : logits.data()) v = rng.normal(0, 3);
    std::vector<int> labels(50);
    for (auto& y : labels) y = static_cast<int>(rng.uniform_index(4));
    const double base = accuracy({softmax(logits), labels});
    for (double T : {0.1, 0.5, 2.0, 10.0}) EXPECT_EQ(accuracy({temperature_scale(logits, T), labels}), base);
  }
}

TEST(Temperature, FitHandExample) {
  TemperatureFit f = fit_temperature(Matrix::from_rows({{1, 0}}), {0}, TemperatureCriterion::Nll, {0.5, 1.0, 2.0});
  ASSERT_EQ(f.grid.size(), 3u);
  EXPECT_NEAR(f.grid[0].value, 0.1269, 1e-4);
  EXPECT_NEAR(f.grid[1].value, 0.3133, 1e-4);
  EXPECT_NEAR(f.grid[2].value, 0.4741, 1e-4);
  EXPECT_EQ(f.temperature, 0.5);
}

TEST(Temperature, TiesPickSmallestTemperature) {
  // Logits all zero: every temperature gives the same NLL.
  TemperatureFit f = fit_temperature(Matrix(4, 3), {0, 1, 2, 0}, TemperatureCriterion::Nll, {3.0, 0.2, 1.0});
  EXPECT_EQ(f.temperature, 0.2);
}

TEST(Temperature, GridIsLogSpaced) {
  auto g = log_spaced_grid();
  ASSERT_EQ(g.size(), 200u);
  EXPECT_NEAR(g.front(), 0.1, 1e-15);
  EXPECT_NEAR(g.back(), 10.0, 1e-12);
  for (std::size_t i = 2; i < g.size(); ++i) EXPECT_NEAR(g[i] / g[i - 1], g[1] / g[0], 1e-12);
}

TEST(Temperature, CalibratedLogitsFitNearOne) {
  // Labels drawn from softmax(logits): T = 1 is the population NLL optimum.
  Rng rng(5);
  const std::size_t n = 20000;
  Matrix logits(n, 3);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < 3; ++j) logits(i, j) = rng.normal(0, 2);
    Matrix p = softmax(logits.row_copy(i));
    double u = rng.uniform(), acc = 0.0;
    labels[i] = 2;
    for (std::size_t j = 0; j < 3; ++j)
      if (u < (acc += p(0, j))) {
        labels[i] = static_cast<int>(j);
        break;
      }
  }
  auto grid = log_spaced_grid();
  TemperatureFit f = fit_temperature(logits, labels, TemperatureCriterion::Nll, grid);
  const double step = std::log(grid[1] / grid[0]);
  EXPECT_LE(std::fabs(std::log(f.temperature)), 2 * step);
  // Against an exhaustive finer grid computed by the oracle.
  auto fine = log_spaced_grid(0.1, 10.0, 2000);
  double best_t = fine[0], best = oracle::nll_at(logits, labels, fine[0]);
  for (double t : fine) {
    double v = oracle::nll_at(logits, labels, t);
    if (v < best) {
      best = v;
      best_t = t;
    }
  }
  EXPECT_LE(std::fabs(std::log(f.temperature / best_t)), step);
}

TEST(Sweep, SinglePointAndConsistency) {
  Matrix l = Matrix::from_rows({{2, 0}, {0, 1}, {1, 1.5}});
  std::vector<int> y = {0, 1, 0};
  SweepTable one = sweep_temperature(l, y, l, y, {1.0}, 1);
  ASSERT_EQ(one.rows.size(), 1u);
  EXPECT_FALSE(one.optima_differ());

  auto a7 = oracle::a7_set();
  auto grid = log_spaced_grid();
  SweepTable t = sweep_temperature(a7.logits, a7.labels, a7.logits, a7.labels, grid);
  EXPECT_EQ(t.argmin_nll, fit_temperature(a7.logits, a7.labels, TemperatureCriterion::Nll, grid).temperature);
  EXPECT_EQ(t.argmin_ace, fit_temperature(a7.logits, a7.labels, TemperatureCriterion::Ace, grid).temperature);
  EXPECT_TRUE(t.optima_differ());
  double min_ace = 1.0, ace_at_nll = 0.0;
  for (const auto& r : t.rows) {
    min_ace = std::min(min_ace, r.ace_val);
    if (r.temperature == t.argmin_nll) ace_at_nll = r.ace_val;
    EXPECT_NEAR(r.nll_val, oracle::nll_at(a7.logits, a7.labels, r.temperature), 1e-12);
  }
  EXPECT_GT(ace_at_nll, min_ace);
}

TEST(Metrics, Pure) {
  Rng rng(6);
  auto s = oracle::random_set(77, 4, rng);
  auto p = from(s);
  EXPECT_EQ(ace(p), ace(p));
  EXPECT_EQ(ece(p), ece(p));
  EXPECT_EQ(sparsification_error(p), sparsification_error(p));
}
