#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <gtest/gtest.h>

#include "omada/error.hpp"
#include "omada/grad_check.hpp"
#include "omada/loss.hpp"
#include "omada/matrix.hpp"
#include "omada/mlp.hpp"
#include "omada/optim.hpp"
#include "omada/rng.hpp"

using namespace omada;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (auto& v : m.data()) v = rng.uniform(-scale, scale);
  return m;
}

Matrix random_simplex(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      m(i, j) = rng.gamma(1.0);
      s += m(i, j);
    }
    for (std::size_t j = 0; j < c; ++j) m(i, j) /= s;
  }
  return m;
}

}  // namespace

TEST(Matrix, MatmulAgainstLoops) {
  Rng rng(3);
  Matrix a = random_matrix(4, 3, rng), b = random_matrix(3, 5, rng);
  Matrix c = matmul(a, b);
  ASSERT_EQ(c.rows(), 4u);
  ASSERT_EQ(c.cols(), 5u);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 3; ++k) s += a(i, k) * b(k, j);
      EXPECT_NEAR(c(i, j), s, 1e-14);
    }
  Matrix at(3, 4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t k = 0; k < 3; ++k) at(k, i) = a(i, k);
  Matrix tn = matmul_tn(at, b);
  Matrix bt(5, 3);
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t j = 0; j < 5; ++j) bt(j, k) = b(k, j);
  Matrix nt = matmul_nt(a, bt);
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_NEAR(tn.data()[i], c.data()[i], 1e-14);
    EXPECT_NEAR(nt.data()[i], c.data()[i], 1e-14);
  }
}

TEST(Matrix, ShapeMismatchThrows) {
  Matrix a(2, 3), b(2, 3);
  EXPECT_THROW(matmul(a, b), ShapeError);
  EXPECT_THROW(a + Matrix(3, 2), ShapeError);
  EXPECT_THROW(vstack(a, Matrix(1, 2)), ShapeError);
  EXPECT_THROW(Matrix(2, 2, std::vector<double>{1.0}), ShapeError);
}

TEST(Matrix, RowHelpers) {
  Matrix m = Matrix::from_rows({{1, 2}, {3, 4}, {5, 6}});
  std::vector<std::size_t> idx = {2, 0};
  Matrix s = m.select_rows(idx);
  EXPECT_EQ(s, Matrix::from_rows({{5, 6}, {1, 2}}));
  EXPECT_EQ(column_sums(m), Matrix::from_rows({{9, 12}}));
  EXPECT_EQ(vstack(m.row_copy(0), m.row_copy(2)), Matrix::from_rows({{1, 2}, {5, 6}}));
  Matrix bias = Matrix::from_rows({{10, 20}});
  add_row_inplace(m, bias);
  EXPECT_EQ(m(1, 1), 24.0);
  m(0, 0) = std::nan("");
  EXPECT_FALSE(m.all_finite());
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  Rng c(42);
  Rng d1 = c.derive(1), d1b = c.derive(1), d2 = c.derive(2);
  EXPECT_EQ(d1.next_u64(), d1b.next_u64());
  EXPECT_NE(c.derive(1).next_u64(), d2.next_u64());
}

TEST(Rng, DistributionMoments) {
  Rng rng(7);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0, sb = 0;
  std::vector<int> hist(5, 0);
  for (int i = 0; i < n; ++i) {
    double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    su += u;
    double z = rng.normal();
    sn += z;
    sn2 += z * z;
    sb += rng.beta(2.0, 2.0);
    ++hist[rng.uniform_index(5)];
  }
  EXPECT_NEAR(su / n, 0.5, 0.005);
  EXPECT_NEAR(sn / n, 0.0, 0.01);
  EXPECT_NEAR(sn2 / n, 1.0, 0.015);
  EXPECT_NEAR(sb / n, 0.5, 0.005);
  for (int h : hist) EXPECT_NEAR(h / double(n), 0.2, 0.005);

  double sg = 0;
  for (int i = 0; i < n; ++i) sg += rng.gamma(0.3);
  EXPECT_NEAR(sg / n, 0.3, 0.01);
}

TEST(Rng, PermutationIsPermutation) {
  Rng rng(1);
  auto p = rng.permutation(50);
  std::vector<std::size_t> sorted = p;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
}

TEST(Mlp, IdentityLinearNet) {
  Mlp net = Mlp::zeros(MlpSpec::uniform({2, 2}, Activation::Tanh));
  net.weights[0] = Matrix::from_rows({{1, 0}, {0, 1}});
  Matrix y = predict(net, Matrix::from_rows({{1, 2}}));
  EXPECT_EQ(y, Matrix::from_rows({{1, 2}}));
}

TEST(Mlp, ZeroNetGivesZero) {
  Mlp net = Mlp::zeros(MlpSpec::uniform({3, 5, 4}, Activation::Relu));
  Matrix y = predict(net, Matrix::from_rows({{1, -2, 3}}));
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Mlp, HandEvaluatedTwoLayerTanh) {
  Rng rng(0);
  Mlp net = Mlp::init(MlpSpec::uniform({2, 2, 2}, Activation::Tanh), rng);
  const auto& W1 = net.weights[0];
  const auto& b1 = net.biases[0];
  const auto& W2 = net.weights[1];
  const auto& b2 = net.biases[1];
  double h0 = std::tanh(1.0 * W1(0, 0) + 0.0 * W1(1, 0) + b1(0, 0));
  double h1 = std::tanh(1.0 * W1(0, 1) + 0.0 * W1(1, 1) + b1(0, 1));
  double o0 = h0 * W2(0, 0) + h1 * W2(1, 0) + b2(0, 0);
  double o1 = h0 * W2(0, 1) + h1 * W2(1, 1) + b2(0, 1);
  Matrix y = predict(net, Matrix::from_rows({{1, 0}}));
  EXPECT_NEAR(y(0, 0), o0, 1e-15);
  EXPECT_NEAR(y(0, 1), o1, 1e-15);
}

TEST(Mlp, InputDimensionMismatchThrows) {
  Rng rng(0);
  Mlp net = Mlp::init(MlpSpec::uniform({3, 4, 2}, Activation::Relu), rng);
  EXPECT_THROW(predict(net, Matrix(1, 2)), ShapeError);
}

TEST(Mlp, SpecValidation) {
  EXPECT_THROW(MlpSpec::uniform({3}, Activation::Relu).validate(), std::invalid_argument);
  EXPECT_THROW(MlpSpec::uniform({3, 0, 2}, Activation::Relu).validate(), std::invalid_argument);
  EXPECT_THROW(MlpSpec::uniform({3, 4, 2}, Activation::Relu, 1.0).validate(), std::invalid_argument);
  EXPECT_EQ(MlpSpec::uniform({3, 4, 2}, Activation::Relu).parameter_count(), 3u * 4 + 4 + 4 * 2 + 2);
}

TEST(Mlp, ForwardIsBitReproducible) {
  Rng init(5);
  Mlp net = Mlp::init(MlpSpec::uniform({3, 8, 8, 2}, Activation::Relu, 0.3), init);
  Matrix x = random_matrix(6, 3, init);
  Rng r1(11), r2(11);
  EXPECT_EQ(forward(net, x, Mode::Train, r1).output, forward(net, x, Mode::Train, r2).output);
  Rng r3(12);
  EXPECT_EQ(forward(net, x, Mode::Eval, r3).output, predict(net, x));
}

TEST(Mlp, DropoutExpectationMatchesEval) {
  Rng init(9);
  Mlp net = Mlp::init(MlpSpec::uniform({2, 16, 3}, Activation::Tanh, 0.4), init);
  Matrix x = Matrix::from_rows({{0.3, -0.7}});
  Matrix eval = predict(net, x);
  const int n = 10000;
  std::vector<double> sum(3, 0.0), sum2(3, 0.0);
  Rng rng(10);
  for (int i = 0; i < n; ++i) {
    Matrix y = forward(net, x, Mode::Train, rng).output;
    for (std::size_t j = 0; j < 3; ++j) {
      sum[j] += y(0, j);
      sum2[j] += y(0, j) * y(0, j);
    }
  }
  for (std::size_t j = 0; j < 3; ++j) {
    double mean = sum[j] / n;
    double var = sum2[j] / n - mean * mean;
    double se = std::sqrt(var / n);
    EXPECT_LE(std::fabs(mean - eval(0, j)), 3.0 * se) << "output " << j;
  }
}

TEST(Loss, SoftmaxExamples) {
  Matrix p = softmax(Matrix::from_rows({{0, 0}, {1000, 0}, {1, 0}}));
  EXPECT_DOUBLE_EQ(p(0, 0), 0.5);
  EXPECT_NEAR(p(1, 0), 1.0, 1e-15);
  EXPECT_LT(p(1, 1), 1e-300);
  double e = std::exp(1.0);
  EXPECT_NEAR(p(2, 0), e / (e + 1), 1e-15);
  EXPECT_NEAR(p(2, 1), 1 / (e + 1), 1e-15);
}

TEST(Loss, SoftmaxRowsSumToOne) {
  Rng rng(2);
  Matrix logits = random_matrix(200, 7, rng, 1e3);
  Matrix p = softmax(logits);
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double s = 0.0;
    for (double v : p.row(i)) s += v;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Loss, CrossEntropyExamples) {
  EXPECT_LE(soft_cross_entropy(Matrix::from_rows({{1, 0}}), Matrix::from_rows({{1, 0}})), 1e-11);
  EXPECT_NEAR(soft_cross_entropy(Matrix::from_rows({{0.5, 0.5}}), Matrix::from_rows({{0.5, 0.5}})), std::log(2.0),
              1e-15);
  EXPECT_NEAR(soft_cross_entropy(Matrix::from_rows({{0.7311, 0.2689}}), Matrix::from_rows({{1, 0}})),
              -std::log(0.7311), 1e-15);
  // Zero prediction under positive target hits the clamp, not infinity.
  double clamped = soft_cross_entropy(Matrix::from_rows({{0, 1}}), Matrix::from_rows({{1, 0}}));
  EXPECT_NEAR(clamped, -std::log(kProbFloor), 1e-9);
  EXPECT_THROW(soft_cross_entropy(Matrix(1, 2), Matrix(1, 3)), ShapeError);
}

TEST(Loss, GibbsInequality) {
  Rng rng(4);
  for (int trial = 0; trial < 500; ++trial) {
    std::size_t c = 2 + rng.uniform_index(6);
    Matrix p = random_simplex(1, c, rng), t = random_simplex(1, c, rng);
    double ce = soft_cross_entropy(p, t);
    double h = shannon_entropy(t)(0, 0);
    EXPECT_GE(ce - h, -1e-10);
    EXPECT_NEAR(soft_cross_entropy(t, t), h, 1e-12);
  }
}

TEST(Loss, EntropyExamples) {
  Matrix h = shannon_entropy(Matrix::from_rows({{1, 0, 0, 0}, {0.25, 0.25, 0.25, 0.25}}));
  EXPECT_EQ(h(0, 0), 0.0);
  EXPECT_NEAR(h(1, 0), std::log(4.0), 1e-15);
  std::vector<double> v = {0.5, 0.25, 0.25};
  EXPECT_NEAR(entropy(v), 1.5 * std::log(2.0), 1e-15);
}

TEST(Loss, ArgmaxTiesGoLow) {
  std::vector<double> v = {0.2, 0.4, 0.4};
  EXPECT_EQ(argmax(v), 1u);
}

TEST(Backward, ZeroLossGradGivesZero) {
  Rng rng(1);
  Mlp net = Mlp::init(MlpSpec::uniform({3, 5, 2}, Activation::Tanh), rng);
  Matrix x = random_matrix(4, 3, rng);
  auto fr = forward(net, x, Mode::Eval, rng);
  Gradients g = backward(net, fr.cache, Matrix(4, 2));
  for (const auto& w : g.weights)
    for (double v : w.data()) EXPECT_EQ(v, 0.0);
  for (const auto& b : g.biases)
    for (double v : b.data()) EXPECT_EQ(v, 0.0);
}

TEST(Backward, LinearNetGradientIsXtG) {
  Rng rng(2);
  Mlp net = Mlp::init(MlpSpec::uniform({3, 2}, Activation::Tanh), rng);
  Matrix x = random_matrix(5, 3, rng);
  auto fr = forward(net, x, Mode::Eval, rng);
  Matrix target = random_matrix(5, 2, rng);
  Matrix lg = mse_grad(fr.output, target);
  Gradients g = backward(net, fr.cache, lg);
  Matrix expected = matmul_tn(x, lg);
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(g.weights[0].data()[i], expected.data()[i], 1e-15);
}

TEST(Backward, MismatchedCacheThrows) {
  Rng rng(3);
  Mlp net = Mlp::init(MlpSpec::uniform({3, 5, 2}, Activation::Tanh), rng);
  auto fr = forward(net, random_matrix(4, 3, rng), Mode::Eval, rng);
  EXPECT_THROW(backward(net, fr.cache, Matrix(3, 2)), ShapeError);
  Mlp other = Mlp::init(MlpSpec::uniform({3, 6, 2}, Activation::Tanh), rng);
  EXPECT_THROW(backward(other, fr.cache, Matrix(4, 2)), ShapeError);
}

TEST(Backward, InputGradientMatchesFiniteDifference) {
  Rng rng(8);
  Mlp net = Mlp::init(MlpSpec::uniform({2, 6, 3}, Activation::Tanh), rng);
  Matrix x = random_matrix(1, 2, rng);
  Matrix t = random_simplex(1, 3, rng);
  auto fr = forward(net, x, Mode::Eval, rng);
  Gradients g = backward(net, fr.cache, soft_cross_entropy_logit_grad(softmax(fr.output), t));
  const double h = 1e-6;
  for (std::size_t j = 0; j < 2; ++j) {
    Matrix xp = x, xm = x;
    xp(0, j) += h;
    xm(0, j) -= h;
    double num = (soft_cross_entropy(softmax(predict(net, xp)), t) - soft_cross_entropy(softmax(predict(net, xm)), t)) /
                 (2 * h);
    EXPECT_NEAR(g.input(0, j), num, 1e-8);
  }
}

TEST(Optim, ZeroLearningRateLeavesParameters) {
  Rng rng(1);
  Mlp net = Mlp::init(MlpSpec::uniform({2, 3, 2}, Activation::Relu), rng);
  Mlp before = net;
  Gradients g = Gradients::zeros_like(net);
  for (auto& w : g.weights)
    for (auto& v : w.data()) v = rng.normal();
  SgdState st;
  sgd_update(net, g, st, {0.0, 0.9, 5e-4});
  EXPECT_EQ(net, before);
}

TEST(Optim, HandStep) {
  Mlp net = Mlp::zeros(MlpSpec::uniform({1, 1}, Activation::Tanh));
  net.weights[0](0, 0) = 1.0;
  Gradients g = Gradients::zeros_like(net);
  g.weights[0](0, 0) = 0.5;
  SgdState st;
  sgd_update(net, g, st, {0.1, 0.0, 0.0});
  EXPECT_DOUBLE_EQ(net.weights[0](0, 0), 0.95);
}

TEST(Optim, MomentumAccumulates) {
  Mlp net = Mlp::zeros(MlpSpec::uniform({1, 1}, Activation::Tanh));
  net.weights[0](0, 0) = 1.0;
  Gradients g = Gradients::zeros_like(net);
  g.weights[0](0, 0) = 1.0;
  SgdState st;
  SgdParams p{0.1, 0.9, 0.0};
  sgd_update(net, g, st, p);  // v = 1
  sgd_update(net, g, st, p);  // v = 1.9
  EXPECT_NEAR(net.weights[0](0, 0), 1.0 - 0.1 - 0.19, 1e-15);
  EXPECT_EQ(SgdParams{}.momentum, 0.9);
}

TEST(GradCheck, LinearSquaredErrorIsExact) {
  Rng rng(6);
  Mlp net = Mlp::init(MlpSpec::uniform({4, 3}, Activation::Tanh), rng);
  EXPECT_LT(grad_check(net, random_matrix(5, 4, rng), random_matrix(5, 3, rng), LossKind::SquaredError), 1e-8);
}

TEST(GradCheck, ThreeLayerTanhSoftCrossEntropy) {
  Rng rng(7);
  Mlp net = Mlp::init(MlpSpec::uniform({3, 8, 8, 4}, Activation::Tanh), rng);
  EXPECT_LT(grad_check(net, random_matrix(6, 3, rng), random_simplex(6, 4, rng), LossKind::SoftCrossEntropy), 1e-4);
}

TEST(GradCheck, DropoutNetIsDeterministicInEval) {
  Rng rng(8);
  Mlp net = Mlp::init(MlpSpec::uniform({3, 8, 4}, Activation::Relu, 0.5), rng);
  Matrix x = random_matrix(6, 3, rng), t = random_simplex(6, 4, rng);
  double a = grad_check(net, x, t, LossKind::SoftCrossEntropy);
  double b = grad_check(net, x, t, LossKind::SoftCrossEntropy);
  EXPECT_EQ(a, b);
}

TEST(GradCheck, StepOutOfRangeThrows) {
  Mlp net = Mlp::zeros(MlpSpec::uniform({1, 1}, Activation::Tanh));
  EXPECT_THROW(grad_check(net, Matrix(1, 1), Matrix(1, 1), LossKind::SquaredError, 1e-2), std::invalid_argument);
}
