#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include <gtest/gtest.h>

#include "omada/classifier_train.hpp"
#include "omada/dataset.hpp"
#include "omada/error.hpp"
#include "omada/loss.hpp"

using namespace omada;
using namespace omada::train;

namespace {

Matrix onehot(const std::vector<int>& y, std::size_t c) {
  Matrix m(y.size(), c);
  for (std::size_t i = 0; i < y.size(); ++i) m(i, static_cast<std::size_t>(y[i])) = 1.0;
  return m;
}

harness::Dataset mixture(std::size_t per_class, double sigma = 0.3, std::uint64_t seed = 1) {
  return harness::gen_dataset(harness::reference_mixture(sigma, per_class, seed));
}

ClfTrainConfig small_config(std::size_t epochs) {
  ClfTrainConfig cfg;
  cfg.epochs = epochs;
  cfg.hidden = {16, 16};
  cfg.lr_milestones = {};
  cfg.min_validation = 10;
  return cfg;
}

std::shared_ptr<attack::AugmentationSet> fake_set(std::size_t n, std::size_t d, std::size_t c) {
  auto set = std::make_shared<attack::AugmentationSet>();
  Rng rng(99);
  for (std::size_t i = 0; i < n; ++i) {
    attack::OmadaSample s;
    s.input = Matrix(1, d);
    for (auto& v : s.input.data()) v = rng.uniform(-1, 1);
    s.label.assign(c, 1.0 / static_cast<double>(c));
    s.provenance = {i, 0};
    set->samples.push_back(s);
  }
  return set;
}

bool is_distribution(std::span<const double> row) {
  double s = 0.0;
  for (double v : row) {
    if (v < 0.0) return false;
    s += v;
  }
  return std::fabs(s - 1.0) < 1e-12;
}

}  // namespace

TEST(ClfConfig, DefaultsAndSchedule) {
  ClfTrainConfig cfg;
  EXPECT_EQ(cfg.momentum, 0.9);
  EXPECT_EQ(cfg.lr_decay, 0.1);
  EXPECT_DOUBLE_EQ(cfg.lr_at(0), cfg.lr);
  EXPECT_DOUBLE_EQ(cfg.lr_at(49), cfg.lr);
  EXPECT_DOUBLE_EQ(cfg.lr_at(50), cfg.lr * 0.1);
  EXPECT_DOUBLE_EQ(cfg.lr_at(80), cfg.lr * 0.01);
  cfg.lr_milestones = {5, 5};
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg.lr_milestones = {};
  cfg.validation_fraction = 0.6;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(ClfConfig, ValidationCount) {
  ClfTrainConfig cfg;
  EXPECT_EQ(validation_count(1500, cfg), 150u);
  EXPECT_EQ(validation_count(500, cfg), 100u);
  EXPECT_EQ(validation_count(120, cfg), 60u);
}

TEST(MethodParams, DefaultsAndValidation) {
  EXPECT_EQ(Mixup{}.alpha, 0.1);
  EXPECT_EQ(ManifoldMixup{}.alpha, 2.0);
  EXPECT_EQ(EpsSmoothing{}.epsilon, 0.1);
  EXPECT_THROW(validate(AugmentMethod{Mixup{0.0}}), std::invalid_argument);
  EXPECT_THROW(validate(AugmentMethod{EpsSmoothing{1.0}}), std::invalid_argument);
  EXPECT_THROW(validate(AugmentMethod{CedaNoise{1.5}}), std::invalid_argument);
  EXPECT_THROW(validate(AugmentMethod{Omada{std::make_shared<attack::AugmentationSet>()}}), std::invalid_argument);
  EXPECT_EQ(method_name(AugmentMethod{NoAugment{}}), "base");
}

TEST(TrainClassifier, ZeroEpochsReturnsInitialNet) {
  auto ds = mixture(40);
  auto cfg = small_config(0);
  Rng rng(3);
  TrainedClassifier tc = train_classifier(ds.x, ds.onehot(), NoAugment{}, cfg, rng);
  Rng replay(3);
  replay.permutation(ds.x.rows());
  Mlp expected = Mlp::init(MlpSpec::uniform({2, 16, 16, 3}, Activation::Relu), replay);
  EXPECT_EQ(tc.net, expected);
  EXPECT_EQ(tc.selected_epoch, 0u);
  EXPECT_TRUE(tc.history.train_loss.empty());
}

TEST(TrainClassifier, SplitsAreDisjointAndComplete) {
  auto ds = mixture(60);
  Rng rng(4);
  TrainedClassifier tc = train_classifier(ds.x, ds.onehot(), NoAugment{}, small_config(1), rng);
  EXPECT_EQ(tc.validation_indices.size(), validation_count(180, small_config(1)));
  std::vector<std::size_t> all = tc.train_indices;
  all.insert(all.end(), tc.validation_indices.begin(), tc.validation_indices.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i], i);
}

TEST(TrainClassifier, SeparableSetReachesFullAccuracy) {
  // Two clusters 2 apart with sigma 0.1: a margin of ~10 standard deviations.
  harness::DatasetSpec spec;
  spec.classes = 2;
  spec.centers = {{-1.0, 0.0}, {1.0, 0.0}};
  spec.sigma = 0.1;
  spec.per_class = 100;
  spec.seed = 5;
  auto ds = harness::gen_dataset(spec);
  auto cfg = small_config(50);
  cfg.early_stop_on_val_acc = false;
  Rng rng(5);
  TrainedClassifier tc = train_classifier(ds.x, ds.onehot(), NoAugment{}, cfg, rng);
  Matrix x = ds.x.select_rows(tc.train_indices);
  Matrix p = predict(tc.net, x);
  for (std::size_t i = 0; i < x.rows(); ++i)
    EXPECT_EQ(static_cast<int>(argmax(p.row(i))), ds.labels[tc.train_indices[i]]);
  EXPECT_EQ(tc.selected_epoch, 50u);
}

TEST(TrainClassifier, OmadaBatchesAreHalfAndHalf) {
  auto ds = mixture(50);
  auto cfg = small_config(3);
  cfg.batch_size = 8;
  Rng rng(6);
  TrainedClassifier tc = train_classifier(ds.x, ds.onehot(), Omada{fake_set(20, 2, 3)}, cfg, rng);
  const std::size_t updates = (tc.train_indices.size() + 7) / 8;
  ASSERT_EQ(tc.history.batches.size(), 3 * updates);
  for (const auto& b : tc.history.batches) EXPECT_EQ(b, (BatchComposition{4, 4}));

  cfg.batch_size = 7;
  Rng rng2(6);
  tc = train_classifier(ds.x, ds.onehot(), Omada{fake_set(20, 2, 3)}, cfg, rng2);
  for (const auto& b : tc.history.batches) EXPECT_EQ(b, (BatchComposition{4, 3}));
}

TEST(TrainClassifier, UpdateCountIsMethodIndependent) {
  auto ds = mixture(50);
  auto cfg = small_config(2);
  cfg.batch_size = 16;
  std::vector<AugmentMethod> methods = {NoAugment{},     Omada{fake_set(10, 2, 3)}, Mixup{}, ManifoldMixup{},
                                        EpsSmoothing{}, CedaNoise{}};
  std::size_t expected = 0;
  for (const auto& m : methods) {
    Rng rng(7);
    TrainedClassifier tc = train_classifier(ds.x, ds.onehot(), m, cfg, rng);
    if (expected == 0) expected = tc.history.batches.size();
    EXPECT_EQ(tc.history.batches.size(), expected) << method_name(m);
    for (double l : tc.history.train_loss) EXPECT_TRUE(std::isfinite(l));
  }
}

TEST(TrainClassifier, SelectedEpochIsLastBestValidation) {
  auto ds = mixture(80, 0.6);
  auto cfg = small_config(15);
  Rng rng(8);
  TrainedClassifier tc = train_classifier(ds.x, ds.onehot(), NoAugment{}, cfg, rng);
  const auto& acc = tc.history.val_accuracy;
  ASSERT_EQ(acc.size(), 15u);
  double best = *std::max_element(acc.begin(), acc.end());
  std::size_t last_best = 0;
  for (std::size_t e = 0; e < acc.size(); ++e)
    if (acc[e] == best) last_best = e + 1;
  EXPECT_EQ(tc.selected_epoch, last_best);
  // The kept weights reproduce the recorded validation accuracy.
  Matrix xv = ds.x.select_rows(tc.validation_indices);
  Matrix p = predict(tc.net, xv);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < xv.rows(); ++i)
    hit += static_cast<int>(argmax(p.row(i))) == ds.labels[tc.validation_indices[i]];
  EXPECT_DOUBLE_EQ(hit / double(xv.rows()), best);
}

TEST(TrainClassifier, MismatchedSetThrows) {
  auto ds = mixture(40);
  Rng rng(9);
  EXPECT_THROW(train_classifier(ds.x, ds.onehot(), Omada{fake_set(5, 3, 3)}, small_config(1), rng), ShapeError);
}

TEST(TrainClassifier, Deterministic) {
  auto ds = mixture(40);
  Rng a(10), b(10);
  auto cfg = small_config(3);
  EXPECT_EQ(train_classifier(ds.x, ds.onehot(), ManifoldMixup{}, cfg, a).net,
            train_classifier(ds.x, ds.onehot(), ManifoldMixup{}, cfg, b).net);
}

TEST(Mixup, Examples) {
  Matrix x1 = Matrix::from_rows({{0, 0}}), x2 = Matrix::from_rows({{2, 4}});
  Matrix y1 = Matrix::from_rows({{1, 0}}), y2 = Matrix::from_rows({{0, 1}});
  MixResult end = mix_pair(x1, y1, x2, y2, 1.0);
  EXPECT_EQ(end.x, x1);
  EXPECT_EQ(end.y, y1);
  MixResult mid = mix_pair(x1, y1, x2, y2, 0.5);
  EXPECT_EQ(mid.x, Matrix::from_rows({{1, 2}}));
  EXPECT_EQ(mid.y, Matrix::from_rows({{0.5, 0.5}}));
}

TEST(Mixup, LabelsAreConvexCombinations) {
  Rng rng(11);
  for (int t = 0; t < 200; ++t) {
    Matrix y1 = onehot({static_cast<int>(rng.uniform_index(4))}, 4);
    Matrix y2(1, 4);
    double s = 0.0;
    for (auto& v : y2.data()) s += (v = rng.uniform());
    for (auto& v : y2.data()) v /= s;
    MixResult r = mixup_batch(Matrix(1, 2), y1, Matrix(1, 2), y2, 0.1, rng);
    EXPECT_GE(r.lambda, 0.0);
    EXPECT_LE(r.lambda, 1.0);
    EXPECT_TRUE(is_distribution(r.y.row(0)));
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_GE(r.y(0, j), std::min(y1(0, j), y2(0, j)) - 1e-15);
      EXPECT_LE(r.y(0, j), std::max(y1(0, j), y2(0, j)) + 1e-15);
    }
  }
}

TEST(ManifoldMixup, LayerZeroIsInputMixup) {
  Rng rng(12);
  Mlp net = Mlp::init(MlpSpec::uniform({2, 5, 5, 3}, Activation::Relu), rng);
  Matrix x1 = Matrix::from_rows({{0.1, 0.2}, {1, -1}}), x2 = Matrix::from_rows({{-0.5, 0.3}, {0, 2}});
  Matrix y1 = onehot({0, 1}, 3), y2 = onehot({2, 2}, 3);
  ManifoldMixResult r = manifold_mixup_forward_at(net, x1, y1, x2, y2, 0, 0.3);
  MixResult m = mix_pair(x1, y1, x2, y2, 0.3);
  EXPECT_EQ(r.output, predict(net, m.x));
  EXPECT_EQ(r.y, m.y);
}

TEST(ManifoldMixup, LambdaOneIsPlainForward) {
  Rng rng(13);
  Mlp net = Mlp::init(MlpSpec::uniform({2, 5, 5, 3}, Activation::Relu), rng);
  Matrix x1 = Matrix::from_rows({{0.1, 0.2}}), x2 = Matrix::from_rows({{-0.5, 0.3}});
  for (std::size_t layer = 0; layer < 3; ++layer) {
    ManifoldMixResult r = manifold_mixup_forward_at(net, x1, onehot({0}, 3), x2, onehot({1}, 3), layer, 1.0);
    EXPECT_EQ(r.output, predict(net, x1)) << "layer " << layer;
  }
}

TEST(ManifoldMixup, HiddenLayerMixHandEvaluated) {
  Rng rng(14);
  Mlp net = Mlp::init(MlpSpec::uniform({2, 4, 3}, Activation::Tanh), rng);
  Matrix x1 = Matrix::from_rows({{0.4, -0.1}}), x2 = Matrix::from_rows({{-0.2, 0.9}});
  auto hidden = [&](const Matrix& x) {
    Matrix h = matmul(x, net.weights[0]);
    add_row_inplace(h, net.biases[0]);
    for (auto& v : h.data()) v = std::tanh(v);
    return h;
  };
  Matrix h = 0.25 * hidden(x1) + 0.75 * hidden(x2);
  Matrix out = matmul(h, net.weights[1]);
  add_row_inplace(out, net.biases[1]);
  ManifoldMixResult r = manifold_mixup_forward_at(net, x1, onehot({0}, 3), x2, onehot({1}, 3), 1, 0.25);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(r.output(0, j), out(0, j), 1e-15);
}

TEST(ManifoldMixup, LayerChoiceCoversInput) {
  Rng rng(15);
  Mlp net = Mlp::init(MlpSpec::uniform({2, 5, 5, 3}, Activation::Relu), rng);
  std::vector<int> seen(3, 0);
  Matrix x = Matrix::from_rows({{0.1, 0.2}});
  for (int i = 0; i < 300; ++i) ++seen[manifold_mixup_forward(net, x, onehot({0}, 3), x, onehot({1}, 3), 2.0, rng).layer];
  for (int s : seen) EXPECT_GT(s, 50);
}

TEST(EpsSmoothing, Examples) {
  Matrix y = onehot({3}, 10);
  EXPECT_EQ(eps_smooth_labels(y, 0.0), y);
  Matrix s = eps_smooth_labels(y, 0.1);
  EXPECT_DOUBLE_EQ(s(0, 3), 0.9);
  EXPECT_NEAR(s(0, 0), 0.1 / 9, 1e-17);
  EXPECT_TRUE(is_distribution(s.row(0)));
  Matrix h = eps_smooth_labels(onehot({0, 1}, 2), 0.5);
  EXPECT_EQ(h, Matrix::from_rows({{0.5, 0.5}, {0.5, 0.5}}));
}

TEST(Ceda, LabelsPermutationsAndBounds) {
  Rng rng(16);
  Matrix real(20, 3);
  for (auto& v : real.data()) v = rng.uniform(-1, 1);
  FeatureBounds bounds = {{-1, 1}, {0, 2}, {5, 6}};
  NoiseBatch nb = ceda_noise_batch(10, bounds, 0.5, real, 4, rng);
  ASSERT_EQ(nb.x.rows(), 10u);
  EXPECT_EQ(nb.permuted, 5u);
  for (double v : nb.y.data()) EXPECT_EQ(v, 0.25);
  for (std::size_t i = 0; i < nb.permuted; ++i) {
    std::vector<double> a(nb.x.row(i).begin(), nb.x.row(i).end());
    std::vector<double> b(real.row(nb.sources[i]).begin(), real.row(nb.sources[i]).end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    EXPECT_EQ(a, b);
  }
  NoiseBatch noise = ceda_noise_batch(10000, bounds, 0.0, real, 4, rng);
  EXPECT_EQ(noise.permuted, 0u);
  for (std::size_t i = 0; i < noise.x.rows(); ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_GE(noise.x(i, j), bounds[j].first);
      EXPECT_LE(noise.x(i, j), bounds[j].second);
    }
}

TEST(Ensemble, Examples) {
  Rng rng(17);
  Mlp a = Mlp::init(MlpSpec::uniform({2, 4, 2}, Activation::Relu), rng);
  Matrix x = Matrix::from_rows({{0.3, 0.4}, {-1, 2}});
  EXPECT_EQ(ensemble_predict({a}, x), softmax(predict(a, x)));

  Mlp hot0 = Mlp::zeros(MlpSpec::uniform({2, 2}, Activation::Tanh));
  Mlp hot1 = hot0;
  hot0.biases[0] = Matrix::from_rows({{800, 0}});
  hot1.biases[0] = Matrix::from_rows({{0, 800}});
  Matrix p = ensemble_predict({hot0, hot1}, x);
  for (double v : p.data()) EXPECT_DOUBLE_EQ(v, 0.5);

  Mlp wide = Mlp::init(MlpSpec::uniform({3, 4, 2}, Activation::Relu), rng);
  EXPECT_THROW(ensemble_predict({a, wide}, x), ShapeError);
  EXPECT_THROW(ensemble_predict({}, x), std::invalid_argument);
}

TEST(McDropout, Examples) {
  Rng rng(18);
  Mlp plain = Mlp::init(MlpSpec::uniform({2, 8, 3}, Activation::Relu), rng);
  Matrix x = Matrix::from_rows({{0.3, 0.4}});
  EXPECT_EQ(mc_dropout_predict(plain, x, 1, rng), softmax(predict(plain, x)));
  EXPECT_THROW(mc_dropout_predict(plain, x, 0, rng), std::invalid_argument);
}

TEST(McDropout, MorePassesVaryLess) {
  Rng init(19);
  Mlp net = Mlp::init(MlpSpec::uniform({2, 32, 3}, Activation::Relu, 0.5), init);
  Matrix x = Matrix::from_rows({{0.7, -0.4}});
  auto spread = [&](std::size_t passes) {
    double s = 0.0, s2 = 0.0;
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
      Rng rng(seed);
      double v = mc_dropout_predict(net, x, passes, rng)(0, 0);
      s += v;
      s2 += v * v;
    }
    return s2 / 40 - (s / 40) * (s / 40);
  };
  EXPECT_LT(spread(200), spread(15));
}
