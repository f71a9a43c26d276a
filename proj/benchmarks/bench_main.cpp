#include <benchmark/benchmark.h>

#include "omada/calib_metrics.hpp"
#include "omada/dataset.hpp"
#include "omada/latent_attack.hpp"
#include "omada/loss.hpp"
#include "omada/manifold_model.hpp"
#include "omada/mlp.hpp"

using namespace omada;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (auto& v : m.data()) v = rng.normal();
  return m;
}

void BM_Forward(benchmark::State& state) {
  Rng rng(1);
  const auto width = static_cast<std::size_t>(state.range(0));
  Mlp net = Mlp::init(MlpSpec::uniform({2, width, width, 3}, Activation::Relu), rng);
  Matrix x = random_matrix(64, 2, rng);
  for (auto _ : state) benchmark::DoNotOptimize(predict(net, x));
}
BENCHMARK(BM_Forward)->Arg(32)->Arg(64)->Arg(128);

void BM_ForwardBackward(benchmark::State& state) {
  Rng rng(2);
  const auto width = static_cast<std::size_t>(state.range(0));
  Mlp net = Mlp::init(MlpSpec::uniform({2, width, width, 3}, Activation::Relu), rng);
  Matrix x = random_matrix(64, 2, rng);
  Matrix target(64, 3, 1.0 / 3.0);
  for (auto _ : state) {
    auto fr = forward(net, x, Mode::Train, rng);
    Matrix probs = softmax(fr.output);
    benchmark::DoNotOptimize(backward(net, fr.cache, soft_cross_entropy_logit_grad(probs, target)));
  }
}
BENCHMARK(BM_ForwardBackward)->Arg(32)->Arg(64)->Arg(128);

void BM_LatentAttack(benchmark::State& state) {
  auto ds = harness::gen_dataset(harness::reference_mixture(0.6, 100, 3));
  manifold::GenTrainConfig cfg;
  cfg.epochs = 10;
  Rng rng(3);
  auto gen = manifold::train_generative(ds.x, ds.labels, cfg, rng);
  attack::AttackConfig acfg;
  acfg.steps = static_cast<std::size_t>(state.range(0));
  const Matrix source = ds.x.row_copy(0);
  const auto target = attack::make_single_target(1, 3);
  for (auto _ : state) benchmark::DoNotOptimize(attack::pgd_attack(gen.model, gen.classifier, source, target, acfg));
}
BENCHMARK(BM_LatentAttack)->Arg(100)->Arg(1000);

metrics::Predictions random_predictions(std::size_t n) {
  Rng rng(4);
  Matrix logits = random_matrix(n, 3, rng);
  std::vector<int> labels(n);
  for (auto& y : labels) y = static_cast<int>(rng.uniform_index(3));
  return {softmax(logits), labels};
}

void BM_Ace(benchmark::State& state) {
  auto p = random_predictions(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(metrics::ace(p, 10));
}
BENCHMARK(BM_Ace)->Arg(1000)->Arg(10000);

void BM_Ece(benchmark::State& state) {
  auto p = random_predictions(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(metrics::ece(p, 10));
}
BENCHMARK(BM_Ece)->Arg(1000)->Arg(10000);

void BM_Auroc(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto in = metrics::confidences(random_predictions(n).probs);
  Rng rng(5);
  std::vector<double> out(n);
  for (auto& v : out) v = rng.uniform(1.0 / 3.0, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(metrics::auroc(in, out));
}
BENCHMARK(BM_Auroc)->Arg(1000)->Arg(10000);

void BM_FitTemperature(benchmark::State& state) {
  Rng rng(6);
  Matrix logits = random_matrix(1500, 3, rng);
  std::vector<int> labels(1500);
  for (auto& y : labels) y = static_cast<int>(rng.uniform_index(3));
  const auto grid = metrics::log_spaced_grid();
  for (auto _ : state)
    benchmark::DoNotOptimize(metrics::fit_temperature(logits, labels, metrics::TemperatureCriterion::Nll, grid));
}
BENCHMARK(BM_FitTemperature);

}  // namespace
BENCHMARK_MAIN();
