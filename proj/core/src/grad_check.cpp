#include "omada/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "omada/loss.hpp"

namespace omada {

LossValue evaluate_loss(LossKind kind, const Matrix& output, const Matrix& target) {
  if (kind == LossKind::SquaredError) return {mse(output, target), mse_grad(output, target)};
  const Matrix probs = softmax(output);
  return {soft_cross_entropy(probs, target), soft_cross_entropy_logit_grad(probs, target)};
}

double grad_check(const Mlp& net, const Matrix& x, const Matrix& target, LossKind loss, double h) {
  if (!(h >= 1e-6 && h <= 1e-3)) throw std::invalid_argument("grad_check: h must lie in [1e-6, 1e-3]");
  Rng rng(0);
  const ForwardResult fr = forward(net, x, Mode::Eval, rng);
  const LossValue lv = evaluate_loss(loss, fr.output, target);
  const Gradients analytic = backward(net, fr.cache, lv.output_grad);

  Mlp probe = net;
  auto loss_at = [&]() { return evaluate_loss(loss, predict(probe, x), target).value; };
  double worst = 0.0;
  auto check_block = [&](std::vector<double>& params, const std::vector<double>& grads) {
    for (std::size_t k = 0; k < params.size(); ++k) {
      const double saved = params[k];
      params[k] = saved + h;
      const double up = loss_at();
      params[k] = saved - h;
      const double down = loss_at();
      params[k] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = grads[k];
      const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  };
  for (std::size_t i = 0; i < probe.num_layers(); ++i) {
    check_block(probe.weights[i].data(), analytic.weights[i].data());
    check_block(probe.biases[i].data(), analytic.biases[i].data());
  }
  return worst;
}

}  // namespace omada
