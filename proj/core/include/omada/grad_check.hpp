#pragma once

#include "omada/matrix.hpp"
#include "omada/mlp.hpp"

namespace omada {

enum class LossKind {
  SquaredError,      // mse(output, target)
  SoftCrossEntropy,  // soft_cross_entropy(softmax(output), target)
};

struct LossValue {
  double value = 0.0;
  Matrix output_grad;
};

/// Loss and its gradient with respect to the network output.
LossValue evaluate_loss(LossKind kind, const Matrix& output, const Matrix& target);

/// Compares backprop gradients (eval mode) against central differences with
/// step h. Returns max |analytic - numeric| / max(1, |analytic|, |numeric|)
/// over every weight and bias.
double grad_check(const Mlp& net, const Matrix& x, const Matrix& target, LossKind loss, double h = 1e-5);

}  // namespace omada
