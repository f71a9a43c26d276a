#pragma once

#include <vector>

#include "omada/matrix.hpp"
#include "omada/mlp.hpp"

namespace omada {

struct SgdParams {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0;
};

/// Momentum buffers for one network, created lazily on first update.
struct SgdState {
  std::vector<Matrix> velocity_w;
  std::vector<Matrix> velocity_b;
};

/// Heavy-ball SGD with L2 weight decay on weights and biases:
///   g' = g + wd * w;  v = momentum * v + g';  w -= lr * v
void sgd_update(Mlp& net, const Gradients& grads, SgdState& state, const SgdParams& params);

}  // namespace omada
