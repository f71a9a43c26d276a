#include "omada/optim.hpp"

#include <stdexcept>

#include "omada/error.hpp"

namespace omada {

namespace {

void step(Matrix& param, const Matrix& grad, Matrix& velocity, const SgdParams& p) {
  require_same_shape(param, grad, "sgd_update");
  auto& w = param.data();
  const auto& g = grad.data();
  auto& v = velocity.data();
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double gk = g[k] + p.weight_decay * w[k];
    v[k] = p.momentum * v[k] + gk;
    w[k] -= p.lr * v[k];
  }
}

}  // namespace

void sgd_update(Mlp& net, const Gradients& grads, SgdState& state, const SgdParams& params) {
  if (params.lr < 0.0) throw std::invalid_argument("sgd_update: lr must be non-negative");
  if (grads.weights.size() != net.num_layers()) throw ShapeError("sgd_update: gradient layer count");
  if (state.velocity_w.size() != net.num_layers()) {
    state.velocity_w.clear();
    state.velocity_b.clear();
    for (std::size_t i = 0; i < net.num_layers(); ++i) {
      state.velocity_w.emplace_back(net.weights[i].rows(), net.weights[i].cols());
      state.velocity_b.emplace_back(1, net.biases[i].cols());
    }
  }
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    step(net.weights[i], grads.weights[i], state.velocity_w[i], params);
    step(net.biases[i], grads.biases[i], state.velocity_b[i], params);
  }
}

}  // namespace omada
