#include "omada/mlp.hpp"

#include <cmath>
#include <stdexcept>

#include "omada/error.hpp"

namespace omada {

std::string to_string(Activation a) { return a == Activation::Tanh ? "tanh" : "relu"; }

Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "relu") return Activation::Relu;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

MlpSpec MlpSpec::uniform(std::vector<std::size_t> sizes, Activation act, double dropout) {
  MlpSpec spec;
  spec.layer_sizes = std::move(sizes);
  if (spec.layer_sizes.size() >= 2) spec.hidden_activations.assign(spec.layer_sizes.size() - 2, act);
  spec.dropout_rate = dropout;
  return spec;
}

std::size_t MlpSpec::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i + 1 < layer_sizes.size(); ++i) {
    n += layer_sizes[i] * layer_sizes[i + 1] + layer_sizes[i + 1];
  }
  return n;
}

void MlpSpec::validate() const {
  if (layer_sizes.size() < 2) throw std::invalid_argument("MlpSpec: need at least 2 layer sizes");
  for (auto s : layer_sizes) {
    if (s == 0) throw std::invalid_argument("MlpSpec: zero-width layer");
  }
  if (hidden_activations.size() != layer_sizes.size() - 2) {
    throw std::invalid_argument("MlpSpec: one activation per hidden layer required");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw std::invalid_argument("MlpSpec: dropout_rate must lie in [0, 1)");
  }
}

Mlp Mlp::zeros(const MlpSpec& spec) {
  spec.validate();
  Mlp net;
  net.spec = spec;
  for (std::size_t i = 0; i < spec.num_layers(); ++i) {
    net.weights.emplace_back(spec.layer_sizes[i], spec.layer_sizes[i + 1]);
    net.biases.emplace_back(1, spec.layer_sizes[i + 1]);
  }
  return net;
}

Mlp Mlp::init(const MlpSpec& spec, Rng& rng) {
  Mlp net = zeros(spec);
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    const double fan_in = static_cast<double>(spec.layer_sizes[i]);
    const double fan_out = static_cast<double>(spec.layer_sizes[i + 1]);
    // The layer feeding a relu uses He scaling; everything else Glorot.
    const bool relu = i < spec.hidden_activations.size() && spec.hidden_activations[i] == Activation::Relu;
    const double limit = relu ? std::sqrt(6.0 / fan_in) : std::sqrt(6.0 / (fan_in + fan_out));
    for (auto& w : net.weights[i].data()) w = rng.uniform(-limit, limit);
  }
  return net;
}

Gradients Gradients::zeros_like(const Mlp& net) {
  Gradients g;
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    g.weights.emplace_back(net.weights[i].rows(), net.weights[i].cols());
    g.biases.emplace_back(1, net.biases[i].cols());
  }
  return g;
}

void Gradients::accumulate(const Gradients& other) {
  if (other.weights.size() != weights.size()) throw ShapeError("Gradients::accumulate: layer count");
  for (std::size_t i = 0; i < weights.size(); ++i) {
    require_same_shape(weights[i], other.weights[i], "Gradients::accumulate");
    for (std::size_t k = 0; k < weights[i].size(); ++k) weights[i].data()[k] += other.weights[i].data()[k];
    for (std::size_t k = 0; k < biases[i].size(); ++k) biases[i].data()[k] += other.biases[i].data()[k];
  }
}

void Gradients::scale(double s) {
  for (auto& w : weights) for (auto& v : w.data()) v *= s;
  for (auto& b : biases) for (auto& v : b.data()) v *= s;
  for (auto& v : input.data()) v *= s;
}

namespace {

void apply_activation(Activation act, Matrix& m) {
  if (act == Activation::Tanh) {
    for (auto& v : m.data()) v = std::tanh(v);
  } else {
    for (auto& v : m.data()) v = v > 0.0 ? v : 0.0;
  }
}

}  // namespace

ForwardResult forward_range(const Mlp& net, const Matrix& x, std::size_t begin, std::size_t end,
                            Mode mode, Rng& rng) {
  const std::size_t layers = net.num_layers();
  if (begin > end || end > layers) throw ShapeError("forward_range: bad layer range");
  if (x.cols() != net.spec.layer_sizes[begin]) {
    throw ShapeError("forward: input has " + std::to_string(x.cols()) + " columns, layer " +
                     std::to_string(begin) + " expects " + std::to_string(net.spec.layer_sizes[begin]));
  }
  ForwardResult res;
  res.cache.begin = begin;
  res.cache.end = end;
  const double rate = net.spec.dropout_rate;
  const bool dropout = mode == Mode::Train && rate > 0.0;
  Matrix h = x;
  for (std::size_t i = begin; i < end; ++i) {
    Matrix z = matmul(h, net.weights[i]);
    add_row_inplace(z, net.biases[i]);
    res.cache.inputs.push_back(std::move(h));
    h = z;
    Matrix mask;
    if (i + 1 < layers) {
      apply_activation(net.spec.hidden_activations[i], h);
      if (dropout) {
        // Inverted dropout: kept units are scaled so eval mode needs no rescaling.
        mask = Matrix(h.rows(), h.cols());
        const double keep_scale = 1.0 / (1.0 - rate);
        for (auto& m : mask.data()) m = rng.uniform() < rate ? 0.0 : keep_scale;
        h = hadamard(h, mask);
      }
    }
    res.cache.pre.push_back(std::move(z));
    res.cache.masks.push_back(std::move(mask));
  }
  res.output = std::move(h);
  return res;
}

ForwardResult forward(const Mlp& net, const Matrix& x, Mode mode, Rng& rng) {
  return forward_range(net, x, 0, net.num_layers(), mode, rng);
}

Matrix predict(const Mlp& net, const Matrix& x) {
  Rng unused(0);
  return forward(net, x, Mode::Eval, unused).output;
}

Gradients backward(const Mlp& net, const ForwardCache& cache, const Matrix& loss_grad) {
  const std::size_t count = cache.end - cache.begin;
  if (cache.inputs.size() != count || cache.pre.size() != count || cache.end > net.num_layers()) {
    throw ShapeError("backward: cache does not match network");
  }
  Gradients g = Gradients::zeros_like(net);
  if (count == 0) {
    g.input = loss_grad;
    return g;
  }
  const Matrix& last_pre = cache.pre.back();
  if (loss_grad.rows() != last_pre.rows() || loss_grad.cols() != last_pre.cols()) {
    throw ShapeError("backward: loss gradient " + shape_string(loss_grad) + " for output " +
                     shape_string(last_pre));
  }
  Matrix delta = loss_grad;  // d loss / d (layer output)
  for (std::size_t k = count; k-- > 0;) {
    const std::size_t i = cache.begin + k;
    const Matrix& in = cache.inputs[k];
    if (in.cols() != net.weights[i].rows() || cache.pre[k].cols() != net.weights[i].cols()) {
      throw ShapeError("backward: stale cache for layer " + std::to_string(i));
    }
    if (i + 1 < net.num_layers()) {
      if (!cache.masks[k].empty()) delta = hadamard(delta, cache.masks[k]);
      const Matrix& z = cache.pre[k];
      if (net.spec.hidden_activations[i] == Activation::Tanh) {
        for (std::size_t t = 0; t < delta.size(); ++t) {
          const double a = std::tanh(z.data()[t]);
          delta.data()[t] *= 1.0 - a * a;
        }
      } else {
        for (std::size_t t = 0; t < delta.size(); ++t) {
          if (!(z.data()[t] > 0.0)) delta.data()[t] = 0.0;
        }
      }
    }
    g.weights[i] = matmul_tn(in, delta);
    g.biases[i] = column_sums(delta);
    delta = matmul_nt(delta, net.weights[i]);
  }
  g.input = std::move(delta);
  return g;
}

}  // namespace omada
