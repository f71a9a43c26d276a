#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "omada/matrix.hpp"
#include "omada/rng.hpp"

namespace omada {

enum class Activation { Tanh, Relu };
enum class Mode { Train, Eval };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

/// Topology of a dense feed-forward network. Hidden layers use the listed
/// activations; the output layer is linear (logits or raw regression output).
struct MlpSpec {
  std::vector<std::size_t> layer_sizes;
  std::vector<Activation> hidden_activations;
  double dropout_rate = 0.0;

  /// Convenience: every hidden layer uses `act`.
  static MlpSpec uniform(std::vector<std::size_t> sizes, Activation act, double dropout = 0.0);

  std::size_t num_layers() const { return layer_sizes.empty() ? 0 : layer_sizes.size() - 1; }
  std::size_t input_dim() const { return layer_sizes.front(); }
  std::size_t output_dim() const { return layer_sizes.back(); }
  std::size_t parameter_count() const;
  /// Throws std::invalid_argument when the invariants do not hold.
  void validate() const;

  bool operator==(const MlpSpec&) const = default;
};

/// Layer i maps layer_sizes[i] -> layer_sizes[i+1] with weights[i] (in x out)
/// and biases[i] (1 x out).
struct Mlp {
  MlpSpec spec;
  std::vector<Matrix> weights;
  std::vector<Matrix> biases;

  /// All parameters zero.
  static Mlp zeros(const MlpSpec& spec);
  /// Glorot-uniform weights for tanh layers, He-uniform for relu, zero biases.
  static Mlp init(const MlpSpec& spec, Rng& rng);

  std::size_t num_layers() const { return weights.size(); }
  bool operator==(const Mlp&) const = default;
};

/// Per-layer record of a forward pass over layers [begin, end).
struct ForwardCache {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::vector<Matrix> inputs;       // input to each layer
  std::vector<Matrix> pre;          // x W + b for each layer
  std::vector<Matrix> masks;        // scaled dropout masks (empty when unused)
};

struct ForwardResult {
  Matrix output;
  ForwardCache cache;
};

/// Gradients mirror the parameter layout of the network. Layers outside the
/// range of the cache that produced them hold zeros.
struct Gradients {
  std::vector<Matrix> weights;
  std::vector<Matrix> biases;
  Matrix input;  // d loss / d (input of the first cached layer)

  static Gradients zeros_like(const Mlp& net);
  void accumulate(const Gradients& other);
  void scale(double s);
};

/// Runs layers [begin, end). The output of a hidden layer is its activation
/// (after dropout in train mode); the output of the last layer is linear.
ForwardResult forward_range(const Mlp& net, const Matrix& x, std::size_t begin, std::size_t end,
                            Mode mode, Rng& rng);

ForwardResult forward(const Mlp& net, const Matrix& x, Mode mode, Rng& rng);

/// Deterministic eval-mode output without a cache.
Matrix predict(const Mlp& net, const Matrix& x);

/// Backpropagates `loss_grad` (d loss / d output of the cached range).
Gradients backward(const Mlp& net, const ForwardCache& cache, const Matrix& loss_grad);

}  // namespace omada
