#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "omada/matrix.hpp"
#include "omada/mlp.hpp"
#include "omada/rng.hpp"

namespace omada::manifold {

/// Deterministic autoencoder: encoder d -> m, decoder m -> d. The latent
/// prior is a standard normal, encouraged by an L2 penalty on codes.
struct GenModel {
  Mlp encoder;
  Mlp decoder;
  std::size_t latent_dim = 0;

  std::size_t input_dim() const { return encoder.spec.input_dim(); }
  void validate() const;
  bool operator==(const GenModel&) const = default;
};

/// Classifier over latent codes, m -> c logits.
struct LatentClassifier {
  Mlp net;
  std::size_t num_classes = 0;

  void validate() const;
  bool operator==(const LatentClassifier&) const = default;
};

struct GenTrainConfig {
  std::size_t epochs = 200;
  double lr = 0.02;
  double momentum = 0.9;
  double beta_latent_reg = 0.1;
  double gamma_cls = 1.0;
  std::size_t batch_size = 32;
  std::size_t latent_dim = 2;
  std::vector<std::size_t> hidden = {32, 32};
  std::vector<std::size_t> classifier_hidden = {32};
  std::uint64_t seed = 0;

  void validate() const;
};

struct GenEpochStats {
  double total = 0.0;
  double reconstruction = 0.0;
  double latent_reg = 0.0;
  double classification = 0.0;
};

struct GenTrainResult {
  GenModel model;
  LatentClassifier classifier;
  std::vector<GenEpochStats> history;
};

Matrix encode(const GenModel& gm, const Matrix& x);
Matrix decode(const GenModel& gm, const Matrix& z);
/// Softmax output of the latent classifier; these are the soft labels.
Matrix latent_classify(const LatentClassifier& lc, const Matrix& z);

/// Untrained networks for the configured topology, all parameters zero.
GenTrainResult make_zero_models(std::size_t input_dim, std::size_t num_classes, const GenTrainConfig& cfg);

/// Jointly trains encoder, decoder and latent classifier with one SGD
/// optimizer on
///   mse(x, decode(encode(x))) + beta * mean(|z|^2) / m + gamma * CE(y, latent_classify(z)).
/// The number of classes is max(labels) + 1. History holds epoch averages of
/// each term (already weighted).
GenTrainResult train_generative(const Matrix& data, const std::vector<int>& labels,
                                const GenTrainConfig& cfg, Rng& rng);

/// Mean over rows and features of (decode(encode(x)) - x)^2.
double reconstruction_error(const GenModel& gm, const Matrix& data);

/// Mean of |z|^2 / m over the encoded rows.
double mean_latent_energy(const GenModel& gm, const Matrix& data);

}  // namespace omada::manifold
