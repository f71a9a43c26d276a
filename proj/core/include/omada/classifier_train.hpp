#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "omada/latent_attack.hpp"
#include "omada/matrix.hpp"
#include "omada/mlp.hpp"
#include "omada/rng.hpp"

namespace omada::train {

struct NoAugment {};
/// Half of every batch drawn with replacement from an offline OMADA set.
struct Omada {
  std::shared_ptr<const attack::AugmentationSet> set;
};
struct Mixup {
  double alpha = 0.1;
};
struct ManifoldMixup {
  double alpha = 2.0;
};
struct EpsSmoothing {
  double epsilon = 0.1;
};
/// Half of every batch replaced by uniformly-labelled noise: a share
/// `fraction_permuted` of feature-permuted real rows, the rest uniform noise.
struct CedaNoise {
  double fraction_permuted = 0.5;
};

using AugmentMethod = std::variant<NoAugment, Omada, Mixup, ManifoldMixup, EpsSmoothing, CedaNoise>;

std::string method_name(const AugmentMethod& m);
/// Throws std::invalid_argument when parameters are out of range.
void validate(const AugmentMethod& m);

struct ClfTrainConfig {
  std::size_t epochs = 100;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t batch_size = 64;
  std::vector<std::size_t> lr_milestones = {50, 75};
  double lr_decay = 0.1;
  double validation_fraction = 0.1;
  std::size_t min_validation = 100;
  bool early_stop_on_val_acc = true;
  std::vector<std::size_t> hidden = {64, 64};
  Activation activation = Activation::Relu;
  double dropout_rate = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
  double lr_at(std::size_t epoch) const;
};

struct BatchComposition {
  std::size_t real = 0;
  std::size_t augmented = 0;
  bool operator==(const BatchComposition&) const = default;
};

struct ClfHistory {
  std::vector<double> train_loss;    // per epoch, mean over batches
  std::vector<double> val_accuracy;  // per epoch
  std::vector<BatchComposition> batches;
};

struct TrainedClassifier {
  Mlp net;
  ClfTrainConfig config;
  ClfHistory history;
  /// Epoch (1-based) whose weights were kept: the last epoch reaching the best
  /// validation accuracy. 0 is the initial network.
  std::size_t selected_epoch = 0;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> validation_indices;
};

/// Rows held out for validation: ceil(fraction * n), at least min_validation,
/// at most n / 2.
std::size_t validation_count(std::size_t n, const ClfTrainConfig& cfg);

/// Trains with soft cross-entropy on the chosen augmentation. Every method runs
/// ceil(n_train / batch_size) updates per epoch.
TrainedClassifier train_classifier(const Matrix& data, const Matrix& labels_onehot, const AugmentMethod& method,
                                   const ClfTrainConfig& cfg, Rng& rng);

struct MixResult {
  Matrix x;
  Matrix y;
  double lambda = 1.0;
};

/// lambda * (x1, y1) + (1 - lambda) * (x2, y2).
MixResult mix_pair(const Matrix& x1, const Matrix& y1, const Matrix& x2, const Matrix& y2, double lambda);
/// mix_pair with lambda ~ Beta(alpha, alpha).
MixResult mixup_batch(const Matrix& x1, const Matrix& y1, const Matrix& x2, const Matrix& y2, double alpha, Rng& rng);

struct ManifoldMixResult {
  Matrix output;
  Matrix y;
  double lambda = 1.0;
  std::size_t layer = 0;  // 0 mixes the inputs; k mixes the output of hidden layer k
};

/// Runs both batches to `layer`, mixes, and finishes the forward pass (eval mode).
ManifoldMixResult manifold_mixup_forward_at(const Mlp& net, const Matrix& x1, const Matrix& y1, const Matrix& x2,
                                            const Matrix& y2, std::size_t layer, double lambda);
/// Layer uniform over {0, ..., num_layers - 1}, lambda ~ Beta(alpha, alpha).
ManifoldMixResult manifold_mixup_forward(const Mlp& net, const Matrix& x1, const Matrix& y1, const Matrix& x2,
                                         const Matrix& y2, double alpha, Rng& rng);

Matrix eps_smooth_labels(const Matrix& y_onehot, double epsilon);

using FeatureBounds = std::vector<std::pair<double, double>>;
FeatureBounds feature_bounds(const Matrix& data);

struct NoiseBatch {
  Matrix x;
  Matrix y;
  std::size_t permuted = 0;  // the first `permuted` rows are permuted copies
  std::vector<std::size_t> sources;  // real_batch row behind each permuted row
};

NoiseBatch ceda_noise_batch(std::size_t count, const FeatureBounds& bounds, double fraction_permuted,
                            const Matrix& real_batch, std::size_t num_classes, Rng& rng);

/// Mean of member softmax outputs.
Matrix ensemble_predict(const std::vector<Mlp>& nets, const Matrix& x);

/// Mean softmax over `passes` train-mode (dropout-active) forward passes.
Matrix mc_dropout_predict(const Mlp& net, const Matrix& x, std::size_t passes, Rng& rng);

}  // namespace omada::train
