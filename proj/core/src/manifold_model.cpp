#include "omada/manifold_model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "omada/error.hpp"
#include "omada/loss.hpp"
#include "omada/optim.hpp"

namespace omada::manifold {

void GenModel::validate() const {
  if (latent_dim < 2) throw std::invalid_argument("GenModel: latent_dim must be at least 2");
  if (encoder.spec.output_dim() != latent_dim || decoder.spec.input_dim() != latent_dim) {
    throw ShapeError("GenModel: encoder/decoder latent sizes disagree with latent_dim");
  }
  if (decoder.spec.output_dim() != encoder.spec.input_dim()) {
    throw ShapeError("GenModel: decoder output must match encoder input");
  }
}

void LatentClassifier::validate() const {
  if (net.spec.output_dim() != num_classes) throw ShapeError("LatentClassifier: output size != num_classes");
}

void GenTrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("GenTrainConfig: batch_size must be >= 1");
  if (beta_latent_reg < 0.0 || gamma_cls < 0.0) {
    throw std::invalid_argument("GenTrainConfig: loss weights must be non-negative");
  }
  if (!(lr > 0.0)) throw std::invalid_argument("GenTrainConfig: lr must be positive");
  if (latent_dim < 2) throw std::invalid_argument("GenTrainConfig: latent_dim must be >= 2");
}

Matrix encode(const GenModel& gm, const Matrix& x) {
  if (x.cols() != gm.input_dim()) {
    throw ShapeError("encode: expected " + std::to_string(gm.input_dim()) + " columns, got " +
                     std::to_string(x.cols()));
  }
  return predict(gm.encoder, x);
}

Matrix decode(const GenModel& gm, const Matrix& z) {
  if (z.cols() != gm.latent_dim) {
    throw ShapeError("decode: expected " + std::to_string(gm.latent_dim) + " columns, got " +
                     std::to_string(z.cols()));
  }
  return predict(gm.decoder, z);
}

Matrix latent_classify(const LatentClassifier& lc, const Matrix& z) {
  if (z.cols() != lc.net.spec.input_dim()) {
    throw ShapeError("latent_classify: expected " + std::to_string(lc.net.spec.input_dim()) +
                     " columns, got " + std::to_string(z.cols()));
  }
  return softmax(predict(lc.net, z));
}

namespace {

std::vector<std::size_t> with_ends(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
  std::vector<std::size_t> sizes{in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  return sizes;
}

struct Specs {
  MlpSpec encoder, decoder, classifier;
};

Specs make_specs(std::size_t d, std::size_t c, const GenTrainConfig& cfg) {
  std::vector<std::size_t> rev(cfg.hidden.rbegin(), cfg.hidden.rend());
  return {MlpSpec::uniform(with_ends(d, cfg.hidden, cfg.latent_dim), Activation::Tanh),
          MlpSpec::uniform(with_ends(cfg.latent_dim, rev, d), Activation::Tanh),
          MlpSpec::uniform(with_ends(cfg.latent_dim, cfg.classifier_hidden, c), Activation::Relu)};
}

}  // namespace

GenTrainResult make_zero_models(std::size_t input_dim, std::size_t num_classes, const GenTrainConfig& cfg) {
  const Specs s = make_specs(input_dim, num_classes, cfg);
  return {GenModel{Mlp::zeros(s.encoder), Mlp::zeros(s.decoder), cfg.latent_dim},
          LatentClassifier{Mlp::zeros(s.classifier), num_classes},
          {}};
}

GenTrainResult train_generative(const Matrix& data, const std::vector<int>& labels,
                                const GenTrainConfig& cfg, Rng& rng) {
  cfg.validate();
  if (data.rows() == 0) throw std::invalid_argument("train_generative: empty data");
  if (labels.size() != data.rows()) throw ShapeError("train_generative: one label per row required");
  if (data.rows() < cfg.batch_size) throw std::invalid_argument("train_generative: fewer rows than batch_size");
  int max_label = -1;
  for (int y : labels) {
    if (y < 0) throw std::invalid_argument("train_generative: negative label");
    max_label = std::max(max_label, y);
  }
  const std::size_t c = static_cast<std::size_t>(max_label) + 1;
  if (c < 2) throw std::invalid_argument("train_generative: need at least 2 classes");

  const std::size_t d = data.cols();
  const std::size_t m = cfg.latent_dim;
  const Specs s = make_specs(d, c, cfg);
  GenTrainResult res{GenModel{Mlp::init(s.encoder, rng), Mlp::init(s.decoder, rng), m},
                     LatentClassifier{Mlp::init(s.classifier, rng), c},
                     {}};
  GenModel& gm = res.model;
  LatentClassifier& lc = res.classifier;

  SgdState enc_state, dec_state, cls_state;
  const SgdParams params{cfg.lr, cfg.momentum, 0.0};
  const std::size_t n = data.rows();

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = rng.permutation(n);
    GenEpochStats stats;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, stop - start);
      const Matrix x = data.select_rows(idx);
      const double rows = static_cast<double>(x.rows());
      Matrix onehot(x.rows(), c);
      for (std::size_t r = 0; r < idx.size(); ++r) onehot(r, static_cast<std::size_t>(labels[idx[r]])) = 1.0;

      const ForwardResult enc = forward(gm.encoder, x, Mode::Train, rng);
      const Matrix& z = enc.output;
      const ForwardResult dec = forward(gm.decoder, z, Mode::Train, rng);
      const ForwardResult cls = forward(lc.net, z, Mode::Train, rng);

      const double rec = mse(dec.output, x);
      double energy = 0.0;
      for (double v : z.data()) energy += v * v;
      const double reg = cfg.beta_latent_reg * energy / (rows * static_cast<double>(m));
      const Matrix probs = softmax(cls.output);
      const double ce = cfg.gamma_cls * soft_cross_entropy(probs, onehot);

      Gradients g_dec = backward(gm.decoder, dec.cache, mse_grad(dec.output, x));
      Matrix cls_grad = soft_cross_entropy_logit_grad(probs, onehot);
      for (auto& v : cls_grad.data()) v *= cfg.gamma_cls;
      Gradients g_cls = backward(lc.net, cls.cache, cls_grad);

      Matrix z_grad = g_dec.input + g_cls.input;
      const double reg_scale = 2.0 * cfg.beta_latent_reg / (rows * static_cast<double>(m));
      for (std::size_t k = 0; k < z_grad.size(); ++k) z_grad.data()[k] += reg_scale * z.data()[k];
      Gradients g_enc = backward(gm.encoder, enc.cache, z_grad);

      if (!std::isfinite(rec + reg + ce)) throw NumericError("train_generative: non-finite loss");
      sgd_update(gm.encoder, g_enc, enc_state, params);
      sgd_update(gm.decoder, g_dec, dec_state, params);
      sgd_update(lc.net, g_cls, cls_state, params);

      stats.reconstruction += rec;
      stats.latent_reg += reg;
      stats.classification += ce;
      ++batches;
    }
    const double inv = 1.0 / static_cast<double>(batches);
    stats.reconstruction *= inv;
    stats.latent_reg *= inv;
    stats.classification *= inv;
    stats.total = stats.reconstruction + stats.latent_reg + stats.classification;
    res.history.push_back(stats);
  }
  return res;
}

double reconstruction_error(const GenModel& gm, const Matrix& data) {
  if (data.rows() == 0) throw std::invalid_argument("reconstruction_error: empty data");
  return mse(decode(gm, encode(gm, data)), data);
}

double mean_latent_energy(const GenModel& gm, const Matrix& data) {
  if (data.rows() == 0) throw std::invalid_argument("mean_latent_energy: empty data");
  const Matrix z = encode(gm, data);
  double energy = 0.0;
  for (double v : z.data()) energy += v * v;
  return energy / static_cast<double>(z.rows() * gm.latent_dim);
}

}  // namespace omada::manifold
