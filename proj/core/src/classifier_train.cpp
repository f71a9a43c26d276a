#include "omada/classifier_train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "omada/error.hpp"
#include "omada/loss.hpp"
#include "omada/optim.hpp"

namespace omada::train {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

}  // namespace

std::string method_name(const AugmentMethod& m) {
  return std::visit(overloaded{[](const NoAugment&) { return std::string("base"); },
                               [](const Omada&) { return std::string("omada"); },
                               [](const Mixup&) { return std::string("mixup"); },
                               [](const ManifoldMixup&) { return std::string("manifold-mixup"); },
                               [](const EpsSmoothing&) { return std::string("eps-smoothing"); },
                               [](const CedaNoise&) { return std::string("ceda"); }},
                    m);
}

void validate(const AugmentMethod& m) {
  std::visit(overloaded{[](const NoAugment&) {},
                        [](const Omada& o) {
                          if (!o.set || o.set->empty()) throw std::invalid_argument("Omada: empty augmentation set");
                        },
                        [](const Mixup& x) {
                          if (!(x.alpha > 0.0)) throw std::invalid_argument("Mixup: alpha must be positive");
                        },
                        [](const ManifoldMixup& x) {
                          if (!(x.alpha > 0.0)) throw std::invalid_argument("ManifoldMixup: alpha must be positive");
                        },
                        [](const EpsSmoothing& x) {
                          if (!(x.epsilon > 0.0 && x.epsilon < 1.0)) {
                            throw std::invalid_argument("EpsSmoothing: epsilon must lie in (0, 1)");
                          }
                        },
                        [](const CedaNoise& x) {
                          if (!(x.fraction_permuted >= 0.0 && x.fraction_permuted <= 1.0)) {
                            throw std::invalid_argument("CedaNoise: fraction must lie in [0, 1]");
                          }
                        }},
             m);
}

void ClfTrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("ClfTrainConfig: batch_size must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("ClfTrainConfig: lr must be positive");
  for (std::size_t i = 1; i < lr_milestones.size(); ++i) {
    if (lr_milestones[i] <= lr_milestones[i - 1]) {
      throw std::invalid_argument("ClfTrainConfig: lr_milestones must be strictly increasing");
    }
  }
  if (!(validation_fraction > 0.0 && validation_fraction <= 0.5)) {
    throw std::invalid_argument("ClfTrainConfig: validation_fraction must lie in (0, 0.5]");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw std::invalid_argument("ClfTrainConfig: dropout_rate in [0,1)");
}

double ClfTrainConfig::lr_at(std::size_t epoch) const {
  double rate = lr;
  for (std::size_t m : lr_milestones) {
    if (epoch >= m) rate *= lr_decay;
  }
  return rate;
}

std::size_t validation_count(std::size_t n, const ClfTrainConfig& cfg) {
  const auto frac = static_cast<std::size_t>(std::ceil(cfg.validation_fraction * static_cast<double>(n)));
  return std::min(std::max(frac, cfg.min_validation), n / 2);
}

MixResult mix_pair(const Matrix& x1, const Matrix& y1, const Matrix& x2, const Matrix& y2, double lambda) {
  require_same_shape(x1, x2, "mix_pair");
  require_same_shape(y1, y2, "mix_pair");
  return {lambda * x1 + (1.0 - lambda) * x2, lambda * y1 + (1.0 - lambda) * y2, lambda};
}

MixResult mixup_batch(const Matrix& x1, const Matrix& y1, const Matrix& x2, const Matrix& y2, double alpha, Rng& rng) {
  if (!(alpha > 0.0)) throw std::invalid_argument("mixup_batch: alpha must be positive");
  return mix_pair(x1, y1, x2, y2, rng.beta(alpha, alpha));
}

namespace {

struct ManifoldPass {
  ForwardResult lower1, lower2, upper;
  Matrix y;
  double lambda = 1.0;
  std::size_t layer = 0;
};

ManifoldPass manifold_pass(const Mlp& net, const Matrix& x1, const Matrix& y1, const Matrix& x2, const Matrix& y2,
                           std::size_t layer, double lambda, Mode mode, Rng& rng) {
  if (layer >= net.num_layers()) throw std::invalid_argument("manifold_mixup: layer out of range");
  require_same_shape(x1, x2, "manifold_mixup");
  require_same_shape(y1, y2, "manifold_mixup");
  ManifoldPass p;
  p.layer = layer;
  p.lambda = lambda;
  p.lower1 = forward_range(net, x1, 0, layer, mode, rng);
  p.lower2 = forward_range(net, x2, 0, layer, mode, rng);
  const Matrix mixed = lambda * p.lower1.output + (1.0 - lambda) * p.lower2.output;
  p.upper = forward_range(net, mixed, layer, net.num_layers(), mode, rng);
  p.y = lambda * y1 + (1.0 - lambda) * y2;
  return p;
}

Gradients manifold_backward(const Mlp& net, const ManifoldPass& p, const Matrix& out_grad) {
  Gradients g = backward(net, p.upper.cache, out_grad);
  Gradients g1 = backward(net, p.lower1.cache, p.lambda * g.input);
  Gradients g2 = backward(net, p.lower2.cache, (1.0 - p.lambda) * g.input);
  g.accumulate(g1);
  g.accumulate(g2);
  g.input = g1.input + g2.input;
  return g;
}

}  // namespace

ManifoldMixResult manifold_mixup_forward_at(const Mlp& net, const Matrix& x1, const Matrix& y1, const Matrix& x2,
                                            const Matrix& y2, std::size_t layer, double lambda) {
  Rng unused(0);
  ManifoldPass p = manifold_pass(net, x1, y1, x2, y2, layer, lambda, Mode::Eval, unused);
  return {std::move(p.upper.output), std::move(p.y), lambda, layer};
}

ManifoldMixResult manifold_mixup_forward(const Mlp& net, const Matrix& x1, const Matrix& y1, const Matrix& x2,
                                         const Matrix& y2, double alpha, Rng& rng) {
  if (!(alpha > 0.0)) throw std::invalid_argument("manifold_mixup_forward: alpha must be positive");
  const std::size_t layer = rng.uniform_index(net.num_layers());
  const double lambda = rng.beta(alpha, alpha);
  return manifold_mixup_forward_at(net, x1, y1, x2, y2, layer, lambda);
}

Matrix eps_smooth_labels(const Matrix& y_onehot, double epsilon) {
  const std::size_t c = y_onehot.cols();
  if (!(epsilon >= 0.0 && epsilon < 1.0)) throw std::invalid_argument("eps_smooth_labels: epsilon in [0, 1)");
  if (c < 2) throw std::invalid_argument("eps_smooth_labels: need at least 2 classes");
  Matrix out(y_onehot.rows(), c);
  const double other = epsilon / static_cast<double>(c - 1);
  for (std::size_t i = 0; i < y_onehot.rows(); ++i) {
    const std::size_t cls = argmax(y_onehot.row(i));
    for (std::size_t j = 0; j < c; ++j) out(i, j) = j == cls ? 1.0 - epsilon : other;
  }
  return out;
}

FeatureBounds feature_bounds(const Matrix& data) {
  FeatureBounds b(data.cols(), {std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()});
  for (std::size_t i = 0; i < data.rows(); ++i) {
    for (std::size_t j = 0; j < data.cols(); ++j) {
      b[j].first = std::min(b[j].first, data(i, j));
      b[j].second = std::max(b[j].second, data(i, j));
    }
  }
  return b;
}

NoiseBatch ceda_noise_batch(std::size_t count, const FeatureBounds& bounds, double fraction_permuted,
                            const Matrix& real_batch, std::size_t num_classes, Rng& rng) {
  if (!(fraction_permuted >= 0.0 && fraction_permuted <= 1.0)) {
    throw std::invalid_argument("ceda_noise_batch: fraction must lie in [0, 1]");
  }
  if (num_classes < 1) throw std::invalid_argument("ceda_noise_batch: num_classes must be positive");
  const std::size_t d = bounds.size();
  NoiseBatch nb;
  nb.permuted = static_cast<std::size_t>(std::llround(fraction_permuted * static_cast<double>(count)));
  if (nb.permuted > 0 && real_batch.rows() == 0) throw std::invalid_argument("ceda_noise_batch: no rows to permute");
  if (nb.permuted > 0 && real_batch.cols() != d) throw ShapeError("ceda_noise_batch: bounds/batch width mismatch");
  nb.x = Matrix(count, d);
  nb.y = Matrix(count, num_classes, 1.0 / static_cast<double>(num_classes));
  for (std::size_t i = 0; i < nb.permuted; ++i) {
    const std::size_t src = rng.uniform_index(real_batch.rows());
    nb.sources.push_back(src);
    const auto perm = rng.permutation(d);
    for (std::size_t j = 0; j < d; ++j) nb.x(i, j) = real_batch(src, perm[j]);
  }
  for (std::size_t i = nb.permuted; i < count; ++i) {
    for (std::size_t j = 0; j < d; ++j) nb.x(i, j) = rng.uniform(bounds[j].first, bounds[j].second);
  }
  return nb;
}

Matrix ensemble_predict(const std::vector<Mlp>& nets, const Matrix& x) {
  if (nets.empty()) throw std::invalid_argument("ensemble_predict: empty ensemble");
  Matrix sum;
  for (const auto& net : nets) {
    if (net.spec.input_dim() != nets.front().spec.input_dim() ||
        net.spec.output_dim() != nets.front().spec.output_dim()) {
      throw ShapeError("ensemble_predict: members disagree on input/output size");
    }
    Matrix p = softmax(predict(net, x));
    sum = sum.empty() ? std::move(p) : sum + p;
  }
  return (1.0 / static_cast<double>(nets.size())) * sum;
}

Matrix mc_dropout_predict(const Mlp& net, const Matrix& x, std::size_t passes, Rng& rng) {
  if (passes == 0) throw std::invalid_argument("mc_dropout_predict: passes must be >= 1");
  Matrix sum;
  for (std::size_t k = 0; k < passes; ++k) {
    Matrix p = softmax(forward(net, x, Mode::Train, rng).output);
    sum = sum.empty() ? std::move(p) : sum + p;
  }
  return (1.0 / static_cast<double>(passes)) * sum;
}

namespace {

double hard_accuracy(const Mlp& net, const Matrix& x, const Matrix& y) {
  if (x.rows() == 0) return 0.0;
  const Matrix out = predict(net, x);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < x.rows(); ++i) hits += argmax(out.row(i)) == argmax(y.row(i)) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(x.rows());
}

std::vector<std::size_t> slice(const std::vector<std::size_t>& v, std::size_t start, std::size_t count) {
  std::vector<std::size_t> out(count);
  for (std::size_t k = 0; k < count; ++k) out[k] = v[(start + k) % v.size()];
  return out;
}

}  // namespace

TrainedClassifier train_classifier(const Matrix& data, const Matrix& labels_onehot, const AugmentMethod& method,
                                   const ClfTrainConfig& cfg, Rng& rng) {
  cfg.validate();
  validate(method);
  if (labels_onehot.rows() != data.rows()) throw ShapeError("train_classifier: one label row per data row");
  const std::size_t c = labels_onehot.cols();
  if (c < 2) throw std::invalid_argument("train_classifier: need at least 2 classes");
  if (const auto* o = std::get_if<Omada>(&method)) {
    if (o->set->samples.front().input.cols() != data.cols() || o->set->samples.front().label.size() != c) {
      throw ShapeError("train_classifier: augmentation set does not match data/labels");
    }
  }

  TrainedClassifier tc;
  tc.config = cfg;
  const std::size_t n = data.rows();
  const auto order = rng.permutation(n);
  const std::size_t n_val = validation_count(n, cfg);
  tc.validation_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  tc.train_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(tc.validation_indices.begin(), tc.validation_indices.end());
  std::sort(tc.train_indices.begin(), tc.train_indices.end());
  const std::size_t n_train = tc.train_indices.size();
  if (n_train < cfg.batch_size) throw std::invalid_argument("train_classifier: fewer training rows than batch_size");

  const Matrix x_train = data.select_rows(tc.train_indices);
  const Matrix y_train = labels_onehot.select_rows(tc.train_indices);
  const Matrix x_val = data.select_rows(tc.validation_indices);
  const Matrix y_val = labels_onehot.select_rows(tc.validation_indices);
  const FeatureBounds bounds = feature_bounds(x_train);

  std::vector<std::size_t> sizes{data.cols()};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(c);
  tc.net = Mlp::init(MlpSpec::uniform(sizes, cfg.activation, cfg.dropout_rate), rng);

  Mlp best = tc.net;
  double best_val = -1.0;
  SgdState state;
  const std::size_t b = cfg.batch_size;
  const std::size_t updates = (n_train + b - 1) / b;
  const std::size_t half_real = (b + 1) / 2;
  const std::size_t half_aug = b / 2;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const SgdParams params{cfg.lr_at(epoch), cfg.momentum, cfg.weight_decay};
    const auto perm = rng.permutation(n_train);
    double loss_sum = 0.0;
    for (std::size_t j = 0; j < updates; ++j) {
      Matrix xb, yb;
      Gradients grads;
      double loss = 0.0;
      BatchComposition comp;

      auto plain_step = [&](const Matrix& x, const Matrix& y) {
        const ForwardResult fr = forward(tc.net, x, Mode::Train, rng);
        const Matrix probs = softmax(fr.output);
        loss = soft_cross_entropy(probs, y);
        grads = backward(tc.net, fr.cache, soft_cross_entropy_logit_grad(probs, y));
      };

      if (std::holds_alternative<Omada>(method) || std::holds_alternative<CedaNoise>(method)) {
        const auto real_idx = slice(perm, j * half_real, half_real);
        const Matrix xr = x_train.select_rows(real_idx);
        const Matrix yr = y_train.select_rows(real_idx);
        Matrix xa, ya;
        if (const auto* o = std::get_if<Omada>(&method)) {
          xa = Matrix(half_aug, data.cols());
          ya = Matrix(half_aug, c);
          for (std::size_t k = 0; k < half_aug; ++k) {
            const auto& s = o->set->samples[rng.uniform_index(o->set->size())];
            std::copy(s.input.data().begin(), s.input.data().end(), xa.row(k).begin());
            std::copy(s.label.begin(), s.label.end(), ya.row(k).begin());
          }
        } else {
          const auto& ceda = std::get<CedaNoise>(method);
          NoiseBatch nb = ceda_noise_batch(half_aug, bounds, ceda.fraction_permuted, xr, c, rng);
          xa = std::move(nb.x);
          ya = std::move(nb.y);
        }
        comp = {xr.rows(), xa.rows()};
        plain_step(vstack(xr, xa), vstack(yr, ya));
      } else {
        const std::size_t start = j * b;
        const std::size_t count = std::min(b, n_train - start);
        const std::vector<std::size_t> idx(perm.begin() + static_cast<std::ptrdiff_t>(start),
                                           perm.begin() + static_cast<std::ptrdiff_t>(start + count));
        xb = x_train.select_rows(idx);
        yb = y_train.select_rows(idx);
        comp = {count, 0};
        if (const auto* mx = std::get_if<Mixup>(&method)) {
          const auto partner = rng.permutation(count);
          const MixResult mr = mixup_batch(xb, yb, xb.select_rows(partner), yb.select_rows(partner), mx->alpha, rng);
          plain_step(mr.x, mr.y);
        } else if (const auto* mm = std::get_if<ManifoldMixup>(&method)) {
          const auto partner = rng.permutation(count);
          const std::size_t layer = rng.uniform_index(tc.net.num_layers());
          const double lambda = rng.beta(mm->alpha, mm->alpha);
          const ManifoldPass p = manifold_pass(tc.net, xb, yb, xb.select_rows(partner), yb.select_rows(partner),
                                               layer, lambda, Mode::Train, rng);
          const Matrix probs = softmax(p.upper.output);
          loss = soft_cross_entropy(probs, p.y);
          grads = manifold_backward(tc.net, p, soft_cross_entropy_logit_grad(probs, p.y));
        } else if (const auto* es = std::get_if<EpsSmoothing>(&method)) {
          plain_step(xb, eps_smooth_labels(yb, es->epsilon));
        } else {
          plain_step(xb, yb);
        }
      }
      if (!std::isfinite(loss)) {
        throw NumericError("train_classifier: non-finite loss in epoch " + std::to_string(epoch + 1) + " (" +
                           method_name(method) + ")");
      }
      sgd_update(tc.net, grads, state, params);
      loss_sum += loss;
      tc.history.batches.push_back(comp);
    }
    tc.history.train_loss.push_back(loss_sum / static_cast<double>(updates));
    const double val_acc = hard_accuracy(tc.net, x_val, y_val);
    tc.history.val_accuracy.push_back(val_acc);
    // Ties keep the later epoch.
    if (val_acc >= best_val) {
      best_val = val_acc;
      best = tc.net;
      if (cfg.early_stop_on_val_acc) tc.selected_epoch = epoch + 1;
    }
  }
  if (cfg.early_stop_on_val_acc) {
    if (tc.selected_epoch > 0) tc.net = std::move(best);
  } else {
    tc.selected_epoch = cfg.epochs;
  }
  return tc;
}

}  // namespace omada::train
