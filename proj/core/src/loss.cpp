#include "omada/loss.hpp"

#include <algorithm>
#include <cmath>

#include "omada/error.hpp"

namespace omada {

Matrix softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto in = logits.row(i);
    auto o = out.row(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      o[j] = std::exp(in[j] - mx);
      sum += o[j];
    }
    for (auto& v : o) v /= sum;
  }
  return out;
}

double soft_cross_entropy(const Matrix& pred_probs, const Matrix& target_probs) {
  require_same_shape(pred_probs, target_probs, "soft_cross_entropy");
  if (pred_probs.rows() == 0) throw ShapeError("soft_cross_entropy: empty input");
  double total = 0.0;
  for (std::size_t k = 0; k < pred_probs.size(); ++k) {
    const double t = target_probs.data()[k];
    if (t == 0.0) continue;
    total -= t * std::log(std::max(pred_probs.data()[k], kProbFloor));
  }
  return total / static_cast<double>(pred_probs.rows());
}

Matrix soft_cross_entropy_logit_grad(const Matrix& probs, const Matrix& target_probs) {
  require_same_shape(probs, target_probs, "soft_cross_entropy_logit_grad");
  Matrix g = probs - target_probs;
  const double inv = 1.0 / static_cast<double>(probs.rows());
  for (auto& v : g.data()) v *= inv;
  return g;
}

double entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

Matrix shannon_entropy(const Matrix& probs) {
  Matrix out(probs.rows(), 1);
  for (std::size_t i = 0; i < probs.rows(); ++i) out(i, 0) = entropy(probs.row(i));
  return out;
}

double mse(const Matrix& pred, const Matrix& target) {
  require_same_shape(pred, target, "mse");
  if (pred.empty()) throw ShapeError("mse: empty input");
  double total = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const double d = pred.data()[k] - target.data()[k];
    total += d * d;
  }
  return total / static_cast<double>(pred.size());
}

Matrix mse_grad(const Matrix& pred, const Matrix& target) {
  Matrix g = pred - target;
  const double s = 2.0 / static_cast<double>(pred.size());
  for (auto& v : g.data()) v *= s;
  return g;
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < values.size(); ++j) {
    if (values[j] > values[best]) best = j;
  }
  return best;
}

}  // namespace omada
