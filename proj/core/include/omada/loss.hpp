#pragma once

#include <utility>

#include "omada/matrix.hpp"

namespace omada {

/// Probabilities are clamped to this floor before any logarithm.
inline constexpr double kProbFloor = 1e-12;

/// Row-wise softmax with max subtraction.
Matrix softmax(const Matrix& logits);

/// Mean over rows of -sum_i t_i log p_i (natural log, p clamped at kProbFloor).
double soft_cross_entropy(const Matrix& pred_probs, const Matrix& target_probs);

/// Gradient of soft_cross_entropy(softmax(logits), targets) with respect to
/// the logits, for target rows summing to one: (softmax - t) / rows.
Matrix soft_cross_entropy_logit_grad(const Matrix& probs, const Matrix& target_probs);

/// Per-row Shannon entropy in nats, returned as an n x 1 matrix. 0 log 0 = 0.
Matrix shannon_entropy(const Matrix& probs);
double entropy(std::span<const double> probs);

/// Mean over all entries of (a - b)^2.
double mse(const Matrix& pred, const Matrix& target);
/// d mse / d pred.
Matrix mse_grad(const Matrix& pred, const Matrix& target);

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

}  // namespace omada
