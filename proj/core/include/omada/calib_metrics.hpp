#pragma once

#include <cstddef>
#include <vector>

#include "omada/matrix.hpp"

namespace omada::metrics {

/// Class probabilities with true labels. Label -1 marks unlabelled
/// (out-of-distribution) rows.
struct Predictions {
  Matrix probs;
  std::vector<int> labels;

  std::size_t size() const { return probs.rows(); }
  std::size_t num_classes() const { return probs.cols(); }
  /// Throws when rows do not sum to 1 within 1e-9 or a label is out of range.
  void validate() const;
};

/// Max-softmax confidence per row.
std::vector<double> confidences(const Matrix& probs);

double accuracy(const Predictions& preds);
double nll(const Predictions& preds);

struct Bin {
  std::size_t count = 0;
  double confidence = 0.0;  // mean max-softmax in the bin
  double accuracy = 0.0;
};

/// Equal-mass bins over rows sorted by ascending confidence (stable). The first
/// n mod R bins hold ceil(n/R) rows, the rest floor(n/R).
struct ReliabilityBins {
  std::vector<Bin> bins;
};

ReliabilityBins reliability_bins(const Predictions& preds, std::size_t num_bins);

/// Adaptive calibration error: mean over equal-mass bins of |acc - conf|.
double ace(const Predictions& preds, std::size_t num_bins = 10);

/// Equal-width bins (r/R, (r+1)/R], confidence 0 goes to the first bin.
ReliabilityBins equal_width_bins(const Predictions& preds, std::size_t num_bins);

/// Expected calibration error: count-weighted |acc - conf| over equal-width bins.
double ece(const Predictions& preds, std::size_t num_bins = 10);

Matrix temperature_scale(const Matrix& logits, double temperature);

enum class TemperatureCriterion { Nll, Ace };

struct GridPoint {
  double temperature = 0.0;
  double value = 0.0;
};

struct TemperatureFit {
  double temperature = 1.0;
  TemperatureCriterion criterion = TemperatureCriterion::Nll;
  std::vector<GridPoint> grid;
};

/// `count` log-spaced temperatures in [lo, hi].
std::vector<double> log_spaced_grid(double lo = 0.1, double hi = 10.0, std::size_t count = 200);

/// Grid search; ties resolve to the smallest temperature.
TemperatureFit fit_temperature(const Matrix& logits, const std::vector<int>& labels, TemperatureCriterion criterion,
                               const std::vector<double>& grid, std::size_t ace_bins = 10);

struct SweepRow {
  double temperature = 0.0;
  double nll_val = 0.0;
  double ace_val = 0.0;
  double nll_test = 0.0;
  double ace_test = 0.0;
};

struct SweepTable {
  std::vector<SweepRow> rows;
  double argmin_nll = 1.0;  // on validation data
  double argmin_ace = 1.0;  // on validation data
  bool optima_differ() const { return argmin_nll != argmin_ace; }
};

SweepTable sweep_temperature(const Matrix& logits_val, const std::vector<int>& labels_val, const Matrix& logits_test,
                             const std::vector<int>& labels_test, const std::vector<double>& grid,
                             std::size_t ace_bins = 10);

/// Mann-Whitney estimate of P(score_in > score_out), ties counted half.
double auroc(const std::vector<double>& scores_in, const std::vector<double>& scores_out);

/// Mean max-softmax confidence; labels are ignored.
double mmc(const Predictions& preds);

/// Mean over k of oracle(k) - accuracy of the k most confident rows.
double sparsification_error(const Predictions& preds);

}  // namespace omada::metrics
