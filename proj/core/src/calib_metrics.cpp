#include "omada/calib_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "omada/error.hpp"
#include "omada/loss.hpp"

namespace omada::metrics {

void Predictions::validate() const {
  if (labels.size() != probs.rows()) throw ShapeError("Predictions: one label per row required");
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    double s = 0.0;
    for (double p : probs.row(i)) {
      if (!(p >= 0.0)) throw std::invalid_argument("Predictions: negative or NaN probability");
      s += p;
    }
    if (std::abs(s - 1.0) > 1e-9) throw std::invalid_argument("Predictions: row does not sum to 1");
  }
  for (int y : labels) {
    if (y < -1 || y >= static_cast<int>(probs.cols())) throw std::invalid_argument("Predictions: label out of range");
  }
}

namespace {

void require_nonempty(const Predictions& p, const char* where) {
  if (p.size() == 0) throw std::invalid_argument(std::string(where) + ": empty predictions");
  if (p.labels.size() != p.size()) throw ShapeError(std::string(where) + ": label count mismatch");
}

void require_labelled(const Predictions& p, const char* where) {
  for (int y : p.labels) {
    if (y < 0) throw std::invalid_argument(std::string(where) + ": unlabelled row");
  }
}

bool correct(const Predictions& p, std::size_t i) {
  return static_cast<int>(argmax(p.probs.row(i))) == p.labels[i];
}

}  // namespace

std::vector<double> confidences(const Matrix& probs) {
  std::vector<double> out(probs.rows());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    auto r = probs.row(i);
    out[i] = *std::max_element(r.begin(), r.end());
  }
  return out;
}

double accuracy(const Predictions& preds) {
  require_nonempty(preds, "accuracy");
  require_labelled(preds, "accuracy");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += correct(preds, i) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double nll(const Predictions& preds) {
  require_nonempty(preds, "nll");
  require_labelled(preds, "nll");
  double total = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    total -= std::log(std::max(preds.probs(i, static_cast<std::size_t>(preds.labels[i])), kProbFloor));
  }
  return total / static_cast<double>(preds.size());
}

ReliabilityBins reliability_bins(const Predictions& preds, std::size_t num_bins) {
  require_nonempty(preds, "reliability_bins");
  require_labelled(preds, "reliability_bins");
  const std::size_t n = preds.size();
  if (num_bins < 1 || n < num_bins) throw std::invalid_argument("reliability_bins: need 1 <= R <= n");
  const auto conf = confidences(preds.probs);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return conf[a] < conf[b]; });

  ReliabilityBins out;
  const std::size_t base = n / num_bins;
  const std::size_t extra = n % num_bins;
  std::size_t pos = 0;
  for (std::size_t r = 0; r < num_bins; ++r) {
    Bin bin;
    bin.count = base + (r < extra ? 1 : 0);
    double conf_sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t k = 0; k < bin.count; ++k, ++pos) {
      conf_sum += conf[order[pos]];
      hits += correct(preds, order[pos]) ? 1 : 0;
    }
    bin.confidence = conf_sum / static_cast<double>(bin.count);
    bin.accuracy = static_cast<double>(hits) / static_cast<double>(bin.count);
    out.bins.push_back(bin);
  }
  return out;
}

double ace(const Predictions& preds, std::size_t num_bins) {
  const auto rb = reliability_bins(preds, num_bins);
  double total = 0.0;
  for (const auto& b : rb.bins) total += std::abs(b.accuracy - b.confidence);
  return total / static_cast<double>(rb.bins.size());
}

ReliabilityBins equal_width_bins(const Predictions& preds, std::size_t num_bins) {
  require_nonempty(preds, "equal_width_bins");
  require_labelled(preds, "equal_width_bins");
  if (num_bins < 1) throw std::invalid_argument("equal_width_bins: R must be >= 1");
  const auto conf = confidences(preds.probs);
  const double R = static_cast<double>(num_bins);
  std::vector<double> conf_sum(num_bins, 0.0);
  std::vector<std::size_t> hits(num_bins, 0), counts(num_bins, 0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    // Bin r covers (r/R, (r+1)/R]; compare against the same edges a linear scan would use.
    auto r = static_cast<std::size_t>(std::clamp(std::ceil(conf[i] * R) - 1.0, 0.0, R - 1.0));
    while (r > 0 && conf[i] <= static_cast<double>(r) / R) --r;
    while (r + 1 < num_bins && conf[i] > static_cast<double>(r + 1) / R) ++r;
    conf_sum[r] += conf[i];
    hits[r] += correct(preds, i) ? 1 : 0;
    ++counts[r];
  }
  ReliabilityBins out;
  for (std::size_t r = 0; r < num_bins; ++r) {
    Bin b;
    b.count = counts[r];
    if (b.count > 0) {
      b.confidence = conf_sum[r] / static_cast<double>(b.count);
      b.accuracy = static_cast<double>(hits[r]) / static_cast<double>(b.count);
    }
    out.bins.push_back(b);
  }
  return out;
}

double ece(const Predictions& preds, std::size_t num_bins) {
  const auto rb = equal_width_bins(preds, num_bins);
  double total = 0.0;
  for (const auto& b : rb.bins) {
    if (b.count > 0) total += static_cast<double>(b.count) * std::abs(b.accuracy - b.confidence);
  }
  return total / static_cast<double>(preds.size());
}

Matrix temperature_scale(const Matrix& logits, double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature_scale: T must be positive");
  Matrix scaled = logits;
  for (auto& v : scaled.data()) v /= temperature;
  return softmax(scaled);
}

std::vector<double> log_spaced_grid(double lo, double hi, std::size_t count) {
  if (!(lo > 0.0 && hi >= lo) || count < 1) throw std::invalid_argument("log_spaced_grid: bad range");
  std::vector<double> grid(count);
  if (count == 1) {
    grid[0] = lo;
    return grid;
  }
  const double a = std::log(lo);
  const double b = std::log(hi);
  for (std::size_t i = 0; i < count; ++i) {
    grid[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1));
  }
  grid.front() = lo;
  grid.back() = hi;
  return grid;
}

namespace {

double criterion_value(const Matrix& logits, const std::vector<int>& labels, double t, TemperatureCriterion c,
                       std::size_t bins) {
  const Predictions p{temperature_scale(logits, t), labels};
  return c == TemperatureCriterion::Nll ? nll(p) : ace(p, bins);
}

double grid_argmin(const std::vector<GridPoint>& pts) {
  const GridPoint* best = &pts.front();
  for (const auto& p : pts) {
    if (p.value < best->value || (p.value == best->value && p.temperature < best->temperature)) best = &p;
  }
  return best->temperature;
}

}  // namespace

TemperatureFit fit_temperature(const Matrix& logits, const std::vector<int>& labels, TemperatureCriterion criterion,
                               const std::vector<double>& grid, std::size_t ace_bins) {
  if (grid.empty()) throw std::invalid_argument("fit_temperature: empty grid");
  TemperatureFit fit;
  fit.criterion = criterion;
  for (double t : grid) fit.grid.push_back({t, criterion_value(logits, labels, t, criterion, ace_bins)});
  fit.temperature = grid_argmin(fit.grid);
  return fit;
}

SweepTable sweep_temperature(const Matrix& logits_val, const std::vector<int>& labels_val, const Matrix& logits_test,
                             const std::vector<int>& labels_test, const std::vector<double>& grid,
                             std::size_t ace_bins) {
  if (grid.empty()) throw std::invalid_argument("sweep_temperature: empty grid");
  SweepTable table;
  std::vector<GridPoint> nll_val, ace_val;
  for (double t : grid) {
    SweepRow row;
    row.temperature = t;
    row.nll_val = criterion_value(logits_val, labels_val, t, TemperatureCriterion::Nll, ace_bins);
    row.ace_val = criterion_value(logits_val, labels_val, t, TemperatureCriterion::Ace, ace_bins);
    row.nll_test = criterion_value(logits_test, labels_test, t, TemperatureCriterion::Nll, ace_bins);
    row.ace_test = criterion_value(logits_test, labels_test, t, TemperatureCriterion::Ace, ace_bins);
    nll_val.push_back({t, row.nll_val});
    ace_val.push_back({t, row.ace_val});
    table.rows.push_back(row);
  }
  table.argmin_nll = grid_argmin(nll_val);
  table.argmin_ace = grid_argmin(ace_val);
  return table;
}

double auroc(const std::vector<double>& scores_in, const std::vector<double>& scores_out) {
  if (scores_in.empty() || scores_out.empty()) throw std::invalid_argument("auroc: both score sets must be non-empty");
  std::vector<double> out = scores_out;
  std::sort(out.begin(), out.end());
  // Integer pair counts keep the result independent of summation order.
  unsigned long long wins2 = 0;  // twice the (wins + ties/2) count
  for (double s : scores_in) {
    const auto lo = std::lower_bound(out.begin(), out.end(), s);
    const auto hi = std::upper_bound(lo, out.end(), s);
    wins2 += 2ULL * static_cast<unsigned long long>(lo - out.begin()) + static_cast<unsigned long long>(hi - lo);
  }
  const double pairs = static_cast<double>(scores_in.size()) * static_cast<double>(scores_out.size());
  return static_cast<double>(wins2) / (2.0 * pairs);
}

double mmc(const Predictions& preds) {
  if (preds.size() == 0) throw std::invalid_argument("mmc: empty predictions");
  const auto conf = confidences(preds.probs);
  return std::accumulate(conf.begin(), conf.end(), 0.0) / static_cast<double>(conf.size());
}

double sparsification_error(const Predictions& preds) {
  require_nonempty(preds, "sparsification_error");
  require_labelled(preds, "sparsification_error");
  const std::size_t n = preds.size();
  const auto conf = confidences(preds.probs);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return conf[a] > conf[b]; });
  std::size_t total_correct = 0;
  for (std::size_t i = 0; i < n; ++i) total_correct += correct(preds, i) ? 1 : 0;
  double gap = 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 1; k <= n; ++k) {
    hits += correct(preds, order[k - 1]) ? 1 : 0;
    const double kk = static_cast<double>(k);
    const double oracle = static_cast<double>(std::min(k, total_correct)) / kk;
    gap += oracle - static_cast<double>(hits) / kk;
  }
  return gap / static_cast<double>(n);
}

}  // namespace omada::metrics
