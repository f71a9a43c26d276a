#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "omada/calib_metrics.hpp"
#include "omada/config.hpp"
#include "omada/dataset.hpp"
#include "omada/mlp.hpp"

namespace omada::harness {

/// Metric columns of results.csv, in file order.
struct Metrics {
  double accuracy = 0.0;
  double ace = 0.0;
  double ece = 0.0;
  double nll = 0.0;
  double ts_nll_temperature = 0.0;  // temperature fitted by validation NLL
  double ts_nll_ace = 0.0;
  double ts_nll_ece = 0.0;
  double ts_nll_nll = 0.0;
  double ts_ace_temperature = 0.0;  // temperature fitted by validation ACE
  double ts_ace_ace = 0.0;
  double auroc = 0.0;
  double ood_mmc = 0.0;
  double sparsification = 0.0;

  static const std::vector<std::string>& columns();
  std::vector<double> values() const;
  static Metrics nan();
};

struct ResultRow {
  std::string seed;  // decimal seed, or "ens" for cross-seed ensembles
  std::string method;
  std::string status = "ok";
  std::size_t selected_epoch = 0;
  Metrics metrics;
};

struct SummaryRow {
  std::string method;
  std::size_t runs = 0;
  std::vector<double> mean;
  std::vector<double> stddev;  // sample standard deviation, 0 for a single run
};

struct ExperimentReport {
  std::vector<ResultRow> rows;
  std::vector<SummaryRow> summary;
};

/// Test and OOD sets shared by every seed of an experiment.
struct EvalSets {
  Dataset test;
  Dataset ood;
};

EvalSets make_eval_sets(const ExperimentConfig& cfg);
Dataset make_train_set(const ExperimentConfig& cfg, std::uint64_t seed);

/// Accuracy, calibration, temperature-scaled variants (fitted on the
/// validation rows), OOD separation and sparsification for one classifier.
Metrics evaluate_network(const Mlp& net, const Matrix& x_val, const std::vector<int>& y_val, const EvalSets& eval,
                         const MetricOptions& opts);

/// Same metrics from probabilities (temperature columns are NaN).
Metrics evaluate_probs(const Matrix& test_probs, const std::vector<int>& test_labels, const Matrix& ood_probs,
                       const MetricOptions& opts);

std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows);

void write_results_csv(const std::vector<ResultRow>& rows, const std::filesystem::path& file);
void write_summary_csv(const std::vector<SummaryRow>& rows, const std::filesystem::path& file);
void write_reliability_csv(const std::vector<std::pair<std::string, metrics::ReliabilityBins>>& bins,
                           const std::filesystem::path& file);
void write_sweep_csv(const std::vector<std::pair<std::string, metrics::SweepTable>>& sweeps,
                     const std::filesystem::path& file);

/// Full protocol: per seed, train the generative model, build the OMADA sets,
/// train one classifier per method and evaluate; then cross-seed ensembles.
/// Writes results.csv, summary.csv, reliability_<method>.csv, sweep_temp.csv,
/// path_<id>.csv, config.json and checkpoints under cfg.output_dir.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

/// FNV-1a of a label; used to derive per-method random streams.
std::uint64_t stable_hash(const std::string& s);

}  // namespace omada::harness
