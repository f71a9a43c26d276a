#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "omada/matrix.hpp"
#include "omada/rng.hpp"

namespace omada::harness {

enum class DatasetKind { GaussianMixture, TwoArcs, OodShift };

std::string to_string(DatasetKind k);
DatasetKind dataset_kind_from_string(const std::string& s);

/// Synthetic dataset description. For OodShift, the `base_kind` dataset is
/// drawn and translated by `offset`.
struct DatasetSpec {
  DatasetKind kind = DatasetKind::GaussianMixture;
  DatasetKind base_kind = DatasetKind::GaussianMixture;
  std::size_t dim = 2;
  std::size_t classes = 3;
  // gaussian_mixture: isotropic N(center_k, sigma^2 I), per_class draws each.
  std::vector<std::vector<double>> centers;
  double sigma = 0.6;
  std::size_t per_class = 500;
  // two_arcs: interleaved half circles, per_class points each.
  double radius = 1.0;
  double noise = 0.1;
  // ood_shift
  std::vector<double> offset;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Three classes with centers on the unit circle at 90, 210 and 330 degrees.
DatasetSpec reference_mixture(double sigma = 0.6, std::size_t per_class = 500, std::uint64_t seed = 0);

/// `spec` translated by `distance` along the first coordinate axis.
DatasetSpec ood_shift(const DatasetSpec& base, double distance);

struct Dataset {
  Matrix x;
  std::vector<int> labels;  // -1 for every row of an OOD set
  std::size_t classes = 0;
  std::vector<std::pair<double, double>> bounds;  // per-feature (min, max)

  Matrix onehot() const;
};

Dataset gen_dataset(const DatasetSpec& spec, Rng& rng);
/// Uses Rng(spec.seed).
Dataset gen_dataset(const DatasetSpec& spec);

/// Exact Bayes posterior p(y | x) for a gaussian_mixture spec, with class
/// priors proportional to the per-class counts (equal).
Matrix analytic_posterior(const DatasetSpec& spec, const Matrix& x);

/// CSV with columns x1..xd,label.
void save_dataset_csv(const Dataset& ds, const std::filesystem::path& file);
Dataset load_dataset_csv(const std::filesystem::path& file);

}  // namespace omada::harness
