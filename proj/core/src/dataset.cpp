#include "omada/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "omada/csv.hpp"
#include "omada/error.hpp"
#include "omada/loss.hpp"

namespace omada::harness {

std::string to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::GaussianMixture: return "gaussian_mixture";
    case DatasetKind::TwoArcs: return "two_arcs";
    case DatasetKind::OodShift: return "ood_shift";
  }
  return "gaussian_mixture";
}

DatasetKind dataset_kind_from_string(const std::string& s) {
  if (s == "gaussian_mixture") return DatasetKind::GaussianMixture;
  if (s == "two_arcs") return DatasetKind::TwoArcs;
  if (s == "ood_shift") return DatasetKind::OodShift;
  throw std::invalid_argument("unknown dataset kind '" + s + "'");
}

void DatasetSpec::validate() const {
  if (dim < 1) throw std::invalid_argument("DatasetSpec: dim must be >= 1");
  if (per_class < 1) throw std::invalid_argument("DatasetSpec: per_class must be >= 1");
  const DatasetKind k = kind == DatasetKind::OodShift ? base_kind : kind;
  if (k == DatasetKind::OodShift) throw std::invalid_argument("DatasetSpec: ood_shift base cannot be ood_shift");
  if (k == DatasetKind::GaussianMixture) {
    if (!(sigma > 0.0)) throw std::invalid_argument("DatasetSpec: sigma must be positive");
    if (classes < 2 || centers.size() != classes) throw std::invalid_argument("DatasetSpec: one center per class");
    for (const auto& c : centers) {
      if (c.size() != dim) throw std::invalid_argument("DatasetSpec: center dimension != dim");
    }
  } else {
    if (classes != 2) throw std::invalid_argument("DatasetSpec: two_arcs has exactly 2 classes");
    if (dim < 2) throw std::invalid_argument("DatasetSpec: two_arcs needs dim >= 2");
    if (!(radius > 0.0) || noise < 0.0) throw std::invalid_argument("DatasetSpec: bad two_arcs parameters");
  }
  if (kind == DatasetKind::OodShift && offset.size() != dim) {
    throw std::invalid_argument("DatasetSpec: offset dimension != dim");
  }
}

DatasetSpec reference_mixture(double sigma, std::size_t per_class, std::uint64_t seed) {
  DatasetSpec s;
  s.kind = DatasetKind::GaussianMixture;
  s.dim = 2;
  s.classes = 3;
  s.sigma = sigma;
  s.per_class = per_class;
  s.seed = seed;
  for (double deg : {90.0, 210.0, 330.0}) {
    const double rad = deg * std::numbers::pi / 180.0;
    s.centers.push_back({std::cos(rad), std::sin(rad)});
  }
  return s;
}

DatasetSpec ood_shift(const DatasetSpec& base, double distance) {
  DatasetSpec s = base;
  s.base_kind = base.kind == DatasetKind::OodShift ? base.base_kind : base.kind;
  s.kind = DatasetKind::OodShift;
  s.offset.assign(base.dim, 0.0);
  s.offset[0] = distance;
  return s;
}

Matrix Dataset::onehot() const {
  Matrix y(labels.size(), classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) throw std::invalid_argument("Dataset::onehot: unlabelled row");
    y(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  return y;
}

namespace {

std::vector<std::pair<double, double>> bounds_of(const Matrix& x) {
  std::vector<std::pair<double, double>> b(
      x.cols(), {std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()});
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) {
      b[j].first = std::min(b[j].first, x(i, j));
      b[j].second = std::max(b[j].second, x(i, j));
    }
  }
  return b;
}

}  // namespace

Dataset gen_dataset(const DatasetSpec& spec, Rng& rng) {
  spec.validate();
  const DatasetKind k = spec.kind == DatasetKind::OodShift ? spec.base_kind : spec.kind;
  Dataset ds;
  ds.classes = spec.classes;
  ds.x = Matrix(spec.classes * spec.per_class, spec.dim);
  std::size_t row = 0;
  for (std::size_t cls = 0; cls < spec.classes; ++cls) {
    for (std::size_t i = 0; i < spec.per_class; ++i, ++row) {
      auto r = ds.x.row(row);
      if (k == DatasetKind::GaussianMixture) {
        for (std::size_t j = 0; j < spec.dim; ++j) r[j] = rng.normal(spec.centers[cls][j], spec.sigma);
      } else {
        const double t = rng.uniform(0.0, std::numbers::pi);
        if (cls == 0) {
          r[0] = spec.radius * std::cos(t);
          r[1] = spec.radius * std::sin(t);
        } else {
          r[0] = spec.radius * (1.0 - std::cos(t));
          r[1] = spec.radius * (0.5 - std::sin(t));
        }
        for (std::size_t j = 0; j < spec.dim; ++j) r[j] += spec.noise * rng.normal();
      }
      ds.labels.push_back(static_cast<int>(cls));
    }
  }
  if (spec.kind == DatasetKind::OodShift) {
    for (std::size_t i = 0; i < ds.x.rows(); ++i) {
      for (std::size_t j = 0; j < spec.dim; ++j) ds.x(i, j) += spec.offset[j];
    }
    std::fill(ds.labels.begin(), ds.labels.end(), -1);
  }
  ds.bounds = bounds_of(ds.x);
  return ds;
}

Dataset gen_dataset(const DatasetSpec& spec) {
  Rng rng(spec.seed);
  return gen_dataset(spec, rng);
}

Matrix analytic_posterior(const DatasetSpec& spec, const Matrix& x) {
  if (spec.kind != DatasetKind::GaussianMixture) {
    throw std::invalid_argument("analytic_posterior: requires a gaussian_mixture spec");
  }
  spec.validate();
  if (x.cols() != spec.dim) throw ShapeError("analytic_posterior: input dimension != spec dim");
  // Shared isotropic covariance and equal priors: the posterior is a softmax
  // of -|x - mu_k|^2 / (2 sigma^2).
  Matrix logits(x.rows(), spec.classes);
  const double inv = 1.0 / (2.0 * spec.sigma * spec.sigma);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t k = 0; k < spec.classes; ++k) {
      double d2 = 0.0;
      for (std::size_t j = 0; j < spec.dim; ++j) {
        const double d = x(i, j) - spec.centers[k][j];
        d2 += d * d;
      }
      logits(i, k) = -d2 * inv;
    }
  }
  return softmax(logits);
}

void save_dataset_csv(const Dataset& ds, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw FormatError("cannot write " + file.string());
  CsvWriter w(out);
  std::vector<std::string> header;
  for (std::size_t j = 0; j < ds.x.cols(); ++j) header.push_back("x" + std::to_string(j + 1));
  header.push_back("label");
  w.header(header);
  for (std::size_t i = 0; i < ds.x.rows(); ++i) {
    for (double v : ds.x.row(i)) w.field(v);
    w.field(ds.labels[i]);
    w.end_row();
  }
  if (!out) throw FormatError("write failed for " + file.string());
}

Dataset load_dataset_csv(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw FormatError("cannot read " + file.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(file.string() + ": missing header");
  const auto header = split_csv_line(line);
  if (header.size() < 2 || header.back() != "label") throw FormatError(file.string() + ": last column must be label");
  const std::size_t d = header.size() - 1;
  std::vector<double> values;
  Dataset ds;
  int max_label = -1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size()) throw FormatError(file.string() + ": ragged row");
    for (std::size_t j = 0; j < d; ++j) values.push_back(parse_real(f[j]));
    const int y = static_cast<int>(parse_real(f[d]));
    ds.labels.push_back(y);
    max_label = std::max(max_label, y);
  }
  ds.x = Matrix(ds.labels.size(), d, std::move(values));
  ds.classes = static_cast<std::size_t>(max_label + 1);
  ds.bounds = bounds_of(ds.x);
  return ds;
}

}  // namespace omada::harness
