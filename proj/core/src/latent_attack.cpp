#include "omada/latent_attack.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <istream>
#include <numeric>
#include <thread>

#include "omada/csv.hpp"
#include "omada/error.hpp"
#include "omada/loss.hpp"

namespace omada::attack {

void AttackConfig::validate() const {
  if (steps < 1) throw std::invalid_argument("AttackConfig: steps must be >= 1");
  if (!(alpha > 0.0)) throw std::invalid_argument("AttackConfig: alpha must be positive");
  if (record_stride < 1) throw std::invalid_argument("AttackConfig: record_stride must be >= 1");
}

TargetSpec make_single_target(std::size_t cls, std::size_t num_classes) {
  if (cls >= num_classes) {
    throw std::invalid_argument("make_target: class " + std::to_string(cls) + " out of range for " +
                                std::to_string(num_classes) + " classes");
  }
  TargetSpec t{TargetKind::SingleClass, {cls}, std::vector<double>(num_classes, 0.0)};
  t.vector[cls] = 1.0;
  return t;
}

TargetSpec make_boundary_target(std::size_t a, std::size_t b, std::size_t num_classes) {
  if (a >= num_classes || b >= num_classes) throw std::invalid_argument("make_target: class id out of range");
  if (a == b) throw std::invalid_argument("make_target: boundary pair must be two distinct classes");
  TargetSpec t{TargetKind::Boundary, {a, b}, std::vector<double>(num_classes, 0.0)};
  t.vector[a] = 0.5;
  t.vector[b] = 0.5;
  return t;
}

TargetSpec make_target(TargetKind kind, const std::vector<std::size_t>& classes, std::size_t num_classes) {
  if (kind == TargetKind::SingleClass) {
    if (classes.size() != 1) throw std::invalid_argument("make_target: single_class takes one id");
    return make_single_target(classes[0], num_classes);
  }
  if (classes.size() != 2) throw std::invalid_argument("make_target: boundary takes two ids");
  return make_boundary_target(classes[0], classes[1], num_classes);
}

double AttackPath::target_mass(std::size_t i) const {
  double mass = 0.0;
  for (std::size_t j = 0; j < target.vector.size(); ++j) mass += target.vector[j] * soft_labels[i][j];
  return mass;
}

AttackPath pgd_attack_from_code(const manifold::LatentClassifier& lc, const Matrix& z0,
                                const TargetSpec& target, const AttackConfig& cfg) {
  cfg.validate();
  if (z0.rows() != 1 || z0.cols() != lc.net.spec.input_dim()) {
    throw ShapeError("pgd_attack: starting code must be 1 x " + std::to_string(lc.net.spec.input_dim()));
  }
  if (target.vector.size() != lc.num_classes) throw ShapeError("pgd_attack: target length != num_classes");
  for (std::size_t cls : target.classes) {
    if (cls >= lc.num_classes) throw std::invalid_argument("pgd_attack: target class out of range");
  }

  AttackPath path;
  path.target = target;
  const Matrix y = Matrix::row_vector(target.vector);
  Matrix z = z0;
  Rng unused(0);
  for (std::size_t k = 0;; ++k) {
    const ForwardResult fr = forward(lc.net, z, Mode::Eval, unused);
    const Matrix probs = softmax(fr.output);
    double mass = 0.0;
    for (std::size_t j = 0; j < y.cols(); ++j) mass += y(0, j) * probs(0, j);
    const bool stop = k > 0 && cfg.early_stop_target_prob && mass >= *cfg.early_stop_target_prob;
    if (k == 0 || k % cfg.record_stride == 0 || k == cfg.steps || stop) {
      path.steps.push_back(k);
      path.codes.push_back(z);
      path.soft_labels.emplace_back(probs.data());
      path.entropies.push_back(entropy(probs.row(0)));
    }
    if (stop || k == cfg.steps) break;

    const Gradients g = backward(lc.net, fr.cache, soft_cross_entropy_logit_grad(probs, y));
    if (!g.input.all_finite()) {
      throw AttackAborted("pgd_attack: non-finite latent gradient at step " + std::to_string(k));
    }
    for (std::size_t j = 0; j < z.cols(); ++j) {
      const double gj = g.input(0, j);
      const double sign = gj > 0.0 ? 1.0 : (gj < 0.0 ? -1.0 : 0.0);
      z(0, j) -= cfg.alpha * sign;
    }
  }
  return path;
}

AttackPath pgd_attack(const manifold::GenModel& gm, const manifold::LatentClassifier& lc,
                      const Matrix& x_source, const TargetSpec& target, const AttackConfig& cfg) {
  if (x_source.rows() != 1) throw ShapeError("pgd_attack: x_source must be a single row");
  return pgd_attack_from_code(lc, manifold::encode(gm, x_source), target, cfg);
}

std::string to_string(SampleMode m) { return m == SampleMode::UniformAlongPath ? "uniform" : "entropy"; }

std::string to_string(LabelMode m) {
  switch (m) {
    case LabelMode::Soft: return "soft";
    case LabelMode::Hard: return "hard";
    case LabelMode::Uniform: return "uniform";
  }
  return "soft";
}

SampleMode sample_mode_from_string(const std::string& s) {
  if (s == "uniform") return SampleMode::UniformAlongPath;
  if (s == "entropy") return SampleMode::EntropyWeighted;
  throw std::invalid_argument("unknown sample mode '" + s + "' (expected uniform|entropy)");
}

LabelMode label_mode_from_string(const std::string& s) {
  if (s == "soft") return LabelMode::Soft;
  if (s == "hard") return LabelMode::Hard;
  if (s == "uniform") return LabelMode::Uniform;
  throw std::invalid_argument("unknown label mode '" + s + "' (expected soft|hard|uniform)");
}

std::vector<double> path_pmf(const AttackPath& path, SampleMode mode) {
  const std::size_t n = path.size();
  if (n == 0) throw std::invalid_argument("path_pmf: empty path");
  std::vector<double> pmf(n, 1.0 / static_cast<double>(n));
  if (mode == SampleMode::EntropyWeighted) {
    const double total = std::accumulate(path.entropies.begin(), path.entropies.end(), 0.0);
    if (total > 0.0) {
      for (std::size_t i = 0; i < n; ++i) pmf[i] = path.entropies[i] / total;
    }
  }
  return pmf;
}

std::vector<std::size_t> sample_path(const AttackPath& path, SampleMode mode, std::size_t k, Rng& rng) {
  const auto pmf = path_pmf(path, mode);
  std::vector<double> cdf(pmf.size());
  std::partial_sum(pmf.begin(), pmf.end(), cdf.begin());
  std::vector<std::size_t> out;
  out.reserve(k);
  for (std::size_t draw = 0; draw < k; ++draw) {
    if (mode == SampleMode::UniformAlongPath || pmf.size() == 1) {
      out.push_back(rng.uniform_index(pmf.size()));
      continue;
    }
    const double u = rng.uniform() * cdf.back();
    std::size_t idx = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    if (idx >= pmf.size()) idx = pmf.size() - 1;
    // Never land on a zero-mass step through rounding at a flat stretch of the cdf.
    while (pmf[idx] == 0.0 && idx + 1 < pmf.size()) ++idx;
    while (pmf[idx] == 0.0 && idx > 0) --idx;
    out.push_back(idx);
  }
  return out;
}

std::vector<double> transform_label(std::span<const double> soft, LabelMode mode, std::size_t num_classes) {
  switch (mode) {
    case LabelMode::Soft:
      return {soft.begin(), soft.end()};
    case LabelMode::Hard: {
      std::vector<double> out(num_classes, 0.0);
      out[argmax(soft)] = 1.0;
      return out;
    }
    case LabelMode::Uniform:
      return std::vector<double>(num_classes, 1.0 / static_cast<double>(num_classes));
  }
  return {soft.begin(), soft.end()};
}

Matrix AugmentationSet::inputs() const {
  if (samples.empty()) return {};
  Matrix out(samples.size(), samples.front().input.cols());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::copy(samples[i].input.data().begin(), samples[i].input.data().end(), out.row(i).begin());
  }
  return out;
}

Matrix AugmentationSet::labels() const {
  if (samples.empty()) return {};
  Matrix out(samples.size(), samples.front().label.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::copy(samples[i].label.begin(), samples[i].label.end(), out.row(i).begin());
  }
  return out;
}

double AugmentationSet::mean_label_entropy() const {
  if (samples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : samples) total += entropy(s.label);
  return total / static_cast<double>(samples.size());
}

namespace {

AttackPath attack_task(const manifold::GenModel& gm, const manifold::LatentClassifier& lc, const Matrix& sources,
                       const std::vector<int>& labels, const TargetPolicy& policy, const AttackConfig& cfg,
                       Rng rng, std::size_t max_retries) {
  const std::size_t c = lc.num_classes;
  std::string last_error;
  for (std::size_t attempt = 0; attempt <= max_retries; ++attempt) {
    const std::size_t src = rng.uniform_index(sources.rows());
    const auto ys = static_cast<std::size_t>(labels[src]);
    std::size_t other = rng.uniform_index(c - 1);
    if (other >= ys) ++other;
    const bool boundary = policy.boundary_targets && rng.uniform() < policy.boundary_fraction;
    const TargetSpec target = boundary ? make_boundary_target(ys, other, c) : make_single_target(other, c);
    try {
      AttackPath path = pgd_attack(gm, lc, sources.row_copy(src), target, cfg);
      path.source_index = src;
      path.source_class = labels[src];
      return path;
    } catch (const AttackAborted& e) {
      last_error = e.what();
    }
  }
  throw std::runtime_error("generate_paths: attack failed after retries: " + last_error);
}

}  // namespace

std::vector<AttackPath> generate_paths(const manifold::GenModel& gm, const manifold::LatentClassifier& lc,
                                       const Matrix& sources, const std::vector<int>& source_labels,
                                       const TargetPolicy& policy, const AttackConfig& cfg,
                                       std::size_t num_paths, Rng& rng, const BuildOptions& opts) {
  cfg.validate();
  if (sources.rows() == 0) throw std::invalid_argument("generate_paths: no sources");
  if (source_labels.size() != sources.rows()) throw ShapeError("generate_paths: one label per source required");
  if (lc.num_classes < 2) throw std::invalid_argument("generate_paths: need at least 2 classes");
  for (int y : source_labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= lc.num_classes) {
      throw std::invalid_argument("generate_paths: source label out of range");
    }
  }
  const Rng base(rng.next_u64());
  std::vector<AttackPath> paths(num_paths);
  std::vector<std::exception_ptr> errors(num_paths);
  auto run = [&](std::size_t i) {
    try {
      paths[i] = attack_task(gm, lc, sources, source_labels, policy, cfg, base.derive(i), opts.max_retries);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const std::size_t workers = std::min<std::size_t>(std::max<std::size_t>(opts.threads, 1), num_paths);
  if (workers <= 1) {
    for (std::size_t i = 0; i < num_paths; ++i) run(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < num_paths; i = next++) run(i);
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return paths;
}

AugmentationSet assemble_set(const manifold::GenModel& gm, const std::vector<AttackPath>& paths,
                             SampleMode sample_mode, LabelMode label_mode, std::size_t set_size,
                             std::size_t samples_per_path, Rng& rng) {
  if (set_size < 1) throw std::invalid_argument("assemble_set: set_size must be >= 1");
  if (samples_per_path < 1) throw std::invalid_argument("assemble_set: samples_per_path must be >= 1");
  if (paths.empty()) throw std::invalid_argument("assemble_set: no paths");
  AugmentationSet set;
  set.samples.reserve(set_size);
  for (std::size_t p = 0; set.samples.size() < set_size; ++p) {
    const std::size_t id = p % paths.size();
    const AttackPath& path = paths[id];
    const std::size_t k = std::min(samples_per_path, set_size - set.samples.size());
    for (std::size_t idx : sample_path(path, sample_mode, k, rng)) {
      OmadaSample s;
      s.input = manifold::decode(gm, path.codes[idx]);
      s.label = transform_label(path.soft_labels[idx], label_mode, path.soft_labels[idx].size());
      s.provenance = {id, idx};
      set.samples.push_back(std::move(s));
    }
  }
  return set;
}

AugmentationSet build_omada_set(const manifold::GenModel& gm, const manifold::LatentClassifier& lc,
                                const Matrix& sources, const std::vector<int>& source_labels,
                                const TargetPolicy& policy, const AttackConfig& cfg, SampleMode sample_mode,
                                LabelMode label_mode, std::size_t set_size, Rng& rng,
                                const BuildOptions& opts) {
  if (set_size < 1) throw std::invalid_argument("build_omada_set: set_size must be >= 1");
  const std::size_t per_path = std::max<std::size_t>(opts.samples_per_path, 1);
  const std::size_t num_paths = (set_size + per_path - 1) / per_path;
  const auto paths = generate_paths(gm, lc, sources, source_labels, policy, cfg, num_paths, rng, opts);
  return assemble_set(gm, paths, sample_mode, label_mode, set_size, per_path, rng);
}

void export_path_csv(const AttackPath& path, std::ostream& out) {
  CsvWriter w(out);
  const bool with_codes = !path.codes.empty() && path.codes.front().cols() == 2;
  const std::size_t c = path.soft_labels.empty() ? 0 : path.soft_labels.front().size();
  std::vector<std::string> header{"step"};
  if (with_codes) {
    header.push_back("z1");
    header.push_back("z2");
  }
  for (std::size_t j = 0; j < c; ++j) header.push_back("p_class_" + std::to_string(j));
  header.push_back("entropy");
  w.header(header);
  for (std::size_t i = 0; i < path.size(); ++i) {
    w.field(path.steps[i]);
    if (with_codes) w.field(path.codes[i](0, 0)).field(path.codes[i](0, 1));
    for (double p : path.soft_labels[i]) w.field(p);
    w.field(path.entropies[i]);
    w.end_row();
  }
}

void export_path_csv(const AttackPath& path, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw FormatError("export_path_csv: cannot write " + file.string());
  export_path_csv(path, out);
  if (!out) throw FormatError("export_path_csv: write failed for " + file.string());
}

PathTable import_path_csv(std::istream& in) {
  PathTable table;
  std::string line;
  if (!std::getline(in, line)) throw FormatError("import_path_csv: missing header");
  table.header = split_csv_line(line);
  if (table.header.size() < 2 || table.header.front() != "step" || table.header.back() != "entropy") {
    throw FormatError("import_path_csv: unexpected header");
  }
  std::size_t z_cols = 0, p_cols = 0;
  for (const auto& h : table.header) {
    if (h.starts_with("z")) ++z_cols;
    if (h.starts_with("p_class_")) ++p_cols;
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != table.header.size()) throw FormatError("import_path_csv: ragged row");
    table.steps.push_back(static_cast<std::size_t>(parse_real(f[0])));
    std::vector<double> z, p;
    for (std::size_t j = 0; j < z_cols; ++j) z.push_back(parse_real(f[1 + j]));
    for (std::size_t j = 0; j < p_cols; ++j) p.push_back(parse_real(f[1 + z_cols + j]));
    table.codes.push_back(std::move(z));
    table.probs.push_back(std::move(p));
    table.entropies.push_back(parse_real(f.back()));
  }
  return table;
}

}  // namespace omada::attack
