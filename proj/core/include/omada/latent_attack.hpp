#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "omada/manifold_model.hpp"
#include "omada/matrix.hpp"
#include "omada/rng.hpp"

namespace omada::attack {

/// Raised when an attack hits a non-finite gradient.
class AttackAborted : public std::runtime_error {
 public:
  explicit AttackAborted(const std::string& what) : std::runtime_error(what) {}
};

struct AttackConfig {
  std::size_t steps = 1000;
  double alpha = 0.01;
  std::size_t record_stride = 10;
  std::optional<double> early_stop_target_prob;

  void validate() const;
};

enum class TargetKind { SingleClass, Boundary };

/// Attack target: a one-hot class or an even split between two classes.
struct TargetSpec {
  TargetKind kind = TargetKind::SingleClass;
  std::vector<std::size_t> classes;  // one id, or the boundary pair
  std::vector<double> vector;        // y^o

  bool operator==(const TargetSpec&) const = default;
};

TargetSpec make_single_target(std::size_t cls, std::size_t num_classes);
TargetSpec make_boundary_target(std::size_t a, std::size_t b, std::size_t num_classes);
TargetSpec make_target(TargetKind kind, const std::vector<std::size_t>& classes, std::size_t num_classes);

/// Recorded latent iterates of one attack. `steps[i]` is the iteration number
/// of `codes[i]`; all vectors have equal length.
struct AttackPath {
  std::size_t source_index = 0;
  int source_class = -1;
  TargetSpec target;
  std::vector<std::size_t> steps;
  std::vector<Matrix> codes;                     // 1 x m each
  std::vector<std::vector<double>> soft_labels;  // latent classifier output per code
  std::vector<double> entropies;

  std::size_t size() const { return codes.size(); }
  double target_mass(std::size_t i) const;
};

/// Sign-gradient descent on CE(y^o, C(z)) in latent space:
///   z_{k+1} = z_k - alpha * sign(grad_z CE(y^o, C(z_k)))
/// starting from encode(x_source). No norm ball is imposed on the displacement.
AttackPath pgd_attack(const manifold::GenModel& gm, const manifold::LatentClassifier& lc,
                      const Matrix& x_source, const TargetSpec& target, const AttackConfig& cfg);

/// Same iteration from an explicit starting code.
AttackPath pgd_attack_from_code(const manifold::LatentClassifier& lc, const Matrix& z0,
                                const TargetSpec& target, const AttackConfig& cfg);

enum class SampleMode { UniformAlongPath, EntropyWeighted };
enum class LabelMode { Soft, Hard, Uniform };

std::string to_string(SampleMode m);
std::string to_string(LabelMode m);
SampleMode sample_mode_from_string(const std::string& s);
LabelMode label_mode_from_string(const std::string& s);

/// Sampling pmf over recorded steps: uniform, or proportional to entropy.
/// A path whose entropies sum to zero falls back to uniform.
std::vector<double> path_pmf(const AttackPath& path, SampleMode mode);

/// k i.i.d. recorded-step indices drawn from path_pmf.
std::vector<std::size_t> sample_path(const AttackPath& path, SampleMode mode, std::size_t k, Rng& rng);

std::vector<double> transform_label(std::span<const double> soft, LabelMode mode, std::size_t num_classes);

struct Provenance {
  std::size_t path_id = 0;
  std::size_t step_index = 0;  // index into the path's recorded codes
  bool operator==(const Provenance&) const = default;
};

struct OmadaSample {
  Matrix input;               // 1 x d decoded sample
  std::vector<double> label;  // sums to 1
  Provenance provenance;
};

struct AugmentationSet {
  std::vector<OmadaSample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  Matrix inputs() const;
  Matrix labels() const;
  /// Mean Shannon entropy of the labels.
  double mean_label_entropy() const;
};

struct TargetPolicy {
  bool boundary_targets = false;
  /// Share of attacks that use a boundary target when enabled.
  double boundary_fraction = 0.5;
};

struct BuildOptions {
  std::size_t samples_per_path = 10;
  std::size_t max_retries = 16;
  std::size_t threads = 1;
};

/// Attacks random (source, target) pairs. Path i is computed from rng.derive(i),
/// so the output does not depend on the thread count.
std::vector<AttackPath> generate_paths(const manifold::GenModel& gm, const manifold::LatentClassifier& lc,
                                       const Matrix& sources, const std::vector<int>& source_labels,
                                       const TargetPolicy& policy, const AttackConfig& cfg,
                                       std::size_t num_paths, Rng& rng, const BuildOptions& opts = {});

/// Draws `set_size` samples from existing paths: samples_per_path step indices
/// per path, path order cycling, decoded and labelled per `label_mode`.
AugmentationSet assemble_set(const manifold::GenModel& gm, const std::vector<AttackPath>& paths,
                             SampleMode sample_mode, LabelMode label_mode, std::size_t set_size,
                             std::size_t samples_per_path, Rng& rng);

/// Generates ceil(set_size / samples_per_path) paths and assembles the set.
AugmentationSet build_omada_set(const manifold::GenModel& gm, const manifold::LatentClassifier& lc,
                                const Matrix& sources, const std::vector<int>& source_labels,
                                const TargetPolicy& policy, const AttackConfig& cfg, SampleMode sample_mode,
                                LabelMode label_mode, std::size_t set_size, Rng& rng,
                                const BuildOptions& opts = {});

/// CSV columns: step, z1..zm (only when m == 2), p_class_0..p_class_{c-1}, entropy.
void export_path_csv(const AttackPath& path, std::ostream& out);
void export_path_csv(const AttackPath& path, const std::filesystem::path& file);

/// Parsed rows of an exported path file.
struct PathTable {
  std::vector<std::string> header;
  std::vector<std::size_t> steps;
  std::vector<std::vector<double>> codes;
  std::vector<std::vector<double>> probs;
  std::vector<double> entropies;
};
PathTable import_path_csv(std::istream& in);

}  // namespace omada::attack
