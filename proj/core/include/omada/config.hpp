#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "omada/classifier_train.hpp"
#include "omada/dataset.hpp"
#include "omada/latent_attack.hpp"
#include "omada/manifold_model.hpp"

namespace omada::harness {

/// One classifier variant in an experiment. Names: base, mixup,
/// manifold-mixup, eps-smoothing, ceda, and omada[-se][-h|-u].
struct MethodSpec {
  std::string name;
  enum class Family { Base, Omada, Mixup, ManifoldMixup, EpsSmoothing, Ceda } family = Family::Base;
  attack::SampleMode sample_mode = attack::SampleMode::UniformAlongPath;
  attack::LabelMode label_mode = attack::LabelMode::Soft;
};

MethodSpec parse_method(const std::string& name);

struct OmadaOptions {
  std::size_t set_size = 2000;
  std::size_t samples_per_path = 10;
  bool boundary_targets = false;
  double boundary_fraction = 0.5;
};

struct MethodParams {
  double mixup_alpha = 0.1;
  double manifold_mixup_alpha = 2.0;
  double epsilon = 0.1;
  double ceda_fraction_permuted = 0.5;
};

struct MetricOptions {
  std::size_t bins = 10;
  double temp_lo = 0.1;
  double temp_hi = 10.0;
  std::size_t temp_count = 200;
  std::size_t mc_passes = 15;
};

struct ExperimentConfig {
  DatasetSpec dataset = reference_mixture();
  std::size_t test_per_class = 500;
  double ood_distance_sigmas = 6.0;
  manifold::GenTrainConfig gen;
  attack::AttackConfig attack;
  train::ClfTrainConfig clf;
  std::vector<std::string> methods = {"base", "omada", "omada-se", "omada-u", "omada-se-u"};
  MethodParams method_params;
  OmadaOptions omada;
  MetricOptions metrics;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::filesystem::path output_dir = "omada_out";
  std::size_t threads = 1;
  bool ensembles = true;
  std::size_t export_paths = 2;
  bool save_checkpoints = true;

  void validate() const;
};

/// Flattens nested objects to dotted keys ({"gen": {"lr": 1}} -> "gen.lr").
nlohmann::json flatten_config(const nlohmann::json& doc);

/// Applies dotted keys onto `cfg`; unknown keys are an error.
void apply_config(ExperimentConfig& cfg, const nlohmann::json& doc);

/// Parses "key=value", the value as JSON when possible, else as a string.
void apply_override(ExperimentConfig& cfg, const std::string& assignment);

ExperimentConfig load_config(const std::filesystem::path& file);

/// Every setting as flat dotted keys, for provenance echo.
nlohmann::json config_to_json(const ExperimentConfig& cfg);

/// Applies the OMADA_OUT_DIR environment variable when set.
void apply_environment(ExperimentConfig& cfg);

}  // namespace omada::harness
