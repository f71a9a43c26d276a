#pragma once

#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "omada/classifier_train.hpp"
#include "omada/latent_attack.hpp"
#include "omada/manifold_model.hpp"
#include "omada/mlp.hpp"

namespace omada::harness {

inline constexpr int kCheckpointVersion = 1;

struct GenModelCheckpoint {
  manifold::GenModel model;
  manifold::LatentClassifier classifier;
  std::vector<manifold::GenEpochStats> history;
};

struct ClassifierCheckpoint {
  Mlp net;
  std::string method;
  std::size_t selected_epoch = 0;
  train::ClfHistory history;
};

struct EnsembleCheckpoint {
  std::vector<Mlp> members;
  std::string method;
};

using Checkpoint = std::variant<GenModelCheckpoint, ClassifierCheckpoint, EnsembleCheckpoint>;

nlohmann::json mlp_to_json(const Mlp& net);
/// Throws FormatError on missing fields or parameter blocks of the wrong length.
Mlp mlp_from_json(const nlohmann::json& j);

nlohmann::json checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const nlohmann::json& j);

/// JSON text; doubles are written in shortest round-trip form, so load
/// reproduces every parameter bit for bit.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& file);
Checkpoint load_checkpoint(const std::filesystem::path& file);

/// CSV: path_id, step_index, x1..xd, y_0..y_{c-1}.
void save_augmentation_set(const attack::AugmentationSet& set, const std::filesystem::path& file);
attack::AugmentationSet load_augmentation_set(const std::filesystem::path& file);

}  // namespace omada::harness
