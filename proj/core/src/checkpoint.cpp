#include "omada/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "omada/csv.hpp"
#include "omada/error.hpp"

namespace omada::harness {

using nlohmann::json;

namespace {

template <class T>
T field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw FormatError(std::string("checkpoint: missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: bad field '") + key + "': " + e.what());
  }
}

Matrix block_from_json(const json& j, std::size_t rows, std::size_t cols, const std::string& what) {
  auto values = j.get<std::vector<double>>();
  if (values.size() != rows * cols) {
    throw FormatError("checkpoint: " + what + " has " + std::to_string(values.size()) + " values, expected " +
                      std::to_string(rows * cols));
  }
  return Matrix(rows, cols, std::move(values));
}

json gen_stats_to_json(const std::vector<manifold::GenEpochStats>& h) {
  json arr = json::array();
  for (const auto& s : h) {
    arr.push_back({{"total", s.total},
                   {"reconstruction", s.reconstruction},
                   {"latent_reg", s.latent_reg},
                   {"classification", s.classification}});
  }
  return arr;
}

std::vector<manifold::GenEpochStats> gen_stats_from_json(const json& arr) {
  std::vector<manifold::GenEpochStats> h;
  for (const auto& e : arr) {
    h.push_back({field<double>(e, "total"), field<double>(e, "reconstruction"), field<double>(e, "latent_reg"),
                 field<double>(e, "classification")});
  }
  return h;
}

}  // namespace

json mlp_to_json(const Mlp& net) {
  json acts = json::array();
  for (auto a : net.spec.hidden_activations) acts.push_back(to_string(a));
  json weights = json::array();
  json biases = json::array();
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    weights.push_back(net.weights[i].data());
    biases.push_back(net.biases[i].data());
  }
  return {{"layer_sizes", net.spec.layer_sizes},
          {"activations", acts},
          {"dropout_rate", net.spec.dropout_rate},
          {"weights", weights},
          {"biases", biases}};
}

Mlp mlp_from_json(const json& j) {
  MlpSpec spec;
  spec.layer_sizes = field<std::vector<std::size_t>>(j, "layer_sizes");
  for (const auto& a : field<std::vector<std::string>>(j, "activations")) {
    try {
      spec.hidden_activations.push_back(activation_from_string(a));
    } catch (const std::invalid_argument& e) {
      throw FormatError(std::string("checkpoint: ") + e.what());
    }
  }
  spec.dropout_rate = field<double>(j, "dropout_rate");
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  const json& w = j.at("weights");
  const json& b = j.at("biases");
  if (!w.is_array() || !b.is_array() || w.size() != spec.num_layers() || b.size() != spec.num_layers()) {
    throw FormatError("checkpoint: parameter block count does not match layer_sizes");
  }
  Mlp net;
  net.spec = spec;
  for (std::size_t i = 0; i < spec.num_layers(); ++i) {
    const std::string layer = "layer " + std::to_string(i);
    net.weights.push_back(block_from_json(w[i], spec.layer_sizes[i], spec.layer_sizes[i + 1], layer + " weights"));
    net.biases.push_back(block_from_json(b[i], 1, spec.layer_sizes[i + 1], layer + " biases"));
  }
  return net;
}

json checkpoint_to_json(const Checkpoint& ckpt) {
  json j{{"format_version", kCheckpointVersion}};
  if (const auto* g = std::get_if<GenModelCheckpoint>(&ckpt)) {
    j["kind"] = "genmodel";
    j["latent_dim"] = g->model.latent_dim;
    j["num_classes"] = g->classifier.num_classes;
    j["encoder"] = mlp_to_json(g->model.encoder);
    j["decoder"] = mlp_to_json(g->model.decoder);
    j["latent_classifier"] = mlp_to_json(g->classifier.net);
    j["history"] = gen_stats_to_json(g->history);
  } else if (const auto* c = std::get_if<ClassifierCheckpoint>(&ckpt)) {
    j["kind"] = "classifier";
    j["method"] = c->method;
    j["selected_epoch"] = c->selected_epoch;
    j["net"] = mlp_to_json(c->net);
    json batches = json::array();
    for (const auto& b : c->history.batches) batches.push_back({b.real, b.augmented});
    j["history"] = {{"train_loss", c->history.train_loss},
                    {"val_accuracy", c->history.val_accuracy},
                    {"batches", batches}};
  } else {
    const auto& e = std::get<EnsembleCheckpoint>(ckpt);
    j["kind"] = "ensemble";
    j["method"] = e.method;
    json members = json::array();
    for (const auto& m : e.members) members.push_back(mlp_to_json(m));
    j["members"] = members;
  }
  return j;
}

Checkpoint checkpoint_from_json(const json& j) {
  const int version = field<int>(j, "format_version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported format_version " + std::to_string(version));
  }
  const auto kind = field<std::string>(j, "kind");
  if (kind == "genmodel") {
    GenModelCheckpoint g;
    g.model.encoder = mlp_from_json(j.at("encoder"));
    g.model.decoder = mlp_from_json(j.at("decoder"));
    g.model.latent_dim = field<std::size_t>(j, "latent_dim");
    g.classifier.net = mlp_from_json(j.at("latent_classifier"));
    g.classifier.num_classes = field<std::size_t>(j, "num_classes");
    g.history = gen_stats_from_json(j.at("history"));
    try {
      g.model.validate();
      g.classifier.validate();
    } catch (const std::exception& e) {
      throw FormatError(std::string("checkpoint: ") + e.what());
    }
    return g;
  }
  if (kind == "classifier") {
    ClassifierCheckpoint c;
    c.method = field<std::string>(j, "method");
    c.selected_epoch = field<std::size_t>(j, "selected_epoch");
    c.net = mlp_from_json(j.at("net"));
    const json& h = j.at("history");
    c.history.train_loss = field<std::vector<double>>(h, "train_loss");
    c.history.val_accuracy = field<std::vector<double>>(h, "val_accuracy");
    for (const auto& b : h.at("batches")) c.history.batches.push_back({b.at(0).get<std::size_t>(), b.at(1).get<std::size_t>()});
    return c;
  }
  if (kind == "ensemble") {
    EnsembleCheckpoint e;
    e.method = field<std::string>(j, "method");
    for (const auto& m : j.at("members")) e.members.push_back(mlp_from_json(m));
    if (e.members.empty()) throw FormatError("checkpoint: ensemble without members");
    return e;
  }
  throw FormatError("checkpoint: unknown kind '" + kind + "'");
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw FormatError("cannot write " + file.string());
  out << checkpoint_to_json(ckpt).dump(1) << '\n';
  if (!out) throw FormatError("write failed for " + file.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw FormatError("cannot read " + file.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError(file.string() + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

void save_augmentation_set(const attack::AugmentationSet& set, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw FormatError("cannot write " + file.string());
  CsvWriter w(out);
  const std::size_t d = set.empty() ? 0 : set.samples.front().input.cols();
  const std::size_t c = set.empty() ? 0 : set.samples.front().label.size();
  std::vector<std::string> header{"path_id", "step_index"};
  for (std::size_t j = 0; j < d; ++j) header.push_back("x" + std::to_string(j + 1));
  for (std::size_t j = 0; j < c; ++j) header.push_back("y_" + std::to_string(j));
  w.header(header);
  for (const auto& s : set.samples) {
    w.field(s.provenance.path_id).field(s.provenance.step_index);
    for (double v : s.input.data()) w.field(v);
    for (double v : s.label) w.field(v);
    w.end_row();
  }
  if (!out) throw FormatError("write failed for " + file.string());
}

attack::AugmentationSet load_augmentation_set(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw FormatError("cannot read " + file.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(file.string() + ": missing header");
  const auto header = split_csv_line(line);
  std::size_t d = 0, c = 0;
  for (const auto& h : header) {
    if (h.starts_with("x")) ++d;
    if (h.starts_with("y_")) ++c;
  }
  if (header.size() != 2 + d + c || header[0] != "path_id") throw FormatError(file.string() + ": unexpected header");
  attack::AugmentationSet set;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size()) throw FormatError(file.string() + ": ragged row");
    attack::OmadaSample s;
    s.provenance = {static_cast<std::size_t>(parse_real(f[0])), static_cast<std::size_t>(parse_real(f[1]))};
    s.input = Matrix(1, d);
    for (std::size_t j = 0; j < d; ++j) s.input(0, j) = parse_real(f[2 + j]);
    for (std::size_t j = 0; j < c; ++j) s.label.push_back(parse_real(f[2 + d + j]));
    set.samples.push_back(std::move(s));
  }
  return set;
}

}  // namespace omada::harness
