#include "omada/config.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <stdexcept>

#include "omada/error.hpp"

namespace omada::harness {

using nlohmann::json;

MethodSpec parse_method(const std::string& name) {
  MethodSpec m;
  m.name = name;
  using F = MethodSpec::Family;
  if (name == "base") return m.family = F::Base, m;
  if (name == "mixup") return m.family = F::Mixup, m;
  if (name == "manifold-mixup") return m.family = F::ManifoldMixup, m;
  if (name == "eps-smoothing") return m.family = F::EpsSmoothing, m;
  if (name == "ceda") return m.family = F::Ceda, m;
  if (!name.starts_with("omada")) throw std::invalid_argument("unknown method '" + name + "'");
  m.family = F::Omada;
  std::string rest = name.substr(5);
  if (rest.starts_with("-se")) {
    m.sample_mode = attack::SampleMode::EntropyWeighted;
    rest = rest.substr(3);
  }
  if (rest == "-h") {
    m.label_mode = attack::LabelMode::Hard;
  } else if (rest == "-u") {
    m.label_mode = attack::LabelMode::Uniform;
  } else if (!rest.empty()) {
    throw std::invalid_argument("unknown method '" + name + "'");
  }
  return m;
}

void ExperimentConfig::validate() const {
  dataset.validate();
  gen.validate();
  attack.validate();
  clf.validate();
  if (seeds.empty()) throw std::invalid_argument("config: seeds must not be empty");
  if (methods.empty()) throw std::invalid_argument("config: methods must not be empty");
  for (const auto& m : methods) parse_method(m);
  if (omada.set_size < 1 || omada.samples_per_path < 1) throw std::invalid_argument("config: omada sizes must be >= 1");
  if (metrics.bins < 1 || metrics.temp_count < 1 || metrics.mc_passes < 1) {
    throw std::invalid_argument("config: metric options must be >= 1");
  }
  if (test_per_class < 1) throw std::invalid_argument("config: test_per_class must be >= 1");
}

namespace {

struct Binding {
  std::function<void(ExperimentConfig&, const json&)> set;
  std::function<json(const ExperimentConfig&)> get;
};

template <class T, class Get>
Binding bind(Get accessor) {
  return {[accessor](ExperimentConfig& c, const json& v) { accessor(c) = v.get<T>(); },
          [accessor](const ExperimentConfig& c) { return json(accessor(const_cast<ExperimentConfig&>(c))); }};
}

#define OMADA_BIND(T, expr) bind<T>([](ExperimentConfig& c) -> T& { return expr; })

const std::map<std::string, Binding>& bindings() {
  static const std::map<std::string, Binding> table = [] {
    std::map<std::string, Binding> b;
    b["dataset.kind"] = {[](ExperimentConfig& c, const json& v) { c.dataset.kind = dataset_kind_from_string(v.get<std::string>()); },
                         [](const ExperimentConfig& c) { return json(to_string(c.dataset.kind)); }};
    b["dataset.dim"] = OMADA_BIND(std::size_t, c.dataset.dim);
    b["dataset.classes"] = OMADA_BIND(std::size_t, c.dataset.classes);
    b["dataset.centers"] = OMADA_BIND(std::vector<std::vector<double>>, c.dataset.centers);
    b["dataset.sigma"] = OMADA_BIND(double, c.dataset.sigma);
    b["dataset.per_class"] = OMADA_BIND(std::size_t, c.dataset.per_class);
    b["dataset.radius"] = OMADA_BIND(double, c.dataset.radius);
    b["dataset.noise"] = OMADA_BIND(double, c.dataset.noise);
    b["dataset.test_per_class"] = OMADA_BIND(std::size_t, c.test_per_class);
    b["dataset.ood_distance_sigmas"] = OMADA_BIND(double, c.ood_distance_sigmas);

    b["gen.epochs"] = OMADA_BIND(std::size_t, c.gen.epochs);
    b["gen.lr"] = OMADA_BIND(double, c.gen.lr);
    b["gen.momentum"] = OMADA_BIND(double, c.gen.momentum);
    b["gen.beta_latent_reg"] = OMADA_BIND(double, c.gen.beta_latent_reg);
    b["gen.gamma_cls"] = OMADA_BIND(double, c.gen.gamma_cls);
    b["gen.batch_size"] = OMADA_BIND(std::size_t, c.gen.batch_size);
    b["gen.latent_dim"] = OMADA_BIND(std::size_t, c.gen.latent_dim);
    b["gen.hidden"] = OMADA_BIND(std::vector<std::size_t>, c.gen.hidden);
    b["gen.classifier_hidden"] = OMADA_BIND(std::vector<std::size_t>, c.gen.classifier_hidden);

    b["attack.steps"] = OMADA_BIND(std::size_t, c.attack.steps);
    b["attack.alpha"] = OMADA_BIND(double, c.attack.alpha);
    b["attack.record_stride"] = OMADA_BIND(std::size_t, c.attack.record_stride);
    b["attack.early_stop_target_prob"] = {
        [](ExperimentConfig& c, const json& v) {
          if (v.is_null()) {
            c.attack.early_stop_target_prob.reset();
          } else {
            c.attack.early_stop_target_prob = v.get<double>();
          }
        },
        [](const ExperimentConfig& c) {
          return c.attack.early_stop_target_prob ? json(*c.attack.early_stop_target_prob) : json(nullptr);
        }};

    b["clf.epochs"] = OMADA_BIND(std::size_t, c.clf.epochs);
    b["clf.lr"] = OMADA_BIND(double, c.clf.lr);
    b["clf.momentum"] = OMADA_BIND(double, c.clf.momentum);
    b["clf.weight_decay"] = OMADA_BIND(double, c.clf.weight_decay);
    b["clf.batch_size"] = OMADA_BIND(std::size_t, c.clf.batch_size);
    b["clf.lr_milestones"] = OMADA_BIND(std::vector<std::size_t>, c.clf.lr_milestones);
    b["clf.lr_decay"] = OMADA_BIND(double, c.clf.lr_decay);
    b["clf.validation_fraction"] = OMADA_BIND(double, c.clf.validation_fraction);
    b["clf.min_validation"] = OMADA_BIND(std::size_t, c.clf.min_validation);
    b["clf.early_stop_on_val_acc"] = OMADA_BIND(bool, c.clf.early_stop_on_val_acc);
    b["clf.hidden"] = OMADA_BIND(std::vector<std::size_t>, c.clf.hidden);
    b["clf.activation"] = {[](ExperimentConfig& c, const json& v) { c.clf.activation = activation_from_string(v.get<std::string>()); },
                           [](const ExperimentConfig& c) { return json(to_string(c.clf.activation)); }};
    b["clf.dropout_rate"] = OMADA_BIND(double, c.clf.dropout_rate);

    b["methods"] = OMADA_BIND(std::vector<std::string>, c.methods);
    b["method.mixup_alpha"] = OMADA_BIND(double, c.method_params.mixup_alpha);
    b["method.manifold_mixup_alpha"] = OMADA_BIND(double, c.method_params.manifold_mixup_alpha);
    b["method.epsilon"] = OMADA_BIND(double, c.method_params.epsilon);
    b["method.ceda_fraction_permuted"] = OMADA_BIND(double, c.method_params.ceda_fraction_permuted);

    b["omada.set_size"] = OMADA_BIND(std::size_t, c.omada.set_size);
    b["omada.samples_per_path"] = OMADA_BIND(std::size_t, c.omada.samples_per_path);
    b["omada.boundary_targets"] = OMADA_BIND(bool, c.omada.boundary_targets);
    b["omada.boundary_fraction"] = OMADA_BIND(double, c.omada.boundary_fraction);

    b["metrics.bins"] = OMADA_BIND(std::size_t, c.metrics.bins);
    b["metrics.temp_lo"] = OMADA_BIND(double, c.metrics.temp_lo);
    b["metrics.temp_hi"] = OMADA_BIND(double, c.metrics.temp_hi);
    b["metrics.temp_count"] = OMADA_BIND(std::size_t, c.metrics.temp_count);
    b["metrics.mc_passes"] = OMADA_BIND(std::size_t, c.metrics.mc_passes);

    b["seeds"] = OMADA_BIND(std::vector<std::uint64_t>, c.seeds);
    b["output_dir"] = {[](ExperimentConfig& c, const json& v) { c.output_dir = v.get<std::string>(); },
                       [](const ExperimentConfig& c) { return json(c.output_dir.string()); }};
    b["threads"] = OMADA_BIND(std::size_t, c.threads);
    b["ensembles"] = OMADA_BIND(bool, c.ensembles);
    b["export_paths"] = OMADA_BIND(std::size_t, c.export_paths);
    b["save_checkpoints"] = OMADA_BIND(bool, c.save_checkpoints);
    return b;
  }();
  return table;
}

#undef OMADA_BIND

void flatten_into(const json& node, const std::string& prefix, json& out) {
  for (auto it = node.begin(); it != node.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object()) {
      flatten_into(*it, key, out);
    } else {
      out[key] = *it;
    }
  }
}

}  // namespace

json flatten_config(const json& doc) {
  if (!doc.is_object()) throw FormatError("config: top level must be an object");
  json out = json::object();
  flatten_into(doc, "", out);
  return out;
}

void apply_config(ExperimentConfig& cfg, const json& doc) {
  const json flat = flatten_config(doc);
  const auto& table = bindings();
  for (auto it = flat.begin(); it != flat.end(); ++it) {
    const auto b = table.find(it.key());
    if (b == table.end()) throw FormatError("config: unknown key '" + it.key() + "'");
    try {
      b->second.set(cfg, *it);
    } catch (const json::exception& e) {
      throw FormatError("config: bad value for '" + it.key() + "': " + e.what());
    }
  }
  // Centers only make sense for the mixture; keep them consistent with classes/dim.
  if (cfg.dataset.kind == DatasetKind::GaussianMixture && !flat.contains("dataset.centers") &&
      (cfg.dataset.classes != 3 || cfg.dataset.dim != 2)) {
    throw FormatError("config: dataset.centers required unless using the default 3-class 2-D mixture");
  }
}

void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw FormatError("override must look like key=value: '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  apply_config(cfg, json{{key, value}});
}

ExperimentConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw FormatError("cannot read config " + file.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw FormatError("config " + file.string() + ": " + e.what());
  }
  ExperimentConfig cfg;
  apply_config(cfg, doc);
  return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
  json out = json::object();
  for (const auto& [key, b] : bindings()) out[key] = b.get(cfg);
  return out;
}

void apply_environment(ExperimentConfig& cfg) {
  if (const char* dir = std::getenv("OMADA_OUT_DIR"); dir != nullptr && *dir != '\0') cfg.output_dir = dir;
}

}  // namespace omada::harness
