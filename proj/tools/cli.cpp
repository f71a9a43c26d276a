#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "omada/calib_metrics.hpp"
#include "omada/checkpoint.hpp"
#include "omada/classifier_train.hpp"
#include "omada/config.hpp"
#include "omada/csv.hpp"
#include "omada/error.hpp"
#include "omada/dataset.hpp"
#include "omada/experiment.hpp"
#include "omada/latent_attack.hpp"
#include "omada/loss.hpp"
#include "omada/manifold_model.hpp"

namespace omada::cli {

namespace fs = std::filesystem;
using harness::ExperimentConfig;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Experiment config (JSON, dotted or nested keys)");
  cmd->add_option("--set", c.overrides, "Override a config key: --set gen.epochs=50")->take_all();
}

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : harness::load_config(c.config);
  for (const auto& o : c.overrides) harness::apply_override(cfg, o);
  harness::apply_environment(cfg);
  cfg.validate();
  return cfg;
}

harness::GenModelCheckpoint load_genmodel(const std::string& file) {
  auto ckpt = harness::load_checkpoint(file);
  if (auto* g = std::get_if<harness::GenModelCheckpoint>(&ckpt)) return std::move(*g);
  throw FormatError(file + ": not a genmodel checkpoint");
}

Mlp load_classifier(const std::string& file) {
  auto ckpt = harness::load_checkpoint(file);
  if (auto* c = std::get_if<harness::ClassifierCheckpoint>(&ckpt)) return std::move(c->net);
  throw FormatError(file + ": not a classifier checkpoint");
}

std::vector<int> labels_of(const harness::Dataset& ds) { return ds.labels; }

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"On-manifold adversarial data augmentation: generative model, latent attacks, "
               "augmented training and calibration evaluation",
               "omada"};
  app.require_subcommand(1);
  app.fallthrough(false);

  Common common;
  std::string out_path, data_path, model_path, set_path, test_path, ood_path, val_path, method = "base";
  std::string sample_mode = "uniform", label_mode = "soft", val_out;
  std::size_t count = 1;
  bool boundary = false;

  auto* gen_data = app.add_subcommand("gen-data", "Write train/test/OOD datasets as CSV");
  add_common(gen_data, common);
  gen_data->add_option("--out", out_path, "Output directory")->required();

  auto* train_gen = app.add_subcommand("train-gen", "Train encoder, decoder and latent classifier");
  add_common(train_gen, common);
  train_gen->add_option("--data", data_path, "Training CSV")->required();
  train_gen->add_option("--out", out_path, "Checkpoint file")->required();

  auto* build_set = app.add_subcommand("build-set", "Attack the latent classifier and write an OMADA set");
  add_common(build_set, common);
  build_set->add_option("--model", model_path, "Generative model checkpoint")->required();
  build_set->add_option("--data", data_path, "Source CSV")->required();
  build_set->add_option("--out", out_path, "Augmentation set CSV")->required();
  build_set->add_option("--sample-mode", sample_mode, "uniform|entropy");
  build_set->add_option("--label-mode", label_mode, "soft|hard|uniform");

  auto* train_clf = app.add_subcommand("train-clf", "Train an input-space classifier");
  add_common(train_clf, common);
  train_clf->add_option("--data", data_path, "Training CSV")->required();
  train_clf->add_option("--method", method, "base|omada*|mixup|manifold-mixup|eps-smoothing|ceda");
  train_clf->add_option("--aug-set", set_path, "OMADA set CSV (omada methods)");
  train_clf->add_option("--out", out_path, "Checkpoint file")->required();
  train_clf->add_option("--val-out", val_out, "Write the held-out validation rows to this CSV");

  auto* eval = app.add_subcommand("eval", "Evaluate a classifier checkpoint");
  add_common(eval, common);
  eval->add_option("--model", model_path, "Classifier checkpoint")->required();
  eval->add_option("--test", test_path, "Test CSV")->required();
  eval->add_option("--ood", ood_path, "Out-of-distribution CSV")->required();
  eval->add_option("--val", val_path, "Validation CSV for temperature fitting");
  eval->add_option("--out", out_path, "Directory for metrics.json and reliability.csv");

  auto* sweep = app.add_subcommand("sweep-temp", "Grid sweep of NLL and ACE over temperatures");
  add_common(sweep, common);
  sweep->add_option("--model", model_path, "Classifier checkpoint")->required();
  sweep->add_option("--val", val_path, "Validation CSV")->required();
  sweep->add_option("--test", test_path, "Test CSV")->required();
  sweep->add_option("--out", out_path, "sweep_temp.csv path")->required();

  auto* paths = app.add_subcommand("paths", "Export latent attack paths as CSV");
  add_common(paths, common);
  paths->add_option("--model", model_path, "Generative model checkpoint")->required();
  paths->add_option("--data", data_path, "Source CSV")->required();
  paths->add_option("--count", count, "Number of paths");
  paths->add_flag("--boundary", boundary, "Use decision-boundary targets");
  paths->add_option("--out", out_path, "Output directory")->required();

  auto* run = app.add_subcommand("run", "Full experiment over methods and seeds");
  add_common(run, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "omada: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    const ExperimentConfig cfg = resolve(common);
    const std::uint64_t seed = cfg.seeds.front();

    if (gen_data->parsed()) {
      fs::create_directories(out_path);
      const auto eval_sets = harness::make_eval_sets(cfg);
      harness::save_dataset_csv(harness::make_train_set(cfg, seed), fs::path(out_path) / "train.csv");
      harness::save_dataset_csv(eval_sets.test, fs::path(out_path) / "test.csv");
      harness::save_dataset_csv(eval_sets.ood, fs::path(out_path) / "ood.csv");
      out << "wrote train.csv, test.csv, ood.csv to " << out_path << '\n';
    } else if (train_gen->parsed()) {
      const auto ds = harness::load_dataset_csv(data_path);
      Rng rng = Rng(seed).derive(4);
      const auto res = manifold::train_generative(ds.x, ds.labels, cfg.gen, rng);
      harness::save_checkpoint(harness::GenModelCheckpoint{res.model, res.classifier, res.history}, out_path);
      out << "reconstruction_mse " << format_real(manifold::reconstruction_error(res.model, ds.x)) << '\n';
    } else if (build_set->parsed()) {
      const auto gm = load_genmodel(model_path);
      const auto ds = harness::load_dataset_csv(data_path);
      Rng rng = Rng(seed).derive(5);
      const auto set = attack::build_omada_set(
          gm.model, gm.classifier, ds.x, ds.labels, {cfg.omada.boundary_targets, cfg.omada.boundary_fraction},
          cfg.attack, attack::sample_mode_from_string(sample_mode), attack::label_mode_from_string(label_mode),
          cfg.omada.set_size, rng, {cfg.omada.samples_per_path, 16, cfg.threads});
      harness::save_augmentation_set(set, out_path);
      out << "samples " << set.size() << " mean_label_entropy " << format_real(set.mean_label_entropy()) << '\n';
    } else if (train_clf->parsed()) {
      const auto ds = harness::load_dataset_csv(data_path);
      const auto spec = harness::parse_method(method);
      train::AugmentMethod m = train::NoAugment{};
      using F = harness::MethodSpec::Family;
      switch (spec.family) {
        case F::Base: break;
        case F::Omada:
          if (set_path.empty()) throw std::invalid_argument("train-clf: --aug-set is required for omada methods");
          m = train::Omada{std::make_shared<const attack::AugmentationSet>(harness::load_augmentation_set(set_path))};
          break;
        case F::Mixup: m = train::Mixup{cfg.method_params.mixup_alpha}; break;
        case F::ManifoldMixup: m = train::ManifoldMixup{cfg.method_params.manifold_mixup_alpha}; break;
        case F::EpsSmoothing: m = train::EpsSmoothing{cfg.method_params.epsilon}; break;
        case F::Ceda: m = train::CedaNoise{cfg.method_params.ceda_fraction_permuted}; break;
      }
      Rng rng = Rng(seed).derive(harness::stable_hash("clf:" + method));
      const auto tc = train::train_classifier(ds.x, ds.onehot(), m, cfg.clf, rng);
      harness::save_checkpoint(harness::ClassifierCheckpoint{tc.net, method, tc.selected_epoch, tc.history}, out_path);
      if (!val_out.empty()) {
        harness::Dataset val;
        val.x = ds.x.select_rows(tc.validation_indices);
        for (auto i : tc.validation_indices) val.labels.push_back(ds.labels[i]);
        val.classes = ds.classes;
        harness::save_dataset_csv(val, val_out);
      }
      out << "selected_epoch " << tc.selected_epoch << '\n';
    } else if (eval->parsed()) {
      const Mlp net = load_classifier(model_path);
      harness::EvalSets sets{harness::load_dataset_csv(test_path), harness::load_dataset_csv(ood_path)};
      harness::Metrics m;
      if (val_path.empty()) {
        m = harness::evaluate_probs(softmax(predict(net, sets.test.x)), sets.test.labels,
                                    softmax(predict(net, sets.ood.x)), cfg.metrics);
      } else {
        const auto val = harness::load_dataset_csv(val_path);
        m = harness::evaluate_network(net, val.x, labels_of(val), sets, cfg.metrics);
      }
      nlohmann::json j = nlohmann::json::object();
      const auto values = m.values();
      for (std::size_t k = 0; k < values.size(); ++k) j[harness::Metrics::columns()[k]] = values[k];
      out << j.dump(2) << '\n';
      if (!out_path.empty()) {
        fs::create_directories(out_path);
        std::ofstream(fs::path(out_path) / "metrics.json") << j.dump(2) << '\n';
        const metrics::Predictions test{softmax(predict(net, sets.test.x)), sets.test.labels};
        harness::write_reliability_csv({{std::to_string(seed), metrics::reliability_bins(test, cfg.metrics.bins)}},
                                       fs::path(out_path) / "reliability.csv");
      }
    } else if (sweep->parsed()) {
      const Mlp net = load_classifier(model_path);
      const auto val = harness::load_dataset_csv(val_path);
      const auto test = harness::load_dataset_csv(test_path);
      const auto grid = metrics::log_spaced_grid(cfg.metrics.temp_lo, cfg.metrics.temp_hi, cfg.metrics.temp_count);
      const auto table = metrics::sweep_temperature(predict(net, val.x), val.labels, predict(net, test.x),
                                                    test.labels, grid, cfg.metrics.bins);
      harness::write_sweep_csv({{fs::path(model_path).stem().string(), table}}, out_path);
      out << "argmin_nll " << format_real(table.argmin_nll) << " argmin_ace " << format_real(table.argmin_ace)
          << (table.optima_differ() ? " (differ)" : " (agree)") << '\n';
    } else if (paths->parsed()) {
      const auto gm = load_genmodel(model_path);
      const auto ds = harness::load_dataset_csv(data_path);
      Rng rng = Rng(seed).derive(5);
      const auto result = attack::generate_paths(gm.model, gm.classifier, ds.x, ds.labels,
                                                 {boundary, boundary ? 1.0 : 0.0}, cfg.attack, count, rng);
      fs::create_directories(out_path);
      for (std::size_t i = 0; i < result.size(); ++i) {
        attack::export_path_csv(result[i], fs::path(out_path) / ("path_" + std::to_string(i) + ".csv"));
      }
      out << "wrote " << result.size() << " path files to " << out_path << '\n';
    } else if (run->parsed()) {
      const auto report = harness::run_experiment(cfg);
      std::size_t failed = 0;
      for (const auto& r : report.rows) failed += r.status == "ok" ? 0 : 1;
      out << "rows " << report.rows.size() << " failed " << failed << " output " << cfg.output_dir.string() << '\n';
    }
  } catch (const std::exception& e) {
    err << "omada: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace omada::cli
