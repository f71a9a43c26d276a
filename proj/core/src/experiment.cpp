#include "omada/experiment.hpp"

#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <thread>

#include "omada/checkpoint.hpp"
#include "omada/classifier_train.hpp"
#include "omada/csv.hpp"
#include "omada/error.hpp"
#include "omada/latent_attack.hpp"
#include "omada/loss.hpp"
#include "omada/manifold_model.hpp"

namespace omada::harness {

namespace fs = std::filesystem;

const std::vector<std::string>& Metrics::columns() {
  static const std::vector<std::string> cols = {
      "accuracy",           "ace",        "ece",     "nll",         "ts_nll_temperature", "ts_nll_ace", "ts_nll_ece",
      "ts_nll_nll",         "ts_ace_temperature", "ts_ace_ace", "auroc", "ood_mmc", "sparsification"};
  return cols;
}

std::vector<double> Metrics::values() const {
  return {accuracy,   ace,        ece,           nll,        ts_nll_temperature, ts_nll_ace, ts_nll_ece,
          ts_nll_nll, ts_ace_temperature, ts_ace_ace, auroc, ood_mmc, sparsification};
}

Metrics Metrics::nan() {
  const double q = std::numeric_limits<double>::quiet_NaN();
  return {q, q, q, q, q, q, q, q, q, q, q, q, q};
}

std::uint64_t stable_hash(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

double ood_distance(const ExperimentConfig& cfg) {
  const double scale = cfg.dataset.kind == DatasetKind::TwoArcs ? cfg.dataset.radius : cfg.dataset.sigma;
  return cfg.ood_distance_sigmas * scale;
}

}  // namespace

EvalSets make_eval_sets(const ExperimentConfig& cfg) {
  const Rng root(cfg.dataset.seed);
  DatasetSpec test_spec = cfg.dataset;
  test_spec.per_class = cfg.test_per_class;
  Rng test_rng = root.derive(2);
  Rng ood_rng = root.derive(3);
  return {gen_dataset(test_spec, test_rng), gen_dataset(ood_shift(test_spec, ood_distance(cfg)), ood_rng)};
}

Dataset make_train_set(const ExperimentConfig& cfg, std::uint64_t seed) {
  Rng rng = Rng(seed).derive(1);
  return gen_dataset(cfg.dataset, rng);
}

Metrics evaluate_probs(const Matrix& test_probs, const std::vector<int>& test_labels, const Matrix& ood_probs,
                       const MetricOptions& opts) {
  Metrics m = Metrics::nan();
  const metrics::Predictions test{test_probs, test_labels};
  const metrics::Predictions ood{ood_probs, std::vector<int>(ood_probs.rows(), -1)};
  m.accuracy = metrics::accuracy(test);
  m.ace = metrics::ace(test, opts.bins);
  m.ece = metrics::ece(test, opts.bins);
  m.nll = metrics::nll(test);
  m.auroc = metrics::auroc(metrics::confidences(test_probs), metrics::confidences(ood_probs));
  m.ood_mmc = metrics::mmc(ood);
  m.sparsification = metrics::sparsification_error(test);
  return m;
}

Metrics evaluate_network(const Mlp& net, const Matrix& x_val, const std::vector<int>& y_val, const EvalSets& eval,
                         const MetricOptions& opts) {
  const Matrix test_logits = predict(net, eval.test.x);
  Metrics m = evaluate_probs(softmax(test_logits), eval.test.labels, softmax(predict(net, eval.ood.x)), opts);
  const Matrix val_logits = predict(net, x_val);
  const auto grid = metrics::log_spaced_grid(opts.temp_lo, opts.temp_hi, opts.temp_count);
  const auto by_nll = metrics::fit_temperature(val_logits, y_val, metrics::TemperatureCriterion::Nll, grid, opts.bins);
  const auto by_ace = metrics::fit_temperature(val_logits, y_val, metrics::TemperatureCriterion::Ace, grid, opts.bins);
  const metrics::Predictions ts_nll{metrics::temperature_scale(test_logits, by_nll.temperature), eval.test.labels};
  const metrics::Predictions ts_ace{metrics::temperature_scale(test_logits, by_ace.temperature), eval.test.labels};
  m.ts_nll_temperature = by_nll.temperature;
  m.ts_nll_ace = metrics::ace(ts_nll, opts.bins);
  m.ts_nll_ece = metrics::ece(ts_nll, opts.bins);
  m.ts_nll_nll = metrics::nll(ts_nll);
  m.ts_ace_temperature = by_ace.temperature;
  m.ts_ace_ace = metrics::ace(ts_ace, opts.bins);
  return m;
}

std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows) {
  std::vector<SummaryRow> out;
  std::map<std::string, std::size_t> index;
  std::vector<std::vector<std::vector<double>>> samples;
  for (const auto& r : rows) {
    if (r.status != "ok") continue;
    auto [it, inserted] = index.emplace(r.method, out.size());
    if (inserted) {
      out.push_back({r.method, 0, {}, {}});
      samples.emplace_back();
    }
    samples[it->second].push_back(r.metrics.values());
    ++out[it->second].runs;
  }
  const std::size_t cols = Metrics::columns().size();
  for (std::size_t k = 0; k < out.size(); ++k) {
    const auto& s = samples[k];
    const double n = static_cast<double>(s.size());
    out[k].mean.assign(cols, 0.0);
    out[k].stddev.assign(cols, 0.0);
    for (std::size_t c = 0; c < cols; ++c) {
      double mean = 0.0;
      for (const auto& v : s) mean += v[c];
      mean /= n;
      double ss = 0.0;
      for (const auto& v : s) ss += (v[c] - mean) * (v[c] - mean);
      out[k].mean[c] = mean;
      out[k].stddev[c] = s.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    }
  }
  return out;
}

namespace {

std::ofstream open_out(const fs::path& file) {
  std::ofstream out(file);
  if (!out) throw FormatError("cannot write " + file.string());
  return out;
}

}  // namespace

void write_results_csv(const std::vector<ResultRow>& rows, const fs::path& file) {
  auto out = open_out(file);
  CsvWriter w(out);
  std::vector<std::string> header{"seed", "method", "status", "selected_epoch"};
  for (const auto& c : Metrics::columns()) header.push_back(c);
  w.header(header);
  for (const auto& r : rows) {
    w.field(r.seed).field(r.method).field(r.status).field(r.selected_epoch);
    for (double v : r.metrics.values()) w.field(v);
    w.end_row();
  }
}

void write_summary_csv(const std::vector<SummaryRow>& rows, const fs::path& file) {
  // Written to a sibling file first so a failure never leaves a partial summary.
  const fs::path tmp = file.string() + ".tmp";
  {
    auto out = open_out(tmp);
    CsvWriter w(out);
    std::vector<std::string> header{"method", "runs"};
    for (const auto& c : Metrics::columns()) {
      header.push_back(c + "_mean");
      header.push_back(c + "_std");
    }
    w.header(header);
    for (const auto& r : rows) {
      w.field(r.method).field(r.runs);
      for (std::size_t c = 0; c < r.mean.size(); ++c) w.field(r.mean[c]).field(r.stddev[c]);
      w.end_row();
    }
    if (!out) throw FormatError("write failed for " + tmp.string());
  }
  fs::rename(tmp, file);
}

void write_reliability_csv(const std::vector<std::pair<std::string, metrics::ReliabilityBins>>& bins,
                           const fs::path& file) {
  auto out = open_out(file);
  CsvWriter w(out);
  w.header({"seed", "bin", "count", "confidence", "accuracy"});
  for (const auto& [seed, rb] : bins) {
    for (std::size_t r = 0; r < rb.bins.size(); ++r) {
      w.field(seed).field(r).field(rb.bins[r].count).field(rb.bins[r].confidence).field(rb.bins[r].accuracy);
      w.end_row();
    }
  }
}

void write_sweep_csv(const std::vector<std::pair<std::string, metrics::SweepTable>>& sweeps, const fs::path& file) {
  auto out = open_out(file);
  CsvWriter w(out);
  w.header({"run", "T", "NLL_val", "ACE_val", "NLL_test", "ACE_test", "argmin_nll", "argmin_ace"});
  for (const auto& [run, table] : sweeps) {
    for (const auto& row : table.rows) {
      w.field(run).field(row.temperature).field(row.nll_val).field(row.ace_val).field(row.nll_test).field(row.ace_test);
      w.field(table.argmin_nll).field(table.argmin_ace);
      w.end_row();
    }
  }
}

namespace {

struct MethodOutcome {
  ResultRow row;
  std::vector<ResultRow> extra_rows;  // MC-dropout variants
  std::shared_ptr<Mlp> net;
  metrics::ReliabilityBins reliability;
  metrics::SweepTable sweep;
};

struct SeedOutcome {
  std::vector<MethodOutcome> methods;
  std::vector<attack::AttackPath> paths;
};

train::AugmentMethod make_method(const MethodSpec& spec, const MethodParams& p,
                                 const std::shared_ptr<const attack::AugmentationSet>& set) {
  using F = MethodSpec::Family;
  switch (spec.family) {
    case F::Base: return train::NoAugment{};
    case F::Omada: return train::Omada{set};
    case F::Mixup: return train::Mixup{p.mixup_alpha};
    case F::ManifoldMixup: return train::ManifoldMixup{p.manifold_mixup_alpha};
    case F::EpsSmoothing: return train::EpsSmoothing{p.epsilon};
    case F::Ceda: return train::CedaNoise{p.ceda_fraction_permuted};
  }
  return train::NoAugment{};
}

std::string seed_name(std::uint64_t seed) { return std::to_string(seed); }

SeedOutcome run_seed(const ExperimentConfig& cfg, std::uint64_t seed, const EvalSets& eval) {
  SeedOutcome outcome;
  const Rng root(seed);
  const Dataset train_set = make_train_set(cfg, seed);
  const Matrix onehot = train_set.onehot();
  std::vector<MethodSpec> specs;
  for (const auto& name : cfg.methods) specs.push_back(parse_method(name));

  auto fail_all = [&](const std::string& why) {
    for (const auto& s : specs) {
      MethodOutcome mo;
      mo.row = {seed_name(seed), s.name, "error: " + why, 0, Metrics::nan()};
      outcome.methods.push_back(std::move(mo));
    }
    return outcome;
  };

  const bool needs_omada =
      std::any_of(specs.begin(), specs.end(), [](const MethodSpec& s) { return s.family == MethodSpec::Family::Omada; });
  std::map<std::string, std::shared_ptr<const attack::AugmentationSet>> sets;
  if (needs_omada) {
    try {
      Rng gen_rng = root.derive(4);
      const auto gen = manifold::train_generative(train_set.x, train_set.labels, cfg.gen, gen_rng);
      if (cfg.save_checkpoints) {
        save_checkpoint(GenModelCheckpoint{gen.model, gen.classifier, gen.history},
                        cfg.output_dir / ("genmodel_seed" + seed_name(seed) + ".ckpt.json"));
      }
      const std::size_t per_path = cfg.omada.samples_per_path;
      const std::size_t num_paths = (cfg.omada.set_size + per_path - 1) / per_path;
      Rng attack_rng = root.derive(5);
      outcome.paths = attack::generate_paths(gen.model, gen.classifier, train_set.x, train_set.labels,
                                             {cfg.omada.boundary_targets, cfg.omada.boundary_fraction}, cfg.attack,
                                             num_paths, attack_rng);
      for (const auto& s : specs) {
        if (s.family != MethodSpec::Family::Omada || sets.contains(s.name)) continue;
        Rng set_rng = root.derive(stable_hash("set:" + s.name));
        auto set = attack::assemble_set(gen.model, outcome.paths, s.sample_mode, s.label_mode, cfg.omada.set_size,
                                        per_path, set_rng);
        if (cfg.save_checkpoints) {
          save_augmentation_set(set, cfg.output_dir / ("omada_set_" + s.name + "_seed" + seed_name(seed) + ".csv"));
        }
        sets[s.name] = std::make_shared<const attack::AugmentationSet>(std::move(set));
      }
    } catch (const std::exception& e) {
      return fail_all(e.what());
    }
  }

  const auto grid = metrics::log_spaced_grid(cfg.metrics.temp_lo, cfg.metrics.temp_hi, cfg.metrics.temp_count);
  for (const auto& s : specs) {
    MethodOutcome mo;
    mo.row.seed = seed_name(seed);
    mo.row.method = s.name;
    try {
      const auto set_it = sets.find(s.name);
      const auto method = make_method(s, cfg.method_params, set_it == sets.end() ? nullptr : set_it->second);
      Rng clf_rng = root.derive(stable_hash("clf:" + s.name));
      auto tc = train::train_classifier(train_set.x, onehot, method, cfg.clf, clf_rng);
      const Matrix x_val = train_set.x.select_rows(tc.validation_indices);
      std::vector<int> y_val;
      for (auto i : tc.validation_indices) y_val.push_back(train_set.labels[i]);

      mo.row.selected_epoch = tc.selected_epoch;
      mo.row.metrics = evaluate_network(tc.net, x_val, y_val, eval, cfg.metrics);
      const metrics::Predictions test{softmax(predict(tc.net, eval.test.x)), eval.test.labels};
      mo.reliability = metrics::reliability_bins(test, cfg.metrics.bins);
      mo.sweep = metrics::sweep_temperature(predict(tc.net, x_val), y_val, predict(tc.net, eval.test.x),
                                            eval.test.labels, grid, cfg.metrics.bins);
      if (tc.net.spec.dropout_rate > 0.0) {
        Rng mc_rng = root.derive(stable_hash("mc:" + s.name));
        const Matrix test_p = train::mc_dropout_predict(tc.net, eval.test.x, cfg.metrics.mc_passes, mc_rng);
        const Matrix ood_p = train::mc_dropout_predict(tc.net, eval.ood.x, cfg.metrics.mc_passes, mc_rng);
        ResultRow mc{seed_name(seed), s.name + "-mc" + std::to_string(cfg.metrics.mc_passes), "ok", tc.selected_epoch,
                     evaluate_probs(test_p, eval.test.labels, ood_p, cfg.metrics)};
        mo.extra_rows.push_back(std::move(mc));
      }
      if (cfg.save_checkpoints) {
        save_checkpoint(ClassifierCheckpoint{tc.net, s.name, tc.selected_epoch, tc.history},
                        cfg.output_dir / ("clf_" + s.name + "_seed" + seed_name(seed) + ".ckpt.json"));
      }
      mo.net = std::make_shared<Mlp>(std::move(tc.net));
    } catch (const std::exception& e) {
      mo.row.status = std::string("error: ") + e.what();
      mo.row.metrics = Metrics::nan();
    }
    outcome.methods.push_back(std::move(mo));
  }
  return outcome;
}

std::string sanitize(std::string s) {
  for (auto& ch : s) {
    if (ch == ',' || ch == '\n' || ch == '\r') ch = ';';
  }
  return s;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& cfg_in) {
  ExperimentConfig cfg = cfg_in;
  apply_environment(cfg);
  cfg.validate();
  fs::create_directories(cfg.output_dir);
  {
    auto out = open_out(cfg.output_dir / "config.json");
    out << config_to_json(cfg).dump(2) << '\n';
  }

  const EvalSets eval = make_eval_sets(cfg);
  std::vector<SeedOutcome> outcomes(cfg.seeds.size());
  std::vector<std::exception_ptr> errors(cfg.seeds.size());
  auto work = [&](std::size_t i) {
    try {
      outcomes[i] = run_seed(cfg, cfg.seeds[i], eval);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const std::size_t workers = std::min(std::max<std::size_t>(cfg.threads, 1), cfg.seeds.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) work(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < cfg.seeds.size(); i = next++) work(i);
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  ExperimentReport report;
  std::map<std::string, std::vector<std::pair<std::string, metrics::ReliabilityBins>>> reliability;
  std::vector<std::pair<std::string, metrics::SweepTable>> sweeps;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    for (auto& mo : outcomes[i].methods) {
      mo.row.status = sanitize(mo.row.status);
      report.rows.push_back(mo.row);
      for (const auto& extra : mo.extra_rows) report.rows.push_back(extra);
      if (mo.net) {
        reliability[mo.row.method].emplace_back(mo.row.seed, mo.reliability);
        sweeps.emplace_back(mo.row.method + "_seed" + mo.row.seed, mo.sweep);
      }
    }
  }

  if (cfg.ensembles && cfg.seeds.size() > 1) {
    for (const auto& name : cfg.methods) {
      std::vector<Mlp> members;
      for (const auto& oc : outcomes) {
        for (const auto& mo : oc.methods) {
          if (mo.row.method == name && mo.net) members.push_back(*mo.net);
        }
      }
      ResultRow row{"ens", name + "-ens", "ok", 0, Metrics::nan()};
      if (members.size() < 2) {
        row.status = "error: fewer than 2 successful members";
      } else {
        try {
          row.metrics = evaluate_probs(train::ensemble_predict(members, eval.test.x), eval.test.labels,
                                       train::ensemble_predict(members, eval.ood.x), cfg.metrics);
          if (cfg.save_checkpoints) {
            save_checkpoint(EnsembleCheckpoint{members, name}, cfg.output_dir / ("ensemble_" + name + ".ckpt.json"));
          }
        } catch (const std::exception& e) {
          row.status = sanitize(std::string("error: ") + e.what());
        }
      }
      report.rows.push_back(std::move(row));
    }
  }

  write_results_csv(report.rows, cfg.output_dir / "results.csv");
  for (const auto& [method, bins] : reliability) {
    write_reliability_csv(bins, cfg.output_dir / ("reliability_" + method + ".csv"));
  }
  write_sweep_csv(sweeps, cfg.output_dir / "sweep_temp.csv");
  if (!outcomes.empty()) {
    const auto& paths = outcomes.front().paths;
    for (std::size_t p = 0; p < std::min(cfg.export_paths, paths.size()); ++p) {
      attack::export_path_csv(paths[p], cfg.output_dir / ("path_" + std::to_string(p) + ".csv"));
    }
  }
  report.summary = summarize(report.rows);
  write_summary_csv(report.summary, cfg.output_dir / "summary.csv");
  return report;
}

}  // namespace omada::harness
