// Copyright 2026 The mmvae Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end experiment runner behind the `mmvae` command line tool.
//
// All randomness is derived from ExperimentConfig::seed by name, and every
// emitted file carries the resolved configuration, so any output can be
// regenerated from its own header.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mmvae/eval.hpp"
#include "mmvae/moe.hpp"
#include "mmvae/retrieval.hpp"
#include "mmvae/taxonomy.hpp"

namespace mmvae {

/// Invalid configuration, detected before any compute.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EvalSettings {
  double w = 1.0;
  std::vector<Level> levels{Level::subordinate, Level::basic};
  double split_fraction = 0.8;
  bool classify_raw = false;
};

struct ExperimentConfig {
  std::string variant = "base";
  std::string taxonomy_path;  // overrides `variant` when set
  GeneratorConfig generator;
  ModelArchitecture model;
  TrainConfig train{.cross_reconstruction = true};
  ClassifierConfig classifier;
  EvalSettings eval;
  std::uint64_t seed = 20240611;
  std::string out_dir = "out";

  /// Full-size dimensions: 2048-d features, 768-d label embeddings, 128-d latent.
  void apply_paper_scale() {
    model = ModelArchitecture::paper_scale();
    generator.feature_dim = model.feature_dim;
    generator.embed_dim = model.embed_dim;
  }
};

struct ResolvedSeeds {
  std::uint64_t generator, split, model_init, train, classifier, eval;
};

inline ResolvedSeeds resolve_seeds(std::uint64_t root) {
  return {derive_seed(root, "generator"), derive_seed(root, "split"),      derive_seed(root, "model_init"),
          derive_seed(root, "train"),     derive_seed(root, "classifier"), derive_seed(root, "eval")};
}

/// Copies derived seeds into the sub-configs and checks consistency.
inline ExperimentConfig resolve(ExperimentConfig c) {
  const auto seeds = resolve_seeds(c.seed);
  c.generator.seed = seeds.generator;
  c.train.seed = seeds.train;
  c.classifier.seed = seeds.classifier;
  try {
    c.generator.validate();
    c.train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (c.taxonomy_path.empty() && !parse_variant(c.variant)) {
    throw ConfigError("unknown taxonomy variant '" + c.variant + "'");
  }
  if (c.model.feature_dim != c.generator.feature_dim || c.model.embed_dim != c.generator.embed_dim) {
    throw ConfigError("model and generator disagree on feature/embedding dimensions");
  }
  if (c.model.latent_dim == 0) throw ConfigError("latent_dim must be positive");
  if (c.classifier.hidden.empty() || c.classifier.batch_size == 0) throw ConfigError("classifier: bad shape");
  if (!(c.eval.w >= 0.0)) throw ConfigError("eval: w must be nonnegative");
  if (!(c.eval.split_fraction > 0.0 && c.eval.split_fraction < 1.0)) {
    throw ConfigError("eval: split fraction must lie in (0, 1)");
  }
  if (c.eval.levels.empty()) throw ConfigError("eval: no levels");
  const auto mods = c.model.modalities();
  for (Level l : c.eval.levels) {
    if (std::find(mods.begin(), mods.end(), label_modality(l)) == mods.end()) {
      throw ConfigError("eval level '" + std::string(to_string(l)) + "' has no language modality in the model");
    }
  }
  return c;
}

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  const auto s = resolve_seeds(c.seed);
  nlohmann::json levels = nlohmann::json::array();
  for (Level l : c.eval.levels) levels.push_back(std::string(to_string(l)));
  return {{"variant", c.variant},
          {"taxonomy_path", c.taxonomy_path},
          {"generator", c.generator},
          {"model", c.model},
          {"train", c.train},
          {"classifier", c.classifier},
          {"eval",
           {{"w", c.eval.w},
            {"levels", levels},
            {"split_fraction", c.eval.split_fraction},
            {"classify_raw", c.eval.classify_raw}}},
          {"seed", c.seed},
          {"seeds",
           {{"generator", s.generator},
            {"split", s.split},
            {"model_init", s.model_init},
            {"train", s.train},
            {"classifier", s.classifier},
            {"eval", s.eval}}}};
}

/// Missing keys keep their defaults. Derived seeds in the input are ignored;
/// they are always recomputed from `seed`.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    c.variant = j.value("variant", c.variant);
    c.taxonomy_path = j.value("taxonomy_path", c.taxonomy_path);
    if (j.contains("generator")) c.generator = j["generator"].get<GeneratorConfig>();
    if (j.contains("model")) c.model = j["model"].get<ModelArchitecture>();
    if (j.contains("train")) {
      const auto base = c.train;
      nlohmann::json merged = base;
      merged.update(j["train"]);
      c.train = merged.get<TrainConfig>();
    }
    if (j.contains("classifier")) c.classifier = j["classifier"].get<ClassifierConfig>();
    if (j.contains("eval")) {
      const auto& e = j["eval"];
      c.eval.w = e.value("w", c.eval.w);
      c.eval.split_fraction = e.value("split_fraction", c.eval.split_fraction);
      c.eval.classify_raw = e.value("classify_raw", c.eval.classify_raw);
      if (e.contains("levels")) {
        c.eval.levels.clear();
        for (const auto& l : e["levels"]) {
          auto lvl = parse_level(l.get<std::string>());
          if (!lvl) throw ConfigError("unknown level '" + l.get<std::string>() + "'");
          c.eval.levels.push_back(*lvl);
        }
      }
    }
    c.seed = j.value("seed", c.seed);
    c.out_dir = j.value("out_dir", c.out_dir);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

inline ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  try {
    return config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

struct PreparedData {
  PairedDataset dataset;
  Split split;
};

inline Taxonomy experiment_taxonomy(const ExperimentConfig& c) {
  try {
    if (!c.taxonomy_path.empty()) return load_taxonomy_file(c.taxonomy_path);
  } catch (const std::runtime_error& e) {  // unreadable file or TaxonomyError
    throw ConfigError(e.what());
  }
  return builtin_taxonomy(*parse_variant(c.variant));
}

/// `config` must already be resolved.
inline PreparedData prepare_data(const ExperimentConfig& config) {
  PreparedData d;
  d.dataset = generate_dataset(experiment_taxonomy(config), config.generator);
  d.split = stratified_split(d.dataset, config.eval.split_fraction, resolve_seeds(config.seed).split);
  return d;
}

inline nlohmann::json metadata(const ExperimentConfig& config) { return {{"config", config_to_json(config)}}; }

namespace detail {

inline std::filesystem::path ensure_dir(const std::string& dir) {
  std::filesystem::path p(dir);
  std::filesystem::create_directories(p);
  return p;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
}

}  // namespace detail

inline nlohmann::json dataset_summary(const PreparedData& d) {
  const auto& t = d.dataset.taxonomy;
  return {{"superordinate", t.count(Level::superordinate)},
          {"basic", t.count(Level::basic)},
          {"subordinate", t.count(Level::subordinate)},
          {"examples", d.dataset.size()},
          {"train", d.split.train.size()},
          {"test", d.split.test.size()}};
}

/// Writes dataset.csv, taxonomy.json and summary.json; returns the summary.
inline nlohmann::json cmd_gen_data(const ExperimentConfig& raw) {
  const auto config = resolve(raw);
  const auto data = prepare_data(config);
  const auto dir = detail::ensure_dir(config.out_dir);
  const auto meta = metadata(config);
  std::ostringstream csv;
  write_metadata_header(csv, meta);
  write_dataset_csv(data.dataset, csv);
  detail::write_text(dir / "dataset.csv", csv.str());
  nlohmann::json tax = taxonomy_to_json(data.dataset.taxonomy);
  detail::write_text(dir / "taxonomy.json", tax.dump(2) + "\n");
  nlohmann::json summary = dataset_summary(data);
  summary["metadata"] = meta;
  detail::write_text(dir / "summary.json", summary.dump(2) + "\n");
  return summary;
}

inline MMVAEModel initial_model(const ExperimentConfig& config) {
  return make_model(config.model, resolve_seeds(config.seed).model_init);
}

inline TrainResult run_training(const ExperimentConfig& config, const PreparedData& data) {
  return train(initial_model(config), data.dataset, data.split.train, config.train);
}

inline std::string trace_csv(const std::vector<double>& trace, const nlohmann::json& meta) {
  std::ostringstream out;
  write_metadata_header(out, meta);
  out << "step,negative_elbo\n";
  for (std::size_t i = 0; i < trace.size(); ++i) out << i << "," << format_real(trace[i]) << "\n";
  return out.str();
}

/// Writes checkpoint.json and trace.csv.
inline TrainResult cmd_train(const ExperimentConfig& raw) {
  const auto config = resolve(raw);
  const auto data = prepare_data(config);
  auto result = run_training(config, data);
  const auto dir = detail::ensure_dir(config.out_dir);
  const auto meta = metadata(config);
  detail::write_text(dir / "checkpoint.json", model_to_json(result.model, meta).dump() + "\n");
  detail::write_text(dir / "trace.csv", trace_csv(result.trace, meta));
  return result;
}

inline MMVAEModel load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("missing checkpoint '" + path + "'");
  return model_from_json(nlohmann::json::parse(in));
}

/// Trains the classifier on the train split and runs both cross-modal tests
/// for every configured level.
inline EvalReport run_evaluation(const ExperimentConfig& config, const PreparedData& data, const MMVAEModel& model) {
  check_alignment(model, data.dataset);
  const auto classifier = train_classifier(data.dataset, data.split, config.classifier);
  const auto index = FeatureIndex::from_examples(data.dataset, data.split.train);
  const auto vocab = LabelVocabulary::from_dataset(data.dataset);
  const EvalOptions options{config.eval.w, config.eval.classify_raw, resolve_seeds(config.seed).eval};
  const ModelGenerator generator{&model};

  EvalReport report;
  report.metadata = metadata(config);
  nlohmann::json clf;
  for (Level l : kAllLevels) {
    clf[std::string(to_string(l))] = {{"train_accuracy", classifier.train_accuracy[level_index(l)]},
                                      {"test_accuracy", classifier.test_accuracy[level_index(l)]}};
  }
  report.metadata["classifier"] = clf;
  TestReport understanding{"language_understanding", {}};
  TestReport naming{"language_naming", {}};
  for (Level l : config.eval.levels) {
    understanding.levels.push_back(
        language_understanding_test(generator, data.dataset, data.split, classifier, index, l, options));
    naming.levels.push_back(language_naming_test(generator, data.dataset, data.split, vocab, l, options));
  }
  report.tests = {understanding, naming};
  return report;
}

inline void write_eval_outputs(const std::filesystem::path& dir, const EvalReport& report) {
  detail::write_text(dir / "report.json", report_to_json(report).dump(2) + "\n");
  for (const auto& t : report.tests) {
    std::ostringstream csv, table;
    write_test_csv(csv, t, report.metadata);
    write_table_csv(table, t, report.metadata);
    detail::write_text(dir / (t.test + ".csv"), csv.str());
    detail::write_text(dir / (t.test + "_table.csv"), table.str());
  }
}

inline EvalReport cmd_eval(const ExperimentConfig& raw, const std::string& checkpoint_path) {
  const auto config = resolve(raw);
  const auto model = load_checkpoint(checkpoint_path);
  const auto data = prepare_data(config);
  auto report = run_evaluation(config, data, model);
  write_eval_outputs(detail::ensure_dir(config.out_dir), report);
  return report;
}

struct AblationRow {
  std::string variant;
  std::string row;
  double language_to_vision = 0.0;
  double vision_to_language = 0.0;
};

struct AblationResult {
  std::vector<std::pair<std::string, EvalReport>> reports;
  std::vector<AblationRow> table;
};

/// Relevance rows (result rows, then ground truth) for one variant.
inline std::vector<AblationRow> ablation_rows(const std::string& variant, const EvalReport& report) {
  const auto& u = report.test("language_understanding");
  const auto& n = report.test("language_naming");
  std::vector<AblationRow> rows;
  for (std::size_t i = 0; i < u.levels.size(); ++i) {
    rows.push_back({variant, level_title(u.levels[i].level), u.levels[i].relevance, n.levels[i].relevance});
  }
  for (std::size_t i = 0; i < u.levels.size(); ++i) {
    rows.push_back({variant, level_title(u.levels[i].level) + " Ground Truth", u.levels[i].baseline_relevance,
                    n.levels[i].baseline_relevance});
  }
  return rows;
}

/// Train + eval for base, ablation_wide and ablation_deep with shared seeds.
/// Each variant writes into <out>/<variant>/; the comparison goes to ablation.csv.
inline AblationResult cmd_ablate(const ExperimentConfig& raw) {
  const auto base_config = resolve(raw);
  AblationResult result;
  for (auto v : {TaxonomyVariant::base, TaxonomyVariant::ablation_wide, TaxonomyVariant::ablation_deep}) {
    ExperimentConfig c = base_config;
    c.variant = std::string(to_string(v));
    c.taxonomy_path.clear();
    c.out_dir = (std::filesystem::path(base_config.out_dir) / c.variant).string();
    const auto data = prepare_data(c);
    const auto trained = run_training(c, data);
    const auto dir = detail::ensure_dir(c.out_dir);
    const auto meta = metadata(c);
    detail::write_text(dir / "checkpoint.json", model_to_json(trained.model, meta).dump() + "\n");
    detail::write_text(dir / "trace.csv", trace_csv(trained.trace, meta));
    auto report = run_evaluation(c, data, trained.model);
    report.metadata["summary"] = dataset_summary(data);
    write_eval_outputs(dir, report);
    auto rows = ablation_rows(c.variant, report);
    result.table.insert(result.table.end(), rows.begin(), rows.end());
    result.reports.emplace_back(c.variant, std::move(report));
  }
  const auto dir = detail::ensure_dir(base_config.out_dir);
  std::ostringstream csv;
  write_metadata_header(csv, metadata(base_config));
  csv << "variant,row,language_to_vision,vision_to_language\n";
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : result.table) {
    csv << r.variant << ",\"" << r.row << "\"," << format_real(r.language_to_vision) << ","
        << format_real(r.vision_to_language) << "\n";
    rows.push_back({{"variant", r.variant},
                    {"row", r.row},
                    {"language_to_vision", r.language_to_vision},
                    {"vision_to_language", r.vision_to_language}});
  }
  detail::write_text(dir / "ablation.csv", csv.str());
  detail::write_text(dir / "ablation.json",
                     nlohmann::json{{"metadata", metadata(base_config)}, {"rows", rows}}.dump(2) + "\n");
  return result;
}

/// Renders report.json (and ablation.json when present) from `dir` as text tables.
inline void cmd_report(const std::string& dir, std::ostream& out) {
  const std::filesystem::path root(dir);
  bool any = false;
  if (std::ifstream in(root / "report.json"); in) {
    const auto report = report_from_json(nlohmann::json::parse(in));
    for (const auto& t : report.tests) {
      out << t.test << "\n";
      char line[160];
      std::snprintf(line, sizeof line, "  %-34s %10s %10s\n", "", "accuracy", "relevance");
      out << line;
      for (const auto& r : t.levels) {
        std::snprintf(line, sizeof line, "  %-34s %9.2f%% %10.4f\n", level_title(r.level).c_str(),
                      100.0 * r.accuracy, r.relevance);
        out << line;
      }
      for (const auto& r : t.levels) {
        std::snprintf(line, sizeof line, "  %-34s %9.2f%% %10.4f\n",
                      (level_title(r.level) + " Ground Truth").c_str(), 100.0 * r.baseline_accuracy,
                      r.baseline_relevance);
        out << line;
      }
    }
    any = true;
  }
  if (std::ifstream in(root / "ablation.json"); in) {
    const auto j = nlohmann::json::parse(in);
    char line[160];
    std::snprintf(line, sizeof line, "%-14s %-34s %10s %10s\n", "variant", "", "lang->vis", "vis->lang");
    out << line;
    for (const auto& r : j.at("rows")) {
      std::snprintf(line, sizeof line, "%-14s %-34s %10.4f %10.4f\n", r.at("variant").get<std::string>().c_str(),
                    r.at("row").get<std::string>().c_str(), r.at("language_to_vision").get<double>(),
                    r.at("vision_to_language").get<double>());
      out << line;
    }
    any = true;
  }
  if (!any) throw std::runtime_error("no report.json or ablation.json in '" + dir + "'");
}

}  // namespace mmvae
