// Copyright 2026 The mmvae Authors
// SPDX-License-Identifier: Apache-2.0

// Cross-modal evaluation.
//
// Language understanding: generate visual features from one level's label
// embedding, snap to the nearest stored feature (unless raw classification is
// requested), and check the hierarchical classifier's prediction against the
// input concept. Language naming: generate a label embedding from the visual
// feature and resolve it to the nearest vocabulary entry. Both report a
// relevance score w * max(cos(c, v), 0) between concept and feature in the
// generator's prototype space, alongside ground-truth baselines computed on
// the real data.

#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mmvae/moe.hpp"
#include "mmvae/nn.hpp"
#include "mmvae/retrieval.hpp"
#include "mmvae/rng.hpp"
#include "mmvae/taxonomy.hpp"

namespace mmvae {

// ---------------------------------------------------------------------------
// Hierarchical classifier

struct ClassifierConfig {
  std::vector<std::size_t> hidden{64, 64};
  std::size_t steps = 1500;
  std::size_t batch_size = 32;
  double learning_rate = 0.001;
  std::uint64_t seed = 0;
};

inline void to_json(nlohmann::json& j, const ClassifierConfig& c) {
  j = {{"hidden", c.hidden}, {"steps", c.steps}, {"batch_size", c.batch_size},
       {"learning_rate", c.learning_rate}, {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, ClassifierConfig& c) {
  c.hidden = j.value("hidden", c.hidden);
  c.steps = j.value("steps", c.steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.seed = j.value("seed", c.seed);
}

/// Shared ReLU trunk with one linear softmax head per level.
struct HierClassifier {
  Taxonomy taxonomy;
  DenseNet trunk;
  std::array<DenseNet, 3> heads;                   // indexed by level_index
  std::array<std::vector<ConceptId>, 3> classes;   // head output k <-> classes[level][k]
  std::array<double, 3> train_accuracy{};
  std::array<double, 3> test_accuracy{};

  bool operator==(const HierClassifier&) const = default;
};

struct ClassifierGradient {
  NetGradient trunk;
  std::array<NetGradient, 3> heads;
};

inline HierClassifier make_classifier(const Taxonomy& taxonomy, std::size_t feature_dim,
                                      const ClassifierConfig& config) {
  if (config.hidden.empty()) throw std::invalid_argument("classifier: need at least one hidden layer");
  HierClassifier c;
  c.taxonomy = taxonomy;
  std::vector<std::size_t> dims{feature_dim};
  dims.insert(dims.end(), config.hidden.begin(), config.hidden.end());
  std::vector<Activation> acts(config.hidden.size(), Activation::relu);
  c.trunk = init_net(dims, acts, derive_seed(config.seed, "trunk"));
  for (Level lvl : kAllLevels) {
    const auto li = level_index(lvl);
    c.classes[li] = taxonomy.at_level(lvl);
    const std::array<std::size_t, 2> hd{config.hidden.back(), c.classes[li].size()};
    const std::array<Activation, 1> ha{Activation::identity};
    c.heads[li] = init_net(hd, ha, derive_seed(config.seed, "head:" + std::string(to_string(lvl))));
  }
  return c;
}

inline ClassifierGradient zero_gradient(const HierClassifier& c) {
  ClassifierGradient g;
  g.trunk = zero_gradient(c.trunk);
  for (std::size_t l = 0; l < 3; ++l) g.heads[l] = zero_gradient(c.heads[l]);
  return g;
}

namespace detail {

inline std::vector<double> softmax(std::span<const double> logits) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) z += (p[i] = std::exp(logits[i] - mx));
  for (double& v : p) v /= z;
  return p;
}

inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

inline std::size_t class_position(const HierClassifier& c, Level level, ConceptId id) {
  const auto& cls = c.classes[level_index(level)];
  for (std::size_t k = 0; k < cls.size(); ++k) {
    if (cls[k] == id) return k;
  }
  throw std::invalid_argument("classifier: label not in head '" + std::string(to_string(level)) + "'");
}

}  // namespace detail

/// Sum over level heads of softmax cross-entropy. With `grad`, adds
/// `scale` times the loss gradient.
inline double classifier_loss(const HierClassifier& c, std::span<const double> x,
                              const std::array<ConceptId, 3>& labels, ClassifierGradient* grad = nullptr,
                              double scale = 1.0) {
  auto [h, trunk_cache] = forward(c.trunk, Tensor::vector({x.begin(), x.end()}));
  double loss = 0.0;
  Tensor dh({h.size()});
  for (Level lvl : kAllLevels) {
    const auto li = level_index(lvl);
    auto [logits, head_cache] = forward(c.heads[li], h);
    const auto p = detail::softmax(logits.values());
    const std::size_t target = detail::class_position(c, lvl, labels[li]);
    loss -= std::log(std::max(p[target], 1e-300));
    if (!grad) continue;
    Tensor dlogits({p.size()});
    for (std::size_t k = 0; k < p.size(); ++k) dlogits[k] = p[k] - (k == target ? 1.0 : 0.0);
    const auto g = backward(c.heads[li], head_cache, dlogits);
    accumulate(grad->heads[li], g, scale);
    for (std::size_t k = 0; k < dh.size(); ++k) dh[k] += g.input[k];
  }
  if (grad) accumulate(grad->trunk, backward(c.trunk, trunk_cache, dh), scale);
  return loss;
}

/// Raw argmax of one head.
inline ConceptId predict_head(const HierClassifier& c, std::span<const double> x, Level level) {
  const auto h = predict(c.trunk, x);
  const auto logits = predict(c.heads[level_index(level)], std::span<const double>(h));
  return c.classes[level_index(level)][detail::argmax(logits)];
}

/// Level prediction through the subordinate head, walked up the taxonomy.
inline ConceptId predict(const HierClassifier& c, std::span<const double> x, Level level) {
  return c.taxonomy.ancestor(predict_head(c, x, Level::subordinate), level);
}

inline double classifier_accuracy(const HierClassifier& c, const PairedDataset& ds,
                                  std::span<const std::size_t> indices, Level level) {
  if (indices.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i : indices) hit += predict(c, ds.examples[i].visual, level) == ds.examples[i].label(level);
  return static_cast<double>(hit) / static_cast<double>(indices.size());
}

inline HierClassifier train_classifier(const PairedDataset& ds, const Split& split, const ClassifierConfig& config) {
  if (ds.examples.empty() || split.train.empty()) throw std::invalid_argument("train_classifier: no training data");
  HierClassifier c = make_classifier(ds.taxonomy, ds.config.feature_dim, config);
  std::vector<Tensor*> params = parameter_tensors(c.trunk);
  for (auto& h : c.heads) {
    auto p = parameter_tensors(h);
    params.insert(params.end(), p.begin(), p.end());
  }
  AdamState adam = make_adam_state(params, {.learning_rate = config.learning_rate});
  Rng rng(derive_seed(config.seed, "batches"));
  std::vector<std::size_t> order = split.train;
  std::size_t cursor = order.size();
  const double inv_b = 1.0 / static_cast<double>(config.batch_size);
  for (std::size_t step = 0; step < config.steps; ++step) {
    ClassifierGradient g = zero_gradient(c);
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      if (cursor == order.size()) {
        rng.shuffle(order);
        cursor = 0;
      }
      const auto& ex = ds.examples[order[cursor++]];
      classifier_loss(c, ex.visual, ex.labels, &g, inv_b);
    }
    std::vector<const Tensor*> grads = gradient_tensors(g.trunk);
    for (const auto& h : g.heads) {
      auto t = gradient_tensors(h);
      grads.insert(grads.end(), t.begin(), t.end());
    }
    adam_step(adam, params, grads);
  }
  for (Level lvl : kAllLevels) {
    c.train_accuracy[level_index(lvl)] = classifier_accuracy(c, ds, split.train, lvl);
    c.test_accuracy[level_index(lvl)] = classifier_accuracy(c, ds, split.test, lvl);
  }
  return c;
}

// ---------------------------------------------------------------------------
// Relevance score

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw std::invalid_argument("cosine: zero vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

struct RelevanceConfig {
  double w = 1.0;
  std::function<std::vector<double>(std::string_view)> embed_concept;
  std::function<std::vector<double>(std::span<const double>)> embed_visual;

  /// Concepts map to their generator prototype (mean of subordinate
  /// prototypes above the subordinate level); features map to themselves.
  static RelevanceConfig prototype_space(const PairedDataset& ds, double w = 1.0) {
    if (!(w >= 0.0)) throw std::invalid_argument("relevance: w must be nonnegative");
    auto table = std::make_shared<std::map<std::string, std::vector<double>, std::less<>>>();
    for (std::size_t i = 0; i < ds.taxonomy.size(); ++i) {
      (*table)[ds.taxonomy.nodes()[i].name] = ds.prototypes[i];
    }
    RelevanceConfig r;
    r.w = w;
    r.embed_concept = [table](std::string_view name) {
      auto it = table->find(name);
      if (it == table->end()) throw std::invalid_argument("relevance: unknown concept '" + std::string(name) + "'");
      return it->second;
    };
    r.embed_visual = [](std::span<const double> v) { return std::vector<double>(v.begin(), v.end()); };
    return r;
  }
};

/// w * max(cos(c, v), 0) in the provider's shared space.
inline double relevance_score(std::string_view concept_name, std::span<const double> feature,
                              const RelevanceConfig& config) {
  const auto c = config.embed_concept(concept_name);
  const auto v = config.embed_visual(feature);
  return config.w * std::max(cosine_similarity(c, v), 0.0);
}

// ---------------------------------------------------------------------------
// Cross-modal tests

/// Anything that produces a target-modality vector from one source modality.
template <class G>
concept CrossModalGenerator = requires(const G& g, Modality source, std::span<const double> input, Modality target,
                                       Rng& rng) {
  { g.generate(source, input, target, rng) } -> std::convertible_to<std::vector<double>>;
};

/// Adapts a trained model: observation holds only the source modality.
struct ModelGenerator {
  const MMVAEModel* model;

  std::vector<double> generate(Modality source, std::span<const double> input, Modality target, Rng& rng) const {
    auto obs = ModalityObservation::none(*model);
    obs.set(*model, source, {input.begin(), input.end()});
    return cross_generate(*model, obs, target, rng);
  }
};

struct EvalOptions {
  double w = 1.0;
  bool classify_raw = false;  // classify decoder output instead of its nearest stored feature
  std::uint64_t seed = 0;
};

inline void to_json(nlohmann::json& j, const EvalOptions& o) {
  j = {{"w", o.w}, {"classify_raw", o.classify_raw}, {"seed", o.seed}};
}

struct LevelResult {
  Level level = Level::subordinate;
  double accuracy = 0.0;
  double relevance = 0.0;
  double baseline_accuracy = 0.0;
  double baseline_relevance = 0.0;
  std::size_t count = 0;

  bool operator==(const LevelResult&) const = default;
};

inline LevelResult language_understanding_test(const CrossModalGenerator auto& generator, const PairedDataset& ds,
                                               const Split& split, const HierClassifier& classifier,
                                               const FeatureIndex& index, Level level, const EvalOptions& options) {
  if (split.test.empty()) throw std::invalid_argument("language_understanding_test: empty test split");
  const auto relevance = RelevanceConfig::prototype_space(ds, options.w);
  Rng rng(derive_seed(options.seed, "understanding:" + std::string(to_string(level))));
  LevelResult r;
  r.level = level;
  r.count = split.test.size();
  std::size_t hit = 0, base_hit = 0;
  for (std::size_t i : split.test) {
    const auto& ex = ds.examples.at(i);
    const ConceptId truth = ex.label(level);
    const auto& truth_name = ds.taxonomy.name(truth);
    auto feature = generator.generate(label_modality(level), ex.embedding(level), Modality::visual, rng);
    if (!options.classify_raw) feature = index.feature(nearest_feature(index, feature).first);
    hit += predict(classifier, feature, level) == truth;
    r.relevance += relevance_score(truth_name, feature, relevance);
    base_hit += predict(classifier, ex.visual, level) == truth;
    r.baseline_relevance += relevance_score(truth_name, ex.visual, relevance);
  }
  const double n = static_cast<double>(r.count);
  r.accuracy = static_cast<double>(hit) / n;
  r.baseline_accuracy = static_cast<double>(base_hit) / n;
  r.relevance /= n;
  r.baseline_relevance /= n;
  return r;
}

inline LevelResult language_naming_test(const CrossModalGenerator auto& generator, const PairedDataset& ds,
                                        const Split& split, const LabelVocabulary& vocab, Level level,
                                        const EvalOptions& options) {
  if (split.test.empty()) throw std::invalid_argument("language_naming_test: empty test split");
  const auto relevance = RelevanceConfig::prototype_space(ds, options.w);
  Rng rng(derive_seed(options.seed, "naming:" + std::string(to_string(level))));
  LevelResult r;
  r.level = level;
  r.count = split.test.size();
  std::size_t hit = 0, base_hit = 0;
  for (std::size_t i : split.test) {
    const auto& ex = ds.examples.at(i);
    const auto& truth_name = ds.taxonomy.name(ex.label(level));
    const auto generated = generator.generate(Modality::visual, ex.visual, label_modality(level), rng);
    const auto named = nearest_label(vocab, generated, level).first;
    hit += named == truth_name;
    r.relevance += relevance_score(named, ex.visual, relevance);
    // Ground truth: the true label embedding resolved through the same vocabulary.
    base_hit += nearest_label(vocab, ex.embedding(level), level).first == truth_name;
    r.baseline_relevance += relevance_score(truth_name, ex.visual, relevance);
  }
  const double n = static_cast<double>(r.count);
  r.accuracy = static_cast<double>(hit) / n;
  r.baseline_accuracy = static_cast<double>(base_hit) / n;
  r.relevance /= n;
  r.baseline_relevance /= n;
  return r;
}

// ---------------------------------------------------------------------------
// Reports

struct TestReport {
  std::string test;  // "language_understanding" or "language_naming"
  std::vector<LevelResult> levels;

  bool operator==(const TestReport&) const = default;
};

struct EvalReport {
  std::vector<TestReport> tests;
  nlohmann::json metadata = nlohmann::json::object();

  const TestReport& test(std::string_view name) const {
    for (const auto& t : tests) {
      if (t.test == name) return t;
    }
    throw std::out_of_range("EvalReport: no test '" + std::string(name) + "'");
  }
};

inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string level_title(Level level) {
  std::string s(to_string(level));
  s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s + " Level";
}

inline nlohmann::json report_to_json(const EvalReport& report) {
  nlohmann::json tests = nlohmann::json::array();
  for (const auto& t : report.tests) {
    nlohmann::json levels = nlohmann::json::array();
    for (const auto& r : t.levels) {
      levels.push_back({{"level", std::string(to_string(r.level))},
                        {"accuracy", r.accuracy},
                        {"relevance", r.relevance},
                        {"baseline_accuracy", r.baseline_accuracy},
                        {"baseline_relevance", r.baseline_relevance},
                        {"count", r.count}});
    }
    tests.push_back({{"test", t.test}, {"levels", levels}});
  }
  return {{"format", "mmvae.eval_report"}, {"version", 1}, {"metadata", report.metadata}, {"tests", tests}};
}

inline EvalReport report_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "mmvae.eval_report") throw std::runtime_error("not an mmvae.eval_report file");
  EvalReport report;
  report.metadata = j.value("metadata", nlohmann::json::object());
  for (const auto& tj : j.at("tests")) {
    TestReport t{tj.at("test").get<std::string>(), {}};
    for (const auto& lj : tj.at("levels")) {
      LevelResult r;
      r.level = *parse_level(lj.at("level").get<std::string>());
      r.accuracy = lj.at("accuracy").get<double>();
      r.relevance = lj.at("relevance").get<double>();
      r.baseline_accuracy = lj.at("baseline_accuracy").get<double>();
      r.baseline_relevance = lj.at("baseline_relevance").get<double>();
      r.count = lj.at("count").get<std::size_t>();
      t.levels.push_back(r);
    }
    report.tests.push_back(std::move(t));
  }
  return report;
}

/// Leading "# " lines carry the compact metadata JSON.
inline void write_metadata_header(std::ostream& out, const nlohmann::json& metadata) {
  out << "# " << metadata.dump() << "\n";
}

/// Columns: level, metric, value, baseline.
inline void write_test_csv(std::ostream& out, const TestReport& t, const nlohmann::json& metadata) {
  write_metadata_header(out, metadata);
  out << "level,metric,value,baseline\n";
  for (const auto& r : t.levels) {
    out << to_string(r.level) << ",accuracy," << format_real(r.accuracy) << "," << format_real(r.baseline_accuracy)
        << "\n";
    out << to_string(r.level) << ",relevance," << format_real(r.relevance) << ","
        << format_real(r.baseline_relevance) << "\n";
  }
}

/// Result rows for every level, then the matching ground-truth rows.
inline std::vector<std::array<std::string, 3>> table_rows(const TestReport& t) {
  std::vector<std::array<std::string, 3>> rows;
  for (const auto& r : t.levels) {
    rows.push_back({level_title(r.level), format_real(r.accuracy), format_real(r.relevance)});
  }
  for (const auto& r : t.levels) {
    rows.push_back({level_title(r.level) + " Ground Truth", format_real(r.baseline_accuracy),
                    format_real(r.baseline_relevance)});
  }
  return rows;
}

inline void write_table_csv(std::ostream& out, const TestReport& t, const nlohmann::json& metadata) {
  write_metadata_header(out, metadata);
  out << "row,accuracy,relevance\n";
  for (const auto& row : table_rows(t)) out << '"' << row[0] << "\"," << row[1] << "," << row[2] << "\n";
}

}  // namespace mmvae
