// Copyright 2026 The mmvae Authors
// SPDX-License-Identifier: Apache-2.0

// Three-level concept taxonomy (superordinate -> basic -> subordinate) and the
// seeded paired dataset generator.
//
// The visual modality is synthetic: every node owns a random component
// vector, and a subordinate prototype is the sum of its own component and
// those of its basic and superordinate ancestors. Subordinates under the same
// basic category therefore share most of their geometry. Label embeddings are
// unit vectors produced by a seeded hash of the concept name.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mmvae/rng.hpp"

namespace mmvae {

enum class Level : int { superordinate = 0, basic = 1, subordinate = 2 };

inline constexpr std::array<Level, 3> kAllLevels = {Level::superordinate, Level::basic,
                                                    Level::subordinate};

inline std::string_view to_string(Level level) {
  switch (level) {
    case Level::superordinate: return "superordinate";
    case Level::basic: return "basic";
    case Level::subordinate: return "subordinate";
  }
  return "?";
}

inline std::optional<Level> parse_level(std::string_view text) {
  for (Level l : kAllLevels) {
    if (to_string(l) == text) return l;
  }
  return std::nullopt;
}

inline std::size_t level_index(Level level) { return static_cast<std::size_t>(level); }

struct ConceptId {
  std::size_t value = 0;
  auto operator<=>(const ConceptId&) const = default;
};

struct ConceptNode {
  std::string name;
  Level level = Level::subordinate;
  std::optional<ConceptId> parent;

  bool operator==(const ConceptNode&) const = default;
};

enum class TaxonomyErrorKind { parse, orphan, duplicate_name, empty_category, level_skip, empty_name };

inline std::string_view to_string(TaxonomyErrorKind kind) {
  switch (kind) {
    case TaxonomyErrorKind::parse: return "parse error";
    case TaxonomyErrorKind::orphan: return "orphan node";
    case TaxonomyErrorKind::duplicate_name: return "duplicate name";
    case TaxonomyErrorKind::empty_category: return "empty category";
    case TaxonomyErrorKind::level_skip: return "level skip";
    case TaxonomyErrorKind::empty_name: return "empty name";
  }
  return "?";
}

class TaxonomyError : public std::runtime_error {
 public:
  TaxonomyError(TaxonomyErrorKind kind, std::string node, const std::string& detail = {})
      : std::runtime_error(format(kind, node, detail)), kind_(kind), node_(std::move(node)) {}

  TaxonomyErrorKind kind() const { return kind_; }
  const std::string& node() const { return node_; }

 private:
  static std::string format(TaxonomyErrorKind kind, const std::string& node,
                            const std::string& detail) {
    std::string msg(to_string(kind));
    if (!node.empty()) msg += " at '" + node + "'";
    if (!detail.empty()) msg += ": " + detail;
    return msg;
  }

  TaxonomyErrorKind kind_;
  std::string node_;
};

class Taxonomy {
 public:
  Taxonomy() = default;

  /// Validates and builds; `parent` holds an index into `nodes`.
  static Taxonomy from_nodes(std::vector<ConceptNode> nodes) {
    Taxonomy t;
    t.nodes_ = std::move(nodes);
    t.children_.resize(t.nodes_.size());
    std::unordered_map<std::string, std::size_t> seen;
    for (std::size_t i = 0; i < t.nodes_.size(); ++i) {
      const auto& n = t.nodes_[i];
      if (n.name.empty()) throw TaxonomyError(TaxonomyErrorKind::empty_name, "#" + std::to_string(i));
      if (!seen.emplace(n.name, i).second) throw TaxonomyError(TaxonomyErrorKind::duplicate_name, n.name);
      if (n.level == Level::superordinate) {
        if (n.parent) throw TaxonomyError(TaxonomyErrorKind::level_skip, n.name, "superordinate node has a parent");
        t.roots_.push_back(ConceptId{i});
        continue;
      }
      if (!n.parent || n.parent->value >= t.nodes_.size()) {
        throw TaxonomyError(TaxonomyErrorKind::orphan, n.name);
      }
      const Level want = n.level == Level::subordinate ? Level::basic : Level::superordinate;
      const auto& p = t.nodes_[n.parent->value];
      if (p.level != want) {
        throw TaxonomyError(TaxonomyErrorKind::level_skip, n.name,
                            std::string(to_string(n.level)) + " under " + std::string(to_string(p.level)) +
                                " '" + p.name + "'");
      }
      t.children_[n.parent->value].push_back(ConceptId{i});
    }
    // Levels strictly decrease toward the root, so parent chains cannot cycle.
    for (std::size_t i = 0; i < t.nodes_.size(); ++i) {
      if (t.nodes_[i].level != Level::subordinate && t.children_[i].empty()) {
        throw TaxonomyError(TaxonomyErrorKind::empty_category, t.nodes_[i].name);
      }
    }
    if (t.roots_.empty()) throw TaxonomyError(TaxonomyErrorKind::empty_category, "", "no superordinate nodes");
    return t;
  }

  const std::vector<ConceptNode>& nodes() const { return nodes_; }
  const ConceptNode& node(ConceptId id) const { return nodes_.at(id.value); }
  const std::string& name(ConceptId id) const { return node(id).name; }
  Level level(ConceptId id) const { return node(id).level; }
  std::size_t size() const { return nodes_.size(); }
  const std::vector<ConceptId>& roots() const { return roots_; }
  const std::vector<ConceptId>& children(ConceptId id) const { return children_.at(id.value); }

  /// Nodes of one level, in node order.
  std::vector<ConceptId> at_level(Level level) const {
    std::vector<ConceptId> out;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].level == level) out.push_back(ConceptId{i});
    }
    return out;
  }

  std::size_t count(Level level) const { return at_level(level).size(); }

  std::optional<ConceptId> find(std::string_view name) const {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].name == name) return ConceptId{i};
    }
    return std::nullopt;
  }

  /// Walks parents until reaching `target`. Throws if `target` is below the node.
  ConceptId ancestor(ConceptId id, Level target) const {
    while (level(id) != target) {
      if (level_index(level(id)) < level_index(target)) {
        throw std::invalid_argument("ancestor: target level is below node '" + name(id) + "'");
      }
      id = *node(id).parent;
    }
    return id;
  }

  /// Subordinate descendants of any node (the node itself if subordinate).
  std::vector<ConceptId> subordinates_of(ConceptId id) const {
    if (level(id) == Level::subordinate) return {id};
    std::vector<ConceptId> out;
    for (ConceptId c : children(id)) {
      auto sub = subordinates_of(c);
      out.insert(out.end(), sub.begin(), sub.end());
    }
    return out;
  }

  bool operator==(const Taxonomy& other) const { return nodes_ == other.nodes_; }

 private:
  std::vector<ConceptNode> nodes_;
  std::vector<ConceptId> roots_;
  std::vector<std::vector<ConceptId>> children_;
};

enum class TaxonomyVariant { base, ablation_wide, ablation_deep };

inline std::string_view to_string(TaxonomyVariant v) {
  switch (v) {
    case TaxonomyVariant::base: return "base";
    case TaxonomyVariant::ablation_wide: return "ablation_wide";
    case TaxonomyVariant::ablation_deep: return "ablation_deep";
  }
  return "?";
}

inline std::optional<TaxonomyVariant> parse_variant(std::string_view text) {
  for (auto v : {TaxonomyVariant::base, TaxonomyVariant::ablation_wide, TaxonomyVariant::ablation_deep}) {
    if (to_string(v) == text) return v;
  }
  return std::nullopt;
}

namespace detail {

struct BasicSpec {
  std::string name;
  std::vector<std::string> subordinates;
};

inline Taxonomy build_tree(const std::vector<std::pair<std::string, std::vector<BasicSpec>>>& roots) {
  std::vector<ConceptNode> nodes;
  for (const auto& [super_name, basics] : roots) {
    const ConceptId super_id{nodes.size()};
    nodes.push_back({super_name, Level::superordinate, std::nullopt});
    for (const auto& b : basics) {
      const ConceptId basic_id{nodes.size()};
      nodes.push_back({b.name, Level::basic, super_id});
      for (const auto& s : b.subordinates) nodes.push_back({s, Level::subordinate, basic_id});
    }
  }
  return Taxonomy::from_nodes(std::move(nodes));
}

}  // namespace detail

/// The Animal taxonomy and its two ablation extensions.
inline Taxonomy builtin_taxonomy(TaxonomyVariant variant) {
  std::vector<detail::BasicSpec> basics = {
      {"Fish", {"Goldfish", "Shark", "Tuna"}},
      {"Horse", {"Mule", "Pony", "Zebra"}},
      {"Squirrel", {"Chipmunk", "Gopher", "Marmot"}},
      {"Bird", {"Chicken", "Parrot", "Swallow"}},
      {"Insect", {"Bug", "Butterfly", "Fly"}},
  };
  if (variant == TaxonomyVariant::ablation_wide) {
    const std::map<std::string, std::vector<std::string>> extra = {
        {"Fish", {"Lion fish", "Stingray"}},
        // Only eight of the ten additions are named for this ablation; the
        // Horse pair is our own choice.
        {"Horse", {"Donkey", "Stallion"}},
        {"Squirrel", {"Guinea Pig", "Hamster"}},
        {"Bird", {"White Stork", "Ostrich"}},
        {"Insect", {"Grasshopper", "Ladybug"}},
    };
    for (auto& b : basics) {
      const auto& add = extra.at(b.name);
      b.subordinates.insert(b.subordinates.end(), add.begin(), add.end());
    }
  } else if (variant == TaxonomyVariant::ablation_deep) {
    basics.push_back({"Cat", {"Tiger cat", "Egyptian cat", "Persian cat"}});
    basics.push_back({"Dog", {"English Foxhound", "Border Collie", "Golden Retriever"}});
  }
  return detail::build_tree({{"Animal", basics}});
}

/// Parses {"superordinate":[{"name":..,"basic":[{"name":..,"subordinate":[..]}]}]}.
/// Subordinate entries may be strings or {"name": ...} objects.
inline Taxonomy load_taxonomy(std::string_view document) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(document);
  } catch (const nlohmann::json::parse_error& e) {
    throw TaxonomyError(TaxonomyErrorKind::parse, "", e.what());
  }
  if (!doc.is_object()) throw TaxonomyError(TaxonomyErrorKind::parse, "", "top level must be an object");
  for (const auto& [key, value] : doc.items()) {
    if (key == "superordinate") continue;
    if (key == "basic" || key == "subordinate") {
      std::string first = value.is_array() && !value.empty() && value[0].is_object()
                              ? value[0].value("name", std::string{})
                              : (value.is_array() && !value.empty() && value[0].is_string()
                                     ? value[0].get<std::string>()
                                     : key);
      throw TaxonomyError(TaxonomyErrorKind::orphan, first, key + " list outside any parent");
    }
    throw TaxonomyError(TaxonomyErrorKind::parse, "", "unknown key '" + key + "'");
  }
  if (!doc.contains("superordinate") || !doc["superordinate"].is_array()) {
    throw TaxonomyError(TaxonomyErrorKind::parse, "", "missing 'superordinate' array");
  }

  auto name_of = [](const nlohmann::json& j, std::string_view where) -> std::string {
    if (j.is_string()) return j.get<std::string>();
    if (j.is_object() && j.contains("name") && j["name"].is_string()) return j["name"].get<std::string>();
    throw TaxonomyError(TaxonomyErrorKind::parse, "", std::string(where) + " entry without a string name");
  };

  std::vector<ConceptNode> nodes;
  for (const auto& sup : doc["superordinate"]) {
    const std::string sup_name = name_of(sup, "superordinate");
    const ConceptId sup_id{nodes.size()};
    nodes.push_back({sup_name, Level::superordinate, std::nullopt});
    if (!sup.is_object()) throw TaxonomyError(TaxonomyErrorKind::empty_category, sup_name);
    if (sup.contains("subordinate")) {
      throw TaxonomyError(TaxonomyErrorKind::level_skip, sup_name, "subordinate list directly under superordinate");
    }
    if (!sup.contains("basic")) throw TaxonomyError(TaxonomyErrorKind::empty_category, sup_name);
    if (!sup["basic"].is_array()) throw TaxonomyError(TaxonomyErrorKind::parse, sup_name, "'basic' must be an array");
    for (const auto& basic : sup["basic"]) {
      const std::string basic_name = name_of(basic, "basic");
      const ConceptId basic_id{nodes.size()};
      nodes.push_back({basic_name, Level::basic, sup_id});
      if (!basic.is_object() || !basic.contains("subordinate")) {
        throw TaxonomyError(TaxonomyErrorKind::empty_category, basic_name);
      }
      if (basic.contains("basic")) {
        throw TaxonomyError(TaxonomyErrorKind::level_skip, basic_name, "basic list nested under basic");
      }
      if (!basic["subordinate"].is_array()) {
        throw TaxonomyError(TaxonomyErrorKind::parse, basic_name, "'subordinate' must be an array");
      }
      for (const auto& sub : basic["subordinate"]) {
        const std::string sub_name = name_of(sub, "subordinate");
        if (sub.is_object() && (sub.contains("basic") || sub.contains("subordinate"))) {
          throw TaxonomyError(TaxonomyErrorKind::level_skip, sub_name, "children below subordinate level");
        }
        nodes.push_back({sub_name, Level::subordinate, basic_id});
      }
    }
  }
  return Taxonomy::from_nodes(std::move(nodes));
}

inline Taxonomy load_taxonomy_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open taxonomy file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return load_taxonomy(buf.str());
}

inline nlohmann::json taxonomy_to_json(const Taxonomy& t) {
  nlohmann::json sups = nlohmann::json::array();
  for (ConceptId s : t.roots()) {
    nlohmann::json basics = nlohmann::json::array();
    for (ConceptId b : t.children(s)) {
      nlohmann::json subs = nlohmann::json::array();
      for (ConceptId u : t.children(b)) subs.push_back(t.name(u));
      basics.push_back({{"name", t.name(b)}, {"subordinate", subs}});
    }
    sups.push_back({{"name", t.name(s)}, {"basic", basics}});
  }
  return {{"superordinate", sups}};
}

/// Frozen stand-in for a pretrained text embedder: a unit vector that is a pure
/// function of (name, dim, seed).
inline std::vector<double> embed_label(std::string_view name, std::size_t embed_dim, std::uint64_t seed) {
  if (name.empty()) throw std::invalid_argument("embed_label: empty name");
  if (embed_dim == 0) throw std::invalid_argument("embed_label: embed_dim must be positive");
  Rng rng(derive_seed(seed, name));
  auto v = rng.normal_vector(embed_dim);
  double norm2 = 0.0;
  for (double x : v) norm2 += x * x;
  const double inv = 1.0 / std::sqrt(norm2);
  for (double& x : v) x *= inv;
  return v;
}

struct GeneratorConfig {
  std::size_t feature_dim = 64;
  std::size_t embed_dim = 32;
  std::size_t samples_per_subordinate = 20;
  double noise_scale = 0.25;
  double separation_scale = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (feature_dim < 2) throw std::invalid_argument("generator: feature_dim must be >= 2");
    if (embed_dim < 2) throw std::invalid_argument("generator: embed_dim must be >= 2");
    if (samples_per_subordinate < 1) throw std::invalid_argument("generator: samples_per_subordinate must be >= 1");
    if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale)) {
      throw std::invalid_argument("generator: noise_scale must be finite and nonnegative");
    }
    if (!(separation_scale > 0.0) || !std::isfinite(separation_scale)) {
      throw std::invalid_argument("generator: separation_scale must be finite and positive");
    }
  }
};

inline void to_json(nlohmann::json& j, const GeneratorConfig& c) {
  j = {{"feature_dim", c.feature_dim},
       {"embed_dim", c.embed_dim},
       {"samples_per_subordinate", c.samples_per_subordinate},
       {"noise_scale", c.noise_scale},
       {"separation_scale", c.separation_scale},
       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, GeneratorConfig& c) {
  c.feature_dim = j.value("feature_dim", c.feature_dim);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.samples_per_subordinate = j.value("samples_per_subordinate", c.samples_per_subordinate);
  c.noise_scale = j.value("noise_scale", c.noise_scale);
  c.separation_scale = j.value("separation_scale", c.separation_scale);
  c.seed = j.value("seed", c.seed);
}

struct PairedExample {
  std::vector<double> visual;
  std::array<ConceptId, 3> labels{};  // indexed by level_index
  std::array<std::vector<double>, 3> label_embeddings;

  ConceptId label(Level level) const { return labels[level_index(level)]; }
  const std::vector<double>& embedding(Level level) const { return label_embeddings[level_index(level)]; }
};

struct PairedDataset {
  Taxonomy taxonomy;
  std::vector<PairedExample> examples;
  GeneratorConfig config;
  /// Indexed by ConceptId. Subordinates hold the generator centroid; basic and
  /// superordinate nodes hold the mean of their subordinate prototypes.
  std::vector<std::vector<double>> prototypes;

  const std::vector<double>& prototype(ConceptId id) const { return prototypes.at(id.value); }
  std::size_t size() const { return examples.size(); }
};

inline PairedDataset generate_dataset(const Taxonomy& taxonomy, const GeneratorConfig& config) {
  config.validate();
  const std::size_t d = config.feature_dim;
  std::vector<std::vector<double>> component(taxonomy.size());
  for (std::size_t i = 0; i < taxonomy.size(); ++i) {
    const auto& name = taxonomy.nodes()[i].name;
    Rng rng(derive_seed(config.seed, "component:" + name));
    component[i] = rng.normal_vector(d, config.separation_scale);
  }

  PairedDataset ds;
  ds.taxonomy = taxonomy;
  ds.config = config;
  ds.prototypes.assign(taxonomy.size(), std::vector<double>(d, 0.0));

  const auto subs = taxonomy.at_level(Level::subordinate);
  for (ConceptId u : subs) {
    const ConceptId b = *taxonomy.node(u).parent;
    const ConceptId s = *taxonomy.node(b).parent;
    auto& p = ds.prototypes[u.value];
    for (std::size_t k = 0; k < d; ++k) {
      p[k] = component[s.value][k] + component[b.value][k] + component[u.value][k];
    }
  }
  for (Level lvl : {Level::basic, Level::superordinate}) {
    for (ConceptId c : taxonomy.at_level(lvl)) {
      const auto desc = taxonomy.subordinates_of(c);
      auto& p = ds.prototypes[c.value];
      for (ConceptId u : desc) {
        for (std::size_t k = 0; k < d; ++k) p[k] += ds.prototypes[u.value][k];
      }
      for (double& x : p) x /= static_cast<double>(desc.size());
    }
  }

  std::vector<std::vector<double>> embeddings(taxonomy.size());
  for (std::size_t i = 0; i < taxonomy.size(); ++i) {
    embeddings[i] = embed_label(taxonomy.nodes()[i].name, config.embed_dim, config.seed);
  }

  ds.examples.reserve(subs.size() * config.samples_per_subordinate);
  for (ConceptId u : subs) {
    Rng rng(derive_seed(config.seed, "noise:" + taxonomy.name(u)));
    const ConceptId b = *taxonomy.node(u).parent;
    const ConceptId s = *taxonomy.node(b).parent;
    for (std::size_t n = 0; n < config.samples_per_subordinate; ++n) {
      PairedExample ex;
      ex.visual = ds.prototypes[u.value];
      for (double& x : ex.visual) x += config.noise_scale * rng.normal();
      ex.labels = {s, b, u};
      for (Level lvl : kAllLevels) {
        ex.label_embeddings[level_index(lvl)] = embeddings[ex.label(lvl).value];
      }
      ds.examples.push_back(std::move(ex));
    }
  }
  return ds;
}

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Seeded split stratified by subordinate concept. Each concept with at least
/// two examples keeps one or more on both sides.
inline Split stratified_split(const PairedDataset& ds, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("split: train fraction must lie in (0, 1)");
  }
  std::map<ConceptId, std::vector<std::size_t>> by_concept;
  for (std::size_t i = 0; i < ds.examples.size(); ++i) {
    by_concept[ds.examples[i].label(Level::subordinate)].push_back(i);
  }
  Split split;
  for (auto& [concept_id, idx] : by_concept) {
    Rng rng(derive_seed(seed, "split:" + ds.taxonomy.name(concept_id)));
    rng.shuffle(idx);
    std::size_t n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(idx.size()) + 0.5));
    if (idx.size() >= 2) n_train = std::clamp<std::size_t>(n_train, 1, idx.size() - 1);
    split.train.insert(split.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.test.insert(split.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

/// One row per example: subordinate, basic, superordinate, f0..f{d-1}.
inline void write_dataset_csv(const PairedDataset& ds, std::ostream& out) {
  out << "subordinate,basic,superordinate";
  for (std::size_t k = 0; k < ds.config.feature_dim; ++k) out << ",f" << k;
  out << "\n";
  char buf[32];
  for (const auto& ex : ds.examples) {
    out << '"' << ds.taxonomy.name(ex.label(Level::subordinate)) << "\",\""
        << ds.taxonomy.name(ex.label(Level::basic)) << "\",\""
        << ds.taxonomy.name(ex.label(Level::superordinate)) << '"';
    for (double v : ex.visual) {
      std::snprintf(buf, sizeof buf, ",%.17g", v);
      out << buf;
    }
    out << "\n";
  }
}

}  // namespace mmvae
