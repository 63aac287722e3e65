// Copyright 2026 The mmvae Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <algorithm>
#include <limits>
#include <map>
#include <sstream>

#include "mmvae/taxonomy.hpp"

namespace mmvae {
namespace {

constexpr const char* kAnimalDocument = R"({
  "superordinate": [{
    "name": "Animal",
    "basic": [
      {"name": "Fish", "subordinate": ["Goldfish", "Shark", "Tuna"]},
      {"name": "Horse", "subordinate": ["Mule", "Pony", "Zebra"]},
      {"name": "Squirrel", "subordinate": ["Chipmunk", "Gopher", "Marmot"]},
      {"name": "Bird", "subordinate": ["Chicken", "Parrot", "Swallow"]},
      {"name": "Insect", "subordinate": ["Bug", "Butterfly", "Fly"]}
    ]
  }]
})";

TaxonomyErrorKind load_error(std::string_view doc) {
  try {
    load_taxonomy(doc);
  } catch (const TaxonomyError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected a TaxonomyError";
  return TaxonomyErrorKind::parse;
}

double distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

TEST(Taxonomy, BuiltinCounts) {
  struct Want {
    TaxonomyVariant v;
    std::size_t sub, basic, super;
  };
  for (auto w : {Want{TaxonomyVariant::base, 15, 5, 1}, Want{TaxonomyVariant::ablation_wide, 25, 5, 1},
                 Want{TaxonomyVariant::ablation_deep, 21, 7, 1}}) {
    const auto t = builtin_taxonomy(w.v);
    EXPECT_EQ(t.count(Level::subordinate), w.sub) << to_string(w.v);
    EXPECT_EQ(t.count(Level::basic), w.basic) << to_string(w.v);
    EXPECT_EQ(t.count(Level::superordinate), w.super) << to_string(w.v);
  }
}

TEST(Taxonomy, BaseNamesAndParents) {
  const auto t = builtin_taxonomy(TaxonomyVariant::base);
  ASSERT_EQ(t.roots().size(), 1u);
  EXPECT_EQ(t.name(t.roots()[0]), "Animal");
  const auto goldfish = t.find("Goldfish");
  ASSERT_TRUE(goldfish);
  EXPECT_EQ(t.name(t.ancestor(*goldfish, Level::basic)), "Fish");
  EXPECT_EQ(t.name(t.ancestor(*goldfish, Level::superordinate)), "Animal");
  for (auto id : t.at_level(Level::basic)) EXPECT_EQ(t.children(id).size(), 3u);
}

TEST(Taxonomy, AblationAdditions) {
  const auto wide = builtin_taxonomy(TaxonomyVariant::ablation_wide);
  for (auto id : wide.at_level(Level::basic)) EXPECT_EQ(wide.children(id).size(), 5u);
  for (const char* name : {"Grasshopper", "Ladybug", "White Stork", "Ostrich", "Guinea Pig", "Hamster", "Lion fish",
                           "Stingray", "Donkey", "Stallion"}) {
    EXPECT_TRUE(wide.find(name)) << name;
  }
  const auto deep = builtin_taxonomy(TaxonomyVariant::ablation_deep);
  const auto cat = deep.find("Cat");
  ASSERT_TRUE(cat);
  EXPECT_EQ(deep.children(*cat).size(), 3u);
  EXPECT_EQ(deep.name(deep.ancestor(*deep.find("Border Collie"), Level::basic)), "Dog");
}

TEST(LoadTaxonomy, AnimalFileEqualsBuiltin) {
  EXPECT_EQ(load_taxonomy(kAnimalDocument), builtin_taxonomy(TaxonomyVariant::base));
}

TEST(LoadTaxonomy, RoundTripsThroughJson) {
  for (auto v : {TaxonomyVariant::base, TaxonomyVariant::ablation_wide, TaxonomyVariant::ablation_deep}) {
    const auto t = builtin_taxonomy(v);
    EXPECT_EQ(load_taxonomy(taxonomy_to_json(t).dump()), t);
  }
}

TEST(LoadTaxonomy, Errors) {
  EXPECT_EQ(load_error(""), TaxonomyErrorKind::parse);
  EXPECT_EQ(load_error("{\"superordinate\": [{\"name\": \"A\", \"subordinate\": [\"x\"]}]}"),
            TaxonomyErrorKind::level_skip);
  EXPECT_EQ(load_error("{\"superordinate\": [{\"name\": \"A\", \"basic\": [{\"name\": \"B\", \"subordinate\": "
                       "[\"x\", \"x\"]}]}]}"),
            TaxonomyErrorKind::duplicate_name);
  EXPECT_EQ(load_error("{\"superordinate\": [{\"name\": \"A\", \"basic\": [{\"name\": \"B\", \"subordinate\": []}]}]}"),
            TaxonomyErrorKind::empty_category);
  EXPECT_EQ(load_error("{\"superordinate\": [{\"name\": \"A\", \"basic\": []}]}"), TaxonomyErrorKind::empty_category);
  EXPECT_EQ(load_error("{\"superordinate\": [], \"subordinate\": [\"x\"]}"), TaxonomyErrorKind::orphan);
}

TEST(LoadTaxonomy, ErrorNamesTheNode) {
  try {
    load_taxonomy("{\"superordinate\": [{\"name\": \"A\", \"basic\": [{\"name\": \"Empty\", \"subordinate\": []}]}]}");
    FAIL();
  } catch (const TaxonomyError& e) {
    EXPECT_EQ(e.node(), "Empty");
    EXPECT_NE(std::string(e.what()).find("Empty"), std::string::npos);
  }
}

TEST(FromNodes, RejectsInvalidStructure) {
  using N = ConceptNode;
  EXPECT_THROW(Taxonomy::from_nodes({N{"A", Level::superordinate, {}}, N{"x", Level::subordinate, ConceptId{0}}}),
               TaxonomyError);
  EXPECT_THROW(Taxonomy::from_nodes({N{"A", Level::superordinate, {}}, N{"B", Level::basic, {}}}), TaxonomyError);
  EXPECT_THROW(Taxonomy::from_nodes({N{"", Level::superordinate, {}}}), TaxonomyError);
}

TEST(EmbedLabel, DeterministicAndUnitNorm) {
  const auto a = embed_label("Goldfish", 32, 7);
  EXPECT_EQ(a, embed_label("Goldfish", 32, 7));
  EXPECT_NE(a, embed_label("Goldfish", 32, 8));
  for (const char* name : {"Goldfish", "Shark", "Animal", "x"}) {
    for (std::size_t d : {2u, 32u, 768u}) {
      const auto v = embed_label(name, d, 7);
      double n2 = 0.0;
      for (double x : v) n2 += x * x;
      EXPECT_NEAR(std::sqrt(n2), 1.0, 1e-9);
    }
  }
}

TEST(EmbedLabel, FrozenGoldfishSharkDot) {
  const auto a = embed_label("Goldfish", 32, 7);
  const auto b = embed_label("Shark", 32, 7);
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  EXPECT_DOUBLE_EQ(dot, 0.065971242149522769);
}

TEST(GenerateDataset, ZeroNoiseGivesPrototypes) {
  GeneratorConfig g;
  g.noise_scale = 0.0;
  g.seed = 4;
  const auto ds = generate_dataset(builtin_taxonomy(TaxonomyVariant::base), g);
  for (const auto& ex : ds.examples) EXPECT_EQ(ex.visual, ds.prototype(ex.label(Level::subordinate)));
}

TEST(GenerateDataset, CountsAndLabelChains) {
  GeneratorConfig g;
  g.seed = 4;
  const auto ds = generate_dataset(builtin_taxonomy(TaxonomyVariant::base), g);
  EXPECT_EQ(ds.size(), 300u);
  const auto& t = ds.taxonomy;
  for (const auto& ex : ds.examples) {
    ASSERT_EQ(ex.visual.size(), 64u);
    EXPECT_EQ(t.level(ex.label(Level::subordinate)), Level::subordinate);
    EXPECT_EQ(t.node(ex.label(Level::subordinate)).parent, ex.label(Level::basic));
    EXPECT_EQ(t.node(ex.label(Level::basic)).parent, ex.label(Level::superordinate));
    for (Level l : kAllLevels) EXPECT_EQ(ex.embedding(l), embed_label(t.name(ex.label(l)), 32, g.seed));
  }
}

TEST(GenerateDataset, PrototypesShareAncestorComponents) {
  GeneratorConfig g;
  g.seed = 4;
  const auto ds = generate_dataset(builtin_taxonomy(TaxonomyVariant::base), g);
  // basic prototype = mean of its subordinate prototypes
  const auto& t = ds.taxonomy;
  const auto fish = *t.find("Fish");
  const auto subs = t.subordinates_of(fish);
  for (std::size_t k = 0; k < g.feature_dim; ++k) {
    double mean = 0.0;
    for (auto s : subs) mean += ds.prototype(s)[k];
    EXPECT_NEAR(ds.prototype(fish)[k], mean / subs.size(), 1e-12);
  }
}

TEST(GenerateDataset, BitwiseDeterministic) {
  GeneratorConfig g;
  g.seed = 99;
  const auto t = builtin_taxonomy(TaxonomyVariant::ablation_deep);
  const auto a = generate_dataset(t, g);
  const auto b = generate_dataset(t, g);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.examples[i].visual, b.examples[i].visual);
    EXPECT_EQ(a.examples[i].labels, b.examples[i].labels);
  }
  EXPECT_EQ(a.prototypes, b.prototypes);
  g.seed = 100;
  EXPECT_NE(generate_dataset(t, g).examples[0].visual, a.examples[0].visual);
}

TEST(GenerateDataset, NearestPrototypeIsPerfectAtRatioFour) {
  GeneratorConfig g;
  g.separation_scale = 1.0;
  g.noise_scale = 0.25;
  g.seed = 20240611;
  const auto ds = generate_dataset(builtin_taxonomy(TaxonomyVariant::base), g);
  ASSERT_EQ(ds.size(), 300u);
  const auto subs = ds.taxonomy.at_level(Level::subordinate);
  std::size_t hit = 0;
  for (const auto& ex : ds.examples) {
    ConceptId best{};
    double best_d = std::numeric_limits<double>::infinity();
    for (auto s : subs) {
      const double d = distance(ex.visual, ds.prototype(s));
      if (d < best_d) {
        best_d = d;
        best = s;
      }
    }
    hit += best == ex.label(Level::subordinate);
  }
  EXPECT_EQ(hit, 300u);
}

TEST(GenerateDataset, SameBasicSubordinatesAreCloser) {
  GeneratorConfig g;
  g.noise_scale = 0.0;
  g.seed = 20240611;
  const auto ds = generate_dataset(builtin_taxonomy(TaxonomyVariant::base), g);
  const auto& t = ds.taxonomy;
  const auto subs = t.at_level(Level::subordinate);
  double within = 0.0, across = 0.0;
  int nw = 0, na = 0;
  for (std::size_t i = 0; i < subs.size(); ++i) {
    for (std::size_t j = i + 1; j < subs.size(); ++j) {
      const double d = distance(ds.prototype(subs[i]), ds.prototype(subs[j]));
      if (t.node(subs[i]).parent == t.node(subs[j]).parent) {
        within += d;
        ++nw;
      } else {
        across += d;
        ++na;
      }
    }
  }
  EXPECT_LT(within / nw, across / na);
}

TEST(GeneratorConfig, Validation) {
  GeneratorConfig g;
  g.feature_dim = 1;
  EXPECT_THROW(g.validate(), std::invalid_argument);
  g = {};
  g.samples_per_subordinate = 0;
  EXPECT_THROW(g.validate(), std::invalid_argument);
  g = {};
  g.noise_scale = -1.0;
  EXPECT_THROW(g.validate(), std::invalid_argument);
  g = {};
  g.separation_scale = 0.0;
  EXPECT_THROW(g.validate(), std::invalid_argument);
}

TEST(StratifiedSplit, EightyTwentyPerConcept) {
  GeneratorConfig g;
  g.seed = 1;
  const auto ds = generate_dataset(builtin_taxonomy(TaxonomyVariant::base), g);
  const auto split = stratified_split(ds, 0.8, 17);
  EXPECT_EQ(split.train.size(), 240u);
  EXPECT_EQ(split.test.size(), 60u);
  std::map<ConceptId, int> per;
  for (auto i : split.test) ++per[ds.examples[i].label(Level::subordinate)];
  for (const auto& [id, n] : per) EXPECT_EQ(n, 4);
  const auto again = stratified_split(ds, 0.8, 17);
  EXPECT_EQ(again.test, split.test);
}

TEST(DatasetCsv, OneRowPerExample) {
  GeneratorConfig g;
  g.feature_dim = 3;
  g.samples_per_subordinate = 2;
  const auto ds = generate_dataset(builtin_taxonomy(TaxonomyVariant::base), g);
  std::ostringstream out;
  write_dataset_csv(ds, out);
  const std::string text = out.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 31);
}

}  // namespace
}  // namespace mmvae
