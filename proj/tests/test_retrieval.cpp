// Copyright 2026 The mmvae Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "mmvae/retrieval.hpp"
#include "oracles.hpp"

namespace mmvae {
namespace {

std::vector<double> unit(std::vector<double> v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  for (double& x : v) x /= n;
  return v;
}

TEST(NearestFeature, ExactMatchHasZeroDistance) {
  FeatureIndex index;
  Rng rng(1);
  std::vector<std::vector<double>> stored;
  for (std::size_t i = 0; i < 20; ++i) {
    stored.push_back(rng.normal_vector(6));
    index.add(stored.back(), 100 + i);
  }
  for (std::size_t i = 0; i < 20; ++i) {
    const auto [id, d] = nearest_feature(index, stored[i]);
    EXPECT_EQ(id, 100 + i);
    EXPECT_EQ(d, 0.0);
  }
}

TEST(NearestFeature, TiesGoToSmallestId) {
  FeatureIndex index;
  index.add({1.0, 0.0}, 7);
  index.add({-1.0, 0.0}, 3);
  index.add({0.0, 1.0}, 5);
  const std::vector<double> origin{0.0, 0.0};
  EXPECT_EQ(nearest_feature(index, origin).first, 3u);
  EXPECT_EQ(nearest_feature(index, origin).second, 1.0);
}

TEST(NearestFeature, Errors) {
  FeatureIndex empty;
  const std::vector<double> q{0.0, 0.0};
  EXPECT_THROW(nearest_feature(empty, q), std::invalid_argument);
  FeatureIndex index;
  index.add({1.0, 2.0}, 0);
  EXPECT_THROW(index.add({1.0}, 1), std::invalid_argument);
  EXPECT_THROW(index.add({1.0, 3.0}, 0), std::invalid_argument);
  const std::vector<double> bad{0.0, 0.0, 0.0};
  EXPECT_THROW(nearest_feature(index, bad), std::invalid_argument);
}

TEST(NearestLabel, StoredEmbeddingResolvesToItself) {
  GeneratorConfig g;
  g.samples_per_subordinate = 1;
  g.seed = 7;
  const auto ds = generate_dataset(builtin_taxonomy(TaxonomyVariant::base), g);
  const auto vocab = LabelVocabulary::from_dataset(ds);
  for (const auto& node : ds.taxonomy.nodes()) {
    const auto [name, sim] = nearest_label(vocab, embed_label(node.name, 32, 7), node.level);
    EXPECT_EQ(name, node.name);
    EXPECT_NEAR(sim, 1.0, 1e-12);
  }
}

TEST(NearestLabel, NegatedQueryOnSingleEntry) {
  LabelVocabulary vocab;
  const auto e = embed_label("Goldfish", 32, 7);
  vocab.add("Goldfish", e, Level::subordinate);
  auto q = e;
  for (double& v : q) v = -v;
  const auto [name, sim] = nearest_label(vocab, q, Level::subordinate);
  EXPECT_EQ(name, "Goldfish");
  EXPECT_NEAR(sim, -1.0, 1e-12);
}

TEST(NearestLabel, TiesGoToSmallestName) {
  LabelVocabulary vocab;
  vocab.add("b", {1.0, 0.0}, Level::basic);
  vocab.add("a", {0.0, 1.0}, Level::basic);
  vocab.add("c", {-1.0, 0.0}, Level::basic);
  const std::vector<double> q{1.0, 1.0};
  EXPECT_EQ(nearest_label(vocab, q, Level::basic).first, "a");
}

TEST(NearestLabel, ScaleInvariant) {
  Rng rng(3);
  LabelVocabulary vocab;
  for (int i = 0; i < 30; ++i) vocab.add("c" + std::to_string(i), unit(rng.normal_vector(8)), Level::subordinate);
  for (int t = 0; t < 50; ++t) {
    const auto q = rng.normal_vector(8);
    const auto want = nearest_label(vocab, q, Level::subordinate).first;
    for (double alpha : {1e-3, 0.5, 7.0, 1e4}) {
      auto s = q;
      for (double& v : s) v *= alpha;
      EXPECT_EQ(nearest_label(vocab, s, Level::subordinate).first, want);
    }
  }
}

TEST(NearestLabel, Errors) {
  LabelVocabulary vocab;
  vocab.add("x", {1.0, 0.0}, Level::basic);
  EXPECT_THROW(vocab.add("y", {1.0, 1.0}, Level::basic), std::invalid_argument);
  EXPECT_THROW(vocab.add("x", {0.0, 1.0}, Level::basic), std::invalid_argument);
  EXPECT_NO_THROW(vocab.add("x", {0.0, 1.0}, Level::subordinate));
  const std::vector<double> zero{0.0, 0.0}, q{1.0, 0.0};
  EXPECT_THROW(nearest_label(vocab, zero, Level::basic), std::invalid_argument);
  EXPECT_THROW(nearest_label(vocab, q, Level::superordinate), std::invalid_argument);
}

TEST(Retrieval, MatchesExhaustiveOracles) {
  for (std::uint64_t seed : {1u, 2u}) {
    const auto r = oracle::check_retrieval(seed);
    EXPECT_EQ(r.feature_mismatches, 0u);
    EXPECT_EQ(r.label_mismatches, 0u);
    EXPECT_GT(r.feature_ties, 0u);
    EXPECT_GT(r.label_ties, 0u);
  }
}

}  // namespace
}  // namespace mmvae
