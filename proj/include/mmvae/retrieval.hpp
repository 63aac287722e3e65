// Copyright 2026 The mmvae Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mmvae/taxonomy.hpp"

namespace mmvae {

/// Exhaustive Euclidean index over stored feature vectors.
class FeatureIndex {
 public:
  struct Entry {
    std::vector<double> feature;
    std::size_t id;
  };

  FeatureIndex() = default;
  explicit FeatureIndex(std::size_t dimension) : dimension_(dimension) {}

  void add(std::vector<double> feature, std::size_t id) {
    if (entries_.empty() && dimension_ == 0) dimension_ = feature.size();
    if (feature.size() != dimension_) throw std::invalid_argument("FeatureIndex: dimension mismatch");
    if (!ids_.insert(id).second) throw std::invalid_argument("FeatureIndex: duplicate id " + std::to_string(id));
    entries_.push_back({std::move(feature), id});
  }

  /// Index over the visual features of the given examples; ids are example indices.
  static FeatureIndex from_examples(const PairedDataset& ds, std::span<const std::size_t> indices) {
    FeatureIndex index(ds.config.feature_dim);
    for (std::size_t i : indices) index.add(ds.examples.at(i).visual, i);
    return index;
  }

  std::size_t dimension() const { return dimension_; }
  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }

  const std::vector<double>& feature(std::size_t id) const {
    for (const auto& e : entries_) {
      if (e.id == id) return e.feature;
    }
    throw std::out_of_range("FeatureIndex: unknown id " + std::to_string(id));
  }

 private:
  std::size_t dimension_ = 0;
  std::vector<Entry> entries_;
  std::set<std::size_t> ids_;
};

/// Closest stored entry by Euclidean distance; ties go to the smallest id.
inline std::pair<std::size_t, double> nearest_feature(const FeatureIndex& index, std::span<const double> query) {
  if (index.size() == 0) throw std::invalid_argument("nearest_feature: empty index");
  if (query.size() != index.dimension()) throw std::invalid_argument("nearest_feature: dimension mismatch");
  std::size_t best_id = 0;
  double best = std::numeric_limits<double>::infinity();
  bool found = false;
  for (const auto& e : index.entries()) {
    double d2 = 0.0;
    for (std::size_t k = 0; k < query.size(); ++k) {
      const double r = e.feature[k] - query[k];
      d2 += r * r;
    }
    if (!found || d2 < best || (d2 == best && e.id < best_id)) {
      best = d2;
      best_id = e.id;
      found = true;
    }
  }
  return {best_id, std::sqrt(best)};
}

class LabelVocabulary {
 public:
  struct Entry {
    std::string name;
    std::vector<double> embedding;
    Level level;
  };

  void add(std::string name, std::vector<double> embedding, Level level) {
    double n2 = 0.0;
    for (double v : embedding) n2 += v * v;
    if (std::abs(std::sqrt(n2) - 1.0) > 1e-9) throw std::invalid_argument("LabelVocabulary: embedding not unit norm");
    for (const auto& e : entries_) {
      if (e.level == level && e.name == name) throw std::invalid_argument("LabelVocabulary: duplicate '" + name + "'");
    }
    entries_.push_back({std::move(name), std::move(embedding), level});
  }

  /// Every concept of the dataset's taxonomy with its label embedding.
  static LabelVocabulary from_dataset(const PairedDataset& ds) {
    LabelVocabulary v;
    for (const auto& node : ds.taxonomy.nodes()) {
      v.add(node.name, embed_label(node.name, ds.config.embed_dim, ds.config.seed), node.level);
    }
    return v;
  }

  const std::vector<Entry>& entries() const { return entries_; }

 private:
  std::vector<Entry> entries_;
};

/// Highest cosine similarity among entries at `level`; ties go to the
/// lexicographically smallest name.
inline std::pair<std::string, double> nearest_label(const LabelVocabulary& vocab, std::span<const double> query,
                                                    Level level) {
  double qn2 = 0.0;
  for (double v : query) qn2 += v * v;
  if (qn2 == 0.0) throw std::invalid_argument("nearest_label: zero query");
  const double qn = std::sqrt(qn2);
  const LabelVocabulary::Entry* best = nullptr;
  double best_sim = 0.0;
  for (const auto& e : vocab.entries()) {
    if (e.level != level) continue;
    if (e.embedding.size() != query.size()) throw std::invalid_argument("nearest_label: dimension mismatch");
    double dot = 0.0, en2 = 0.0;
    for (std::size_t k = 0; k < query.size(); ++k) {
      dot += e.embedding[k] * query[k];
      en2 += e.embedding[k] * e.embedding[k];
    }
    const double sim = dot / (qn * std::sqrt(en2));
    if (!best || sim > best_sim || (sim == best_sim && e.name < best->name)) {
      best = &e;
      best_sim = sim;
    }
  }
  if (!best) throw std::invalid_argument("nearest_label: no entries at level '" + std::string(to_string(level)) + "'");
  return {best->name, best_sim};
}

}  // namespace mmvae
