// Copyright 2026 The mmvae Authors
// SPDX-License-Identifier: Apache-2.0

// Multimodal VAE with a mixture-of-experts joint posterior.
//
// One ModalityVAE per modality: the visual features plus one language VAE per
// configured concept level. The joint posterior is the uniform mixture of the
// per-modality posteriors, and the training objective averages each expert's
// own ELBO over experts. With cross-reconstruction enabled, every expert's
// sample is also decoded by every other modality's decoder.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mmvae/nn.hpp"
#include "mmvae/rng.hpp"
#include "mmvae/taxonomy.hpp"
#include "mmvae/vae.hpp"

namespace mmvae {

enum class Modality { visual, subordinate_label, basic_label, superordinate_label };

inline std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::visual: return "visual";
    case Modality::subordinate_label: return "subordinate";
    case Modality::basic_label: return "basic";
    case Modality::superordinate_label: return "superordinate";
  }
  return "?";
}

inline Modality parse_modality(std::string_view s) {
  for (auto m : {Modality::visual, Modality::subordinate_label, Modality::basic_label, Modality::superordinate_label}) {
    if (to_string(m) == s) return m;
  }
  throw std::invalid_argument("unknown modality '" + std::string(s) + "'");
}

inline Modality label_modality(Level level) {
  switch (level) {
    case Level::superordinate: return Modality::superordinate_label;
    case Level::basic: return Modality::basic_label;
    case Level::subordinate: return Modality::subordinate_label;
  }
  return Modality::subordinate_label;
}

inline std::optional<Level> modality_level(Modality m) {
  switch (m) {
    case Modality::visual: return std::nullopt;
    case Modality::subordinate_label: return Level::subordinate;
    case Modality::basic_label: return Level::basic;
    case Modality::superordinate_label: return Level::superordinate;
  }
  return std::nullopt;
}

/// The observation a dataset example supplies for one modality.
inline const std::vector<double>& modality_value(const PairedExample& ex, Modality m) {
  if (auto level = modality_level(m)) return ex.embedding(*level);
  return ex.visual;
}

struct ModelArchitecture {
  std::size_t feature_dim = 64;
  std::size_t embed_dim = 32;
  std::size_t latent_dim = 16;
  std::vector<std::size_t> encoder_hidden{64, 64};
  std::vector<std::size_t> decoder_hidden{64, 64};
  Activation hidden_activation = Activation::relu;
  bool include_superordinate = false;

  /// visual, subordinate, basic and optionally superordinate, in slot order.
  std::vector<Modality> modalities() const {
    std::vector<Modality> out{Modality::visual, Modality::subordinate_label, Modality::basic_label};
    if (include_superordinate) out.push_back(Modality::superordinate_label);
    return out;
  }

  /// 2048-d features, 128-d latent, 256/512/1024 stacks on both sides.
  static ModelArchitecture paper_scale() {
    ModelArchitecture a;
    a.feature_dim = 2048;
    a.embed_dim = 768;
    a.latent_dim = 128;
    a.encoder_hidden = {256, 512, 1024};
    a.decoder_hidden = {256, 512, 1024};
    return a;
  }
};

inline void to_json(nlohmann::json& j, const ModelArchitecture& a) {
  j = {{"feature_dim", a.feature_dim},         {"embed_dim", a.embed_dim},
       {"latent_dim", a.latent_dim},           {"encoder_hidden", a.encoder_hidden},
       {"decoder_hidden", a.decoder_hidden},   {"hidden_activation", std::string(to_string(a.hidden_activation))},
       {"include_superordinate", a.include_superordinate}};
}

inline void from_json(const nlohmann::json& j, ModelArchitecture& a) {
  a.feature_dim = j.value("feature_dim", a.feature_dim);
  a.embed_dim = j.value("embed_dim", a.embed_dim);
  a.latent_dim = j.value("latent_dim", a.latent_dim);
  a.encoder_hidden = j.value("encoder_hidden", a.encoder_hidden);
  a.decoder_hidden = j.value("decoder_hidden", a.decoder_hidden);
  a.hidden_activation = parse_activation(j.value("hidden_activation", std::string(to_string(a.hidden_activation))));
  a.include_superordinate = j.value("include_superordinate", a.include_superordinate);
}

struct ModalitySlot {
  Modality id;
  ModalityVAE vae;
  bool operator==(const ModalitySlot&) const = default;
};

struct MMVAEModel {
  std::vector<ModalitySlot> slots;

  std::size_t size() const { return slots.size(); }
  std::size_t latent_dim() const { return slots.front().vae.latent_dim; }

  /// Every expert carries the same weight 1/M.
  double mixture_weight() const { return 1.0 / static_cast<double>(slots.size()); }
  std::vector<double> mixture_weights() const { return std::vector<double>(slots.size(), mixture_weight()); }

  std::optional<std::size_t> slot_of(Modality m) const {
    for (std::size_t i = 0; i < slots.size(); ++i) {
      if (slots[i].id == m) return i;
    }
    return std::nullopt;
  }

  const ModalityVAE& vae(Modality m) const {
    auto i = slot_of(m);
    if (!i) throw std::invalid_argument("model has no modality '" + std::string(to_string(m)) + "'");
    return slots[*i].vae;
  }

  void validate(std::size_t min_modalities = 2) const {
    if (slots.size() < min_modalities) throw std::invalid_argument("MMVAEModel: too few modalities");
    for (std::size_t i = 0; i < slots.size(); ++i) {
      slots[i].vae.validate();
      if (slots[i].vae.latent_dim != slots.front().vae.latent_dim) {
        throw std::invalid_argument("MMVAEModel: modalities disagree on latent_dim");
      }
      for (std::size_t k = 0; k < i; ++k) {
        if (slots[k].id == slots[i].id) throw std::invalid_argument("MMVAEModel: duplicate modality");
      }
    }
  }

  bool operator==(const MMVAEModel&) const = default;
};

inline MMVAEModel make_model(const ModelArchitecture& arch, std::uint64_t seed) {
  MMVAEModel model;
  for (Modality m : arch.modalities()) {
    VaeArchitecture va;
    va.observation_dim = m == Modality::visual ? arch.feature_dim : arch.embed_dim;
    va.latent_dim = arch.latent_dim;
    va.encoder_hidden = arch.encoder_hidden;
    va.decoder_hidden = arch.decoder_hidden;
    va.hidden_activation = arch.hidden_activation;
    model.slots.push_back({m, make_vae(va, derive_seed(seed, "vae:" + std::string(to_string(m))))});
  }
  model.validate();
  return model;
}

/// Per-slot optional observations, aligned with MMVAEModel::slots.
struct ModalityObservation {
  std::vector<std::optional<std::vector<double>>> values;

  static ModalityObservation none(const MMVAEModel& model) {
    ModalityObservation o;
    o.values.resize(model.size());
    return o;
  }

  ModalityObservation& set(const MMVAEModel& model, Modality m, std::vector<double> v) {
    auto i = model.slot_of(m);
    if (!i) throw std::invalid_argument("observation: model has no modality '" + std::string(to_string(m)) + "'");
    values[*i] = std::move(v);
    return *this;
  }

  bool present(std::size_t slot) const { return values.at(slot).has_value(); }

  std::size_t present_count() const {
    std::size_t n = 0;
    for (const auto& v : values) n += v.has_value();
    return n;
  }

  void validate(const MMVAEModel& model) const {
    if (values.size() != model.size()) throw std::invalid_argument("observation: slot count mismatch");
    if (present_count() == 0) throw std::invalid_argument("observation: nothing present");
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (values[i] && values[i]->size() != model.slots[i].vae.observation_dim) {
        throw std::invalid_argument("observation: '" + std::string(to_string(model.slots[i].id)) +
                                    "' has wrong length");
      }
    }
  }

  void require_full(const MMVAEModel& model) const {
    validate(model);
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!values[i]) {
        throw std::invalid_argument("missing modality '" + std::string(to_string(model.slots[i].id)) + "'");
      }
    }
  }
};

/// All of the model's modalities, taken from one dataset example.
inline ModalityObservation observe(const MMVAEModel& model, const PairedExample& ex) {
  auto o = ModalityObservation::none(model);
  for (std::size_t i = 0; i < model.size(); ++i) o.values[i] = modality_value(ex, model.slots[i].id);
  return o;
}

inline double diagonal_gaussian_log_density(const GaussianPosterior& post, std::span<const double> z) {
  double acc = 0.0;
  for (std::size_t i = 0; i < post.dim(); ++i) {
    const double r = z[i] - post.mean[i];
    acc += -0.5 * (std::log(2.0 * std::numbers::pi) + post.log_variance[i] + r * r * std::exp(-post.log_variance[i]));
  }
  return acc;
}

/// Uniformly weighted mixture of diagonal Gaussian densities at z.
inline double mixture_density(std::span<const GaussianPosterior> experts, std::span<const double> z) {
  if (experts.empty()) throw std::invalid_argument("mixture_density: no experts");
  double sum = 0.0;
  for (const auto& e : experts) {
    if (e.dim() != z.size()) throw std::invalid_argument("mixture_density: dimension mismatch");
    sum += std::exp(diagonal_gaussian_log_density(e, z));
  }
  return sum / static_cast<double>(experts.size());
}

inline std::vector<GaussianPosterior> expert_posteriors(const MMVAEModel& model, const ModalityObservation& obs) {
  std::vector<GaussianPosterior> out;
  for (std::size_t i = 0; i < model.size(); ++i) {
    if (obs.present(i)) out.push_back(encode(model.slots[i].vae, *obs.values[i]));
  }
  return out;
}

/// q(z | x_1..M) = (1/M) sum_m q_m(z | x_m).
inline double joint_posterior_density(const MMVAEModel& model, std::span<const double> z,
                                      const ModalityObservation& obs) {
  obs.require_full(model);
  if (z.size() != model.latent_dim()) throw std::invalid_argument("joint_posterior_density: latent length mismatch");
  const auto experts = expert_posteriors(model, obs);
  return mixture_density(experts, z);
}

/// Draws from expert `expert` of the joint posterior.
inline LatentSample sample_joint(const MMVAEModel& model, const ModalityObservation& obs, std::size_t expert,
                                 std::span<const double> eps) {
  obs.require_full(model);
  if (expert >= model.size()) throw std::out_of_range("sample_joint: expert index out of range");
  return reparameterize(encode(model.slots[expert].vae, *obs.values[expert]), eps);
}

/// Picks the expert uniformly, then draws eps; returns the sample and expert index.
inline std::pair<LatentSample, std::size_t> sample_joint(const MMVAEModel& model, const ModalityObservation& obs,
                                                         Rng& rng) {
  const std::size_t expert = rng.index(model.size());
  const auto eps = rng.normal_vector(model.latent_dim());
  return {sample_joint(model, obs, expert, eps), expert};
}

struct ElboOptions {
  bool cross_reconstruction = false;
};

/// eps[m][k]: k-th standard-normal draw for expert m.
using EpsDraws = std::vector<std::vector<std::vector<double>>>;

inline EpsDraws draw_eps(const MMVAEModel& model, std::size_t samples, Rng& rng) {
  EpsDraws eps(model.size());
  for (auto& per_expert : eps) {
    for (std::size_t k = 0; k < samples; ++k) per_expert.push_back(rng.normal_vector(model.latent_dim()));
  }
  return eps;
}

struct ModelGradient {
  std::vector<VaeGradient> slots;
};

inline ModelGradient zero_gradient(const MMVAEModel& model) {
  ModelGradient g;
  for (const auto& s : model.slots) g.slots.push_back(zero_gradient(s.vae));
  return g;
}

namespace detail {

inline double multimodal_objective(const MMVAEModel& model, const ModalityObservation& obs, const EpsDraws& eps,
                                   const ElboOptions& options, ModelGradient* grad, double grad_scale) {
  obs.require_full(model);
  if (eps.size() != model.size()) throw std::invalid_argument("multimodal_elbo: need eps draws for every expert");
  const double M = static_cast<double>(model.size());
  double total = 0.0;
  for (std::size_t m = 0; m < model.size(); ++m) {
    std::vector<ReconTarget> targets;
    for (std::size_t n = 0; n < model.size(); ++n) {
      if (n != m && !options.cross_reconstruction) continue;
      targets.push_back({&model.slots[n].vae, *obs.values[n], grad ? &grad->slots[n] : nullptr});
    }
    total += expert_objective(model.slots[m].vae, *obs.values[m], eps[m], targets,
                              grad ? &grad->slots[m] : nullptr, grad_scale / M);
  }
  return total / M;
}

}  // namespace detail

/// (1/M) sum_m [ E_{z_m ~ q_m} log p(x_m | z_m) - KL(q_m || N(0, I)) ].
inline double multimodal_elbo(const MMVAEModel& model, const ModalityObservation& obs, const EpsDraws& eps,
                              const ElboOptions& options = {}) {
  return detail::multimodal_objective(model, obs, eps, options, nullptr, 1.0);
}

/// Adds `scale` times the ELBO gradient into `grad`; returns the ELBO.
inline double multimodal_elbo_gradient(const MMVAEModel& model, const ModalityObservation& obs, const EpsDraws& eps,
                                       const ElboOptions& options, ModelGradient& grad, double scale = 1.0) {
  return detail::multimodal_objective(model, obs, eps, options, &grad, scale);
}

inline std::vector<double> flatten(const MMVAEModel& model) {
  std::vector<double> out;
  for (const auto& s : model.slots) {
    auto v = flatten(s.vae);
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

inline std::vector<double> flatten(const ModelGradient& g) {
  std::vector<double> out;
  for (const auto& s : g.slots) {
    auto v = flatten(s);
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

inline void assign(MMVAEModel& model, std::span<const double> values) {
  std::size_t k = 0;
  for (auto& s : model.slots) k += assign(s.vae, values.subspan(k));
}

struct TrainConfig {
  std::size_t steps = 3000;
  std::size_t batch_size = 32;
  double learning_rate = 0.001;
  std::uint64_t seed = 0;
  std::size_t elbo_samples = 1;  // K draws per expert
  bool cross_reconstruction = false;

  void validate() const {
    if (batch_size == 0 || elbo_samples == 0) throw std::invalid_argument("train: batch_size and K must be positive");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("train: learning_rate must be positive");
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"steps", c.steps},         {"batch_size", c.batch_size},     {"learning_rate", c.learning_rate},
       {"seed", c.seed},           {"elbo_samples", c.elbo_samples}, {"cross_reconstruction", c.cross_reconstruction}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.steps = j.value("steps", c.steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.seed = j.value("seed", c.seed);
  c.elbo_samples = j.value("elbo_samples", c.elbo_samples);
  c.cross_reconstruction = j.value("cross_reconstruction", c.cross_reconstruction);
}

struct TrainResult {
  MMVAEModel model;
  std::vector<double> trace;  // per-step mean negative ELBO over the minibatch
};

inline void check_alignment(const MMVAEModel& model, const PairedDataset& ds) {
  for (const auto& s : model.slots) {
    const std::size_t want = s.id == Modality::visual ? ds.config.feature_dim : ds.config.embed_dim;
    if (s.vae.observation_dim != want) {
      throw std::invalid_argument("model modality '" + std::string(to_string(s.id)) +
                                  "' does not match dataset dimension " + std::to_string(want));
    }
  }
}

/// Adam on the negative multimodal ELBO over seeded minibatches drawn from
/// `indices` (epoch-wise shuffles). Deterministic for a fixed config.
inline TrainResult train(MMVAEModel model, const PairedDataset& ds, std::span<const std::size_t> indices,
                         const TrainConfig& config) {
  config.validate();
  model.validate();
  check_alignment(model, ds);
  if (indices.empty() && config.steps > 0) throw std::invalid_argument("train: no training examples");

  std::vector<Tensor*> params;
  for (auto& s : model.slots) {
    for (auto* net : {&s.vae.encoder, &s.vae.decoder}) {
      auto p = parameter_tensors(*net);
      params.insert(params.end(), p.begin(), p.end());
    }
  }
  AdamState adam = make_adam_state(params, {.learning_rate = config.learning_rate});
  Rng rng(config.seed);
  std::vector<std::size_t> order(indices.begin(), indices.end());
  std::size_t cursor = order.size();
  const ElboOptions options{config.cross_reconstruction};
  const double inv_b = 1.0 / static_cast<double>(config.batch_size);

  TrainResult result;
  result.trace.reserve(config.steps);
  for (std::size_t step = 0; step < config.steps; ++step) {
    ModelGradient grad = zero_gradient(model);
    double batch_elbo = 0.0;
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      if (cursor == order.size()) {
        rng.shuffle(order);
        cursor = 0;
      }
      const auto& ex = ds.examples.at(order[cursor++]);
      const auto obs = observe(model, ex);
      const auto eps = draw_eps(model, config.elbo_samples, rng);
      // Descent direction: gradient of the negative ELBO, averaged over the batch.
      batch_elbo += multimodal_elbo_gradient(model, obs, eps, options, grad, -inv_b);
    }
    std::vector<const Tensor*> grads;
    for (const auto& s : grad.slots) {
      for (const auto* g : {&s.encoder, &s.decoder}) {
        auto t = gradient_tensors(*g);
        grads.insert(grads.end(), t.begin(), t.end());
      }
    }
    adam_step(adam, params, grads);
    result.trace.push_back(-batch_elbo * inv_b);
  }
  result.model = std::move(model);
  return result;
}

inline TrainResult train(MMVAEModel model, const PairedDataset& ds, const TrainConfig& config) {
  std::vector<std::size_t> all(ds.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return train(std::move(model), ds, all, config);
}

/// Choice of mixture component (an index into the present experts, in slot
/// order) and the standard-normal draw for it.
struct MixtureDraw {
  std::size_t component = 0;
  std::vector<double> eps;
};

/// Decoder mean for `target`, sampled from the uniform mixture over the
/// experts whose modality is present. The target's encoder is never used.
inline std::vector<double> cross_generate(const MMVAEModel& model, const ModalityObservation& obs, Modality target,
                                          const MixtureDraw& draw) {
  obs.validate(model);
  const auto target_slot = model.slot_of(target);
  if (!target_slot) throw std::invalid_argument("cross_generate: unknown target modality");
  if (obs.present(*target_slot)) throw std::invalid_argument("cross_generate: target modality is present");
  std::vector<std::size_t> present;
  for (std::size_t i = 0; i < model.size(); ++i) {
    if (obs.present(i)) present.push_back(i);
  }
  if (draw.component >= present.size()) throw std::out_of_range("cross_generate: component out of range");
  const std::size_t expert = present[draw.component];
  const auto sample = reparameterize(encode(model.slots[expert].vae, *obs.values[expert]), draw.eps);
  return decode(model.slots[*target_slot].vae, sample.z);
}

inline std::vector<double> cross_generate(const MMVAEModel& model, const ModalityObservation& obs, Modality target,
                                          Rng& rng) {
  MixtureDraw draw;
  draw.component = rng.index(obs.present_count());
  draw.eps = rng.normal_vector(model.latent_dim());
  return cross_generate(model, obs, target, draw);
}

inline nlohmann::json model_to_json(const MMVAEModel& model, const nlohmann::json& provenance = nlohmann::json::object()) {
  nlohmann::json slots = nlohmann::json::array();
  for (const auto& s : model.slots) slots.push_back({{"id", std::string(to_string(s.id))}, {"vae", s.vae}});
  return {{"format", "mmvae.model"},
          {"version", 1},
          {"latent_dim", model.latent_dim()},
          {"modalities", slots},
          {"provenance", provenance}};
}

inline MMVAEModel model_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "mmvae.model" || j.value("version", 0) != 1) {
    throw std::runtime_error("checkpoint: not an mmvae.model v1 record");
  }
  MMVAEModel model;
  for (const auto& sj : j.at("modalities")) {
    model.slots.push_back({parse_modality(sj.at("id").get<std::string>()), sj.at("vae").get<ModalityVAE>()});
  }
  model.validate(1);
  if (model.latent_dim() != j.at("latent_dim").get<std::size_t>()) {
    throw std::runtime_error("checkpoint: latent_dim disagrees with modality records");
  }
  return model;
}

}  // namespace mmvae
