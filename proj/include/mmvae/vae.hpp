// Copyright 2026 The mmvae Authors
// SPDX-License-Identifier: Apache-2.0

// Gaussian VAE for one modality: encoder to a diagonal Gaussian posterior,
// reparameterized sampling, a unit-variance Gaussian decoder, closed-form KL to
// a standard normal prior, and the single-modality ELBO with its gradient.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "mmvae/nn.hpp"
#include "mmvae/rng.hpp"

namespace mmvae {

/// Encoder log-variance outputs are clamped to [-kLogVarianceClamp, kLogVarianceClamp].
inline constexpr double kLogVarianceClamp = 10.0;

struct GaussianPosterior {
  std::vector<double> mean;
  std::vector<double> log_variance;

  std::size_t dim() const { return mean.size(); }
  bool operator==(const GaussianPosterior&) const = default;
};

struct LatentSample {
  std::vector<double> z;
  std::vector<double> eps;
};

enum class Likelihood { gaussian_unit_variance };

struct ModalityVAE {
  DenseNet encoder;  // observation -> (mean, log-variance), 2 * latent_dim outputs
  DenseNet decoder;  // latent -> observation mean
  std::size_t latent_dim = 0;
  std::size_t observation_dim = 0;
  Likelihood likelihood = Likelihood::gaussian_unit_variance;

  void validate() const {
    encoder.validate();
    decoder.validate();
    if (latent_dim == 0 || observation_dim == 0) throw std::invalid_argument("ModalityVAE: zero dimension");
    if (encoder.in_dim() != observation_dim || encoder.out_dim() != 2 * latent_dim) {
      throw std::invalid_argument("ModalityVAE: encoder must map observation_dim -> 2 * latent_dim");
    }
    if (decoder.in_dim() != latent_dim || decoder.out_dim() != observation_dim) {
      throw std::invalid_argument("ModalityVAE: decoder must map latent_dim -> observation_dim");
    }
  }

  bool operator==(const ModalityVAE&) const = default;
};

struct VaeArchitecture {
  std::size_t observation_dim = 0;
  std::size_t latent_dim = 16;
  std::vector<std::size_t> encoder_hidden{64, 64};
  std::vector<std::size_t> decoder_hidden{64, 64};
  Activation hidden_activation = Activation::relu;
};

inline ModalityVAE make_vae(const VaeArchitecture& arch, std::uint64_t seed) {
  ModalityVAE v;
  v.latent_dim = arch.latent_dim;
  v.observation_dim = arch.observation_dim;
  v.encoder = init_mlp(arch.observation_dim, arch.encoder_hidden, 2 * arch.latent_dim, arch.hidden_activation,
                       derive_seed(seed, "encoder"));
  v.decoder = init_mlp(arch.latent_dim, arch.decoder_hidden, arch.observation_dim, arch.hidden_activation,
                       derive_seed(seed, "decoder"));
  v.validate();
  return v;
}

namespace detail {

struct EncoderPass {
  ForwardCache cache;
  GaussianPosterior posterior;
  std::vector<double> raw_log_variance;
};

inline EncoderPass encode_pass(const ModalityVAE& vae, std::span<const double> x) {
  if (x.size() != vae.observation_dim) {
    throw std::invalid_argument("encode: observation has length " + std::to_string(x.size()) + ", expected " +
                                std::to_string(vae.observation_dim));
  }
  auto [out, cache] = forward(vae.encoder, Tensor::vector({x.begin(), x.end()}));
  EncoderPass pass;
  pass.cache = std::move(cache);
  const std::size_t L = vae.latent_dim;
  pass.posterior.mean.assign(out.data().begin(), out.data().begin() + static_cast<std::ptrdiff_t>(L));
  pass.raw_log_variance.assign(out.data().begin() + static_cast<std::ptrdiff_t>(L), out.data().end());
  pass.posterior.log_variance = pass.raw_log_variance;
  for (double& lv : pass.posterior.log_variance) lv = std::clamp(lv, -kLogVarianceClamp, kLogVarianceClamp);
  return pass;
}

inline double gaussian_unit_log_likelihood(std::span<const double> x, std::span<const double> mean) {
  double sq = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = x[i] - mean[i];
    sq += r * r;
  }
  return -0.5 * sq - 0.5 * static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi);
}

}  // namespace detail

inline GaussianPosterior encode(const ModalityVAE& vae, std::span<const double> x) {
  return detail::encode_pass(vae, x).posterior;
}

/// z = mean + exp(log_variance / 2) * eps.
inline LatentSample reparameterize(const GaussianPosterior& post, std::span<const double> eps) {
  if (eps.size() != post.dim() || post.log_variance.size() != post.dim()) {
    throw std::invalid_argument("reparameterize: length mismatch");
  }
  LatentSample s;
  s.eps.assign(eps.begin(), eps.end());
  s.z.resize(post.dim());
  for (std::size_t i = 0; i < post.dim(); ++i) {
    s.z[i] = post.mean[i] + std::exp(0.5 * post.log_variance[i]) * eps[i];
  }
  return s;
}

inline std::vector<double> decode(const ModalityVAE& vae, std::span<const double> z) {
  if (z.size() != vae.latent_dim) throw std::invalid_argument("decode: latent length mismatch");
  return predict(vae.decoder, z);
}

/// KL(N(mean, diag(exp(lv))) || N(0, I)) = 1/2 sum(mean^2 + exp(lv) - 1 - lv).
inline double kl_standard_normal(const GaussianPosterior& post) {
  double kl = 0.0;
  for (std::size_t i = 0; i < post.dim(); ++i) {
    const double lv = post.log_variance[i];
    kl += post.mean[i] * post.mean[i] + std::exp(lv) - 1.0 - lv;
  }
  return 0.5 * kl;
}

/// log N(x; decode(z), I).
inline double log_likelihood(const ModalityVAE& vae, std::span<const double> x, std::span<const double> z) {
  if (x.size() != vae.observation_dim) throw std::invalid_argument("log_likelihood: observation length mismatch");
  const auto mean = decode(vae, z);
  return detail::gaussian_unit_log_likelihood(x, mean);
}

struct VaeGradient {
  NetGradient encoder;
  NetGradient decoder;
};

inline VaeGradient zero_gradient(const ModalityVAE& vae) {
  return {zero_gradient(vae.encoder), zero_gradient(vae.decoder)};
}

/// One reconstruction target for an expert's latent samples. `grad` may be
/// null when only the value is needed.
struct ReconTarget {
  const ModalityVAE* vae = nullptr;
  std::span<const double> x;
  VaeGradient* grad = nullptr;
};

/// Per-expert objective
///   (1/K) sum_k sum_targets log p(x_t | z_k) - KL(q(z|x) || N(0, I)),
/// with z_k = mean + sigma * eps_k. When `expert_grad` is non-null, adds
/// `grad_scale` times the objective's gradient into the encoder part of
/// `expert_grad` and into each target's decoder gradient.
inline double expert_objective(const ModalityVAE& expert, std::span<const double> x,
                               std::span<const std::vector<double>> eps_draws, std::span<const ReconTarget> targets,
                               VaeGradient* expert_grad = nullptr, double grad_scale = 1.0) {
  if (eps_draws.empty()) throw std::invalid_argument("ELBO: need at least one eps draw");
  const auto pass = detail::encode_pass(expert, x);
  const auto& post = pass.posterior;
  const std::size_t L = expert.latent_dim;
  const double inv_k = 1.0 / static_cast<double>(eps_draws.size());
  const bool want_grad = expert_grad != nullptr;

  std::vector<double> d_mean(L, 0.0), d_logvar(L, 0.0);
  std::vector<double> sigma(L);
  for (std::size_t i = 0; i < L; ++i) sigma[i] = std::exp(0.5 * post.log_variance[i]);

  double recon = 0.0;
  for (const auto& eps : eps_draws) {
    const auto sample = reparameterize(post, eps);
    std::vector<double> d_z(L, 0.0);
    for (const auto& t : targets) {
      if (t.x.size() != t.vae->observation_dim) throw std::invalid_argument("ELBO: target length mismatch");
      auto [y, cache] = forward(t.vae->decoder, Tensor::vector(sample.z));
      recon += detail::gaussian_unit_log_likelihood(t.x, y.values());
      if (!want_grad) continue;
      Tensor dy({t.vae->observation_dim});
      for (std::size_t i = 0; i < dy.size(); ++i) dy[i] = t.x[i] - y[i];
      const auto g = backward(t.vae->decoder, cache, dy);
      if (t.grad) accumulate(t.grad->decoder, g, grad_scale * inv_k);
      for (std::size_t i = 0; i < L; ++i) d_z[i] += g.input[i];
    }
    if (!want_grad) continue;
    for (std::size_t i = 0; i < L; ++i) {
      d_mean[i] += inv_k * d_z[i];
      d_logvar[i] += inv_k * d_z[i] * 0.5 * sigma[i] * eps[i];
    }
  }
  const double value = recon / static_cast<double>(eps_draws.size()) - kl_standard_normal(post);

  if (want_grad) {
    Tensor d_out({2 * L});
    for (std::size_t i = 0; i < L; ++i) {
      d_out[i] = d_mean[i] - post.mean[i];
      const bool inside = pass.raw_log_variance[i] > -kLogVarianceClamp && pass.raw_log_variance[i] < kLogVarianceClamp;
      d_out[L + i] = inside ? d_logvar[i] - 0.5 * (std::exp(post.log_variance[i]) - 1.0) : 0.0;
    }
    const auto g = backward(expert.encoder, pass.cache, d_out);
    accumulate(expert_grad->encoder, g, grad_scale);
  }
  return value;
}

/// Monte Carlo ELBO: mean over eps draws of log p(x|z_k), minus the analytic KL.
inline double elbo_single(const ModalityVAE& vae, std::span<const double> x,
                          std::span<const std::vector<double>> eps_draws) {
  const ReconTarget self{&vae, x, nullptr};
  return expert_objective(vae, x, eps_draws, std::span(&self, 1));
}

/// ELBO value plus its exact gradient with respect to every parameter.
inline double elbo_single_gradient(const ModalityVAE& vae, std::span<const double> x,
                                   std::span<const std::vector<double>> eps_draws, VaeGradient& grad) {
  grad = zero_gradient(vae);
  const ReconTarget self{&vae, x, &grad};
  return expert_objective(vae, x, eps_draws, std::span(&self, 1), &grad, 1.0);
}

inline std::vector<double> flatten(const ModalityVAE& vae) {
  auto out = flatten(vae.encoder);
  auto dec = flatten(vae.decoder);
  out.insert(out.end(), dec.begin(), dec.end());
  return out;
}

inline std::vector<double> flatten(const VaeGradient& g) {
  auto out = flatten(g.encoder);
  auto dec = flatten(g.decoder);
  out.insert(out.end(), dec.begin(), dec.end());
  return out;
}

inline std::size_t assign(ModalityVAE& vae, std::span<const double> values) {
  const std::size_t k = assign(vae.encoder, values);
  return k + assign(vae.decoder, values.subspan(k));
}

inline void to_json(nlohmann::json& j, const ModalityVAE& v) {
  j = {{"latent_dim", v.latent_dim},
       {"observation_dim", v.observation_dim},
       {"likelihood", "gaussian_unit_variance"},
       {"encoder", v.encoder},
       {"decoder", v.decoder}};
}

inline void from_json(const nlohmann::json& j, ModalityVAE& v) {
  v.latent_dim = j.at("latent_dim").get<std::size_t>();
  v.observation_dim = j.at("observation_dim").get<std::size_t>();
  if (j.value("likelihood", "gaussian_unit_variance") != "gaussian_unit_variance") {
    throw std::runtime_error("checkpoint: unsupported likelihood");
  }
  v.encoder = j.at("encoder").get<DenseNet>();
  v.decoder = j.at("decoder").get<DenseNet>();
  v.validate();
}

}  // namespace mmvae
