#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mixae/layers.hpp"
#include "mixae/objective.hpp"
#include "mixae/tensor.hpp"

namespace mixae {

struct ModelConfig {
  std::size_t input_dim = 0;        // n
  std::size_t latent_dim = 0;       // d
  std::size_t num_autoencoders = 0; // K
  std::vector<std::size_t> encoder_hidden{256, 64};
  std::vector<std::size_t> man_hidden{64};
  Activation activation = Activation::Relu;
  ReconLoss reconstruction_loss = ReconLoss::Mse;

  void validate() const {
    if (input_dim == 0 || latent_dim == 0)
      throw ConfigError("input_dim and latent_dim must be positive");
    if (latent_dim >= input_dim)
      throw ConfigError("latent_dim " + std::to_string(latent_dim) +
                        " must be smaller than input_dim " + std::to_string(input_dim));
    if (num_autoencoders < 2) throw ConfigError("need at least 2 autoencoders");
    for (std::size_t w : encoder_hidden)
      if (w == 0) throw ConfigError("encoder hidden widths must be positive");
    for (std::size_t w : man_hidden)
      if (w == 0) throw ConfigError("man hidden widths must be positive");
  }

  std::vector<std::size_t> encoder_dims() const {
    std::vector<std::size_t> dims{input_dim};
    dims.insert(dims.end(), encoder_hidden.begin(), encoder_hidden.end());
    dims.push_back(latent_dim);
    return dims;
  }

  std::vector<std::size_t> decoder_dims() const {
    std::vector<std::size_t> dims = encoder_dims();
    return {dims.rbegin(), dims.rend()};
  }

  std::vector<std::size_t> man_dims() const {
    std::vector<std::size_t> dims{latent_dim * num_autoencoders};
    dims.insert(dims.end(), man_hidden.begin(), man_hidden.end());
    dims.push_back(num_autoencoders);
    return dims;
  }

  Activation decoder_output_activation() const {
    return reconstruction_loss == ReconLoss::Bce ? Activation::Sigmoid : Activation::Identity;
  }
};

/// Stack of affine layers with per-layer activations.
struct Mlp {
  std::vector<LayerParams> layers;
  std::vector<Activation> activations;

  static Mlp glorot(const std::vector<std::size_t>& dims, Activation hidden,
                    Activation output, SeededRng& rng) {
    Mlp m;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
      m.layers.push_back(LayerParams::glorot(dims[i + 1], dims[i], rng));
      m.activations.push_back(i + 2 < dims.size() ? hidden : output);
    }
    return m;
  }

  static Mlp zeros_like(const Mlp& o) {
    Mlp m;
    m.activations = o.activations;
    for (const LayerParams& l : o.layers)
      m.layers.push_back(LayerParams::zeros(l.fan_out(), l.fan_in()));
    return m;
  }
};

struct MlpCache {
  std::vector<Tensor> inputs;   // input to each affine layer
  std::vector<Tensor> outputs;  // post-activation output of each layer
};

inline Tensor mlp_forward(const Mlp& mlp, const Tensor& x, MlpCache* cache = nullptr) {
  Tensor cur = x;
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    if (cache) cache->inputs.push_back(cur);
    cur = activation_forward(mlp.activations[i], affine_forward(cur, mlp.layers[i]));
    if (cache) cache->outputs.push_back(cur);
  }
  return cur;
}

/// Returns the gradient w.r.t. the stack input; layer gradients accumulate
/// into `grads` (which must be shaped like `mlp`).
inline Tensor mlp_backward(const Mlp& mlp, const MlpCache& cache, const Tensor& grad_out,
                           Mlp& grads) {
  if (cache.inputs.size() != mlp.layers.size())
    throw std::logic_error("mlp_backward: cache missing or incomplete");
  Tensor g = grad_out;
  for (std::size_t i = mlp.layers.size(); i-- > 0;) {
    g = activation_backward(mlp.activations[i], g, cache.outputs[i]);
    auto [grad_input, layer_grads] = affine_backward(g, cache.inputs[i], mlp.layers[i]);
    grads.layers[i].weight += layer_grads.weight;
    grads.layers[i].bias += layer_grads.bias;
    g = std::move(grad_input);
  }
  return g;
}

struct AutoencoderParams {
  Mlp encoder;
  Mlp decoder;
};

/// All trainable parameters: K autoencoder stacks plus the mixture
/// assignment network. The same struct shape carries gradients and
/// optimizer moments.
struct MixaeParams {
  std::vector<AutoencoderParams> autoencoders;
  Mlp man;

  static MixaeParams init(const ModelConfig& config, SeededRng& rng) {
    config.validate();
    MixaeParams p;
    for (std::size_t k = 0; k < config.num_autoencoders; ++k) {
      AutoencoderParams ae;
      ae.encoder = Mlp::glorot(config.encoder_dims(), config.activation,
                               Activation::Identity, rng);
      ae.decoder = Mlp::glorot(config.decoder_dims(), config.activation,
                               config.decoder_output_activation(), rng);
      p.autoencoders.push_back(std::move(ae));
    }
    p.man = Mlp::glorot(config.man_dims(), config.activation, Activation::Identity, rng);
    return p;
  }

  static MixaeParams zeros_like(const MixaeParams& o) {
    MixaeParams p;
    for (const AutoencoderParams& ae : o.autoencoders)
      p.autoencoders.push_back({Mlp::zeros_like(ae.encoder), Mlp::zeros_like(ae.decoder)});
    p.man = Mlp::zeros_like(o.man);
    return p;
  }
};

/// Visits every parameter tensor in a fixed order (encoders/decoders by
/// autoencoder index, then the MAN; weight before bias).
template <typename Params, typename Fn>
void for_each_tensor(Params& params, Fn&& fn) {
  auto visit_mlp = [&fn](auto& mlp) {
    for (auto& layer : mlp.layers) {
      fn(layer.weight);
      fn(layer.bias);
    }
  };
  for (auto& ae : params.autoencoders) {
    visit_mlp(ae.encoder);
    visit_mlp(ae.decoder);
  }
  visit_mlp(params.man);
}

template <typename A, typename B, typename Fn>
void zip_tensors(A& a, B& b, Fn&& fn) {
  std::vector<Tensor*> ta, tb;
  for_each_tensor(a, [&ta](Tensor& t) { ta.push_back(&t); });
  for_each_tensor(b, [&tb](Tensor& t) { tb.push_back(&t); });
  if (ta.size() != tb.size()) throw std::logic_error("zip_tensors: structure mismatch");
  for (std::size_t i = 0; i < ta.size(); ++i) fn(*ta[i], *tb[i]);
}

struct ForwardOutput {
  std::vector<Tensor> reconstructions;  // K tensors [B x n]
  Tensor latent_concat;                 // [B x dK]
  Tensor assignments;                   // [B x K], rows on the simplex
  std::vector<MlpCache> encoder_caches;
  std::vector<MlpCache> decoder_caches;
  MlpCache man_cache;
  bool has_caches = false;
};

inline Tensor encode(const MixaeParams& params, const ModelConfig& config, const Tensor& x,
                     std::size_t k) {
  if (k >= params.autoencoders.size())
    throw ConfigError("autoencoder index " + std::to_string(k) + " out of range");
  if (x.rank() != 2 || x.cols() != config.input_dim)
    throw ShapeError("encode: input " + shape_string(x.shape()) + " vs n=" +
                     std::to_string(config.input_dim));
  return mlp_forward(params.autoencoders[k].encoder, x);
}

inline Tensor decode(const MixaeParams& params, const ModelConfig& config, const Tensor& z,
                     std::size_t k) {
  if (k >= params.autoencoders.size())
    throw ConfigError("autoencoder index " + std::to_string(k) + " out of range");
  if (z.rank() != 2 || z.cols() != config.latent_dim)
    throw ShapeError("decode: latent " + shape_string(z.shape()) + " vs d=" +
                     std::to_string(config.latent_dim));
  return mlp_forward(params.autoencoders[k].decoder, z);
}

/// Runs all K encoders, the assignment network on the concatenated latents,
/// and all K decoders on their own latents.
inline ForwardOutput forward(const MixaeParams& params, const ModelConfig& config,
                             const Tensor& x, bool keep_caches = true) {
  if (x.rank() != 2 || x.cols() != config.input_dim)
    throw ShapeError("forward: input " + shape_string(x.shape()) + " vs n=" +
                     std::to_string(config.input_dim));
  std::size_t batch = x.rows();
  std::size_t num_ae = params.autoencoders.size();
  std::size_t d = config.latent_dim;

  ForwardOutput out;
  out.has_caches = keep_caches;
  out.latent_concat = Tensor({batch, d * num_ae});
  for (std::size_t k = 0; k < num_ae; ++k) {
    MlpCache enc_cache, dec_cache;
    Tensor z = mlp_forward(params.autoencoders[k].encoder, x, keep_caches ? &enc_cache : nullptr);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t j = 0; j < d; ++j) out.latent_concat(b, k * d + j) = z(b, j);
    Tensor recon =
        mlp_forward(params.autoencoders[k].decoder, z, keep_caches ? &dec_cache : nullptr);
    out.reconstructions.push_back(std::move(recon));
    if (keep_caches) {
      out.encoder_caches.push_back(std::move(enc_cache));
      out.decoder_caches.push_back(std::move(dec_cache));
    }
  }
  Tensor logits =
      mlp_forward(params.man, out.latent_concat, keep_caches ? &out.man_cache : nullptr);
  out.assignments = softmax_forward(logits);
  return out;
}

/// Exact gradients of the composite objective for every parameter. The
/// assignment path (through p) and the reconstruction path both contribute;
/// encoders receive gradient from their decoder and from the MAN.
inline MixaeParams backward(const MixaeParams& params, const ModelConfig& config,
                            const ForwardOutput& fout, const Tensor& grad_assignments,
                            const std::vector<Tensor>& grad_reconstructions) {
  if (!fout.has_caches)
    throw std::logic_error("backward: forward pass was run without caches");
  std::size_t batch = fout.assignments.rows();
  std::size_t num_ae = params.autoencoders.size();
  std::size_t d = config.latent_dim;

  MixaeParams grads = MixaeParams::zeros_like(params);

  Tensor grad_logits = softmax_backward(grad_assignments, fout.assignments);
  Tensor grad_concat = mlp_backward(params.man, fout.man_cache, grad_logits, grads.man);

  for (std::size_t k = 0; k < num_ae; ++k) {
    Tensor grad_z = mlp_backward(params.autoencoders[k].decoder, fout.decoder_caches[k],
                                 grad_reconstructions[k], grads.autoencoders[k].decoder);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t j = 0; j < d; ++j) grad_z(b, j) += grad_concat(b, k * d + j);
    mlp_backward(params.autoencoders[k].encoder, fout.encoder_caches[k], grad_z,
                 grads.autoencoders[k].encoder);
  }
  return grads;
}

}  // namespace mixae
