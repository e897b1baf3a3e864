#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <utility>

#include "mixae/tensor.hpp"

namespace mixae {

using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

inline ConstMatMap as_matrix(const Tensor& t) {
  return ConstMatMap(t.data(), static_cast<Eigen::Index>(t.rows()),
                     static_cast<Eigen::Index>(t.cols()));
}

inline MatMap as_matrix(Tensor& t) {
  return MatMap(t.data(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}

/// Weight [out x in] plus bias [out] of one affine layer.
struct LayerParams {
  Tensor weight;
  Tensor bias;

  LayerParams() = default;
  LayerParams(Tensor w, Tensor b) : weight(std::move(w)), bias(std::move(b)) {
    if (weight.rank() != 2 || bias.rank() != 1 || weight.rows() != bias.dim(0))
      throw ShapeError("inconsistent layer params: weight " + shape_string(weight.shape()) +
                       ", bias " + shape_string(bias.shape()));
  }

  static LayerParams zeros(std::size_t out, std::size_t in) {
    return LayerParams(Tensor({out, in}), Tensor({out}));
  }

  /// Glorot-uniform weights, zero bias.
  static LayerParams glorot(std::size_t out, std::size_t in, SeededRng& rng) {
    LayerParams p = zeros(out, in);
    double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    for (std::size_t i = 0; i < p.weight.size(); ++i)
      p.weight[i] = rng.uniform(-limit, limit);
    return p;
  }

  std::size_t fan_out() const { return weight.rows(); }
  std::size_t fan_in() const { return weight.cols(); }
};

/// output[b] = weight * input[b] + bias
inline Tensor affine_forward(const Tensor& input, const LayerParams& params) {
  if (input.rank() != 2 || input.cols() != params.fan_in())
    throw ShapeError("affine_forward: input " + shape_string(input.shape()) +
                     " vs weight " + shape_string(params.weight.shape()));
  Tensor out({input.rows(), params.fan_out()});
  as_matrix(out).noalias() = as_matrix(input) * as_matrix(params.weight).transpose();
  auto o = as_matrix(out);
  for (Eigen::Index r = 0; r < o.rows(); ++r)
    for (Eigen::Index c = 0; c < o.cols(); ++c) o(r, c) += params.bias[static_cast<std::size_t>(c)];
  return out;
}

/// Gradients of a scalar loss w.r.t. input, weight and bias given the
/// upstream gradient and the input cached from the forward pass.
inline std::pair<Tensor, LayerParams> affine_backward(const Tensor& grad_out,
                                                      const Tensor& cached_input,
                                                      const LayerParams& params) {
  if (grad_out.rank() != 2 || grad_out.cols() != params.fan_out() ||
      cached_input.rank() != 2 || cached_input.rows() != grad_out.rows() ||
      cached_input.cols() != params.fan_in())
    throw ShapeError("affine_backward: grad " + shape_string(grad_out.shape()) +
                     ", input " + shape_string(cached_input.shape()) + ", weight " +
                     shape_string(params.weight.shape()));
  Tensor grad_input({cached_input.rows(), cached_input.cols()});
  LayerParams grads = LayerParams::zeros(params.fan_out(), params.fan_in());
  as_matrix(grad_input).noalias() = as_matrix(grad_out) * as_matrix(params.weight);
  as_matrix(grads.weight).noalias() = as_matrix(grad_out).transpose() * as_matrix(cached_input);
  for (std::size_t b = 0; b < grad_out.rows(); ++b)
    for (std::size_t c = 0; c < grad_out.cols(); ++c) grads.bias[c] += grad_out(b, c);
  return {std::move(grad_input), std::move(grads)};
}

enum class Activation { Relu, Tanh, Sigmoid, Identity };

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "tanh") return Activation::Tanh;
  if (s == "sigmoid") return Activation::Sigmoid;
  if (s == "identity" || s == "linear") return Activation::Identity;
  throw ConfigError("unsupported activation kind: " + s);
}

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Identity: return "identity";
  }
  throw ConfigError("unknown activation");
}

inline Tensor activation_forward(Activation kind, const Tensor& x) {
  Tensor out = x;
  switch (kind) {
    case Activation::Relu:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, out[i]);
      break;
    case Activation::Tanh:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
      break;
    case Activation::Sigmoid:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
      break;
    case Activation::Identity:
      break;
  }
  return out;
}

/// Upstream gradient times the elementwise derivative. `cached_output` is the
/// forward result; all supported derivatives are expressible through it.
inline Tensor activation_backward(Activation kind, const Tensor& grad_out,
                                  const Tensor& cached_output) {
  if (!grad_out.same_shape(cached_output))
    throw ShapeError("activation_backward: grad " + shape_string(grad_out.shape()) +
                     " vs output " + shape_string(cached_output.shape()));
  Tensor grad_in = grad_out;
  switch (kind) {
    case Activation::Relu:
      for (std::size_t i = 0; i < grad_in.size(); ++i)
        if (cached_output[i] <= 0.0) grad_in[i] = 0.0;
      break;
    case Activation::Tanh:
      for (std::size_t i = 0; i < grad_in.size(); ++i)
        grad_in[i] *= 1.0 - cached_output[i] * cached_output[i];
      break;
    case Activation::Sigmoid:
      for (std::size_t i = 0; i < grad_in.size(); ++i)
        grad_in[i] *= cached_output[i] * (1.0 - cached_output[i]);
      break;
    case Activation::Identity:
      break;
  }
  return grad_in;
}

/// Row-wise softmax with max subtraction.
inline Tensor softmax_forward(const Tensor& logits) {
  if (logits.rank() != 2) throw ShapeError("softmax_forward: need 2-D logits");
  Tensor out = logits;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    double m = out(r, 0);
    for (std::size_t c = 1; c < out.cols(); ++c) m = std::max(m, out(r, c));
    double sum = 0.0;
    for (std::size_t c = 0; c < out.cols(); ++c) {
      out(r, c) = std::exp(out(r, c) - m);
      sum += out(r, c);
    }
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) /= sum;
  }
  return out;
}

/// grad_logits = y .* (g - <g, y>) per row, with y the cached softmax output.
inline Tensor softmax_backward(const Tensor& grad_out, const Tensor& cached_output) {
  if (!grad_out.same_shape(cached_output))
    throw ShapeError("softmax_backward: grad " + shape_string(grad_out.shape()) +
                     " vs output " + shape_string(cached_output.shape()));
  Tensor grad_in = grad_out;
  for (std::size_t r = 0; r < grad_in.rows(); ++r) {
    double dot = 0.0;
    for (std::size_t c = 0; c < grad_in.cols(); ++c)
      dot += grad_out(r, c) * cached_output(r, c);
    for (std::size_t c = 0; c < grad_in.cols(); ++c)
      grad_in(r, c) = cached_output(r, c) * (grad_out(r, c) - dot);
  }
  return grad_in;
}

}  // namespace mixae
