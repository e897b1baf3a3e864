#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "mixae/tensor.hpp"

namespace mixae {

enum class ReconLoss { Mse, Bce };

inline ReconLoss recon_loss_from_string(const std::string& s) {
  if (s == "mse") return ReconLoss::Mse;
  if (s == "bce") return ReconLoss::Bce;
  throw ConfigError("unsupported reconstruction loss kind: " + s);
}

inline std::string to_string(ReconLoss k) {
  return k == ReconLoss::Mse ? "mse" : "bce";
}

constexpr double kBceEps = 1e-7;

struct LossWeights {
  double alpha = 1.0;
  double beta = 1.0;
};

struct LossBreakdown {
  double weighted_reconstruction = 0.0;
  double sample_entropy_mean = 0.0;
  double batch_entropy = 0.0;
  double total = 0.0;
  LossWeights weights;
};

inline void require_simplex_rows(const Tensor& p, double tol = 1e-5) {
  for (std::size_t r = 0; r < p.rows(); ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < p.cols(); ++c) {
      if (p(r, c) < -tol)
        throw InputError("assignment row " + std::to_string(r) + " has negative entry");
      sum += p(r, c);
    }
    if (std::abs(sum - 1.0) > tol)
      throw InputError("assignment row " + std::to_string(r) + " sums to " +
                       std::to_string(sum));
  }
}

/// Per-sample reconstruction loss, averaged over features.
inline Tensor reconstruction_loss(const Tensor& x, const Tensor& x_tilde, ReconLoss kind) {
  if (!x.same_shape(x_tilde))
    throw ShapeError("reconstruction_loss: " + shape_string(x.shape()) + " vs " +
                     shape_string(x_tilde.shape()));
  std::size_t batch = x.rows(), feats = x.cols();
  Tensor out({batch});
  for (std::size_t b = 0; b < batch; ++b) {
    double acc = 0.0;
    if (kind == ReconLoss::Mse) {
      for (std::size_t c = 0; c < feats; ++c) {
        double d = x(b, c) - x_tilde(b, c);
        acc += d * d;
      }
    } else {
      for (std::size_t c = 0; c < feats; ++c) {
        double t = x(b, c);
        if (t < 0.0 || t > 1.0)
          throw InputError("bce target outside [0,1] at row " + std::to_string(b));
        double y = std::clamp(x_tilde(b, c), kBceEps, 1.0 - kBceEps);
        acc -= t * std::log(y) + (1.0 - t) * std::log(1.0 - y);
      }
    }
    out[b] = acc / static_cast<double>(feats);
  }
  return out;
}

/// Mean over the batch of sum_k p_k * loss_k.
inline double weighted_reconstruction(const Tensor& per_ae_losses, const Tensor& p) {
  if (!per_ae_losses.same_shape(p))
    throw ShapeError("weighted_reconstruction: losses " + shape_string(per_ae_losses.shape()) +
                     " vs p " + shape_string(p.shape()));
  require_simplex_rows(p);
  double total = 0.0;
  for (std::size_t b = 0; b < p.rows(); ++b)
    for (std::size_t k = 0; k < p.cols(); ++k) total += p(b, k) * per_ae_losses(b, k);
  return total / static_cast<double>(p.rows());
}

inline double entropy_of(const double* p, std::size_t k) {
  double h = 0.0;
  for (std::size_t i = 0; i < k; ++i)
    if (p[i] > 0.0) h -= p[i] * std::log(p[i]);
  return h;
}

/// -sum_k p_k log p_k per row, with 0 log 0 := 0.
inline Tensor sample_entropy(const Tensor& p) {
  require_simplex_rows(p);
  Tensor out({p.rows()});
  for (std::size_t b = 0; b < p.rows(); ++b) out[b] = entropy_of(p.data() + b * p.cols(), p.cols());
  return out;
}

inline std::vector<double> mean_assignment(const Tensor& p) {
  std::vector<double> mean(p.cols(), 0.0);
  for (std::size_t b = 0; b < p.rows(); ++b)
    for (std::size_t k = 0; k < p.cols(); ++k) mean[k] += p(b, k);
  for (double& v : mean) v /= static_cast<double>(p.rows());
  return mean;
}

/// Entropy of the column-mean assignment vector.
inline double batch_entropy(const Tensor& p) {
  require_simplex_rows(p);
  std::vector<double> mean = mean_assignment(p);
  return entropy_of(mean.data(), mean.size());
}

struct TotalLossResult {
  LossBreakdown breakdown;
  Tensor grad_p;                      // [B x K]
  std::vector<Tensor> grad_recon;     // K tensors [B x n]
};

/// Composite objective with its gradients w.r.t. the assignment matrix and
/// every reconstruction. Gradients feed the model backward pass.
/// `couple_recon_to_assignments` controls whether the reconstruction term
/// contributes to the assignment gradient (the default; turning it off cuts
/// the reconstruction path into the assignment network).
inline TotalLossResult total_loss(const Tensor& x, const std::vector<Tensor>& reconstructions,
                                  const Tensor& p, ReconLoss kind, const LossWeights& weights,
                                  bool couple_recon_to_assignments = true) {
  std::size_t batch = x.rows(), feats = x.cols(), num_ae = reconstructions.size();
  if (p.rows() != batch || p.cols() != num_ae)
    throw ShapeError("total_loss: p " + shape_string(p.shape()) + " vs batch " +
                     std::to_string(batch) + ", K " + std::to_string(num_ae));
  require_simplex_rows(p);

  Tensor per_ae({batch, num_ae});
  for (std::size_t k = 0; k < num_ae; ++k) {
    Tensor col = reconstruction_loss(x, reconstructions[k], kind);
    for (std::size_t b = 0; b < batch; ++b) per_ae(b, k) = col[b];
  }

  LossBreakdown bd;
  bd.weights = weights;
  bd.weighted_reconstruction = weighted_reconstruction(per_ae, p);
  Tensor se = sample_entropy(p);
  for (std::size_t b = 0; b < batch; ++b) bd.sample_entropy_mean += se[b];
  bd.sample_entropy_mean /= static_cast<double>(batch);
  bd.batch_entropy = batch_entropy(p);
  bd.total = bd.weighted_reconstruction + weights.alpha * bd.sample_entropy_mean -
             weights.beta * bd.batch_entropy;
  if (!std::isfinite(bd.total))
    throw NumericalError("total_loss non-finite: recon=" +
                         std::to_string(bd.weighted_reconstruction) + " sample_entropy=" +
                         std::to_string(bd.sample_entropy_mean) + " batch_entropy=" +
                         std::to_string(bd.batch_entropy));

  TotalLossResult result;
  result.breakdown = bd;

  double inv_b = 1.0 / static_cast<double>(batch);
  double inv_n = 1.0 / static_cast<double>(feats);
  std::vector<double> pbar = mean_assignment(p);

  // dJ/dp_bk = (1/B) [ L_bk + alpha (-log p_bk - 1) - beta (-log pbar_k - 1) ]
  result.grad_p = Tensor({batch, num_ae});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t k = 0; k < num_ae; ++k) {
      double pk = std::max(p(b, k), 1e-300);
      double pb = std::max(pbar[k], 1e-300);
      double recon_term = couple_recon_to_assignments ? per_ae(b, k) : 0.0;
      result.grad_p(b, k) = inv_b * (recon_term + weights.alpha * (-std::log(pk) - 1.0) -
                                     weights.beta * (-std::log(pb) - 1.0));
    }
  }

  result.grad_recon.reserve(num_ae);
  for (std::size_t k = 0; k < num_ae; ++k) {
    Tensor g({batch, feats});
    const Tensor& xt = reconstructions[k];
    for (std::size_t b = 0; b < batch; ++b) {
      double w = inv_b * p(b, k) * inv_n;
      for (std::size_t c = 0; c < feats; ++c) {
        if (kind == ReconLoss::Mse) {
          g(b, c) = w * 2.0 * (xt(b, c) - x(b, c));
        } else {
          double y = std::clamp(xt(b, c), kBceEps, 1.0 - kBceEps);
          g(b, c) = w * (y - x(b, c)) / (y * (1.0 - y));
        }
      }
    }
    result.grad_recon.push_back(std::move(g));
  }
  return result;
}

struct ScheduleConfig {
  int warmup_epochs = 5;       // epochs 0..warmup-1 keep alpha0/beta0
  double alpha0 = 1.0;
  double beta0 = 1.0;
  // When true, alpha0/beta0 are rescaled once, before training, so the
  // entropy terms start about warmup_boost times the reconstruction term.
  bool auto_warmup = true;
  double warmup_boost = 10.0;
  double clip_lo = 1e-3;
  double clip_hi = 1e3;
  double eps = 1e-12;
};

/// Term-equalizing update: alpha <- R/S, beta <- R/B, clipped. Falls back to
/// the current weights when an average is non-positive.
inline LossWeights update_weights(double mean_recon, double mean_sample_entropy,
                                  double mean_batch_entropy, const LossWeights& current,
                                  const ScheduleConfig& cfg) {
  LossWeights next = current;
  if (mean_recon > 0.0 && mean_sample_entropy > cfg.eps)
    next.alpha = std::clamp(mean_recon / mean_sample_entropy, cfg.clip_lo, cfg.clip_hi);
  if (mean_recon > 0.0 && mean_batch_entropy > cfg.eps)
    next.beta = std::clamp(mean_recon / mean_batch_entropy, cfg.clip_lo, cfg.clip_hi);
  return next;
}

}  // namespace mixae
