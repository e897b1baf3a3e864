#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <ostream>
#include <vector>

#include "mixae/data.hpp"
#include "mixae/model.hpp"
#include "mixae/objective.hpp"

namespace mixae {

struct TrainConfig {
  std::size_t batch_size = 256;
  int epochs = 100;
  double lr_init = 0.001;
  double lr_decay_factor = 0.9;
  int lr_decay_every = 10;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  ScheduleConfig schedule;
  int checkpoint_every = 0;  // 0 disables periodic checkpoints
  // Per-term scheduling switches; a frozen term keeps its initial weight.
  bool dynamic_alpha = true;
  bool dynamic_beta = true;
  // When false, the assignment-gradient contribution of the reconstruction
  // term is cut, so the MAN learns from the entropy terms only.
  bool couple_recon_to_man = true;

  void validate() const {
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (epochs <= 0) throw ConfigError("epochs must be positive");
    if (lr_init <= 0.0) throw ConfigError("lr_init must be positive");
    if (lr_decay_every <= 0) throw ConfigError("lr_decay_every must be positive");
  }
};

/// lr_init * decay^floor(epoch / every)
inline double learning_rate(int epoch, const TrainConfig& cfg) {
  if (epoch < 0) throw ConfigError("epoch must be non-negative");
  return cfg.lr_init * std::pow(cfg.lr_decay_factor, epoch / cfg.lr_decay_every);
}

struct AdamState {
  MixaeParams first_moment;
  MixaeParams second_moment;
  long step = 0;

  static AdamState init(const MixaeParams& params) {
    return {MixaeParams::zeros_like(params), MixaeParams::zeros_like(params), 0};
  }
};

/// Bias-corrected ADAM update, in place.
inline void adam_step(MixaeParams& params, const MixaeParams& grads, AdamState& state,
                      double lr, const TrainConfig& cfg) {
  state.step += 1;
  double bc1 = 1.0 - std::pow(cfg.adam_beta1, state.step);
  double bc2 = 1.0 - std::pow(cfg.adam_beta2, state.step);
  std::vector<const Tensor*> g;
  for_each_tensor(const_cast<MixaeParams&>(grads), [&g](Tensor& t) { g.push_back(&t); });
  std::vector<Tensor*> p, m, v;
  for_each_tensor(params, [&p](Tensor& t) { p.push_back(&t); });
  for_each_tensor(state.first_moment, [&m](Tensor& t) { m.push_back(&t); });
  for_each_tensor(state.second_moment, [&v](Tensor& t) { v.push_back(&t); });
  for (std::size_t t = 0; t < p.size(); ++t) {
    Tensor& pt = *p[t];
    const Tensor& gt = *g[t];
    Tensor& mt = *m[t];
    Tensor& vt = *v[t];
    if (!pt.same_shape(gt))
      throw ShapeError("adam_step: parameter " + shape_string(pt.shape()) + " vs gradient " +
                       shape_string(gt.shape()));
    for (std::size_t i = 0; i < pt.size(); ++i) {
      double gi = gt[i];
      if (!std::isfinite(gi))
        throw NumericalError("adam_step: non-finite gradient in tensor " + std::to_string(t) +
                             " at element " + std::to_string(i));
      mt[i] = cfg.adam_beta1 * mt[i] + (1.0 - cfg.adam_beta1) * gi;
      vt[i] = cfg.adam_beta2 * vt[i] + (1.0 - cfg.adam_beta2) * gi * gi;
      double mhat = mt[i] / bc1;
      double vhat = vt[i] / bc2;
      pt[i] -= lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
    }
  }
}

struct EpochLog {
  int epoch = 0;
  LossBreakdown mean;  // epoch means of the loss terms; weights at epoch end
  double lr = 0.0;
  double wall_seconds = 0.0;
  double acc = std::nan("");  // monitoring metric; NaN when not monitored
};

inline void write_epoch_csv_header(std::ostream& os) {
  os << "epoch,recon,sample_entropy,batch_entropy,total,alpha,beta,lr,acc\n";
}

inline void write_epoch_csv_row(std::ostream& os, const EpochLog& log) {
  char buf[320];
  std::snprintf(buf, sizeof(buf), "%d,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,",
                log.epoch, log.mean.weighted_reconstruction, log.mean.sample_entropy_mean,
                log.mean.batch_entropy, log.mean.total, log.mean.weights.alpha,
                log.mean.weights.beta, log.lr);
  os << buf;
  if (std::isnan(log.acc))
    os << "\n";
  else {
    std::snprintf(buf, sizeof(buf), "%.12g\n", log.acc);
    os << buf;
  }
}

struct TrainResult {
  MixaeParams params;
  std::vector<EpochLog> logs;
  LossWeights final_weights;
};

using EpochCallback = std::function<void(const EpochLog&, const MixaeParams&)>;
using MonitorFn = std::function<double(const MixaeParams&)>;

/// Full training loop: seeded minibatch shuffling, forward / objective /
/// backward / ADAM per batch, dynamic loss-weight schedule at epoch ends.
/// `monitor`, when set, computes a metric from the current parameters after
/// each epoch; it never feeds back into training.
inline TrainResult train(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                         const Tensor& features, const EpochCallback& on_epoch = {},
                         const MonitorFn& monitor = {}) {
  model_cfg.validate();
  train_cfg.validate();
  if (features.rows() < train_cfg.batch_size)
    throw ConfigError("batch_size exceeds dataset size");

  SeededRng init_rng(train_cfg.seed);
  MixaeParams params = MixaeParams::init(model_cfg, init_rng);
  AdamState adam = AdamState::init(params);

  LossWeights weights{train_cfg.schedule.alpha0, train_cfg.schedule.beta0};

  // One probe batch fixes the warm-up scale of the entropy weights so they
  // start about warmup_boost times the reconstruction term.
  if (train_cfg.schedule.auto_warmup) {
    auto first = minibatches(features.rows(), train_cfg.batch_size, train_cfg.seed, 0).front();
    Tensor x = features.gather_rows(first);
    ForwardOutput fout = forward(params, model_cfg, x, false);
    TotalLossResult probe = total_loss(x, fout.reconstructions, fout.assignments,
                                       model_cfg.reconstruction_loss, LossWeights{0.0, 0.0});
    double r = probe.breakdown.weighted_reconstruction;
    double s = probe.breakdown.sample_entropy_mean;
    double b = probe.breakdown.batch_entropy;
    const ScheduleConfig& sc = train_cfg.schedule;
    if (train_cfg.dynamic_alpha && r > 0.0 && s > sc.eps)
      weights.alpha = std::clamp(sc.warmup_boost * r / s, sc.clip_lo, sc.clip_hi);
    if (train_cfg.dynamic_beta && r > 0.0 && b > sc.eps)
      weights.beta = std::clamp(sc.warmup_boost * r / b, sc.clip_lo, sc.clip_hi);
  }

  TrainResult result;
  for (int epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    double lr = learning_rate(epoch, train_cfg);
    auto batches = minibatches(features.rows(), train_cfg.batch_size, train_cfg.seed,
                               static_cast<std::uint64_t>(epoch));
    double sum_recon = 0.0, sum_se = 0.0, sum_be = 0.0, sum_total = 0.0;
    for (const auto& batch : batches) {
      Tensor x = features.gather_rows(batch);
      ForwardOutput fout = forward(params, model_cfg, x);
      TotalLossResult loss = total_loss(x, fout.reconstructions, fout.assignments,
                                        model_cfg.reconstruction_loss, weights,
                                        train_cfg.couple_recon_to_man);
      MixaeParams grads = backward(params, model_cfg, fout, loss.grad_p, loss.grad_recon);
      adam_step(params, grads, adam, lr, train_cfg);
      sum_recon += loss.breakdown.weighted_reconstruction;
      sum_se += loss.breakdown.sample_entropy_mean;
      sum_be += loss.breakdown.batch_entropy;
      sum_total += loss.breakdown.total;
    }
    double nb = static_cast<double>(batches.size());

    EpochLog log;
    log.epoch = epoch;
    log.mean.weighted_reconstruction = sum_recon / nb;
    log.mean.sample_entropy_mean = sum_se / nb;
    log.mean.batch_entropy = sum_be / nb;
    log.mean.total = sum_total / nb;
    log.lr = lr;

    // Term-equalizing weight update from this epoch's mean magnitudes.
    if (epoch + 1 >= train_cfg.schedule.warmup_epochs &&
        (train_cfg.dynamic_alpha || train_cfg.dynamic_beta)) {
      LossWeights next = update_weights(log.mean.weighted_reconstruction,
                                        log.mean.sample_entropy_mean, log.mean.batch_entropy,
                                        weights, train_cfg.schedule);
      if (train_cfg.dynamic_alpha) weights.alpha = next.alpha;
      if (train_cfg.dynamic_beta) weights.beta = next.beta;
    }
    log.mean.weights = weights;

    if (monitor) log.acc = monitor(params);
    log.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.logs.push_back(log);
    if (on_epoch) on_epoch(log, params);
  }
  result.params = std::move(params);
  result.final_weights = weights;
  return result;
}

}  // namespace mixae
