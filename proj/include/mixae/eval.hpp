#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "mixae/data.hpp"
#include "mixae/model.hpp"
#include "mixae/objective.hpp"
#include "mixae/tensor.hpp"

namespace mixae {

/// Minimum-cost assignment on a square matrix (Jonker-Volgenant style
/// shortest augmenting paths, O(n^3)). Returns row -> column.
inline std::vector<int> hungarian(const std::vector<std::vector<double>>& cost) {
  int n = static_cast<int>(cost.size());
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, std::numeric_limits<double>::infinity());
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      int i0 = p[j0], j1 = 0;
      double delta = std::numeric_limits<double>::infinity();
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] > 0) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

/// Per-row argmax; ties break to the lowest index.
inline std::vector<int> hard_assign(const Tensor& p) {
  require_simplex_rows(p);
  std::vector<int> out(p.rows());
  for (std::size_t r = 0; r < p.rows(); ++r) {
    int best = 0;
    for (std::size_t c = 1; c < p.cols(); ++c)
      if (p(r, c) > p(r, best)) best = static_cast<int>(c);
    out[r] = best;
  }
  return out;
}

struct ContingencyTable {
  std::vector<std::vector<long>> counts;  // [K_pred][K_true]
  long total = 0;

  static ContingencyTable build(const std::vector<int>& pred, const std::vector<int>& truth,
                                int k_pred, int k_true) {
    if (pred.empty() || pred.size() != truth.size())
      throw InputError("contingency: need equal non-empty label vectors");
    ContingencyTable t;
    t.counts.assign(k_pred, std::vector<long>(k_true, 0));
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (pred[i] < 0 || pred[i] >= k_pred || truth[i] < 0 || truth[i] >= k_true)
        throw InputError("contingency: label out of range at sample " + std::to_string(i));
      t.counts[pred[i]][truth[i]] += 1;
      t.total += 1;
    }
    return t;
  }
};

struct AccuracyResult {
  double acc = 0.0;
  std::vector<int> matching;  // cluster -> label, -1 for unmatched padding
};

/// Unsupervised clustering accuracy: best one-to-one cluster/label matching,
/// solved by the Hungarian algorithm on the negated contingency table (padded
/// square with zero-benefit entries when K_pred != K_true).
inline AccuracyResult accuracy(const std::vector<int>& pred, const std::vector<int>& truth,
                               int k_pred, int k_true) {
  ContingencyTable table = ContingencyTable::build(pred, truth, k_pred, k_true);
  int m = std::max(k_pred, k_true);
  std::vector<std::vector<double>> cost(m, std::vector<double>(m, 0.0));
  for (int i = 0; i < k_pred; ++i)
    for (int j = 0; j < k_true; ++j) cost[i][j] = -static_cast<double>(table.counts[i][j]);
  std::vector<int> assign = hungarian(cost);
  AccuracyResult result;
  result.matching.assign(k_pred, -1);
  long matched = 0;
  for (int i = 0; i < k_pred; ++i) {
    int j = assign[i];
    if (j >= 0 && j < k_true) {
      result.matching[i] = j;
      matched += table.counts[i][j];
    }
  }
  result.acc = static_cast<double>(matched) / static_cast<double>(table.total);
  return result;
}

/// Fraction of samples whose true label is the majority label of their
/// cluster.
inline double purity(const std::vector<int>& pred, const std::vector<int>& truth) {
  int k_pred = *std::max_element(pred.begin(), pred.end()) + 1;
  int k_true = *std::max_element(truth.begin(), truth.end()) + 1;
  ContingencyTable table = ContingencyTable::build(pred, truth, k_pred, k_true);
  long correct = 0;
  for (const auto& row : table.counts)
    correct += *std::max_element(row.begin(), row.end());
  return static_cast<double>(correct) / static_cast<double>(table.total);
}

struct EntropyReport {
  double batch_entropy_global = 0.0;
  double mean_sample_entropy = 0.0;
};

/// Dataset-wide batch entropy (entropy of the mean assignment) and the mean
/// per-sample entropy.
inline EntropyReport entropy_report(const Tensor& p) {
  EntropyReport r;
  r.batch_entropy_global = batch_entropy(p);
  Tensor se = sample_entropy(p);
  for (std::size_t i = 0; i < se.size(); ++i) r.mean_sample_entropy += se[i];
  r.mean_sample_entropy /= static_cast<double>(se.size());
  return r;
}

/// X = (1/N) sum_i p_i p_i^T - pbar pbar^T
inline Tensor assignment_covariance(const Tensor& p) {
  require_simplex_rows(p);
  std::size_t n = p.rows(), k = p.cols();
  std::vector<double> mean = mean_assignment(p);
  Tensor cov({k, k});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < k; ++b) cov(a, b) += p(i, a) * p(i, b);
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b)
      cov(a, b) = cov(a, b) / static_cast<double>(n) - mean[a] * mean[b];
  return cov;
}

/// One-hot rows from integer labels; the ground-truth side of the covariance
/// comparison.
inline Tensor one_hot(const std::vector<int>& labels, int k) {
  Tensor p({labels.size(), static_cast<std::size_t>(k)});
  for (std::size_t i = 0; i < labels.size(); ++i) p(i, labels[i]) = 1.0;
  return p;
}

struct KmeansResult {
  std::vector<int> labels;
  Tensor centroids;  // [K x n]
  double inertia = 0.0;
};

/// Lloyd's algorithm with k-means++ seeding; best of `restarts` by inertia.
inline KmeansResult kmeans_baseline(const Tensor& features, std::size_t k, std::uint64_t seed,
                                    int restarts = 5, int max_iters = 100) {
  std::size_t n = features.rows(), d = features.cols();
  if (k == 0 || k > n) throw ConfigError("kmeans: K must be in [1, N]");
  auto dist2 = [&](std::size_t row, const double* c) {
    double acc = 0.0;
    const double* x = features.data() + row * d;
    for (std::size_t j = 0; j < d; ++j) {
      double diff = x[j] - c[j];
      acc += diff * diff;
    }
    return acc;
  };

  KmeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int restart = 0; restart < restarts; ++restart) {
    SeededRng rng(mix_seed(seed, static_cast<std::uint64_t>(restart)));
    Tensor centroids({k, d});
    // k-means++ seeding
    std::size_t first = rng.below(n);
    for (std::size_t j = 0; j < d; ++j) centroids(0, j) = features(first, j);
    std::vector<double> min_d2(n);
    for (std::size_t c = 1; c < k; ++c) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double m = std::numeric_limits<double>::infinity();
        for (std::size_t cc = 0; cc < c; ++cc)
          m = std::min(m, dist2(i, centroids.data() + cc * d));
        min_d2[i] = m;
        total += m;
      }
      std::size_t chosen = 0;
      if (total > 0.0) {
        double target = rng.uniform() * total, acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          acc += min_d2[i];
          if (acc >= target) {
            chosen = i;
            break;
          }
        }
      } else {
        chosen = rng.below(n);
      }
      for (std::size_t j = 0; j < d; ++j) centroids(c, j) = features(chosen, j);
    }

    std::vector<int> labels(n, 0);
    double inertia = 0.0;
    for (int iter = 0; iter < max_iters; ++iter) {
      bool changed = false;
      inertia = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        int arg = 0;
        double m = dist2(i, centroids.data());
        for (std::size_t c = 1; c < k; ++c) {
          double cur = dist2(i, centroids.data() + c * d);
          if (cur < m) {
            m = cur;
            arg = static_cast<int>(c);
          }
        }
        if (labels[i] != arg) {
          labels[i] = arg;
          changed = true;
        }
        inertia += m;
      }
      Tensor sums({k, d});
      std::vector<long> counts(k, 0);
      for (std::size_t i = 0; i < n; ++i) {
        counts[labels[i]] += 1;
        for (std::size_t j = 0; j < d; ++j) sums(labels[i], j) += features(i, j);
      }
      for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] == 0) {
          // re-seed an empty centroid at the point farthest from its centroid
          std::size_t far = 0;
          double worst = -1.0;
          for (std::size_t i = 0; i < n; ++i) {
            double cur = dist2(i, centroids.data() + labels[i] * d);
            if (cur > worst) {
              worst = cur;
              far = i;
            }
          }
          for (std::size_t j = 0; j < d; ++j) centroids(c, j) = features(far, j);
          changed = true;
        } else {
          for (std::size_t j = 0; j < d; ++j)
            centroids(c, j) = sums(c, j) / static_cast<double>(counts[c]);
        }
      }
      if (!changed && iter > 0) break;
    }
    if (inertia < best.inertia) {
      best.labels = std::move(labels);
      best.centroids = std::move(centroids);
      best.inertia = inertia;
    }
  }
  return best;
}

struct EvalReport {
  double acc = std::nan("");
  double purity = std::nan("");
  std::vector<int> matching;
  double batch_entropy_global = 0.0;
  double mean_sample_entropy = 0.0;
  Tensor covariance;                  // [K x K]
  std::vector<long> cluster_sizes;    // per predicted cluster
  ContingencyTable contingency;       // empty when unlabeled
  std::vector<int> predicted;
};

/// Dataset-wide assignment matrix, computed in chunks to bound memory.
inline Tensor all_assignments(const MixaeParams& params, const ModelConfig& config,
                              const Tensor& features, std::size_t chunk = 1024) {
  std::size_t n = features.rows();
  Tensor p({n, config.num_autoencoders});
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < n; start += chunk) {
    std::size_t stop = std::min(n, start + chunk);
    idx.resize(stop - start);
    for (std::size_t i = start; i < stop; ++i) idx[i - start] = i;
    ForwardOutput fout = forward(params, config, features.gather_rows(idx), false);
    for (std::size_t i = start; i < stop; ++i)
      for (std::size_t c = 0; c < config.num_autoencoders; ++c)
        p(i, c) = fout.assignments(i - start, c);
  }
  return p;
}

inline EvalReport evaluate(const MixaeParams& params, const ModelConfig& config,
                           const Dataset& dataset) {
  Tensor p = all_assignments(params, config, dataset.features);
  EvalReport report;
  report.predicted = hard_assign(p);
  EntropyReport er = entropy_report(p);
  report.batch_entropy_global = er.batch_entropy_global;
  report.mean_sample_entropy = er.mean_sample_entropy;
  report.covariance = assignment_covariance(p);
  report.cluster_sizes.assign(config.num_autoencoders, 0);
  for (int c : report.predicted) report.cluster_sizes[c] += 1;
  if (dataset.has_labels()) {
    AccuracyResult ar = accuracy(report.predicted, dataset.labels,
                                 static_cast<int>(config.num_autoencoders), dataset.class_count);
    report.acc = ar.acc;
    report.matching = ar.matching;
    report.purity = purity(report.predicted, dataset.labels);
    report.contingency =
        ContingencyTable::build(report.predicted, dataset.labels,
                                static_cast<int>(config.num_autoencoders), dataset.class_count);
  }
  return report;
}

/// CSV of concatenated latents plus predicted (and, when known, true) labels.
inline void export_latents(const MixaeParams& params, const ModelConfig& config,
                           const Dataset& dataset, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  std::size_t dk = config.latent_dim * config.num_autoencoders;
  for (std::size_t j = 0; j < dk; ++j) out << "z" << j << ",";
  out << "pred";
  if (dataset.has_labels()) out << ",label";
  out << "\n";

  std::size_t n = dataset.features.rows();
  std::size_t chunk = 1024;
  std::vector<std::size_t> idx;
  char buf[32];
  for (std::size_t start = 0; start < n; start += chunk) {
    std::size_t stop = std::min(n, start + chunk);
    idx.resize(stop - start);
    for (std::size_t i = start; i < stop; ++i) idx[i - start] = i;
    ForwardOutput fout = forward(params, config, dataset.features.gather_rows(idx), false);
    std::vector<int> pred = hard_assign(fout.assignments);
    for (std::size_t i = 0; i < stop - start; ++i) {
      for (std::size_t j = 0; j < dk; ++j) {
        std::snprintf(buf, sizeof(buf), "%.12g", fout.latent_concat(i, j));
        out << buf << ",";
      }
      out << pred[i];
      if (dataset.has_labels()) out << "," << dataset.labels[start + i];
      out << "\n";
    }
  }
  if (!out) throw IoError("write failure on " + path);
}

inline void write_matrix_csv(const Tensor& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  char buf[32];
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.12g", m(r, c));
      out << buf << (c + 1 == m.cols() ? "" : ",");
    }
    out << "\n";
  }
}

}  // namespace mixae
