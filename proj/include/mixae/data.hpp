#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "mixae/tensor.hpp"

namespace mixae {

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Feature matrix plus optional ground-truth labels. Labels exist for
/// evaluation only; the training loop receives a label-free view.
struct Dataset {
  Tensor features;          // [N x n]
  std::vector<int> labels;  // empty when unlabeled
  std::string name;
  int class_count = 0;

  bool has_labels() const { return !labels.empty(); }
  std::size_t size() const { return features.rows(); }
  std::size_t dim() const { return features.cols(); }

  void validate() const {
    if (features.rank() != 2 || features.rows() == 0)
      throw InputError("dataset needs a non-empty 2-D feature matrix");
    if (!features.all_finite()) throw InputError("dataset features contain non-finite values");
    if (has_labels()) {
      if (labels.size() != features.rows())
        throw InputError("label count does not match sample count");
      for (int l : labels)
        if (l < 0 || l >= class_count)
          throw InputError("label " + std::to_string(l) + " outside [0, " +
                           std::to_string(class_count) + ")");
    }
  }
};

namespace detail {

inline std::uint32_t read_be_u32(std::istream& in, const std::string& path,
                                 std::size_t offset) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  if (!in)
    throw FormatError(path + ": truncated at byte offset " + std::to_string(offset));
  return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
         (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

}  // namespace detail

/// MNIST-style IDX pair. Pixels are flattened row-major and scaled to [0,1].
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw IoError("cannot open " + images_path);
  std::uint32_t magic = detail::read_be_u32(img, images_path, 0);
  if (magic != 0x00000803)
    throw FormatError(images_path + ": bad image magic at byte offset 0");
  std::uint32_t count = detail::read_be_u32(img, images_path, 4);
  std::uint32_t rows = detail::read_be_u32(img, images_path, 8);
  std::uint32_t cols = detail::read_be_u32(img, images_path, 12);
  std::size_t pixels = std::size_t(count) * rows * cols;
  std::vector<unsigned char> raw(pixels);
  img.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(pixels));
  if (static_cast<std::size_t>(img.gcount()) != pixels)
    throw FormatError(images_path + ": truncated at byte offset " +
                      std::to_string(16 + img.gcount()));

  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw IoError("cannot open " + labels_path);
  std::uint32_t lmagic = detail::read_be_u32(lab, labels_path, 0);
  if (lmagic != 0x00000801)
    throw FormatError(labels_path + ": bad label magic at byte offset 0");
  std::uint32_t lcount = detail::read_be_u32(lab, labels_path, 4);
  if (lcount != count)
    throw FormatError(labels_path + ": label count " + std::to_string(lcount) +
                      " does not match image count " + std::to_string(count));
  std::vector<unsigned char> lraw(lcount);
  lab.read(reinterpret_cast<char*>(lraw.data()), static_cast<std::streamsize>(lcount));
  if (static_cast<std::size_t>(lab.gcount()) != lcount)
    throw FormatError(labels_path + ": truncated at byte offset " +
                      std::to_string(8 + lab.gcount()));

  Dataset ds;
  ds.features = Tensor({count, std::size_t(rows) * cols});
  for (std::size_t i = 0; i < pixels; ++i) ds.features[i] = raw[i] / 255.0;
  ds.labels.assign(lraw.begin(), lraw.end());
  int max_label = 0;
  for (int l : ds.labels) max_label = std::max(max_label, l);
  ds.class_count = max_label + 1;
  ds.name = "idx";
  ds.validate();
  return ds;
}

enum class Normalization { None, MinMax, ZScore };

inline Normalization normalization_from_string(const std::string& s) {
  if (s == "none") return Normalization::None;
  if (s == "minmax") return Normalization::MinMax;
  if (s == "zscore") return Normalization::ZScore;
  throw ConfigError("unsupported normalization: " + s);
}

inline void normalize_features(Tensor& features, Normalization kind) {
  if (kind == Normalization::None) return;
  std::size_t n = features.rows(), d = features.cols();
  for (std::size_t c = 0; c < d; ++c) {
    if (kind == Normalization::MinMax) {
      double lo = features(0, c), hi = features(0, c);
      for (std::size_t r = 1; r < n; ++r) {
        lo = std::min(lo, features(r, c));
        hi = std::max(hi, features(r, c));
      }
      double span = hi - lo;
      for (std::size_t r = 0; r < n; ++r)
        features(r, c) = span > 0.0 ? (features(r, c) - lo) / span : 0.0;
    } else {
      double mean = 0.0;
      for (std::size_t r = 0; r < n; ++r) mean += features(r, c);
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        double dd = features(r, c) - mean;
        var += dd * dd;
      }
      double sd = std::sqrt(var / static_cast<double>(n));
      for (std::size_t r = 0; r < n; ++r)
        features(r, c) = sd > 0.0 ? (features(r, c) - mean) / sd : 0.0;
    }
  }
}

/// Dense numeric CSV. An optional first header row is skipped automatically
/// when its first cell is not numeric. `label_column` of -1 means unlabeled.
inline Dataset load_csv(const std::string& path, int label_column,
                        Normalization normalization) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::string line;
  std::size_t lineno = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> cells;
    std::size_t start = 0;
    bool numeric = true;
    while (start <= line.size()) {
      std::size_t comma = line.find(',', start);
      std::string cell = line.substr(start, comma == std::string::npos ? std::string::npos
                                                                       : comma - start);
      char* end = nullptr;
      double v = std::strtod(cell.c_str(), &end);
      while (end && *end == ' ') ++end;
      if (!end || *end != '\0' || end == cell.c_str()) {
        numeric = false;
        break;
      }
      cells.push_back(v);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (!numeric) {
      if (lineno == 1) continue;  // header row
      throw FormatError(path + ": non-numeric cell at row " + std::to_string(lineno));
    }
    if (width == 0) width = cells.size();
    if (cells.size() != width)
      throw FormatError(path + ": ragged row " + std::to_string(lineno) + " (" +
                        std::to_string(cells.size()) + " cells, expected " +
                        std::to_string(width) + ")");
    rows.push_back(std::move(cells));
  }
  if (rows.empty()) throw FormatError(path + ": no data rows");
  if (label_column >= 0 && static_cast<std::size_t>(label_column) >= width)
    throw ConfigError("label column " + std::to_string(label_column) +
                      " out of range for width " + std::to_string(width));

  std::size_t feat_width = label_column >= 0 ? width - 1 : width;
  if (feat_width == 0) throw ConfigError("no feature columns left after label extraction");
  Dataset ds;
  ds.features = Tensor({rows.size(), feat_width});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::size_t c_out = 0;
    for (std::size_t c = 0; c < width; ++c) {
      if (label_column >= 0 && c == static_cast<std::size_t>(label_column)) {
        double lv = rows[r][c];
        int l = static_cast<int>(std::lround(lv));
        if (std::abs(lv - l) > 1e-9 || l < 0)
          throw FormatError(path + ": non-integer label at row " + std::to_string(r + 1));
        labels.push_back(l);
        continue;
      }
      ds.features(r, c_out++) = rows[r][c];
    }
  }
  normalize_features(ds.features, normalization);
  ds.labels = std::move(labels);
  if (ds.has_labels()) {
    int max_label = 0;
    for (int l : ds.labels) max_label = std::max(max_label, l);
    ds.class_count = max_label + 1;
  }
  ds.name = "csv";
  ds.validate();
  return ds;
}

struct SyntheticSpec {
  enum class Kind { GaussianBlobs, Curves, SwissRollMix };

  Kind kind = Kind::GaussianBlobs;
  std::vector<std::size_t> samples_per_cluster;  // one entry per cluster
  std::size_t ambient_dim = 10;
  double noise_sigma = 0.1;
  double spread = 10.0;  // blob center scale / manifold scale
  std::uint64_t seed = 0;

  std::size_t clusters() const { return samples_per_cluster.size(); }

  void validate() const {
    if (samples_per_cluster.empty()) throw ConfigError("synthetic spec needs clusters");
    for (std::size_t c : samples_per_cluster)
      if (c == 0) throw ConfigError("cluster sample counts must be positive");
    if (ambient_dim == 0) throw ConfigError("ambient_dim must be positive");
    if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be non-negative");
  }

  static Kind kind_from_string(const std::string& s) {
    if (s == "gaussian_blobs") return Kind::GaussianBlobs;
    if (s == "curves") return Kind::Curves;
    if (s == "swiss_roll_mix") return Kind::SwissRollMix;
    throw ConfigError("unsupported synthetic kind: " + s);
  }
};

namespace detail {

/// Fixed random linear embedding R^src -> R^dst with roughly orthonormal
/// columns (scaled Gaussian entries).
inline std::vector<double> random_embedding(std::size_t src, std::size_t dst, SeededRng& rng) {
  std::vector<double> m(src * dst);
  double scale = 1.0 / std::sqrt(static_cast<double>(src));
  for (double& v : m) v = rng.normal() * scale;
  return m;
}

inline void embed_point(const std::vector<double>& map, const double* src, std::size_t src_dim,
                        double* dst, std::size_t dst_dim) {
  for (std::size_t j = 0; j < dst_dim; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < src_dim; ++i) acc += map[i * dst_dim + j] * src[i];
    dst[j] = acc;
  }
}

}  // namespace detail

/// Deterministic labeled dataset from a union of simple manifolds.
inline Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  SeededRng rng(spec.seed);
  std::size_t total = 0;
  for (std::size_t c : spec.samples_per_cluster) total += c;
  std::size_t num_clusters = spec.clusters();
  std::size_t n = spec.ambient_dim;

  Dataset ds;
  ds.features = Tensor({total, n});
  ds.labels.reserve(total);
  ds.class_count = static_cast<int>(num_clusters);

  std::size_t row = 0;
  switch (spec.kind) {
    case SyntheticSpec::Kind::GaussianBlobs: {
      std::vector<std::vector<double>> centers(num_clusters, std::vector<double>(n));
      for (auto& c : centers)
        for (double& v : c) v = rng.normal() * spec.spread;
      for (std::size_t k = 0; k < num_clusters; ++k) {
        for (std::size_t i = 0; i < spec.samples_per_cluster[k]; ++i, ++row) {
          for (std::size_t j = 0; j < n; ++j)
            ds.features(row, j) = centers[k][j] + spec.noise_sigma * rng.normal();
          ds.labels.push_back(static_cast<int>(k));
        }
      }
      ds.name = "gaussian_blobs";
      break;
    }
    case SyntheticSpec::Kind::Curves: {
      // Long parallel sinusoid arcs, vertically offset by a small gap and
      // embedded through one fixed random linear map. The dominant variance
      // runs along the arcs, so centroid methods cut them lengthwise; the
      // offset identifies the cluster.
      std::vector<double> map = detail::random_embedding(2, n, rng);
      double amp = spec.spread / 10.0;
      double sep = spec.spread / 4.0;
      for (std::size_t k = 0; k < num_clusters; ++k) {
        for (std::size_t i = 0; i < spec.samples_per_cluster[k]; ++i, ++row) {
          double t = rng.uniform();
          double base[2] = {spec.spread * (2.0 * t - 1.0),
                            amp * std::sin(6.283185307179586 * t) +
                                sep * static_cast<double>(k)};
          detail::embed_point(map, base, 2, &ds.features(row, 0), n);
          for (std::size_t j = 0; j < n; ++j)
            ds.features(row, j) += spec.noise_sigma * rng.normal();
          ds.labels.push_back(static_cast<int>(k));
        }
      }
      ds.name = "curves";
      break;
    }
    case SyntheticSpec::Kind::SwissRollMix: {
      std::vector<double> map = detail::random_embedding(3, n, rng);
      for (std::size_t k = 0; k < num_clusters; ++k) {
        double phase = 2.0 * 3.141592653589793 * static_cast<double>(k) /
                       static_cast<double>(num_clusters);
        for (std::size_t i = 0; i < spec.samples_per_cluster[k]; ++i, ++row) {
          double t = 1.5 * 3.141592653589793 * (1.0 + 2.0 * rng.uniform());
          double h = spec.spread / 10.0 * rng.uniform();
          double c = std::cos(phase), s = std::sin(phase);
          double x0 = 0.1 * t * std::cos(t), z0 = 0.1 * t * std::sin(t);
          double base[3] = {c * x0 - s * z0, h, s * x0 + c * z0};
          detail::embed_point(map, base, 3, &ds.features(row, 0), n);
          for (std::size_t j = 0; j < n; ++j)
            ds.features(row, j) += spec.noise_sigma * rng.normal();
          ds.labels.push_back(static_cast<int>(k));
        }
      }
      ds.name = "swiss_roll_mix";
      break;
    }
  }
  ds.validate();
  return ds;
}

/// Seeded per-epoch permutation split into full minibatches; the incomplete
/// tail is dropped.
inline std::vector<std::vector<std::size_t>> minibatches(std::size_t n, std::size_t batch_size,
                                                         std::uint64_t seed,
                                                         std::uint64_t epoch) {
  if (batch_size == 0 || batch_size > n)
    throw ConfigError("batch size " + std::to_string(batch_size) +
                      " invalid for dataset of " + std::to_string(n));
  SeededRng rng(mix_seed(seed, epoch));
  std::vector<std::size_t> perm = rng.permutation(n);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start + batch_size <= n; start += batch_size)
    batches.emplace_back(perm.begin() + start, perm.begin() + start + batch_size);
  return batches;
}

}  // namespace mixae
