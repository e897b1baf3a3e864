// mixae command line: train / eval / generate / baseline.
//
// Exit codes: 0 success, 2 config error, 3 numerical divergence, 4 I/O error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "mixae/mixae.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace mixae;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitIo = 4;

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return j;
}

SyntheticSpec parse_synthetic(const json& j) {
  SyntheticSpec spec;
  spec.kind = SyntheticSpec::kind_from_string(j.value("kind", "gaussian_blobs"));
  spec.samples_per_cluster = j.at("samples_per_cluster").get<std::vector<std::size_t>>();
  spec.ambient_dim = j.value("ambient_dim", std::size_t{10});
  spec.noise_sigma = j.value("noise_sigma", 0.1);
  spec.spread = j.value("spread", 10.0);
  spec.seed = j.value("seed", std::uint64_t{0});
  spec.validate();
  return spec;
}

Dataset load_dataset(const json& j) try {
  std::string kind = j.at("kind").get<std::string>();
  Normalization norm = normalization_from_string(j.value("normalization", "none"));
  if (kind == "synthetic") {
    Dataset ds = generate_synthetic(parse_synthetic(j.at("synthetic")));
    normalize_features(ds.features, norm);
    return ds;
  }
  if (kind == "idx") {
    Dataset ds = load_idx(j.at("images").get<std::string>(), j.at("labels").get<std::string>());
    normalize_features(ds.features, norm);
    if (j.contains("subset")) {
      std::size_t n = j.at("subset").get<std::size_t>();
      std::uint64_t seed = j.value("subset_seed", std::uint64_t{0});
      if (n > ds.size()) throw ConfigError("subset larger than dataset");
      SeededRng rng(seed);
      std::vector<std::size_t> perm = rng.permutation(ds.size());
      perm.resize(n);
      Dataset sub;
      sub.features = ds.features.gather_rows(perm);
      for (std::size_t i : perm) sub.labels.push_back(ds.labels[i]);
      sub.class_count = ds.class_count;
      sub.name = ds.name + "_subset";
      return sub;
    }
    return ds;
  }
  if (kind == "csv") {
    return load_csv(j.at("path").get<std::string>(), j.value("label_column", -1), norm);
  }
  throw ConfigError("unknown dataset kind: " + kind);
} catch (const IoError& e) {
  // a missing input path is a config problem, not an output I/O failure
  throw ConfigError(e.what());
}

ModelConfig parse_model(const json& j, std::size_t input_dim) {
  ModelConfig cfg;
  cfg.input_dim = input_dim;
  cfg.latent_dim = j.value("latent_dim", std::size_t{8});
  cfg.num_autoencoders = j.at("num_autoencoders").get<std::size_t>();
  cfg.encoder_hidden = j.value("encoder_hidden", std::vector<std::size_t>{256, 64});
  cfg.man_hidden = j.value("man_hidden", std::vector<std::size_t>{64});
  cfg.activation = activation_from_string(j.value("activation", "relu"));
  cfg.reconstruction_loss = recon_loss_from_string(j.value("reconstruction_loss", "mse"));
  cfg.validate();
  return cfg;
}

TrainConfig parse_training(const json& j) {
  TrainConfig cfg;
  cfg.batch_size = j.value("batch_size", std::size_t{256});
  cfg.epochs = j.value("epochs", 100);
  cfg.lr_init = j.value("lr_init", 0.001);
  cfg.lr_decay_factor = j.value("lr_decay_factor", 0.9);
  cfg.lr_decay_every = j.value("lr_decay_every", 10);
  cfg.adam_beta1 = j.value("adam_beta1", 0.9);
  cfg.adam_beta2 = j.value("adam_beta2", 0.999);
  cfg.adam_eps = j.value("adam_eps", 1e-8);
  cfg.seed = j.value("seed", std::uint64_t{0});
  cfg.checkpoint_every = j.value("checkpoint_every", 0);
  cfg.dynamic_alpha = j.value("dynamic_alpha", true);
  cfg.dynamic_beta = j.value("dynamic_beta", true);
  cfg.couple_recon_to_man = j.value("couple_recon_to_man", true);
  if (j.contains("schedule")) {
    const json& s = j.at("schedule");
    cfg.schedule.warmup_epochs = s.value("warmup_epochs", 5);
    cfg.schedule.alpha0 = s.value("alpha0", 1.0);
    cfg.schedule.beta0 = s.value("beta0", 1.0);
    cfg.schedule.auto_warmup = s.value("auto_warmup", true);
    cfg.schedule.warmup_boost = s.value("warmup_boost", 10.0);
    cfg.schedule.clip_lo = s.value("clip_lo", 1e-3);
    cfg.schedule.clip_hi = s.value("clip_hi", 1e3);
  }
  cfg.validate();
  return cfg;
}

json report_to_json(const EvalReport& report) {
  json j;
  if (!std::isnan(report.acc)) j["acc"] = report.acc;
  if (!std::isnan(report.purity)) j["purity"] = report.purity;
  if (!report.matching.empty()) j["matching"] = report.matching;
  j["batch_entropy_global"] = report.batch_entropy_global;
  j["mean_sample_entropy"] = report.mean_sample_entropy;
  j["cluster_sizes"] = report.cluster_sizes;
  std::vector<std::vector<double>> cov;
  for (std::size_t r = 0; r < report.covariance.rows(); ++r) {
    std::vector<double> row;
    for (std::size_t c = 0; c < report.covariance.cols(); ++c)
      row.push_back(report.covariance(r, c));
    cov.push_back(std::move(row));
  }
  j["covariance"] = cov;
  return j;
}

void write_report_files(const EvalReport& report, const Dataset& dataset, const fs::path& dir) {
  {
    std::ofstream os(dir / "report.json");
    if (!os) throw IoError("cannot write " + (dir / "report.json").string());
    os << report_to_json(report).dump(2) << "\n";
  }
  {
    std::ofstream os(dir / "report.txt");
    os << "samples:            " << dataset.size() << "\n";
    if (!std::isnan(report.acc)) os << "acc:                " << report.acc << "\n";
    if (!std::isnan(report.purity)) os << "purity:             " << report.purity << "\n";
    os << "batch entropy:      " << report.batch_entropy_global << "\n";
    os << "mean sample entropy:" << report.mean_sample_entropy << "\n";
    os << "cluster sizes:      ";
    for (long s : report.cluster_sizes) os << s << " ";
    os << "\n";
  }
  write_matrix_csv(report.covariance, (dir / "covariance.csv").string());
  if (!report.contingency.counts.empty()) {
    Tensor confusion({report.contingency.counts.size(), report.contingency.counts[0].size()});
    for (std::size_t r = 0; r < confusion.rows(); ++r)
      for (std::size_t c = 0; c < confusion.cols(); ++c)
        confusion(r, c) = static_cast<double>(report.contingency.counts[r][c]);
    write_matrix_csv(confusion, (dir / "confusion.csv").string());
  }
}

fs::path resolve_out_dir(const std::string& out_flag, const json& config) {
  std::string dir = out_flag;
  if (dir.empty()) dir = config.value("output_dir", "");
  if (dir.empty()) {
    const char* root = std::getenv("MIXAE_OUT_ROOT");
    dir = (root ? std::string(root) : std::string("runs")) + "/run";
  }
  return fs::path(dir);
}

int cmd_train(const std::string& config_path, const std::string& out_flag,
              std::optional<std::uint64_t> seed, std::optional<int> epochs,
              std::optional<std::size_t> k) {
  json config = load_json(config_path);
  if (seed) config["training"]["seed"] = *seed;
  if (epochs) config["training"]["epochs"] = *epochs;
  if (k) config["model"]["num_autoencoders"] = *k;

  Dataset dataset = load_dataset(config.at("dataset"));
  ModelConfig model_cfg = parse_model(config.at("model"), dataset.dim());
  TrainConfig train_cfg = parse_training(config.value("training", json::object()));
  if (train_cfg.batch_size > dataset.size())
    throw ConfigError("batch_size " + std::to_string(train_cfg.batch_size) +
                      " exceeds dataset size " + std::to_string(dataset.size()));
  bool run_eval = config.value("evaluation", json::object()).value("enabled", true);
  bool latents = config.value("evaluation", json::object()).value("export_latents", false);

  fs::path out = resolve_out_dir(out_flag, config);
  fs::create_directories(out);

  // resolved-config snapshot: everything needed to reproduce the run
  config["model"]["input_dim"] = model_cfg.input_dim;
  config["model"]["latent_dim"] = model_cfg.latent_dim;
  config["training"]["seed"] = train_cfg.seed;
  config["training"]["epochs"] = train_cfg.epochs;
  config["training"]["batch_size"] = train_cfg.batch_size;
  {
    std::ofstream os(out / "config_resolved.json");
    if (!os) throw IoError("cannot write " + (out / "config_resolved.json").string());
    os << config.dump(2) << "\n";
  }

  std::ofstream log_csv(out / "epoch_log.csv");
  if (!log_csv) throw IoError("cannot write " + (out / "epoch_log.csv").string());
  write_epoch_csv_header(log_csv);

  MonitorFn monitor;
  if (dataset.has_labels() && run_eval) {
    monitor = [&](const MixaeParams& params) {
      Tensor p = all_assignments(params, model_cfg, dataset.features);
      return accuracy(hard_assign(p), dataset.labels,
                      static_cast<int>(model_cfg.num_autoencoders), dataset.class_count)
          .acc;
    };
  }

  double best_acc = -1.0;
  EpochCallback on_epoch = [&](const EpochLog& log, const MixaeParams& params) {
    write_epoch_csv_row(log_csv, log);
    log_csv.flush();
    if (train_cfg.checkpoint_every > 0 && (log.epoch + 1) % train_cfg.checkpoint_every == 0)
      save_checkpoint((out / ("checkpoint_epoch_" + std::to_string(log.epoch) + ".bin")).string(),
                      model_cfg, params);
    if (!std::isnan(log.acc) && log.acc > best_acc) {
      best_acc = log.acc;
      save_checkpoint((out / "checkpoint_best.bin").string(), model_cfg, params);
    }
    std::cerr << "epoch " << log.epoch << " total " << log.mean.total << " recon "
              << log.mean.weighted_reconstruction << " se " << log.mean.sample_entropy_mean
              << " be " << log.mean.batch_entropy;
    if (!std::isnan(log.acc)) std::cerr << " acc " << log.acc;
    std::cerr << "\n";
  };

  TrainResult result;
  try {
    result = train(model_cfg, train_cfg, dataset.features, on_epoch, monitor);
  } catch (const NumericalError& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return kExitDivergence;
  }

  save_checkpoint((out / "checkpoint_final.bin").string(), model_cfg, result.params);
  if (run_eval && dataset.has_labels()) {
    EvalReport report = evaluate(result.params, model_cfg, dataset);
    write_report_files(report, dataset, out);
  }
  if (latents) export_latents(result.params, model_cfg, dataset, (out / "latents.csv").string());
  std::cout << out.string() << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data_path,
             const std::string& out_dir) {
  auto [model_cfg, params] = load_checkpoint(checkpoint_path);
  json data_json = load_json(data_path);
  Dataset dataset =
      load_dataset(data_json.contains("dataset") ? data_json.at("dataset") : data_json);
  if (dataset.dim() != model_cfg.input_dim)
    throw ConfigError("dataset dimension " + std::to_string(dataset.dim()) +
                      " does not match checkpoint input_dim " +
                      std::to_string(model_cfg.input_dim));
  fs::path out(out_dir);
  fs::create_directories(out);
  EvalReport report = evaluate(params, model_cfg, dataset);
  write_report_files(report, dataset, out);
  export_latents(params, model_cfg, dataset, (out / "latents.csv").string());
  if (!std::isnan(report.acc)) std::cout << "acc " << report.acc << "\n";
  std::cout << "be " << report.batch_entropy_global << " se " << report.mean_sample_entropy
            << "\n";
  return 0;
}

int cmd_generate(const std::string& spec_path, const std::string& out_path) {
  json j = load_json(spec_path);
  SyntheticSpec spec = parse_synthetic(j.contains("synthetic") ? j.at("synthetic") : j);
  Dataset ds = generate_synthetic(spec);
  std::ofstream os(out_path);
  if (!os) throw IoError("cannot write " + out_path);
  for (std::size_t c = 0; c < ds.dim(); ++c) os << "x" << c << ",";
  os << "label\n";
  char buf[32];
  for (std::size_t r = 0; r < ds.size(); ++r) {
    for (std::size_t c = 0; c < ds.dim(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", ds.features(r, c));
      os << buf << ",";
    }
    os << ds.labels[r] << "\n";
  }
  if (!os) throw IoError("write failure on " + out_path);
  std::cout << out_path << " (" << ds.size() << " samples)\n";
  return 0;
}

int cmd_baseline(const std::string& data_path, std::size_t k, const std::string& out_dir,
                 std::uint64_t seed, int restarts) {
  json data_json = load_json(data_path);
  Dataset dataset =
      load_dataset(data_json.contains("dataset") ? data_json.at("dataset") : data_json);
  KmeansResult km = kmeans_baseline(dataset.features, k, seed, restarts);
  json report;
  report["k"] = k;
  report["inertia"] = km.inertia;
  if (dataset.has_labels()) {
    AccuracyResult ar =
        accuracy(km.labels, dataset.labels, static_cast<int>(k), dataset.class_count);
    report["acc"] = ar.acc;
    report["purity"] = purity(km.labels, dataset.labels);
    std::cout << "kmeans acc " << ar.acc << "\n";
  }
  fs::path out(out_dir);
  fs::create_directories(out);
  std::ofstream os(out / "baseline.json");
  if (!os) throw IoError("cannot write " + (out / "baseline.json").string());
  os << report.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mixture-of-autoencoders clustering"};
  app.require_subcommand(1);

  std::string config_path, out_dir, checkpoint_path, data_path, spec_path, out_path;
  std::optional<std::uint64_t> seed_override;
  std::optional<int> epochs_override;
  std::optional<std::size_t> k_override;
  std::size_t baseline_k = 0;
  std::uint64_t baseline_seed = 0;
  int baseline_restarts = 5;

  CLI::App* train_cmd = app.add_subcommand("train", "train a model from a config file");
  train_cmd->add_option("--config", config_path, "run config (JSON)")->required();
  train_cmd->add_option("--seed", seed_override, "override training seed");
  train_cmd->add_option("--epochs", epochs_override, "override epoch count");
  train_cmd->add_option("--k", k_override, "override number of autoencoders");
  train_cmd->add_option("--out", out_dir, "output directory");

  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  eval_cmd->add_option("--data", data_path, "dataset config (JSON)")->required();
  eval_cmd->add_option("--out", out_dir, "output directory")->required();

  CLI::App* gen_cmd = app.add_subcommand("generate", "write a synthetic dataset as CSV");
  gen_cmd->add_option("--spec", spec_path, "synthetic spec (JSON)")->required();
  gen_cmd->add_option("--out", out_path, "output CSV path")->required();

  CLI::App* base_cmd = app.add_subcommand("baseline", "k-means baseline on a dataset");
  base_cmd->add_option("--data", data_path, "dataset config (JSON)")->required();
  base_cmd->add_option("--k", baseline_k, "number of clusters")->required();
  base_cmd->add_option("--out", out_dir, "output directory")->required();
  base_cmd->add_option("--seed", baseline_seed, "seed");
  base_cmd->add_option("--restarts", baseline_restarts, "k-means restarts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitConfig;
  }

  try {
    if (train_cmd->parsed())
      return cmd_train(config_path, out_dir, seed_override, epochs_override, k_override);
    if (eval_cmd->parsed()) return cmd_eval(checkpoint_path, data_path, out_dir);
    if (gen_cmd->parsed()) return cmd_generate(spec_path, out_path);
    if (base_cmd->parsed())
      return cmd_baseline(data_path, baseline_k, out_dir, baseline_seed, baseline_restarts);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ShapeError& e) {
    std::cerr << "shape error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
