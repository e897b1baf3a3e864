#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("mixae_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

int run_cli(const std::string& args) {
  std::string cmd = std::string(MIXAE_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_blob_config(const std::string& path, const std::string& out_dir, int epochs = 3) {
  std::ofstream os(path);
  os << R"({
  "dataset": {
    "kind": "synthetic",
    "normalization": "zscore",
    "synthetic": {
      "kind": "gaussian_blobs",
      "samples_per_cluster": [60, 60, 60],
      "ambient_dim": 6,
      "noise_sigma": 0.5,
      "spread": 5.0,
      "seed": 7
    }
  },
  "model": {
    "latent_dim": 2,
    "num_autoencoders": 3,
    "encoder_hidden": [16],
    "man_hidden": [8]
  },
  "training": {
    "batch_size": 60,
    "epochs": )"
     << epochs << R"(,
    "seed": 11
  },
  "output_dir": ")"
     << out_dir << R"("
})";
}

}  // namespace

TEST_CASE("train run produces all artifacts and exits 0") {
  TempDir dir;
  write_blob_config(dir.file("config.json"), dir.file("run"));
  REQUIRE(run_cli("train --config " + dir.file("config.json")) == 0);
  CHECK(fs::exists(dir.path / "run" / "epoch_log.csv"));
  CHECK(fs::exists(dir.path / "run" / "checkpoint_final.bin"));
  CHECK(fs::exists(dir.path / "run" / "config_resolved.json"));
  CHECK(fs::exists(dir.path / "run" / "report.json"));
  CHECK(fs::exists(dir.path / "run" / "covariance.csv"));
}

TEST_CASE("missing data path exits 2") {
  TempDir dir;
  std::ofstream os(dir.file("config.json"));
  os << R"({"dataset": {"kind": "csv", "path": "/nonexistent/nope.csv"},
            "model": {"latent_dim": 2, "num_autoencoders": 2}})";
  os.close();
  CHECK(run_cli("train --config " + dir.file("config.json")) == 2);
}

TEST_CASE("invalid config exits 2") {
  TempDir dir;
  std::ofstream os(dir.file("config.json"));
  os << R"({"dataset": {"kind": "starlight"}})";
  os.close();
  CHECK(run_cli("train --config " + dir.file("config.json")) == 2);
}

TEST_CASE("rerun with identical config and seed is byte-identical") {
  TempDir dir;
  write_blob_config(dir.file("config.json"), dir.file("run_a"));
  REQUIRE(run_cli("train --config " + dir.file("config.json")) == 0);
  write_blob_config(dir.file("config_b.json"), dir.file("run_b"));
  REQUIRE(run_cli("train --config " + dir.file("config_b.json")) == 0);
  std::string a = slurp(dir.file("run_a/epoch_log.csv"));
  std::string b = slurp(dir.file("run_b/epoch_log.csv"));
  REQUIRE(!a.empty());
  CHECK(a == b);
  // checkpoints bit-identical too
  CHECK(slurp(dir.file("run_a/checkpoint_final.bin")) ==
        slurp(dir.file("run_b/checkpoint_final.bin")));
}

TEST_CASE("eval on a trained checkpoint reproduces report artifacts") {
  TempDir dir;
  write_blob_config(dir.file("config.json"), dir.file("run"));
  REQUIRE(run_cli("train --config " + dir.file("config.json")) == 0);
  REQUIRE(run_cli("eval --checkpoint " + dir.file("run/checkpoint_final.bin") + " --data " +
                  dir.file("config.json") + " --out " + dir.file("eval_out")) == 0);
  CHECK(fs::exists(dir.path / "eval_out" / "report.json"));
  CHECK(fs::exists(dir.path / "eval_out" / "latents.csv"));
  // same dataset, same params: reports agree
  CHECK(slurp(dir.file("run/report.json")) == slurp(dir.file("eval_out/report.json")));
}

TEST_CASE("generate then baseline round trip") {
  TempDir dir;
  {
    std::ofstream os(dir.file("spec.json"));
    os << R"({"kind": "gaussian_blobs", "samples_per_cluster": [50, 50, 50],
              "ambient_dim": 5, "noise_sigma": 0.3, "spread": 6.0, "seed": 13})";
  }
  REQUIRE(run_cli("generate --spec " + dir.file("spec.json") + " --out " +
                  dir.file("blobs.csv")) == 0);
  REQUIRE(fs::exists(dir.path / "blobs.csv"));

  {
    std::ofstream os(dir.file("data.json"));
    os << R"({"kind": "csv", "path": ")" << dir.file("blobs.csv")
       << R"(", "label_column": 5})";
  }
  REQUIRE(run_cli("baseline --data " + dir.file("data.json") + " --k 3 --out " +
                  dir.file("base_out")) == 0);
  std::string report = slurp(dir.file("base_out/baseline.json"));
  CHECK(report.find("\"acc\"") != std::string::npos);
}
