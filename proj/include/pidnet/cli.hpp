#pragma once

// Command-line orchestration: one JSON config per run, resolved-config copy
// next to every output, exit codes 0 / 2 (config) / 3 (data) / 4 (numerical).

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "pidnet/cure_sim.hpp"
#include "pidnet/deeponet.hpp"
#include "pidnet/eki.hpp"
#include "pidnet/schedule_opt.hpp"
#include "pidnet/train.hpp"
#include "pidnet/transfer.hpp"

namespace pidnet {

inline constexpr const char* kSeedEnv = "PIDNET_SEED";

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitData = 3, kExitNumerical = 4 };

struct GenerateSpec {
  int n_t = 10;
  int n_T = 10;
  std::vector<double> doc0_set = {0.3, 0.001};
  int sensor_count = 32;
  double margin = kDefaultMargin;
};

struct ExperimentSpec {
  std::string csv;      // relative to the config file
  std::string sidecar;
  // synthetic record: simulated history, terminal deformation scaled by `scale`
  bool synthetic = false;
  double t1 = 40.0;
  double T1 = 120.0;
  double doc0 = 0.3;
  double scale = 1.1;
};

struct PredictSpec {
  double t1 = 40.0;
  double T1 = 120.0;
  double doc0 = 0.3;
  int points = 128;
  bool particles = false;
  std::string source = "ensemble";  // bands: "ensemble" (seed ensemble) or "eki"
};

struct PathSpec {
  // relative to the run root
  std::string dataset = "generate";
  std::string model = "train/model.json";
  std::string ensemble = "ensemble";
  std::string eki = "eki-train/ensemble";
};

struct RunConfig {
  std::uint64_t seed = 0;
  int workers = 0;  // 0 = available parallelism
  std::string root = "pidnet_out";
  std::filesystem::path config_dir;

  ProfileAnchors anchors;
  KineticsParams kinetics;
  DeformationParams deformation;
  SimSettings sim;
  GenerateSpec generate;
  double val_fraction = 0.2;
  Architecture architecture = Architecture::adam_default();
  TrainConfig training;
  int members = 5;
  Architecture eki_architecture = Architecture::eki_default();
  EkiConfig eki;
  int eki_records = 40;
  int eki_time_points = 8;
  TransferConfig transfer;
  std::string transfer_source = "model";  // "model" or "ensemble"
  ExperimentSpec experiment;
  PredictSpec predict;
  OptProblem optimize;
  PathSpec paths;
};

/// Strict parse: unknown keys anywhere raise ConfigError naming the key path.
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& config_dir = {});
/// Every setting after defaults, as one JSON document.
nlohmann::json resolved_config(const RunConfig& c);

/// Seed from the environment override when set, else fallback.
std::uint64_t default_seed(std::uint64_t fallback = 0);

// Subcommands; each writes into <root>/<name>/ and returns that directory.
std::filesystem::path cmd_generate(const RunConfig& c);
std::filesystem::path cmd_train(const RunConfig& c);
std::filesystem::path cmd_ensemble(const RunConfig& c);
std::filesystem::path cmd_eki_train(const RunConfig& c);
std::filesystem::path cmd_transfer(const RunConfig& c);
std::filesystem::path cmd_eki_transfer(const RunConfig& c);
std::filesystem::path cmd_predict(const RunConfig& c);
std::filesystem::path cmd_bands(const RunConfig& c);
std::filesystem::path cmd_optimize(const RunConfig& c);

inline const std::vector<std::string> kSubcommands = {"generate", "train", "ensemble", "eki-train", "transfer",
                                                      "eki-transfer", "predict", "bands", "optimize"};

/// Runs one subcommand by name.
std::filesystem::path run_command(const std::string& name, const RunConfig& c);

/// Maps an exception to the documented exit code.
int exit_code_for(const std::exception& e);

/// Entry point used by the executable.
int run_cli(int argc, char** argv);

}  // namespace pidnet
