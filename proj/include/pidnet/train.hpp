#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pidnet/cure_sim.hpp"
#include "pidnet/deeponet.hpp"

namespace pidnet {

/// Records sharing one time grid, with a fixed train/validation split and
/// normalization statistics computed from the training split only.
struct TrainingSet {
  std::vector<int> ids;
  std::vector<std::vector<double>> sensors;  // raw deg C, k per record
  std::vector<double> doc0;
  std::vector<double> times;                 // physical minutes, shared
  std::array<MatrixXd, kChannels> targets;   // N x P physical units
  std::vector<int> train_idx;
  std::vector<int> val_idx;
  Normalization norm;
  double doc0_min = 0.0;
  double doc0_max = 0.0;
  int sensor_count = 0;

  std::size_t size() const { return ids.size(); }
};

/// Builds the set from a dataset. val_fraction of the records (rounded down)
/// go to validation via a seeded shuffle.
TrainingSet make_training_set(const Dataset& ds, double val_fraction, std::uint64_t split_seed);

/// Normalized (inputs, targets) for a subset of records.
struct NormalizedSubset {
  OperatorBatch batch;
  std::array<MatrixXd, kChannels> targets;  // N x P normalized
};
NormalizedSubset normalized_subset(const FilmDeepOnet& model, const TrainingSet& set, const std::vector<int>& idx);

using ChannelWeights = std::array<double, kChannels>;

/// Weighted MSE summed over channels in normalized units for one record.
/// Throws DataError naming record_id when the target holds NaN.
double loss(const Prediction& pred, const CureTrajectory& target, const Normalization& norm,
            const ChannelWeights& weights = {1.0, 1.0, 1.0}, int record_id = -1);

/// Batched loss; fills dpred with dL/dpred when non-null.
double batch_loss(const std::array<MatrixXd, kChannels>& pred, const std::array<MatrixXd, kChannels>& target,
                  const ChannelWeights& weights, std::array<MatrixXd, kChannels>* dpred);

struct TrainConfig {
  long iterations = 100000;
  AdamConfig adam;
  long patience = 2000;
  long eval_every = 100;
  ChannelWeights weights = {1.0, 1.0, 1.0};
};

struct HistoryRow {
  long iter;
  double train_loss;
  double val_loss;
  double lr;
};

struct FitResult {
  FilmDeepOnet model;  // best-validation parameters
  std::vector<HistoryRow> history;
  long best_iter = 0;
  double best_val_loss = 0.0;
  double best_train_loss = 0.0;
  double initial_train_loss = 0.0;
  long iterations_run = 0;
};

/// Full-batch Adam with exponential learning-rate decay and early stopping.
FitResult fit(const FilmDeepOnet& model, const TrainingSet& set, const TrainConfig& config);

struct EnsembleMember {
  std::uint64_t seed = 0;
  std::optional<FitResult> result;
  std::string error;
};

/// One training per seed on the same split. A failing member is reported in
/// its slot and does not affect the others.
std::vector<EnsembleMember> fit_ensemble(const TrainingSet& set, const Architecture& arch, const TrainConfig& config,
                                         const std::vector<std::uint64_t>& seeds, int workers = 1);

/// Fresh model with the set's normalization installed.
FilmDeepOnet initial_model(const TrainingSet& set, const Architecture& arch, std::uint64_t seed);

struct EnsembleStats {
  std::vector<double> times;
  std::array<std::vector<double>, kChannels> mean;
  std::array<std::vector<double>, kChannels> std;  // population standard deviation
  std::size_t members = 0;
};

/// Pointwise two-pass mean and population std over member predictions.
EnsembleStats stats_from_predictions(const std::vector<Prediction>& preds);

EnsembleStats ensemble_stats(const std::vector<FilmDeepOnet>& models, std::span<const double> T_samples, double doc0,
                             std::span<const double> times, double horizon = 0.0);

/// ||a - b|| / ||b|| over all entries.
double relative_l2(std::span<const double> pred, std::span<const double> truth);

}  // namespace pidnet
