#pragma once

// Last-layer transfer learning against a single measured terminal deformation.

#include <string>
#include <vector>

#include "pidnet/deeponet.hpp"
#include "pidnet/net.hpp"
#include "pidnet/train.hpp"

namespace pidnet {

struct ExperimentRecord {
  std::vector<double> times;         // minutes, strictly increasing
  std::vector<double> temperatures;  // deg C
  double duration = 0.0;             // cycle length measured from times.front()
  double terminal_deformation = 0.0; // mm
  double doc0 = 0.3;
  std::string label;

  /// Time of the terminal observation, times.front() + duration.
  double horizon() const { return times.front() + duration; }
  /// Throws DataError when a record invariant fails.
  void validate() const;
};

/// Linear interpolation of the measured history onto k uniform samples over
/// [times.front(), horizon()]. Beyond the last measurement the final value is held.
std::vector<double> resample_experiment(const ExperimentRecord& rec, int k);

/// Synthetic record from a simulated trajectory (full history as "measurement").
ExperimentRecord record_from_trajectory(const CureTrajectory& traj, double terminal_deformation,
                                        const std::string& label);

struct TransferConfig {
  double lambda_anchor = 1e-3;
  AdamConfig adam;
  long max_iterations = 5000;
  double tolerance = 1e-4;   // stop once |u_hat - u| <= tolerance * max(|u|, 1)
  int history_points = 128;  // uniform grid for the returned deformation history
};

struct TransferResult {
  FilmDeepOnet model;
  Prediction history;
  double terminal_prediction = 0.0;
  double residual = 0.0;  // u_hat(t_final) - u_measured, mm
  long iterations = 0;
  bool converged = false;
  std::string warning;
};

/// (u_hat(t_final) - u)^2 + lambda * ||last - last_0||^2 over the last branch layer.
double transfer_loss(const FilmDeepOnet& model, const ExperimentRecord& rec, std::span<const double> anchor,
                     double lambda_anchor);

/// Adam on the final branch layer only. Every other parameter is copied bit for bit.
TransferResult fine_tune(const FilmDeepOnet& model, const ExperimentRecord& rec, const TransferConfig& config);

struct EnsembleTransfer {
  std::vector<TransferResult> members;
  EnsembleStats before;
  EnsembleStats after;
};

EnsembleTransfer fine_tune_ensemble(const std::vector<FilmDeepOnet>& models, const ExperimentRecord& rec,
                                    const TransferConfig& config, int workers = 1);

/// Uniform history grid over [times.front(), horizon()].
std::vector<double> history_times(const ExperimentRecord& rec, int points);

}  // namespace pidnet
