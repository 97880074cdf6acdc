#pragma once

// Ensemble Kalman inversion for DeepONet parameters: derivative-free
// training, uncertainty bands and Tikhonov-regularized last-layer transfer.

#include <cstdint>
#include <functional>
#include <vector>

#include "pidnet/deeponet.hpp"
#include "pidnet/train.hpp"
#include "pidnet/transfer.hpp"

namespace pidnet {

struct EkiConfig {
  long ensemble_size = 2000;
  long iterations = 1000;
  double q = 0.002;           // process noise Q = q I
  double r = 0.01;            // observation noise R = r I
  double lambda_tik = 0.1;
  double prior_std = 1.0;
  std::uint64_t seed = 0;
  int workers = 1;
  double input_noise = 0.01;  // relative, on normalized sensor inputs (drawn once)
  double output_noise = 0.01; // relative, on normalized targets (drawn once)
  long transfer_iterations = 100;
  double transfer_q = 0.002;  // jitter used to estimate the transfer gain

  /// Throws ConfigError unless J >= 2, q >= 0, r > 0 and lambda_tik >= 0.
  void validate() const;
};

struct EkiEnsemble {
  MatrixXd theta;    // N_theta x J
  MatrixXd forward;  // M x J, F(theta) of the current particles (empty before the first evaluation)
  long iteration = 0;

  Eigen::Index size() const { return theta.cols(); }
  Eigen::Index dim() const { return theta.rows(); }
};

struct Observation {
  VectorXd y;
  VectorXd variance;           // per-row noise variance
  Eigen::Index fixed_rows = 0; // trailing rows whose targets are not perturbed
  MatrixXd particle_offsets;   // M x J added to y per particle (empty = shared target)

  static Observation uniform(const VectorXd& y, double r);
  /// Throws DataError on non-finite entries or non-positive variances.
  void validate() const;
};

/// F_j(theta): forward map of particle j. Particles may carry frozen state of their own.
using ForwardMap = std::function<VectorXd(Eigen::Index particle, const VectorXd& theta)>;

/// J i.i.d. draws from N(0, prior_std^2 I).
EkiEnsemble init_ensemble(const EkiConfig& config, Eigen::Index param_dim);

// Flattened predictions: index ((l * P) + i) * 3 + c for record l, time i, channel c.
VectorXd flatten_predictions(const std::array<MatrixXd, kChannels>& pred);
std::array<MatrixXd, kChannels> unflatten_predictions(const VectorXd& flat, Eigen::Index records, Eigen::Index times);

/// Normalized DeepONet predictions on fixed inputs with the given flat parameters.
VectorXd forward_map(const FilmDeepOnet& model_template, std::span<const double> params, const OperatorBatch& inputs);

/// Evaluates every particle; throws NumericalError naming the first non-finite particle.
MatrixXd evaluate_ensemble(const MatrixXd& theta, const ForwardMap& F, Eigen::Index output_dim, int workers);

/// theta_hat + Theta (I + Yw^T Yw)^-1 Yw^T Dw with Yw, Dw whitened by R^-1/2
/// (the J-dimensional form of C^thy (C^yy + R)^-1 D). Theta, Y are centered and scaled by 1/sqrt(J-1).
MatrixXd kalman_increment(const MatrixXd& Theta, const MatrixXd& Y, const MatrixXd& D, const VectorXd& variance);
/// The same increment through the M x M solve (reference for small problems).
MatrixXd kalman_increment_direct(const MatrixXd& Theta, const MatrixXd& Y, const MatrixXd& D, const VectorXd& variance);

/// Centered anomalies scaled by 1/sqrt(J-1), one column per particle.
MatrixXd anomalies(const MatrixXd& X);

/// One jitter / evaluate / update iteration. On return forward = F(theta).
EkiEnsemble eki_step(const EkiEnsemble& ens, const ForwardMap& F, const Observation& obs, const EkiConfig& config);

struct MisfitRow {
  long iter;
  double mean_misfit;  // RMS of y - mean_j F(theta_j)
  double min_misfit;   // min_j RMS of y - F(theta_j)
  double ensemble_spread;  // mean coordinate std of theta
};

MisfitRow misfit_row(const EkiEnsemble& ens, const Observation& obs);

struct EkiTrainResult {
  FilmDeepOnet model_template;
  EkiEnsemble ensemble;
  Observation observation;
  OperatorBatch inputs;  // noisy normalized inputs used by the forward map
  std::vector<int> records;
  std::vector<int> time_index;
  std::vector<MisfitRow> history;
};

struct EkiData {
  std::vector<int> records;     // rows of the training set (empty = training split)
  std::vector<int> time_index;  // columns of the time grid (empty = all)
};

/// Evenly spaced subset of n out of m indices, always including both ends.
std::vector<int> even_subset(int m, int n);

EkiTrainResult eki_train(const FilmDeepOnet& model_template, const TrainingSet& set, const EkiConfig& config,
                         const EkiData& data = {});

/// Per-particle models with the template's normalization.
std::vector<FilmDeepOnet> ensemble_models(const FilmDeepOnet& model_template, const MatrixXd& theta);

struct EkiTransferResult {
  EkiEnsemble ensemble;  // full parameter vectors, only the last branch layer differs
  std::vector<MisfitRow> history;
};

/// Tikhonov-regularized EKI over the final branch layer of every particle.
/// The augmented map is [normalized terminal deformation; layer parameters];
/// the layer rows target each particle's own pretrained layer with noise
/// variance 1 / lambda_tik and are not perturbed.
EkiTransferResult eki_transfer(const FilmDeepOnet& model_template, const MatrixXd& theta, const ExperimentRecord& rec,
                               const EkiConfig& config);

struct Bands {
  EnsembleStats stats;
  std::array<MatrixXd, kChannels> particles;  // J x P physical units, empty unless requested
};

Bands predict_bands(const FilmDeepOnet& model_template, const MatrixXd& theta, std::span<const double> T_samples,
                    double doc0, std::span<const double> times, double horizon = 0.0, bool keep_particles = false,
                    int workers = 1);

/// Fraction of truth points inside mean +- k std over all channels.
double band_coverage(const EnsembleStats& stats, const std::array<std::vector<double>, kChannels>& truth, double k);

}  // namespace pidnet
