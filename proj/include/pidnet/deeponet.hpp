#pragma once

// FiLM-conditioned DeepONet. The branch network sees the k sensor
// temperatures plus DoC0 and is modulated by DoC0 after every hidden layer;
// its 3G outputs are the DoC, log-viscosity and deformation coefficient
// blocks, in that order. The trunk maps normalized time to a shared G-dim
// basis and each channel is the inner product of its block with the basis.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pidnet/net.hpp"

namespace pidnet {

enum Channel : int { kDoc = 0, kLogViscosity = 1, kDeformation = 2 };
inline constexpr int kChannels = 3;
inline constexpr std::array<const char*, kChannels> kChannelNames = {"doc", "log_viscosity", "deformation"};

struct Architecture {
  std::vector<int> branch_hidden = {20, 20, 20};
  std::vector<int> trunk_hidden = {20, 20, 20};
  int latent = 20;
  bool film = true;

  /// Adam-trained model: 3 x 20 hidden layers, G = 20.
  static Architecture adam_default() { return {}; }
  /// EKI-trained model: 2 x 10 hidden layers, G = 30.
  static Architecture eki_default() { return {{10, 10}, {10, 10}, 30, true}; }
};

/// Affine maps between physical and network units.
struct Normalization {
  double temp_offset = 20.0;    // T_start
  double temp_scale = 159.905;  // T_peak - T_start
  double doc0_scale = 1.0;
  double horizon = 205.0;       // trunk input is t / horizon
  std::array<double, kChannels> mean = {0.0, 0.0, 0.0};
  std::array<double, kChannels> scale = {1.0, 1.0, 1.0};

  double temperature(double T) const { return (T - temp_offset) / temp_scale; }
  double doc0(double d) const { return d / doc0_scale; }
  double target(int ch, double y) const { return (y - mean[ch]) / scale[ch]; }
  double physical(int ch, double z) const { return mean[ch] + scale[ch] * z; }
};

struct FilmDeepOnet {
  Mlp branch;
  FilmParams film;
  Mlp trunk;
  int latent = 0;
  int sensors = 0;
  Normalization norm;
  double doc0_min = 0.0;  // DoC0 range seen in training
  double doc0_max = 1.0;

  static FilmDeepOnet create(const Architecture& arch, int sensors, std::uint64_t seed);

  /// Throws ShapeError unless branch output = 3G, trunk output = G and input widths match.
  void validate() const;
  std::size_t param_count() const;
  /// Flat parameters: branch, FiLM, trunk.
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> p);
  /// [begin, end) of the final branch layer inside the flat parameter vector.
  std::pair<std::size_t, std::size_t> last_branch_layer_range() const;
  std::uint64_t fingerprint() const;
};

/// Normalized branch input (k temperatures then DoC0).
VectorXd branch_vector(const FilmDeepOnet& model, std::span<const double> T_samples, double doc0);

struct BranchCoefficients {
  VectorXd doc;
  VectorXd visc;
  VectorXd deformation;

  const VectorXd& channel(int ch) const { return ch == kDoc ? doc : (ch == kLogViscosity ? visc : deformation); }
};

BranchCoefficients encode_branch(const FilmDeepOnet& model, std::span<const double> T_samples, double doc0);

/// Trunk basis at normalized time t. Sets *extrapolated when t lies outside [0,1].
VectorXd trunk_basis(const FilmDeepOnet& model, double t_normalized, bool* extrapolated = nullptr);

/// Sum_l h_l phi_l, accumulated in index order.
double contract(const VectorXd& h, const VectorXd& phi);

struct Prediction {
  std::vector<double> times;
  std::vector<double> doc_hat;
  std::vector<double> log_visc_hat;
  std::vector<double> deformation_hat;
  std::vector<std::string> warnings;

  const std::vector<double>& channel(int ch) const {
    return ch == kDoc ? doc_hat : (ch == kLogViscosity ? log_visc_hat : deformation_hat);
  }
};

/// Physical-unit histories at the given times (minutes). Times are divided by
/// `horizon` (the cycle duration) before trunk evaluation; horizon <= 0 uses
/// the model's training horizon.
Prediction predict_trajectory(const FilmDeepOnet& model, std::span<const double> T_samples, double doc0,
                              std::span<const double> times, double horizon = 0.0);

// ---------------------------------------------------------------------------
// Batched evaluation shared by training, EKI and transfer.

/// N input functions evaluated on one common set of P normalized times.
struct OperatorBatch {
  MatrixXd branch_in;  // (k+1) x N, normalized
  MatrixXd cond;       // 1 x N, normalized DoC0
  MatrixXd trunk_in;   // 1 x P, normalized time

  Eigen::Index records() const { return branch_in.cols(); }
  Eigen::Index times() const { return trunk_in.cols(); }
};

OperatorBatch make_batch(const FilmDeepOnet& model, const std::vector<std::vector<double>>& T_samples,
                         const std::vector<double>& doc0, const std::vector<double>& times_normalized);

struct BatchForward {
  MatrixXd branch_out;  // 3G x N
  MatrixXd basis;       // G x P
  std::array<MatrixXd, kChannels> pred;  // N x P per channel, normalized units
  ForwardCache branch_cache;
  ForwardCache trunk_cache;
};

BatchForward forward_batch(const FilmDeepOnet& model, const OperatorBatch& batch, bool keep_cache);

/// Gradient of a scalar loss with respect to the flat parameter vector,
/// given dL/dpred per channel (N x P each).
VectorXd backward_batch(const FilmDeepOnet& model, const BatchForward& fwd,
                        const std::array<MatrixXd, kChannels>& dpred);

}  // namespace pidnet
