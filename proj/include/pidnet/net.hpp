#pragma once

// Dense tanh networks with optional feature-wise linear modulation (FiLM)
// of every hidden layer, exact reverse-mode gradients and Adam.

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <vector>

namespace pidnet {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct DenseLayer {
  MatrixXd W;  // out x in
  VectorXd b;  // out
};

/// Multi-layer perceptron: tanh on hidden layers, identity on the output layer.
struct Mlp {
  std::vector<DenseLayer> layers;

  /// Glorot-uniform weights, zero biases.
  static Mlp glorot(const std::vector<int>& widths, std::mt19937_64& rng);
  static Mlp zeros(const std::vector<int>& widths);

  std::vector<int> widths() const;
  int in_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.front().W.cols()); }
  int out_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.back().W.rows()); }
  int hidden_count() const { return static_cast<int>(layers.size()) - 1; }
  std::size_t param_count() const;
  /// Throws ShapeError naming the first non-conformable layer.
  void check_shapes() const;
};

/// gamma(c) = Wg c + bg, beta(c) = Wb c + bb.
struct FilmLayer {
  MatrixXd Wg;
  VectorXd bg;
  MatrixXd Wb;
  VectorXd bb;

  int width() const { return static_cast<int>(bg.size()); }
  int cond_dim() const { return static_cast<int>(Wg.cols()); }
};

/// One FiLM layer per hidden layer of the modulated network (or none).
struct FilmParams {
  std::vector<FilmLayer> layers;

  /// Identity modulation (gamma = 1, beta = 0) plus Glorot-uniform weights on c.
  static FilmParams for_mlp(const Mlp& net, int cond_dim, std::mt19937_64& rng);
  static FilmParams identity(const Mlp& net, int cond_dim);

  bool empty() const { return layers.empty(); }
  std::size_t param_count() const;
};

/// gamma(c) .* h + beta(c) for a single feature vector.
VectorXd film_apply(const VectorXd& h, const VectorXd& c, const FilmLayer& f);

/// Intermediate values of one forward pass (columns are samples).
struct ForwardCache {
  std::vector<MatrixXd> inputs;      // input to each layer (after modulation)
  std::vector<MatrixXd> activations; // tanh outputs of hidden layers, before modulation
  std::vector<MatrixXd> gammas;      // gamma(c) per hidden layer when modulated
  MatrixXd cond;
  bool modulated = false;
  std::uint64_t fingerprint = 0;
};

/// Batched forward pass; X is in x batch, C is cond x batch (ignored without FiLM).
MatrixXd mlp_forward(const Mlp& net, const FilmParams& film, const MatrixXd& X, const MatrixXd& C,
                     ForwardCache* cache = nullptr);
MatrixXd mlp_forward(const Mlp& net, const MatrixXd& X, ForwardCache* cache = nullptr);
VectorXd mlp_forward(const Mlp& net, const VectorXd& x, ForwardCache* cache = nullptr);

struct Gradients {
  Mlp net;          // same shapes as the parameters
  FilmParams film;  // empty when the network is not modulated
  MatrixXd dX;      // gradient w.r.t. the network input
  MatrixXd dC;      // gradient w.r.t. the conditioning input
};

/// Reverse pass for dL/dY = loss_grad. Throws if the cache was produced by
/// different parameter values.
Gradients backward(const Mlp& net, const FilmParams& film, const MatrixXd& loss_grad, const ForwardCache& cache);

/// Order-sensitive hash of all parameter values.
std::uint64_t fingerprint(const Mlp& net, const FilmParams& film);

// Flat parameter vectors. Order: MLP layers in sequence (W row-major, then b),
// then FiLM layers in sequence (Wg row-major, bg, Wb row-major, bb).
void append_params(const Mlp& net, std::vector<double>& out);
void append_params(const FilmParams& film, std::vector<double>& out);
/// Reads parameters starting at offset and returns the new offset.
std::size_t load_params(Mlp& net, const double* data, std::size_t size, std::size_t offset);
std::size_t load_params(FilmParams& film, const double* data, std::size_t size, std::size_t offset);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double decay_rate = 0.95;
  double decay_steps = 1000.0;
  bool staircase = false;
};

struct AdamState {
  AdamConfig config;
  VectorXd m;
  VectorXd v;
  long step = 0;

  AdamState() = default;
  AdamState(const AdamConfig& cfg, Eigen::Index n);
  /// Learning rate applied by the next step.
  double learning_rate() const;
};

/// Scheduled learning rate after `completed_steps` updates.
double scheduled_learning_rate(const AdamConfig& cfg, long completed_steps);

/// Bias-corrected Adam update in place. Throws NumericalError on NaN gradients.
void adam_step(AdamState& state, VectorXd& params, const VectorXd& grads);

}  // namespace pidnet
