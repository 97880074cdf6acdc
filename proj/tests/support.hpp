#pragma once

// Shared fixtures and independent oracles for the test binaries.

#include <cmath>
#include <random>
#include <vector>

#include "pidnet/cure_sim.hpp"
#include "pidnet/deeponet.hpp"
#include "pidnet/train.hpp"

namespace pidnet::testing {

inline Dataset small_dataset(int n_t = 4, int n_T = 3) {
  return generate_dataset(design_grid({}, kDefaultMargin, n_t, n_T), {0.3, 0.001}, {}, {}, {}, 32);
}

struct GradCheck {
  double relative_error = 0.0;  // ||g - fd|| / ||fd|| over the sampled parameters
  double max_abs_error = 0.0;
  std::size_t sampled = 0;
};

/// Backprop gradient of the batched training loss against central
/// differences at `count` parameter indices drawn with the given seed.
inline GradCheck gradient_check(const FilmDeepOnet& model, const TrainingSet& set, std::size_t count,
                                std::uint64_t seed, double h = 1e-6) {
  const NormalizedSubset sub = normalized_subset(model, set, set.train_idx);
  const ChannelWeights w = {1.0, 1.0, 1.0};
  std::array<MatrixXd, kChannels> dpred;
  const BatchForward fwd = forward_batch(model, sub.batch, true);
  batch_loss(fwd.pred, sub.targets, w, &dpred);
  const VectorXd g = backward_batch(model, fwd, dpred);

  const std::vector<double> p0 = model.parameters();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, p0.size() - 1);
  FilmDeepOnet probe = model;
  auto eval = [&](std::size_t k, double delta) {
    std::vector<double> p = p0;
    p[k] += delta;
    probe.set_parameters(p);
    return batch_loss(forward_batch(probe, sub.batch, false).pred, sub.targets, w, nullptr);
  };
  double num = 0.0, den = 0.0;
  GradCheck out;
  for (std::size_t n = 0; n < count; ++n) {
    const std::size_t k = pick(rng);
    const double fd = (eval(k, h) - eval(k, -h)) / (2.0 * h);
    const double d = fd - g(static_cast<Eigen::Index>(k));
    num += d * d;
    den += fd * fd;
    out.max_abs_error = std::max(out.max_abs_error, std::abs(d));
  }
  out.relative_error = std::sqrt(num / den);
  out.sampled = count;
  return out;
}

/// Linear interpolation with constant extension past the ends.
inline double lerp_at(const std::vector<double>& x, const std::vector<double>& y, double t) {
  if (t <= x.front()) return y.front();
  if (t >= x.back()) return y.back();
  std::size_t i = 1;
  while (x[i] < t) ++i;
  const double w = (t - x[i - 1]) / (x[i] - x[i - 1]);
  return y[i - 1] + w * (y[i] - y[i - 1]);
}

}  // namespace pidnet::testing
