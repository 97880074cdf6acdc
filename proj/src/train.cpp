#include "pidnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "pidnet/error.hpp"
#include "pidnet/parallel.hpp"

namespace pidnet {

TrainingSet make_training_set(const Dataset& ds, double val_fraction, std::uint64_t split_seed) {
  if (ds.records.empty()) throw DataError("training set: dataset has no records");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("validation fraction must lie in [0, 1)");
  TrainingSet s;
  s.sensor_count = ds.sensor_count;
  s.times = ds.records.front().trajectory.times;
  const auto N = static_cast<Eigen::Index>(ds.records.size());
  const auto P = static_cast<Eigen::Index>(s.times.size());
  for (auto& t : s.targets) t.resize(N, P);
  for (Eigen::Index r = 0; r < N; ++r) {
    const DatasetRecord& rec = ds.records[static_cast<std::size_t>(r)];
    if (rec.trajectory.times != s.times) throw DataError("record " + std::to_string(rec.id) + ": time grid differs");
    if (static_cast<int>(rec.sensors.size()) != ds.sensor_count)
      throw DataError("record " + std::to_string(rec.id) + ": sensor count differs");
    s.ids.push_back(rec.id);
    s.sensors.push_back(rec.sensors);
    s.doc0.push_back(rec.doc0);
    for (Eigen::Index i = 0; i < P; ++i) {
      const auto ii = static_cast<std::size_t>(i);
      s.targets[kDoc](r, i) = rec.trajectory.doc[ii];
      s.targets[kLogViscosity](r, i) = rec.trajectory.log_viscosity[ii];
      s.targets[kDeformation](r, i) = rec.trajectory.deformation[ii];
    }
  }
  for (int c = 0; c < kChannels; ++c)
    if (!s.targets[c].allFinite()) throw DataError(std::string("non-finite target values in channel ") + kChannelNames[c]);

  std::vector<int> order(static_cast<std::size_t>(N));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(split_seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  const auto n_val = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(N)));
  s.val_idx.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.train_idx.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(s.val_idx.begin(), s.val_idx.end());
  std::sort(s.train_idx.begin(), s.train_idx.end());
  if (s.train_idx.empty()) throw DataError("training split is empty");

  s.norm.temp_offset = ds.anchors.T_start;
  s.norm.temp_scale = ds.anchors.T_peak - ds.anchors.T_start;
  s.norm.horizon = ds.anchors.t3;
  s.doc0_min = s.doc0_max = s.doc0[static_cast<std::size_t>(s.train_idx.front())];
  for (int r : s.train_idx) {
    s.doc0_min = std::min(s.doc0_min, s.doc0[static_cast<std::size_t>(r)]);
    s.doc0_max = std::max(s.doc0_max, s.doc0[static_cast<std::size_t>(r)]);
  }
  s.norm.doc0_scale = s.doc0_max > 0.0 ? s.doc0_max : 1.0;
  for (int c = 0; c < kChannels; ++c) {
    double sum = 0.0;
    for (int r : s.train_idx) sum += s.targets[c].row(r).sum();
    const double count = static_cast<double>(s.train_idx.size() * static_cast<std::size_t>(P));
    const double mean = sum / count;
    double ss = 0.0;
    for (int r : s.train_idx) ss += (s.targets[c].row(r).array() - mean).square().sum();
    const double sd = std::sqrt(ss / count);
    s.norm.mean[c] = mean;
    s.norm.scale[c] = sd > 0.0 ? sd : 1.0;
  }
  return s;
}

NormalizedSubset normalized_subset(const FilmDeepOnet& model, const TrainingSet& set, const std::vector<int>& idx) {
  std::vector<std::vector<double>> sensors;
  std::vector<double> doc0;
  for (int r : idx) {
    sensors.push_back(set.sensors[static_cast<std::size_t>(r)]);
    doc0.push_back(set.doc0[static_cast<std::size_t>(r)]);
  }
  std::vector<double> tn;
  for (double t : set.times) tn.push_back(t / model.norm.horizon);
  NormalizedSubset ns;
  ns.batch = make_batch(model, sensors, doc0, tn);
  const auto P = static_cast<Eigen::Index>(set.times.size());
  for (int c = 0; c < kChannels; ++c) {
    ns.targets[c].resize(static_cast<Eigen::Index>(idx.size()), P);
    for (std::size_t j = 0; j < idx.size(); ++j)
      ns.targets[c].row(static_cast<Eigen::Index>(j)) =
          (set.targets[c].row(idx[j]).array() - model.norm.mean[c]) / model.norm.scale[c];
  }
  return ns;
}

double loss(const Prediction& pred, const CureTrajectory& target, const Normalization& norm,
            const ChannelWeights& weights, int record_id) {
  if (pred.times.size() != target.times.size()) throw ShapeError("loss: prediction and target grids differ");
  const std::array<const std::vector<double>*, kChannels> tgt = {&target.doc, &target.log_viscosity, &target.deformation};
  const std::size_t P = pred.times.size();
  double total = 0.0;
  for (int c = 0; c < kChannels; ++c) {
    if (tgt[c]->size() != P) throw ShapeError("loss: channel length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < P; ++i) {
      const double y = (*tgt[c])[i];
      if (std::isnan(y)) throw DataError("loss: NaN target in record " + std::to_string(record_id));
      const double e = norm.target(c, pred.channel(c)[i]) - norm.target(c, y);
      acc += e * e;
    }
    total += weights[c] * acc / static_cast<double>(P);
  }
  return total;
}

double batch_loss(const std::array<MatrixXd, kChannels>& pred, const std::array<MatrixXd, kChannels>& target,
                  const ChannelWeights& weights, std::array<MatrixXd, kChannels>* dpred) {
  double total = 0.0;
  for (int c = 0; c < kChannels; ++c) {
    const double n = static_cast<double>(pred[c].size());
    const MatrixXd diff = pred[c] - target[c];
    total += weights[c] * diff.squaredNorm() / n;
    if (dpred) (*dpred)[c] = (2.0 * weights[c] / n) * diff;
  }
  return total;
}

FilmDeepOnet initial_model(const TrainingSet& set, const Architecture& arch, std::uint64_t seed) {
  FilmDeepOnet m = FilmDeepOnet::create(arch, set.sensor_count, seed);
  m.norm = set.norm;
  m.doc0_min = set.doc0_min;
  m.doc0_max = set.doc0_max;
  return m;
}

FitResult fit(const FilmDeepOnet& start, const TrainingSet& set, const TrainConfig& cfg) {
  if (set.train_idx.empty()) throw DataError("fit: empty training split");
  if (cfg.iterations < 0 || cfg.eval_every <= 0 || cfg.patience <= 0) throw ConfigError("fit: invalid iteration settings");
  FitResult res;
  res.model = start;
  res.model.norm = set.norm;
  res.model.doc0_min = set.doc0_min;
  res.model.doc0_max = set.doc0_max;
  start.validate();

  FilmDeepOnet work = res.model;
  const NormalizedSubset train = normalized_subset(work, set, set.train_idx);
  const bool has_val = !set.val_idx.empty();
  const NormalizedSubset val = has_val ? normalized_subset(work, set, set.val_idx) : NormalizedSubset{};

  std::vector<double> pv = work.parameters();
  VectorXd params = Eigen::Map<const VectorXd>(pv.data(), static_cast<Eigen::Index>(pv.size()));
  AdamState adam(cfg.adam, params.size());

  auto evaluate = [&](const NormalizedSubset& s) {
    return batch_loss(forward_batch(work, s.batch, false).pred, s.targets, cfg.weights, nullptr);
  };

  res.initial_train_loss = evaluate(train);
  res.best_train_loss = res.initial_train_loss;
  res.best_val_loss = has_val ? evaluate(val) : res.initial_train_loss;
  res.best_iter = 0;
  res.history.push_back({0, res.initial_train_loss, res.best_val_loss, adam.learning_rate()});

  std::array<MatrixXd, kChannels> dpred;
  for (long it = 1; it <= cfg.iterations; ++it) {
    const BatchForward fwd = forward_batch(work, train.batch, true);
    const double train_loss = batch_loss(fwd.pred, train.targets, cfg.weights, &dpred);
    if (!std::isfinite(train_loss)) throw NumericalError("fit: training loss diverged at iteration " + std::to_string(it));
    const VectorXd grad = backward_batch(work, fwd, dpred);
    adam_step(adam, params, grad);
    work.set_parameters(std::span<const double>(params.data(), static_cast<std::size_t>(params.size())));
    res.iterations_run = it;

    if (it % cfg.eval_every == 0 || it == cfg.iterations) {
      const double tl = evaluate(train);
      const double vl = has_val ? evaluate(val) : tl;
      if (!std::isfinite(tl) || !std::isfinite(vl))
        throw NumericalError("fit: loss diverged at iteration " + std::to_string(it));
      res.history.push_back({it, tl, vl, adam.learning_rate()});
      if (vl < res.best_val_loss) {
        res.best_val_loss = vl;
        res.best_train_loss = tl;
        res.best_iter = it;
        res.model.set_parameters(std::span<const double>(params.data(), static_cast<std::size_t>(params.size())));
      } else if (it - res.best_iter >= cfg.patience) {
        break;
      }
    }
  }
  return res;
}

std::vector<EnsembleMember> fit_ensemble(const TrainingSet& set, const Architecture& arch, const TrainConfig& config,
                                         const std::vector<std::uint64_t>& seeds, int workers) {
  if (seeds.size() < 2) throw ConfigError("fit_ensemble: at least 2 seeds required");
  std::vector<EnsembleMember> out(seeds.size());
  parallel_for(seeds.size(), workers, [&](std::size_t i) {
    out[i].seed = seeds[i];
    try {
      out[i].result = fit(initial_model(set, arch, seeds[i]), set, config);
    } catch (const std::exception& e) {
      out[i].error = e.what();
    }
  });
  return out;
}

EnsembleStats stats_from_predictions(const std::vector<Prediction>& preds) {
  if (preds.empty()) throw ConfigError("ensemble statistics need at least one member");
  EnsembleStats s;
  s.members = preds.size();
  s.times = preds.front().times;
  const std::size_t P = s.times.size();
  const double n = static_cast<double>(preds.size());
  for (int c = 0; c < kChannels; ++c) {
    s.mean[c].assign(P, 0.0);
    s.std[c].assign(P, 0.0);
    // deviations from the first member keep identical members exact
    const std::vector<double>& ref = preds.front().channel(c);
    std::vector<double> shift(P, 0.0);
    for (const auto& p : preds) {
      if (p.times.size() != P) throw ShapeError("ensemble members predicted on different grids");
      for (std::size_t i = 0; i < P; ++i) shift[i] += p.channel(c)[i] - ref[i];
    }
    for (std::size_t i = 0; i < P; ++i) {
      shift[i] /= n;
      s.mean[c][i] = ref[i] + shift[i];
    }
    for (const auto& p : preds)
      for (std::size_t i = 0; i < P; ++i) {
        const double d = (p.channel(c)[i] - ref[i]) - shift[i];
        s.std[c][i] += d * d;
      }
    for (std::size_t i = 0; i < P; ++i) s.std[c][i] = std::sqrt(s.std[c][i] / n);
  }
  return s;
}

EnsembleStats ensemble_stats(const std::vector<FilmDeepOnet>& models, std::span<const double> T_samples, double doc0,
                             std::span<const double> times, double horizon) {
  if (models.size() < 2) throw ConfigError("ensemble_stats: at least 2 models required");
  const auto& ref = models.front();
  for (const auto& m : models)
    if (m.branch.widths() != ref.branch.widths() || m.trunk.widths() != ref.trunk.widths() || m.latent != ref.latent ||
        m.sensors != ref.sensors || m.film.layers.size() != ref.film.layers.size())
      throw ShapeError("ensemble_stats: ensemble members have different architectures");
  std::vector<Prediction> preds;
  preds.reserve(models.size());
  for (const auto& m : models) preds.push_back(predict_trajectory(m, T_samples, doc0, times, horizon));
  return stats_from_predictions(preds);
}

double relative_l2(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) throw ShapeError("relative_l2: length mismatch");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    num += (pred[i] - truth[i]) * (pred[i] - truth[i]);
    den += truth[i] * truth[i];
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

}  // namespace pidnet
