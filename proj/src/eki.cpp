#include "pidnet/eki.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "pidnet/error.hpp"
#include "pidnet/parallel.hpp"

namespace pidnet {

namespace {

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

constexpr std::uint64_t kTagPrior = 1;
constexpr std::uint64_t kTagStep = 2;
constexpr std::uint64_t kTagData = 3;
constexpr std::uint64_t kTagTransfer = 4;

VectorXd column(const MatrixXd& m, Eigen::Index j) { return m.col(j); }

}  // namespace

void EkiConfig::validate() const {
  if (ensemble_size < 2) throw ConfigError("eki: ensemble size J must be >= 2");
  if (iterations < 0) throw ConfigError("eki: iterations must be >= 0");
  if (!(q >= 0.0)) throw ConfigError("eki: q must be >= 0");
  if (!(r > 0.0)) throw ConfigError("eki: r must be > 0");
  if (!(lambda_tik >= 0.0)) throw ConfigError("eki: lambda_tik must be >= 0");
  if (!(prior_std >= 0.0)) throw ConfigError("eki: prior_std must be >= 0");
  if (!(input_noise >= 0.0) || !(output_noise >= 0.0)) throw ConfigError("eki: noise levels must be >= 0");
  if (transfer_iterations < 0 || !(transfer_q >= 0.0)) throw ConfigError("eki: invalid transfer settings");
}

Observation Observation::uniform(const VectorXd& y, double r) {
  Observation o;
  o.y = y;
  o.variance = VectorXd::Constant(y.size(), r);
  return o;
}

void Observation::validate() const {
  if (y.size() != variance.size()) throw ShapeError("observation: target and variance lengths differ");
  if (!y.allFinite()) throw DataError("observation: non-finite target values");
  if (!(variance.array() > 0.0).all() || !variance.allFinite())
    throw DataError("observation: noise variances must be positive");
  if (fixed_rows < 0 || fixed_rows > y.size()) throw ShapeError("observation: fixed_rows out of range");
  if (particle_offsets.size() != 0 && particle_offsets.rows() != y.size())
    throw ShapeError("observation: particle offsets do not match the target length");
}

EkiEnsemble init_ensemble(const EkiConfig& config, Eigen::Index param_dim) {
  config.validate();
  if (param_dim <= 0) throw ConfigError("init_ensemble: parameter dimension must be > 0");
  EkiEnsemble e;
  e.theta = MatrixXd::Zero(param_dim, config.ensemble_size);
  if (config.prior_std > 0.0) {
    auto rng = stream(config.seed, kTagPrior, 0);
    std::normal_distribution<double> g(0.0, config.prior_std);
    for (Eigen::Index j = 0; j < e.theta.cols(); ++j)
      for (Eigen::Index i = 0; i < param_dim; ++i) e.theta(i, j) = g(rng);
  }
  return e;
}

VectorXd flatten_predictions(const std::array<MatrixXd, kChannels>& pred) {
  const Eigen::Index N = pred[0].rows();
  const Eigen::Index P = pred[0].cols();
  VectorXd out(N * P * kChannels);
  for (Eigen::Index l = 0; l < N; ++l)
    for (Eigen::Index i = 0; i < P; ++i)
      for (int c = 0; c < kChannels; ++c) out((l * P + i) * kChannels + c) = pred[c](l, i);
  return out;
}

std::array<MatrixXd, kChannels> unflatten_predictions(const VectorXd& flat, Eigen::Index records, Eigen::Index times) {
  if (flat.size() != records * times * kChannels) throw ShapeError("unflatten: length is not N * P * 3");
  std::array<MatrixXd, kChannels> out;
  for (auto& m : out) m.resize(records, times);
  for (Eigen::Index l = 0; l < records; ++l)
    for (Eigen::Index i = 0; i < times; ++i)
      for (int c = 0; c < kChannels; ++c) out[c](l, i) = flat((l * times + i) * kChannels + c);
  return out;
}

VectorXd forward_map(const FilmDeepOnet& model_template, std::span<const double> params, const OperatorBatch& inputs) {
  FilmDeepOnet m = model_template;
  m.set_parameters(params);
  return flatten_predictions(forward_batch(m, inputs, false).pred);
}

MatrixXd evaluate_ensemble(const MatrixXd& theta, const ForwardMap& F, Eigen::Index output_dim, int workers) {
  MatrixXd out(output_dim, theta.cols());
  parallel_for(static_cast<std::size_t>(theta.cols()), workers, [&](std::size_t jj) {
    const auto j = static_cast<Eigen::Index>(jj);
    const VectorXd y = F(j, column(theta, j));
    if (y.size() != output_dim)
      throw ShapeError("forward map of particle " + std::to_string(j) + " returned " + std::to_string(y.size()) +
                       " values, expected " + std::to_string(output_dim));
    if (!y.allFinite()) throw NumericalError("non-finite forward values for particle " + std::to_string(j));
    out.col(j) = y;
  });
  return out;
}

MatrixXd anomalies(const MatrixXd& X) {
  const Eigen::Index J = X.cols();
  if (J < 2) throw ConfigError("anomalies need at least 2 particles");
  const VectorXd mean = X.rowwise().mean();
  return (X.colwise() - mean) / std::sqrt(static_cast<double>(J - 1));
}

MatrixXd kalman_increment(const MatrixXd& Theta, const MatrixXd& Y, const MatrixXd& D, const VectorXd& variance) {
  const Eigen::Index J = Y.cols();
  // (R + Y Y^T)^-1 = R^-1/2 (I - Yw (I_J + Yw^T Yw)^-1 Yw^T) R^-1/2, and
  // Yw^T (I - Yw S^-1 Yw^T) = S^-1 Yw^T.
  const VectorXd w = variance.cwiseInverse().cwiseSqrt();
  const MatrixXd Yw = w.asDiagonal() * Y;
  const MatrixXd Dw = w.asDiagonal() * D;
  MatrixXd S = MatrixXd::Identity(J, J);
  S.selfadjointView<Eigen::Lower>().rankUpdate(Yw.transpose());
  const Eigen::LLT<MatrixXd> llt(S.selfadjointView<Eigen::Lower>());
  if (llt.info() != Eigen::Success) throw NumericalError("eki: ensemble-space system is not positive definite");
  const MatrixXd U = llt.solve(Yw.transpose() * Dw);
  return Theta * U;
}

MatrixXd kalman_increment_direct(const MatrixXd& Theta, const MatrixXd& Y, const MatrixXd& D,
                                 const VectorXd& variance) {
  MatrixXd C = Y * Y.transpose();
  C.diagonal() += variance;
  return (Theta * Y.transpose()) * C.ldlt().solve(D);
}

EkiEnsemble eki_step(const EkiEnsemble& ens, const ForwardMap& F, const Observation& obs, const EkiConfig& config) {
  config.validate();
  obs.validate();
  const Eigen::Index J = ens.size();
  const Eigen::Index M = obs.y.size();
  if (J < 2) throw ShapeError("eki_step: ensemble has fewer than 2 particles");
  if (ens.forward.size() != 0 && (ens.forward.cols() != J || ens.forward.rows() != M))
    throw ShapeError("eki_step: forward matrix does not match ensemble and observation");

  auto rng = stream(config.seed, kTagStep, static_cast<std::uint64_t>(ens.iteration));
  std::normal_distribution<double> g(0.0, 1.0);

  MatrixXd theta_hat = ens.theta;
  MatrixXd Y_hat;
  if (config.q > 0.0) {
    const double s = std::sqrt(config.q);
    for (Eigen::Index j = 0; j < J; ++j)
      for (Eigen::Index i = 0; i < theta_hat.rows(); ++i) theta_hat(i, j) += s * g(rng);
    Y_hat = evaluate_ensemble(theta_hat, F, M, config.workers);
  } else {
    Y_hat = ens.forward.size() != 0 ? ens.forward : evaluate_ensemble(theta_hat, F, M, config.workers);
  }

  if (obs.particle_offsets.size() != 0 && obs.particle_offsets.cols() != J)
    throw ShapeError("eki_step: particle offsets do not match the ensemble size");
  MatrixXd D = (-Y_hat).colwise() + obs.y;
  if (obs.particle_offsets.size() != 0) D += obs.particle_offsets;
  const Eigen::Index perturbed = M - obs.fixed_rows;
  const VectorXd sd = obs.variance.cwiseSqrt();
  for (Eigen::Index j = 0; j < J; ++j)
    for (Eigen::Index m = 0; m < perturbed; ++m) D(m, j) += sd(m) * g(rng);

  EkiEnsemble next;
  next.theta = theta_hat + kalman_increment(anomalies(theta_hat), anomalies(Y_hat), D, obs.variance);
  next.forward = evaluate_ensemble(next.theta, F, M, config.workers);
  next.iteration = ens.iteration + 1;
  return next;
}

MisfitRow misfit_row(const EkiEnsemble& ens, const Observation& obs) {
  const Eigen::Index M = obs.y.size() - obs.fixed_rows;
  if (ens.forward.rows() != obs.y.size() || ens.forward.cols() != ens.size())
    throw ShapeError("misfit: forward matrix does not match observation");
  MisfitRow row{ens.iteration, 0.0, std::numeric_limits<double>::infinity(), 0.0};
  const auto data = ens.forward.topRows(M);
  const VectorXd y = obs.y.head(M);
  const double m = static_cast<double>(M);
  row.mean_misfit = std::sqrt((y - data.rowwise().mean()).squaredNorm() / m);
  for (Eigen::Index j = 0; j < ens.size(); ++j)
    row.min_misfit = std::min(row.min_misfit, std::sqrt((y - data.col(j)).squaredNorm() / m));
  const VectorXd mu = ens.theta.rowwise().mean();
  const double denom = static_cast<double>(std::max<Eigen::Index>(ens.size() - 1, 1));
  const VectorXd var = (ens.theta.colwise() - mu).rowwise().squaredNorm() / denom;
  row.ensemble_spread = var.cwiseSqrt().mean();
  return row;
}

std::vector<int> even_subset(int m, int n) {
  if (m <= 0) throw ConfigError("even_subset: empty range");
  if (n <= 0 || n >= m) {
    std::vector<int> all(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) all[static_cast<std::size_t>(i)] = i;
    return all;
  }
  if (n == 1) return {m - 1};
  std::vector<int> out;
  for (int i = 0; i < n; ++i) {
    const int v = static_cast<int>(std::lround(static_cast<double>(i) * (m - 1) / (n - 1)));
    if (out.empty() || v != out.back()) out.push_back(v);
  }
  return out;
}

EkiTrainResult eki_train(const FilmDeepOnet& model_template, const TrainingSet& set, const EkiConfig& config,
                         const EkiData& data) {
  config.validate();
  model_template.validate();
  EkiTrainResult res;
  res.model_template = model_template;
  res.model_template.norm = set.norm;
  res.model_template.doc0_min = set.doc0_min;
  res.model_template.doc0_max = set.doc0_max;
  const FilmDeepOnet& tmpl = res.model_template;

  res.records = data.records.empty() ? set.train_idx : data.records;
  res.time_index = data.time_index.empty() ? even_subset(static_cast<int>(set.times.size()), 0) : data.time_index;
  for (int r : res.records)
    if (r < 0 || static_cast<std::size_t>(r) >= set.size()) throw ConfigError("eki_train: record index out of range");
  for (int i : res.time_index)
    if (i < 0 || static_cast<std::size_t>(i) >= set.times.size()) throw ConfigError("eki_train: time index out of range");

  std::vector<std::vector<double>> sensors;
  std::vector<double> doc0;
  for (int r : res.records) {
    sensors.push_back(set.sensors[static_cast<std::size_t>(r)]);
    doc0.push_back(set.doc0[static_cast<std::size_t>(r)]);
  }
  std::vector<double> tn;
  for (int i : res.time_index) tn.push_back(set.times[static_cast<std::size_t>(i)] / tmpl.norm.horizon);
  res.inputs = make_batch(tmpl, sensors, doc0, tn);

  auto rng = stream(config.seed, kTagData, 0);
  std::normal_distribution<double> g(0.0, 1.0);
  const Eigen::Index k = tmpl.sensors;
  for (Eigen::Index l = 0; l < res.inputs.branch_in.cols(); ++l)
    for (Eigen::Index s = 0; s < k; ++s) res.inputs.branch_in(s, l) *= 1.0 + config.input_noise * g(rng);

  const auto N = static_cast<Eigen::Index>(res.records.size());
  const auto P = static_cast<Eigen::Index>(res.time_index.size());
  std::array<MatrixXd, kChannels> target;
  for (int c = 0; c < kChannels; ++c) {
    target[c].resize(N, P);
    for (Eigen::Index l = 0; l < N; ++l)
      for (Eigen::Index i = 0; i < P; ++i)
        target[c](l, i) = tmpl.norm.target(c, set.targets[c](res.records[static_cast<std::size_t>(l)],
                                                              res.time_index[static_cast<std::size_t>(i)]));
  }
  VectorXd y = flatten_predictions(target);
  for (Eigen::Index m = 0; m < y.size(); ++m) y(m) *= 1.0 + config.output_noise * g(rng);
  res.observation = Observation::uniform(y, config.r);

  const OperatorBatch& inputs = res.inputs;
  const ForwardMap F = [&tmpl, &inputs](Eigen::Index, const VectorXd& th) {
    return forward_map(tmpl, std::span<const double>(th.data(), static_cast<std::size_t>(th.size())), inputs);
  };
  res.ensemble = init_ensemble(config, static_cast<Eigen::Index>(tmpl.param_count()));
  res.ensemble.forward = evaluate_ensemble(res.ensemble.theta, F, y.size(), config.workers);
  res.history.push_back(misfit_row(res.ensemble, res.observation));
  for (long it = 0; it < config.iterations; ++it) {
    res.ensemble = eki_step(res.ensemble, F, res.observation, config);
    res.history.push_back(misfit_row(res.ensemble, res.observation));
  }
  return res;
}

std::vector<FilmDeepOnet> ensemble_models(const FilmDeepOnet& model_template, const MatrixXd& theta) {
  if (static_cast<std::size_t>(theta.rows()) != model_template.param_count())
    throw ShapeError("ensemble parameter rows differ from the template parameter count");
  std::vector<FilmDeepOnet> out(static_cast<std::size_t>(theta.cols()), model_template);
  for (Eigen::Index j = 0; j < theta.cols(); ++j) {
    const VectorXd c = theta.col(j);
    out[static_cast<std::size_t>(j)].set_parameters(std::span<const double>(c.data(), static_cast<std::size_t>(c.size())));
  }
  return out;
}

EkiTransferResult eki_transfer(const FilmDeepOnet& model_template, const MatrixXd& theta, const ExperimentRecord& rec,
                               const EkiConfig& config) {
  config.validate();
  model_template.validate();
  rec.validate();
  if (static_cast<std::size_t>(theta.rows()) != model_template.param_count())
    throw ShapeError("eki_transfer: ensemble rows differ from the template parameter count");
  if (theta.cols() < 2) throw ShapeError("eki_transfer: ensemble has fewer than 2 particles");
  const auto [b, e] = model_template.last_branch_layer_range();
  const auto begin = static_cast<Eigen::Index>(b);
  const auto n = static_cast<Eigen::Index>(e - b);

  const std::vector<double> T = resample_experiment(rec, model_template.sensors);
  const OperatorBatch batch = make_batch(model_template, {T}, {rec.doc0}, {1.0});
  const bool tik = config.lambda_tik > 0.0;
  const Eigen::Index M = tik ? 1 + n : 1;

  Observation obs;
  obs.y = VectorXd::Zero(M);
  obs.y(0) = model_template.norm.target(kDeformation, rec.terminal_deformation);
  obs.variance = VectorXd::Constant(M, tik ? 1.0 / config.lambda_tik : config.r);
  obs.variance(0) = config.r;
  obs.fixed_rows = tik ? n : 0;

  const MatrixXd anchor = theta.middleRows(begin, n);
  if (tik) {
    obs.particle_offsets = MatrixXd::Zero(M, theta.cols());
    obs.particle_offsets.bottomRows(n) = anchor;
  }
  const ForwardMap F = [&](Eigen::Index j, const VectorXd& s) {
    VectorXd p = theta.col(j);
    p.segment(begin, n) = s;
    FilmDeepOnet m = model_template;
    m.set_parameters(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())));
    VectorXd out(M);
    out(0) = forward_batch(m, batch, false).pred[kDeformation](0, 0);
    if (tik) out.tail(n) = s;
    return out;
  };

  // Frozen layers differ per particle, so the spread of F across the
  // ensemble says little about its sensitivity to s. The gain is estimated
  // from jittered copies while the increment acts on the particles
  // themselves, which keeps the layer fixed under a stiff penalty.
  EkiTransferResult res;
  EkiEnsemble ens;
  ens.theta = anchor;
  ens.forward = evaluate_ensemble(ens.theta, F, M, config.workers);
  res.history.push_back(misfit_row(ens, obs));
  const Eigen::Index J = ens.size();
  const Eigen::Index perturbed = M - obs.fixed_rows;
  const VectorXd sd = obs.variance.cwiseSqrt();
  const double jitter = std::sqrt(config.transfer_q);
  for (long it = 0; it < config.transfer_iterations; ++it) {
    auto rng = stream(config.seed, kTagTransfer, static_cast<std::uint64_t>(it) + 1);
    std::normal_distribution<double> g(0.0, 1.0);
    MatrixXd probe = ens.theta;
    MatrixXd probe_out = ens.forward;
    if (jitter > 0.0) {
      for (Eigen::Index j = 0; j < J; ++j)
        for (Eigen::Index i = 0; i < n; ++i) probe(i, j) += jitter * g(rng);
      probe_out = evaluate_ensemble(probe, F, M, config.workers);
    }
    MatrixXd D = (-ens.forward).colwise() + obs.y;
    if (obs.particle_offsets.size() != 0) D += obs.particle_offsets;
    for (Eigen::Index j = 0; j < J; ++j)
      for (Eigen::Index m = 0; m < perturbed; ++m) D(m, j) += sd(m) * g(rng);
    const MatrixXd inc = kalman_increment(anomalies(probe), anomalies(probe_out), D, obs.variance);
    if (!inc.allFinite()) throw NumericalError("eki_transfer: non-finite update at iteration " + std::to_string(it));
    ens.theta += inc;
    ens.forward = evaluate_ensemble(ens.theta, F, M, config.workers);
    ens.iteration = it + 1;
    res.history.push_back(misfit_row(ens, obs));
  }
  res.ensemble.theta = theta;
  res.ensemble.theta.middleRows(begin, n) = ens.theta;
  res.ensemble.iteration = ens.iteration;
  return res;
}

Bands predict_bands(const FilmDeepOnet& model_template, const MatrixXd& theta, std::span<const double> T_samples,
                    double doc0, std::span<const double> times, double horizon, bool keep_particles, int workers) {
  if (theta.cols() < 2) throw ConfigError("predict_bands: at least 2 particles required");
  const std::vector<FilmDeepOnet> models = ensemble_models(model_template, theta);
  std::vector<Prediction> preds(models.size());
  parallel_for(models.size(), workers,
               [&](std::size_t j) { preds[j] = predict_trajectory(models[j], T_samples, doc0, times, horizon); });
  Bands b;
  b.stats = stats_from_predictions(preds);
  if (keep_particles) {
    const auto J = static_cast<Eigen::Index>(preds.size());
    const auto P = static_cast<Eigen::Index>(times.size());
    for (int c = 0; c < kChannels; ++c) {
      b.particles[c].resize(J, P);
      for (Eigen::Index j = 0; j < J; ++j)
        for (Eigen::Index i = 0; i < P; ++i)
          b.particles[c](j, i) = preds[static_cast<std::size_t>(j)].channel(c)[static_cast<std::size_t>(i)];
    }
  }
  return b;
}

double band_coverage(const EnsembleStats& stats, const std::array<std::vector<double>, kChannels>& truth, double k) {
  std::size_t inside = 0;
  std::size_t total = 0;
  for (int c = 0; c < kChannels; ++c) {
    if (truth[c].size() != stats.mean[c].size()) throw ShapeError("band_coverage: truth and band grids differ");
    for (std::size_t i = 0; i < truth[c].size(); ++i) {
      ++total;
      if (std::abs(truth[c][i] - stats.mean[c][i]) <= k * stats.std[c][i]) ++inside;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(inside) / static_cast<double>(total);
}

}  // namespace pidnet
