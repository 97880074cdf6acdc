#include "pidnet/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <tuple>

#include "pidnet/error.hpp"
#include "pidnet/parallel.hpp"

namespace pidnet {

void ExperimentRecord::validate() const {
  const std::string who = label.empty() ? "experiment" : "experiment '" + label + "'";
  if (times.size() < 2) throw DataError(who + ": fewer than 2 measurement points");
  if (times.size() != temperatures.size()) throw DataError(who + ": time and temperature columns differ in length");
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!std::isfinite(times[i]) || !std::isfinite(temperatures[i]))
      throw DataError(who + ": non-finite value at row " + std::to_string(i));
    if (i > 0 && !(times[i] > times[i - 1]))
      throw DataError(who + ": times not strictly increasing at row " + std::to_string(i));
  }
  if (!(duration > 0.0) || !std::isfinite(duration)) throw DataError(who + ": duration must be > 0");
  if (!std::isfinite(terminal_deformation)) throw DataError(who + ": terminal deformation is not finite");
  if (!std::isfinite(doc0)) throw DataError(who + ": doc0 is not finite");
}

std::vector<double> history_times(const ExperimentRecord& rec, int points) {
  if (points < 2) throw ConfigError("history grid needs at least 2 points");
  std::vector<double> t(static_cast<std::size_t>(points));
  const double a = rec.times.front();
  const double span = rec.duration;
  for (int i = 0; i < points; ++i) t[static_cast<std::size_t>(i)] = a + span * i / (points - 1);
  t.back() = rec.horizon();
  return t;
}

std::vector<double> resample_experiment(const ExperimentRecord& rec, int k) {
  rec.validate();
  if (k < 2) throw ConfigError("resample_experiment: k must be >= 2");
  const std::vector<double> grid = history_times(rec, k);
  std::vector<double> out;
  out.reserve(grid.size());
  std::size_t seg = 0;
  const auto& t = rec.times;
  const auto& T = rec.temperatures;
  for (double g : grid) {
    if (g >= t.back()) {
      out.push_back(T.back());
      continue;
    }
    while (seg + 1 < t.size() && t[seg + 1] <= g) ++seg;
    if (g == t[seg]) {
      out.push_back(T[seg]);
      continue;
    }
    const double w = (g - t[seg]) / (t[seg + 1] - t[seg]);
    out.push_back(T[seg] + w * (T[seg + 1] - T[seg]));
  }
  return out;
}

ExperimentRecord record_from_trajectory(const CureTrajectory& traj, double terminal_deformation,
                                        const std::string& label) {
  ExperimentRecord r;
  r.times = traj.times;
  r.temperatures = traj.temperature;
  r.duration = traj.times.back() - traj.times.front();
  r.terminal_deformation = terminal_deformation;
  r.doc0 = traj.doc0;
  r.label = label;
  return r;
}

namespace {

struct TerminalProblem {
  OperatorBatch batch;
  std::size_t begin = 0;
  std::size_t end = 0;
};

TerminalProblem terminal_problem(const FilmDeepOnet& model, const ExperimentRecord& rec) {
  TerminalProblem tp;
  const std::vector<double> T = resample_experiment(rec, model.sensors);
  tp.batch = make_batch(model, {T}, {rec.doc0}, {1.0});
  std::tie(tp.begin, tp.end) = model.last_branch_layer_range();
  return tp;
}

double terminal_value(const FilmDeepOnet& model, const OperatorBatch& batch) {
  const BatchForward fwd = forward_batch(model, batch, false);
  return model.norm.physical(kDeformation, fwd.pred[kDeformation](0, 0));
}

}  // namespace

double transfer_loss(const FilmDeepOnet& model, const ExperimentRecord& rec, std::span<const double> anchor,
                     double lambda_anchor) {
  const TerminalProblem tp = terminal_problem(model, rec);
  if (anchor.size() != tp.end - tp.begin) throw ShapeError("transfer_loss: anchor length differs from last layer");
  const std::vector<double> p = model.parameters();
  double reg = 0.0;
  for (std::size_t i = tp.begin; i < tp.end; ++i) reg += (p[i] - anchor[i - tp.begin]) * (p[i] - anchor[i - tp.begin]);
  const double res = terminal_value(model, tp.batch) - rec.terminal_deformation;
  return res * res + lambda_anchor * reg;
}

TransferResult fine_tune(const FilmDeepOnet& model, const ExperimentRecord& rec, const TransferConfig& cfg) {
  model.validate();
  rec.validate();
  if (cfg.lambda_anchor < 0.0) throw ConfigError("fine_tune: lambda_anchor must be >= 0");
  if (cfg.max_iterations < 0) throw ConfigError("fine_tune: max_iterations must be >= 0");
  const TerminalProblem tp = terminal_problem(model, rec);

  TransferResult res;
  res.model = model;
  std::vector<double> params = model.parameters();
  const auto n = static_cast<Eigen::Index>(tp.end - tp.begin);
  const VectorXd anchor = Eigen::Map<const VectorXd>(params.data() + tp.begin, n);
  VectorXd last = anchor;
  AdamState adam(cfg.adam, n);
  const double target = rec.terminal_deformation;
  const double tol = cfg.tolerance * std::max(std::abs(target), 1.0);

  std::array<MatrixXd, kChannels> dpred;
  for (auto& d : dpred) d = MatrixXd::Zero(1, 1);

  auto install = [&](const VectorXd& v) {
    std::copy(v.data(), v.data() + n, params.begin() + static_cast<std::ptrdiff_t>(tp.begin));
    res.model.set_parameters(params);
  };

  for (long it = 0;; ++it) {
    const BatchForward fwd = forward_batch(res.model, tp.batch, true);
    const double u_hat = res.model.norm.physical(kDeformation, fwd.pred[kDeformation](0, 0));
    const double r = u_hat - target;
    res.terminal_prediction = u_hat;
    res.residual = r;
    res.iterations = it;
    if (!std::isfinite(r)) throw NumericalError("fine_tune: non-finite terminal prediction at iteration " + std::to_string(it));
    if (std::abs(r) <= tol) {
      res.converged = true;
      break;
    }
    if (it == cfg.max_iterations) break;
    dpred[kDeformation](0, 0) = 2.0 * r * res.model.norm.scale[kDeformation];
    const VectorXd full = backward_batch(res.model, fwd, dpred);
    VectorXd g = full.segment(static_cast<Eigen::Index>(tp.begin), n) + 2.0 * cfg.lambda_anchor * (last - anchor);
    adam_step(adam, last, g);
    install(last);
  }
  if (!res.converged) {
    std::ostringstream os;
    os << "fine_tune did not reach tolerance after " << res.iterations << " iterations; residual " << res.residual
       << " mm";
    res.warning = os.str();
  }
  const std::vector<double> T = resample_experiment(rec, model.sensors);
  const std::vector<double> ht = history_times(rec, cfg.history_points);
  res.history = predict_trajectory(res.model, T, rec.doc0, ht, rec.horizon());
  return res;
}

EnsembleTransfer fine_tune_ensemble(const std::vector<FilmDeepOnet>& models, const ExperimentRecord& rec,
                                    const TransferConfig& config, int workers) {
  if (models.empty()) throw ConfigError("fine_tune_ensemble: empty ensemble");
  rec.validate();
  EnsembleTransfer out;
  out.members.resize(models.size());
  parallel_for(models.size(), workers, [&](std::size_t i) { out.members[i] = fine_tune(models[i], rec, config); });

  const std::vector<double> T = resample_experiment(rec, models.front().sensors);
  const std::vector<double> ht = history_times(rec, config.history_points);
  std::vector<Prediction> before;
  std::vector<Prediction> after;
  for (std::size_t i = 0; i < models.size(); ++i) {
    before.push_back(predict_trajectory(models[i], T, rec.doc0, ht, rec.horizon()));
    after.push_back(out.members[i].history);
  }
  out.before = stats_from_predictions(before);
  out.after = stats_from_predictions(after);
  return out;
}

}  // namespace pidnet
