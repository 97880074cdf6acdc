#include "pidnet/schedule_opt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pidnet/error.hpp"
#include "pidnet/parallel.hpp"

namespace pidnet {

namespace {

constexpr double kDoc0Slack = 1e-9;

}  // namespace

void OptProblem::validate() const {
  anchors.validate();
  if (!(doc_min > 0.0 && doc_min <= 1.0)) throw ConfigError("optimization: doc_min must lie in (0, 1]");
  if (n_t < 2 || n_T < 2) throw ConfigError("optimization: grid resolution must be at least 2 x 2");
  if (refine_rounds < 0) throw ConfigError("optimization: refine_rounds must be >= 0");
  if (refine_rounds > 0 && refine_points < 2) throw ConfigError("optimization: refine_points must be >= 2");
  if (!(margin >= 0.0)) throw ConfigError("optimization: margin must be >= 0");
}

double Feasibility::objective() const { return std::abs(deformation); }

Feasibility check_constraints(double t1, double T1, double doc_final, double deformation, const OptProblem& pb) {
  const auto& a = pb.anchors;
  Feasibility f;
  f.doc_final = doc_final;
  f.deformation = deformation;
  const double t_lo = a.t0 + pb.margin;
  const double t_hi = a.t2 - pb.margin;
  const double bt = std::min(t1 - t_lo, t_hi - t1);
  const double bT = std::min(T1 - a.T_start, a.T_peak - T1);
  f.constraints.push_back({"t1_bounds", bt, bt >= 0.0});
  f.constraints.push_back({"T1_bounds", bT, bT >= 0.0});
  const double m1 = (T1 - a.T_start) / (t1 - a.t0);
  const double m2 = (a.T_peak - T1) / (a.t2 - t1);
  f.constraints.push_back({"m1_gt_m2", m1 - m2, m1 - m2 > 0.0});
  f.constraints.push_back({"m2_gt_0", m2, m2 > 0.0});
  const double dm = doc_final - pb.doc_min;
  f.constraints.push_back({"doc_final_ge_doc_min", dm, dm >= 0.0});
  f.feasible = true;
  for (const auto& c : f.constraints) f.feasible = f.feasible && c.satisfied;
  return f;
}

Feasibility feasible(double t1, double T1, const FilmDeepOnet& model, const OptProblem& pb) {
  const auto& a = pb.anchors;
  const bool inside = t1 >= a.t0 + pb.margin && t1 <= a.t2 - pb.margin && T1 >= a.T_start && T1 <= a.T_peak;
  if (!inside) return check_constraints(t1, T1, std::numeric_limits<double>::quiet_NaN(), 0.0, pb);
  const TemperatureProfile p = build_profile(t1, T1, a, pb.margin);
  const std::vector<double> T = sample_sensors(p, model.sensors);
  const std::vector<double> t_end = {a.t3};
  const Prediction pr = predict_trajectory(model, T, pb.doc0, t_end, model.norm.horizon);
  return check_constraints(t1, T1, pr.doc_hat[0], pr.deformation_hat[0], pb);
}

bool better_candidate(double a_obj, double a_t1, double a_T1, double b_obj, double b_t1, double b_T1) {
  if (a_obj != b_obj) return a_obj < b_obj;
  if (a_t1 != b_t1) return a_t1 < b_t1;
  return a_T1 < b_T1;
}

OptResult optimize(const FilmDeepOnet& model, const OptProblem& pb) {
  pb.validate();
  model.validate();
  if (pb.doc0 < model.doc0_min - kDoc0Slack || pb.doc0 > model.doc0_max + kDoc0Slack)
    throw ConfigError("optimization doc0 " + std::to_string(pb.doc0) + " lies outside the model's training range [" +
                      std::to_string(model.doc0_min) + ", " + std::to_string(model.doc0_max) + "]");
  const auto& a = pb.anchors;
  OptResult res;

  const std::vector<DesignPoint> pts = design_grid(a, pb.margin, pb.n_t, pb.n_T);
  res.map.resize(pts.size());
  parallel_for(pts.size(), pb.workers, [&](std::size_t i) {
    res.map[i] = {pts[i].t1, pts[i].T1, feasible(pts[i].t1, pts[i].T1, model, pb)};
  });

  const MapCell* best = nullptr;
  for (const auto& c : res.map) {
    if (!c.result.feasible) continue;
    if (!best || better_candidate(c.result.objective(), c.t1, c.T1, best->result.objective(), best->t1, best->T1))
      best = &c;
  }
  if (!best) {
    res.warnings.push_back("no feasible grid cell");
    return res;
  }
  res.found = true;
  res.t1 = res.grid_t1 = best->t1;
  res.T1 = res.grid_T1 = best->T1;
  res.at_optimum = best->result;
  res.objective = best->result.objective();

  double ht = (a.t2 - pb.margin - (a.t0 + pb.margin)) / (pb.n_t - 1);
  double hT = (a.T_peak - a.T_start) / (pb.n_T - 1);
  for (int round = 0; round < pb.refine_rounds; ++round) {
    ht *= 0.5;
    hT *= 0.5;
    const int n = pb.refine_points;
    const double c0 = 0.5 * (n - 1);
    std::vector<DesignPoint> local;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const double t1 = res.t1 + (i - c0) * ht;
        const double T1 = res.T1 + (j - c0) * hT;
        if (t1 < a.t0 + pb.margin || t1 > a.t2 - pb.margin || T1 < a.T_start || T1 > a.T_peak) continue;
        local.push_back({t1, T1});
      }
    std::vector<Feasibility> evals(local.size());
    parallel_for(local.size(), pb.workers,
                 [&](std::size_t i) { evals[i] = feasible(local[i].t1, local[i].T1, model, pb); });
    for (std::size_t i = 0; i < local.size(); ++i) {
      if (!evals[i].feasible) continue;
      if (better_candidate(evals[i].objective(), local[i].t1, local[i].T1, res.objective, res.t1, res.T1)) {
        res.t1 = local[i].t1;
        res.T1 = local[i].T1;
        res.at_optimum = evals[i];
        res.objective = evals[i].objective();
      }
    }
  }
  res.uncertainty_t1 = ht;
  res.uncertainty_T1 = hT;

  const TemperatureProfile p = build_profile(res.t1, res.T1, a, pb.margin);
  const CureTrajectory tr = simulate(p, pb.doc0, pb.kinetics, pb.deformation, pb.sim);
  const Feasibility sim = check_constraints(res.t1, res.T1, tr.doc.back(), tr.deformation.back(), pb);
  res.verification = Verification{tr.doc.back(), tr.deformation.back(), sim.feasible};
  if (!sim.feasible) res.warnings.push_back("optimum fails the cure-sim verification of its constraints");
  return res;
}

}  // namespace pidnet
