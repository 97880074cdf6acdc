#include "pidnet/cure_sim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include "pidnet/error.hpp"
#include "pidnet/parallel.hpp"

namespace pidnet {

namespace {

std::string fmt_num(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

double arrhenius(double A, double E, double T_kelvin) { return A * std::exp(-E / (kGasConstant * T_kelvin)); }

}  // namespace

void ProfileAnchors::validate() const {
  if (!(t0 < t2 && t2 < t3))
    throw ConfigError("profile anchors require t0 < t2 < t3 (got t0=" + fmt_num(t0) + ", t2=" + fmt_num(t2) +
                      ", t3=" + fmt_num(t3) + ")");
}

TemperatureProfile build_profile(double t1, double T1, const ProfileAnchors& a, double margin) {
  a.validate();
  if (!(margin > 0.0)) throw ConfigError("profile margin must be positive");
  if (!std::isfinite(t1) || !std::isfinite(T1)) throw ConstraintViolation("intermediate point must be finite");
  if (t1 < a.t0 + margin)
    throw ConstraintViolation("t1 >= t0 + margin violated: t1=" + fmt_num(t1) + " < " + fmt_num(a.t0 + margin));
  if (t1 > a.t2 - margin)
    throw ConstraintViolation("t1 <= t2 - margin violated: t1=" + fmt_num(t1) + " > " + fmt_num(a.t2 - margin));
  if (T1 < a.T_start)
    throw ConstraintViolation("T1 >= T_start violated: T1=" + fmt_num(T1) + " < " + fmt_num(a.T_start));
  if (T1 > a.T_peak)
    throw ConstraintViolation("T1 <= T_peak violated: T1=" + fmt_num(T1) + " > " + fmt_num(a.T_peak));
  return TemperatureProfile(a, t1, T1, margin);
}

double TemperatureProfile::at(double t) const {
  const auto& a = anchors_;
  if (!(t >= a.t0 && t <= a.t3))
    throw DomainError("profile evaluated at t=" + fmt_num(t) + " outside [" + fmt_num(a.t0) + ", " + fmt_num(a.t3) + "]");
  if (t == a.t0) return a.T_start;
  if (t == t1_) return T1_;
  if (t == a.t2) return a.T_peak;
  if (t == a.t3) return a.T_end;
  if (t < t1_) return a.T_start + (T1_ - a.T_start) * (t - a.t0) / (t1_ - a.t0);
  if (t < a.t2) return T1_ + (a.T_peak - T1_) * (t - t1_) / (a.t2 - t1_);
  return a.T_peak + (a.T_end - a.T_peak) * (t - a.t2) / (a.t3 - a.t2);
}

double TemperatureProfile::rate_at(double t) const {
  const auto& a = anchors_;
  if (!(t >= a.t0 && t <= a.t3)) throw DomainError("profile rate evaluated outside [t0, t3]");
  if (t < t1_) return (T1_ - a.T_start) / (t1_ - a.t0);
  if (t < a.t2) return (a.T_peak - T1_) / (a.t2 - t1_);
  return (a.T_end - a.T_peak) / (a.t3 - a.t2);
}

Slopes TemperatureProfile::slopes() const {
  const auto& a = anchors_;
  return {(T1_ - a.T_start) / (t1_ - a.t0), (a.T_peak - T1_) / (a.t2 - t1_)};
}

std::vector<double> TemperatureProfile::knots() const { return {anchors_.t0, t1_, anchors_.t2, anchors_.t3}; }

double residual_heat_ratio(double dH_residual, double dH_full) {
  if (!(dH_full > 0.0) || !(dH_residual > 0.0))
    throw DomainError("enthalpies must be strictly positive");
  if (dH_residual > dH_full) throw DomainError("residual enthalpy exceeds full-cure enthalpy");
  return 100.0 * dH_residual / dH_full;
}

double compute_initial_doc(double dH_residual, double dH_full) {
  return 100.0 - residual_heat_ratio(dH_residual, dH_full);
}

void KineticsParams::validate() const {
  for (double v : {A1, E1, A2, E2, A3, E3, mu_inf, U, mu_max})
    if (!(v > 0.0)) throw ConfigError("kinetics prefactors, activation energies and viscosity constants must be positive");
  if (!(alpha_switch > 0.0 && alpha_switch < alpha_gel && alpha_gel < 1.0))
    throw ConfigError("kinetics require 0 < alpha_switch < alpha_gel < 1");
  if (!(B > alpha_switch)) throw ConfigError("kinetics require B > alpha_switch");
}

void DeformationParams::validate() const {
  if (!(kappa_cte >= 0.0) || !(kappa_sh >= 0.0)) throw ConfigError("deformation coefficients must be non-negative");
  if (!(width > 0.0 && width < 1.0)) throw ConfigError("stiffness ramp width must lie in (0, 1)");
}

namespace {

// Regime 1 holds strictly below alpha_switch.
double rate_formula(double alpha, double T_kelvin, const KineticsParams& p, bool first_regime) {
  if (first_regime) {
    const double k1 = arrhenius(p.A1, p.E1, T_kelvin);
    const double k2 = arrhenius(p.A2, p.E2, T_kelvin);
    return (k1 + k2 * alpha) * (1.0 - alpha) * (p.B - alpha);
  }
  return arrhenius(p.A3, p.E3, T_kelvin) * (1.0 - alpha);
}

double smoothstep_poly(double x) { return x * x * (3.0 - 2.0 * x); }

}  // namespace

double cure_rate(double alpha, double T_celsius, const KineticsParams& p) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("cure_rate: alpha=" + fmt_num(alpha) + " outside [0,1]");
  const double T_kelvin = T_celsius + kCelsiusToKelvin;
  if (!(T_kelvin > 0.0)) throw DomainError("cure_rate: temperature below absolute zero");
  return rate_formula(alpha, T_kelvin, p, alpha < p.alpha_switch);
}

double viscosity(double alpha, double T_celsius, const KineticsParams& p) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("viscosity: alpha=" + fmt_num(alpha) + " outside [0,1]");
  const double T_kelvin = T_celsius + kCelsiusToKelvin;
  if (!(T_kelvin > 0.0)) throw DomainError("viscosity: temperature below absolute zero");
  if (alpha >= p.alpha_gel) return p.mu_max;
  const double mu = p.mu_inf * std::exp(p.U / (kGasConstant * T_kelvin) + p.K * alpha);
  return std::min(mu, p.mu_max);
}

double log_viscosity(double mu) { return std::log(mu + kLogViscosityEps); }

double stiffness_gate(double alpha, double alpha_gel, double width) {
  const double x = (alpha - alpha_gel) / width;
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  return smoothstep_poly(x);
}

namespace {

struct State {
  double alpha;
  double u;
};

// Right-hand side with its functional form frozen by the alpha observed at
// the start of the step. Each frozen form is a smooth function of alpha.
struct FrozenRhs {
  const KineticsParams& kp;
  const DeformationParams& dp;
  bool first_regime;
  int gate_piece;  // 0: below gel, 1: ramp, 2: fully stiff
  double seg_t;    // segment origin
  double seg_T;
  double slope;    // dT/dt on the segment

  State operator()(double t, const State& s) const {
    const double T_kelvin = seg_T + slope * (t - seg_t) + kCelsiusToKelvin;
    const double dadt = rate_formula(s.alpha, T_kelvin, kp, first_regime);
    double gate = 0.0;
    if (gate_piece == 1)
      gate = smoothstep_poly((s.alpha - kp.alpha_gel) / dp.width);
    else if (gate_piece == 2)
      gate = 1.0;
    return {dadt, gate * (dp.kappa_cte * slope - dp.kappa_sh * dadt)};
  }
};

State rk4(const FrozenRhs& f, double t, const State& y, double h) {
  const State k1 = f(t, y);
  const State k2 = f(t + 0.5 * h, {y.alpha + 0.5 * h * k1.alpha, y.u + 0.5 * h * k1.u});
  const State k3 = f(t + 0.5 * h, {y.alpha + 0.5 * h * k2.alpha, y.u + 0.5 * h * k2.u});
  const State k4 = f(t + h, {y.alpha + h * k3.alpha, y.u + h * k3.u});
  return {y.alpha + h / 6.0 * (k1.alpha + 2.0 * k2.alpha + 2.0 * k3.alpha + k4.alpha),
          y.u + h / 6.0 * (k1.u + 2.0 * k2.u + 2.0 * k3.u + k4.u)};
}

class Integrator {
 public:
  Integrator(const TemperatureProfile& p, const KineticsParams& kp, const DeformationParams& dp)
      : profile_(p), kp_(kp), dp_(dp) {
    thresholds_ = {kp.alpha_switch, kp.alpha_gel, kp.alpha_gel + dp.width};
    std::sort(thresholds_.begin(), thresholds_.end());
  }

  // Advances state across [a, b], which must lie inside one profile segment.
  void advance(double a, double b, double max_dt, State& y) const {
    const double len = b - a;
    if (len <= 0.0) return;
    const int n = std::max(1, static_cast<int>(std::ceil(len / max_dt - 1e-12)));
    const double slope = (profile_.at(b) - profile_.at(a)) / len;
    const double Ta = profile_.at(a);
    for (int i = 0; i < n; ++i) {
      const double ts = a + len * i / n;
      const double te = (i + 1 == n) ? b : a + len * (i + 1) / n;
      step(ts, te, a, Ta, slope, y);
    }
  }

 private:
  int piece(double alpha) const {
    int c = 0;
    for (double th : thresholds_)
      if (alpha >= th) ++c;
    return c;
  }

  FrozenRhs frozen(double alpha, double seg_t, double seg_T, double slope) const {
    int gate = 0;
    if (alpha >= kp_.alpha_gel + dp_.width)
      gate = 2;
    else if (alpha >= kp_.alpha_gel)
      gate = 1;
    return {kp_, dp_, alpha < kp_.alpha_switch, gate, seg_t, seg_T, slope};
  }

  // One step from ts to te, subdivided wherever alpha crosses a threshold.
  void step(double ts, double te, double seg_t, double seg_T, double slope, State& y) const {
    double t = ts;
    for (int guard = 0; guard < 8 && t < te; ++guard) {
      const int p = piece(y.alpha);
      const FrozenRhs f = frozen(y.alpha, seg_t, seg_T, slope);
      const State full = rk4(f, t, y, te - t);
      if (p >= static_cast<int>(thresholds_.size()) || full.alpha < thresholds_[p]) {
        y = full;
        return;
      }
      // Bisect for the sub-step that lands on the threshold from above.
      const double target = thresholds_[p];
      double lo = 0.0;
      double hi = te - t;
      for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (rk4(f, t, y, mid).alpha >= target)
          hi = mid;
        else
          lo = mid;
      }
      State crossed = rk4(f, t, y, hi);
      crossed.alpha = std::max(crossed.alpha, target);
      y = crossed;
      t += hi;
    }
    if (t < te) y = rk4(frozen(y.alpha, seg_t, seg_T, slope), t, y, te - t);
  }

  const TemperatureProfile& profile_;
  const KineticsParams& kp_;
  const DeformationParams& dp_;
  std::array<double, 3> thresholds_{};
};

}  // namespace

CureTrajectory simulate(const TemperatureProfile& profile, double doc0, const KineticsParams& kp,
                        const DeformationParams& dp, const SimSettings& settings) {
  kp.validate();
  dp.validate();
  const auto& a = profile.anchors();
  if (!(doc0 >= 0.0 && doc0 < 1.0)) throw DomainError("simulate: doc0 must lie in [0, 1)");
  if (!(settings.dt > 0.0)) throw ConfigError("simulate: dt must be positive");
  if (settings.dt > (a.t3 - a.t0) / 4.0) throw ConfigError("simulate: dt exceeds (t3 - t0) / 4");
  if (settings.output_points < 2) throw ConfigError("simulate: at least 2 output points required");

  const int n = settings.output_points;
  CureTrajectory traj;
  traj.doc0 = doc0;
  traj.times.resize(n);
  for (int i = 0; i < n; ++i) traj.times[i] = a.t0 + (a.t3 - a.t0) * i / (n - 1);
  traj.times.back() = a.t3;

  const Integrator integ(profile, kp, dp);
  const std::vector<double> knots = profile.knots();
  State y{doc0, 0.0};
  traj.doc.reserve(n);
  traj.deformation.reserve(n);
  traj.doc.push_back(y.alpha);
  traj.deformation.push_back(y.u);
  for (int i = 0; i + 1 < n; ++i) {
    double left = traj.times[i];
    const double right = traj.times[i + 1];
    for (double k : knots) {
      if (k > left && k < right) {
        integ.advance(left, k, settings.dt, y);
        left = k;
      }
    }
    integ.advance(left, right, settings.dt, y);
    if (!std::isfinite(y.alpha) || !std::isfinite(y.u))
      throw NumericalError("simulate: non-finite state at t=" + fmt_num(right));
    traj.doc.push_back(std::min(y.alpha, 1.0));
    traj.deformation.push_back(y.u);
  }

  traj.temperature.resize(n);
  traj.log_viscosity.resize(n);
  for (int i = 0; i < n; ++i) {
    traj.temperature[i] = profile.at(traj.times[i]);
    traj.log_viscosity[i] = log_viscosity(viscosity(traj.doc[i], traj.temperature[i], kp));
  }
  return traj;
}

std::vector<double> sensor_times(const ProfileAnchors& a, int k) {
  if (k < 2) throw ConfigError("sensor count must be at least 2");
  std::vector<double> t(k);
  for (int i = 0; i < k; ++i) t[i] = a.t0 + (a.t3 - a.t0) * i / (k - 1);
  t.back() = a.t3;
  return t;
}

std::vector<double> sample_sensors(const TemperatureProfile& p, int k) {
  std::vector<double> out;
  out.reserve(k);
  for (double t : sensor_times(p.anchors(), k)) out.push_back(p.at(t));
  return out;
}

std::vector<double> DatasetRecord::branch_input() const {
  std::vector<double> v = sensors;
  v.push_back(doc0);
  return v;
}

std::vector<DesignPoint> design_grid(const ProfileAnchors& a, double margin, int n_t, int n_T) {
  if (n_t < 2 || n_T < 2) throw ConfigError("design grid needs at least 2 points per axis");
  const double lo_t = a.t0 + margin;
  const double hi_t = a.t2 - margin;
  std::vector<DesignPoint> pts;
  pts.reserve(static_cast<std::size_t>(n_t) * n_T);
  for (int i = 0; i < n_t; ++i) {
    const double t1 = (i + 1 == n_t) ? hi_t : lo_t + (hi_t - lo_t) * i / (n_t - 1);
    for (int j = 0; j < n_T; ++j) {
      const double T1 = (j + 1 == n_T) ? a.T_peak : a.T_start + (a.T_peak - a.T_start) * j / (n_T - 1);
      pts.push_back({t1, T1});
    }
  }
  return pts;
}

Dataset generate_dataset(const std::vector<DesignPoint>& points, const std::vector<double>& doc0_set,
                         const KineticsParams& kp, const DeformationParams& dp, const SimSettings& sim,
                         int sensor_count, const ProfileAnchors& anchors, double margin, int workers) {
  if (points.empty()) throw ConfigError("generate_dataset: empty design grid");
  if (doc0_set.empty()) throw ConfigError("generate_dataset: empty doc0 set");
  if (sensor_count < 2) throw ConfigError("generate_dataset: sensor count must be at least 2");
  kp.validate();
  dp.validate();

  Dataset ds;
  ds.anchors = anchors;
  ds.kinetics = kp;
  ds.deformation = dp;
  ds.sim = sim;
  ds.margin = margin;
  ds.sensor_count = sensor_count;

  struct Job {
    DesignPoint pt;
    double doc0;
  };
  std::vector<TemperatureProfile> profiles;
  std::vector<Job> jobs;
  for (const auto& pt : points) {
    try {
      profiles.push_back(build_profile(pt.t1, pt.T1, anchors, margin));
    } catch (const ConstraintViolation& e) {
      ds.skipped.push_back({pt.t1, pt.T1, e.what()});
      continue;
    }
    for (double d : doc0_set) jobs.push_back({pt, d});
  }

  ds.records.resize(jobs.size());
  const std::size_t per_point = doc0_set.size();
  parallel_for(jobs.size(), workers, [&](std::size_t i) {
    const TemperatureProfile& prof = profiles[i / per_point];
    DatasetRecord& r = ds.records[i];
    r.id = static_cast<int>(i);
    r.t1 = jobs[i].pt.t1;
    r.T1 = jobs[i].pt.T1;
    r.doc0 = jobs[i].doc0;
    r.sensors = sample_sensors(prof, sensor_count);
    r.trajectory = simulate(prof, r.doc0, kp, dp, sim);
  });
  return ds;
}

}  // namespace pidnet
