#pragma once

// Synthetic cure-process generator: parameterized cure cycles, two-regime
// autocatalytic cure kinetics, gel-clamped viscosity and an incremental
// thermal-expansion / cure-shrinkage deformation law.

#include <string>
#include <utility>
#include <vector>

namespace pidnet {

/// Fixed start, peak and end points of the cure cycle (minutes, deg C).
struct ProfileAnchors {
  double t0 = 0.333;
  double T_start = 20.000;
  double t2 = 171.658;
  double T_peak = 179.905;
  double t3 = 205.000;
  double T_end = 20.000;

  /// Throws ConfigError unless t0 < t2 < t3.
  void validate() const;
};

inline constexpr double kDefaultMargin = 1.0;  // minutes

struct Slopes {
  double m1;  // first ramp, deg C / min
  double m2;  // dwell ramp, deg C / min
};

/// Piecewise-linear cure cycle through (t0,T_start), (t1,T1), (t2,T_peak), (t3,T_end).
class TemperatureProfile {
 public:
  const ProfileAnchors& anchors() const { return anchors_; }
  double t1() const { return t1_; }
  double T1() const { return T1_; }
  double margin() const { return margin_; }

  /// Temperature at time t; throws DomainError outside [t0, t3].
  double at(double t) const;
  /// dT/dt on the segment that contains t (right-continuous at knots).
  double rate_at(double t) const;
  Slopes slopes() const;
  /// Knot times in increasing order: t0, t1, t2, t3.
  std::vector<double> knots() const;

 private:
  friend TemperatureProfile build_profile(double, double, const ProfileAnchors&, double);
  TemperatureProfile(const ProfileAnchors& a, double t1, double T1, double margin)
      : anchors_(a), t1_(t1), T1_(T1), margin_(margin) {}

  ProfileAnchors anchors_;
  double t1_;
  double T1_;
  double margin_;
};

/// Throws ConstraintViolation naming the violated bound when
/// t0+margin <= t1 <= t2-margin or T_start <= T1 <= T_peak fails.
TemperatureProfile build_profile(double t1, double T1, const ProfileAnchors& anchors = {},
                                 double margin = kDefaultMargin);

inline double sample_profile(const TemperatureProfile& p, double t) { return p.at(t); }
inline Slopes profile_slopes(const TemperatureProfile& p) { return p.slopes(); }

/// Initial degree of cure in percent, 100 * (1 - dH_residual / dH_full).
double compute_initial_doc(double dH_residual, double dH_full);
/// The raw enthalpy ratio in percent, 100 * dH_residual / dH_full.
double residual_heat_ratio(double dH_residual, double dH_full);

struct KineticsParams {
  // Arrhenius pairs k_i(T) = A_i exp(-E_i / (R T_K)); A in 1/min, E in J/mol.
  double A1 = 2.101e9;
  double E1 = 8.07e4;
  double A2 = 2.014e9;
  double E2 = 7.78e4;
  double A3 = 1.960e5;
  double E3 = 5.66e4;
  double B = 0.47;
  double alpha_switch = 0.3;
  // Viscosity mu = mu_inf exp(U/(R T_K) + K alpha), clamped at mu_max from gelation on.
  double mu_inf = 7.93e-14;  // Pa s
  double U = 9.08e4;         // J/mol
  double K = 30.0;
  double alpha_gel = 0.47;
  double mu_max = 1.0e6;  // Pa s

  void validate() const;
};

struct DeformationParams {
  double kappa_cte = 0.05;  // mm / deg C
  double kappa_sh = 8.0;    // mm per unit DoC
  double width = 0.1;       // stiffness ramp width above gelation
  double T_ref = 20.0;      // stress-free reference temperature, recorded in manifests

  void validate() const;
};

inline constexpr double kGasConstant = 8.314462618;  // J / (mol K)
inline constexpr double kCelsiusToKelvin = 273.15;
inline constexpr double kLogViscosityEps = 1e-8;

/// dalpha/dt in 1/min. Throws DomainError for alpha outside [0,1].
double cure_rate(double alpha, double T_celsius, const KineticsParams& p);

/// Viscosity in Pa s. alpha >= alpha_gel returns mu_max.
double viscosity(double alpha, double T_celsius, const KineticsParams& p);
/// ln(mu + 1e-8).
double log_viscosity(double mu);

/// Smoothstep stiffness gate S(alpha) in [0,1].
double stiffness_gate(double alpha, double alpha_gel, double width);

struct CureTrajectory {
  std::vector<double> times;
  std::vector<double> temperature;
  std::vector<double> doc;
  std::vector<double> log_viscosity;
  std::vector<double> deformation;
  double doc0 = 0.0;

  std::size_t size() const { return times.size(); }
};

struct SimSettings {
  double dt = 0.5;            // maximum integrator step, minutes
  int output_points = 128;    // uniform output grid over [t0, t3]
};

/// Fixed-step RK4 integration of cure and deformation. Steps are split at
/// profile knots and at the alpha thresholds where the right-hand side
/// changes form, so every step integrates a smooth vector field.
CureTrajectory simulate(const TemperatureProfile& profile, double doc0, const KineticsParams& kp,
                        const DeformationParams& dp, const SimSettings& settings = {});

/// k uniform sample times over [t0, t3] (inclusive).
std::vector<double> sensor_times(const ProfileAnchors& a, int k);
std::vector<double> sample_sensors(const TemperatureProfile& p, int k);

struct DatasetRecord {
  int id = 0;
  double t1 = 0.0;
  double T1 = 0.0;
  double doc0 = 0.0;
  std::vector<double> sensors;  // k raw temperatures, deg C
  CureTrajectory trajectory;

  /// k sensor temperatures followed by doc0.
  std::vector<double> branch_input() const;
};

struct SkippedPoint {
  double t1;
  double T1;
  std::string reason;
};

struct Dataset {
  ProfileAnchors anchors;
  KineticsParams kinetics;
  DeformationParams deformation;
  SimSettings sim;
  double margin = kDefaultMargin;
  int sensor_count = 32;
  std::vector<DatasetRecord> records;
  std::vector<SkippedPoint> skipped;
};

struct DesignPoint {
  double t1;
  double T1;
};

/// Uniform n_t x n_T rectangle over [t0+margin, t2-margin] x [T_start, T_peak].
std::vector<DesignPoint> design_grid(const ProfileAnchors& a, double margin, int n_t, int n_T);

/// One record per (point, doc0) with point-major ordering. Out-of-bounds
/// points are skipped and reported.
Dataset generate_dataset(const std::vector<DesignPoint>& points, const std::vector<double>& doc0_set,
                         const KineticsParams& kp, const DeformationParams& dp,
                         const SimSettings& sim, int sensor_count,
                         const ProfileAnchors& anchors = {}, double margin = kDefaultMargin,
                         int workers = 1);

}  // namespace pidnet
